#pragma once

#include <stdexcept>
#include <string>

namespace chiralwg {

// Broad failure classes; the CLI maps each onto its own exit code.
enum class ErrorKind { config, numerical, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define CHIRALWG_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

// Input validation
CHIRALWG_DEFINE_ERROR(InvalidConfig, config)
CHIRALWG_DEFINE_ERROR(GridTooCoarse, config)
CHIRALWG_DEFINE_ERROR(OutOfBounds, config)

// Numerical failures
CHIRALWG_DEFINE_ERROR(NoGuidedMode, numerical)
CHIRALWG_DEFINE_ERROR(EigenSolverFailure, numerical)
CHIRALWG_DEFINE_ERROR(GaugeError, numerical)
CHIRALWG_DEFINE_ERROR(DegenerateField, numerical)
CHIRALWG_DEFINE_ERROR(SingularGenerator, numerical)
CHIRALWG_DEFINE_ERROR(ZeroFluxChannel, numerical)
CHIRALWG_DEFINE_ERROR(FitDiverged, numerical)
CHIRALWG_DEFINE_ERROR(ZeroDenominator, numerical)
CHIRALWG_DEFINE_ERROR(GridMismatch, numerical)

// Files
CHIRALWG_DEFINE_ERROR(ParseError, io)
CHIRALWG_DEFINE_ERROR(SchemaError, io)
CHIRALWG_DEFINE_ERROR(IoError, io)

#undef CHIRALWG_DEFINE_ERROR

}  // namespace chiralwg
