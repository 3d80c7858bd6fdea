#pragma once

// Emitter + waveguide + two grating couplers treated as scalar ports.
//
// Sign convention, used everywhere: a sigma+ dipole sitting where the +x
// mode has S3 = +1 emits entirely toward -x, i.e. into the left coupler.

#include <memory>
#include <optional>
#include <string>

#include "chiralwg/mode_fields.hpp"

namespace chiralwg {

enum class Side { left, right };

inline Side opposite(Side s) { return s == Side::left ? Side::right : Side::left; }
std::string to_string(Side s);
Side side_from_string(const std::string& s);  // throws InvalidConfig

// +1 for sigma+, -1 for sigma-.
enum class Handedness : int { sigma_plus = 1, sigma_minus = -1 };

inline int sign(Handedness h) { return static_cast<int>(h); }
std::string to_string(Handedness h);

struct EmitterSpec {
  double y_nm = 0.0;
  double z_nm = 0.0;
  Handedness dipole = Handedness::sigma_plus;
  double s_shell_energy_eV = 1.3190;
  double g_factor = 2.5396;
  double beta = 0.9;
  double gamma_rad = 1.0;  // ns^-1

  void validate() const;
};

struct GratingCoupler {
  Side side = Side::left;
  double x_um = 0.0;
  double y_um = 0.0;
  double in_efficiency = 0.5;
  double out_efficiency = 0.5;
  double reflectivity = 0.0;

  void validate() const;
};

struct CouplerPair {
  GratingCoupler left;
  GratingCoupler right;

  const GratingCoupler& at(Side s) const { return s == Side::left ? left : right; }
  void validate() const;

  // Identical ports at x = -half_separation / +half_separation.
  static CouplerPair symmetric(double separation_um = 10.0);
  // Same ports with reflectivity 0.0 on the left and 0.07 on the right.
  static CouplerPair asymmetric_reflectivity(double separation_um = 10.0);
};

struct DeviceModel {
  std::shared_ptr<const GuidedMode> forward;   // may be null for abstract devices
  std::shared_ptr<const GuidedMode> backward;
  EmitterSpec emitter;
  CouplerPair couplers;
  double s3_at_emitter = 0.0;  // helicity of the +x mode at the emitter

  void validate() const;
};

// S3 of the +x mode at the emitter via mode_at. The mode must carry E_x.
DeviceModel make_device(const GuidedMode& forward, const EmitterSpec& emitter, const CouplerPair& couplers);

// Device with a prescribed helicity, no field data attached.
DeviceModel make_device(double s3, const EmitterSpec& emitter, const CouplerPair& couplers);

// D = s * S3; +1 means all guided emission goes left.
double directionality(const DeviceModel& device, int handedness);

struct SplitRates {
  double left = 0.0;
  double right = 0.0;
  double loss = 0.0;
};

SplitRates split_rates(const DeviceModel& device, int handedness);

// Photon flux at the emitter, per propagation direction.
struct DirectionalFlux {
  double minus_x = 0.0;  // right-to-left
  double plus_x = 0.0;

  DirectionalFlux& operator+=(const DirectionalFlux& o) {
    minus_x += o.minus_x;
    plus_x += o.plus_x;
    return *this;
  }
};

// Flux from light already coupled into the guide at one port, including one
// reflection off the opposite port.
DirectionalFlux launched_flux(const DeviceModel& device, Side port, double coupled_power);

// launched_flux with coupled power = power * in_efficiency.
DirectionalFlux pump_reach(const DeviceModel& device, Side excitation, double power);

// Left/right exchange: couplers swapped and mirrored in x, S3 negated.
DeviceModel mirrored(const DeviceModel& device);

}  // namespace chiralwg
