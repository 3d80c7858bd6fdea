#pragma once

// One JSON file drives every command. Blocks are optional in the file and
// fall back to the defaults below; unknown keys are always rejected.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chiralwg/chiral_device.hpp"
#include "chiralwg/mode_fields.hpp"
#include "chiralwg/raster_sim.hpp"
#include "chiralwg/spectra_metrics.hpp"
#include "chiralwg/spin_dynamics.hpp"
#include "json.hpp"

namespace chiralwg {

struct SolverConfig {
  double wavelength_nm = 940.0;
  int n_modes = 1;
  SolverOptions options;
  HelicityOptions helicity;
};

enum class Placement { at_cpoint, at_lpoint, explicit_position };

struct DeviceConfig {
  Placement placement = Placement::at_cpoint;
  int cpoint_sign = +1;  // pick the in-core C-point with this S3 sign
  std::optional<double> s3_override;  // skips the mode solve entirely
  EmitterSpec emitter;
  std::string coupler_preset = "asymmetric_reflectivity";  // or "symmetric"
  double coupler_separation_um = 10.0;
  CouplerPair couplers;  // preset with any per-coupler overrides applied
};

struct DynamicsConfig {
  double eta_p = 0.95;
  double kappa_h = 0.0;
  double kappa_T = 0.0;  // field-independent part
  HyperfineModel hyperfine;
  PumpSettings pump;
  double power = 1.0;
  double readout_nr_pump = 0.05;  // ns^-1, used by the readout scenario
  double B_on_T = 1.0;            // field for the "1 T" scenarios
};

struct SpectraConfig {
  SynthOptions synth;
  bool noise = false;
};

struct RasterConfig {
  ScanGrid grid;
  GratingPolarizationModel grating;
  double disk_radius_um = 1.5;
  std::vector<std::string> polarizations{"sigma_minus", "sigma_plus"};
};

struct G2Config {
  double tau_min_ns = 1e-3;
  double tau_max_ns = 5000.0;
  int n_tau = 241;  // tau = 0 plus log-spaced points
  std::vector<double> grid() const;
};

struct ExperimentConfig {
  CrossSection cross_section;
  SolverConfig solver;
  DeviceConfig device;
  DynamicsConfig dynamics;
  SpectraConfig spectra;
  RasterConfig raster;
  G2Config g2;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::set<std::string> blocks_present;

  // Throws InvalidConfig listing blocks a command needs but the file lacks.
  void require_blocks(const std::vector<std::string>& names) const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_text(const std::string& text);  // InvalidConfig on bad JSON
ExperimentConfig load_config(const std::string& path);         // IoError if unreadable

// Canonical form: every field written, fixed key order.
nlohmann::json to_json(const ExperimentConfig& cfg);
std::string canonical_text(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(const std::string& s);
std::string config_hash(const ExperimentConfig& cfg);  // 16 hex digits

}  // namespace chiralwg
