#pragma once

// End-to-end pipelines behind the CLI commands.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "chiralwg/config.hpp"
#include "json.hpp"

namespace chiralwg {

struct SolvedWaveguide {
  std::vector<GuidedMode> modes;  // transverse only
  GuidedMode fundamental;         // with E_x
  HelicityMap helicity;
};

// Memoised per cross-section and solver settings within the process.
const SolvedWaveguide& solve_waveguide(const ExperimentConfig& cfg);

// In-core C-point with the requested S3 sign and the largest |S3|.
CPoint emitter_cpoint(const SolvedWaveguide& wg, const CrossSection& cs, int sign);

enum class DeviceVariant { as_configured, nonchiral };

// nonchiral: emitter on the symmetry axis, symmetric couplers.
DeviceModel build_device(const ExperimentConfig& cfg, DeviceVariant variant = DeviceVariant::as_configured);

SpinNoise noise_at(const DynamicsConfig& dyn, double B_T);
ZeemanParams zeeman_at(const ExperimentConfig& cfg, double B_T);

// Steady-state detected flux for QR excitation from one coupler.
FluxReport qr_flux(const ExperimentConfig& cfg, const DeviceModel& device, Side excitation, double B_T);
FluxReport nr_flux(const ExperimentConfig& cfg, const DeviceModel& device, double B_T);

// Model-level contrasts, indexed by detection side (0 = left).
std::array<double, 2> model_init_contrast(const ExperimentConfig& cfg, const DeviceModel& device, double B_T);
std::array<double, 2> model_readout_contrast(const ExperimentConfig& cfg, const DeviceModel& device, double B_T);

// Background subtraction plus a one- or two-line fit chosen from the
// spectrum's own field value.
PeakSet analyse_spectrum(const Spectrum& raw, double fwhm_guess_ueV);

struct Panel {
  std::string excitation;  // left, right or nr
  Side detection = Side::left;
  FluxReport flux;
  Spectrum spectrum;
  PeakSet peaks;
};

struct InitResult {
  double B_T = 0.0;
  std::vector<Panel> panels;  // (exc L, det l), (exc R, det l), (exc L, det r), (exc R, det r)
  std::array<ContrastResult, 2> pipeline;
  std::array<double, 2> model{};
};

struct ReadoutResult {
  double B_T = 0.0;
  std::vector<Panel> panels;  // det l, det r
  std::array<ContrastResult, 2> pipeline;
  std::array<double, 2> model{};
};

InitResult run_init(const ExperimentConfig& cfg, const DeviceModel& device, double B_T);
ReadoutResult run_readout(const ExperimentConfig& cfg, const DeviceModel& device, double B_T);

// Contrasts from four (excitation, detection) spectra, grouped by metadata.
std::array<ContrastResult, 2> init_contrast_from_panels(const std::vector<Panel>& panels);

DynamicsSetup raster_dynamics(const ExperimentConfig& cfg, double B_T);

struct G2Curve {
  Channel channel;
  double flux = 0.0;
  std::vector<double> tau_ns;
  std::vector<double> g2;
};

std::vector<G2Curve> run_g2(const ExperimentConfig& cfg, const DeviceModel& device, double B_T);

// kappa0 for which the mean |C_init| at B = 0 is (1 - drop) times the value at
// B_on, by bisection on the model-level contrasts.
double calibrate_kappa0(const ExperimentConfig& cfg, const DeviceModel& device, double drop = 0.08);

// Commands. Each writes its artifacts plus manifest.json into out_dir and
// returns the summary it also writes to disk.
nlohmann::json cmd_solve(const ExperimentConfig& cfg, const std::string& out_dir);
nlohmann::json cmd_experiment(const ExperimentConfig& cfg, const std::string& scenario, const std::string& out_dir);
nlohmann::json cmd_ingest(const std::vector<std::string>& files, const ExperimentConfig& cfg,
                          const std::string& out_dir);
nlohmann::json cmd_g2(const ExperimentConfig& cfg, const std::string& out_dir);

const std::vector<std::string>& scenario_names();

}  // namespace chiralwg
