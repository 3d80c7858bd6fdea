#pragma once

// Zeeman-doublet PL spectra, Gaussian peak fits and the two contrasts.
//
// Energy axis is in ueV relative to the s-shell line. The sigma- branch sits
// at +dE/2 and the sigma+ branch at -dE/2.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chiralwg/spin_dynamics.hpp"

namespace chiralwg {

struct SpectrumMeta {
  std::string excitation_side = "none";  // left, right, nr, none
  std::string detection_side = "left";
  double B_T = 0.0;
  std::string polarization = "none";
  double g_factor = 2.5396;
};

struct Spectrum {
  std::vector<double> energy_ueV;
  std::vector<double> intensity;
  double background = 0.0;  // offset removed so far
  SpectrumMeta meta;

  std::size_t size() const { return energy_ueV.size(); }
  void validate() const;  // strictly increasing axis, finite values; throws InvalidConfig
};

struct SynthOptions {
  double fwhm_ueV = 40.0;
  double background = 0.0;
  double exposure_ns = 1.0e5;  // counts per unit detected flux
  double span_ueV = 400.0;     // axis covers [-span, +span]
  int n_samples = 401;
  std::optional<std::uint64_t> noise_seed;  // Poisson noise when set
};

inline double fwhm_to_sigma(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

Spectrum synth_spectrum(const FluxReport& flux, Side detection, const ZeemanParams& zeeman,
                        const SynthOptions& options = {});

// Median of the lowest quartile of intensities.
double estimate_background(const Spectrum& spec);
Spectrum subtract_background(const Spectrum& spec);

struct Peak {
  double center = 0.0;  // ueV
  double sigma = 0.0;   // ueV
  double amplitude = 0.0;
  double intensity = 0.0;  // amplitude * sigma * sqrt(2 pi)
  double intensity_sigma = 0.0;
  std::string label;  // sigma_plus or sigma_minus; "merged" for a single fitted line
};

struct PeakSet {
  std::vector<Peak> peaks;  // ascending center
  bool collapsed = false;   // two-peak fit fell back to one
  double reduced_chi2 = 0.0;
  int iterations = 0;

  const Peak* find(const std::string& label) const;
  double total_intensity() const;
  double total_intensity_sigma() const;
};

struct PeakGuess {
  double center;
  double sigma;
  double amplitude;
};

struct FitOptions {
  int max_iter = 200;
  double tolerance = 1e-12;
};

// Sum of n Gaussians. Parameter layout: (A_k, mu_k, s_k) for each peak.
double gaussian_sum(const Eigen::VectorXd& params, double x);
Eigen::MatrixXd gaussian_jacobian(const Eigen::VectorXd& params, const std::vector<double>& x);

// Levenberg-Marquardt. Throws FitDiverged; a collapsed doublet is refitted as
// one peak and flagged instead of thrown.
PeakSet fit_peaks(const Spectrum& spec, int n_peaks, const std::optional<std::vector<PeakGuess>>& init = std::nullopt,
                  const FitOptions& options = {});

enum class ContrastKind { readout, initialization };

struct ContrastResult {
  double value = 0.0;
  double uncertainty = 0.0;
  ContrastKind kind = ContrastKind::readout;
  Side detection = Side::left;
};

std::string to_string(ContrastKind k);

struct Intensity {
  double value = 0.0;
  double sigma = 0.0;
};

// (I+ - I-) / (I+ + I-).
ContrastResult readout_contrast(const Intensity& sigma_plus, const Intensity& sigma_minus, Side detection);
ContrastResult readout_contrast(const PeakSet& peaks, Side detection);

// Intensities of each excitation side's spectrum seen on one detector, as
// (sigma+, sigma-) pairs. Result is (I_R - I_L) / (I_R + I_L) with
// I_X the summed intensity for excitation on X.
ContrastResult init_contrast(const std::array<Intensity, 2>& from_left_exc,
                             const std::array<Intensity, 2>& from_right_exc, Side detection);

// Spectrum CSV with #key=value header lines.
void write_spectrum_csv(const Spectrum& spec, const std::string& path);
Spectrum read_spectrum_csv(const std::string& path);  // throws ParseError / SchemaError / IoError

}  // namespace chiralwg
