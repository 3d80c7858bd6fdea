#pragma once

// Classical rate equations for the positively charged trion: two resident
// hole states and two trion states. dp/dt = G p, columns of G sum to zero.

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chiralwg/chiral_device.hpp"

namespace chiralwg {

// State order is fixed; all vectors and matrices use it.
enum State : int { h_up = 0, h_down = 1, T_down = 2, T_up = 3 };
constexpr int kNumStates = 4;

using Populations = Eigen::Vector4d;
using Generator = Eigen::Matrix4d;

// Selection rules: T_down -sigma+-> h_down, T_up -sigma- -> h_up.
struct TrionSystem {
  static const char* name(State s);
  static State hole_after_emission(State trion);  // h_down for T_down, h_up for T_up
  static State trion_for(Handedness h);
  static Handedness handedness_of(State trion);
};

constexpr double kBohrMagneton_ueV_per_T = 57.8838;

struct ZeemanParams {
  double B_T = 0.0;
  double g_factor = 2.5396;

  double splitting_ueV() const { return g_factor * kBohrMagneton_ueV_per_T * B_T; }
};

double zeeman_splitting(const ZeemanParams& z);  // throws InvalidConfig for B < 0

// Lorentzian suppression of nuclear-field spin mixing of the trion.
struct HyperfineModel {
  double kappa0 = 0.0;  // ns^-1 at B = 0
  double B_c = 0.3;     // T

  double kappa_T(double B_T) const;
};

struct SpinNoise {
  double kappa_h = 0.0;  // hole spin flip, each way
  double kappa_T = 0.0;  // trion spin flip, each way
};

enum class PolarizationKind { sigma_plus, sigma_minus, linear };

struct LaserPolarization {
  PolarizationKind kind = PolarizationKind::sigma_minus;
  double theta_deg = 0.0;  // linear only

  std::string label() const;
};

LaserPolarization polarization_from_string(const std::string& s);  // "sigma_plus", "linear:30", ...

struct Excitation {
  Side side = Side::right;
  double power = 1.0;
  LaserPolarization polarization;
};

// Knobs that are not part of the spin physics proper.
struct PumpSettings {
  double absorption_per_flux = 0.1;  // ns^-1 per unit guided flux at |weight| = 1
  double charging = 0.01;            // ns^-1, unpolarised hole randomisation
  double nr_pump = 0.0;              // ns^-1, unpolarised trion creation from either hole
};

struct RateModel {
  double pump_sigma_plus = 0.0;   // absorption rate out of h_down
  double pump_sigma_minus = 0.0;  // absorption rate out of h_up
  double eta_p = 1.0;
  SplitRates rates_sigma_plus;   // emission split of T_down
  SplitRates rates_sigma_minus;  // emission split of T_up
  double gamma_rad = 1.0;
  double kappa_h = 0.0;
  double kappa_T = 0.0;
  double charging = 0.0;
  double nr_pump = 0.0;
  double out_eff_left = 1.0;
  double out_eff_right = 1.0;
  double B_T = 0.0;

  Generator generator() const;
  void validate() const;  // throws InvalidConfig for negative rates
};

RateModel build_rate_model(const DeviceModel& device, const Excitation& excitation, const ZeemanParams& zeeman,
                           const SpinNoise& noise, double eta_p, const PumpSettings& pump = {});

// Same, for an arbitrary directional flux at the emitter.
RateModel build_rate_model(const DeviceModel& device, const DirectionalFlux& flux, const ZeemanParams& zeeman,
                           const SpinNoise& noise, double eta_p, const PumpSettings& pump = {});

struct FluxReport {
  // [side][pol]: side 0 = left, 1 = right; pol 0 = sigma+, 1 = sigma-.
  // Detected flux after the coupler's out-efficiency.
  std::array<std::array<double, 2>, 2> detected{};
  // Guided flux arriving at each port before out-coupling.
  std::array<std::array<double, 2>, 2> guided{};
  double loss = 0.0;

  double at(Side s, Handedness h) const {
    return detected[s == Side::left ? 0 : 1][h == Handedness::sigma_plus ? 0 : 1];
  }
  double side_total(Side s) const;
  double total_emission() const;  // guided + loss; equals gamma_rad * trion population
};

struct SteadyState {
  Populations populations;
  FluxReport flux;
  double residual = 0.0;  // ||G p||_inf
};

SteadyState steady_state(const RateModel& model);
Populations steady_state(const Generator& g);  // throws SingularGenerator
FluxReport flux_report(const RateModel& model, const Populations& p);

struct Trace {
  std::vector<double> t_ns;
  std::vector<Populations> p;
};

Trace evolve(const RateModel& model, const Populations& p0, const std::vector<double>& t_ns);
Trace evolve(const Generator& g, const Populations& p0, const std::vector<double>& t_ns);

// g2 of photons leaving from `emitting` when each detection leaves the
// system in `collapse_to`. Works for any generator size.
std::vector<double> g2_generic(const Eigen::MatrixXd& g, int emitting, int collapse_to,
                               const std::vector<double>& tau_ns);

struct Channel {
  Side side = Side::left;
  Handedness polarization = Handedness::sigma_plus;
};

std::vector<double> g2(const RateModel& model, const Channel& channel, const std::vector<double>& tau_ns);

}  // namespace chiralwg
