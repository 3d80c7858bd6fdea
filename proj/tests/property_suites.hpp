#pragma once
// Randomised property suites shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "chiralwg/spectra_metrics.hpp"
#include "chiralwg/spin_dynamics.hpp"

namespace props {

struct Report {
  std::string name;
  int cases = 0;
  int failures = 0;
  std::string first_failure;
  bool ok() const { return failures == 0; }
};

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

  // Intensity with exact zeros and a wide dynamic range mixed in.
  double intensity() {
    switch (pick(4)) {
      case 0: return chance(0.5) ? 0.0 : uniform(0.0, 1.0);
      case 1: return log_uniform(1e-8, 1e8);
      default: return uniform(0.0, 1e4);
    }
  }

  chiralwg::Intensity with_sigma() {
    const double v = intensity();
    return {v, 0.1 * std::sqrt(v)};
  }

  chiralwg::Populations simplex_point() {
    chiralwg::Populations p;
    for (int i = 0; i < chiralwg::kNumStates; ++i) p[i] = chance(0.2) ? 0.0 : -std::log(uniform(1e-12, 1.0));
    if (p.sum() == 0.0) p[pick(chiralwg::kNumStates)] = 1.0;
    return p / p.sum();
  }

  chiralwg::RateModel rate_model() {
    using namespace chiralwg;
    EmitterSpec e;
    e.beta = uniform(0.0, 1.0);
    e.gamma_rad = log_uniform(0.1, 10.0);
    e.dipole = chance(0.5) ? Handedness::sigma_plus : Handedness::sigma_minus;
    CouplerPair c = CouplerPair::symmetric(uniform(2.0, 20.0));
    for (GratingCoupler* g : {&c.left, &c.right}) {
      g->in_efficiency = uniform(0.0, 1.0);
      g->out_efficiency = uniform(0.0, 1.0);
      g->reflectivity = chance(0.3) ? 0.0 : uniform(0.0, 0.3);
    }
    const DeviceModel d = make_device(uniform(-1.0, 1.0), e, c);
    DirectionalFlux f;
    f.minus_x = chance(0.2) ? 0.0 : log_uniform(1e-3, 10.0);
    f.plus_x = chance(0.2) ? 0.0 : log_uniform(1e-3, 10.0);
    SpinNoise n;
    n.kappa_h = chance(0.3) ? 0.0 : log_uniform(1e-5, 1.0);
    n.kappa_T = chance(0.3) ? 0.0 : log_uniform(1e-5, 1.0);
    PumpSettings ps;
    ps.absorption_per_flux = log_uniform(1e-3, 1.0);
    ps.charging = log_uniform(1e-4, 0.1);
    ps.nr_pump = chance(0.5) ? 0.0 : log_uniform(1e-4, 1.0);
    return build_rate_model(d, f, {uniform(0.0, 2.0)}, n, uniform(0.5, 1.0), ps);
  }

 private:
  std::mt19937_64 rng_;
};

inline void record(Report& r, bool pass, const std::string& what) {
  ++r.cases;
  if (!pass) {
    if (r.failures == 0) r.first_failure = what;
    ++r.failures;
  }
}

inline std::string describe(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (double x : v) os << x << " ";
  return os.str();
}

// |C| <= 1, exact sign flip under exchange, scale invariance to 1e-12.
inline Report contrast_suite(int n, std::uint64_t seed) {
  using namespace chiralwg;
  Report r{"contrast bounds/antisymmetry/scale invariance"};
  Gen g(seed);
  for (int k = 0; k < n; ++k) {
    Intensity a = g.with_sigma(), b = g.with_sigma();
    if (a.value + b.value == 0.0) a = {1.0, 0.1};
    std::array<Intensity, 2> L{g.with_sigma(), g.with_sigma()}, R{g.with_sigma(), g.with_sigma()};
    if (L[0].value + L[1].value + R[0].value + R[1].value == 0.0) R[0] = {1.0, 0.1};
    const double lam = g.log_uniform(1e-6, 1e6);
    const Side side = g.chance(0.5) ? Side::left : Side::right;

    const ContrastResult c = readout_contrast(a, b, side);
    const ContrastResult cs = readout_contrast(b, a, side);
    const ContrastResult cl = readout_contrast({lam * a.value, lam * a.sigma}, {lam * b.value, lam * b.sigma}, side);
    const ContrastResult i = init_contrast(L, R, side);
    const ContrastResult is = init_contrast(R, L, side);
    std::array<Intensity, 2> Ll = L, Rl = R;
    for (auto* arr : {&Ll, &Rl})
      for (auto& x : *arr) x = {lam * x.value, lam * x.sigma};
    const ContrastResult il = init_contrast(Ll, Rl, side);

    const bool pass = std::abs(c.value) <= 1.0 && std::abs(i.value) <= 1.0 && cs.value == -c.value &&
                      is.value == -i.value && std::abs(cl.value - c.value) <= 1e-12 &&
                      std::abs(il.value - i.value) <= 1e-12 && c.uncertainty >= 0.0 && i.uncertainty >= 0.0;
    record(r, pass, "readout " + describe({a.value, b.value}) + "init " +
                        describe({L[0].value, L[1].value, R[0].value, R[1].value}) + "lambda " + describe({lam}));
  }
  return r;
}

// Probability and photon bookkeeping of the rate model.
inline Report rate_conservation_suite(int n, std::uint64_t seed) {
  using namespace chiralwg;
  Report r{"rate conservation"};
  Gen g(seed);
  for (int k = 0; k < n; ++k) {
    const RateModel m = g.rate_model();
    const Generator G = m.generator();
    const double scale = G.cwiseAbs().maxCoeff();
    double col = 0.0;
    for (int c = 0; c < kNumStates; ++c) col = std::max(col, std::abs(G.col(c).sum()));
    bool off_diag_ok = true;
    for (int i = 0; i < kNumStates; ++i)
      for (int j = 0; j < kNumStates; ++j)
        if (i != j && G(i, j) < 0.0) off_diag_ok = false;
    const SteadyState ss = steady_state(m);
    const double trion = ss.populations[T_down] + ss.populations[T_up];
    const double emitted = ss.flux.total_emission();
    const auto& sp = m.rates_sigma_plus;
    const auto& sm = m.rates_sigma_minus;
    bool detected_ok = true;
    for (int s = 0; s < 2; ++s)
      for (int p = 0; p < 2; ++p)
        if (ss.flux.detected[s][p] > ss.flux.guided[s][p] || ss.flux.detected[s][p] < 0.0) detected_ok = false;
    const bool pass = off_diag_ok && col <= 1e-12 * scale && ss.residual <= 1e-12 * scale &&
                      std::abs(ss.populations.sum() - 1.0) <= 1e-12 &&
                      std::abs(emitted - m.gamma_rad * trion) <= 1e-12 * std::max(m.gamma_rad * trion, 1e-300) &&
                      std::abs(sp.left + sp.right + sp.loss - m.gamma_rad) <= 1e-15 * m.gamma_rad &&
                      std::abs(sm.left + sm.right + sm.loss - m.gamma_rad) <= 1e-15 * m.gamma_rad && detected_ok;
    record(r, pass, "case " + std::to_string(k) + " col " + describe({col, ss.residual, scale}));
  }
  return r;
}

// exp(G t) keeps populations on the simplex.
inline Report simplex_suite(int n, std::uint64_t seed) {
  using namespace chiralwg;
  Report r{"population simplex preservation"};
  Gen g(seed);
  for (int k = 0; k < n; ++k) {
    const RateModel m = g.rate_model();
    const Populations p0 = g.simplex_point();
    const double t = g.log_uniform(1e-3, 1e3);
    const Populations p = evolve(m, p0, {t}).p.front();
    const bool pass = (p.array() >= -1e-12).all() && std::abs(p.sum() - 1.0) <= 1e-9 && p.allFinite();
    record(r, pass, "t=" + describe({t}) + "p=" + describe({p[0], p[1], p[2], p[3]}));
  }
  return r;
}

// Analytic Gaussian-sum Jacobian against central differences.
inline Report jacobian_suite(int n, std::uint64_t seed) {
  using namespace chiralwg;
  Report r{"fit Jacobian vs finite differences"};
  Gen g(seed);
  for (int k = 0; k < n; ++k) {
    const int peaks = 1 + g.pick(2);
    Eigen::VectorXd p(3 * peaks);
    for (int j = 0; j < peaks; ++j) p.segment<3>(3 * j) << g.log_uniform(0.1, 1e4), g.uniform(-200, 200), g.uniform(5, 60);
    std::vector<double> x(40);
    for (double& xi : x) xi = g.uniform(-400, 400);
    const Eigen::MatrixXd J = gaussian_jacobian(p, x);
    Eigen::MatrixXd F(J.rows(), J.cols());
    for (int c = 0; c < p.size(); ++c) {
      const double h = 1e-6 * std::max(std::abs(p[c]), 1.0);
      Eigen::VectorXd up = p, dn = p;
      up[c] += h;
      dn[c] -= h;
      for (std::size_t i = 0; i < x.size(); ++i) F(i, c) = (gaussian_sum(up, x[i]) - gaussian_sum(dn, x[i])) / (2 * h);
    }
    const double rel = (J - F).norm() / std::max(J.norm(), 1e-300);
    record(r, J.rows() == static_cast<int>(x.size()) && J.cols() == p.size() && rel <= 1e-6,
           "params " + describe(std::vector<double>(p.data(), p.data() + p.size())) + "rel " + describe({rel}));
  }
  return r;
}

inline std::vector<Report> all_suites(int n, std::uint64_t seed) {
  return {contrast_suite(n, seed), rate_conservation_suite(n, seed + 1), simplex_suite(n, seed + 2),
          jacobian_suite(n, seed + 3)};
}

}  // namespace props
