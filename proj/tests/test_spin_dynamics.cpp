#include <cmath>
#include <vector>

#include "chiralwg/errors.hpp"
#include "chiralwg/spin_dynamics.hpp"
#include "doctest.h"

using namespace chiralwg;

namespace {

DeviceModel device(double s3, double beta = 1.0, CouplerPair c = CouplerPair::symmetric()) {
  EmitterSpec e;
  e.beta = beta;
  return make_device(s3, e, c);
}

Excitation from(Side s, double power = 1.0) {
  Excitation x;
  x.side = s;
  x.power = power;
  return x;
}

// (I_R - I_L) / (I_R + I_L) at one detector, I_X = signal with excitation from X.
double init_c(const DeviceModel& d, Side detector, const SpinNoise& n, double eta, const PumpSettings& p = {}) {
  const double ir = steady_state(build_rate_model(d, from(Side::right), {}, n, eta, p)).flux.side_total(detector);
  const double il = steady_state(build_rate_model(d, from(Side::left), {}, n, eta, p)).flux.side_total(detector);
  return (ir - il) / (ir + il);
}

}  // namespace

TEST_CASE("generator columns sum to zero and the steady state is stationary") {
  SpinNoise n{0.02, 0.03};
  PumpSettings p;
  p.nr_pump = 0.05;
  const RateModel m = build_rate_model(device(0.7, 0.9, CouplerPair::asymmetric_reflectivity()), from(Side::right),
                                       {1.0}, n, 0.95, p);
  const Generator g = m.generator();
  for (int c = 0; c < kNumStates; ++c) CHECK(std::abs(g.col(c).sum()) <= 1e-15);
  const SteadyState ss = steady_state(m);
  CHECK(ss.residual <= 1e-12);
  CHECK(std::abs(ss.populations.sum() - 1.0) <= 1e-14);
  CHECK((ss.populations.array() >= 0.0).all());
  CHECK(ss.flux.total_emission() == doctest::Approx(m.gamma_rad * (ss.populations[T_down] + ss.populations[T_up])));
}

TEST_CASE("pump fidelity splits absorption") {
  const RateModel m = build_rate_model(device(1.0), from(Side::right), {}, {}, 0.95);
  const Generator g = m.generator();
  CHECK(m.pump_sigma_minus == 0.0);
  CHECK(g(T_down, h_down) == doctest::Approx(0.95 * m.pump_sigma_plus).epsilon(1e-15));
  CHECK(g(T_up, h_down) == doctest::Approx(0.05 * m.pump_sigma_plus).epsilon(1e-12));
  CHECK(g(T_down, h_down) / g(T_up, h_down) == doctest::Approx(19.0).epsilon(1e-12));
}

TEST_CASE("C-point excitation from the right drives only T_down") {
  const RateModel m = build_rate_model(device(1.0), from(Side::right), {}, {}, 1.0);
  const Generator g = m.generator();
  CHECK(m.pump_sigma_plus > 0.0);
  CHECK(g(T_up, h_down) == 0.0);
  CHECK(g(T_up, h_up) == 0.0);
  CHECK(g(T_down, h_down) > 0.0);
}

TEST_CASE("L-point excitation pumps both transitions equally") {
  const RateModel m = build_rate_model(device(0.0), from(Side::right), {}, {}, 1.0);
  CHECK(m.pump_sigma_plus == m.pump_sigma_minus);
  CHECK(m.pump_sigma_plus > 0.0);
}

TEST_CASE("no excitation, no emission") {
  const SteadyState ss = steady_state(build_rate_model(device(1.0), from(Side::right, 0.0), {}, {}, 1.0));
  CHECK(ss.flux.total_emission() == 0.0);
  CHECK(ss.populations[T_down] == 0.0);
  CHECK(ss.populations[T_up] == 0.0);
}

TEST_CASE("ideal chiral device gives unit initialisation contrast") {
  const DeviceModel d = device(1.0);
  CHECK(init_c(d, Side::left, {}, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(init_c(d, Side::right, {}, 1.0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("trion spin mixing limits contrast by a closed form") {
  // Only T_down is fed; T_up is reached through kappa_T alone, so
  // p_up / p_down = kappa / (gamma + kappa) and C = (1 - r) / (1 + r).
  const double gamma = 1.0;
  const double kappa = gamma / 18.0;
  const DeviceModel d = device(1.0);
  const SpinNoise n{0.0, kappa};
  const SteadyState ss = steady_state(build_rate_model(d, from(Side::right), {}, n, 1.0));
  CHECK(ss.flux.side_total(Side::left) / ss.flux.side_total(Side::right) == doctest::Approx(19.0).epsilon(1e-12));
  CHECK(init_c(d, Side::left, n, 1.0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(init_c(d, Side::right, n, 1.0) == doctest::Approx(-0.9).epsilon(1e-12));
}

TEST_CASE("time evolution") {
  PumpSettings quiet;
  quiet.charging = 0.0;
  const RateModel m = build_rate_model(device(1.0), from(Side::right, 0.0), {}, {}, 1.0, quiet);
  const Populations p0(0.0, 0.0, 1.0, 0.0);
  const Trace tr = evolve(m, p0, {0.0, 1.0, 200.0});
  CHECK(tr.p[0] == p0);
  CHECK(tr.p[1][T_down] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(tr.p[1][h_down] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

  SpinNoise n{0.01, 0.02};
  const RateModel pumped = build_rate_model(device(0.4, 0.9), from(Side::right), {}, n, 0.95);
  const Trace lt = evolve(pumped, Populations(0.25, 0.25, 0.25, 0.25), {5000.0});
  CHECK((lt.p[0] - steady_state(pumped).populations).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(std::abs(lt.p[0].sum() - 1.0) <= 1e-9);

  CHECK_THROWS_AS(evolve(m, Populations(0.5, 0.5, 0.5, 0.0), {1.0}), InvalidConfig);
}

TEST_CASE("g2 of a two-level emitter") {
  const double p = 0.3;
  const double gamma = 1.0;
  Eigen::MatrixXd g(2, 2);
  g << -p, gamma, p, -gamma;
  const std::vector<double> tau = {0.0, 0.5, 1.0, 2.0, 7.0};
  const std::vector<double> v = g2_generic(g, 1, 0, tau);
  for (std::size_t i = 0; i < tau.size(); ++i) CHECK(std::abs(v[i] - (1.0 - std::exp(-(p + gamma) * tau[i]))) <= 1e-8);
}

TEST_CASE("g2 of the trion channels") {
  const SpinNoise n{0.01, 0.02};
  PumpSettings ps;
  const RateModel m = build_rate_model(device(0.9, 0.9, CouplerPair::asymmetric_reflectivity()), from(Side::right),
                                       {1.0}, n, 0.95, ps);
  const std::vector<double> v = g2(m, {Side::left, Handedness::sigma_plus}, {0.0, 5000.0});
  CHECK(v[0] == 0.0);
  CHECK(std::abs(v[1] - 1.0) <= 1e-6);

  const RateModel ideal = build_rate_model(device(1.0), from(Side::right), {}, {}, 1.0);
  CHECK_THROWS_AS(g2(ideal, {Side::right, Handedness::sigma_plus}, {0.0}), ZeroFluxChannel);
}

TEST_CASE("Zeeman splitting") {
  CHECK(zeeman_splitting({1.0, 2.5396}) == doctest::Approx(147.0).epsilon(0.1 / 147.0));
  CHECK(zeeman_splitting({0.0, 2.5396}) == 0.0);
  CHECK(zeeman_splitting({2.0, 2.5396}) == doctest::Approx(2.0 * zeeman_splitting({1.0, 2.5396})).epsilon(1e-15));
  CHECK_THROWS_AS(zeeman_splitting({-0.1, 2.5396}), InvalidConfig);
}

TEST_CASE("hyperfine suppression") {
  HyperfineModel h;
  h.kappa0 = 0.04;
  CHECK(h.kappa_T(0.0) == 0.04);
  CHECK(h.kappa_T(h.B_c) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(h.kappa_T(1.0) < h.kappa_T(0.5));
  CHECK(h.kappa_T(1.0) > 0.0);
}

TEST_CASE("field strength only labels the spectral axis") {
  const SpinNoise n{0.01, 0.02};
  const DeviceModel d = device(0.8, 0.9);
  const SteadyState a = steady_state(build_rate_model(d, from(Side::right), {0.0}, n, 0.95));
  const SteadyState b = steady_state(build_rate_model(d, from(Side::right), {1.0}, n, 0.95));
  CHECK(a.populations == b.populations);
  CHECK(a.flux.detected == b.flux.detected);
}

TEST_CASE("mirror symmetry exchanges the detectors") {
  const SpinNoise n{0.01, 0.02};
  const DeviceModel d = device(0.7, 0.9, CouplerPair::asymmetric_reflectivity());
  const FluxReport a = steady_state(build_rate_model(d, from(Side::right), {}, n, 0.95)).flux;
  const FluxReport b = steady_state(build_rate_model(mirrored(d), from(Side::left), {}, n, 0.95)).flux;
  for (int pol = 0; pol < 2; ++pol) {
    CHECK(a.detected[0][pol] == doctest::Approx(b.detected[1][pol]).epsilon(1e-12));
    CHECK(a.detected[1][pol] == doctest::Approx(b.detected[0][pol]).epsilon(1e-12));
  }
}

TEST_CASE("disconnected chains are rejected") {
  PumpSettings p;
  p.charging = 0.0;
  const RateModel m = build_rate_model(device(1.0), from(Side::right, 0.0), {}, {}, 1.0, p);
  CHECK_THROWS_AS(steady_state(m), SingularGenerator);
  CHECK_THROWS_AS(steady_state(Generator::Zero().eval()), SingularGenerator);
}

TEST_CASE("polarization parsing") {
  CHECK(polarization_from_string("sigma_plus").kind == PolarizationKind::sigma_plus);
  const LaserPolarization l = polarization_from_string("linear:30");
  CHECK(l.kind == PolarizationKind::linear);
  CHECK(l.theta_deg == 30.0);
  CHECK(l.label() == "linear:30");
  CHECK_THROWS_AS(polarization_from_string("circular"), InvalidConfig);
  CHECK_THROWS_AS(polarization_from_string("linear:x"), InvalidConfig);
}
