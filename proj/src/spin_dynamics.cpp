#include "chiralwg/spin_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "chiralwg/errors.hpp"

namespace chiralwg {

const char* TrionSystem::name(State s) {
  switch (s) {
    case h_up: return "h_up";
    case h_down: return "h_down";
    case T_down: return "T_down";
    case T_up: return "T_up";
  }
  return "?";
}

State TrionSystem::hole_after_emission(State trion) {
  if (trion == T_down) return h_down;
  if (trion == T_up) return h_up;
  throw InvalidConfig(std::string("not a trion state: ") + name(trion));
}

State TrionSystem::trion_for(Handedness h) { return h == Handedness::sigma_plus ? T_down : T_up; }

Handedness TrionSystem::handedness_of(State trion) {
  if (trion == T_down) return Handedness::sigma_plus;
  if (trion == T_up) return Handedness::sigma_minus;
  throw InvalidConfig(std::string("not a trion state: ") + name(trion));
}

double zeeman_splitting(const ZeemanParams& z) {
  if (!(z.B_T >= 0.0)) throw InvalidConfig("B_z must be non-negative");
  return z.splitting_ueV();
}

double HyperfineModel::kappa_T(double B_T) const {
  if (B_c <= 0.0) return B_T == 0.0 ? kappa0 : 0.0;
  const double r = B_T / B_c;
  return kappa0 / (1.0 + r * r);
}

std::string LaserPolarization::label() const {
  switch (kind) {
    case PolarizationKind::sigma_plus: return "sigma_plus";
    case PolarizationKind::sigma_minus: return "sigma_minus";
    case PolarizationKind::linear: {
      std::ostringstream os;
      os << "linear:" << theta_deg;
      return os.str();
    }
  }
  return "?";
}

LaserPolarization polarization_from_string(const std::string& s) {
  LaserPolarization p;
  if (s == "sigma_plus" || s == "sigma+") {
    p.kind = PolarizationKind::sigma_plus;
  } else if (s == "sigma_minus" || s == "sigma-") {
    p.kind = PolarizationKind::sigma_minus;
  } else if (s.rfind("linear", 0) == 0) {
    p.kind = PolarizationKind::linear;
    if (s.size() > 6) {
      if (s[6] != ':') throw InvalidConfig("linear polarization must be written linear:<degrees>");
      try {
        std::size_t used = 0;
        p.theta_deg = std::stod(s.substr(7), &used);
        if (used != s.size() - 7) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw InvalidConfig("bad polarization angle in '" + s + "'");
      }
    }
  } else {
    throw InvalidConfig("unknown laser polarization '" + s + "'");
  }
  return p;
}

void RateModel::validate() const {
  const double rates[] = {pump_sigma_plus, pump_sigma_minus, gamma_rad, kappa_h, kappa_T, charging, nr_pump,
                          rates_sigma_plus.left, rates_sigma_plus.right, rates_sigma_plus.loss,
                          rates_sigma_minus.left, rates_sigma_minus.right, rates_sigma_minus.loss};
  for (double r : rates)
    if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidConfig("rate model has a negative or non-finite rate");
  if (!(eta_p >= 0.0 && eta_p <= 1.0)) throw InvalidConfig("eta_p must lie in [0, 1]");
  if (!(out_eff_left >= 0.0 && out_eff_left <= 1.0 && out_eff_right >= 0.0 && out_eff_right <= 1.0))
    throw InvalidConfig("out-coupling efficiencies must lie in [0, 1]");
}

Generator RateModel::generator() const {
  Generator g = Generator::Zero();
  // g(to, from) += rate, diagonal collects the outflow.
  auto add = [&g](int from, int to, double rate) {
    g(to, from) += rate;
    g(from, from) -= rate;
  };
  add(h_down, T_down, eta_p * pump_sigma_plus);
  add(h_down, T_up, (1.0 - eta_p) * pump_sigma_plus);
  add(h_up, T_up, eta_p * pump_sigma_minus);
  add(h_up, T_down, (1.0 - eta_p) * pump_sigma_minus);
  for (int h : {h_up, h_down}) {
    add(h, T_down, 0.5 * nr_pump);
    add(h, T_up, 0.5 * nr_pump);
  }
  add(T_down, h_down, gamma_rad);
  add(T_up, h_up, gamma_rad);
  add(h_up, h_down, kappa_h + 0.5 * charging);
  add(h_down, h_up, kappa_h + 0.5 * charging);
  add(T_up, T_down, kappa_T);
  add(T_down, T_up, kappa_T);
  return g;
}

RateModel build_rate_model(const DeviceModel& device, const DirectionalFlux& flux, const ZeemanParams& zeeman,
                           const SpinNoise& noise, double eta_p, const PumpSettings& pump) {
  if (!(flux.minus_x >= 0.0 && flux.plus_x >= 0.0)) throw InvalidConfig("guided flux must be non-negative");
  if (!(pump.absorption_per_flux >= 0.0)) throw InvalidConfig("absorption_per_flux must be non-negative");
  const double s3 = device.s3_at_emitter;
  const double wp = 0.5 * (1.0 + s3);
  const double wm = 0.5 * (1.0 - s3);
  RateModel m;
  m.pump_sigma_plus = pump.absorption_per_flux * (flux.minus_x * wp + flux.plus_x * wm);
  m.pump_sigma_minus = pump.absorption_per_flux * (flux.minus_x * wm + flux.plus_x * wp);
  m.eta_p = eta_p;
  m.rates_sigma_plus = split_rates(device, +1);
  m.rates_sigma_minus = split_rates(device, -1);
  m.gamma_rad = device.emitter.gamma_rad;
  m.kappa_h = noise.kappa_h;
  m.kappa_T = noise.kappa_T;
  m.charging = pump.charging;
  m.nr_pump = pump.nr_pump;
  m.out_eff_left = device.couplers.left.out_efficiency;
  m.out_eff_right = device.couplers.right.out_efficiency;
  m.B_T = zeeman.B_T;
  m.validate();
  return m;
}

RateModel build_rate_model(const DeviceModel& device, const Excitation& excitation, const ZeemanParams& zeeman,
                           const SpinNoise& noise, double eta_p, const PumpSettings& pump) {
  return build_rate_model(device, pump_reach(device, excitation.side, excitation.power), zeeman, noise, eta_p, pump);
}

double FluxReport::side_total(Side s) const {
  const auto& r = detected[s == Side::left ? 0 : 1];
  return r[0] + r[1];
}

double FluxReport::total_emission() const {
  return guided[0][0] + guided[0][1] + guided[1][0] + guided[1][1] + loss;
}

Populations steady_state(const Generator& g) {
  Eigen::FullPivLU<Generator> rank_check(g);
  rank_check.setThreshold(1e-13);
  if (rank_check.rank() < kNumStates - 1) {
    std::ostringstream os;
    os << "generator null space has dimension " << kNumStates - rank_check.rank() << "; the chain is disconnected";
    throw SingularGenerator(os.str());
  }
  Generator a = g;
  a.row(kNumStates - 1).setOnes();
  Populations rhs = Populations::Zero();
  rhs[kNumStates - 1] = 1.0;
  Populations p = a.fullPivLu().solve(rhs);
  for (int i = 0; i < kNumStates; ++i)
    if (p[i] < 0.0 && p[i] > -1e-14) p[i] = 0.0;
  return p;
}

FluxReport flux_report(const RateModel& model, const Populations& p) {
  FluxReport f;
  const double up = p[T_down];
  const double um = p[T_up];
  f.guided[0][0] = up * model.rates_sigma_plus.left;
  f.guided[1][0] = up * model.rates_sigma_plus.right;
  f.guided[0][1] = um * model.rates_sigma_minus.left;
  f.guided[1][1] = um * model.rates_sigma_minus.right;
  f.loss = up * model.rates_sigma_plus.loss + um * model.rates_sigma_minus.loss;
  for (int pol = 0; pol < 2; ++pol) {
    f.detected[0][pol] = f.guided[0][pol] * model.out_eff_left;
    f.detected[1][pol] = f.guided[1][pol] * model.out_eff_right;
  }
  return f;
}

SteadyState steady_state(const RateModel& model) {
  const Generator g = model.generator();
  SteadyState s;
  s.populations = steady_state(g);
  s.residual = (g * s.populations).cwiseAbs().maxCoeff();
  s.flux = flux_report(model, s.populations);
  return s;
}

Trace evolve(const Generator& g, const Populations& p0, const std::vector<double>& t_ns) {
  Trace tr;
  tr.t_ns = t_ns;
  tr.p.reserve(t_ns.size());
  for (double t : t_ns) {
    if (t == 0.0) {
      tr.p.push_back(p0);
      continue;
    }
    const Generator gt = g * t;
    const Generator prop = gt.exp();
    tr.p.push_back(prop * p0);
  }
  return tr;
}

Trace evolve(const RateModel& model, const Populations& p0, const std::vector<double>& t_ns) {
  if ((p0.array() < 0.0).any() || std::abs(p0.sum() - 1.0) > 1e-12)
    throw InvalidConfig("initial populations must lie on the probability simplex");
  return evolve(model.generator(), p0, t_ns);
}

std::vector<double> g2_generic(const Eigen::MatrixXd& g, int emitting, int collapse_to,
                               const std::vector<double>& tau_ns) {
  const int n = static_cast<int>(g.rows());
  if (g.cols() != n || emitting < 0 || emitting >= n || collapse_to < 0 || collapse_to >= n)
    throw InvalidConfig("g2: bad generator or state index");
  Eigen::MatrixXd a = g;
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[n - 1] = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw SingularGenerator("g2: generator has no unique steady state");
  const Eigen::VectorXd pss = lu.solve(rhs);
  if (!(pss[emitting] > 0.0)) throw ZeroFluxChannel("g2: emitting state is empty at steady state");
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(n);
  p0[collapse_to] = 1.0;
  std::vector<double> out;
  out.reserve(tau_ns.size());
  for (double tau : tau_ns) {
    double pe = 0.0;
    if (tau != 0.0) {
      const Eigen::MatrixXd prop = (g * tau).exp();
      pe = prop.row(emitting).dot(p0);
    } else {
      pe = p0[emitting];
    }
    out.push_back(pe / pss[emitting]);
  }
  return out;
}

std::vector<double> g2(const RateModel& model, const Channel& channel, const std::vector<double>& tau_ns) {
  const SteadyState ss = steady_state(model);
  if (!(ss.flux.at(channel.side, channel.polarization) > 0.0)) {
    std::ostringstream os;
    os << "channel (" << to_string(channel.side) << ", " << to_string(channel.polarization) << ") carries no flux";
    throw ZeroFluxChannel(os.str());
  }
  const State trion = TrionSystem::trion_for(channel.polarization);
  return g2_generic(model.generator(), trion, TrionSystem::hole_after_emission(trion), tau_ns);
}

}  // namespace chiralwg
