#include "chiralwg/chiral_device.hpp"

#include <cmath>
#include <sstream>

#include "chiralwg/errors.hpp"

namespace chiralwg {

namespace {

void check_unit_interval(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    std::ostringstream os;
    os << name << " = " << v << " is outside [0, 1]";
    throw InvalidConfig(os.str());
  }
}

}  // namespace

std::string to_string(Side s) { return s == Side::left ? "left" : "right"; }

Side side_from_string(const std::string& s) {
  if (s == "left" || s == "L" || s == "l") return Side::left;
  if (s == "right" || s == "R" || s == "r") return Side::right;
  throw InvalidConfig("unknown side '" + s + "' (expected left or right)");
}

std::string to_string(Handedness h) { return h == Handedness::sigma_plus ? "sigma_plus" : "sigma_minus"; }

void EmitterSpec::validate() const {
  check_unit_interval(beta, "emitter.beta");
  if (!(gamma_rad > 0.0)) throw InvalidConfig("emitter.gamma_rad must be positive");
  if (!(s_shell_energy_eV > 0.0)) throw InvalidConfig("emitter.s_shell_energy_eV must be positive");
  if (!std::isfinite(g_factor)) throw InvalidConfig("emitter.g_factor must be finite");
  if (!std::isfinite(y_nm) || !std::isfinite(z_nm)) throw InvalidConfig("emitter position must be finite");
}

void GratingCoupler::validate() const {
  check_unit_interval(in_efficiency, "coupler.in_efficiency");
  check_unit_interval(out_efficiency, "coupler.out_efficiency");
  check_unit_interval(reflectivity, "coupler.reflectivity");
}

void CouplerPair::validate() const {
  left.validate();
  right.validate();
  if (left.side != Side::left || right.side != Side::right) throw InvalidConfig("coupler sides are swapped");
  if (!(left.x_um < right.x_um)) throw InvalidConfig("left coupler must sit at smaller x than the right coupler");
}

CouplerPair CouplerPair::symmetric(double separation_um) {
  CouplerPair p;
  p.left.side = Side::left;
  p.left.x_um = -0.5 * separation_um;
  p.right.side = Side::right;
  p.right.x_um = 0.5 * separation_um;
  return p;
}

CouplerPair CouplerPair::asymmetric_reflectivity(double separation_um) {
  CouplerPair p = symmetric(separation_um);
  p.left.reflectivity = 0.0;
  p.right.reflectivity = 0.07;
  return p;
}

void DeviceModel::validate() const {
  emitter.validate();
  couplers.validate();
  if (!(std::abs(s3_at_emitter) <= 1.0)) throw InvalidConfig("S3 at emitter must lie in [-1, 1]");
}

DeviceModel make_device(const GuidedMode& forward, const EmitterSpec& emitter, const CouplerPair& couplers) {
  if (!forward.has_longitudinal()) throw InvalidConfig("device mode needs E_x; call longitudinal_field first");
  if (forward.direction != Direction::forward) throw InvalidConfig("device mode must propagate along +x");
  DeviceModel d;
  d.forward = std::make_shared<const GuidedMode>(forward);
  d.backward = std::make_shared<const GuidedMode>(forward.reversed());
  d.emitter = emitter;
  d.couplers = couplers;
  d.s3_at_emitter = stokes_s3(mode_at(forward, emitter.y_nm, emitter.z_nm)).value;
  d.validate();
  return d;
}

DeviceModel make_device(double s3, const EmitterSpec& emitter, const CouplerPair& couplers) {
  DeviceModel d;
  d.emitter = emitter;
  d.couplers = couplers;
  d.s3_at_emitter = s3;
  d.validate();
  return d;
}

double directionality(const DeviceModel& device, int handedness) {
  return static_cast<double>(handedness > 0 ? 1 : -1) * device.s3_at_emitter;
}

SplitRates split_rates(const DeviceModel& device, int handedness) {
  const double d = directionality(device, handedness);
  const double g = device.emitter.gamma_rad;
  const double b = device.emitter.beta;
  SplitRates r;
  r.left = b * g * (1.0 + d) / 2.0;
  r.right = b * g * (1.0 - d) / 2.0;
  // Remainder rather than (1 - beta) * g so the three parts sum to g exactly.
  r.loss = g - (r.left + r.right);
  if (r.loss < 0.0) r.loss = 0.0;
  return r;
}

DirectionalFlux launched_flux(const DeviceModel& device, Side port, double coupled_power) {
  DirectionalFlux f;
  const double bounce = coupled_power * device.couplers.at(opposite(port)).reflectivity;
  if (port == Side::right) {
    f.minus_x = coupled_power;
    f.plus_x = bounce;
  } else {
    f.plus_x = coupled_power;
    f.minus_x = bounce;
  }
  return f;
}

DirectionalFlux pump_reach(const DeviceModel& device, Side excitation, double power) {
  if (!(power >= 0.0)) throw InvalidConfig("excitation power must be non-negative");
  return launched_flux(device, excitation, power * device.couplers.at(excitation).in_efficiency);
}

DeviceModel mirrored(const DeviceModel& device) {
  DeviceModel m = device;
  m.couplers.left = device.couplers.right;
  m.couplers.right = device.couplers.left;
  m.couplers.left.side = Side::left;
  m.couplers.right.side = Side::right;
  m.couplers.left.x_um = -device.couplers.right.x_um;
  m.couplers.right.x_um = -device.couplers.left.x_um;
  m.s3_at_emitter = -device.s3_at_emitter;
  m.forward = device.backward;
  m.backward = device.forward;
  return m;
}

}  // namespace chiralwg
