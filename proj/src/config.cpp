#include "chiralwg/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "chiralwg/errors.hpp"

namespace chiralwg {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were used so leftovers can
// be reported by full path.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidConfig("'" + path_ + "' must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InvalidConfig("key '" + full(key) + "' has the wrong type");
    }
  }

  void get_nonneg(const std::string& key, double& out) {
    get(key, out);
    if (!(out >= 0.0) || !std::isfinite(out)) throw InvalidConfig("key '" + full(key) + "' must be non-negative");
  }

  std::optional<Block> child(const std::string& key) {
    if (!j_.contains(key)) return std::nullopt;
    used_.insert(key);
    return Block(j_.at(key), full(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw InvalidConfig("unknown config key '" + full(it.key()) + "'");
  }

  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_coupler(Block& b, GratingCoupler& c) {
  b.get("x_um", c.x_um);
  b.get("y_um", c.y_um);
  b.get("in_efficiency", c.in_efficiency);
  b.get("out_efficiency", c.out_efficiency);
  b.get("reflectivity", c.reflectivity);
  b.finish();
}

json coupler_json(const GratingCoupler& c) {
  return json{{"x_um", c.x_um},
              {"y_um", c.y_um},
              {"in_efficiency", c.in_efficiency},
              {"out_efficiency", c.out_efficiency},
              {"reflectivity", c.reflectivity}};
}

std::string placement_name(Placement p) {
  switch (p) {
    case Placement::at_cpoint: return "at-cpoint";
    case Placement::at_lpoint: return "at-lpoint";
    case Placement::explicit_position: return "explicit";
  }
  return "?";
}

Placement placement_from(const std::string& s) {
  if (s == "at-cpoint") return Placement::at_cpoint;
  if (s == "at-lpoint") return Placement::at_lpoint;
  if (s == "explicit") return Placement::explicit_position;
  throw InvalidConfig("device.placement must be at-cpoint, at-lpoint or explicit (got '" + s + "')");
}

}  // namespace

std::vector<double> G2Config::grid() const {
  std::vector<double> t{0.0};
  if (n_tau < 2) return t;
  const double a = std::log(tau_min_ns);
  const double b = std::log(tau_max_ns);
  for (int i = 0; i < n_tau - 1; ++i) t.push_back(std::exp(a + (b - a) * i / std::max(n_tau - 2, 1)));
  t.back() = tau_max_ns;
  return t;
}

void ExperimentConfig::require_blocks(const std::vector<std::string>& names) const {
  std::string missing;
  for (const auto& n : names)
    if (!blocks_present.count(n)) missing += (missing.empty() ? "" : ", ") + n;
  if (!missing.empty()) throw InvalidConfig("config is missing block(s): " + missing);
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Block root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);

  if (auto b = root.child("cross_section")) {
    c.blocks_present.insert("cross_section");
    auto& cs = c.cross_section;
    b->get("core_width_nm", cs.core_width_nm);
    b->get("core_height_nm", cs.core_height_nm);
    b->get("core_index", cs.core_index);
    b->get("clad_index", cs.clad_index);
    b->get("grid_ny", cs.grid_ny);
    b->get("grid_nz", cs.grid_nz);
    b->get("padding_nm", cs.padding_nm);
    b->finish();
  }

  if (auto b = root.child("solver")) {
    c.blocks_present.insert("solver");
    auto& s = c.solver;
    b->get("wavelength_nm", s.wavelength_nm);
    b->get("n_modes", s.n_modes);
    b->get("shift_fraction", s.options.shift_fraction);
    b->get("residual_tolerance", s.options.residual_tolerance);
    b->get("max_iterations", s.options.max_iterations);
    b->get("eps_c", s.helicity.eps_c);
    b->get("eps_l", s.helicity.eps_l);
    b->finish();
  }

  if (auto b = root.child("device")) {
    c.blocks_present.insert("device");
    auto& d = c.device;
    std::string placement = placement_name(d.placement);
    b->get("placement", placement);
    d.placement = placement_from(placement);
    b->get("cpoint_sign", d.cpoint_sign);
    if (d.cpoint_sign != 1 && d.cpoint_sign != -1) throw InvalidConfig("device.cpoint_sign must be +1 or -1");
    if (b->has("s3_override")) {
      double s3 = 0.0;
      b->get("s3_override", s3);
      d.s3_override = s3;
    }
    auto& e = d.emitter;
    b->get("y_nm", e.y_nm);
    b->get("z_nm", e.z_nm);
    std::string dipole = to_string(e.dipole);
    b->get("dipole", dipole);
    if (dipole == "sigma_plus") e.dipole = Handedness::sigma_plus;
    else if (dipole == "sigma_minus") e.dipole = Handedness::sigma_minus;
    else throw InvalidConfig("device.dipole must be sigma_plus or sigma_minus");
    b->get("s_shell_energy_eV", e.s_shell_energy_eV);
    b->get("g_factor", e.g_factor);
    b->get("beta", e.beta);
    b->get("gamma_rad", e.gamma_rad);
    if (auto cb = b->child("couplers")) {
      cb->get("preset", d.coupler_preset);
      cb->get("separation_um", d.coupler_separation_um);
      if (d.coupler_preset == "symmetric") d.couplers = CouplerPair::symmetric(d.coupler_separation_um);
      else if (d.coupler_preset == "asymmetric_reflectivity")
        d.couplers = CouplerPair::asymmetric_reflectivity(d.coupler_separation_um);
      else throw InvalidConfig("device.couplers.preset must be symmetric or asymmetric_reflectivity");
      if (auto l = cb->child("left")) read_coupler(*l, d.couplers.left);
      if (auto r = cb->child("right")) read_coupler(*r, d.couplers.right);
      cb->finish();
    } else {
      d.couplers = CouplerPair::asymmetric_reflectivity(d.coupler_separation_um);
    }
    b->finish();
    e.validate();
    d.couplers.validate();
  } else {
    c.device.couplers = CouplerPair::asymmetric_reflectivity(c.device.coupler_separation_um);
  }

  if (auto b = root.child("dynamics")) {
    c.blocks_present.insert("dynamics");
    auto& y = c.dynamics;
    b->get("eta_p", y.eta_p);
    if (!(y.eta_p >= 0.0 && y.eta_p <= 1.0)) throw InvalidConfig("dynamics.eta_p must lie in [0, 1]");
    b->get_nonneg("kappa_h", y.kappa_h);
    b->get_nonneg("kappa_T", y.kappa_T);
    if (auto h = b->child("hyperfine")) {
      h->get_nonneg("kappa0", y.hyperfine.kappa0);
      h->get_nonneg("B_c", y.hyperfine.B_c);
      h->finish();
    }
    b->get_nonneg("absorption_per_flux", y.pump.absorption_per_flux);
    b->get_nonneg("charging", y.pump.charging);
    b->get_nonneg("nr_pump", y.pump.nr_pump);
    b->get_nonneg("power", y.power);
    b->get_nonneg("readout_nr_pump", y.readout_nr_pump);
    b->get_nonneg("B_on_T", y.B_on_T);
    b->finish();
  }

  if (auto b = root.child("spectra")) {
    c.blocks_present.insert("spectra");
    auto& s = c.spectra;
    b->get("fwhm_ueV", s.synth.fwhm_ueV);
    if (!(s.synth.fwhm_ueV > 0.0)) throw InvalidConfig("spectra.fwhm_ueV must be positive");
    b->get_nonneg("background", s.synth.background);
    b->get("exposure_ns", s.synth.exposure_ns);
    b->get("span_ueV", s.synth.span_ueV);
    b->get("n_samples", s.synth.n_samples);
    if (s.synth.n_samples < 20) throw InvalidConfig("spectra.n_samples must be at least 20");
    b->get("noise", s.noise);
    b->finish();
  }

  if (auto b = root.child("raster")) {
    c.blocks_present.insert("raster");
    auto& r = c.raster;
    b->get("x_min_um", r.grid.x_min_um);
    b->get("x_max_um", r.grid.x_max_um);
    b->get("y_min_um", r.grid.y_min_um);
    b->get("y_max_um", r.grid.y_max_um);
    b->get("pitch_um", r.grid.pitch_um);
    b->get("spot_radius_um", r.grid.spot_radius_um);
    b->get("grating_visibility", r.grating.visibility);
    b->get("grating_axis_deg", r.grating.axis_deg);
    b->get("disk_radius_um", r.disk_radius_um);
    b->get("polarizations", r.polarizations);
    for (const auto& p : r.polarizations) polarization_from_string(p);
    if (r.polarizations.empty()) throw InvalidConfig("raster.polarizations must not be empty");
    b->finish();
  }

  if (auto b = root.child("g2")) {
    c.blocks_present.insert("g2");
    b->get("tau_min_ns", c.g2.tau_min_ns);
    b->get("tau_max_ns", c.g2.tau_max_ns);
    b->get("n_tau", c.g2.n_tau);
    if (!(c.g2.tau_min_ns > 0.0 && c.g2.tau_max_ns > c.g2.tau_min_ns && c.g2.n_tau >= 2))
      throw InvalidConfig("g2 needs 0 < tau_min_ns < tau_max_ns and n_tau >= 2");
    b->finish();
  }

  root.finish();
  return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidConfig(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const ExperimentConfig& c) {
  const auto& cs = c.cross_section;
  const auto& s = c.solver;
  const auto& d = c.device;
  const auto& e = d.emitter;
  const auto& y = c.dynamics;
  const auto& sp = c.spectra;
  const auto& r = c.raster;
  json dev{{"placement", placement_name(d.placement)},
           {"cpoint_sign", d.cpoint_sign},
           {"y_nm", e.y_nm},
           {"z_nm", e.z_nm},
           {"dipole", to_string(e.dipole)},
           {"s_shell_energy_eV", e.s_shell_energy_eV},
           {"g_factor", e.g_factor},
           {"beta", e.beta},
           {"gamma_rad", e.gamma_rad},
           {"couplers",
            {{"preset", d.coupler_preset},
             {"separation_um", d.coupler_separation_um},
             {"left", coupler_json(d.couplers.left)},
             {"right", coupler_json(d.couplers.right)}}}};
  if (d.s3_override) dev["s3_override"] = *d.s3_override;
  return json{
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"cross_section",
       {{"core_width_nm", cs.core_width_nm},
        {"core_height_nm", cs.core_height_nm},
        {"core_index", cs.core_index},
        {"clad_index", cs.clad_index},
        {"grid_ny", cs.grid_ny},
        {"grid_nz", cs.grid_nz},
        {"padding_nm", cs.padding_nm}}},
      {"solver",
       {{"wavelength_nm", s.wavelength_nm},
        {"n_modes", s.n_modes},
        {"shift_fraction", s.options.shift_fraction},
        {"residual_tolerance", s.options.residual_tolerance},
        {"max_iterations", s.options.max_iterations},
        {"eps_c", s.helicity.eps_c},
        {"eps_l", s.helicity.eps_l}}},
      {"device", dev},
      {"dynamics",
       {{"eta_p", y.eta_p},
        {"kappa_h", y.kappa_h},
        {"kappa_T", y.kappa_T},
        {"hyperfine", {{"kappa0", y.hyperfine.kappa0}, {"B_c", y.hyperfine.B_c}}},
        {"absorption_per_flux", y.pump.absorption_per_flux},
        {"charging", y.pump.charging},
        {"nr_pump", y.pump.nr_pump},
        {"power", y.power},
        {"readout_nr_pump", y.readout_nr_pump},
        {"B_on_T", y.B_on_T}}},
      {"spectra",
       {{"fwhm_ueV", sp.synth.fwhm_ueV},
        {"background", sp.synth.background},
        {"exposure_ns", sp.synth.exposure_ns},
        {"span_ueV", sp.synth.span_ueV},
        {"n_samples", sp.synth.n_samples},
        {"noise", sp.noise}}},
      {"raster",
       {{"x_min_um", r.grid.x_min_um},
        {"x_max_um", r.grid.x_max_um},
        {"y_min_um", r.grid.y_min_um},
        {"y_max_um", r.grid.y_max_um},
        {"pitch_um", r.grid.pitch_um},
        {"spot_radius_um", r.grid.spot_radius_um},
        {"grating_visibility", r.grating.visibility},
        {"grating_axis_deg", r.grating.axis_deg},
        {"disk_radius_um", r.disk_radius_um},
        {"polarizations", r.polarizations}}},
      {"g2", {{"tau_min_ns", c.g2.tau_min_ns}, {"tau_max_ns", c.g2.tau_max_ns}, {"n_tau", c.g2.n_tau}}}};
}

std::string canonical_text(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(cfg))));
  return buf;
}

}  // namespace chiralwg
