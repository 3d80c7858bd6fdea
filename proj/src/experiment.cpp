#include "chiralwg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>

#include "chiralwg/errors.hpp"
#include "chiralwg/io.hpp"

namespace chiralwg {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Per-panel noise seed derived from the single config seed.
std::uint64_t panel_seed(std::uint64_t seed, const std::string& tag) { return splitmix64(seed ^ fnv1a64(tag)); }

bool in_core(const CrossSection& cs, double y, double z) {
  return std::abs(y) <= 0.5 * cs.core_width_nm && std::abs(z) <= 0.5 * cs.core_height_nm;
}

double side_contrast(double a, double b) {
  if (a + b == 0.0) throw ZeroDenominator("model contrast denominator is zero");
  return (a - b) / (a + b);
}

Intensity peak_value(const Peak* p) {
  if (!p) return {};
  return {std::max(p->intensity, 0.0), p->intensity_sigma};
}

// (sigma+, sigma-) intensities of one fitted spectrum; a merged line is all
// booked as sigma+, which only matters for the readout split.
std::array<Intensity, 2> doublet(const PeakSet& ps) {
  if (ps.peaks.size() == 1) return {Intensity{std::max(ps.peaks[0].intensity, 0.0), ps.peaks[0].intensity_sigma}, Intensity{}};
  return {peak_value(ps.find("sigma_plus")), peak_value(ps.find("sigma_minus"))};
}

std::string panel_stem(const std::string& scenario, const Panel& p) {
  return "spectrum_" + scenario + "_exc-" + p.excitation + "_det-" + to_string(p.detection);
}

std::string s3_sign_label(int s) { return s > 0 ? "positive" : "negative"; }

void require_for(const ExperimentConfig& cfg, std::vector<std::string> extra) {
  if (!cfg.device.s3_override) {
    extra.push_back("cross_section");
    extra.push_back("solver");
  }
  cfg.require_blocks(extra);
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"readout", "init_1T", "init_0T", "nonchiral", "g2", "raster"};
  return names;
}

const SolvedWaveguide& solve_waveguide(const ExperimentConfig& cfg) {
  static std::map<std::string, std::unique_ptr<SolvedWaveguide>> cache;
  const json j = to_json(cfg);
  const std::string key = j["cross_section"].dump() + j["solver"].dump();
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;
  auto wg = std::make_unique<SolvedWaveguide>();
  log_info("solving guided modes");
  wg->modes = solve_modes(cfg.cross_section, cfg.solver.wavelength_nm, cfg.solver.n_modes, cfg.solver.options);
  wg->fundamental = longitudinal_field(wg->modes.front());
  wg->helicity = helicity_map(wg->fundamental, cfg.solver.helicity);
  return *cache.emplace(key, std::move(wg)).first->second;
}

CPoint emitter_cpoint(const SolvedWaveguide& wg, const CrossSection& cs, int sign) {
  const CPoint* best = nullptr;
  for (const auto& c : wg.helicity.c_points) {
    if (!in_core(cs, c.y_nm, c.z_nm) || (c.s3 > 0) != (sign > 0)) continue;
    if (!best || c.abs_peak > best->abs_peak || (c.abs_peak == best->abs_peak && std::abs(c.y_nm) < std::abs(best->y_nm)))
      best = &c;
  }
  if (!best) throw DegenerateField("no C-point with " + s3_sign_label(sign) + " S3 inside the core");
  return *best;
}

DeviceModel build_device(const ExperimentConfig& cfg, DeviceVariant variant) {
  const DeviceConfig& dc = cfg.device;
  EmitterSpec e = dc.emitter;
  CouplerPair cp = dc.couplers;
  Placement placement = dc.placement;
  if (variant == DeviceVariant::nonchiral) {
    cp = CouplerPair::symmetric(dc.coupler_separation_um);
    for (GratingCoupler* c : {&cp.left, &cp.right}) {
      c->in_efficiency = dc.couplers.left.in_efficiency;
      c->out_efficiency = dc.couplers.left.out_efficiency;
      c->y_um = dc.couplers.left.y_um;
    }
    placement = Placement::at_lpoint;
  }
  if (dc.s3_override) {
    if (placement == Placement::at_lpoint) {
      e.y_nm = 0.0;
      e.z_nm = 0.0;
    }
    return make_device(placement == Placement::at_lpoint ? 0.0 : *dc.s3_override, e, cp);
  }
  const SolvedWaveguide& wg = solve_waveguide(cfg);
  switch (placement) {
    case Placement::at_cpoint: {
      const CPoint c = emitter_cpoint(wg, cfg.cross_section, dc.cpoint_sign);
      e.y_nm = c.y_nm;
      e.z_nm = c.z_nm;
      break;
    }
    case Placement::at_lpoint:
      e.y_nm = 0.0;
      e.z_nm = 0.0;
      break;
    case Placement::explicit_position:
      break;
  }
  return make_device(wg.fundamental, e, cp);
}

SpinNoise noise_at(const DynamicsConfig& dyn, double B_T) {
  return SpinNoise{dyn.kappa_h, dyn.kappa_T + dyn.hyperfine.kappa_T(B_T)};
}

ZeemanParams zeeman_at(const ExperimentConfig& cfg, double B_T) { return ZeemanParams{B_T, cfg.device.emitter.g_factor}; }

FluxReport qr_flux(const ExperimentConfig& cfg, const DeviceModel& device, Side excitation, double B_T) {
  const auto& dyn = cfg.dynamics;
  Excitation exc;
  exc.side = excitation;
  exc.power = dyn.power;
  const RateModel rm = build_rate_model(device, exc, zeeman_at(cfg, B_T), noise_at(dyn, B_T), dyn.eta_p, dyn.pump);
  return steady_state(rm).flux;
}

FluxReport nr_flux(const ExperimentConfig& cfg, const DeviceModel& device, double B_T) {
  const auto& dyn = cfg.dynamics;
  PumpSettings pump = dyn.pump;
  pump.nr_pump = dyn.readout_nr_pump;
  const RateModel rm =
      build_rate_model(device, DirectionalFlux{}, zeeman_at(cfg, B_T), noise_at(dyn, B_T), dyn.eta_p, pump);
  return steady_state(rm).flux;
}

std::array<double, 2> model_init_contrast(const ExperimentConfig& cfg, const DeviceModel& device, double B_T) {
  const FluxReport from_l = qr_flux(cfg, device, Side::left, B_T);
  const FluxReport from_r = qr_flux(cfg, device, Side::right, B_T);
  std::array<double, 2> c{};
  for (Side d : {Side::left, Side::right})
    c[d == Side::left ? 0 : 1] = side_contrast(from_r.side_total(d), from_l.side_total(d));
  return c;
}

std::array<double, 2> model_readout_contrast(const ExperimentConfig& cfg, const DeviceModel& device, double B_T) {
  const FluxReport f = nr_flux(cfg, device, B_T);
  std::array<double, 2> c{};
  for (Side d : {Side::left, Side::right})
    c[d == Side::left ? 0 : 1] = side_contrast(f.at(d, Handedness::sigma_plus), f.at(d, Handedness::sigma_minus));
  return c;
}

PeakSet analyse_spectrum(const Spectrum& raw, double fwhm_guess_ueV) {
  const Spectrum s = subtract_background(raw);
  const double split = ZeemanParams{s.meta.B_T, s.meta.g_factor}.splitting_ueV();
  const double sigma = fwhm_to_sigma(fwhm_guess_ueV);
  auto height_at = [&s](double e) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
      if (std::abs(s.energy_ueV[i] - e) < std::abs(s.energy_ueV[best] - e)) best = i;
    return std::max(s.intensity[best], 0.0);
  };
  if (split > 0.0) {
    std::vector<PeakGuess> g{{-0.5 * split, sigma, height_at(-0.5 * split)}, {0.5 * split, sigma, height_at(0.5 * split)}};
    return fit_peaks(s, 2, g);
  }
  std::vector<PeakGuess> g{{0.0, sigma, height_at(0.0)}};
  return fit_peaks(s, 1, g);
}

std::array<ContrastResult, 2> init_contrast_from_panels(const std::vector<Panel>& panels) {
  std::map<std::pair<std::string, std::string>, const Panel*> cells;
  for (const auto& p : panels) cells[{p.excitation, to_string(p.detection)}] = &p;
  std::string missing;
  for (const char* exc : {"left", "right"})
    for (const char* det : {"left", "right"})
      if (!cells.count({exc, det}))
        missing += std::string(missing.empty() ? "" : ", ") + "(excitation=" + exc + ", detection=" + det + ")";
  if (!missing.empty()) throw SchemaError("initialization set is incomplete; missing " + missing);
  std::array<ContrastResult, 2> out;
  for (Side d : {Side::left, Side::right}) {
    const auto il = doublet(cells[{"left", to_string(d)}]->peaks);
    const auto ir = doublet(cells[{"right", to_string(d)}]->peaks);
    out[d == Side::left ? 0 : 1] = init_contrast(il, ir, d);
  }
  return out;
}

namespace {

SynthOptions synth_for(const ExperimentConfig& cfg, const std::string& tag) {
  SynthOptions o = cfg.spectra.synth;
  if (cfg.spectra.noise) o.noise_seed = panel_seed(cfg.seed, tag);
  return o;
}

Panel make_panel(const ExperimentConfig& cfg, const std::string& excitation, Side detection, const FluxReport& flux,
                 double B_T, const std::string& tag) {
  Panel p;
  p.excitation = excitation;
  p.detection = detection;
  p.flux = flux;
  p.spectrum = synth_spectrum(flux, detection, zeeman_at(cfg, B_T), synth_for(cfg, tag + "/" + excitation + "/" + to_string(detection)));
  p.spectrum.meta.excitation_side = excitation;
  p.spectrum.meta.polarization = excitation == "nr" ? "none" : "sigma_minus";
  p.peaks = analyse_spectrum(p.spectrum, cfg.spectra.synth.fwhm_ueV);
  return p;
}

}  // namespace

InitResult run_init(const ExperimentConfig& cfg, const DeviceModel& device, double B_T) {
  InitResult r;
  r.B_T = B_T;
  std::ostringstream tag;
  tag << "init/" << B_T << "/" << device.s3_at_emitter;
  const FluxReport from_l = qr_flux(cfg, device, Side::left, B_T);
  const FluxReport from_r = qr_flux(cfg, device, Side::right, B_T);
  for (Side d : {Side::left, Side::right}) {
    r.panels.push_back(make_panel(cfg, "left", d, from_l, B_T, tag.str()));
    r.panels.push_back(make_panel(cfg, "right", d, from_r, B_T, tag.str()));
  }
  r.pipeline = init_contrast_from_panels(r.panels);
  r.model = model_init_contrast(cfg, device, B_T);
  return r;
}

ReadoutResult run_readout(const ExperimentConfig& cfg, const DeviceModel& device, double B_T) {
  ReadoutResult r;
  r.B_T = B_T;
  const FluxReport f = nr_flux(cfg, device, B_T);
  for (Side d : {Side::left, Side::right}) {
    r.panels.push_back(make_panel(cfg, "nr", d, f, B_T, "readout"));
    r.pipeline[d == Side::left ? 0 : 1] = readout_contrast(r.panels.back().peaks, d);
  }
  r.model = model_readout_contrast(cfg, device, B_T);
  return r;
}

DynamicsSetup raster_dynamics(const ExperimentConfig& cfg, double B_T) {
  DynamicsSetup d;
  d.zeeman = zeeman_at(cfg, B_T);
  d.noise = noise_at(cfg.dynamics, B_T);
  d.eta_p = cfg.dynamics.eta_p;
  d.pump = cfg.dynamics.pump;
  d.power = cfg.dynamics.power;
  return d;
}

std::vector<G2Curve> run_g2(const ExperimentConfig& cfg, const DeviceModel& device, double B_T) {
  const auto& dyn = cfg.dynamics;
  Excitation exc;
  exc.side = Side::right;
  exc.power = dyn.power;
  const RateModel rm = build_rate_model(device, exc, zeeman_at(cfg, B_T), noise_at(dyn, B_T), dyn.eta_p, dyn.pump);
  const FluxReport f = steady_state(rm).flux;
  const std::vector<double> tau = cfg.g2.grid();
  std::vector<G2Curve> out;
  for (Side s : {Side::left, Side::right})
    for (Handedness h : {Handedness::sigma_plus, Handedness::sigma_minus}) {
      if (!(f.at(s, h) > 0.0)) continue;
      G2Curve c;
      c.channel = {s, h};
      c.flux = f.at(s, h);
      c.tau_ns = tau;
      c.g2 = g2(rm, c.channel, tau);
      out.push_back(std::move(c));
    }
  if (out.empty()) throw ZeroFluxChannel("no detection channel carries flux");
  return out;
}

double calibrate_kappa0(const ExperimentConfig& cfg, const DeviceModel& device, double drop) {
  const double target = 1.0 - drop;
  auto ratio = [&](double k0) {
    ExperimentConfig c = cfg;
    c.dynamics.hyperfine.kappa0 = k0;
    const auto on = model_init_contrast(c, device, cfg.dynamics.B_on_T);
    const auto off = model_init_contrast(c, device, 0.0);
    return (std::abs(off[0]) + std::abs(off[1])) / (std::abs(on[0]) + std::abs(on[1]));
  };
  double lo = 0.0;
  double hi = 1e-3;
  while (ratio(hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw FitDiverged("kappa0 calibration found no bracket");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ratio(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------- commands

json cmd_solve(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.require_blocks({"cross_section", "solver"});
  ensure_dir(out_dir);
  const SolvedWaveguide& wg = solve_waveguide(cfg);
  const GuidedMode& m = wg.fundamental;
  const HelicityMap& h = wg.helicity;
  std::vector<std::string> files{"solve.json", "mode_fields.csv", "helicity.csv", "helicity.pgm"};
  write_mode_csv(m, join_path(out_dir, "mode_fields.csv"));
  write_helicity_csv(h, join_path(out_dir, "helicity.csv"));
  write_helicity_pgm(h, join_path(out_dir, "helicity.pgm"));

  json modes = json::array();
  for (const auto& g : wg.modes)
    modes.push_back({{"n_eff", g.n_eff}, {"ey_fraction", g.ey_fraction()}, {"eigen_residual", g.eigen_residual}});
  double max_ex = 0.0, max_re = 0.0, max_s3 = 0.0, max_s3_core = 0.0, antisym = 0.0;
  for (const auto& v : m.ex.data()) {
    max_ex = std::max(max_ex, std::abs(v));
    max_re = std::max(max_re, std::abs(v.real()));
  }
  const int nyn = static_cast<int>(h.y_nm.size());
  for (int i = 0; i < nyn; ++i)
    for (int j = 0; j < static_cast<int>(h.z_nm.size()); ++j) {
      max_s3 = std::max(max_s3, std::abs(h.s3(i, j)));
      if (in_core(cfg.cross_section, h.y_nm[i], h.z_nm[j])) max_s3_core = std::max(max_s3_core, std::abs(h.s3(i, j)));
      antisym = std::max(antisym, std::abs(h.s3(i, j) + h.s3(nyn - 1 - i, j)));
    }
  json cps = json::array();
  for (const auto& c : h.c_points)
    cps.push_back({{"y_nm", c.y_nm}, {"z_nm", c.z_nm}, {"s3", c.s3}, {"in_core", in_core(cfg.cross_section, c.y_nm, c.z_nm)}});
  json summary{{"wavelength_nm", cfg.solver.wavelength_nm},
               {"n_guided", modes.size()},
               {"modes", modes},
               {"gauge_note", m.gauge_note},
               {"plane_z_nm", h.z_nm[h.plane_row]},
               {"max_abs_s3", max_s3},
               {"max_abs_s3_in_core", max_s3_core},
               {"s3_antisymmetry_residual", antisym},
               {"re_ex_over_max_ex", max_ex > 0.0 ? max_re / max_ex : 0.0},
               {"c_points", cps}};
  try {
    const CPoint c = emitter_cpoint(wg, cfg.cross_section, +1);
    summary["y_c_nm"] = c.y_nm;
    summary["s3_at_y_c"] = c.s3;
  } catch (const DegenerateField&) {
    summary["y_c_nm"] = nullptr;
  }
  write_json(summary, join_path(out_dir, "solve.json"));
  write_json(make_manifest(cfg, "solve", "", files), join_path(out_dir, "manifest.json"));
  return summary;
}

namespace {

json panels_json(const std::vector<Panel>& panels, const std::string& scenario, const std::string& out_dir,
                 std::vector<std::string>& files) {
  json arr = json::array();
  for (const auto& p : panels) {
    const std::string name = panel_stem(scenario, p) + ".csv";
    write_spectrum_csv(p.spectrum, join_path(out_dir, name));
    files.push_back(name);
    arr.push_back({{"excitation", p.excitation}, {"detection", to_string(p.detection)}, {"file", name},
                   {"flux", to_json(p.flux)}, {"fit", to_json(p.peaks)}});
  }
  return arr;
}

json raster_results(const ExperimentConfig& cfg, const DeviceModel& device, const std::string& out_dir,
                    std::vector<std::string>& files) {
  const double B = cfg.dynamics.B_on_T;
  const DynamicsSetup dyn = raster_dynamics(cfg, B);
  const DeviceModel nonchiral = build_device(cfg, DeviceVariant::nonchiral);
  json res{{"B_T", B}};
  auto save = [&](const RasterMap& m, const std::string& stem) {
    write_map_csv(m, join_path(out_dir, stem + ".csv"));
    write_map_pgm(m, join_path(out_dir, stem + ".pgm"));
    write_json(to_json(m), join_path(out_dir, stem + ".json"));
    files.insert(files.end(), {stem + ".csv", stem + ".pgm", stem + ".json"});
  };
  for (Side d : {Side::left, Side::right}) {
    const std::string ds = to_string(d);
    std::vector<RasterMap> maps;
    for (const auto& pol : cfg.raster.polarizations) {
      ScanGrid g = cfg.raster.grid;
      g.polarization = polarization_from_string(pol);
      maps.push_back(simulate_map(g, device, dyn, d, cfg.raster.grating));
      save(maps.back(), "map_det-" + ds + "_pol-" + g.polarization.label());
    }
    const RasterMap& ref = maps.front();
    const double same = disk_integral(ref, device.couplers.at(d).x_um, device.couplers.at(d).y_um, cfg.raster.disk_radius_um);
    const double cross = disk_integral(ref, device.couplers.at(opposite(d)).x_um, device.couplers.at(opposite(d)).y_um,
                                       cfg.raster.disk_radius_um);
    json prop = json::array();
    for (std::size_t k = 1; k < maps.size(); ++k) {
      double sa = 0.0, sb = 0.0, dev = 0.0;
      for (std::size_t i = 0; i < ref.intensity.size(); ++i) {
        sa += ref.intensity[i];
        sb += maps[k].intensity[i];
      }
      const double scale = sb / sa;
      for (std::size_t i = 0; i < ref.intensity.size(); ++i)
        if (ref.intensity[i] > 0.0) dev = std::max(dev, std::abs(maps[k].intensity[i] / (scale * ref.intensity[i]) - 1.0));
      prop.push_back({{"against", maps[k].polarization}, {"scale", scale}, {"max_relative_deviation", dev}});
    }
    ScanGrid g0 = cfg.raster.grid;
    g0.polarization = polarization_from_string(cfg.raster.polarizations.front());
    const RasterMap nc = simulate_map(g0, nonchiral, dyn, d, cfg.raster.grating);
    save(nc, "map_nonchiral_det-" + ds + "_pol-" + g0.polarization.label());
    res[ds] = {{"map_contrast", map_contrast(ref, ref, device.couplers, cfg.raster.disk_radius_um)},
               {"cross_lobe", cross},
               {"same_side_lobe", same},
               {"lobe_ratio", same > 0.0 ? json(cross / same) : json(nullptr)},
               {"proportionality", prop},
               {"nonchiral_map_contrast", map_contrast(nc, nc, nonchiral.couplers, cfg.raster.disk_radius_um)}};
  }
  return res;
}

}  // namespace

json cmd_experiment(const ExperimentConfig& cfg, const std::string& scenario, const std::string& out_dir) {
  const auto& names = scenario_names();
  if (std::find(names.begin(), names.end(), scenario) == names.end())
    throw InvalidConfig("unknown scenario '" + scenario + "'");
  std::vector<std::string> need{"device", "dynamics", "spectra"};
  if (scenario == "raster") need.push_back("raster");
  if (scenario == "g2") need.push_back("g2");
  require_for(cfg, need);
  if (scenario == "g2") return cmd_g2(cfg, out_dir);
  ensure_dir(out_dir);

  std::vector<std::string> files{"results.json"};
  json res{{"scenario", scenario}};
  const DeviceModel device = build_device(cfg, scenario == "nonchiral" ? DeviceVariant::nonchiral : DeviceVariant::as_configured);
  res["device"] = to_json(device);
  const double B_on = cfg.dynamics.B_on_T;
  json contrasts = json::array();
  if (scenario == "readout") {
    const ReadoutResult r = run_readout(cfg, device, B_on);
    res["B_T"] = B_on;
    res["panels"] = panels_json(r.panels, scenario, out_dir, files);
    for (const auto& c : r.pipeline) contrasts.push_back(to_json(c));
    res["model_contrast"] = {{"left", r.model[0]}, {"right", r.model[1]}};
  } else if (scenario == "raster") {
    res["raster"] = raster_results(cfg, device, out_dir, files);
    const auto m = model_init_contrast(cfg, device, B_on);
    res["model_contrast"] = {{"left", m[0]}, {"right", m[1]}};
  } else {
    const double B = scenario == "init_0T" ? 0.0 : B_on;
    const InitResult r = run_init(cfg, device, B);
    res["B_T"] = B;
    res["panels"] = panels_json(r.panels, scenario, out_dir, files);
    for (const auto& c : r.pipeline) contrasts.push_back(to_json(c));
    res["model_contrast"] = {{"left", r.model[0]}, {"right", r.model[1]}};
  }
  res["contrasts"] = contrasts;
  write_json(res, join_path(out_dir, "results.json"));
  write_json(make_manifest(cfg, "experiment", scenario, files), join_path(out_dir, "manifest.json"));
  return res;
}

json cmd_g2(const ExperimentConfig& cfg, const std::string& out_dir) {
  require_for(cfg, {"device", "dynamics", "g2"});
  ensure_dir(out_dir);
  const DeviceModel device = build_device(cfg);
  const double B = cfg.dynamics.B_on_T;
  const auto curves = run_g2(cfg, device, B);
  std::vector<std::string> files{"g2.json"};
  json chans = json::array();
  for (const auto& c : curves) {
    const std::string name = "g2_" + to_string(c.channel.side) + "_" + to_string(c.channel.polarization) + ".csv";
    write_g2_csv(c.tau_ns, c.g2, join_path(out_dir, name));
    files.push_back(name);
    chans.push_back({{"side", to_string(c.channel.side)},
                     {"polarization", to_string(c.channel.polarization)},
                     {"flux", c.flux},
                     {"file", name},
                     {"g2_0", c.g2.front()},
                     {"g2_tau_max", c.g2.back()},
                     {"tau_max_ns", c.tau_ns.back()}});
  }
  json res{{"B_T", B}, {"excitation", "right"}, {"channels", chans}};
  write_json(res, join_path(out_dir, "g2.json"));
  write_json(make_manifest(cfg, "g2", "", files), join_path(out_dir, "manifest.json"));
  return res;
}

json cmd_ingest(const std::vector<std::string>& files, const ExperimentConfig& cfg, const std::string& out_dir) {
  if (files.empty()) throw InvalidConfig("ingest needs at least one spectrum file");
  std::vector<Panel> readout, init;
  json per_file = json::array();
  for (const auto& path : files) {
    Panel p;
    p.spectrum = read_spectrum_csv(path);
    p.excitation = p.spectrum.meta.excitation_side;
    try {
      p.detection = side_from_string(p.spectrum.meta.detection_side);
    } catch (const InvalidConfig&) {
      throw SchemaError(path + ": detection_side must be left or right");
    }
    p.peaks = analyse_spectrum(p.spectrum, cfg.spectra.synth.fwhm_ueV);
    per_file.push_back({{"file", path}, {"excitation", p.excitation}, {"detection", to_string(p.detection)},
                        {"B_T", p.spectrum.meta.B_T}, {"fit", to_json(p.peaks)}});
    if (p.excitation == "left" || p.excitation == "right") init.push_back(std::move(p));
    else readout.push_back(std::move(p));
  }
  json contrasts = json::array();
  for (const auto& p : readout) contrasts.push_back(to_json(readout_contrast(p.peaks, p.detection)));
  if (!init.empty())
    for (const auto& c : init_contrast_from_panels(init)) contrasts.push_back(to_json(c));
  json res{{"files", per_file}, {"contrasts", contrasts}};
  ensure_dir(out_dir);
  write_json(res, join_path(out_dir, "ingest.json"));
  write_json(make_manifest(cfg, "ingest", "", {"ingest.json"}), join_path(out_dir, "manifest.json"));
  return res;
}

}  // namespace chiralwg
