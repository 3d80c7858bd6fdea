#include "chiralwg/io.hpp"

#include <Eigen/Core>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "chiralwg/errors.hpp"

namespace chiralwg {

using nlohmann::json;

LogLevel log_level() {
  const char* v = std::getenv("CHIRALWG_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::quiet;
  if (s == "debug" || s == "2") return LogLevel::debug;
  return LogLevel::info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[chiralwg] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[chiralwg:debug] " << msg << "\n";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_json(const json& j, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed for " + path);
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

json to_json(const DeviceModel& d) {
  auto rates = [&d](int s) {
    const SplitRates r = split_rates(d, s);
    return json{{"left", r.left}, {"right", r.right}, {"loss", r.loss}};
  };
  return json{{"s3_at_emitter", d.s3_at_emitter},
              {"emitter", {{"y_nm", d.emitter.y_nm}, {"z_nm", d.emitter.z_nm}, {"beta", d.emitter.beta},
                           {"gamma_rad", d.emitter.gamma_rad}}},
              {"directionality", {{"sigma_plus", directionality(d, +1)}, {"sigma_minus", directionality(d, -1)}}},
              {"split_rates", {{"sigma_plus", rates(+1)}, {"sigma_minus", rates(-1)}}},
              {"couplers",
               {{"left", {{"in_efficiency", d.couplers.left.in_efficiency},
                          {"out_efficiency", d.couplers.left.out_efficiency},
                          {"reflectivity", d.couplers.left.reflectivity}}},
                {"right", {{"in_efficiency", d.couplers.right.in_efficiency},
                           {"out_efficiency", d.couplers.right.out_efficiency},
                           {"reflectivity", d.couplers.right.reflectivity}}}}}};
}

json to_json(const FluxReport& f) {
  auto pair = [](const std::array<double, 2>& v) { return json{{"sigma_plus", v[0]}, {"sigma_minus", v[1]}}; };
  return json{{"detected", {{"left", pair(f.detected[0])}, {"right", pair(f.detected[1])}}},
              {"guided", {{"left", pair(f.guided[0])}, {"right", pair(f.guided[1])}}},
              {"loss", f.loss}};
}

json to_json(const ContrastResult& c) {
  return json{{"kind", to_string(c.kind)}, {"side", to_string(c.detection)}, {"value", c.value},
              {"sigma", c.uncertainty}};
}

json to_json(const PeakSet& ps) {
  json peaks = json::array();
  for (const auto& p : ps.peaks)
    peaks.push_back({{"label", p.label}, {"center_ueV", p.center}, {"sigma_ueV", p.sigma},
                     {"amplitude", p.amplitude}, {"intensity", p.intensity}, {"intensity_sigma", p.intensity_sigma}});
  return json{{"peaks", peaks}, {"collapsed", ps.collapsed}, {"reduced_chi2", ps.reduced_chi2}};
}

json to_json(const RasterMap& m) {
  double peak = 0.0;
  for (double v : m.intensity) peak = std::max(peak, v);
  return json{{"nx", m.nx},
              {"ny", m.ny},
              {"x_um", {m.x_um.front(), m.x_um.back()}},
              {"y_um", {m.y_um.front(), m.y_um.back()}},
              {"detection_side", to_string(m.detection)},
              {"laser_polarization", m.polarization},
              {"B_T", m.B_T},
              {"max_intensity", peak},
              {"units", "detected photons per ns"}};
}

void write_g2_csv(const std::vector<double>& tau_ns, const std::vector<double>& g2, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  char buf[96];
  f << "tau_ns,g2\n";
  for (std::size_t i = 0; i < tau_ns.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", tau_ns[i], g2[i]);
    f << buf;
  }
  if (!f) throw IoError("write failed for " + path);
}

json make_manifest(const ExperimentConfig& cfg, const std::string& command, const std::string& scenario,
                   const std::vector<std::string>& files) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char ts[32];
  std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", &tm);
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION;
  return json{{"tool", "chiralwg"},
              {"version", CHIRALWG_VERSION},
              {"command", command},
              {"scenario", scenario},
              {"config_hash", config_hash(cfg)},
              {"seed", cfg.seed},
              {"versions", {{"eigen", eigen.str()}, {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
              {"timestamp_utc", ts},
              {"files", files},
              {"config", to_json(cfg)}};
}

}  // namespace chiralwg
