#pragma once

#include <string>
#include <vector>

#include "chiralwg/config.hpp"
#include "json.hpp"

namespace chiralwg {

// Verbosity from CHIRALWG_LOG: quiet, info (default) or debug.
enum class LogLevel { quiet = 0, info = 1, debug = 2 };
LogLevel log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

void ensure_dir(const std::string& dir);  // IoError on failure
std::string join_path(const std::string& dir, const std::string& name);
void write_json(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json(const std::string& path);  // ParseError / IoError

nlohmann::json to_json(const DeviceModel& device);  // D, split rates, S3 at emitter
nlohmann::json to_json(const FluxReport& flux);
nlohmann::json to_json(const ContrastResult& c);
nlohmann::json to_json(const PeakSet& peaks);
nlohmann::json to_json(const RasterMap& map);  // metadata only

void write_g2_csv(const std::vector<double>& tau_ns, const std::vector<double>& g2, const std::string& path);

// Run manifest; the only output that carries a timestamp.
nlohmann::json make_manifest(const ExperimentConfig& cfg, const std::string& command, const std::string& scenario,
                             const std::vector<std::string>& files);

}  // namespace chiralwg
