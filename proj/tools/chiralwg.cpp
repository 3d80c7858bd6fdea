// chiralwg solve|experiment|ingest|g2 --config <file> [--out <dir>] [--seed <n>] [--scenario <name>]

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chiralwg/errors.hpp"
#include "chiralwg/experiment.hpp"
#include "chiralwg/io.hpp"

namespace {

int exit_code(chiralwg::ErrorKind k) {
  switch (k) {
    case chiralwg::ErrorKind::config: return 2;
    case chiralwg::ErrorKind::numerical: return 3;
    case chiralwg::ErrorKind::io: return 4;
  }
  return 1;
}

void print_contrast_table(const nlohmann::json& res) {
  std::printf("%-16s %-6s %12s %12s\n", "kind", "side", "value", "sigma");
  for (const auto& c : res.at("contrasts"))
    std::printf("%-16s %-6s %12.6f %12.6f\n", c.at("kind").get<std::string>().c_str(),
                c.at("side").get<std::string>().c_str(), c.at("value").get<double>(), c.at("sigma").get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chiral emitter-waveguide simulation toolkit"};
  app.set_version_flag("--version", std::string(CHIRALWG_VERSION));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::string scenario;
  std::vector<std::string> files;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "JSON configuration file");
    if (config_required) opt->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "random seed (overrides seed)");
  };
  auto* solve = app.add_subcommand("solve", "guided modes, E_x and helicity map");
  add_common(solve, true);
  auto* experiment = app.add_subcommand("experiment", "run one measurement scenario");
  add_common(experiment, true);
  experiment->add_option("--scenario", scenario, "readout, init_1T, init_0T, nonchiral, g2 or raster")->required();
  auto* ingest = app.add_subcommand("ingest", "fit spectrum CSV files and compute contrasts");
  add_common(ingest, false);
  ingest->add_option("files", files, "spectrum CSV files")->required();
  auto* g2cmd = app.add_subcommand("g2", "photon correlation curves");
  add_common(g2cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    chiralwg::ExperimentConfig cfg =
        config_path.empty() ? chiralwg::parse_config_text("{}") : chiralwg::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.output_dir = *out_dir;
    nlohmann::json res;
    if (solve->parsed()) {
      res = chiralwg::cmd_solve(cfg, cfg.output_dir);
      std::printf("n_eff = %.10f, guided modes = %zu\n", res["modes"][0]["n_eff"].get<double>(), res["modes"].size());
      if (!res["y_c_nm"].is_null()) std::printf("C-point y_c = %.3f nm, S3 = %.6f\n", res["y_c_nm"].get<double>(), res["s3_at_y_c"].get<double>());
    } else if (experiment->parsed()) {
      res = chiralwg::cmd_experiment(cfg, scenario, cfg.output_dir);
      if (res.contains("contrasts") && !res["contrasts"].empty()) print_contrast_table(res);
      if (res.contains("raster"))
        for (const char* side : {"left", "right"})
          std::printf("det %-5s map contrast %.6f, lobe ratio %s\n", side, res["raster"][side]["map_contrast"].get<double>(),
                      res["raster"][side]["lobe_ratio"].dump().c_str());
      if (res.contains("channels"))
        for (const auto& c : res["channels"])
          std::printf("%-5s %-11s g2(0) = %.3e, g2(tau_max) = %.9f\n", c["side"].get<std::string>().c_str(),
                      c["polarization"].get<std::string>().c_str(), c["g2_0"].get<double>(), c["g2_tau_max"].get<double>());
    } else if (ingest->parsed()) {
      res = chiralwg::cmd_ingest(files, cfg, cfg.output_dir);
      print_contrast_table(res);
    } else if (g2cmd->parsed()) {
      res = chiralwg::cmd_g2(cfg, cfg.output_dir);
      for (const auto& c : res["channels"])
        std::printf("%-5s %-11s g2(0) = %.3e, g2(tau_max) = %.9f\n", c["side"].get<std::string>().c_str(),
                    c["polarization"].get<std::string>().c_str(), c["g2_0"].get<double>(), c["g2_tau_max"].get<double>());
    }
    return 0;
  } catch (const chiralwg::Error& e) {
    std::cerr << "chiralwg: error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "chiralwg: unexpected failure: " << e.what() << "\n";
    return 1;
  }
}
