#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "nngpldp/experiment.hpp"

namespace {

// flags > config file > defaults
void apply_overrides(nlohmann::json& cfg, bool has_seed, std::uint64_t seed,
                     const std::string& out, int workers) {
  if (has_seed) {
    if (!cfg.contains("seed") || !cfg["seed"].is_object()) cfg["seed"] = nlohmann::json::object();
    cfg["seed"]["master"] = seed;
  }
  if (!out.empty()) cfg["out"] = out;
  if (workers > 0) cfg["workers"] = workers;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nngp-ldp: wide-network covariance chains, large-deviation rates, diagnostics"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int workers = 0;

  CLI::App* run = app.add_subcommand("run", "run an experiment config and write artifacts");
  run->add_option("config", config_path, "path to a JSON experiment config")->required();
  run->add_option("--seed", seed, "override the master seed")->each([&](const std::string&) {
    has_seed = true;
  });
  run->add_option("--out", out_dir, "override the output directory");
  run->add_option("--workers", workers, "worker count (default: NNGP_LDP_WORKERS or 1)");

  CLI::App* validate = app.add_subcommand("validate", "validate a config without running it");
  validate->add_option("config", config_path, "path to a JSON experiment config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  nlohmann::json cfg;
  try {
    cfg = nngpldp::load_config_file(config_path);
    if (!cfg.is_object()) throw nngpldp::config_error("config", "top level must be a JSON object");
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  apply_overrides(cfg, has_seed, seed, out_dir, workers);

  try {
    if (validate->parsed()) {
      nngpldp::parse_experiment(cfg);
      std::cout << "ok: " << config_path << " (kind="
                << cfg.value("kind", std::string("?")) << ")\n";
      return 0;
    }

    const nngpldp::RunResult res = nngpldp::run_experiment(cfg);
    std::cout << res.summary;
    std::cout << "artifacts in " << res.out_dir << ":\n";
    for (const std::string& a : res.artifacts) std::cout << "  " << a << "\n";
    std::cout << "  manifest.json\n";
    return 0;
  } catch (const nngpldp::config_error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
