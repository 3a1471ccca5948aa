// Experiment runner: averaged Adam vs Adam vs SGD.
//
//   avgadam run --preset heat_dkm_desk --seed 1,2 --out results/
//   avgadam run --config my.cfg
//   avgadam list-presets
//   avgadam selftest
//
// Exit codes: 0 success, 1 configuration error, 2 failed runs or checks.

#include "avgadam/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace avgadam::harness;

int run_command(const std::string& config_path, const std::string& preset_name, const std::string& seeds,
                const std::string& out_dir) {
  ExperimentConfig cfg;
  try {
    if (!preset_name.empty()) cfg = preset(preset_name);
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    if (!seeds.empty()) cfg = parse_config("seeds=" + seeds, cfg);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  std::cout << "experiment " << cfg.name << " (" << config_hash(cfg) << "), " << cfg.optimizers.size() * cfg.seeds.size()
            << " trajectories of " << cfg.steps << " steps\n";
  const auto records = run_experiment(cfg);
  const auto written = emit_outputs(cfg, records);

  int failed = 0;
  for (const auto& r : records) {
    if (r.failed) {
      ++failed;
      std::cerr << "run " << r.series() << " seed " << r.seed << " failed: " << r.failure << '\n';
      continue;
    }
    const auto& last = r.rows.back();
    std::cout << "  " << r.series() << " seed " << r.seed << ": final test error raw " << last.test_error_raw
              << ", averaged " << last.test_error_averaged << '\n';
  }
  std::cout << "wrote " << written.size() << " files to " << cfg.out_dir.string() << '\n';
  return failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Averaged Adam experiment runner"};
  app.require_subcommand(1);

  std::string config_path, preset_name, seeds, out_dir;
  auto* run = app.add_subcommand("run", "run an experiment and write CSV/SVG results");
  run->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  run->add_option("--preset", preset_name, "start from a named preset");
  run->add_option("--seed", seeds, "comma-separated seeds, overriding the config");
  run->add_option("--out", out_dir, "output directory, overriding the config");

  auto* list = app.add_subcommand("list-presets", "show the built-in experiment presets");
  auto* selftest = app.add_subcommand("selftest", "run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      if (config_path.empty() && preset_name.empty()) {
        std::cerr << "run needs --config and/or --preset\n";
        return 1;
      }
      return run_command(config_path, preset_name, seeds, out_dir);
    }
    if (*list) {
      for (const auto& p : list_presets()) std::cout << p.name << "\t" << p.description << '\n';
      return 0;
    }
    if (*selftest) {
      bool ok = true;
      for (const auto& r : run_selftest()) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
      }
      return ok ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
