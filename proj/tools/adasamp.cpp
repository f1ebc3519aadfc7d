// Experiment runner: `run`, `tune` and `verify` subcommands.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "adasamp/adasamp.hpp"

namespace {

constexpr int kUsageError = 2;

// --out, then output.dir in the config, then $ADASAMP_OUT, then ./adasamp_out.
std::filesystem::path resolve_output(const std::string& flag, const adasamp::ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("ADASAMP_OUT"); env != nullptr && *env != '\0') return env;
  return "adasamp_out";
}

int cmd_run(const std::string& config_path, const std::string& out_flag, std::size_t threads) {
  const adasamp::ExperimentConfig cfg = adasamp::load_experiment(config_path);
  const auto dir = resolve_output(out_flag, cfg);
  const auto result = adasamp::run_experiment(cfg, {dir, threads, true});
  for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
    const auto [mean, sd] = adasamp::mean_sd(result.final_subopt[a]);
    std::cout << cfg.arms[a].name << ": final suboptimality " << mean << " +- " << sd << " over "
              << cfg.repeats << " repeat(s)\n";
  }
  std::cout << "wrote " << (dir / "summary.csv").string() << '\n';
  return 0;
}

int cmd_tune(const std::string& config_path, const std::string& out_flag, std::size_t threads) {
  const adasamp::ExperimentConfig cfg = adasamp::load_experiment(config_path);
  const auto dir = resolve_output(out_flag, cfg);
  std::filesystem::create_directories(dir);
  std::ofstream table(dir / "tune.csv", std::ios::binary);
  table << "arm,eta,mean_final_loss,diverged\n";
  for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
    const auto res = adasamp::tune_learning_rate(cfg, a, cfg.tune_grid, threads);
    for (const auto& e : res.table)
      table << res.arm << ',' << adasamp::format_number(e.eta) << ','
            << (e.diverged ? std::string("nan") : adasamp::format_number(e.mean_final_loss)) << ','
            << (e.diverged ? 1 : 0) << '\n';
    std::cout << res.arm << ": best eta " << res.best_eta << " (mean final loss " << res.best_loss << ")\n";
  }
  std::cout << "wrote " << (dir / "tune.csv").string() << '\n';
  return 0;
}

int cmd_verify(const std::string& suite, std::optional<std::uint64_t> seed_flag) {
  const std::uint64_t seed = seed_flag.value_or(std::random_device{}());
  std::cout << "seed=" << seed << '\n';
  bool ok = true;
  for (const auto& r : adasamp::verify::run_suite(suite, seed)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " cases=" << r.cases << " worst=" << r.worst;
    if (!r.passed) std::cout << " seed=" << r.seed << " (" << r.detail << ")";
    std::cout << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-reduced stochastic optimization with adaptive sampling"};
  app.require_subcommand(1);

  std::string out_dir;
  std::size_t threads = 1;
  app.add_option("--out", out_dir, "Output directory (default: config output.dir, $ADASAMP_OUT, ./adasamp_out)");
  app.add_option("--threads", threads, "Worker threads for independent runs")->check(CLI::PositiveNumber);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run every arm and repeat of an experiment config");
  run->add_option("config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->fallthrough();

  auto* tune = app.add_subcommand("tune", "Grid-search the learning rate of every arm");
  tune->add_option("config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  tune->fallthrough();

  std::string suite = "all";
  std::optional<std::uint64_t> seed;
  auto* verify = app.add_subcommand("verify", "Run property suites on fresh random instances");
  verify->add_option("suite", suite, "unbiasedness | variance | oracle | projection | all");
  verify->add_option("--seed", seed, "Seed for the random instances");
  verify->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out_dir, threads);
    if (*tune) return cmd_tune(config_path, out_dir, threads);
    if (*verify) {
      const auto& names = adasamp::verify::suite_names();
      if (suite != "all" && std::find(names.begin(), names.end(), suite) == names.end()) {
        std::cerr << "unknown suite '" << suite << "'\n" << verify->help();
        return kUsageError;
      }
      return cmd_verify(suite, seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
