// Batch experiment runner for the dynamic-regularization library.
//
// Subcommands:
//   run <config>           solve the configured problem, write reports/frames
//   oracle-check <config>  run the discrete solver against the direct oracle
//   timing <config> --nt 50,100,200   horizon scaling study
//
// Exit codes: 0 success, 1 configuration error, 2 solver error.

#include "dynreg/discrete.hpp"
#include "dynreg/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace {

using dynreg::harness::ExperimentConfig;

void apply_overrides(ExperimentConfig& config, const std::optional<std::uint64_t>& seed,
                     const std::optional<std::string>& out_dir) {
  if (seed) config.seed = *seed;
  if (out_dir) config.output_dir = *out_dir;
}

int run_command(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                const std::optional<std::string>& out_dir) {
  ExperimentConfig config = dynreg::harness::load_config(config_path);
  apply_overrides(config, seed, out_dir);
  dynreg::harness::RunReport report = dynreg::harness::run_experiment(config);
  std::printf("wrote %s (%zu rows)\n", report.report_csv_path.c_str(), report.rows.size());
  return 0;
}

int oracle_command(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                   const std::optional<std::string>& out_dir) {
  ExperimentConfig config = dynreg::harness::load_config(config_path);
  apply_overrides(config, seed, out_dir);
  config.oracle = true;
  config.method = ExperimentConfig::Method::Discrete;
  dynreg::harness::RunReport report = dynreg::harness::run_experiment(config);

  bool all_ok = true;
  for (const auto& row : report.rows) {
    if (!row.oracle_gap) {
      std::printf("alpha=%g: oracle skipped (system beyond the dense-solve guard)\n", row.alpha);
      continue;
    }
    // agreement of the two characterizations of the same minimizer
    bool ok = *row.oracle_gap <= 1e-6;
    all_ok = all_ok && ok;
    std::printf("alpha=%g: |dp - oracle|_inf = %.3e el_residual = %.3e %s\n", row.alpha,
                *row.oracle_gap, row.el_residual.value_or(0.0), ok ? "ok" : "MISMATCH");
  }
  if (!all_ok) {
    std::fprintf(stderr, "oracle-check: solver and direct oracle disagree\n");
    return 2;
  }
  return 0;
}

int timing_command(const std::string& config_path, const std::string& nt_list,
                   const std::optional<std::uint64_t>& seed,
                   const std::optional<std::string>& out_dir) {
  ExperimentConfig config = dynreg::harness::load_config(config_path);
  apply_overrides(config, seed, out_dir);

  std::vector<int> horizons;
  std::stringstream ss(nt_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      horizons.push_back(std::stoi(item));
    } catch (const std::exception&) {
      dynreg::raise(dynreg::ErrorCode::ConfigError, "--nt: cannot parse '" + item + "'");
    }
  }

  dynreg::harness::TimingTable table = dynreg::harness::timing_scaling_suite(config, horizons);

  std::filesystem::create_directories(config.output_dir);
  std::string path = (std::filesystem::path(config.output_dir) / "timing.csv").string();
  std::ofstream out(path, std::ios::binary);
  out << "# dynreg timing v1\nn_steps,seconds\n";
  for (const auto& row : table.rows) {
    std::printf("n_steps=%-6d %.6f s\n", row.n_steps, row.seconds);
    out << row.n_steps << ',' << row.seconds << '\n';
  }
  out << "# loglog_slope " << table.loglog_slope << '\n';
  std::printf("log-log slope: %.3f\n", table.loglog_slope);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic-regularization experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string nt_list = "50,100,200";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  CLI::App* run = app.add_subcommand("run", "run the configured experiment");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--seed", seed, "override [output] seed");
  run->add_option("--out", out_dir, "override [output] dir");

  CLI::App* oracle = app.add_subcommand("oracle-check", "compare solver against the direct oracle");
  oracle->add_option("config", config_path, "config file")->required();
  oracle->add_option("--seed", seed, "override [output] seed");
  oracle->add_option("--out", out_dir, "override [output] dir");

  CLI::App* timing = app.add_subcommand("timing", "horizon scaling study");
  timing->add_option("config", config_path, "config file")->required();
  timing->add_option("--nt", nt_list, "comma-separated horizon list");
  timing->add_option("--seed", seed, "override [output] seed");
  timing->add_option("--out", out_dir, "override [output] dir");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path, seed, out_dir);
    if (oracle->parsed()) return oracle_command(config_path, seed, out_dir);
    if (timing->parsed()) return timing_command(config_path, nt_list, seed, out_dir);
  } catch (const dynreg::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == dynreg::ErrorCode::ConfigError ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
