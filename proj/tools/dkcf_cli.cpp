// Command-line front end: run, sweep, compare, validate.

#include "dkcf/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kNumerical = 2 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> mode;
};

dkcf::ExperimentConfig load_with_overrides(const std::string& path, const Overrides& o) {
  dkcf::ExperimentConfig cfg = dkcf::load_config(path);
  if (o.seed) cfg.world.rng_seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.mode) {
    auto m = dkcf::parse_consensus_mode(*o.mode);
    if (!m) throw dkcf::ValidationError({fmt::format("--mode: '{}' is not standard|adaptive", *o.mode)});
    cfg.consensus.mode = *m;
    if (cfg.sweep) cfg.sweep->modes = {*m};
  }
  return cfg;
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Override world.rng_seed");
  cmd->add_option("--output-dir", o.output_dir, "Override output_dir");
  cmd->add_option("--mode", o.mode, "Override consensus mode")->check(CLI::IsMember({"standard", "adaptive"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-robot tracking with Kalman-consensus fusion"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  auto* run = app.add_subcommand("run", "Run one simulation");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  add_overrides(run, overrides);

  auto* sweep = app.add_subcommand("sweep", "Run the Monte Carlo grid of a config");
  sweep->add_option("config", config_path, "Experiment config (JSON)")->required();
  add_overrides(sweep, overrides);
  bool serial = false;
  sweep->add_flag("--serial", serial, "Run grid points one after another");

  std::string report_a, report_b;
  auto* compare = app.add_subcommand("compare", "Mean MOTA deltas B - A between two reports");
  compare->add_option("report_a", report_a)->required();
  compare->add_option("report_b", report_b)->required();

  auto* validate = app.add_subcommand("validate", "Check a config and list every problem");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*validate) {
      dkcf::load_config(config_path);
      fmt::print("{}: ok\n", config_path);
      return kOk;
    }
    if (*run) {
      const auto cfg = load_with_overrides(config_path, overrides);
      dkcf::RunOptions opts;
      opts.output_dir = cfg.output_dir;
      const auto report = dkcf::run_experiment(cfg, opts);
      fmt::print("{}", dkcf::render_report_table(dkcf::run_report_json(report)));
      fmt::print("wrote {}\n", cfg.output_dir);
      return kOk;
    }
    if (*sweep) {
      const auto cfg = load_with_overrides(config_path, overrides);
      if (!cfg.sweep) throw dkcf::ValidationError({"sweep: section required for the sweep command"});
      const auto result = dkcf::run_sweep(cfg, serial ? dkcf::SweepExecution::serial : dkcf::SweepExecution::parallel,
                                          std::filesystem::path(cfg.output_dir));
      fmt::print("{}", dkcf::render_report_table(dkcf::sweep_report_json(result)));
      fmt::print("{} runs, wrote {}\n", result.runs.size(), cfg.output_dir);
      return kOk;
    }
    if (*compare) {
      const auto rows = dkcf::compare_reports(dkcf::read_json_file(report_a), dkcf::read_json_file(report_b));
      fmt::print("{}", dkcf::render_delta_table(rows));
      return kOk;
    }
  } catch (const dkcf::ValidationError& e) {
    fmt::print(stderr, "validation failed:\n");
    for (const auto& issue : e.issues()) fmt::print(stderr, "  {}\n", issue);
    return kValidation;
  } catch (const dkcf::NumericalError& e) {
    fmt::print(stderr, "numerical error: {}\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    // Structural mismatches in compare and I/O failures.
    fmt::print(stderr, "error: {}\n", e.what());
    return kValidation;
  }
  return kOk;
}
