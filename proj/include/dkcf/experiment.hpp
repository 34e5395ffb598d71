#pragma once

#include "dkcf/config.hpp"
#include "dkcf/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dkcf {

/// Localization std a robot reports alongside its tracks, grown from its
/// drift spec: sqrt(|b0|^2/2 + s_b^2 t + s_h^2 t (r/2)^2 + floor^2), where r is
/// the lidar range (heading error acts as a lever arm of about r/2).
double localization_sigma(const RobotSpec& robot, Tick tick);

struct RobotResult {
  RobotId robot = 0;
  std::vector<FrameScore> local_frames;
  std::vector<FrameScore> global_frames;
  std::optional<double> mota_local;   ///< empty when no ground truth was scored
  std::optional<double> mota_global;
};

struct LinkResult {
  LinkSpec link;
  LinkCounters counters;
};

struct RunReport {
  ConsensusMode mode = ConsensusMode::adaptive;
  std::uint64_t seed = 0;
  Tick ticks = 0;
  std::optional<int> latency;        ///< set when every link shares one base_latency
  double drift_scale = 1.0;
  std::vector<RobotResult> robots;
  std::vector<LinkResult> links;
  std::size_t in_flight_at_end = 0;
};

struct RunOptions {
  /// When set, CSV logs, the config snapshot and the report are written here.
  std::optional<std::filesystem::path> output_dir;
  /// Receives every covariance matrix the run produces.
  CovarianceSink covariance_sink;
  double drift_scale = 1.0;  ///< recorded in the report only
};

/// Executes one simulation. Throws ValidationError on an invalid config and
/// NumericalError if a filter step breaks down.
RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Applies the overrides a sweep cell makes to a base config.
ExperimentConfig cell_config(const ExperimentConfig& base, ConsensusMode mode, std::uint64_t seed,
                             std::optional<int> latency, std::optional<double> drift_scale);

/// One grid point of a sweep, expanded in mode, latency, drift, seed order.
struct SweepRun {
  ConsensusMode mode = ConsensusMode::adaptive;
  std::uint64_t seed = 0;
  std::optional<int> latency;
  std::optional<double> drift_scale;
  std::string dir_name;
};

std::vector<SweepRun> expand_sweep(const SweepSpec& sweep);

enum class SweepExecution { parallel, serial };

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<RunReport> reports;  ///< aligned with runs
};

/// Runs every grid point. Parallel and serial execution give identical reports.
/// With `output_dir` set, each run writes into its own subdirectory.
SweepResult run_sweep(const ExperimentConfig& config, SweepExecution execution,
                      const std::optional<std::filesystem::path>& output_dir);

// Reports

nlohmann::json run_report_json(const RunReport& report);
/// Groups runs by (mode, latency, drift) and summarizes MOTA per robot and scope.
nlohmann::json sweep_report_json(const SweepResult& result);

/// Aligned-column table: per robot, Local and Global rows for each mode, plus
/// an adaptive-minus-standard delta row when both modes are present.
std::string render_report_table(const nlohmann::json& report);

/// Per-cell mean difference B - A keyed on (latency, drift, robot, scope).
/// Throws std::runtime_error if the two reports do not share that structure.
struct DeltaRow {
  std::optional<int> latency;
  double drift_scale = 1.0;
  RobotId robot = 0;
  std::string scope;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double delta = 0.0;
};

std::vector<DeltaRow> compare_reports(const nlohmann::json& a, const nlohmann::json& b);
nlohmann::json delta_json(const std::vector<DeltaRow>& rows);
std::string render_delta_table(const std::vector<DeltaRow>& rows);

/// Writes `content` to `path`, raising std::runtime_error naming the path on failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace dkcf
