#pragma once

#include "dkcf/consensus.hpp"
#include "dkcf/detection.hpp"
#include "dkcf/netsim.hpp"
#include "dkcf/scenario.hpp"
#include "dkcf/tracker.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dkcf {

/// Scalar knobs from which ModelParams is built.
struct ModelSettings {
  double process_noise_intensity = 0.5;  ///< white-noise acceleration intensity
  double measurement_noise_std = 0.1;    ///< m, per axis
  double gate_threshold = 9.21;
  double init_pos_var = 1.0;
  double init_vel_var = 4.0;
  int max_misses = 5;
  int confirm_hits = 3;
};

struct ConsensusSettings {
  ConsensusMode mode = ConsensusMode::adaptive;
  GainNorm norm = GainNorm::frobenius;
  double match_dist_threshold = 1.5;
  double match_velocity_tolerance = 1.0;
  double mistrack_residual_threshold = 1.0;
  int mistrack_patience = 5;
  int min_landmarks = 3;
  int alignment_window = 20;
};

struct EvaluationSettings {
  double match_radius = 1.0;
};

/// Monte Carlo grid. Empty latency/drift lists mean "use the config as is".
struct SweepSpec {
  std::vector<ConsensusMode> modes;
  std::vector<std::uint64_t> seeds;
  std::vector<int> latencies;       ///< overrides base_latency of every link
  std::vector<double> drift_scales;  ///< multiplies every robot's drift stds
};

struct ExperimentConfig {
  WorldConfig world;
  DbscanParams detection;
  ModelSettings model;
  ConsensusSettings consensus;
  std::vector<LinkSpec> links;
  EvaluationSettings evaluation;
  std::optional<SweepSpec> sweep;
  std::string output_dir = "out";
};

ModelParams make_model_params(const ExperimentConfig& config);
/// A = F and Q taken from the tracking model.
ConsensusParams make_consensus_params(const ExperimentConfig& config);

/// Every violated invariant across all sections. Empty if valid.
std::vector<std::string> validate(const ExperimentConfig& config);

/// Strict parse: unknown keys, wrong types and invariant violations are all
/// collected and thrown together as one ValidationError.
ExperimentConfig parse_config(const nlohmann::json& doc);
/// Reads and parses a JSON config file; I/O and syntax errors become
/// ValidationError entries naming the path.
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace dkcf
