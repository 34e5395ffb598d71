#pragma once

#include "dkcf/tracker.hpp"
#include "dkcf/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace dkcf {

enum class ConsensusMode { standard, adaptive };
std::string_view to_string(ConsensusMode mode);
std::optional<ConsensusMode> parse_consensus_mode(std::string_view text);

/// Norm used to damp the standard consensus gain, M / (1 + ||M||).
enum class GainNorm { frobenius, spectral };
std::string_view to_string(GainNorm norm);
std::optional<GainNorm> parse_gain_norm(std::string_view text);

/// What robots exchange: one confirmed track, expressed in the sender's frame.
struct TrackMessage {
  RobotId sender = 0;
  TrackId track_id = 0;
  Vec4 x = Vec4::Zero();
  Mat4 P = Mat4::Identity();
  std::optional<Vec2> z;  ///< measurement associated on sent_tick, if any
  Mat2 R = Mat2::Identity();
  double sigma_loc = 0.0;  ///< sender localization std (m)
  Tick sent_tick = 0;
};

struct InformationPair {
  Vec4 u = Vec4::Zero();
  Mat4 U = Mat4::Zero();
};

/// Planar rigid transform p -> Rot(rotation) p + translation, mapping
/// coordinates of source_frame into target_frame.
struct FrameTransform {
  double rotation = 0.0;
  Vec2 translation = Vec2::Zero();
  RobotId source_frame = 0;
  RobotId target_frame = 0;
  double residual_rms = 0.0;

  static FrameTransform identity(RobotId source, RobotId target) { return {0.0, Vec2::Zero(), source, target, 0.0}; }

  Vec2 apply(const Vec2& p) const;
  /// Rotates velocities, rotates and translates positions.
  Vec4 apply_state(const Vec4& x) const;
  Mat4 apply_covariance(const Mat4& P) const;
  Mat2 apply_measurement_covariance(const Mat2& R) const;
  StateEstimate apply(const StateEstimate& est) const { return {apply_state(est.x), apply_covariance(est.P)}; }
  FrameTransform inverse() const;
  /// Moves a fraction of the way from identity: rotation and translation scaled.
  FrameTransform scaled(double fraction) const;
};

/// outer after inner: p -> outer(inner(p)).
FrameTransform compose(const FrameTransform& outer, const FrameTransform& inner);

struct ConsensusParams {
  ConsensusMode mode = ConsensusMode::adaptive;
  GainNorm norm = GainNorm::frobenius;
  Mat4 A = Mat4::Identity();  ///< covariance propagation; equals the model's F
  Mat4 Q = Mat4::Zero();
  double match_dist_threshold = 1.5;       ///< m, cross-robot identity gate
  double match_velocity_tolerance = 1.0;   ///< m/s, max |v_local - v_remote|
  double mistrack_residual_threshold = 1.0;  ///< m
  int mistrack_patience = 5;                 ///< ticks
  int min_landmarks = 3;
  int alignment_window = 20;  ///< ticks of correspondences kept for alignment
};

/// u = H^T R^-1 z, U = H^T R^-1 H. Throws NumericalError for singular R.
InformationPair information_pair(const Mat24& H, const Vec2& z, const Mat2& R);

/// Sums the local pair and every neighbour pair.
InformationPair aggregate_information(const InformationPair& local, std::span<const InformationPair> neighbors);

/// M = (P+^-1 + Y)^-1. Throws NumericalError (with the condition number) if
/// P+ is not safely invertible.
Mat4 information_gain(const Mat4& P_plus, const Mat4& Y);

double matrix_norm(const Mat4& M, GainNorm norm);

/// Result of one consensus step.
struct ConsensusUpdate {
  /// Fused state and the propagated covariance A M A^T + Q.
  StateEstimate estimate;
  /// Fused posterior covariance M (what the next prediction starts from).
  Mat4 gain = Mat4::Zero();
  Vec4 information_term = Vec4::Zero();
  Vec4 consensus_term = Vec4::Zero();
};

/// Consensus update with the M / (1 + ||M||) gain on the unweighted
/// sum of neighbour disagreements.
ConsensusUpdate dkcf_update_standard(const StateEstimate& local, const InformationPair& aggregated,
                                     std::span<const Vec4> neighbor_states, const ConsensusParams& params);

/// Inverse-sigma weights normalized to one. Sigmas below 1e-9 are clamped to
/// 1e-9; non-positive or non-finite sigmas throw std::invalid_argument.
std::vector<double> adaptive_weights(std::span<const double> sigmas);

/// Consensus update with per-neighbour weights on the disagreement sum.
/// `neighbor_weights` must align with `neighbor_states`.
ConsensusUpdate dkcf_update_adaptive(const StateEstimate& local, const InformationPair& aggregated,
                                     std::span<const Vec4> neighbor_states, std::span<const double> neighbor_weights,
                                     const ConsensusParams& params);

/// sqrt(sigma_loc^2 + tr(P_pos) / 2): localization std combined with the
/// track's own position uncertainty.
double uncertainty_sigma(double sigma_loc, const Mat4& P);

/// One (point in target frame, point in source frame) landmark pair.
struct Correspondence {
  Vec2 target;
  Vec2 source;
};

/// Least-squares rigid transform minimizing sum |Rot p_source + t - p_target|^2.
/// Throws DegenerateGeometryError for fewer than max(2, min_landmarks) pairs or
/// when either point set is coincident.
FrameTransform estimate_frame_alignment(std::span<const Correspondence> correspondences, RobotId source_frame,
                                        RobotId target_frame, int min_landmarks = 2);

/// Minimal view of a track for cross-robot matching.
struct TrackView {
  TrackId id = 0;
  Vec4 x = Vec4::Zero();
};

/// Optimal one-to-one pairing on position distance, gated by
/// match_dist_threshold and by the velocity-difference bound.
std::vector<std::pair<TrackId, TrackId>> match_cross_robot_tracks(std::span<const TrackView> local,
                                                                   std::span<const TrackView> remote_aligned,
                                                                   const ConsensusParams& params);

/// Counts consecutive ticks of excessive consensus residual per track.
class MistrackMonitor {
 public:
  /// Feeds this tick's residuals; returns IDs whose streak reached the patience.
  std::vector<TrackId> observe(const std::map<TrackId, double>& residuals, const ConsensusParams& params);
  int streak(TrackId id) const;
  void forget(TrackId id) { streaks_.erase(id); }

 private:
  std::map<TrackId, int> streaks_;
};

/// Marks tracks flagged by the monitor as dead. Tracks missing from
/// `residuals` count as zero residual this tick.
void mistrack_filter(std::vector<Track>& tracks, const std::map<TrackId, double>& residuals,
                     const ConsensusParams& params, MistrackMonitor& monitor);

}  // namespace dkcf
