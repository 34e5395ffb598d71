#pragma once

#include "dkcf/detection.hpp"
#include "dkcf/types.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace dkcf {

/// Constant-velocity model and track-management parameters.
struct ModelParams {
  double tick_period = 0.1;
  Mat4 F = Mat4::Identity();
  Mat24 H = Mat24::Zero();
  Mat4 Q = Mat4::Zero();
  Mat2 R = Mat2::Identity();
  double gate_threshold = 9.21;  // chi-square, 2 dof, 99 %
  double init_pos_var = 1.0;
  double init_vel_var = 4.0;
  int max_misses = 5;
  int confirm_hits = 3;
};

/// State transition for [x, vx, y, vy] over one sampling period.
Mat4 cv_transition(double tick_period);
/// Picks the two position components out of the state.
Mat24 position_measurement();
/// Per-axis discrete white-noise-acceleration covariance scaled by `intensity`.
Mat4 white_noise_acceleration(double tick_period, double intensity);

/// Builds F, H, Q and R = meas_std^2 I for the given period.
ModelParams make_cv_model(double tick_period, double accel_intensity, double meas_std);

StateEstimate kf_predict(const StateEstimate& est, const ModelParams& model);

/// Kalman update with the Joseph-form covariance. Throws NumericalError if the
/// innovation covariance is singular.
StateEstimate kf_update(const StateEstimate& est, const Vec2& z, const ModelParams& model);

/// Squared Mahalanobis distance of z from the predicted measurement.
double mahalanobis_sq(const StateEstimate& prior, const Vec2& z, const ModelParams& model);

enum class TrackStatus { tentative, confirmed, dead };
std::string_view to_string(TrackStatus status);

struct Track {
  TrackId id = 0;
  StateEstimate estimate;
  int hits = 0;
  int consecutive_misses = 0;
  TrackStatus status = TrackStatus::tentative;
  Tick last_update_tick = 0;
  std::optional<Vec2> last_measurement;  ///< detection associated on last_update_tick
};

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  ///< (track, detection)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

/// Large finite cost that marks a gated-out track/detection pair.
double gate_sentinel(const ModelParams& model);

/// Global-nearest-neighbour association on Mahalanobis cost with gating.
/// Dead tracks are never associated.
Association associate(std::span<const Track> tracks, std::span<const Detection> detections,
                      const ModelParams& model);

/// Issues track IDs namespaced by robot: robot * kTrackIdStride + counter.
class TrackIdAllocator {
 public:
  static constexpr TrackId kTrackIdStride = 1'000'000;
  explicit TrackIdAllocator(RobotId robot) : robot_(robot) {}
  TrackId next() { return static_cast<TrackId>(robot_) * kTrackIdStride + counter_++; }

 private:
  RobotId robot_;
  TrackId counter_ = 0;
};

/// Applies one tick of updates, misses, births and status transitions.
/// Dead tracks stay in the list (marked dead) so callers can log them.
void track_lifecycle_step(std::vector<Track>& tracks, const Association& association,
                          std::span<const Detection> detections, const ModelParams& model, Tick tick,
                          TrackIdAllocator& ids);

/// Called with every covariance the tracker produces.
using CovarianceSink = std::function<void(std::string_view stage, const Mat4& P)>;

/// Per-robot multi-object tracker. Not safe for concurrent mutation.
class LocalTracker {
 public:
  LocalTracker(RobotId robot, ModelParams model);

  /// Predicts every live track one period ahead.
  void predict();
  /// Associates, updates and manages tracks; returns the association used.
  /// Dead tracks are purged before returning.
  Association update(std::span<const Detection> detections, Tick tick);

  RobotId robot() const { return robot_; }
  const ModelParams& model() const { return model_; }
  const std::vector<Track>& tracks() const { return tracks_; }
  std::vector<Track>& mutable_tracks() { return tracks_; }
  /// Removes dead tracks.
  void purge_dead();

  void set_covariance_sink(CovarianceSink sink) { sink_ = std::move(sink); }

 private:
  RobotId robot_;
  ModelParams model_;
  TrackIdAllocator ids_;
  std::vector<Track> tracks_;
  CovarianceSink sink_;
};

}  // namespace dkcf
