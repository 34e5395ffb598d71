#pragma once

#include "dkcf/rng.hpp"
#include "dkcf/types.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dkcf {

struct Rect {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
  }
  double area() const { return (max - min).prod(); }
};

struct Segment {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
};

struct Circle {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

/// A cylinder shuttling back and forth along a straight path.
struct TargetSpec {
  double radius = 0.3;
  Vec2 start = Vec2::Zero();
  Vec2 heading = Vec2::UnitX();  ///< unit vector, parallel to the path
  double speed = 0.0;
  Segment path;
};

struct LidarSpec {
  int num_beams = 360;
  double fov = 2.0 * 3.14159265358979323846;
  double max_range = 8.0;
  double range_noise_std = 0.0;
};

/// Random-walk localization bias applied to the believed pose.
struct DriftSpec {
  double bias_walk_std = 0.0;     ///< m per sqrt(tick), per axis
  double heading_walk_std = 0.0;  ///< rad per sqrt(tick)
  Vec2 initial_bias = Vec2::Zero();
};

/// Kinematic waypoint follower; the waypoint list is traversed cyclically.
struct RobotSpec {
  std::vector<Vec2> waypoints;
  double speed = 0.0;
  LidarSpec lidar;
  DriftSpec drift;
};

struct WorldConfig {
  Rect arena_bounds;
  std::vector<TargetSpec> targets;
  std::vector<RobotSpec> robots;
  double tick_period = 0.1;
  double duration = 0.0;
  std::uint64_t rng_seed = 0;

  /// round(duration / tick_period).
  Tick num_ticks() const;
  /// Every violated invariant, prefixed with its field path. Empty if valid.
  std::vector<std::string> validate() const;
};

/// Encodes a beam without any return. Never equal to max_range.
inline constexpr double kNoReturn = std::numeric_limits<double>::infinity();

struct ScanBeam {
  double range = kNoReturn;
  double bearing = 0.0;
  bool has_return() const { return range != kNoReturn; }
};

struct WorldSnapshot {
  Tick tick = 0;
  std::vector<Vec2> true_target_positions;
  std::vector<Pose2D> true_robot_poses;
  std::vector<Pose2D> believed_robot_poses;
  std::vector<std::vector<ScanBeam>> scans;
};

/// Distance along the unit ray to the first crossing of the circle, or kNoReturn.
double ray_circle_distance(const Vec2& origin, const Vec2& dir, const Circle& circle);
/// Distance along the unit ray to the segment, or kNoReturn.
double ray_segment_distance(const Vec2& origin, const Vec2& dir, const Segment& seg);

/// Bearing of beam k relative to the sensor heading.
double beam_bearing(const LidarSpec& spec, int k);

/// Ray-casts one scan. Noise is drawn only for beams with a return.
std::vector<ScanBeam> cast_scan(const Pose2D& pose, const LidarSpec& spec,
                                std::span<const Circle> circles, std::span<const Segment> walls,
                                Rng& rng);

std::vector<Segment> arena_walls(const Rect& arena);

/// Position of a target as an arc-length along its path plus travel direction.
struct TargetState {
  double s = 0.0;          ///< distance from path.a
  double direction = 1.0;  ///< +1 towards path.b, -1 towards path.a
};

TargetState initial_target_state(const TargetSpec& spec);
Vec2 target_position(const TargetSpec& spec, const TargetState& state);
Vec2 target_heading(const TargetSpec& spec, const TargetState& state);
/// Moves `distance` along the path, folding any overshoot back at the endpoints.
TargetState advance_on_path(const TargetSpec& spec, TargetState state, double distance);

/// Believed pose: true position plus bias, true heading plus heading bias.
Pose2D compose_drift(const Pose2D& truth, const Vec2& bias, double heading_bias);

/// Ground-truth world driven by a logical clock.
class World {
 public:
  /// Throws ValidationError if the config violates its invariants.
  explicit World(WorldConfig config);

  /// Advances one tick and returns the state at the new tick.
  WorldSnapshot step();
  /// State at the current tick (scans are recomputed only by step()).
  const WorldSnapshot& last_snapshot() const { return snapshot_; }

  Tick tick() const { return tick_; }
  bool finished() const { return tick_ >= config_.num_ticks(); }
  const WorldConfig& config() const { return config_; }

  /// Position-bias magnitude currently applied to a robot (diagnostics only).
  Vec2 position_bias(std::size_t robot) const { return robots_[robot].bias; }

 private:
  struct RobotState {
    Pose2D pose;
    std::size_t next_waypoint = 0;
    Vec2 bias = Vec2::Zero();
    double heading_bias = 0.0;
    Rng drift_rng{0};
    Rng lidar_rng{0};
  };

  void advance_robot(std::size_t idx);
  void fill_snapshot(bool with_scans);

  WorldConfig config_;
  std::vector<TargetState> targets_;
  std::vector<RobotState> robots_;
  std::vector<Segment> walls_;
  Tick tick_ = 0;
  WorldSnapshot snapshot_;
};

}  // namespace dkcf
