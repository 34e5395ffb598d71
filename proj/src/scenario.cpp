#include "dkcf/scenario.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dkcf {

Tick WorldConfig::num_ticks() const {
  if (!(tick_period > 0.0) || !(duration > 0.0)) return 0;
  return static_cast<Tick>(std::llround(duration / tick_period));
}

std::vector<std::string> WorldConfig::validate() const {
  std::vector<std::string> issues;
  auto bad = [&](std::string msg) { issues.push_back(std::move(msg)); };

  if (!(tick_period > 0.0)) bad("world.tick_period: must be > 0");
  // Zero duration is allowed and yields an empty run.
  if (!(duration >= 0.0)) bad("world.duration: must be >= 0");
  if (!(arena_bounds.area() > 0.0) || arena_bounds.max.x() <= arena_bounds.min.x() ||
      arena_bounds.max.y() <= arena_bounds.min.y()) {
    bad("world.arena_bounds: must have positive area");
  }

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    const auto where = fmt::format("world.targets[{}]", i);
    if (!(t.radius > 0.0)) bad(where + ".radius: must be > 0");
    if (!(t.speed >= 0.0)) bad(where + ".speed: must be >= 0");
    if (std::abs(t.heading.norm() - 1.0) > 1e-9) bad(where + ".heading: must be a unit vector");
    if (!arena_bounds.contains(t.path.a) || !arena_bounds.contains(t.path.b)) {
      bad(where + ".path: endpoints must lie inside the arena");
    }
    if (!arena_bounds.contains(t.start)) bad(where + ".start: must lie inside the arena");
    const Vec2 d = t.path.b - t.path.a;
    const double len = d.norm();
    if (len > 0.0) {
      const Vec2 u = d / len;
      const double cross = u.x() * t.heading.y() - u.y() * t.heading.x();
      if (std::abs(cross) > 1e-6) bad(where + ".heading: must be parallel to the path");
      const double s = (t.start - t.path.a).dot(u);
      const double off = (t.start - (t.path.a + s * u)).norm();
      if (off > 1e-6 || s < -1e-9 || s > len + 1e-9) bad(where + ".start: must lie on the path");
    } else if ((t.start - t.path.a).norm() > 1e-6) {
      bad(where + ".start: must lie on the path");
    }
  }

  for (std::size_t i = 0; i < robots.size(); ++i) {
    const auto& r = robots[i];
    const auto where = fmt::format("world.robots[{}]", i);
    if (r.waypoints.empty()) bad(where + ".waypoints: need at least one waypoint");
    for (std::size_t w = 0; w < r.waypoints.size(); ++w) {
      if (!arena_bounds.contains(r.waypoints[w])) {
        bad(fmt::format("{}.waypoints[{}]: must lie inside the arena", where, w));
      }
    }
    if (!(r.speed >= 0.0)) bad(where + ".speed: must be >= 0");
    if (r.lidar.num_beams < 1) bad(where + ".lidar.num_beams: must be >= 1");
    if (!(r.lidar.fov > 0.0 && r.lidar.fov <= 2.0 * std::numbers::pi + 1e-12)) {
      bad(where + ".lidar.fov: must be in (0, 2*pi]");
    }
    if (!(r.lidar.max_range > 0.0)) bad(where + ".lidar.max_range: must be > 0");
    if (!(r.lidar.range_noise_std >= 0.0)) bad(where + ".lidar.range_noise_std: must be >= 0");
    if (!(r.drift.bias_walk_std >= 0.0)) bad(where + ".drift.bias_walk_std: must be >= 0");
    if (!(r.drift.heading_walk_std >= 0.0)) bad(where + ".drift.heading_walk_std: must be >= 0");
  }
  return issues;
}

// ---------------------------------------------------------------------------
// Ray casting

double ray_circle_distance(const Vec2& origin, const Vec2& dir, const Circle& circle) {
  const Vec2 f = origin - circle.center;
  const double b = f.dot(dir);
  const double c = f.squaredNorm() - circle.radius * circle.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return kNoReturn;
  const double root = std::sqrt(disc);
  const double t1 = -b - root;
  if (t1 >= 0.0) return t1;
  const double t2 = -b + root;  // origin inside the circle
  if (t2 >= 0.0) return t2;
  return kNoReturn;
}

double ray_segment_distance(const Vec2& origin, const Vec2& dir, const Segment& seg) {
  const Vec2 e = seg.b - seg.a;
  const double denom = dir.x() * e.y() - dir.y() * e.x();
  if (std::abs(denom) < 1e-15) return kNoReturn;
  const Vec2 w = seg.a - origin;
  const double t = (w.x() * e.y() - w.y() * e.x()) / denom;
  const double u = (w.x() * dir.y() - w.y() * dir.x()) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return kNoReturn;
  return t;
}

double beam_bearing(const LidarSpec& spec, int k) {
  if (spec.num_beams <= 1) return 0.0;
  return -spec.fov / 2.0 + k * spec.fov / (spec.num_beams - 1);
}

std::vector<ScanBeam> cast_scan(const Pose2D& pose, const LidarSpec& spec,
                                std::span<const Circle> circles, std::span<const Segment> walls,
                                Rng& rng) {
  std::vector<ScanBeam> scan(static_cast<std::size_t>(spec.num_beams));
  for (int k = 0; k < spec.num_beams; ++k) {
    const double bearing = beam_bearing(spec, k);
    const double angle = pose.heading + bearing;
    const Vec2 dir(std::cos(angle), std::sin(angle));

    double nearest = kNoReturn;
    for (const auto& c : circles) nearest = std::min(nearest, ray_circle_distance(pose.position, dir, c));
    for (const auto& w : walls) nearest = std::min(nearest, ray_segment_distance(pose.position, dir, w));

    auto& beam = scan[static_cast<std::size_t>(k)];
    beam.bearing = bearing;
    if (nearest <= spec.max_range) {
      const double noisy = nearest + rng.gaussian(spec.range_noise_std);
      beam.range = std::clamp(noisy, 0.0, spec.max_range);
    }
  }
  return scan;
}

std::vector<Segment> arena_walls(const Rect& arena) {
  const Vec2 a = arena.min;
  const Vec2 b(arena.max.x(), arena.min.y());
  const Vec2 c = arena.max;
  const Vec2 d(arena.min.x(), arena.max.y());
  return {{a, b}, {b, c}, {c, d}, {d, a}};
}

// ---------------------------------------------------------------------------
// Target motion

namespace {
double path_length(const TargetSpec& spec) { return (spec.path.b - spec.path.a).norm(); }
Vec2 path_unit(const TargetSpec& spec) {
  const double len = path_length(spec);
  return len > 0.0 ? Vec2((spec.path.b - spec.path.a) / len) : Vec2(spec.heading);
}
}  // namespace

TargetState initial_target_state(const TargetSpec& spec) {
  const Vec2 u = path_unit(spec);
  TargetState st;
  st.s = std::clamp((spec.start - spec.path.a).dot(u), 0.0, path_length(spec));
  st.direction = spec.heading.dot(u) >= 0.0 ? 1.0 : -1.0;
  return st;
}

Vec2 target_position(const TargetSpec& spec, const TargetState& state) {
  return spec.path.a + state.s * path_unit(spec);
}

Vec2 target_heading(const TargetSpec& spec, const TargetState& state) {
  return state.direction * path_unit(spec);
}

TargetState advance_on_path(const TargetSpec& spec, TargetState state, double distance) {
  const double len = path_length(spec);
  if (len <= 0.0 || distance == 0.0) return state;
  double x = state.s + state.direction * distance;
  // Fold whole round trips first so the reflection loop below is short.
  const double period = 2.0 * len;
  if (x > period || x < -period) {
    x = std::fmod(x, period);
  }
  while (x > len || x < 0.0) {
    if (x > len) {
      x = 2.0 * len - x;
    } else {
      x = -x;
    }
    state.direction = -state.direction;
  }
  state.s = x;
  return state;
}

Pose2D compose_drift(const Pose2D& truth, const Vec2& bias, double heading_bias) {
  return {truth.position + bias, normalize_angle(truth.heading + heading_bias)};
}

// ---------------------------------------------------------------------------
// World

World::World(WorldConfig config) : config_(std::move(config)) {
  if (auto issues = config_.validate(); !issues.empty()) throw ValidationError(std::move(issues));

  walls_ = arena_walls(config_.arena_bounds);
  for (const auto& t : config_.targets) targets_.push_back(initial_target_state(t));

  for (std::size_t i = 0; i < config_.robots.size(); ++i) {
    const auto& spec = config_.robots[i];
    RobotState st;
    st.pose.position = spec.waypoints.front();
    if (spec.waypoints.size() > 1) {
      const Vec2 d = spec.waypoints[1] - spec.waypoints[0];
      if (d.norm() > 0.0) st.pose.heading = std::atan2(d.y(), d.x());
      st.next_waypoint = 1;
    }
    st.bias = spec.drift.initial_bias;
    st.drift_rng = Rng(derive_seed(config_.rng_seed, {0xD81F7, i}));
    st.lidar_rng = Rng(derive_seed(config_.rng_seed, {0x11DA8, i}));
    robots_.push_back(st);
  }
  fill_snapshot(true);
}

void World::advance_robot(std::size_t idx) {
  const auto& spec = config_.robots[idx];
  auto& st = robots_[idx];
  double remaining = spec.speed * config_.tick_period;
  const std::size_t n = spec.waypoints.size();
  if (n > 1) {
    // Bounded so a degenerate (all-coincident) waypoint loop cannot spin.
    for (std::size_t hops = 0; remaining > 0.0 && hops <= 2 * n; ++hops) {
      const Vec2 goal = spec.waypoints[st.next_waypoint];
      const Vec2 delta = goal - st.pose.position;
      const double dist = delta.norm();
      if (dist > 0.0) st.pose.heading = std::atan2(delta.y(), delta.x());
      if (dist <= remaining) {
        st.pose.position = goal;
        remaining -= dist;
        st.next_waypoint = (st.next_waypoint + 1) % n;
      } else {
        st.pose.position += delta / dist * remaining;
        remaining = 0.0;
      }
    }
  }

  st.bias.x() += st.drift_rng.gaussian(spec.drift.bias_walk_std);
  st.bias.y() += st.drift_rng.gaussian(spec.drift.bias_walk_std);
  st.heading_bias += st.drift_rng.gaussian(spec.drift.heading_walk_std);
}

void World::fill_snapshot(bool with_scans) {
  snapshot_.tick = tick_;
  snapshot_.true_target_positions.clear();
  std::vector<Circle> circles;
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    const Vec2 p = target_position(config_.targets[i], targets_[i]);
    snapshot_.true_target_positions.push_back(p);
    circles.push_back({p, config_.targets[i].radius});
  }
  snapshot_.true_robot_poses.clear();
  snapshot_.believed_robot_poses.clear();
  for (const auto& r : robots_) {
    snapshot_.true_robot_poses.push_back(r.pose);
    snapshot_.believed_robot_poses.push_back(compose_drift(r.pose, r.bias, r.heading_bias));
  }
  if (with_scans) {
    snapshot_.scans.clear();
    for (std::size_t i = 0; i < robots_.size(); ++i) {
      snapshot_.scans.push_back(
          cast_scan(robots_[i].pose, config_.robots[i].lidar, circles, walls_, robots_[i].lidar_rng));
    }
  }
}

WorldSnapshot World::step() {
  const double T = config_.tick_period;
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    const auto& spec = config_.targets[i];
    targets_[i] = advance_on_path(spec, targets_[i], spec.speed * T);
  }
  for (std::size_t i = 0; i < robots_.size(); ++i) advance_robot(i);
  ++tick_;
  fill_snapshot(true);
  return snapshot_;
}

}  // namespace dkcf
