#include "dkcf/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <unordered_map>

namespace dkcf {

std::vector<ScanPoint> polar_to_cartesian(std::span<const ScanBeam> scan) {
  std::vector<ScanPoint> out;
  out.reserve(scan.size());
  for (const auto& beam : scan) {
    if (!beam.has_return()) continue;
    out.push_back({beam.range, beam.bearing,
                   Vec2(beam.range * std::cos(beam.bearing), beam.range * std::sin(beam.bearing))});
  }
  return out;
}

Vec2 to_global(const Vec2& local, const Pose2D& pose) {
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);
  return {c * local.x() - s * local.y() + pose.position.x(),
          s * local.x() + c * local.y() + pose.position.y()};
}

Vec2 to_local(const Vec2& global, const Pose2D& pose) {
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);
  const Vec2 d = global - pose.position;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

std::vector<Vec2> transform_to_global(std::span<const ScanPoint> points, const Pose2D& believed_pose) {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(to_global(p.cartesian, believed_pose));
  return out;
}

namespace {

class UniformGrid {
 public:
  UniformGrid(std::span<const Vec2> points, double cell) : points_(points), inv_cell_(1.0 / cell) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      cells_[key(cell_of(points[i].x()), cell_of(points[i].y()))].push_back(static_cast<int>(i));
    }
  }

  /// Indices within radius of point i (inclusive), ascending.
  std::vector<int> neighbours(std::size_t i, double radius) const {
    const Vec2& p = points_[i];
    const double r2 = radius * radius;
    const std::int64_t cx = cell_of(p.x());
    const std::int64_t cy = cell_of(p.y());
    std::vector<int> out;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (int j : it->second) {
          if ((points_[static_cast<std::size_t>(j)] - p).squaredNorm() <= r2) out.push_back(j);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v * inv_cell_)); }
  static std::uint64_t key(std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(x) << 32) ^ (static_cast<std::uint64_t>(y) & 0xFFFFFFFFULL);
  }

  std::span<const Vec2> points_;
  double inv_cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace

Clustering dbscan(std::span<const Vec2> points, const DbscanParams& params) {
  const std::size_t n = points.size();
  Clustering result;
  result.labels.assign(n, kNoise);
  if (n == 0) return result;

  // Slightly oversized cells keep every epsilon-neighbour inside the 3x3 block
  // even when floor() lands on the wrong side of a cell edge.
  const UniformGrid grid(points, params.epsilon * (1.0 + 1e-9));
  std::vector<std::vector<int>> neighbours(n);

  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (count > 4096)
  for (std::int64_t i = 0; i < count; ++i) {
    neighbours[static_cast<std::size_t>(i)] = grid.neighbours(static_cast<std::size_t>(i), params.epsilon);
  }

  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    core[i] = static_cast<int>(neighbours[i].size()) >= params.min_pts;
  }

  constexpr int kUnassigned = -2;
  std::vector<int> labels(n, kUnassigned);
  int next_cluster = 0;
  std::deque<int> frontier;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || labels[seed] != kUnassigned) continue;
    const int cluster = next_cluster++;
    labels[seed] = cluster;
    frontier.push_back(static_cast<int>(seed));
    while (!frontier.empty()) {
      const auto q = static_cast<std::size_t>(frontier.front());
      frontier.pop_front();
      for (int nb : neighbours[q]) {
        const auto j = static_cast<std::size_t>(nb);
        if (core[j] && labels[j] == kUnassigned) {
          labels[j] = cluster;
          frontier.push_back(nb);
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    labels[i] = kNoise;
    for (int nb : neighbours[i]) {  // ascending, so the first core hit is the lowest index
      if (core[static_cast<std::size_t>(nb)]) {
        labels[i] = labels[static_cast<std::size_t>(nb)];
        break;
      }
    }
  }

  result.labels = std::move(labels);
  result.num_clusters = next_cluster;
  return result;
}

double point_set_diameter(std::span<const Vec2> points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::max(best, (points[i] - points[j]).squaredNorm());
    }
  }
  return std::sqrt(best);
}

std::vector<Detection> extract_detections(const Clustering& clustering, std::span<const Vec2> points,
                                          const DbscanParams& params, Tick tick, RobotId robot) {
  std::vector<std::vector<Vec2>> members(static_cast<std::size_t>(clustering.num_clusters));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int label = clustering.labels[i];
    if (label >= 0) members[static_cast<std::size_t>(label)].push_back(points[i]);
  }

  std::vector<Detection> out;
  for (const auto& cluster : members) {
    if (static_cast<int>(cluster.size()) < params.min_pts) continue;
    if (point_set_diameter(cluster) > params.max_cluster_extent) continue;
    Vec2 sum = Vec2::Zero();
    for (const auto& p : cluster) sum += p;
    out.push_back({sum / static_cast<double>(cluster.size()), robot, tick, static_cast<int>(cluster.size())});
  }
  return out;
}

std::vector<Detection> detect_objects(std::span<const ScanBeam> scan, const Pose2D& believed_pose,
                                      const DbscanParams& params, Tick tick, RobotId robot) {
  const auto local = polar_to_cartesian(scan);
  const auto global = transform_to_global(local, believed_pose);
  const auto clusters = dbscan(global, params);
  return extract_detections(clusters, global, params, tick, robot);
}

}  // namespace dkcf
