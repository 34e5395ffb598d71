#pragma once

#include "dkcf/scenario.hpp"
#include "dkcf/types.hpp"

#include <span>
#include <vector>

namespace dkcf {

/// One lidar return in the sensor frame.
struct ScanPoint {
  double range = 0.0;
  double bearing = 0.0;
  Vec2 cartesian = Vec2::Zero();
};

struct DbscanParams {
  double epsilon = 0.3;
  int min_pts = 3;
  double max_cluster_extent = 1.2;  ///< clusters wider than this (diameter, m) are dropped
};

/// Cluster centroid in the robot's believed global frame.
struct Detection {
  Vec2 centroid = Vec2::Zero();
  RobotId frame = 0;
  Tick tick = 0;
  int support = 0;
};

/// Converts returns to laser-frame Cartesian points; no-return beams are skipped.
std::vector<ScanPoint> polar_to_cartesian(std::span<const ScanBeam> scan);

Vec2 to_global(const Vec2& local, const Pose2D& pose);
Vec2 to_local(const Vec2& global, const Pose2D& pose);
std::vector<Vec2> transform_to_global(std::span<const ScanPoint> points, const Pose2D& believed_pose);

inline constexpr int kNoise = -1;

/// Cluster index per input point (kNoise for noise). Clusters are numbered in
/// order of their lowest-index core point.
struct Clustering {
  std::vector<int> labels;
  int num_clusters = 0;
};

/// DBSCAN over a uniform grid of cell size epsilon.
///
/// A point is core when at least min_pts points (itself included) lie within
/// epsilon. Cores that are within epsilon of each other share a cluster. A
/// non-core point joins the cluster of the lowest-index core point within
/// epsilon of it, otherwise it is noise. The neighbour-count pass runs under
/// OpenMP for large inputs; the labeling pass is serial.
Clustering dbscan(std::span<const Vec2> points, const DbscanParams& params);

/// Largest pairwise distance in a point set (0 for fewer than two points).
double point_set_diameter(std::span<const Vec2> points);

/// Centroids of surviving clusters. Noise, clusters wider than
/// max_cluster_extent and clusters smaller than min_pts are dropped.
std::vector<Detection> extract_detections(const Clustering& clustering, std::span<const Vec2> points,
                                          const DbscanParams& params, Tick tick, RobotId robot);

/// Full per-scan pipeline: polar conversion, frame transform, clustering, centroids.
std::vector<Detection> detect_objects(std::span<const ScanBeam> scan, const Pose2D& believed_pose,
                                      const DbscanParams& params, Tick tick, RobotId robot);

}  // namespace dkcf
