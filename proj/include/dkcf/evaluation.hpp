#pragma once

#include "dkcf/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace dkcf {

struct FrameScore {
  Tick tick = 0;
  int matches = 0;
  int false_positives = 0;
  int misses = 0;
  int id_switches = 0;
  int gt_count = 0;
  double sum_match_dist = 0.0;
};

/// A reported track position at one frame.
struct TrackPoint {
  TrackId id = 0;
  Vec2 position = Vec2::Zero();
};

/// Ground-truth index -> track ID of its most recent match.
using MatchHistory = std::map<int, TrackId>;

/// One matched (ground truth, track) pair of a frame.
struct FrameMatch {
  int gt_index = 0;
  TrackId track_id = 0;
  double distance = 0.0;
};

/// CLEAR-MOT scoring of one frame.
///
/// Pairs from `history` whose track is present and still within
/// `match_radius` are kept first; the rest are matched by Hungarian
/// assignment on Euclidean distance gated at `match_radius`. An ID switch is
/// counted when a ground-truth object's matched track differs from the one in
/// `history`. `history` is updated in place; `matched`, when given, receives
/// the frame's pairs.
FrameScore score_frame(Tick tick, std::span<const Vec2> gt_positions, std::span<const TrackPoint> tracks,
                       double match_radius, MatchHistory& history, std::vector<FrameMatch>* matched = nullptr);

/// Totals over frames.
FrameScore sum_frames(std::span<const FrameScore> frames);

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// 1 - (FN + FP + IDSW) / GT. Throws UndefinedMetricError when GT sums to zero.
double mota(std::span<const FrameScore> frames);

/// Sample statistics over runs. std uses the population convention (divide by n).
struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Throws std::invalid_argument on empty input.
SummaryStats summarize(std::span<const double> values);

/// One-sided exact sign test: P(X >= positives) for X ~ Binomial(positives +
/// negatives, 1/2). Ties are expected to be excluded by the caller.
double sign_test_p_value(int positives, int negatives);

}  // namespace dkcf
