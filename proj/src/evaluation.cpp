#include "dkcf/evaluation.hpp"

#include "dkcf/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dkcf {

FrameScore score_frame(Tick tick, std::span<const Vec2> gt_positions, std::span<const TrackPoint> tracks,
                       double match_radius, MatchHistory& history, std::vector<FrameMatch>* matched) {
  FrameScore score;
  score.tick = tick;
  score.gt_count = static_cast<int>(gt_positions.size());

  std::vector<int> gt_to_track(gt_positions.size(), -1);  // index into tracks
  std::vector<char> track_used(tracks.size(), 0);

  // Persistence: keep last frame's pairing while it stays within the radius.
  for (std::size_t g = 0; g < gt_positions.size(); ++g) {
    auto prev = history.find(static_cast<int>(g));
    if (prev == history.end()) continue;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
      if (track_used[t] || tracks[t].id != prev->second) continue;
      if ((tracks[t].position - gt_positions[g]).norm() <= match_radius) {
        gt_to_track[g] = static_cast<int>(t);
        track_used[t] = 1;
      }
      break;
    }
  }

  std::vector<std::size_t> free_gt;
  std::vector<std::size_t> free_tracks;
  for (std::size_t g = 0; g < gt_positions.size(); ++g) {
    if (gt_to_track[g] < 0) free_gt.push_back(g);
  }
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (!track_used[t]) free_tracks.push_back(t);
  }

  if (!free_gt.empty() && !free_tracks.empty()) {
    const double sentinel = 1e6 * (match_radius + 1.0);
    Eigen::MatrixXd cost(free_gt.size(), free_tracks.size());
    for (std::size_t i = 0; i < free_gt.size(); ++i) {
      for (std::size_t j = 0; j < free_tracks.size(); ++j) {
        const double d = (tracks[free_tracks[j]].position - gt_positions[free_gt[i]]).norm();
        cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d <= match_radius ? d : sentinel;
      }
    }
    for (const auto& [r, c] : hungarian(cost)) {
      if (cost(r, c) >= sentinel) continue;
      gt_to_track[free_gt[static_cast<std::size_t>(r)]] = static_cast<int>(free_tracks[static_cast<std::size_t>(c)]);
      track_used[free_tracks[static_cast<std::size_t>(c)]] = 1;
    }
  }

  for (std::size_t g = 0; g < gt_positions.size(); ++g) {
    const int t = gt_to_track[g];
    if (t < 0) {
      ++score.misses;
      continue;
    }
    const auto& track = tracks[static_cast<std::size_t>(t)];
    const double d = (track.position - gt_positions[g]).norm();
    ++score.matches;
    score.sum_match_dist += d;
    auto prev = history.find(static_cast<int>(g));
    if (prev != history.end() && prev->second != track.id) ++score.id_switches;
    history[static_cast<int>(g)] = track.id;
    if (matched) matched->push_back({static_cast<int>(g), track.id, d});
  }
  score.false_positives = static_cast<int>(std::count(track_used.begin(), track_used.end(), 0));
  return score;
}

FrameScore sum_frames(std::span<const FrameScore> frames) {
  FrameScore s;
  for (const auto& f : frames) {
    s.matches += f.matches;
    s.false_positives += f.false_positives;
    s.misses += f.misses;
    s.id_switches += f.id_switches;
    s.gt_count += f.gt_count;
    s.sum_match_dist += f.sum_match_dist;
  }
  return s;
}

double mota(std::span<const FrameScore> frames) {
  const FrameScore s = sum_frames(frames);
  if (s.gt_count <= 0) throw UndefinedMetricError("MOTA is undefined with zero ground-truth objects");
  return 1.0 - static_cast<double>(s.misses + s.false_positives + s.id_switches) / s.gt_count;
}

SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: need at least one value");
  SummaryStats st;
  st.n = values.size();
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  st.min = sorted.front();
  st.max = sorted.back();
  const std::size_t mid = sorted.size() / 2;
  st.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  // Accumulate in input order so results do not depend on sorting.
  double sum = 0.0;
  for (double v : values) sum += v;
  st.mean = sum / static_cast<double>(st.n);
  double sq = 0.0;
  for (double v : values) sq += (v - st.mean) * (v - st.mean);
  st.std = std::sqrt(sq / static_cast<double>(st.n));
  return st;
}

double sign_test_p_value(int positives, int negatives) {
  const int n = positives + negatives;
  if (n <= 0) return 1.0;
  // Sum binomial pmf in log space for numerical range.
  double p = 0.0;
  for (int k = positives; k <= n; ++k) {
    const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0);
    p += std::exp(log_pmf);
  }
  return std::min(1.0, p);
}

}  // namespace dkcf
