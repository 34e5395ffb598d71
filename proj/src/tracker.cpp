#include "dkcf/tracker.hpp"

#include "dkcf/assignment.hpp"

#include <fmt/format.h>

#include <cmath>

namespace dkcf {

Mat4 cv_transition(double tick_period) {
  Mat4 F = Mat4::Identity();
  F(0, 1) = tick_period;
  F(2, 3) = tick_period;
  return F;
}

Mat24 position_measurement() {
  Mat24 H = Mat24::Zero();
  H(0, 0) = 1.0;
  H(1, 2) = 1.0;
  return H;
}

Mat4 white_noise_acceleration(double tick_period, double intensity) {
  const double T = tick_period;
  Eigen::Matrix2d block;
  block << T * T * T * T / 4.0, T * T * T / 2.0,
           T * T * T / 2.0,     T * T;
  Mat4 Q = Mat4::Zero();
  Q.block<2, 2>(0, 0) = intensity * block;
  Q.block<2, 2>(2, 2) = intensity * block;
  return Q;
}

ModelParams make_cv_model(double tick_period, double accel_intensity, double meas_std) {
  ModelParams m;
  m.tick_period = tick_period;
  m.F = cv_transition(tick_period);
  m.H = position_measurement();
  m.Q = white_noise_acceleration(tick_period, accel_intensity);
  m.R = meas_std * meas_std * Mat2::Identity();
  return m;
}

StateEstimate kf_predict(const StateEstimate& est, const ModelParams& model) {
  StateEstimate out;
  out.x = model.F * est.x;
  out.P = symmetrized(model.F * est.P * model.F.transpose() + model.Q);
  return out;
}

namespace {

Mat2 invert_innovation(const Mat2& S) {
  const double det = S.determinant();
  const double scale = std::max(S.cwiseAbs().maxCoeff(), 1e-300);
  if (!std::isfinite(det) || std::abs(det) <= 1e-14 * scale * scale) {
    throw NumericalError(fmt::format("innovation covariance is singular (det = {:.3e})", det));
  }
  return S.inverse();
}

}  // namespace

StateEstimate kf_update(const StateEstimate& est, const Vec2& z, const ModelParams& model) {
  const Mat24& H = model.H;
  const Mat2 S = symmetrized(H * est.P * H.transpose() + model.R);
  const Mat2 S_inv = invert_innovation(S);
  const Eigen::Matrix<double, 4, 2> K = est.P * H.transpose() * S_inv;

  StateEstimate out;
  out.x = est.x + K * (z - H * est.x);
  const Mat4 I_KH = Mat4::Identity() - K * H;
  out.P = symmetrized(I_KH * est.P * I_KH.transpose() + K * model.R * K.transpose());
  return out;
}

double mahalanobis_sq(const StateEstimate& prior, const Vec2& z, const ModelParams& model) {
  const Mat2 S = symmetrized(model.H * prior.P * model.H.transpose() + model.R);
  const Vec2 r = z - model.H * prior.x;
  return r.dot(invert_innovation(S) * r);
}

std::string_view to_string(TrackStatus status) {
  switch (status) {
    case TrackStatus::tentative: return "tentative";
    case TrackStatus::confirmed: return "confirmed";
    case TrackStatus::dead: return "dead";
  }
  return "unknown";
}

double gate_sentinel(const ModelParams& model) { return 1e6 * model.gate_threshold; }

Association associate(std::span<const Track> tracks, std::span<const Detection> detections,
                      const ModelParams& model) {
  Association out;
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (tracks[i].status != TrackStatus::dead) live.push_back(i);
  }
  if (live.empty() || detections.empty()) {
    out.unmatched_tracks = live;
    for (std::size_t j = 0; j < detections.size(); ++j) out.unmatched_detections.push_back(j);
    return out;
  }

  const double sentinel = gate_sentinel(model);
  const auto n = static_cast<Eigen::Index>(std::max(live.size(), detections.size()));
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, sentinel);
  for (std::size_t r = 0; r < live.size(); ++r) {
    for (std::size_t c = 0; c < detections.size(); ++c) {
      const double d2 = mahalanobis_sq(tracks[live[r]].estimate, detections[c].centroid, model);
      if (d2 <= model.gate_threshold) cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d2;
    }
  }

  std::vector<char> track_used(live.size(), 0), det_used(detections.size(), 0);
  for (const auto& [r, c] : hungarian(cost)) {
    const auto ru = static_cast<std::size_t>(r);
    const auto cu = static_cast<std::size_t>(c);
    if (ru >= live.size() || cu >= detections.size()) continue;
    if (cost(r, c) >= sentinel) continue;
    out.matches.emplace_back(live[ru], cu);
    track_used[ru] = 1;
    det_used[cu] = 1;
  }
  for (std::size_t r = 0; r < live.size(); ++r) {
    if (!track_used[r]) out.unmatched_tracks.push_back(live[r]);
  }
  for (std::size_t c = 0; c < detections.size(); ++c) {
    if (!det_used[c]) out.unmatched_detections.push_back(c);
  }
  return out;
}

void track_lifecycle_step(std::vector<Track>& tracks, const Association& association,
                          std::span<const Detection> detections, const ModelParams& model, Tick tick,
                          TrackIdAllocator& ids) {
  for (const auto& [ti, di] : association.matches) {
    auto& track = tracks[ti];
    const Vec2 z = detections[di].centroid;
    track.estimate = kf_update(track.estimate, z, model);
    track.hits += 1;
    track.consecutive_misses = 0;
    track.last_update_tick = tick;
    track.last_measurement = z;
    if (track.status == TrackStatus::tentative && track.hits >= model.confirm_hits) {
      track.status = TrackStatus::confirmed;
    }
  }

  for (std::size_t ti : association.unmatched_tracks) {
    auto& track = tracks[ti];
    track.consecutive_misses += 1;
    track.last_measurement.reset();
    if (track.consecutive_misses > model.max_misses) track.status = TrackStatus::dead;
  }

  for (std::size_t di : association.unmatched_detections) {
    const Vec2 z = detections[di].centroid;
    Track track;
    track.id = ids.next();
    track.estimate.x = Vec4(z.x(), 0.0, z.y(), 0.0);
    track.estimate.P = Vec4(model.init_pos_var, model.init_vel_var, model.init_pos_var, model.init_vel_var)
                           .asDiagonal();
    track.hits = 1;  // the birth detection counts
    track.last_update_tick = tick;
    track.last_measurement = z;
    if (track.hits >= model.confirm_hits) track.status = TrackStatus::confirmed;
    tracks.push_back(std::move(track));
  }
}

LocalTracker::LocalTracker(RobotId robot, ModelParams model)
    : robot_(robot), model_(std::move(model)), ids_(robot) {}

void LocalTracker::predict() {
  for (auto& t : tracks_) {
    if (t.status == TrackStatus::dead) continue;
    t.estimate = kf_predict(t.estimate, model_);
    if (sink_) sink_("predict", t.estimate.P);
  }
}

Association LocalTracker::update(std::span<const Detection> detections, Tick tick) {
  Association assoc = associate(tracks_, detections, model_);
  track_lifecycle_step(tracks_, assoc, detections, model_, tick, ids_);
  if (sink_) {
    for (const auto& t : tracks_) sink_("update", t.estimate.P);
  }
  purge_dead();
  return assoc;
}

void LocalTracker::purge_dead() {
  std::erase_if(tracks_, [](const Track& t) { return t.status == TrackStatus::dead; });
}

}  // namespace dkcf
