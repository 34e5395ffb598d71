#include "dkcf/consensus.hpp"

#include "dkcf/assignment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dkcf {

std::string_view to_string(ConsensusMode mode) {
  return mode == ConsensusMode::standard ? "standard" : "adaptive";
}

std::optional<ConsensusMode> parse_consensus_mode(std::string_view text) {
  if (text == "standard") return ConsensusMode::standard;
  if (text == "adaptive") return ConsensusMode::adaptive;
  return std::nullopt;
}

std::string_view to_string(GainNorm norm) { return norm == GainNorm::frobenius ? "frobenius" : "spectral"; }

std::optional<GainNorm> parse_gain_norm(std::string_view text) {
  if (text == "frobenius") return GainNorm::frobenius;
  if (text == "spectral") return GainNorm::spectral;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Frame transforms

namespace {
Mat2 rotation_matrix(double angle) {
  Mat2 R;
  R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return R;
}

// Acts on [x, vx, y, vy]: rotates the (x, y) and (vx, vy) pairs.
Mat4 state_rotation(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat4 J = Mat4::Zero();
  J(0, 0) = c;
  J(0, 2) = -s;
  J(2, 0) = s;
  J(2, 2) = c;
  J(1, 1) = c;
  J(1, 3) = -s;
  J(3, 1) = s;
  J(3, 3) = c;
  return J;
}
}  // namespace

Vec2 FrameTransform::apply(const Vec2& p) const { return rotation_matrix(rotation) * p + translation; }

Vec4 FrameTransform::apply_state(const Vec4& x) const {
  Vec4 out = state_rotation(rotation) * x;
  out(0) += translation.x();
  out(2) += translation.y();
  return out;
}

Mat4 FrameTransform::apply_covariance(const Mat4& P) const {
  const Mat4 J = state_rotation(rotation);
  return symmetrized(J * P * J.transpose());
}

Mat2 FrameTransform::apply_measurement_covariance(const Mat2& R) const {
  const Mat2 rot = rotation_matrix(rotation);
  return symmetrized(rot * R * rot.transpose());
}

FrameTransform FrameTransform::inverse() const {
  FrameTransform inv;
  inv.rotation = -rotation;
  inv.translation = -(rotation_matrix(-rotation) * translation);
  inv.source_frame = target_frame;
  inv.target_frame = source_frame;
  inv.residual_rms = residual_rms;
  return inv;
}

FrameTransform compose(const FrameTransform& outer, const FrameTransform& inner) {
  FrameTransform out;
  out.rotation = normalize_angle(outer.rotation + inner.rotation);
  out.translation = rotation_matrix(outer.rotation) * inner.translation + outer.translation;
  out.source_frame = inner.source_frame;
  out.target_frame = outer.target_frame;
  return out;
}

FrameTransform FrameTransform::scaled(double fraction) const {
  FrameTransform out = *this;
  out.rotation = fraction * rotation;
  out.translation = fraction * translation;
  return out;
}

// ---------------------------------------------------------------------------
// Information form

InformationPair information_pair(const Mat24& H, const Vec2& z, const Mat2& R) {
  const double det = R.determinant();
  if (!std::isfinite(det) || std::abs(det) <= 1e-300) {
    throw NumericalError(fmt::format("measurement covariance is singular (det = {:.3e})", det));
  }
  const Mat2 R_inv = R.inverse();
  InformationPair out;
  out.u = H.transpose() * R_inv * z;
  out.U = symmetrized(H.transpose() * R_inv * H);
  return out;
}

InformationPair aggregate_information(const InformationPair& local, std::span<const InformationPair> neighbors) {
  InformationPair sum = local;
  for (const auto& n : neighbors) {
    sum.u += n.u;
    sum.U += n.U;
  }
  return sum;
}

Mat4 information_gain(const Mat4& P_plus, const Mat4& Y) {
  const Mat4 P = symmetrized(P_plus);
  Eigen::SelfAdjointEigenSolver<Mat4> eig(P, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12)) {
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    throw NumericalError(fmt::format("local covariance is near-singular (condition number {:.3e})", cond));
  }
  const Mat4 P_inv = symmetrized(P.ldlt().solve(Mat4::Identity()));
  const Mat4 info = symmetrized(P_inv + Y);
  return symmetrized(info.ldlt().solve(Mat4::Identity()));
}

double matrix_norm(const Mat4& M, GainNorm norm) {
  if (norm == GainNorm::frobenius) return M.norm();
  Eigen::JacobiSVD<Mat4> svd(M);
  return svd.singularValues()(0);
}

namespace {

ConsensusUpdate finish_update(const StateEstimate& local, const Mat4& M, const Vec4& info_term,
                              const Vec4& consensus_term, const ConsensusParams& params) {
  ConsensusUpdate out;
  out.gain = M;
  out.information_term = info_term;
  out.consensus_term = consensus_term;
  out.estimate.x = local.x + info_term + consensus_term;
  out.estimate.P = symmetrized(params.A * M * params.A.transpose() + params.Q);
  return out;
}

}  // namespace

ConsensusUpdate dkcf_update_standard(const StateEstimate& local, const InformationPair& aggregated,
                                     std::span<const Vec4> neighbor_states, const ConsensusParams& params) {
  const Mat4 M = information_gain(local.P, aggregated.U);
  const Vec4 info_term = M * (aggregated.u - aggregated.U * local.x);
  Vec4 disagreement = Vec4::Zero();
  for (const auto& xj : neighbor_states) disagreement += xj - local.x;
  const Vec4 consensus_term = (M / (1.0 + matrix_norm(M, params.norm))) * disagreement;
  return finish_update(local, M, info_term, consensus_term, params);
}

std::vector<double> adaptive_weights(std::span<const double> sigmas) {
  if (sigmas.empty()) throw std::invalid_argument("adaptive_weights: need at least one sigma");
  std::vector<double> inv;
  inv.reserve(sigmas.size());
  double total = 0.0;
  for (double s : sigmas) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument(fmt::format("adaptive_weights: sigma must be positive and finite, got {}", s));
    }
    inv.push_back(1.0 / std::max(s, 1e-9));
    total += inv.back();
  }
  for (double& w : inv) w /= total;
  return inv;
}

ConsensusUpdate dkcf_update_adaptive(const StateEstimate& local, const InformationPair& aggregated,
                                     std::span<const Vec4> neighbor_states, std::span<const double> neighbor_weights,
                                     const ConsensusParams& params) {
  if (neighbor_states.size() != neighbor_weights.size()) {
    throw std::invalid_argument("dkcf_update_adaptive: weights must align with neighbour states");
  }
  const Mat4 M = information_gain(local.P, aggregated.U);
  const Vec4 info_term = M * (aggregated.u - aggregated.U * local.x);
  Vec4 weighted = Vec4::Zero();
  for (std::size_t j = 0; j < neighbor_states.size(); ++j) {
    weighted += neighbor_weights[j] * (neighbor_states[j] - local.x);
  }
  return finish_update(local, M, info_term, M * weighted, params);
}

double uncertainty_sigma(double sigma_loc, const Mat4& P) {
  return std::sqrt(sigma_loc * sigma_loc + 0.5 * (P(0, 0) + P(2, 2)));
}

// ---------------------------------------------------------------------------
// Alignment and identity

FrameTransform estimate_frame_alignment(std::span<const Correspondence> correspondences, RobotId source_frame,
                                        RobotId target_frame, int min_landmarks) {
  const std::size_t needed = static_cast<std::size_t>(std::max(2, min_landmarks));
  if (correspondences.size() < needed) {
    throw DegenerateGeometryError(fmt::format("frame alignment needs at least {} correspondences, got {}", needed,
                                              correspondences.size()));
  }
  const double n = static_cast<double>(correspondences.size());
  Vec2 c_src = Vec2::Zero();
  Vec2 c_tgt = Vec2::Zero();
  for (const auto& c : correspondences) {
    c_src += c.source;
    c_tgt += c.target;
  }
  c_src /= n;
  c_tgt /= n;

  double dot = 0.0;
  double cross = 0.0;
  double spread_src = 0.0;
  double spread_tgt = 0.0;
  for (const auto& c : correspondences) {
    const Vec2 a = c.source - c_src;
    const Vec2 b = c.target - c_tgt;
    dot += a.dot(b);
    cross += a.x() * b.y() - a.y() * b.x();
    spread_src += a.squaredNorm();
    spread_tgt += b.squaredNorm();
  }
  if (spread_src < 1e-18 || spread_tgt < 1e-18) {
    throw DegenerateGeometryError("frame alignment: correspondences are coincident; rotation is unobservable");
  }

  FrameTransform out;
  out.source_frame = source_frame;
  out.target_frame = target_frame;
  out.rotation = std::atan2(cross, dot);
  out.translation = c_tgt - rotation_matrix(out.rotation) * c_src;
  double sq = 0.0;
  for (const auto& c : correspondences) sq += (out.apply(c.source) - c.target).squaredNorm();
  out.residual_rms = std::sqrt(sq / n);
  return out;
}

std::vector<std::pair<TrackId, TrackId>> match_cross_robot_tracks(std::span<const TrackView> local,
                                                                   std::span<const TrackView> remote_aligned,
                                                                   const ConsensusParams& params) {
  std::vector<std::pair<TrackId, TrackId>> out;
  if (local.empty() || remote_aligned.empty()) return out;

  const double sentinel = 1e6 * (params.match_dist_threshold + 1.0);
  Eigen::MatrixXd cost(local.size(), remote_aligned.size());
  for (std::size_t i = 0; i < local.size(); ++i) {
    const Vec2 pi(local[i].x(0), local[i].x(2));
    const Vec2 vi(local[i].x(1), local[i].x(3));
    for (std::size_t j = 0; j < remote_aligned.size(); ++j) {
      const Vec2 pj(remote_aligned[j].x(0), remote_aligned[j].x(2));
      const Vec2 vj(remote_aligned[j].x(1), remote_aligned[j].x(3));
      const double d = (pi - pj).norm();
      const bool close = d <= params.match_dist_threshold;
      const bool consistent = (vi - vj).norm() <= params.match_velocity_tolerance;
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = close && consistent ? d : sentinel;
    }
  }
  for (const auto& [r, c] : hungarian(cost)) {
    if (cost(r, c) >= sentinel) continue;
    out.emplace_back(local[static_cast<std::size_t>(r)].id, remote_aligned[static_cast<std::size_t>(c)].id);
  }
  return out;
}

std::vector<TrackId> MistrackMonitor::observe(const std::map<TrackId, double>& residuals,
                                              const ConsensusParams& params) {
  std::vector<TrackId> flagged;
  for (const auto& [id, residual] : residuals) {
    int& streak = streaks_[id];
    streak = residual > params.mistrack_residual_threshold ? streak + 1 : 0;
    if (streak >= params.mistrack_patience) flagged.push_back(id);
  }
  return flagged;
}

int MistrackMonitor::streak(TrackId id) const {
  auto it = streaks_.find(id);
  return it == streaks_.end() ? 0 : it->second;
}

void mistrack_filter(std::vector<Track>& tracks, const std::map<TrackId, double>& residuals,
                     const ConsensusParams& params, MistrackMonitor& monitor) {
  std::map<TrackId, double> all;
  for (const auto& t : tracks) {
    if (t.status == TrackStatus::dead) continue;
    auto it = residuals.find(t.id);
    all[t.id] = it == residuals.end() ? 0.0 : it->second;
  }
  const auto flagged = monitor.observe(all, params);
  for (auto& t : tracks) {
    if (std::find(flagged.begin(), flagged.end(), t.id) != flagged.end()) {
      t.status = TrackStatus::dead;
      monitor.forget(t.id);
    }
  }
}

}  // namespace dkcf
