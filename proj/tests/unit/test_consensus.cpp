#include "dkcf/consensus.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace dkcf;

namespace {

ConsensusParams plain_params() {
  ConsensusParams p;
  p.A = Mat4::Identity();
  p.Q = Mat4::Zero();
  return p;
}

Vec4 random_vec(std::mt19937_64& gen, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(gen), u(gen), u(gen), u(gen)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Information form

TEST(InformationPair, UnitNoise) {
  const auto p = information_pair(position_measurement(), {1.0, 2.0}, Mat2::Identity());
  EXPECT_EQ(p.u, Vec4(1.0, 0.0, 2.0, 0.0));
  EXPECT_EQ(p.U, Vec4(1.0, 0.0, 1.0, 0.0).asDiagonal().toDenseMatrix());
}

TEST(InformationPair, DiagonalNoise) {
  Mat2 R = Mat2::Zero();
  R(0, 0) = 4.0;
  R(1, 1) = 1.0;
  const auto p = information_pair(position_measurement(), {2.0, 3.0}, R);
  EXPECT_NEAR((p.u - Vec4(0.5, 0.0, 3.0, 0.0)).norm(), 0.0, 1e-15);
}

TEST(InformationPair, SingularNoiseThrows) {
  EXPECT_THROW(information_pair(position_measurement(), {0.0, 0.0}, Mat2::Zero()), NumericalError);
}

TEST(AggregateInformation, Sums) {
  std::mt19937_64 gen(1);
  InformationPair a{random_vec(gen, 1.0), oracle::random_spd(gen, 4, 0.1, 1.0)};
  const auto alone = aggregate_information(a, {});
  EXPECT_EQ(alone.u, a.u);
  EXPECT_EQ(alone.U, a.U);

  const std::vector<InformationPair> same{a};
  const auto doubled = aggregate_information(a, same);
  EXPECT_EQ(doubled.u, 2.0 * a.u);
  EXPECT_EQ(doubled.U, 2.0 * a.U);

  const std::vector<InformationPair> others{{random_vec(gen, 1.0), oracle::random_spd(gen, 4, 0.1, 1.0)},
                                            {random_vec(gen, 1.0), oracle::random_spd(gen, 4, 0.1, 1.0)}};
  const auto sum = aggregate_information(a, others);
  for (int k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(sum.u(k), a.u(k) + others[0].u(k) + others[1].u(k));
    for (int l = 0; l < 4; ++l) EXPECT_DOUBLE_EQ(sum.U(k, l), a.U(k, l) + others[0].U(k, l) + others[1].U(k, l));
  }
}

TEST(InformationGain, NoInformationReturnsPrior) {
  std::mt19937_64 gen(2);
  const Mat4 P = oracle::random_spd(gen, 4, 0.1, 3.0);
  EXPECT_LT((information_gain(P, Mat4::Zero()) - P).norm(), 1e-12);
}

TEST(InformationGain, HandInverse) {
  const Mat4 M = information_gain(Mat4::Identity(), Vec4(1, 0, 1, 0).asDiagonal().toDenseMatrix());
  EXPECT_LT((M - Mat4(Vec4(0.5, 1.0, 0.5, 1.0).asDiagonal())).norm(), 1e-15);
}

TEST(InformationGain, HugeInformationCollapses) {
  EXPECT_LT(information_gain(Mat4::Identity(), 1e12 * Mat4::Identity()).trace(), 1e-9);
}

TEST(InformationGain, SingularPriorReportsCondition) {
  Mat4 P = Mat4::Identity();
  P(3, 3) = 0.0;
  try {
    information_gain(P, Mat4::Identity());
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("condition"), std::string::npos);
  }
}

TEST(InformationGain, LoewnerBelowPrior) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 300; ++i) {
    const Mat4 P = oracle::random_spd(gen, 4, 0.05, 5.0);
    Mat4 Y = Mat4::Zero();
    Y.topLeftCorner<2, 2>() = oracle::random_spd(gen, 2, 0.0, 10.0);
    const Mat4 M = information_gain(P, Y);
    Eigen::SelfAdjointEigenSolver<Mat4> eig(symmetrized(P - M));
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
    EXPECT_GE(covariance_health(M).min_eigenvalue, -1e-12);
  }
}

// ---------------------------------------------------------------------------
// Standard and adaptive updates

TEST(DkcfStandard, NoNeighboursConsistentInformationIsFixedPoint) {
  std::mt19937_64 gen(4);
  auto params = plain_params();
  params.A = cv_transition(0.1);
  params.Q = white_noise_acceleration(0.1, 0.5);
  StateEstimate local{random_vec(gen, 5.0), oracle::random_spd(gen, 4, 0.1, 2.0)};
  InformationPair info;  // y = Y x with Y = 0
  const auto out = dkcf_update_standard(local, info, {}, params);
  EXPECT_EQ(out.estimate.x, local.x);
  EXPECT_LT((out.estimate.P - (params.A * local.P * params.A.transpose() + params.Q)).norm(), 1e-12);
}

TEST(DkcfStandard, IdenticalNeighboursGiveZeroConsensusTerm) {
  std::mt19937_64 gen(5);
  StateEstimate local{random_vec(gen, 5.0), oracle::random_spd(gen, 4, 0.1, 2.0)};
  const std::vector<Vec4> nbrs(3, local.x);
  const auto out = dkcf_update_standard(local, {}, nbrs, plain_params());
  EXPECT_EQ(out.consensus_term, Vec4::Zero());
}

TEST(DkcfStandard, DampedGainOnOffset) {
  // P = I with full unit information gives M = I/2, and ||I/2||_F = 1.
  StateEstimate local;
  local.P = Mat4::Identity();
  InformationPair info;
  info.U = Mat4::Identity();
  const std::vector<Vec4> nbrs{Vec4(1.0, 0.0, 0.0, 0.0)};
  const auto out = dkcf_update_standard(local, info, nbrs, plain_params());
  EXPECT_LT((out.gain - 0.5 * Mat4::Identity()).norm(), 1e-15);
  EXPECT_LT((out.consensus_term - Vec4(0.25, 0.0, 0.0, 0.0)).norm(), 1e-15);
  EXPECT_LT((out.estimate.x - Vec4(0.25, 0.0, 0.0, 0.0)).norm(), 1e-15);
}

TEST(DkcfStandard, SpectralNormVariant) {
  StateEstimate local;
  local.P = Mat4::Identity();
  InformationPair info;
  info.U = Vec4(3.0, 1.0, 1.0, 1.0).asDiagonal();  // M = diag(1/4, 1/2, 1/2, 1/2)
  auto params = plain_params();
  params.norm = GainNorm::spectral;
  const std::vector<Vec4> nbrs{Vec4(0.0, 2.0, 0.0, 0.0)};
  const auto out = dkcf_update_standard(local, info, nbrs, params);
  EXPECT_NEAR(out.consensus_term(1), 0.5 / 1.5 * 2.0, 1e-15);
}

TEST(AdaptiveWeights, Examples) {
  EXPECT_EQ(adaptive_weights(std::vector<double>{1.0, 1.0}), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(adaptive_weights(std::vector<double>{2.7}), std::vector<double>{1.0});
  const auto w = adaptive_weights(std::vector<double>{1.0, 3.0});
  EXPECT_NEAR(w[0], 0.75, 1e-15);
  EXPECT_NEAR(w[1], 0.25, 1e-15);
}

TEST(AdaptiveWeights, RejectsBadSigmas) {
  EXPECT_THROW(adaptive_weights(std::vector<double>{1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(adaptive_weights(std::vector<double>{-1.0}), std::invalid_argument);
  EXPECT_THROW(adaptive_weights(std::vector<double>{std::numeric_limits<double>::infinity()}), std::invalid_argument);
  EXPECT_THROW(adaptive_weights(std::vector<double>{}), std::invalid_argument);
}

TEST(AdaptiveWeights, TinySigmaIsClamped) {
  const auto w = adaptive_weights(std::vector<double>{1e-20, 1e-9});
  EXPECT_NEAR(w[0], 0.5, 1e-12);
}

TEST(AdaptiveWeights, SumToOneAndScaleInvariant) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> s(1e-3, 1e3);
  std::uniform_int_distribution<int> count(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> sig(count(gen));
    for (auto& v : sig) v = s(gen);
    const auto w = adaptive_weights(sig);
    double total = 0.0;
    for (double v : w) total += v;
    ASSERT_NEAR(total, 1.0, 1e-12);
    const double c = s(gen);
    std::vector<double> scaled = sig;
    for (auto& v : scaled) v *= c;
    const auto ws = adaptive_weights(scaled);
    for (std::size_t k = 0; k < w.size(); ++k) ASSERT_NEAR(ws[k], w[k], 1e-12);
    // Smaller sigma never gets less weight.
    for (std::size_t a = 0; a < sig.size(); ++a) {
      for (std::size_t b = 0; b < sig.size(); ++b) {
        if (sig[a] < sig[b]) ASSERT_GE(w[a], w[b]);
      }
    }
  }
}

TEST(DkcfAdaptive, HandExample) {
  StateEstimate local;
  local.P = Mat4::Identity();
  const std::vector<Vec4> nbrs{Vec4(4.0, 0.0, 0.0, 0.0)};
  const std::vector<double> w{0.25};
  const auto out = dkcf_update_adaptive(local, {}, nbrs, w, plain_params());
  EXPECT_LT((out.consensus_term - Vec4(1.0, 0.0, 0.0, 0.0)).norm(), 1e-15);
}

TEST(DkcfAdaptive, ZeroWeightsReduceToInformationUpdate) {
  std::mt19937_64 gen(7);
  StateEstimate local{random_vec(gen, 3.0), oracle::random_spd(gen, 4, 0.1, 2.0)};
  const auto info = information_pair(position_measurement(), {0.4, -0.9}, 0.04 * Mat2::Identity());
  const std::vector<Vec4> nbrs{random_vec(gen, 3.0), random_vec(gen, 3.0)};
  // Weights that an enormous neighbour sigma produces after the 1e-9 clamp on self.
  const auto w = adaptive_weights(std::vector<double>{1e-9, 1e300, 1e300});
  const std::vector<double> nw{w[1], w[2]};
  const auto a = dkcf_update_adaptive(local, info, nbrs, nw, plain_params());
  const auto s = dkcf_update_standard(local, info, {}, plain_params());
  EXPECT_LT((a.estimate.x - s.estimate.x).norm(), 1e-12);
  // Against a direct Kalman update on the same measurement.
  ModelParams m = make_cv_model(0.1, 0.0, 0.2);
  const auto kf = kf_update(local, {0.4, -0.9}, m);
  EXPECT_LT((a.estimate.x - kf.x).norm(), 1e-10);
  EXPECT_LT((a.gain - kf.P).norm(), 1e-10);
}

TEST(DkcfAdaptive, IdenticalNeighboursIgnoreWeights) {
  std::mt19937_64 gen(8);
  StateEstimate local{random_vec(gen, 3.0), oracle::random_spd(gen, 4, 0.1, 2.0)};
  const std::vector<Vec4> nbrs(2, local.x);
  const std::vector<double> w{0.7, 0.2};
  EXPECT_EQ(dkcf_update_adaptive(local, {}, nbrs, w, plain_params()).consensus_term, Vec4::Zero());
}

TEST(DkcfAdaptive, MisalignedWeightsThrow) {
  const std::vector<Vec4> nbrs(2, Vec4::Zero());
  const std::vector<double> w{0.5};
  EXPECT_THROW(dkcf_update_adaptive({}, {}, nbrs, w, plain_params()), std::invalid_argument);
}

// Identical estimates and information consistent with them leave the state
// unchanged in both forms.
TEST(DkcfFixedPoint, BothFormsRandomized) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 500; ++trial) {
    StateEstimate local{random_vec(gen, 10.0), oracle::random_spd(gen, 4, 0.05, 4.0)};
    const Vec2 z(local.x(0), local.x(2));
    InformationPair info = information_pair(position_measurement(), z, oracle::random_spd(gen, 2, 0.01, 1.0));
    const std::vector<InformationPair> more{
        information_pair(position_measurement(), z, oracle::random_spd(gen, 2, 0.01, 1.0))};
    info = aggregate_information(info, more);
    const std::vector<Vec4> nbrs(3, local.x);
    const std::vector<double> w{0.3, 0.1, 0.2};
    const auto s = dkcf_update_standard(local, info, nbrs, plain_params());
    const auto a = dkcf_update_adaptive(local, info, nbrs, w, plain_params());
    const double tol = 1e-12 * std::max(1.0, local.x.norm());
    ASSERT_LT((s.estimate.x - local.x).norm(), tol) << trial;
    ASSERT_LT((a.estimate.x - local.x).norm(), tol) << trial;
  }
}

TEST(UncertaintySigma, CombinesLocalizationAndTrack) {
  Mat4 P = Mat4::Zero();
  P(0, 0) = 0.5;
  P(2, 2) = 1.5;
  EXPECT_DOUBLE_EQ(uncertainty_sigma(0.0, P), 1.0);
  EXPECT_DOUBLE_EQ(uncertainty_sigma(std::sqrt(3.0), P), 2.0);
}

// ---------------------------------------------------------------------------
// Frames

TEST(FrameAlignment, IdenticalPointsGiveIdentity) {
  const std::vector<Correspondence> c{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{0, 2}, {0, 2}}};
  const auto t = estimate_frame_alignment(c, 1, 0, 3);
  EXPECT_NEAR(t.rotation, 0.0, 1e-15);
  EXPECT_LT(t.translation.norm(), 1e-15);
  EXPECT_LT(t.residual_rms, 1e-15);
  EXPECT_EQ(t.source_frame, 1);
  EXPECT_EQ(t.target_frame, 0);
}

TEST(FrameAlignment, RecoversQuarterTurnAndShift) {
  FrameTransform planted{std::numbers::pi / 2.0, {1.0, 2.0}, 1, 0, 0.0};
  std::vector<Correspondence> c;
  for (const Vec2 p : {Vec2(0.0, 0.0), Vec2(3.0, -1.0), Vec2(-2.0, 4.0)}) c.push_back({planted.apply(p), p});
  const auto t = estimate_frame_alignment(c, 1, 0, 3);
  EXPECT_NEAR(t.rotation, std::numbers::pi / 2.0, 1e-9);
  EXPECT_LT((t.translation - Vec2(1.0, 2.0)).norm(), 1e-9);
  EXPECT_LT(t.residual_rms, 1e-9);
}

TEST(FrameAlignment, RandomPlantedTransforms) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> ang(-std::numbers::pi + 1e-6, std::numbers::pi - 1e-6);
  std::uniform_int_distribution<int> count(3, 30);
  for (int trial = 0; trial < 1000; ++trial) {
    FrameTransform planted{ang(gen), {u(gen), u(gen)}, 1, 0, 0.0};
    std::vector<Correspondence> c;
    const int n = count(gen);
    for (int k = 0; k < n; ++k) {
      const Vec2 p(u(gen), u(gen));
      c.push_back({planted.apply(p), p});
    }
    const auto t = estimate_frame_alignment(c, 1, 0, 3);
    ASSERT_NEAR(normalize_angle(t.rotation - planted.rotation), 0.0, 1e-9) << trial;
    ASSERT_LT((t.translation - planted.translation).norm(), 1e-9) << trial;
  }
}

TEST(FrameAlignment, DegenerateInputs) {
  const std::vector<Correspondence> one{{{1, 1}, {0, 0}}};
  EXPECT_THROW(estimate_frame_alignment(one, 1, 0, 1), DegenerateGeometryError);
  const std::vector<Correspondence> same{{{1, 1}, {0, 0}}, {{1, 1}, {0, 0}}, {{1, 1}, {0, 0}}};
  EXPECT_THROW(estimate_frame_alignment(same, 1, 0, 3), DegenerateGeometryError);
  const std::vector<Correspondence> two{{{1, 1}, {0, 0}}, {{2, 1}, {1, 0}}};
  EXPECT_THROW(estimate_frame_alignment(two, 1, 0, 3), DegenerateGeometryError);
  EXPECT_NO_THROW(estimate_frame_alignment(two, 1, 0, 2));
}

TEST(FrameTransform, InverseAndCompose) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const FrameTransform a{normalize_angle(u(gen)), {u(gen), u(gen)}, 1, 0, 0.0};
    const FrameTransform b{normalize_angle(u(gen)), {u(gen), u(gen)}, 2, 1, 0.0};
    const Vec2 p(u(gen), u(gen));
    EXPECT_LT((a.inverse().apply(a.apply(p)) - p).norm(), 1e-12);
    const auto ab = compose(a, b);
    EXPECT_LT((ab.apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
    EXPECT_EQ(ab.source_frame, 2);
    EXPECT_EQ(ab.target_frame, 0);
    const Vec4 x = random_vec(gen, 3.0);
    const Vec4 y = a.apply_state(x);
    EXPECT_NEAR(Vec2(y(1), y(3)).norm(), Vec2(x(1), x(3)).norm(), 1e-12);
    const Mat4 P = oracle::random_spd(gen, 4, 0.1, 2.0);
    EXPECT_NEAR(a.apply_covariance(P).trace(), P.trace(), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Identity and mistracks

TEST(CrossRobotMatch, IdenticalTracksAllMatch) {
  const std::vector<TrackView> local{{1, {0, 1, 0, 0}}, {2, {5, 0, 5, 0}}};
  const std::vector<TrackView> remote{{11, {5, 0, 5, 0}}, {12, {0, 1, 0, 0}}};
  const auto m = match_cross_robot_tracks(local, remote, plain_params());
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], std::make_pair(TrackId{1}, TrackId{12}));
  EXPECT_EQ(m[1], std::make_pair(TrackId{2}, TrackId{11}));
}

TEST(CrossRobotMatch, FarTrackUnmatched) {
  const auto params = plain_params();
  const std::vector<TrackView> local{{1, {0, 0, 0, 0}}};
  const std::vector<TrackView> remote{{11, {10.0 * params.match_dist_threshold, 0, 0, 0}}};
  EXPECT_TRUE(match_cross_robot_tracks(local, remote, params).empty());
}

TEST(CrossRobotMatch, VelocityMismatchUnmatched) {
  const std::vector<TrackView> local{{1, {0, 1, 0, 0}}};
  const std::vector<TrackView> remote{{11, {0.1, -1, 0, 0}}};
  EXPECT_TRUE(match_cross_robot_tracks(local, remote, plain_params()).empty());
}

TEST(CrossRobotMatch, CrossingPairsAreGloballyOptimal) {
  // Local 0 at 0, local 1 at 1.0; remotes at 0.6 and 1.9. Greedy pairs
  // (1, r0) at 0.4 and strands local 0 (1.9 > gate); the optimum is in order.
  const std::vector<TrackView> local{{1, {0.0, 0, 0, 0}}, {2, {1.0, 0, 0, 0}}};
  const std::vector<TrackView> remote{{11, {0.6, 0, 0, 0}}, {12, {1.9, 0, 0, 0}}};
  const auto params = plain_params();
  const auto m = match_cross_robot_tracks(local, remote, params);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_count = 0;
  for (const bool swap : {false, true}) {
    double cost = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      const double d = std::abs(local[i].x(0) - remote[swap ? 1 - i : i].x(0));
      if (d <= params.match_dist_threshold) {
        cost += d;
        ++count;
      }
    }
    if (count > best_count || (count == best_count && cost < best)) {
      best = cost;
      best_count = count;
    }
  }
  ASSERT_EQ(m.size(), best_count);
  double got = 0.0;
  for (const auto& [l, r] : m) got += std::abs(local[l == 1 ? 0 : 1].x(0) - remote[r == 11 ? 0 : 1].x(0));
  EXPECT_NEAR(got, best, 1e-12);
}

TEST(Mistrack, ZeroResidualsNeverRemove) {
  std::vector<Track> tracks(3);
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    tracks[k].id = static_cast<TrackId>(k);
    tracks[k].status = TrackStatus::confirmed;
  }
  MistrackMonitor monitor;
  for (int t = 0; t < 100; ++t) mistrack_filter(tracks, {{0, 0.0}, {1, 0.0}}, plain_params(), monitor);
  for (const auto& t : tracks) EXPECT_NE(t.status, TrackStatus::dead);
}

TEST(Mistrack, RemovedOnPatienceTick) {
  const auto params = plain_params();
  std::vector<Track> tracks(1);
  tracks[0].id = 7;
  MistrackMonitor monitor;
  for (int t = 1; t <= params.mistrack_patience; ++t) {
    mistrack_filter(tracks, {{7, 2.0 * params.mistrack_residual_threshold}}, params, monitor);
    EXPECT_EQ(tracks[0].status == TrackStatus::dead, t == params.mistrack_patience) << t;
  }
}

TEST(Mistrack, StreakResetsBelowThreshold) {
  const auto params = plain_params();
  std::vector<Track> tracks(1);
  tracks[0].id = 7;
  MistrackMonitor monitor;
  for (int round = 0; round < 5; ++round) {
    for (int t = 1; t < params.mistrack_patience; ++t) {
      mistrack_filter(tracks, {{7, 5.0}}, params, monitor);
    }
    EXPECT_EQ(monitor.streak(7), params.mistrack_patience - 1);
    mistrack_filter(tracks, {{7, 0.5 * params.mistrack_residual_threshold}}, params, monitor);
    EXPECT_EQ(monitor.streak(7), 0);
    EXPECT_NE(tracks[0].status, TrackStatus::dead);
  }
  // Exactly at the threshold is not "above".
  for (int t = 0; t < 3 * params.mistrack_patience; ++t) {
    mistrack_filter(tracks, {{7, params.mistrack_residual_threshold}}, params, monitor);
  }
  EXPECT_NE(tracks[0].status, TrackStatus::dead);
}
