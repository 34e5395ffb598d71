#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dkcf {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat24 = Eigen::Matrix<double, 2, 4>;

using RobotId = int;
using TrackId = std::int64_t;
using Tick = std::int64_t;

/// Planar pose. Heading is kept in (-pi, pi].
struct Pose2D {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
};

/// Wraps an angle into (-pi, pi].
double normalize_angle(double angle);

/// Constant-velocity state [x, vx, y, vy] and its covariance.
struct StateEstimate {
  Vec4 x = Vec4::Zero();
  Mat4 P = Mat4::Identity();

  Vec2 position() const { return {x(0), x(2)}; }
  Vec2 velocity() const { return {x(1), x(3)}; }
  /// Trace of the position block of P.
  double position_trace() const { return P(0, 0) + P(2, 2); }
};

/// Raised when a matrix that must be inverted is singular or too badly
/// conditioned to trust.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when point geometry leaves a rigid transform unobservable.
class DegenerateGeometryError : public std::runtime_error {
 public:
  explicit DegenerateGeometryError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for invalid configuration. Carries every violated field.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

/// Symmetric part of a square matrix.
template <typename Derived>
typename Derived::PlainObject symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (0.5 * (m + m.transpose())).eval();
}

/// Largest |P - P^T| entry and smallest eigenvalue of the symmetric part.
struct CovarianceHealth {
  double asymmetry = 0.0;
  double min_eigenvalue = 0.0;
};
CovarianceHealth covariance_health(const Mat4& P);

}  // namespace dkcf
