#include "dkcf/types.hpp"
#include "dkcf/rng.hpp"

#include <cmath>
#include <numbers>

namespace dkcf {

double normalize_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

namespace {
std::string join_issues(const std::vector<std::string>& issues) {
  std::string out = "invalid configuration:";
  for (const auto& issue : issues) {
    out += "\n  - ";
    out += issue;
  }
  return out;
}
}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

CovarianceHealth covariance_health(const Mat4& P) {
  CovarianceHealth h;
  h.asymmetry = (P - P.transpose()).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Mat4> eig(symmetrized(P), Eigen::EigenvaluesOnly);
  h.min_eigenvalue = eig.eigenvalues().minCoeff();
  return h;
}

// ---------------------------------------------------------------------------

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return h;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian(double stddev) {
  if (stddev == 0.0) return 0.0;
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dkcf
