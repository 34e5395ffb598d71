#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dkcf {

/// Mixes a master seed with stream keys into an independent 64-bit seed
/// (splitmix64 finalizer applied per key).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys);

/// Seeded generator whose draws are identical on every platform.
///
/// std::mt19937_64 is bit-specified by the standard, but the std
/// distributions are not, so uniform and Gaussian variates are built here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Zero-mean Gaussian (Box-Muller, no cached second variate).
  double gaussian(double stddev);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dkcf
