#pragma once

#include <cstdint>
#include <vector>

namespace vnav {

/// Counter-based pseudo random stream.
///
/// Every stream is identified by (seed, stream id); the k-th draw is a pure
/// function of (seed, stream id, k). Gaussian draws use Box-Muller on top of
/// the integer stream so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal(double mean = 0.0, double sigma = 1.0);
  bool bernoulli(double p);

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);
/// Derives a child seed; used to give each subsystem an independent stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace vnav
