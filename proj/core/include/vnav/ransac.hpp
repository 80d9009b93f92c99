#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace vnav {

struct RansacConfig {
  int iterations = 500;
  double inlier_threshold = 5.0;  // pixels for PnP, model units for planes
  double confidence = 0.99;
  std::uint64_t seed = 0;
  // When false every one of `iterations` hypotheses is evaluated.
  bool early_exit = true;

  static RansacConfig pnp_defaults() { return {}; }
  static RansacConfig plane_defaults() { return {500, 0.01, 0.99, 0, true}; }

  /// Throws InvalidSpec when a field is out of range.
  void validate() const;
};

/// Standard adaptive bound on the number of hypotheses needed to draw one
/// all-inlier sample with the given confidence, capped at max_iterations.
int adaptive_iterations(double inlier_ratio, std::size_t sample_size, double confidence,
                        int max_iterations);

struct RansacOutcome {
  std::vector<std::size_t> inliers;
  std::size_t best_hypothesis = 0;
  int hypotheses_evaluated = 0;
};

/// Model-agnostic hypothesize-and-verify loop.
///
/// Hypothesis i draws its sample from Rng(cfg.seed, i), so the sample
/// schedule depends only on the seed. `fit` returns false for degenerate
/// samples; `score` returns the consensus set of the model most recently
/// fitted. The caller keeps the best model through `on_best`.
class RansacDriver {
 public:
  using FitFn = std::function<bool(const std::vector<std::size_t>& sample)>;
  using ScoreFn = std::function<std::vector<std::size_t>()>;
  using BestFn = std::function<void()>;

  RansacDriver(std::size_t data_size, std::size_t sample_size, RansacConfig cfg);

  std::optional<RansacOutcome> run(const FitFn& fit, const ScoreFn& score, const BestFn& on_best) const;

 private:
  std::size_t data_size_;
  std::size_t sample_size_;
  RansacConfig cfg_;
};

}  // namespace vnav
