#include "vnav/ransac.hpp"

#include <algorithm>
#include <cmath>

#include "vnav/error.hpp"
#include "vnav/rng.hpp"

namespace vnav {

void RansacConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::InvalidSpec, "ransac iterations must be >= 1");
  if (!(inlier_threshold > 0.0)) throw Error(ErrorCode::InvalidSpec, "ransac threshold must be > 0");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw Error(ErrorCode::InvalidSpec, "ransac confidence must lie in (0, 1)");
  }
}

int adaptive_iterations(double inlier_ratio, std::size_t sample_size, double confidence,
                        int max_iterations) {
  const double p_good = std::pow(std::clamp(inlier_ratio, 0.0, 1.0), double(sample_size));
  if (p_good >= 1.0) return 1;
  if (p_good <= 0.0) return max_iterations;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!std::isfinite(n) || n >= max_iterations) return max_iterations;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

RansacDriver::RansacDriver(std::size_t data_size, std::size_t sample_size, RansacConfig cfg)
    : data_size_(data_size), sample_size_(sample_size), cfg_(cfg) {
  cfg_.validate();
}

std::optional<RansacOutcome> RansacDriver::run(const FitFn& fit, const ScoreFn& score,
                                               const BestFn& on_best) const {
  if (data_size_ < sample_size_) return std::nullopt;
  std::optional<RansacOutcome> best;
  int needed = cfg_.iterations;
  int evaluated = 0;
  for (int i = 0; i < needed; ++i) {
    Rng rng(cfg_.seed, static_cast<std::uint64_t>(i));
    const auto sample = rng.sample_distinct(data_size_, sample_size_);
    ++evaluated;
    if (!fit(sample)) continue;
    auto inliers = score();
    if (!best || inliers.size() > best->inliers.size()) {
      best = RansacOutcome{std::move(inliers), static_cast<std::size_t>(i), 0};
      on_best();
      if (cfg_.early_exit) {
        const double ratio = double(best->inliers.size()) / double(data_size_);
        needed = std::min(cfg_.iterations,
                          adaptive_iterations(ratio, sample_size_, cfg_.confidence, cfg_.iterations));
      }
    }
  }
  if (best) best->hypotheses_evaluated = evaluated;
  return best;
}

}  // namespace vnav
