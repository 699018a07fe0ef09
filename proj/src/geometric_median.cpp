#include <cmath>
#include <string>

#include "saesteer/error.hpp"
#include "saesteer/trainer.hpp"

namespace saesteer {

std::vector<double> geometric_median(std::span<const std::span<const float>> points,
                                     double tolerance, std::size_t max_iterations) {
  if (points.empty()) throw ValidationError("geometric median of an empty point set");
  const std::size_t d = points.front().size();

  std::vector<double> current(d, 0.0);
  for (const auto& p : points) {
    check_dimension("geometric median point", d, p.size());
    for (std::size_t i = 0; i < d; ++i) current[i] += p[i];
  }
  for (auto& c : current) c /= static_cast<double>(points.size());

  std::vector<double> next(d);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    double weight_sum = 0.0;
    for (const auto& p : points) {
      double dist2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = p[i] - current[i];
        dist2 += diff * diff;
      }
      const double dist = std::sqrt(dist2);
      if (dist <= 1e-12) continue;
      const double w = 1.0 / dist;
      weight_sum += w;
      for (std::size_t i = 0; i < d; ++i) next[i] += w * p[i];
    }
    // Every point coincides with the iterate.
    if (weight_sum == 0.0) break;

    double step2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      next[i] /= weight_sum;
      const double diff = next[i] - current[i];
      step2 += diff * diff;
    }
    current.swap(next);
    if (std::sqrt(step2) <= tolerance) break;
  }
  return current;
}

}  // namespace saesteer
