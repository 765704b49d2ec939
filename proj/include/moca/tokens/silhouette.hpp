#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "moca/errors.hpp"

namespace moca::tokens {

// Mean silhouette coefficient with Euclidean distance. Points alone in their
// cluster contribute 0; a point with a = b = 0 also contributes 0.
inline double silhouette_score(std::span<const std::vector<double>> points, std::span<const int> labels) {
  const std::size_t n = points.size();
  if (labels.size() != n) throw DimensionError("silhouette: label count differs from point count");
  if (n < 2) throw ValidationError("silhouette: need at least two points");
  std::map<int, std::size_t> cluster_size;
  for (int l : labels) ++cluster_size[l];
  if (cluster_size.size() < 2) throw ValidationError("silhouette: need at least two distinct labels");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw DimensionError("silhouette: points differ in dimension");

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += (points[i][k] - points[j][k]) * (points[i][k] - points[j][k]);
      dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
    }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cluster_size[labels[i]] == 1) continue;
    std::map<int, double> sums;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[labels[j]] += dist[i * n + j];
    const double a = sums[labels[i]] / static_cast<double>(cluster_size[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sums)
      if (l != labels[i]) b = std::min(b, s / static_cast<double>(cluster_size[l]));
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

}  // namespace moca::tokens
