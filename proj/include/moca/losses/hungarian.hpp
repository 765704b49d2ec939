#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "moca/errors.hpp"

namespace moca::losses {

// Dense rows x cols cost matrix, row-major. Rows are queries, columns are
// ground-truth objects.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

// (query_index, gt_index) pairs sorted by query index.
using Matching = std::vector<std::pair<std::size_t, std::size_t>>;

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path assignment (Jonker-Volgenant potentials) for an
// n x m matrix with n <= m; returns the column of every row. Entries equal to
// +inf are forbidden. Returns an empty vector if no finite assignment exists.
inline std::vector<std::size_t> solve_rows_le_cols(std::size_t n, std::size_t m,
                                                   const std::vector<double>& a) {
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double c = a[(i0 - 1) * m + (j - 1)];
        const double cur = c == kInf ? kInf : c - u[i0] - v[j];
        if (cur < minv[j]) minv[j] = cur, way[j] = j0;
        if (minv[j] < delta) delta = minv[j], j1 = j;
      }
      if (j1 == 0 || delta == kInf) return {};
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

// Minimum total cost of a matching of size min(rows, cols) restricted to the
// allowed rows and columns; +inf if none exists.
inline double optimal_cost(const CostMatrix& c, const std::vector<char>& row_ok, const std::vector<char>& col_ok,
                           std::size_t need) {
  std::vector<std::size_t> rs, cs;
  for (std::size_t r = 0; r < c.rows; ++r)
    if (row_ok[r]) rs.push_back(r);
  for (std::size_t k = 0; k < c.cols; ++k)
    if (col_ok[k]) cs.push_back(k);
  if (need == 0) return 0.0;
  const bool rows_small = rs.size() <= cs.size();
  const std::size_t n = rows_small ? rs.size() : cs.size(), m = rows_small ? cs.size() : rs.size();
  if (n < need) return kInf;
  std::vector<double> a(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) a[i * m + j] = rows_small ? c.at(rs[i], cs[j]) : c.at(rs[j], cs[i]);
  const auto sol = solve_rows_le_cols(n, m, a);
  if (sol.empty()) return kInf;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += a[i * m + sol[i]];
  return total;
}

}  // namespace detail

inline double matching_cost(const CostMatrix& c, const Matching& m) {
  double total = 0.0;
  for (auto [q, g] : m) total += c.at(q, g);
  return total;
}

// Minimum-cost matching of size min(rows, cols). Among optimal matchings
// (costs equal up to a 1e-12 relative tolerance) the one whose query-sorted
// pair list is lexicographically smallest is returned.
inline Matching hungarian(const CostMatrix& cost) {
  if (cost.values.size() != cost.rows * cost.cols) throw DimensionError("hungarian: cost size mismatch");
  for (double v : cost.values)
    if (!std::isfinite(v)) throw ValidationError("hungarian: non-finite cost entry");
  Matching out;
  std::size_t need = std::min(cost.rows, cost.cols);
  if (need == 0) return out;

  std::vector<char> row_ok(cost.rows, 1), col_ok(cost.cols, 1);
  double remaining = detail::optimal_cost(cost, row_ok, col_ok, need);
  auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };

  for (std::size_t q = 0; q < cost.rows && need > 0; ++q) {
    row_ok[q] = 0;
    bool assigned = false;
    for (std::size_t g = 0; g < cost.cols && !assigned; ++g) {
      if (!col_ok[g]) continue;
      col_ok[g] = 0;
      const double rest = detail::optimal_cost(cost, row_ok, col_ok, need - 1);
      if (same(cost.at(q, g) + rest, remaining)) {
        out.emplace_back(q, g);
        remaining = rest;
        --need;
        assigned = true;
      } else {
        col_ok[g] = 1;
      }
    }
    // left unmatched: the remaining rows carry the optimum
    if (!assigned) remaining = detail::optimal_cost(cost, row_ok, col_ok, need);
  }
  return out;
}

}  // namespace moca::losses
