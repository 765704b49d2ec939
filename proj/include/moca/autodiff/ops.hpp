#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moca/autodiff/tensor.hpp"

// Differentiable operations on Tensor. Broadcasting is limited to explicit
// row-vector variants (add_rowvec, mul_rowvec); everything else requires
// matching shapes and throws DimensionError otherwise.

namespace moca::ad {

namespace detail {

inline std::vector<double>* grad_slot(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

inline const std::vector<double>& parent_value(const Node& self, std::size_t i) {
  return self.parents[i]->value;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
}

inline void require_rowvec(const Tensor& a, const Tensor& v, const char* op) {
  if (v.rows() != 1 || v.cols() != a.cols()) {
    throw DimensionError(std::string(op) + ": expected row vector of width " + std::to_string(a.cols()) +
                         ", got " + shape_str(v.rows(), v.cols()));
  }
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Elementwise unary op with derivative expressed through (input, output).
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df) {
  std::vector<double> out(a.size());
  const auto& x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result(a.rows(), a.cols(), std::move(out), {a}, [df](Node& self) {
    auto* ga = grad_slot(self, 0);
    if (!ga) return;
    const auto& x = parent_value(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.rows(), a.cols()) + " x " +
                         shape_str(b.rows(), b.cols()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* bp = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return detail::make_result(m, n, std::move(c), {a, b}, [m, k, n](detail::Node& self) {
    const auto& av = detail::parent_value(self, 0);
    const auto& bv = detail::parent_value(self, 1);
    const auto& g = self.grad;
    if (auto* ga = detail::grad_slot(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          (*ga)[i * k + p] += s;
        }
    }
    if (auto* gb = detail::grad_slot(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

// a * b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_str(a.rows(), a.cols()) + " x " +
                         shape_str(b.rows(), b.cols()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> c(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
      c[i * n + j] = s;
    }
  return detail::make_result(m, n, std::move(c), {a, b}, [m, k, n](detail::Node& self) {
    const auto& av = detail::parent_value(self, 0);
    const auto& bv = detail::parent_value(self, 1);
    const auto& g = self.grad;
    if (auto* ga = detail::grad_slot(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) (*ga)[i * k + p] += gij * bv[j * k + p];
        }
    }
    if (auto* gb = detail::grad_slot(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) (*gb)[j * k + p] += gij * av[i * k + p];
        }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto& x = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return detail::make_result(c, r, std::move(out), {a}, [r, c](detail::Node& self) {
    if (auto* ga = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += self.grad[j * r + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t s = 0; s < 2; ++s)
      if (auto* g = detail::grad_slot(self, s))
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = detail::grad_slot(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = detail::parent_value(self, 0);
    const auto& bv = detail::parent_value(self, 1);
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (auto* g = detail::grad_slot(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.values()[i] == 0.0) throw DegenerateInputError("div: division by zero");
    out[i] = a.values()[i] / b.values()[i];
  }
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& bv = detail::parent_value(self, 1);
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] / bv[i];
    if (auto* g = detail::grad_slot(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i] * self.value[i] / bv[i];
  });
}

// Subgradient convention at ties: the first operand receives the gradient.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "minimum");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.values()[i], b.values()[i]);
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = detail::parent_value(self, 0);
    const auto& bv = detail::parent_value(self, 1);
    auto* ga = detail::grad_slot(self, 0);
    auto* gb = detail::grad_slot(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] <= bv[i]) {
        if (ga) (*ga)[i] += self.grad[i];
      } else if (gb) {
        (*gb)[i] += self.grad[i];
      }
    }
  });
}

inline Tensor maximum(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "maximum");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.values()[i], b.values()[i]);
  return detail::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = detail::parent_value(self, 0);
    const auto& bv = detail::parent_value(self, 1);
    auto* ga = detail::grad_slot(self, 0);
    auto* gb = detail::grad_slot(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] >= bv[i]) {
        if (ga) (*ga)[i] += self.grad[i];
      } else if (gb) {
        (*gb)[i] += self.grad[i];
      }
    }
  });
}

inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  detail::require_rowvec(a, v, "add_rowvec");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] + v.values()[j];
  return detail::make_result(r, c, std::move(out), {a, v}, [r, c](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = detail::grad_slot(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[i * c + j];
  });
}

inline Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  detail::require_rowvec(a, v, "mul_rowvec");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] * v.values()[j];
  return detail::make_result(r, c, std::move(out), {a, v}, [r, c](detail::Node& self) {
    const auto& av = detail::parent_value(self, 0);
    const auto& vv = detail::parent_value(self, 1);
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * c + j] * vv[j];
    if (auto* g = detail::grad_slot(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[i * c + j] * av[i * c + j];
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor exp(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  for (double x : a.values())
    if (!(x > 0.0)) throw DegenerateInputError("log: non-positive input");
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor abs(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::abs(x); },
                       [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor clamp_min(const Tensor& a, double lo) {
  return detail::unary(a, [lo](double x) { return x > lo ? x : lo; },
                       [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return detail::make_result(1, 1, {s}, {a}, [](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0))
      for (double& gi : *g) gi += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// Column-wise mean over rows: [m x n] -> [1 x n].
inline Tensor mean_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw ContractError("mean_rows: no rows");
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a.values()[i * c + j];
  const double inv = 1.0 / static_cast<double>(r);
  for (double& v : out) v *= inv;
  return detail::make_result(1, c, std::move(out), {a}, [r, c, inv](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j] * inv;
  });
}

// ---------------------------------------------------------------------------
// Softmax family

// Row softmax of scale*a. Columns flagged in `col_mask` get probability exactly
// zero and are left out of the max and the normalizer, so a masked row is
// bitwise identical to the softmax of the unmasked columns alone.
inline Tensor softmax_rows(const Tensor& a, double scale_factor = 1.0,
                           std::span<const char> col_mask = {}) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw DimensionError("softmax_rows: empty row dimension");
  if (!(scale_factor > 0.0)) throw ValidationError("softmax_rows: scale must be positive");
  if (!col_mask.empty() && col_mask.size() != c) throw DimensionError("softmax_rows: mask width mismatch");
  auto masked = [&](std::size_t j) { return !col_mask.empty() && col_mask[j]; };
  std::vector<double> out(a.size(), 0.0);
  const auto& x = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (!masked(j)) mx = std::max(mx, scale_factor * x[i * c + j]);
    if (mx == -std::numeric_limits<double>::infinity()) throw DimensionError("softmax_rows: row fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (masked(j)) continue;
      out[i * c + j] = std::exp(scale_factor * x[i * c + j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j)
      if (!masked(j)) out[i * c + j] /= z;
  }
  return detail::make_result(r, c, std::move(out), {a}, [r, c, scale_factor](detail::Node& self) {
    auto* g = detail::grad_slot(self, 0);
    if (!g) return;
    const auto& y = self.value;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        (*g)[i * c + j] += scale_factor * y[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

inline Tensor log_softmax_rows(const Tensor& a, double scale_factor = 1.0) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw DimensionError("log_softmax_rows: empty row dimension");
  if (!(scale_factor > 0.0)) throw ValidationError("log_softmax_rows: scale must be positive");
  std::vector<double> out(a.size());
  const auto& x = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, scale_factor * x[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(scale_factor * x[i * c + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = scale_factor * x[i * c + j] - lse;
  }
  return detail::make_result(r, c, std::move(out), {a}, [r, c, scale_factor](detail::Node& self) {
    auto* g = detail::grad_slot(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        (*g)[i * c + j] += scale_factor * (self.grad[i * c + j] - std::exp(self.value[i * c + j]) * gs);
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization

inline constexpr double kLayerNormEps = 1e-5;

// Per-row standardization without the affine part.
inline Tensor layernorm_rows(const Tensor& a, double eps = kLayerNormEps) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw DimensionError("layernorm_rows: empty row");
  std::vector<double> out(a.size());
  std::vector<double> inv_std(r);
  const auto& x = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x[i * c + j] - mu) * (x[i * c + j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (x[i * c + j] - mu) * inv_std[i];
  }
  return detail::make_result(r, c, std::move(out), {a}, [r, c, inv_std = std::move(inv_std)](detail::Node& self) {
    auto* g = detail::grad_slot(self, 0);
    if (!g) return;
    const auto& xh = self.value;
    const double inv_c = 1.0 / static_cast<double>(c);
    for (std::size_t i = 0; i < r; ++i) {
      double mg = 0.0, mgx = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        mg += self.grad[i * c + j];
        mgx += self.grad[i * c + j] * xh[i * c + j];
      }
      mg *= inv_c;
      mgx *= inv_c;
      for (std::size_t j = 0; j < c; ++j)
        (*g)[i * c + j] += inv_std[i] * (self.grad[i * c + j] - mg - xh[i * c + j] * mgx);
    }
  });
}

inline Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps) {
  return add_rowvec(mul_rowvec(layernorm_rows(a, eps), gamma), beta);
}

// Each row divided by its Euclidean norm.
inline Tensor l2_normalize_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> norms(r);
  const auto& x = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j] * x[i * c + j];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) throw DegenerateInputError("l2_normalize: zero vector");
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] / norms[i];
  }
  return detail::make_result(r, c, std::move(out), {a}, [r, c, norms = std::move(norms)](detail::Node& self) {
    auto* g = detail::grad_slot(self, 0);
    if (!g) return;
    const auto& y = self.value;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        (*g)[i * c + j] += (self.grad[i * c + j] - y[i * c + j] * dot) / norms[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column count mismatch");
    r += p.rows();
  }
  std::vector<double> out;
  out.reserve(r * c);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return detail::make_result(r, c, std::move(out), parts, [offsets = std::move(offsets)](detail::Node& self) {
    for (std::size_t s = 0; s < self.parents.size(); ++s) {
      auto* g = detail::grad_slot(self, s);
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[offsets[s] + i];
    }
  });
}

inline Tensor concat_rows(std::initializer_list<Tensor> parts) {
  return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}

inline Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  std::vector<std::size_t> col_off;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row count mismatch");
    col_off.push_back(c);
    c += p.cols();
  }
  std::vector<double> out(r * c);
  for (std::size_t s = 0; s < parts.size(); ++s) {
    const std::size_t pc = parts[s].cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * c + col_off[s] + j] = parts[s].values()[i * pc + j];
  }
  return detail::make_result(r, c, std::move(out), parts, [r, c, col_off = std::move(col_off)](detail::Node& self) {
    for (std::size_t s = 0; s < self.parents.size(); ++s) {
      auto* g = detail::grad_slot(self, s);
      if (!g) continue;
      const std::size_t pc = self.parents[s]->cols;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < pc; ++j) (*g)[i * pc + j] += self.grad[i * c + col_off[s] + j];
    }
  });
}

inline Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

// Rows [begin, end).
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t c = a.cols();
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                          a.values().begin() + static_cast<std::ptrdiff_t>(end * c));
  return detail::make_result(end - begin, c, std::move(out), {a}, [begin, c](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[begin * c + i] += self.grad[i];
  });
}

// Columns [begin, end).
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t r = a.rows(), c = a.cols(), w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.values()[i * c + begin + j];
  return detail::make_result(r, w, std::move(out), {a}, [r, c, w, begin](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) (*g)[i * c + begin + j] += self.grad[i * w + j];
  });
}

inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  const std::size_t c = a.cols();
  std::vector<double> out(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows()) throw DimensionError("gather_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[idx[i] * c + j];
  }
  std::vector<std::size_t> rows(idx.begin(), idx.end());
  return detail::make_result(idx.size(), c, std::move(out), {a}, [c, rows = std::move(rows)](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[rows[i] * c + j] += self.grad[i * c + j];
  });
}

inline Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size()) throw DimensionError("reshape: element count changes");
  return detail::make_result(rows, cols, a.values(), {a}, [](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

// Single element as a 1x1 tensor.
inline Tensor pick(const Tensor& a, std::size_t r, std::size_t c) {
  if (r >= a.rows() || c >= a.cols()) throw DimensionError("pick: index out of range");
  const std::size_t k = r * a.cols() + c;
  return detail::make_result(1, 1, {a.values()[k]}, {a}, [k](detail::Node& self) {
    if (auto* g = detail::grad_slot(self, 0)) (*g)[k] += self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Similarities and losses

// Cosine similarity between two 1xn vectors.
inline Tensor cosine_sim(const Tensor& a, const Tensor& b) {
  if (a.rows() != 1 || b.rows() != 1) throw DimensionError("cosine_sim: expects row vectors");
  detail::require_same_shape(a, b, "cosine_sim");
  return sum(mul(l2_normalize_rows(a), l2_normalize_rows(b)));
}

// Cosine similarity of one 1xn row against every row of b: -> [1 x b.rows()].
inline Tensor cosine_sim_rows(const Tensor& a, const Tensor& b) {
  if (a.rows() != 1) throw DimensionError("cosine_sim_rows: first operand must be a row vector");
  return matmul_nt(l2_normalize_rows(a), l2_normalize_rows(b));
}

// Sum over all entries of the sigmoid focal loss
//   -alpha_t (1 - p_t)^gamma log(p_t),   p = sigmoid(logit),
// with alpha_t = alpha for target 1 and 1 - alpha for target 0. Logs are taken
// through softplus so saturated logits stay finite.
inline Tensor sigmoid_focal_loss(const Tensor& logits, std::span<const double> targets, double alpha, double gamma) {
  if (targets.size() != logits.size()) throw DimensionError("sigmoid_focal_loss: target count mismatch");
  for (double t : targets)
    if (t != 0.0 && t != 1.0) throw ValidationError("sigmoid_focal_loss: targets must be 0 or 1");
  std::vector<double> tg(targets.begin(), targets.end());
  double total = 0.0;
  const auto& x = logits.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-x[i]));
    if (tg[i] == 1.0) {
      total += alpha * std::pow(1.0 - p, gamma) * detail::softplus(-x[i]);
    } else {
      total += (1.0 - alpha) * std::pow(p, gamma) * detail::softplus(x[i]);
    }
  }
  return detail::make_result(1, 1, {total}, {logits}, [tg = std::move(tg), alpha, gamma](detail::Node& self) {
    auto* g = detail::grad_slot(self, 0);
    if (!g) return;
    const auto& x = detail::parent_value(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-x[i]));
      double d;
      if (tg[i] == 1.0) {
        const double log_p = -detail::softplus(-x[i]);
        d = alpha * std::pow(1.0 - p, gamma) * (gamma * p * log_p - (1.0 - p));
      } else {
        const double log_1mp = -detail::softplus(x[i]);
        d = (1.0 - alpha) * std::pow(p, gamma) * (p - gamma * (1.0 - p) * log_1mp);
      }
      (*g)[i] += self.grad[0] * d;
    }
  });
}

}  // namespace moca::ad
