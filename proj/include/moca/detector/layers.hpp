#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "moca/autodiff/ops.hpp"
#include "moca/rng.hpp"

namespace moca::detector {

using ad::Tensor;

// Visitor over (name, parameter) pairs; the visiting order defines the
// checkpoint layout.
using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

namespace detail {

inline Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-a, a);
  return Tensor::from(in, out, std::move(w), true);
}

inline Tensor param_filled(std::size_t r, std::size_t c, double v) {
  Tensor t = Tensor::filled(r, c, v);
  t.set_requires_grad(true);
  return t;
}

}  // namespace detail

// y = x W + b with W stored in x out.
struct Linear {
  Tensor W, b;

  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    return {detail::xavier(in, out, rng), detail::param_filled(1, out, 0.0)};
  }
  Tensor operator()(const Tensor& x) const { return ad::add_rowvec(ad::matmul(x, W), b); }
  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".W", W);
    f(prefix + ".b", b);
  }
};

struct LayerNorm {
  Tensor gamma, beta;

  static LayerNorm init(std::size_t d) { return {detail::param_filled(1, d, 1.0), detail::param_filled(1, d, 0.0)}; }
  Tensor operator()(const Tensor& x) const { return ad::layer_norm(x, gamma, beta); }
  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

struct FeedForward {
  Linear l1, l2;

  static FeedForward init(std::size_t d, std::size_t hidden, Rng& rng) {
    return {Linear::init(d, hidden, rng), Linear::init(hidden, d, rng)};
  }
  Tensor operator()(const Tensor& x) const { return l2(ad::relu(l1(x))); }
  void visit(const std::string& prefix, const ParamVisitor& f) {
    l1.visit(prefix + ".l1", f);
    l2.visit(prefix + ".l2", f);
  }
};

// Multi-head scaled dot-product attention. Queries come from `q_in` (n rows),
// keys and values from `k_in` / `v_in` (m rows). Columns flagged in
// `key_mask` receive exactly zero weight.
struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  static MultiHeadAttention init(std::size_t d, std::size_t heads, Rng& rng) {
    MultiHeadAttention a{Linear::init(d, d, rng), Linear::init(d, d, rng), Linear::init(d, d, rng),
                         Linear::init(d, d, rng), heads};
    return a;
  }

  Tensor operator()(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, std::span<const char> key_mask = {},
                    std::vector<Tensor>* weights = nullptr) const {
    const Tensor Q = q(q_in), K = k(k_in), V = v(v_in);
    const std::size_t d = Q.cols(), dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t b = h * dk, e = b + dk;
      const Tensor A = ad::softmax_rows(ad::matmul_nt(ad::slice_cols(Q, b, e), ad::slice_cols(K, b, e)), scale,
                                        key_mask);
      if (weights) weights->push_back(A);
      outs.push_back(ad::matmul(A, ad::slice_cols(V, b, e)));
    }
    return o(heads == 1 ? outs.front() : ad::concat_cols(outs));
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    q.visit(prefix + ".q", f);
    k.visit(prefix + ".k", f);
    v.visit(prefix + ".v", f);
    o.visit(prefix + ".o", f);
  }
};

// Fixed 2D sinusoidal encoding for a gh x gw grid, row-major cells. The first
// half of the channels encodes the row, the second half the column.
inline Tensor sinusoidal_2d(std::size_t gh, std::size_t gw, std::size_t d) {
  const std::size_t half = d / 2;
  std::vector<double> out(gh * gw * d);
  auto fill = [&](double* dst, double pos) {
    for (std::size_t i = 0; i < half / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
      dst[2 * i] = std::sin(pos * freq);
      dst[2 * i + 1] = std::cos(pos * freq);
    }
  };
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t c = 0; c < gw; ++c) {
      double* row = out.data() + (r * gw + c) * d;
      fill(row, static_cast<double>(r));
      fill(row + half, static_cast<double>(c));
    }
  return Tensor::from(gh * gw, d, std::move(out));
}

}  // namespace moca::detector
