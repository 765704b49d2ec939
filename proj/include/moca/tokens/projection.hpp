#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "moca/autodiff/ops.hpp"
#include "moca/rng.hpp"
#include "moca/tokens/registry.hpp"

namespace moca::tokens {

// Learnable linear map W [d_model x d_text] taking raw text embeddings into
// the detector's model space: m = W e.
struct TokenProjection {
  ad::Tensor weight;

  std::size_t d_model() const { return weight.rows(); }
  std::size_t d_text() const { return weight.cols(); }

  // Uniform init on [-1/sqrt(d_text), 1/sqrt(d_text)].
  static TokenProjection init(std::size_t d_model, std::size_t d_text, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d_text));
    std::vector<double> w(d_model * d_text);
    for (double& v : w) v = rng.uniform(-s, s);
    return {ad::Tensor::from(d_model, d_text, std::move(w), true)};
  }
};

// Raw embedding as a constant 1 x d_text row.
inline ad::Tensor embedding_row(const RawEmbedding& e) { return ad::Tensor::row(e.vector); }

// m_{d,c} = W e_{d,c} as a 1 x d_model row, differentiable through W.
inline ad::Tensor project_token(const TokenRegistry& reg, const TokenProjection& proj, const std::string& modality,
                                const std::string& class_name) {
  const RawEmbedding& e = reg.lookup(modality, class_name);
  if (e.vector.size() != proj.d_text()) {
    throw DimensionError("projection expects d_text " + std::to_string(proj.d_text()) + ", registry has " +
                         std::to_string(e.vector.size()));
  }
  return ad::matmul_nt(embedding_row(e), proj.weight);
}

}  // namespace moca::tokens
