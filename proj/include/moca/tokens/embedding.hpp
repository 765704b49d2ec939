#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "moca/errors.hpp"
#include "moca/rng.hpp"
#include "moca/tokens/prompt.hpp"

namespace moca::tokens {

enum class EmbeddingSource { file, synthetic };

// Sentence-level ([CLS]) text embedding of one prompt.
struct RawEmbedding {
  std::vector<double> vector;
  EmbeddingSource source = EmbeddingSource::file;
};

// Deterministic stand-in for a frozen text encoder.
//
// The stream is seeded with FNV-1a-64 over the rendered prompt bytes followed
// by the 8 little-endian bytes of `seed`, then advanced with splitmix64. Each
// pair of outputs (x1, x2) gives two Box-Muller normals with
// u1 = 1 - x1/2^64 in (0, 1] and u2 = x2/2^64 (53-bit resolution). The vector
// is scaled to unit L2 norm.
inline RawEmbedding synth_embedding(const PromptSpec& prompt, std::size_t d_text, std::uint64_t seed) {
  if (d_text < 2) throw ValidationError("synth_embedding: d_text must be at least 2");
  std::uint64_t state = fnv1a64_u64(seed, fnv1a64(prompt.rendered));
  std::vector<double> v(d_text);
  for (std::size_t i = 0; i < d_text; i += 2) {
    const double u1 = 1.0 - to_unit_double(splitmix64_next(state));
    const double u2 = to_unit_double(splitmix64_next(state));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    v[i] = r * std::cos(t);
    if (i + 1 < d_text) v[i + 1] = r * std::sin(t);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return {std::move(v), EmbeddingSource::synthetic};
}

}  // namespace moca::tokens
