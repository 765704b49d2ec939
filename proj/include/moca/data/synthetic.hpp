#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "moca/data/dataset_spec.hpp"
#include "moca/data/sample.hpp"
#include "moca/rng.hpp"

namespace moca::data {

namespace detail {

struct PixelRect {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive-exclusive

  bool overlaps(const PixelRect& o, std::size_t margin) const {
    return !(x1 + margin <= o.x0 || o.x1 + margin <= x0 || y1 + margin <= o.y0 || o.y1 + margin <= y0);
  }
};

// Whether the pixel centre (px + .5, py + .5) lies inside `shape` drawn in the
// s x s cell at (0, 0).
inline bool shape_contains(ShapeKind shape, double s, double px, double py) {
  const double x = px + 0.5, y = py + 0.5;
  const double c = 0.5 * s, r = 0.5 * s;
  const double dx = x - c, dy = y - c;
  switch (shape) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::square:
      return std::abs(dx) <= 0.4 * s && std::abs(dy) <= 0.4 * s;
    case ShapeKind::triangle: {
      // apex at top centre, base along the bottom
      if (y < 0.0 || y > s) return false;
      const double half = 0.5 * s * (y / s);
      return std::abs(dx) <= half;
    }
    case ShapeKind::ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
    }
    case ShapeKind::blob:
      return (dx * dx) / (r * r) + (dy * dy) / (0.55 * r * 0.55 * r) <= 1.0;
  }
  return false;
}

inline double apply_curve(TransferCurve curve, double v) {
  switch (curve) {
    case TransferCurve::linear:
      return v;
    case TransferCurve::gamma:
      return std::pow(v, 0.5);
    case TransferCurve::inverse:
      return 1.0 - v;
    case TransferCurve::sigmoid:
      return 1.0 / (1.0 + std::exp(-10.0 * (v - 0.5)));
  }
  return v;
}

inline std::uint64_t image_seed(std::uint64_t seed, const std::string& split, std::size_t index) {
  return derive_seed(fnv1a64_u64(seed, fnv1a64(split)), index);
}

}  // namespace detail

// Renders one image of modality `m`. Annotations are the tight pixel bounds of
// each object's mask; objects never overlap, so every mask is fully visible.
inline Sample render_sample(const DatasetSpec& spec, std::size_t m, std::uint64_t seed, std::string sample_id,
                            const std::vector<int>& global_class_ids) {
  const auto& ms = spec.modalities[m];
  const std::size_t n = spec.image_size;
  Rng rng(seed);

  Sample s;
  s.sample_id = std::move(sample_id);
  s.modality_id = static_cast<int>(m);
  s.image.height = s.image.width = n;
  s.image.pixels.assign(n * n, 0.0);

  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double w = 2.0 * std::numbers::pi * ms.texture_freq / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      s.image.at(r, c) = ms.background + ms.texture_amp * std::sin(w * static_cast<double>(c) + phase) *
                                             std::sin(w * static_cast<double>(r));

  const std::size_t count = spec.min_objects + rng.index(spec.max_objects - spec.min_objects + 1);
  std::vector<detail::PixelRect> placed;
  std::vector<char> mask(n * n);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t local_class = rng.index(ms.classes.size());
    const ShapeKind shape = ms.classes[local_class].shape;
    for (int attempt = 0; attempt < 30; ++attempt) {
      const std::size_t size = spec.min_object_px + rng.index(spec.max_object_px - spec.min_object_px + 1);
      const std::size_t ox = rng.index(n - size + 1);
      const std::size_t oy = rng.index(n - size + 1);
      std::fill(mask.begin(), mask.end(), 0);
      detail::PixelRect rect{n, n, 0, 0};
      for (std::size_t py = 0; py < size; ++py)
        for (std::size_t px = 0; px < size; ++px) {
          if (!detail::shape_contains(shape, static_cast<double>(size), static_cast<double>(px),
                                      static_cast<double>(py)))
            continue;
          mask[(oy + py) * n + ox + px] = 1;
          rect.x0 = std::min(rect.x0, ox + px);
          rect.y0 = std::min(rect.y0, oy + py);
          rect.x1 = std::max(rect.x1, ox + px + 1);
          rect.y1 = std::max(rect.y1, oy + py + 1);
        }
      if (rect.x1 <= rect.x0) continue;
      bool clash = false;
      for (const auto& p : placed) clash = clash || rect.overlaps(p, 1);
      if (clash) continue;
      for (std::size_t i = 0; i < n * n; ++i)
        if (mask[i]) s.image.pixels[i] = ms.object_level;
      placed.push_back(rect);
      s.annotations.push_back({box_from_pixels(static_cast<double>(rect.x0), static_cast<double>(rect.y0),
                                               static_cast<double>(rect.x1 - rect.x0),
                                               static_cast<double>(rect.y1 - rect.y0), n, n),
                               global_class_ids[local_class]});
      break;
    }
  }

  for (double& v : s.image.pixels) {
    if (ms.noise_sigma > 0.0) v += ms.noise_sigma * rng.normal();
    v = detail::apply_curve(ms.curve, std::clamp(v, 0.0, 1.0));
    // exactly representable in the f32 on-disk format
    v = static_cast<double>(static_cast<float>(v));
  }
  return s;
}

// Deterministic in (spec.seed, split). Image i belongs to modality i mod M, so
// modalities are allocated uniformly.
inline std::vector<Sample> generate_synthetic(const DatasetSpec& spec, const std::string& split) {
  spec.validate();
  auto it = spec.counts.find(split);
  if (it == spec.counts.end()) throw ValidationError("dataset spec has no count for split '" + split + "'");
  const Vocabulary vocab = spec.vocabulary();
  const std::size_t M = spec.num_modalities();
  std::vector<Sample> out;
  out.reserve(it->second);
  for (std::size_t i = 0; i < it->second; ++i) {
    const std::size_t m = i % M;
    char id[64];
    std::snprintf(id, sizeof id, "%s_%05zu", split.c_str(), i);
    out.push_back(render_sample(spec, m, detail::image_seed(spec.seed, split, i), id,
                                vocab.classes_of(static_cast<int>(m))));
  }
  return out;
}

}  // namespace moca::data
