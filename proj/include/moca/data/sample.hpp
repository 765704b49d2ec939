#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "moca/box.hpp"
#include "moca/errors.hpp"

namespace moca::data {

// Single-channel image with intensities in [0, 1], row-major.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  bool operator==(const Image&) const = default;
};

struct Annotation {
  BoxCxCyWH box;
  int class_id = 0;
  bool operator==(const Annotation&) const = default;
};

inline void validate_annotation(const Annotation& a) {
  const auto& b = a.box;
  if (!(b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0)) {
    throw ValidationError("annotation centre outside the unit square");
  }
  if (!(b.w > 0.0 && b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0)) {
    throw ValidationError("annotation extent must lie in (0, 1]");
  }
  if (a.class_id < 0) throw ValidationError("negative class id");
}

// COCO pixel box [x, y, w, h] to normalized (cx, cy, w, h).
inline BoxCxCyWH box_from_pixels(double x, double y, double w, double h, std::size_t img_w, std::size_t img_h) {
  const double iw = static_cast<double>(img_w), ih = static_cast<double>(img_h);
  return {(x + 0.5 * w) / iw, (y + 0.5 * h) / ih, w / iw, h / ih};
}

struct Sample {
  std::string sample_id;
  Image image;
  int modality_id = 0;
  std::vector<Annotation> annotations;
  bool operator==(const Sample&) const = default;
};

}  // namespace moca::data
