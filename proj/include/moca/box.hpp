#pragma once

#include <algorithm>

namespace moca {

// Normalized (cx, cy, w, h), the layout predicted by the box head.
struct BoxCxCyWH {
  double cx = 0, cy = 0, w = 0, h = 0;
  bool operator==(const BoxCxCyWH&) const = default;
};

// Corner layout (x1, y1, x2, y2).
struct BoxXYXY {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const BoxXYXY&) const = default;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }
};

inline BoxXYXY to_xyxy(const BoxCxCyWH& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

inline BoxCxCyWH to_cxcywh(const BoxXYXY& b) {
  return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2), b.x2 - b.x1, b.y2 - b.y1};
}

inline BoxXYXY clamp_unit(const BoxXYXY& b) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {c(b.x1), c(b.y1), c(b.x2), c(b.y2)};
}

}  // namespace moca
