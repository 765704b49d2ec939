#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "moca/autodiff/ops.hpp"
#include "moca/box.hpp"
#include "moca/errors.hpp"

namespace moca::losses {

inline constexpr double kProbClamp = 1e-12;

// -alpha_t (1 - p_t)^gamma log(p_t) on a probability; p is clamped into
// [1e-12, 1 - 1e-12] so exact 0/1 inputs stay finite.
inline double focal_loss(double p, int target, double alpha, double gamma) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("focal_loss: probability outside [0, 1]");
  if (target != 0 && target != 1) throw ValidationError("focal_loss: target must be 0 or 1");
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  const double pt = target == 1 ? p : 1.0 - p;
  const double at = target == 1 ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

inline double iou(const BoxXYXY& a, const BoxXYXY& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Generalized IoU in [-1, 1].
inline double giou(const BoxXYXY& a, const BoxXYXY& b) {
  if (!a.valid() || !b.valid()) throw ValidationError("giou: degenerate box");
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double hull = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) * (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  return inter / uni - (hull - uni) / hull;
}

namespace detail {

struct XYXYCols {
  ad::Tensor x1, y1, x2, y2;
};

inline XYXYCols split_cxcywh(const ad::Tensor& b) {
  const ad::Tensor cx = ad::slice_cols(b, 0, 1), cy = ad::slice_cols(b, 1, 2);
  const ad::Tensor hw = ad::scale(ad::slice_cols(b, 2, 3), 0.5), hh = ad::scale(ad::slice_cols(b, 3, 4), 0.5);
  return {ad::sub(cx, hw), ad::sub(cy, hh), ad::add(cx, hw), ad::add(cy, hh)};
}

}  // namespace detail

// Row-wise GIoU between k x 4 cxcywh tensors, as a k x 1 column.
inline ad::Tensor giou_rows(const ad::Tensor& pred, const ad::Tensor& target) {
  if (pred.cols() != 4 || target.cols() != 4 || pred.rows() != target.rows()) {
    throw DimensionError("giou_rows: expected matching k x 4 box tensors");
  }
  const auto p = detail::split_cxcywh(pred);
  const auto t = detail::split_cxcywh(target);
  const ad::Tensor area_p = ad::mul(ad::sub(p.x2, p.x1), ad::sub(p.y2, p.y1));
  const ad::Tensor area_t = ad::mul(ad::sub(t.x2, t.x1), ad::sub(t.y2, t.y1));
  const ad::Tensor iw = ad::clamp_min(ad::sub(ad::minimum(p.x2, t.x2), ad::maximum(p.x1, t.x1)), 0.0);
  const ad::Tensor ih = ad::clamp_min(ad::sub(ad::minimum(p.y2, t.y2), ad::maximum(p.y1, t.y1)), 0.0);
  const ad::Tensor inter = ad::mul(iw, ih);
  const ad::Tensor uni = ad::sub(ad::add(area_p, area_t), inter);
  const ad::Tensor hull = ad::mul(ad::sub(ad::maximum(p.x2, t.x2), ad::minimum(p.x1, t.x1)),
                                  ad::sub(ad::maximum(p.y2, t.y2), ad::minimum(p.y1, t.y1)));
  return ad::sub(ad::div(inter, uni), ad::div(ad::sub(hull, uni), hull));
}

}  // namespace moca::losses
