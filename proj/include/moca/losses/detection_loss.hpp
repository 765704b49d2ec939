#pragma once

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/autodiff/ops.hpp"
#include "moca/data/sample.hpp"
#include "moca/detector/predictions.hpp"
#include "moca/losses/box_losses.hpp"
#include "moca/losses/hungarian.hpp"

namespace moca::losses {

struct LossWeights {
  double w_focal = 2.0;
  double alpha = 0.25;
  double gamma = 2.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;

  void validate() const {
    if (w_focal < 0 || w_l1 < 0 || w_giou < 0 || gamma < 0 || alpha < 0 || alpha > 1) {
      throw ValidationError("loss weights must be non-negative and alpha in [0, 1]");
    }
  }
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"w_focal", w.w_focal}, {"alpha", w.alpha}, {"gamma", w.gamma}, {"w_l1", w.w_l1}, {"w_giou", w.w_giou}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  const LossWeights d;
  w.w_focal = j.value("w_focal", d.w_focal);
  w.alpha = j.value("alpha", d.alpha);
  w.gamma = j.value("gamma", d.gamma);
  w.w_l1 = j.value("w_l1", d.w_l1);
  w.w_giou = j.value("w_giou", d.w_giou);
}

// Matching cost between N predictions (probabilities N x C, boxes N x 4
// cxcywh) and G ground truths:
//   w_focal * (pos - neg focal cost of the gt class) + w_l1 * |b - b^|_1 + w_giou * (1 - giou)
inline CostMatrix build_cost_matrix(const std::vector<double>& probs, std::size_t num_classes,
                                    const std::vector<double>& boxes, const std::vector<data::Annotation>& gts,
                                    const LossWeights& w) {
  const std::size_t n = boxes.size() / 4;
  if (probs.size() != n * num_classes) throw DimensionError("build_cost_matrix: probability shape mismatch");
  CostMatrix c{n, gts.size(), std::vector<double>(n * gts.size())};
  for (std::size_t q = 0; q < n; ++q) {
    const BoxCxCyWH pb{boxes[4 * q], boxes[4 * q + 1], boxes[4 * q + 2], boxes[4 * q + 3]};
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const auto& gt = gts[g];
      if (gt.class_id < 0 || static_cast<std::size_t>(gt.class_id) >= num_classes) {
        throw ValidationError("build_cost_matrix: class id out of range");
      }
      const double p = probs[q * num_classes + static_cast<std::size_t>(gt.class_id)];
      const double cls = focal_loss(p, 1, w.alpha, w.gamma) - focal_loss(p, 0, w.alpha, w.gamma);
      const double l1 = std::abs(pb.cx - gt.box.cx) + std::abs(pb.cy - gt.box.cy) + std::abs(pb.w - gt.box.w) +
                        std::abs(pb.h - gt.box.h);
      const double gi = giou(to_xyxy(pb), to_xyxy(gt.box));
      c.at(q, g) = w.w_focal * cls + w.w_l1 * l1 + w.w_giou * (1.0 - gi);
    }
  }
  return c;
}

inline CostMatrix build_cost_matrix(const detector::LayerPrediction& pred, const std::vector<data::Annotation>& gts,
                                    const LossWeights& w) {
  std::vector<double> probs = pred.logits.values();
  for (double& v : probs) v = 1.0 / (1.0 + std::exp(-v));
  return build_cost_matrix(probs, pred.logits.cols(), pred.boxes.values(), gts, w);
}

struct LossBreakdown {
  double focal = 0.0;
  double l1 = 0.0;
  double giou = 0.0;
};

// Unnormalized loss of one layer against its own Hungarian matching.
inline ad::Tensor layer_loss(const detector::LayerPrediction& pred, const std::vector<data::Annotation>& gts,
                             const LossWeights& w, LossBreakdown* parts = nullptr) {
  const std::size_t n = pred.logits.rows(), C = pred.logits.cols();
  Matching match;
  if (!gts.empty()) match = hungarian(build_cost_matrix(pred, gts, w));

  std::vector<double> targets(n * C, 0.0);
  for (auto [q, g] : match) targets[q * C + static_cast<std::size_t>(gts[g].class_id)] = 1.0;
  ad::Tensor focal = ad::sigmoid_focal_loss(pred.logits, targets, w.alpha, w.gamma);
  ad::Tensor total = ad::scale(focal, w.w_focal);
  if (parts) parts->focal += focal.item();
  if (match.empty()) return total;

  std::vector<std::size_t> rows;
  std::vector<double> tgt;
  for (auto [q, g] : match) {
    rows.push_back(q);
    const auto& b = gts[g].box;
    tgt.insert(tgt.end(), {b.cx, b.cy, b.w, b.h});
  }
  const ad::Tensor matched = ad::gather_rows(pred.boxes, rows);
  const ad::Tensor target = ad::Tensor::from(rows.size(), 4, std::move(tgt));
  const ad::Tensor l1 = ad::sum(ad::abs(ad::sub(matched, target)));
  const ad::Tensor gl = ad::sum(ad::add_scalar(ad::neg(giou_rows(matched, target)), 1.0));
  if (parts) parts->l1 += l1.item(), parts->giou += gl.item();
  return ad::add(total, ad::add(ad::scale(l1, w.w_l1), ad::scale(gl, w.w_giou)));
}

// Deep-supervised set loss: every layer is matched and scored separately,
// the layer losses are summed and divided by max(1, G).
inline ad::Tensor detection_loss(const std::vector<detector::LayerPrediction>& layers,
                                 const std::vector<data::Annotation>& gts, const LossWeights& w,
                                 LossBreakdown* parts = nullptr) {
  if (layers.empty()) throw ContractError("detection_loss: no layer predictions");
  std::vector<ad::Tensor> per;
  for (const auto& l : layers) per.push_back(layer_loss(l, gts, w, parts));
  const double norm = static_cast<double>(std::max<std::size_t>(1, gts.size()));
  return ad::scale(ad::sum(ad::concat_rows(per)), 1.0 / norm);
}

}  // namespace moca::losses
