#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "moca/box.hpp"
#include "moca/data/sample.hpp"
#include "moca/data/vocabulary.hpp"
#include "moca/errors.hpp"

namespace moca::eval {

struct Detection {
  BoxCxCyWH box;
  int class_id = 0;
  double score = 0.0;
  std::string image_id;
};

struct EvalImage {
  std::string image_id;
  int modality_id = 0;
  std::vector<data::Annotation> gts;
};

struct EvalOptions {
  std::size_t max_dets = 100;                      // per image, highest scores kept
  double small_area = (32.0 / 640.0) * (32.0 / 640.0);   // fractions of image area
  double medium_area = (96.0 / 640.0) * (96.0 / 640.0);
};

// IoU thresholds 0.50, 0.55, ..., 0.95.
inline std::array<double, 10> iou_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>(i)] = (50.0 + 5.0 * i) / 100.0;
  return t;
}

inline double iou(const BoxXYXY& a, const BoxXYXY& b) {
  if (!a.valid() || !b.valid()) throw ValidationError("iou of a degenerate box");
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = iw > 0.0 && ih > 0.0 ? iw * ih : 0.0;
  return inter / (a.area() + b.area() - inter);
}

inline double iou(const BoxCxCyWH& a, const BoxCxCyWH& b) { return iou(to_xyxy(a), to_xyxy(b)); }

namespace detail {

// Detection indices by descending score; equal scores keep input order.
inline std::vector<std::size_t> score_order(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

struct Matched {
  double score = 0.0;
  bool tp = false;
  bool ignore = false;
};

// Greedy matching for one image and one class. GTs flagged in `gt_ignore`
// are only matched when no regular GT qualifies; detections matched to them,
// or unmatched and outside the area range, are ignored.
inline std::vector<Matched> match_one(const std::vector<BoxCxCyWH>& dets, const std::vector<double>& scores,
                                      const std::vector<BoxCxCyWH>& gts, const std::vector<char>& gt_ignore,
                                      double thr, double area_lo, double area_hi) {
  const auto order = score_order(scores);
  std::vector<char> taken(gts.size(), 0);
  std::vector<Matched> out;
  out.reserve(dets.size());
  for (std::size_t di : order) {
    int best = -1;
    double best_iou = thr;
    bool best_ignored = true;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const bool ig = gt_ignore[g] != 0;
      if (best >= 0 && !best_ignored && ig) continue;   // regular matches win over ignored ones
      const double v = iou(dets[di], gts[g]);
      if (v < thr) continue;
      if (best < 0 || (best_ignored && !ig) || v > best_iou) {
        best = static_cast<int>(g);
        best_iou = v;
        best_ignored = ig;
      }
    }
    Matched m{scores[di], false, false};
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = 1;
      m.tp = !best_ignored;
      m.ignore = best_ignored;
    } else {
      const double a = dets[di].w * dets[di].h;
      m.ignore = a < area_lo || a > area_hi;
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace detail

// TP/FP flag for every detection (same image, same class), in input order.
inline std::vector<bool> match_and_score(const std::vector<BoxCxCyWH>& dets, const std::vector<double>& scores,
                                         const std::vector<BoxCxCyWH>& gts, double iou_threshold) {
  if (dets.size() != scores.size()) throw DimensionError("one score per detection is required");
  const auto order = detail::score_order(scores);
  const auto m = detail::match_one(dets, scores, gts, std::vector<char>(gts.size(), 0), iou_threshold, 0.0, 1e300);
  std::vector<bool> flags(dets.size());
  for (std::size_t k = 0; k < order.size(); ++k) flags[order[k]] = m[k].tp;
  return flags;
}

// 101-point interpolated AP of a ranked list (flags already in descending
// score order). Empty when n_gt is zero.
inline std::optional<double> average_precision_ranked(const std::vector<bool>& ranked_tp, std::size_t n_gt) {
  if (n_gt == 0) return std::nullopt;
  const std::size_t n = ranked_tp.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_tp[i] ? 1.0 : 0.0;
    recall[i] = tp / static_cast<double>(n_gt);
    precision[i] = tp / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

inline std::optional<double> average_precision(const std::vector<bool>& flags, const std::vector<double>& scores,
                                               std::size_t n_gt) {
  if (flags.size() != scores.size()) throw DimensionError("one score per flag is required");
  std::vector<bool> ranked;
  for (std::size_t i : detail::score_order(scores)) ranked.push_back(flags[i]);
  return average_precision_ranked(ranked, n_gt);
}

struct ClassMetrics {
  std::size_t n_gt = 0;
  std::optional<double> ap, ap50, ap75;
};

struct Metrics {
  std::optional<double> ap, ap50, ap75, aps, apm, apl;
  std::map<int, ClassMetrics> per_class;
};

struct APReport {
  Metrics total;
  std::map<int, Metrics> per_modality;
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct PerImageDets {
  std::vector<BoxCxCyWH> boxes;
  std::vector<double> scores;
};

// AP per (class, threshold) for one area range; missing when the class has no
// regular GT in range.
inline std::map<int, std::array<std::optional<double>, 10>> evaluate_range(
    const std::vector<const EvalImage*>& images, const std::map<std::string, std::map<int, PerImageDets>>& dets,
    const std::vector<int>& classes, double area_lo, double area_hi, std::map<int, std::size_t>* n_gt_out) {
  const auto thr = iou_thresholds();
  std::map<int, std::array<std::optional<double>, 10>> out;
  static const PerImageDets kNone;
  for (int c : classes) {
    std::size_t n_gt = 0;
    std::array<std::vector<Matched>, 10> pooled;
    for (const EvalImage* img : images) {
      std::vector<BoxCxCyWH> gts;
      std::vector<char> ig;
      for (const auto& a : img->gts) {
        if (a.class_id != c) continue;
        const double area = a.box.w * a.box.h;
        gts.push_back(a.box);
        ig.push_back(area < area_lo || area > area_hi ? 1 : 0);
        n_gt += ig.back() ? 0 : 1;
      }
      const PerImageDets* d = &kNone;
      if (auto it = dets.find(img->image_id); it != dets.end())
        if (auto jt = it->second.find(c); jt != it->second.end()) d = &jt->second;
      for (std::size_t t = 0; t < thr.size(); ++t) {
        auto m = match_one(d->boxes, d->scores, gts, ig, thr[t], area_lo, area_hi);
        pooled[t].insert(pooled[t].end(), m.begin(), m.end());
      }
    }
    if (n_gt_out) (*n_gt_out)[c] = n_gt;
    std::array<std::optional<double>, 10> aps;
    for (std::size_t t = 0; t < thr.size(); ++t) {
      std::vector<double> scores;
      std::vector<bool> flags;
      for (const auto& m : pooled[t]) {
        if (m.ignore) continue;
        scores.push_back(m.score);
        flags.push_back(m.tp);
      }
      aps[t] = average_precision(flags, scores, n_gt);
    }
    out[c] = aps;
  }
  return out;
}

inline Metrics evaluate_subset(const std::vector<const EvalImage*>& images,
                               const std::map<std::string, std::map<int, PerImageDets>>& dets,
                               const std::vector<int>& classes, const EvalOptions& opt) {
  Metrics m;
  std::map<int, std::size_t> n_gt;
  const auto all = evaluate_range(images, dets, classes, 0.0, 1e300, &n_gt);
  std::vector<double> ap, ap50, ap75;
  for (const auto& [c, aps] : all) {
    ClassMetrics cm;
    cm.n_gt = n_gt[c];
    if (aps[0]) {
      std::vector<double> v;
      for (const auto& a : aps) v.push_back(*a);
      cm.ap = mean_of(v);
      cm.ap50 = aps[0];
      cm.ap75 = aps[5];
      ap.push_back(*cm.ap);
      ap50.push_back(*cm.ap50);
      ap75.push_back(*cm.ap75);
    }
    m.per_class[c] = cm;
  }
  m.ap = mean_of(ap);
  m.ap50 = mean_of(ap50);
  m.ap75 = mean_of(ap75);
  auto bucket = [&](double lo, double hi) {
    std::vector<double> v;
    for (const auto& [c, aps] : evaluate_range(images, dets, classes, lo, hi, nullptr)) {
      if (!aps[0]) continue;
      double s = 0.0;
      for (const auto& a : aps) s += *a;
      v.push_back(s / static_cast<double>(aps.size()));
    }
    return mean_of(v);
  };
  m.aps = bucket(0.0, opt.small_area);
  m.apm = bucket(opt.small_area, opt.medium_area);
  m.apl = bucket(opt.medium_area, 1e300);
  return m;
}

}  // namespace detail

// COCO-style evaluation. Images are processed in image_id order and
// detections in their given order within an image, so the report does not
// depend on image enumeration order; only the top `max_dets` detections of
// each image count.
inline APReport ap_report(const std::vector<EvalImage>& images, const std::vector<Detection>& detections,
                          const data::Vocabulary& vocab, const EvalOptions& opt = {}) {
  std::vector<const EvalImage*> sorted;
  std::map<std::string, const EvalImage*> by_id;
  for (const auto& img : images) {
    if (!by_id.emplace(img.image_id, &img).second) throw ValidationError("duplicate image id " + img.image_id);
    sorted.push_back(&img);
  }
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->image_id < b->image_id; });

  std::map<std::string, std::vector<const Detection*>> per_image;
  for (const auto& d : detections) {
    if (!std::isfinite(d.score)) throw ValidationError("detection score must be finite");
    if (d.class_id < 0 || static_cast<std::size_t>(d.class_id) >= vocab.num_classes()) {
      throw ValidationError("detection class id out of range");
    }
    if (!by_id.contains(d.image_id)) throw ValidationError("detection refers to unknown image " + d.image_id);
    per_image[d.image_id].push_back(&d);
  }
  std::map<std::string, std::map<int, detail::PerImageDets>> dets;
  for (auto& [id, list] : per_image) {
    std::vector<double> scores;
    for (const auto* d : list) scores.push_back(d->score);
    auto order = detail::score_order(scores);
    if (order.size() > opt.max_dets) order.resize(opt.max_dets);
    std::sort(order.begin(), order.end());   // back to insertion order
    for (std::size_t i : order) {
      auto& slot = dets[id][list[i]->class_id];
      slot.boxes.push_back(list[i]->box);
      slot.scores.push_back(list[i]->score);
    }
  }

  std::vector<int> all_classes(vocab.num_classes());
  std::iota(all_classes.begin(), all_classes.end(), 0);
  APReport rep;
  rep.total = detail::evaluate_subset(sorted, dets, all_classes, opt);
  for (std::size_t m = 0; m < vocab.num_modalities(); ++m) {
    std::vector<const EvalImage*> sub;
    for (const auto* img : sorted)
      if (img->modality_id == static_cast<int>(m)) sub.push_back(img);
    if (!sub.empty()) rep.per_modality[static_cast<int>(m)] = detail::evaluate_subset(sub, dets, all_classes, opt);
  }
  return rep;
}

}  // namespace moca::eval
