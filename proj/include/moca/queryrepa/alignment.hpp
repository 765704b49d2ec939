#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/autodiff/ops.hpp"
#include "moca/detector/layers.hpp"
#include "moca/errors.hpp"

namespace moca::queryrepa {

using ad::Tensor;

struct QraConfig {
  double tau = 0.07;
  std::size_t layer = 5;   // l; Q^(l) is the output of decoder layer l-1
  std::size_t steps = 200;
  std::size_t batch = 5;   // B, must not exceed the modality count

  void validate() const {
    if (!(tau > 0.0)) throw ValidationError("qra.tau must be positive");
    if (layer < 2) throw ValidationError("qra.layer must be at least 2");
    if (batch == 0) throw ValidationError("qra.batch must be positive");
  }
};

inline void to_json(nlohmann::json& j, const QraConfig& c) {
  j = {{"tau", c.tau}, {"layer", c.layer}, {"steps", c.steps}, {"batch", c.batch}};
}

inline void from_json(const nlohmann::json& j, QraConfig& c) {
  const QraConfig d;
  c.tau = j.value("tau", d.tau);
  c.layer = j.value("layer", d.layer);
  c.steps = j.value("steps", d.steps);
  c.batch = j.value("batch", d.batch);
}

// q-bar: arithmetic mean of the N query rows.
inline Tensor cluster_mean(const Tensor& q) {
  if (q.rows() == 0) throw ContractError("cluster_mean needs at least one query");
  return ad::mean_rows(q);
}

// g_phi: d -> d -> d with ReLU; only used while pretraining.
struct AlignmentHead {
  detector::Linear l1, l2;

  static AlignmentHead init(std::size_t d, Rng& rng) {
    return {detector::Linear::init(d, d, rng), detector::Linear::init(d, d, rng)};
  }
  Tensor operator()(const Tensor& x) const { return l2(ad::relu(l1(x))); }
  void visit(const std::string& prefix, const detector::ParamVisitor& f) {
    l1.visit(prefix + ".l1", f);
    l2.visit(prefix + ".l2", f);
  }
};

// -log softmax_j(cos(u, c_j) / tau) at j = positive, for a 1 x d statistic
// `u` and candidate tokens stacked as B x d.
inline Tensor qra_loss(const Tensor& u, const Tensor& candidates, std::size_t positive, double tau) {
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
  if (positive >= candidates.rows()) {
    throw ContractError("positive index " + std::to_string(positive) + " is not among " +
                        std::to_string(candidates.rows()) + " candidates");
  }
  if (u.rows() != 1 || u.cols() != candidates.cols()) {
    throw DimensionError("statistic " + ad::shape_str(u.rows(), u.cols()) + " vs candidates " +
                         ad::shape_str(candidates.rows(), candidates.cols()));
  }
  const Tensor logits = ad::scale(ad::cosine_sim_rows(u, candidates), 1.0 / tau);
  return ad::neg(ad::pick(ad::log_softmax_rows(logits), 0, positive));
}

// Batch form: row b of `stats` is aligned to row b of `tokens`, every other
// row of `tokens` is a negative. Mean over the batch.
inline Tensor qra_batch_loss(const Tensor& stats, const Tensor& tokens, double tau) {
  if (stats.rows() != tokens.rows()) throw DimensionError("one statistic per batch token is required");
  std::vector<Tensor> terms;
  for (std::size_t b = 0; b < stats.rows(); ++b) terms.push_back(qra_loss(ad::slice_rows(stats, b, b + 1), tokens, b, tau));
  return ad::mean(ad::concat_rows(terms));
}

}  // namespace moca::queryrepa
