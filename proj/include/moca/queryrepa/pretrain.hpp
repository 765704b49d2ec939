#pragma once

#include <set>
#include <vector>

#include "moca/data/attach_token.hpp"
#include "moca/detector/model.hpp"
#include "moca/queryrepa/alignment.hpp"
#include "moca/train/optim.hpp"

namespace moca::queryrepa {

struct PretrainStepResult {
  double loss = 0.0;
  std::size_t rank1 = 0;   // samples whose own token has the highest similarity
  std::size_t batch = 0;
};

// Query statistics U^(l) (B x d) and the batch tokens (B x d) for one batch.
struct BatchAlignment {
  Tensor stats;
  Tensor tokens;
};

inline BatchAlignment align_batch(const std::vector<const data::Sample*>& batch, const detector::Detector& model,
                                  const AlignmentHead& head, const data::Vocabulary& vocab,
                                  const tokens::TokenRegistry& reg, std::size_t layer, Rng& class_rng) {
  if (layer < 2) throw ContractError("QueryREPA layer must be at least 2");
  if (layer > model.config().dec_layers) throw ContractError("QueryREPA layer exceeds the decoder depth");
  if (!model.moca_enabled()) throw ContractError("QueryREPA pretraining needs MoCA enabled");
  std::set<int> seen;
  std::vector<Tensor> stats, toks;
  for (const data::Sample* s : batch) {
    if (!seen.insert(s->modality_id).second) {
      throw ContractError("pretraining batch repeats modality " + std::to_string(s->modality_id));
    }
    const Tensor tok = data::attach_token(*s, vocab, reg, model.token_projection(), class_rng).token;
    const auto r = model.forward(s->image, {.token = tok, .num_layers = layer - 1, .heads = false});
    stats.push_back(head(cluster_mean(r.states[layer - 1])));
    toks.push_back(tok);
  }
  return {ad::concat_rows(stats), ad::concat_rows(toks)};
}

// Fraction-of-rank-1 bookkeeping: row b is a hit when column b is its
// strictly largest cosine similarity.
inline std::size_t rank1_hits(const BatchAlignment& a) {
  std::size_t hits = 0;
  for (std::size_t b = 0; b < a.stats.rows(); ++b) {
    const Tensor sims = ad::cosine_sim_rows(ad::slice_rows(a.stats, b, b + 1).detach(), a.tokens.detach());
    bool best = true;
    for (std::size_t j = 0; j < sims.cols(); ++j)
      if (j != b && sims.at(0, j) >= sims.at(0, b)) best = false;
    hits += best ? 1 : 0;
  }
  return hits;
}

// One optimizer step on the mean alignment loss of the batch; no detection
// loss is involved.
inline PretrainStepResult pretrain_step(const std::vector<const data::Sample*>& batch, detector::Detector& model,
                                        AlignmentHead& head, const data::Vocabulary& vocab,
                                        const tokens::TokenRegistry& reg, const QraConfig& cfg, train::AdamW& opt,
                                        double lr, Rng& class_rng) {
  cfg.validate();
  const BatchAlignment a = align_batch(batch, model, head, vocab, reg, cfg.layer, class_rng);
  Tensor loss = qra_batch_loss(a.stats, a.tokens, cfg.tau);
  PretrainStepResult out{loss.item(), rank1_hits(a), batch.size()};
  opt.zero_grad();
  if (loss.requires_grad()) {
    ad::backward(loss);
    opt.step(lr);
  }
  return out;
}

}  // namespace moca::queryrepa
