#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "moca/autodiff/ops.hpp"
#include "moca/data/sample.hpp"
#include "moca/data/vocabulary.hpp"
#include "moca/rng.hpp"
#include "moca/tokens/projection.hpp"
#include "moca/tokens/registry.hpp"

namespace moca::data {

enum class TokenMode { train, inference };

struct AttachedToken {
  ad::Tensor token;              // 1 x d_model, differentiable through W
  std::optional<int> class_id;   // empty when the modality mean was used
};

// Mean of the projected tokens of every class the registry declares for
// `modality`.
inline ad::Tensor modality_mean_token(const tokens::TokenRegistry& reg, const tokens::TokenProjection& proj,
                                      const std::string& modality) {
  std::vector<ad::Tensor> rows;
  for (const auto& cls : reg.classes_for(modality)) rows.push_back(tokens::project_token(reg, proj, modality, cls));
  return ad::mean_rows(ad::concat_rows(rows));
}

// Training: a class drawn uniformly from the sample's distinct ground-truth
// classes (empty images fall back to the modality mean). Inference: always
// the modality mean, since labels are unknown.
inline AttachedToken attach_token(const Sample& sample, const Vocabulary& vocab, const tokens::TokenRegistry& reg,
                                  const tokens::TokenProjection& proj, Rng& class_select_rng,
                                  TokenMode mode = TokenMode::train) {
  const std::string& modality = vocab.modalities.at(static_cast<std::size_t>(sample.modality_id));
  if (!reg.has_modality(modality)) throw LookupError("modality not in registry: " + modality);
  if (mode == TokenMode::train && !sample.annotations.empty()) {
    std::vector<int> classes;
    for (const auto& a : sample.annotations) classes.push_back(a.class_id);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    const int c = classes[class_select_rng.index(classes.size())];
    return {tokens::project_token(reg, proj, modality, vocab.classes.at(static_cast<std::size_t>(c))), c};
  }
  return {modality_mean_token(reg, proj, modality), std::nullopt};
}

}  // namespace moca::data
