#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "moca/data/sample.hpp"
#include "moca/errors.hpp"
#include "moca/rng.hpp"

namespace moca::data {

// Indices into the sample list, one per selected modality, in ascending
// modality order.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<int> modalities;
};

// Modality-balanced sampler. Each modality owns a queue of sample indices
// that is reshuffled whenever it runs dry; the shuffle seed mixes the sampler
// seed, the modality and that queue's epoch counter. Every batch holds B
// samples from B distinct modalities; for B < M the covered subset is drawn
// uniformly at random each step.
class ModalityBatchSampler {
 public:
  ModalityBatchSampler(std::vector<std::vector<std::size_t>> per_modality, std::size_t batch_size,
                       std::uint64_t seed)
      : pools_(std::move(per_modality)), B_(batch_size), seed_(seed), subset_rng_(derive_seed(seed, 0xB47C)) {
    const std::size_t M = pools_.size();
    if (B_ == 0) throw ContractError("batch size must be positive");
    if (B_ > M) {
      throw ContractError("batch size " + std::to_string(B_) + " exceeds the number of modalities " +
                          std::to_string(M) + "; a batch cannot hold distinct modalities");
    }
    for (std::size_t m = 0; m < M; ++m)
      if (pools_[m].empty()) throw ContractError("modality " + std::to_string(m) + " has no samples");
    queues_.resize(M);
    heads_.assign(M, 0);
    epochs_.assign(M, 0);
    for (std::size_t m = 0; m < M; ++m) refill(m);
  }

  // Groups `samples` by modality id; ids must lie in [0, num_modalities).
  static ModalityBatchSampler from_samples(const std::vector<Sample>& samples, std::size_t num_modalities,
                                           std::size_t batch_size, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> per(num_modalities);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const int m = samples[i].modality_id;
      if (m < 0 || static_cast<std::size_t>(m) >= num_modalities) {
        throw ValidationError("sample " + samples[i].sample_id + " has modality id out of range");
      }
      per[static_cast<std::size_t>(m)].push_back(i);
    }
    return ModalityBatchSampler(std::move(per), batch_size, seed);
  }

  std::size_t num_modalities() const { return pools_.size(); }
  std::size_t batch_size() const { return B_; }
  std::size_t epoch(std::size_t modality) const { return epochs_.at(modality); }

  Batch next() {
    const std::size_t M = pools_.size();
    std::vector<std::size_t> mods(M);
    std::iota(mods.begin(), mods.end(), std::size_t{0});
    if (B_ < M) {
      // partial Fisher-Yates: the first B entries form a uniform B-subset
      for (std::size_t i = 0; i < B_; ++i) std::swap(mods[i], mods[i + subset_rng_.index(M - i)]);
      mods.resize(B_);
      std::sort(mods.begin(), mods.end());
    }
    Batch b;
    for (std::size_t m : mods) {
      if (heads_[m] == queues_[m].size()) refill(m);
      b.indices.push_back(queues_[m][heads_[m]++]);
      b.modalities.push_back(static_cast<int>(m));
    }
    return b;
  }

 private:
  void refill(std::size_t m) {
    queues_[m] = pools_[m];
    Rng rng(derive_seed(derive_seed(seed_, m), epochs_[m]));
    rng.shuffle(queues_[m]);
    heads_[m] = 0;
    ++epochs_[m];
  }

  std::vector<std::vector<std::size_t>> pools_;
  std::size_t B_;
  std::uint64_t seed_;
  Rng subset_rng_;
  std::vector<std::vector<std::size_t>> queues_;
  std::vector<std::size_t> heads_;
  std::vector<std::size_t> epochs_;
};

}  // namespace moca::data
