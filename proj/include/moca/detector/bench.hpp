#pragma once

#include <chrono>

#include "moca/detector/model.hpp"

namespace moca::detector {

struct LatencyReport {
  std::size_t trials = 0;
  double baseline_ms = 0.0;
  double moca_ms = 0.0;

  double overhead() const { return (moca_ms - baseline_ms) / baseline_ms; }
};

// Mean wall-clock time of the decoder (layers + heads) with MoCA off and on,
// same weights and memory, no gradient recording. Trials alternate between
// the two modes so drift affects both equally.
inline LatencyReport latency_bench(const DetectorConfig& cfg, std::size_t n_trials, std::uint64_t seed = 0,
                                   std::size_t image_size = 64) {
  if (n_trials < 100) throw ValidationError("latency_bench needs at least 100 trials");
  ad::NoGradGuard ng;
  DetectorConfig c = cfg;
  c.moca = true;
  Detector model(c, seed);
  Rng rng(derive_seed(seed, 1));
  data::Image img{image_size, image_size, std::vector<double>(image_size * image_size)};
  for (double& p : img.pixels) p = rng.uniform();
  const Tensor memory = model.encode(img);
  std::vector<double> tok(c.d_model);
  for (double& v : tok) v = rng.normal();
  ForwardOptions on{.token = Tensor::row(tok)};

  using clock = std::chrono::steady_clock;
  auto time_once = [&](bool moca) {
    model.set_moca(moca);
    const auto t0 = clock::now();
    auto r = model.decode(memory, moca ? on : ForwardOptions{});
    const auto t1 = clock::now();
    if (r.layers.empty()) throw ContractError("latency_bench: decoder produced no output");
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };
  time_once(false);
  time_once(true);

  LatencyReport rep;
  rep.trials = n_trials;
  for (std::size_t i = 0; i < n_trials; ++i) {
    if (i % 2 == 0) {
      rep.baseline_ms += time_once(false);
      rep.moca_ms += time_once(true);
    } else {
      rep.moca_ms += time_once(true);
      rep.baseline_ms += time_once(false);
    }
  }
  rep.baseline_ms /= static_cast<double>(n_trials);
  rep.moca_ms /= static_cast<double>(n_trials);
  return rep;
}

}  // namespace moca::detector
