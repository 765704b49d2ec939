#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "moca/detector/config.hpp"
#include "moca/errors.hpp"
#include "moca/losses/detection_loss.hpp"
#include "moca/queryrepa/alignment.hpp"
#include "moca/rng.hpp"
#include "moca/train/optim.hpp"

namespace moca::train {

struct TokenSource {
  std::string kind = "synthetic";   // "synthetic" | "file"
  std::string path;                 // registry JSON when kind == "file"
  std::uint64_t seed = 7;           // synthetic embedding seed

  void validate() const {
    if (kind != "synthetic" && kind != "file") throw ValidationError("tokens.kind must be 'synthetic' or 'file'");
    if (kind == "file" && path.empty()) throw ValidationError("tokens.path is required when tokens.kind is 'file'");
  }
};

inline void to_json(nlohmann::json& j, const TokenSource& t) {
  j = {{"kind", t.kind}, {"path", t.path}, {"seed", t.seed}};
}

inline void from_json(const nlohmann::json& j, TokenSource& t) {
  const TokenSource d;
  t.kind = j.value("kind", d.kind);
  t.path = j.value("path", d.path);
  t.seed = j.value("seed", d.seed);
}

// Sub-seeds derived from the run seed.
struct RunSeeds {
  std::uint64_t model, order, token_select, pretrain_sampler;

  static RunSeeds from(std::uint64_t seed) {
    return {derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3), derive_seed(seed, 4)};
  }
  nlohmann::json to_json() const {
    return {{"model", model}, {"order", order}, {"token_select", token_select}, {"pretrain_sampler", pretrain_sampler}};
  }
};

struct RunConfig {
  detector::DetectorConfig detector;
  losses::LossWeights loss;
  OptimConfig optim;
  std::size_t batch_size = 4;    // detection training
  std::uint64_t seed = 1;
  TokenSource tokens;
  queryrepa::QraConfig qra;      // qra.layer mirrors detector.qra_layer
  std::string data_dir = "data";
  std::size_t max_steps = 0;     // 0: run every epoch; otherwise stop after this many steps
  std::size_t log_every = 1;

  // `num_modalities`, `num_classes` come from the dataset when known (0 skips).
  void validate(std::size_t num_modalities = 0, std::size_t num_classes = 0) const {
    detector.validate();
    loss.validate();
    optim.validate();
    tokens.validate();
    qra.validate();
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (log_every == 0) throw ValidationError("log_every must be positive");
    if (qra.layer != detector.qra_layer) throw ValidationError("qra.layer must equal detector.qra_layer");
    if (num_modalities > 0 && qra.batch > num_modalities) {
      throw ValidationError("qra.batch (" + std::to_string(qra.batch) + ") exceeds the number of modalities (" +
                            std::to_string(num_modalities) + "); pretraining batches need distinct modalities");
    }
    if (num_classes > 0 && detector.num_classes != num_classes) {
      throw ValidationError("detector.num_classes is " + std::to_string(detector.num_classes) +
                            " but the dataset declares " + std::to_string(num_classes) + " classes");
    }
  }

  RunSeeds seeds() const { return RunSeeds::from(seed); }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"detector", c.detector}, {"loss", c.loss},           {"optim", c.optim},         {"batch_size", c.batch_size},
       {"seed", c.seed},         {"tokens", c.tokens},       {"qra", c.qra},             {"data_dir", c.data_dir},
       {"max_steps", c.max_steps}, {"log_every", c.log_every}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  const RunConfig d;
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  c.detector = j.value("detector", d.detector);
  c.loss = j.value("loss", d.loss);
  c.optim = j.value("optim", d.optim);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.tokens = j.value("tokens", d.tokens);
  c.qra = j.value("qra", d.qra);
  if (!j.contains("qra") || !j["qra"].contains("layer")) c.qra.layer = c.detector.qra_layer;
  c.data_dir = j.value("data_dir", d.data_dir);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.log_every = j.value("log_every", d.log_every);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace moca::train
