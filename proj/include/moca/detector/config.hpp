#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "moca/errors.hpp"

namespace moca::detector {

struct DetectorConfig {
  std::size_t d_model = 64;
  std::size_t num_queries = 25;
  std::size_t dec_layers = 6;
  std::size_t n_heads = 4;
  std::size_t patch = 8;
  std::size_t enc_layers = 1;
  std::size_t ffn = 128;
  std::size_t num_classes = 10;
  std::size_t d_text = 64;
  bool moca = true;
  std::size_t qra_layer = 5;

  std::size_t d_head() const { return d_model / n_heads; }

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw ValidationError("detector config: " + msg);
    };
    need(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, "d_model must be a positive multiple of n_heads");
    need(d_model % 4 == 0, "d_model must be divisible by 4 for the 2D sinusoidal encoding");
    need(num_queries >= 1, "need at least one query");
    need(dec_layers >= 2, "need at least two decoder layers");
    need(patch >= 1 && ffn >= 1 && num_classes >= 1 && d_text >= 1, "patch, ffn, num_classes and d_text must be positive");
    need(qra_layer >= 2 && qra_layer <= dec_layers, "qra_layer must lie in [2, dec_layers]");
  }

  bool operator==(const DetectorConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = {{"d_model", c.d_model},       {"num_queries", c.num_queries}, {"dec_layers", c.dec_layers},
       {"n_heads", c.n_heads},       {"patch", c.patch},             {"enc_layers", c.enc_layers},
       {"ffn", c.ffn},               {"num_classes", c.num_classes}, {"d_text", c.d_text},
       {"moca", c.moca},             {"qra_layer", c.qra_layer}};
}

inline void from_json(const nlohmann::json& j, DetectorConfig& c) {
  const DetectorConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.num_queries = j.value("num_queries", d.num_queries);
  c.dec_layers = j.value("dec_layers", d.dec_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.patch = j.value("patch", d.patch);
  c.enc_layers = j.value("enc_layers", d.enc_layers);
  c.ffn = j.value("ffn", d.ffn);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.d_text = j.value("d_text", d.d_text);
  c.moca = j.value("moca", d.moca);
  c.qra_layer = j.value("qra_layer", d.qra_layer);
}

}  // namespace moca::detector
