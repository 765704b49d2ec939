#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "moca/data/sample.hpp"
#include "moca/detector/config.hpp"
#include "moca/detector/layers.hpp"
#include "moca/detector/predictions.hpp"
#include "moca/tokens/projection.hpp"

namespace moca::detector {

struct EncoderLayer {
  MultiHeadAttention attn;
  LayerNorm ln1;
  FeedForward ffn;
  LayerNorm ln2;

  Tensor operator()(const Tensor& x) const {
    const Tensor h = ln1(ad::add(x, attn(x, x, x)));
    return ln2(ad::add(h, ffn(h)));
  }
  void visit(const std::string& p, const ParamVisitor& f) {
    attn.visit(p + ".attn", f);
    ln1.visit(p + ".ln1", f);
    ffn.visit(p + ".ffn", f);
    ln2.visit(p + ".ln2", f);
  }
};

struct DecoderLayer {
  MultiHeadAttention self_attn;
  LayerNorm ln1;
  MultiHeadAttention cross_attn;
  LayerNorm ln2;
  FeedForward ffn;
  LayerNorm ln3;

  // `token_row` is f_theta(m) (1 x d) or empty for the plain decoder. Queries
  // are taken from the N query rows only, so the token's own output row is
  // never formed and Q^(l+1) keeps N rows.
  Tensor operator()(const Tensor& queries, const Tensor& query_pos, const Tensor& memory,
                    const std::optional<Tensor>& token_row, bool mask_token,
                    std::vector<Tensor>* attn_weights = nullptr) const {
    const Tensor q_in = ad::add(queries, query_pos);
    Tensor msa;
    if (token_row) {
      const Tensor aug = ad::concat_rows({queries, *token_row});
      // the token row carries no positional embedding
      const Tensor aug_pos = ad::concat_rows({query_pos, Tensor::zeros(1, queries.cols())});
      std::vector<char> mask;
      if (mask_token) {
        mask.assign(queries.rows() + 1, 0);
        mask.back() = 1;
      }
      msa = self_attn(q_in, ad::add(aug, aug_pos), aug, mask, attn_weights);
    } else {
      msa = self_attn(q_in, q_in, queries, {}, attn_weights);
    }
    const Tensor h1 = ln1(ad::add(queries, msa));
    const Tensor h2 = ln2(ad::add(h1, cross_attn(ad::add(h1, query_pos), memory, memory)));
    return ln3(ad::add(h2, ffn(h2)));
  }

  void visit(const std::string& p, const ParamVisitor& f) {
    self_attn.visit(p + ".self_attn", f);
    ln1.visit(p + ".ln1", f);
    cross_attn.visit(p + ".cross_attn", f);
    ln2.visit(p + ".ln2", f);
    ffn.visit(p + ".ffn", f);
    ln3.visit(p + ".ln3", f);
  }
};

struct ForwardOptions {
  std::optional<Tensor> token{}; // m_{d,c}, 1 x d_model; required when MoCA is on
  bool mask_token = false;       // hard-mask the token column in self-attention
  std::size_t num_layers = 0;    // run only the first k decoder layers (0 = all)
  bool heads = true;             // evaluate prediction heads on every layer
  std::vector<Tensor>* self_attn_weights = nullptr;
};

struct ForwardResult {
  Tensor memory;
  // states[0] = Q^(1) (initial query embeddings); states[i] = output of
  // decoder layer i, i.e. Q^(i+1).
  std::vector<Tensor> states;
  std::vector<LayerPrediction> layers;
};

// Patches of side P as rows of a T x P^2 matrix, row-major patch order.
inline Tensor image_patches(const data::Image& img, std::size_t P) {
  if (img.height % P != 0 || img.width % P != 0) {
    throw DimensionError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " is not divisible by patch size " + std::to_string(P));
  }
  const std::size_t gh = img.height / P, gw = img.width / P;
  std::vector<double> out(gh * gw * P * P);
  for (std::size_t pr = 0; pr < gh; ++pr)
    for (std::size_t pc = 0; pc < gw; ++pc) {
      double* row = out.data() + (pr * gw + pc) * P * P;
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x) row[y * P + x] = img.at(pr * P + y, pc * P + x);
    }
  return Tensor::from(gh * gw, P * P, std::move(out));
}

class Detector {
 public:
  Detector() = default;

  Detector(DetectorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t d = cfg_.d_model;
    patch_ = Linear::init(cfg_.patch * cfg_.patch, d, rng);
    for (std::size_t i = 0; i < cfg_.enc_layers; ++i)
      enc_.push_back({MultiHeadAttention::init(d, cfg_.n_heads, rng), LayerNorm::init(d),
                      FeedForward::init(d, cfg_.ffn, rng), LayerNorm::init(d)});
    query_embed_ = normal_param(cfg_.num_queries, d, rng);
    query_pos_ = normal_param(cfg_.num_queries, d, rng);
    f_theta_ = detail::xavier(d, d, rng);
    for (std::size_t i = 0; i < cfg_.dec_layers; ++i)
      dec_.push_back({MultiHeadAttention::init(d, cfg_.n_heads, rng), LayerNorm::init(d),
                      MultiHeadAttention::init(d, cfg_.n_heads, rng), LayerNorm::init(d),
                      FeedForward::init(d, cfg_.ffn, rng), LayerNorm::init(d)});
    cls_ = Linear::init(d, cfg_.num_classes, rng);
    // prior probability 0.01 on every class
    for (double& b : cls_.b.mutable_data()) b = -std::log(99.0);
    box1_ = Linear::init(d, d, rng);
    box2_ = Linear::init(d, d, rng);
    box3_ = Linear::init(d, 4, rng);
    token_proj_ = tokens::TokenProjection::init(d, cfg_.d_text, rng);
  }

  const DetectorConfig& config() const { return cfg_; }
  bool moca_enabled() const { return cfg_.moca; }
  void set_moca(bool on) { cfg_.moca = on; }

  const tokens::TokenProjection& token_projection() const { return token_proj_; }
  Tensor& f_theta() { return f_theta_; }

  // Every learnable tensor in a fixed order with a stable dotted name.
  void visit(const ParamVisitor& f) {
    patch_.visit("patch", f);
    for (std::size_t i = 0; i < enc_.size(); ++i) enc_[i].visit("enc." + std::to_string(i), f);
    f("query_embed", query_embed_);
    f("query_pos", query_pos_);
    f("f_theta", f_theta_);
    for (std::size_t i = 0; i < dec_.size(); ++i) dec_[i].visit("dec." + std::to_string(i), f);
    cls_.visit("head.cls", f);
    box1_.visit("head.box1", f);
    box2_.visit("head.box2", f);
    box3_.visit("head.box3", f);
    f("token_proj.W", token_proj_.weight);
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit([&](const std::string& n, Tensor& t) { out.emplace_back(n, t); });
    return out;
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    visit([&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
  }

  // Independent copy; plain copies share parameter storage.
  Detector clone() const {
    Detector out = *this;
    out.visit([](const std::string&, Tensor& t) { t = Tensor::from(t.rows(), t.cols(), t.values(), true); });
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor& t) { n += t.size(); });
    return n;
  }

  // Patch embedding + fixed 2D positions, then the encoder layers.
  Tensor encode(const data::Image& img) const {
    const std::size_t P = cfg_.patch;
    Tensor x = ad::add(patch_(image_patches(img, P)), sinusoidal_2d(img.height / P, img.width / P, cfg_.d_model));
    for (const auto& layer : enc_) x = layer(x);
    return x;
  }

  // f_theta(m) as a 1 x d row.
  Tensor project_token(const Tensor& token) const {
    if (token.rows() != 1 || token.cols() != cfg_.d_model) {
      throw DimensionError("modality token must be 1 x " + std::to_string(cfg_.d_model) + ", got " +
                           ad::shape_str(token.rows(), token.cols()));
    }
    return ad::matmul(token, f_theta_);
  }

  LayerPrediction predict(const Tensor& q) const {
    const Tensor h = ad::relu(box2_(ad::relu(box1_(q))));
    return {cls_(q), ad::sigmoid(box3_(h))};
  }

  ForwardResult decode(const Tensor& memory, const ForwardOptions& opt = {}) const {
    std::optional<Tensor> token_row;
    if (cfg_.moca) {
      if (!opt.token) throw ContractError("MoCA is enabled but no modality token was supplied");
      token_row = project_token(*opt.token);
    }
    const std::size_t L = opt.num_layers == 0 ? cfg_.dec_layers : opt.num_layers;
    if (L > cfg_.dec_layers) throw ContractError("requested more decoder layers than configured");
    ForwardResult r;
    r.memory = memory;
    r.states.push_back(query_embed_);
    for (std::size_t l = 0; l < L; ++l) {
      // the same projected token is re-appended at every layer
      r.states.push_back(dec_[l](r.states.back(), query_pos_, memory, token_row, opt.mask_token,
                                 opt.self_attn_weights));
      if (opt.heads) r.layers.push_back(predict(r.states.back()));
    }
    return r;
  }

  ForwardResult forward(const data::Image& img, const ForwardOptions& opt = {}) const {
    return decode(encode(img), opt);
  }

 private:
  static Tensor normal_param(std::size_t r, std::size_t c, Rng& rng) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.normal();
    return Tensor::from(r, c, std::move(v), true);
  }

  DetectorConfig cfg_;
  Linear patch_;
  std::vector<EncoderLayer> enc_;
  Tensor query_embed_, query_pos_, f_theta_;
  std::vector<DecoderLayer> dec_;
  Linear cls_, box1_, box2_, box3_;
  tokens::TokenProjection token_proj_;
};

}  // namespace moca::detector
