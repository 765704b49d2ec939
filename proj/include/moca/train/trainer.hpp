#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "moca/data/attach_token.hpp"
#include "moca/data/dataset_io.hpp"
#include "moca/data/sampler.hpp"
#include "moca/detector/model.hpp"
#include "moca/eval/report_io.hpp"
#include "moca/losses/detection_loss.hpp"
#include "moca/queryrepa/pretrain.hpp"
#include "moca/tokens/registry.hpp"
#include "moca/train/checkpoint.hpp"
#include "moca/train/metrics_log.hpp"
#include "moca/train/optim.hpp"
#include "moca/train/run_config.hpp"

namespace moca::train {

inline constexpr const char* kAlignPrefix = "align.";

inline tokens::TokenRegistry make_registry(const TokenSource& src, const data::Vocabulary& vocab, std::size_t d_text) {
  tokens::TokenRegistry reg = src.kind == "file" ? tokens::load_registry(src.path)
                                                 : tokens::synthesize_registry(vocab.pairs(), d_text, src.seed);
  if (reg.d_text() != d_text) {
    throw ValidationError("token registry has d_text " + std::to_string(reg.d_text()) + ", config expects " +
                          std::to_string(d_text));
  }
  for (const auto& [m, c] : vocab.pairs()) reg.lookup(m, c);   // every dataset pair must be declared
  return reg;
}

struct RunContext {
  data::Vocabulary vocab;
  tokens::TokenRegistry registry{1};
};

// Highest-scoring (query, class) pairs of the last decoder layer, at most
// `max_dets` per image. Uses the modality-mean token.
inline std::vector<eval::Detection> predict_detections(const detector::Detector& model, const data::Sample& s,
                                                       const RunContext& ctx, std::size_t max_dets = 100) {
  ad::NoGradGuard ng;
  detector::ForwardOptions opt;
  if (model.moca_enabled()) {
    Rng unused(0);
    opt.token = data::attach_token(s, ctx.vocab, ctx.registry, model.token_projection(), unused,
                                   data::TokenMode::inference)
                    .token;
  }
  const auto r = model.forward(s.image, opt);
  const auto& last = r.layers.back();
  const std::size_t N = last.logits.rows(), C = last.logits.cols();
  std::vector<eval::Detection> dets;
  for (std::size_t q = 0; q < N; ++q) {
    const BoxCxCyWH box{last.boxes.at(q, 0), last.boxes.at(q, 1), last.boxes.at(q, 2), last.boxes.at(q, 3)};
    for (std::size_t c = 0; c < C; ++c) {
      const double score = 1.0 / (1.0 + std::exp(-last.logits.at(q, c)));
      dets.push_back({box, static_cast<int>(c), score, s.sample_id});
    }
  }
  std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (dets.size() > max_dets) dets.resize(max_dets);
  return dets;
}

inline eval::APReport evaluate_model(const detector::Detector& model, const std::vector<data::Sample>& samples,
                                     const RunContext& ctx) {
  std::vector<eval::EvalImage> images;
  std::vector<eval::Detection> dets;
  for (const auto& s : samples) {
    images.push_back({s.sample_id, s.modality_id, s.annotations});
    auto d = predict_detections(model, s, ctx);
    dets.insert(dets.end(), d.begin(), d.end());
  }
  return eval::ap_report(images, dets, ctx.vocab);
}

struct TrainOptions {
  std::filesystem::path out_dir{};                        // empty: write nothing
  std::optional<std::filesystem::path> init_checkpoint{}; // pretraining checkpoint to resume from
  std::function<void(const std::string&)> log{};          // progress lines
};

struct TrainResult {
  std::size_t steps = 0;
  double final_loss = 0.0;
  std::optional<eval::APReport> report;
  detector::Detector model;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

// Model config check for resuming; the MoCA flag itself may differ.
inline void require_matching_config(const nlohmann::json& ck_config, const detector::DetectorConfig& want) {
  detector::DetectorConfig have;
  try {
    have = ck_config.at("detector").get<detector::DetectorConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config has no readable detector section: ") + e.what());
  }
  have.moca = want.moca;
  if (!(have == want)) {
    throw CheckpointError("checkpoint detector config " + nlohmann::json(have).dump() + " does not match " +
                          nlohmann::json(want).dump());
  }
}

// Detection training: shuffled mini-batches over the train split, mean of
// per-image deep-supervised losses, AdamW with a one-step MultiStep schedule.
inline TrainResult run_detection_training(const RunConfig& cfg, const std::vector<data::Sample>& train,
                                          const std::vector<data::Sample>* val, const RunContext& ctx,
                                          const TrainOptions& opt = {}) {
  cfg.validate(ctx.vocab.num_modalities(), ctx.vocab.num_classes());
  if (train.empty()) throw ValidationError("training split is empty");
  const RunSeeds seeds = cfg.seeds();
  detector::Detector model(cfg.detector, seeds.model);
  auto params = model.named_parameters();
  if (opt.init_checkpoint) {
    const auto ck = read_checkpoint(*opt.init_checkpoint);
    require_matching_config(ck.meta.config, cfg.detector);
    load_parameters(ck, params, {kAlignPrefix});
  }
  AdamW optim(params, cfg.optim);
  const bool write = !opt.out_dir.empty();
  MetricsLog log;
  if (write) {
    std::filesystem::create_directories(opt.out_dir);
    write_text(opt.out_dir / "config.json", nlohmann::json(cfg).dump(2) + "\n");
    log = MetricsLog(opt.out_dir / "metrics.csv", {"step", "epoch", "lr", "loss", "focal", "l1", "giou"});
  }
  Rng class_rng(seeds.token_select);
  std::vector<std::size_t> order(train.size());
  TrainResult res;
  const std::size_t B = cfg.batch_size;
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.optim.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(seeds.order, epoch));
    order_rng.shuffle(order);
    const double lr = cfg.optim.lr_at(epoch);
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t end = std::min(order.size(), start + B);
      optim.zero_grad();
      losses::LossBreakdown parts;
      double loss_sum = 0.0;
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const data::Sample& s = train[order[k]];
        detector::ForwardOptions fo;
        if (model.moca_enabled()) fo.token = data::attach_token(s, ctx.vocab, ctx.registry, model.token_projection(), class_rng).token;
        const auto r = model.forward(s.image, fo);
        const ad::Tensor loss = ad::scale(losses::detection_loss(r.layers, s.annotations, cfg.loss, &parts), inv);
        loss_sum += loss.item();
        ad::backward(loss);
      }
      optim.step(lr);
      ++res.steps;
      res.final_loss = loss_sum;
      if (res.steps % cfg.log_every == 0) {
        log.row({static_cast<double>(res.steps), static_cast<double>(epoch), lr, loss_sum, parts.focal * inv,
                 parts.l1 * inv, parts.giou * inv});
      }
      if (opt.log && res.steps % 50 == 0) opt.log("step " + std::to_string(res.steps) + " loss " + std::to_string(loss_sum));
      if (cfg.max_steps > 0 && res.steps >= cfg.max_steps) {
        done = true;
        break;
      }
    }
  }
  if (write) {
    nlohmann::json run = cfg;
    save_checkpoint(opt.out_dir / "checkpoint", params, {run, res.steps, seeds.to_json()});
  }
  if (val) {
    res.report = evaluate_model(model, *val, ctx);
    if (write) {
      write_text(opt.out_dir / "report.json", eval::report_to_json(*res.report, ctx.vocab).dump(2) + "\n");
      write_text(opt.out_dir / "report.csv", eval::report_to_csv(*res.report, ctx.vocab));
    }
  }
  res.model = model;
  return res;
}

struct PretrainResult {
  std::size_t steps = 0;
  double final_loss = 0.0;
  double rank1_first = 0.0;   // rank-1 fraction over the first 10% of steps
  double rank1_last = 0.0;    // and over the last 10%
  detector::Detector model;
};

// QueryREPA pretraining: modality-balanced batches, alignment loss only.
// The checkpoint holds the detector parameters and g_phi under "align.".
inline PretrainResult run_pretraining(const RunConfig& cfg_in, const std::vector<data::Sample>& train,
                                      const RunContext& ctx, const TrainOptions& opt = {}) {
  RunConfig cfg = cfg_in;
  cfg.detector.moca = true;
  cfg.validate(ctx.vocab.num_modalities(), ctx.vocab.num_classes());
  const RunSeeds seeds = cfg.seeds();
  detector::Detector model(cfg.detector, seeds.model);
  Rng head_rng(derive_seed(seeds.model, 0xA11));
  auto head = queryrepa::AlignmentHead::init(cfg.detector.d_model, head_rng);
  auto params = model.named_parameters();
  head.visit("align", [&](const std::string& n, ad::Tensor& t) { params.emplace_back(n, t); });
  AdamW optim(params, cfg.optim);
  auto sampler = data::ModalityBatchSampler::from_samples(train, ctx.vocab.num_modalities(), cfg.qra.batch,
                                                          seeds.pretrain_sampler);
  const bool write = !opt.out_dir.empty();
  MetricsLog log;
  if (write) {
    std::filesystem::create_directories(opt.out_dir);
    write_text(opt.out_dir / "config.json", nlohmann::json(cfg).dump(2) + "\n");
    log = MetricsLog(opt.out_dir / "metrics.csv", {"step", "loss", "rank1"});
  }
  Rng class_rng(seeds.token_select);
  PretrainResult res;
  const std::size_t window = std::max<std::size_t>(1, cfg.qra.steps / 10);
  std::size_t hits_first = 0, n_first = 0, hits_last = 0, n_last = 0;
  for (std::size_t step = 0; step < cfg.qra.steps; ++step) {
    std::vector<const data::Sample*> batch;
    for (std::size_t i : sampler.next().indices) batch.push_back(&train[i]);
    const auto r = queryrepa::pretrain_step(batch, model, head, ctx.vocab, ctx.registry, cfg.qra, optim, cfg.optim.lr,
                                            class_rng);
    ++res.steps;
    res.final_loss = r.loss;
    if (step < window) hits_first += r.rank1, n_first += r.batch;
    if (step + window >= cfg.qra.steps) hits_last += r.rank1, n_last += r.batch;
    if (res.steps % cfg.log_every == 0) {
      log.row({static_cast<double>(res.steps), r.loss, static_cast<double>(r.rank1) / static_cast<double>(r.batch)});
    }
    if (opt.log && res.steps % 50 == 0) opt.log("pretrain step " + std::to_string(res.steps) + " loss " + std::to_string(r.loss));
  }
  res.rank1_first = n_first ? static_cast<double>(hits_first) / static_cast<double>(n_first) : 0.0;
  res.rank1_last = n_last ? static_cast<double>(hits_last) / static_cast<double>(n_last) : 0.0;
  if (write) {
    nlohmann::json run = cfg;
    save_checkpoint(opt.out_dir / "checkpoint", params, {run, res.steps, seeds.to_json()});
    write_text(opt.out_dir / "pretrain_report.json",
               nlohmann::json{{"steps", res.steps}, {"final_loss", res.final_loss}, {"rank1_first", res.rank1_first},
                              {"rank1_last", res.rank1_last}}
                       .dump(2) +
                   "\n");
  }
  res.model = model;
  return res;
}

}  // namespace moca::train
