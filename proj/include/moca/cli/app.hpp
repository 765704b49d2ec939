#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "moca/data/dataset_io.hpp"
#include "moca/data/synthetic.hpp"
#include "moca/detector/bench.hpp"
#include "moca/mi_lab/bound.hpp"
#include "moca/tokens/silhouette.hpp"
#include "moca/train/trainer.hpp"

namespace moca::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

namespace detail {

inline void write_json(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  train::write_text(p, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw ValidationError("expected 'on' or 'off', got '" + s + "'");
}

struct Loaded {
  train::RunContext ctx;
  std::vector<data::Sample> train, val;
};

inline Loaded load_for_run(const train::RunConfig& cfg, bool need_val) {
  Loaded l;
  auto tr = data::load_dataset(cfg.data_dir, "train");
  l.ctx.vocab = tr.vocab;
  l.train = std::move(tr.samples);
  if (need_val) l.val = data::load_dataset(cfg.data_dir, "val").samples;
  cfg.validate(l.ctx.vocab.num_modalities(), l.ctx.vocab.num_classes());
  l.ctx.registry = train::make_registry(cfg.tokens, l.ctx.vocab, cfg.detector.d_text);
  return l;
}

inline void print_metrics(const eval::APReport& r, const data::Vocabulary& vocab) {
  std::cout << eval::report_to_csv(r, vocab);
}

}  // namespace detail

inline int cmd_gen_data(const std::string& spec_path, const std::string& out, std::optional<std::uint64_t> seed) {
  data::DatasetSpec spec = spec_path.empty() ? data::default_dataset_spec()
                                             : detail::read_json(spec_path).get<data::DatasetSpec>();
  if (seed) spec.seed = *seed;
  spec.validate();
  std::map<std::string, std::vector<data::Sample>> splits;
  for (const auto& [name, count] : spec.counts) splits[name] = data::generate_synthetic(spec, name);
  data::export_dataset(spec, splits, out);
  for (const auto& [name, s] : splits) std::cout << name << ": " << s.size() << " images\n";
  std::cout << "wrote " << out << "\n";
  return kOk;
}

inline int cmd_train(train::RunConfig cfg, const std::string& out, const std::string& moca,
                     const std::string& from_pretrain) {
  if (!moca.empty()) cfg.detector.moca = detail::parse_on_off(moca);
  auto l = detail::load_for_run(cfg, true);
  train::TrainOptions opt{.out_dir = out, .log = [](const std::string& s) { std::cerr << s << "\n"; }};
  if (!from_pretrain.empty()) opt.init_checkpoint = fs::path(from_pretrain);
  const auto r = train::run_detection_training(cfg, l.train, &l.val, l.ctx, opt);
  std::cout << "steps " << r.steps << ", final loss " << r.final_loss << "\n";
  detail::print_metrics(*r.report, l.ctx.vocab);
  return kOk;
}

inline int cmd_pretrain(const train::RunConfig& cfg, const std::string& out) {
  auto l = detail::load_for_run(cfg, false);
  const auto r = train::run_pretraining(cfg, l.train, l.ctx,
                                        {.out_dir = out, .log = [](const std::string& s) { std::cerr << s << "\n"; }});
  std::printf("steps %zu, final loss %.6f, rank-1 fraction %.3f -> %.3f\n", r.steps, r.final_loss, r.rank1_first,
              r.rank1_last);
  return kOk;
}

inline int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
                    const std::string& out, const std::string& csv) {
  const auto ck = train::read_checkpoint(ckpt);
  train::RunConfig cfg;
  try {
    cfg = ck.meta.config.get<train::RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config unreadable: ") + e.what());
  }
  auto ds = data::load_dataset(data_dir.empty() ? cfg.data_dir : data_dir, split);
  train::RunContext ctx{ds.vocab, train::make_registry(cfg.tokens, ds.vocab, cfg.detector.d_text)};
  detector::Detector model(cfg.detector, 0);
  auto params = model.named_parameters();
  train::load_parameters(ck, params, {train::kAlignPrefix});
  const auto rep = train::evaluate_model(model, ds.samples, ctx);
  if (!out.empty()) detail::write_json(out, eval::report_to_json(rep, ctx.vocab));
  if (!csv.empty()) train::write_text(csv, eval::report_to_csv(rep, ctx.vocab));
  detail::print_metrics(rep, ctx.vocab);
  return kOk;
}

inline int cmd_mi_lab(const std::string& joints_path, const std::vector<std::size_t>& Ks, std::size_t samples,
                      std::uint64_t seed, std::size_t n_joints, const std::string& report) {
  std::vector<mi::DiscreteJoint> joints;
  if (joints_path.empty()) {
    joints = mi::seeded_joints(seed, n_joints);
  } else {
    const auto j = detail::read_json(joints_path);
    if (!j.is_array()) throw ValidationError("joints file must hold a JSON array of {nu, nv, p}");
    for (const auto& e : j) joints.push_back(mi::joint_from_json(e));
  }
  mi::BoundOptions opt;
  opt.Ks = Ks;
  opt.n_samples = samples;
  opt.seed = seed;
  const auto rep = mi::verify_bound(joints, opt);
  if (!report.empty()) detail::write_json(report, mi::report_to_json(rep));
  std::printf("%zu joints x %zu K values x 2 critics: %zu violations\n", joints.size(), Ks.size(), rep.violations);
  for (const auto& jc : rep.joints)
    for (const auto& f : jc.failures) std::printf("  joint %zu: %s\n", jc.joint, f.c_str());
  std::printf("%s\n", rep.ok ? "bound verified" : "bound check FAILED");
  return rep.ok ? kOk : kRuntime;
}

inline int cmd_bench(const std::string& config, std::size_t queries, std::size_t trials, std::size_t image,
                     const std::string& out) {
  detector::DetectorConfig c = config.empty() ? detector::DetectorConfig{} : detail::read_json(config).get<train::RunConfig>().detector;
  if (queries > 0) c.num_queries = queries;
  const auto r = detector::latency_bench(c, trials, 1, image);
  const nlohmann::json j = {{"num_queries", c.num_queries}, {"d_model", c.d_model},     {"dec_layers", c.dec_layers},
                            {"trials", r.trials},           {"baseline_ms", r.baseline_ms}, {"moca_ms", r.moca_ms},
                            {"overhead_pct", 100.0 * r.overhead()}};
  if (!out.empty()) detail::write_json(out, j);
  std::printf("N=%zu d=%zu layers=%zu: baseline %.4f ms, moca %.4f ms, overhead %.2f%%\n", c.num_queries, c.d_model,
              c.dec_layers, r.baseline_ms, r.moca_ms, 100.0 * r.overhead());
  return kOk;
}

inline int cmd_tokens_synth(const std::string& data_dir, std::size_t d_text, std::uint64_t seed, const std::string& out) {
  const auto manifest = data::read_manifest(data_dir);
  const auto spec = manifest.at("spec").get<data::DatasetSpec>();
  tokens::save_registry(tokens::synthesize_registry(spec.vocabulary().pairs(), d_text, seed), out);
  std::cout << "wrote " << out << "\n";
  return kOk;
}

inline int cmd_tokens_inspect(const std::string& path) {
  const auto reg = tokens::load_registry(path);
  std::printf("d_text %zu, %zu tokens, %zu modalities\n", reg.d_text(), reg.size(), reg.modalities().size());
  for (const auto& e : reg.entries()) {
    double n = 0.0;
    for (double v : e.embedding.vector) n += v * v;
    std::printf("  %-16s %-24s |e| = %.4f\n", e.modality.c_str(), e.class_name.c_str(), std::sqrt(n));
  }
  return kOk;
}

// Silhouette of the tokens grouped by modality: raw embeddings, or projected
// through W from a checkpoint.
inline int cmd_tokens_silhouette(const std::string& path, const std::string& ckpt) {
  const auto reg = tokens::load_registry(path);
  std::vector<std::vector<double>> pts;
  std::vector<int> labels;
  std::optional<tokens::TokenProjection> proj;
  if (!ckpt.empty()) {
    const auto ck = train::read_checkpoint(ckpt);
    const auto it = ck.tensors.find("token_proj.W");
    if (it == ck.tensors.end()) throw CheckpointError("checkpoint has no token_proj.W");
    const auto& [shape, vals] = it->second;
    proj = tokens::TokenProjection{ad::Tensor::from(shape[0], shape[1], vals)};
  }
  for (const auto& e : reg.entries()) {
    if (proj) {
      pts.push_back(tokens::project_token(reg, *proj, e.modality, e.class_name).values());
    } else {
      pts.push_back(e.embedding.vector);
    }
    const auto& mods = reg.modalities();
    labels.push_back(static_cast<int>(std::find(mods.begin(), mods.end(), e.modality) - mods.begin()));
  }
  std::printf("silhouette (%s, by modality): %.6f\n", proj ? "projected" : "raw", tokens::silhouette_score(pts, labels));
  return kOk;
}

// Parses argv and runs one subcommand. Validation problems exit 1, runtime
// failures 2.
inline int run(int argc, char** argv, std::ostream& err = std::cerr) {
  CLI::App app{"MoCA detector experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  std::string spec_path, out, config, moca, from_pretrain, ckpt, data_dir, split = "val", csv, joints, report, registry;
  std::optional<std::uint64_t> seed_opt;
  std::uint64_t seed = 1;
  std::optional<std::size_t> max_steps, steps;
  std::vector<std::size_t> Ks{1, 3, 7, 15};
  std::size_t samples = 20000, n_joints = 20, queries = 0, trials = 100, image = 64, d_text = 64;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic multimodality dataset");
  gen->add_option("--spec", spec_path, "dataset spec JSON (default: built-in five-modality spec)");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--seed", seed_opt, "override the spec seed");

  auto add_run_opts = [&](CLI::App* c) {
    c->add_option("--config", config, "run config JSON")->required();
    c->add_option("--out", out, "output directory")->required();
    c->add_option("--data", data_dir, "dataset directory (overrides config)");
    c->add_option("--seed", seed_opt, "override the run seed");
  };
  auto* pre = app.add_subcommand("pretrain", "QueryREPA pretraining");
  add_run_opts(pre);
  pre->add_option("--steps", steps, "override qra.steps");
  auto* tr = app.add_subcommand("train", "detection training");
  add_run_opts(tr);
  tr->add_option("--moca", moca, "on|off")->check(CLI::IsMember({"on", "off"}));
  tr->add_option("--from-pretrain", from_pretrain, "pretraining checkpoint directory");
  tr->add_option("--max-steps", max_steps, "stop after this many steps");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ev->add_option("--data", data_dir, "dataset directory (default: from the checkpoint config)");
  ev->add_option("--split", split, "dataset split");
  ev->add_option("--out", out, "report JSON");
  ev->add_option("--csv", csv, "report CSV");

  auto* mil = app.add_subcommand("mi-lab", "certify the InfoNCE bound on discrete joints");
  mil->add_option("--joints", joints, "JSON array of joints (default: seeded joints)");
  mil->add_option("--K", Ks, "negative counts")->delimiter(',');
  mil->add_option("--samples", samples, "Monte-Carlo samples per cell");
  mil->add_option("--seed", seed, "seed");
  mil->add_option("--n-joints", n_joints, "number of seeded joints");
  mil->add_option("--report", report, "report JSON");

  auto* be = app.add_subcommand("bench", "decoder latency with and without MoCA");
  be->add_option("--config", config, "run config JSON (default: built-in detector config)");
  be->add_option("--queries", queries, "override the number of queries");
  be->add_option("--trials", trials, "trials (>= 100)");
  be->add_option("--image", image, "image side in pixels");
  be->add_option("--out", out, "result JSON");

  auto* tok = app.add_subcommand("tokens", "modality token utilities");
  tok->require_subcommand(1);
  auto* tsyn = tok->add_subcommand("synth", "synthesize a registry for a dataset");
  tsyn->add_option("--data", data_dir, "dataset directory")->required();
  tsyn->add_option("--d-text", d_text, "embedding width");
  tsyn->add_option("--seed", seed, "seed");
  tsyn->add_option("--out", out, "registry JSON")->required();
  auto* tins = tok->add_subcommand("inspect", "list registry entries");
  tins->add_option("--registry", registry, "registry JSON")->required();
  auto* tsil = tok->add_subcommand("silhouette", "silhouette score of tokens by modality");
  tsil->add_option("--registry", registry, "registry JSON")->required();
  tsil->add_option("--ckpt", ckpt, "checkpoint whose W projects the tokens");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, std::cout, err);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    auto run_config = [&] {
      train::RunConfig cfg = train::load_run_config(config);
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      if (seed_opt) cfg.seed = *seed_opt;
      if (steps) cfg.qra.steps = *steps;
      if (max_steps) cfg.max_steps = *max_steps;
      cfg.validate();
      return cfg;
    };
    if (*gen) return cmd_gen_data(spec_path, out, seed_opt);
    if (*pre) return cmd_pretrain(run_config(), out);
    if (*tr) return cmd_train(run_config(), out, moca, from_pretrain);
    if (*ev) return cmd_eval(ckpt, data_dir, split, out, csv);
    if (*mil) return cmd_mi_lab(joints, Ks, samples, seed, n_joints, report);
    if (*be) return cmd_bench(config, queries, trials, image, out);
    if (*tsyn) return cmd_tokens_synth(data_dir, d_text, seed, out);
    if (*tins) return cmd_tokens_inspect(registry);
    if (*tsil) return cmd_tokens_silhouette(registry, ckpt);
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kValidation;
  } catch (const DuplicateKeyError& e) {
    err << "duplicate key: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}

}  // namespace moca::cli
