#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "moca/tokens/projection.hpp"
#include "moca/tokens/registry.hpp"
#include "moca/tokens/silhouette.hpp"
#include "support/random_tensor.hpp"

using namespace moca;
using namespace moca::tokens;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("moca_tokens_" + name)).string();
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// The 27 prompts of the reference category list (class, modality).
const std::vector<std::pair<std::string, std::string>> kReferencePrompts = {
    {"Aortic enlargement", "CXR"}, {"Atelectasis", "CXR"}, {"Calcification", "CXR"},
    {"Cardiomegaly", "CXR"}, {"Consolidation", "CXR"}, {"ILD", "CXR"}, {"Infiltration", "CXR"},
    {"Lung Opacity", "CXR"}, {"Nodule/Mass", "CXR"}, {"Other lesion", "CXR"},
    {"Pleural effusion", "CXR"}, {"Pleural thickening", "CXR"}, {"Pneumothorax", "CXR"},
    {"Pulmonary fibrosis", "CXR"}, {"Brain tumor", "MRI"},
    {"Epithelial", "Pathology (H&E stain)"}, {"Lymphocyte", "Pathology (H&E stain)"},
    {"Neutrophil", "Pathology (H&E stain)"}, {"Macrophage", "Pathology (H&E stain)"},
    {"Left heart ventricle", "cardiac MRI"}, {"Myocardium", "cardiac MRI"},
    {"Right heart ventricle", "cardiac MRI"}, {"COVID-19 infection", "lung CT"},
    {"Nodule", "lung CT"}, {"Neoplastic polyp", "colon endoscope"}, {"Polyp", "colon endoscope"},
    {"Non-neoplastic polyp", "colon endoscope"},
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// O(n^2) silhouette written directly from the definition.
double brute_silhouette(const std::vector<std::vector<double>>& p, const std::vector<int>& l) {
  auto d = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < p[i].size(); ++k) s += (p[i][k] - p[j][k]) * (p[i][k] - p[j][k]);
    return std::sqrt(s);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double a_sum = 0.0;
    int a_n = 0;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (j != i && l[j] == l[i]) a_sum += d(i, j), ++a_n;
    if (a_n == 0) continue;
    const double a = a_sum / a_n;
    double b = 1e300;
    for (int other = 0; other < 10; ++other) {
      if (other == l[i]) continue;
      double s = 0.0;
      int n = 0;
      for (std::size_t j = 0; j < p.size(); ++j)
        if (l[j] == other) s += d(i, j), ++n;
      if (n) b = std::min(b, s / n);
    }
    const double m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(p.size());
}

}  // namespace

TEST(Prompt, RendersTemplate) {
  EXPECT_EQ(build_prompt("Cardiomegaly", "CXR").rendered, "Cardiomegaly in CXR");
  EXPECT_EQ(build_prompt("Brain tumor", "MRI").rendered, "Brain tumor in MRI");
  EXPECT_EQ(build_prompt("x", "y").rendered, "x in y");
}

TEST(Prompt, RejectsEmptyOrPaddedNames) {
  EXPECT_THROW(build_prompt("", "CXR"), ValidationError);
  EXPECT_THROW(build_prompt("Nodule", ""), ValidationError);
  EXPECT_THROW(build_prompt(" Nodule", "CT"), ValidationError);
  EXPECT_THROW(build_prompt("Nodule", "CT\n"), ValidationError);
}

TEST(SynthEmbedding, DeterministicUnitNorm) {
  const auto p = build_prompt("Cardiomegaly", "CXR");
  const auto a = synth_embedding(p, 64, 1);
  const auto b = synth_embedding(p, 64, 1);
  ASSERT_EQ(a.vector.size(), 64u);
  EXPECT_EQ(a.vector, b.vector);
  EXPECT_NEAR(std::sqrt(dot(a.vector, a.vector)), 1.0, 1e-12);
  EXPECT_EQ(a.source, EmbeddingSource::synthetic);
  EXPECT_NE(synth_embedding(p, 64, 2).vector, a.vector);
}

TEST(SynthEmbedding, MatchesIndependentStream) {
  // tests/oracles/synth_embedding.py
  const auto v = synth_embedding(build_prompt("Cardiomegaly", "CXR"), 64, 1).vector;
  EXPECT_NEAR(v[0], -0.013058292565435671, 1e-15);
  EXPECT_NEAR(v[1], 0.05222006373680244, 1e-15);
  EXPECT_NEAR(v[2], 0.19498680077495137, 1e-15);
  EXPECT_NEAR(v[3], 0.05287301581444309, 1e-15);
}

TEST(SynthEmbedding, OddDimensionAndMinimum) {
  EXPECT_EQ(synth_embedding(build_prompt("a", "b"), 5, 0).vector.size(), 5u);
  EXPECT_THROW(synth_embedding(build_prompt("a", "b"), 1, 0), ValidationError);
}

TEST(SynthEmbedding, ReferencePromptsAreNotCollinear) {
  std::vector<std::vector<double>> vs;
  for (const auto& [c, m] : kReferencePrompts) vs.push_back(synth_embedding(build_prompt(c, m), 64, 1).vector);
  double min_abs = 1.0;
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = i + 1; j < vs.size(); ++j) min_abs = std::min(min_abs, std::abs(dot(vs[i], vs[j])));
  EXPECT_LT(min_abs, 0.5);
  EXPECT_NEAR(min_abs, 0.0005882311219363645, 1e-12);  // oracle script
}

TEST(Registry, LoadsDeclaredPairs) {
  const auto path = temp_path("two.json");
  write_file(path, R"({"d_text": 3, "tokens": {"CXR|Nodule": [1, 0, 0], "CT|Lesion": [0, 1, 0]}})");
  const auto reg = load_registry(path);
  EXPECT_EQ(reg.size(), 2u);
  EXPECT_EQ(reg.d_text(), 3u);
  EXPECT_EQ(reg.modalities(), (std::vector<std::string>{"CXR", "CT"}));
  EXPECT_EQ(reg.lookup("CT", "Lesion").vector, (std::vector<double>{0, 1, 0}));
  EXPECT_THROW(reg.lookup("CT", "Nodule"), LookupError);
  EXPECT_THROW(reg.classes_for("MRI"), LookupError);
}

TEST(Registry, DistinctErrorKinds) {
  const auto dim = temp_path("dim.json");
  write_file(dim, R"({"d_text": 3, "tokens": {"CXR|Nodule": [1, 0]}})");
  EXPECT_THROW(load_registry(dim), DimensionError);

  const auto dup = temp_path("dup.json");
  write_file(dup, R"({"d_text": 2, "tokens": {"CXR|Nodule": [1, 0], "CXR|Nodule": [0, 1]}})");
  EXPECT_THROW(load_registry(dup), DuplicateKeyError);

  const auto bad = temp_path("bad.json");
  write_file(bad, R"({"d_text": 2, "tokens": {"CXR|Nodule": [1, 0)");
  EXPECT_THROW(load_registry(bad), ParseError);

  const auto nobar = temp_path("nobar.json");
  write_file(nobar, R"({"d_text": 2, "tokens": {"CXRNodule": [1, 0]}})");
  EXPECT_THROW(load_registry(nobar), ParseError);

  EXPECT_THROW(load_registry(temp_path("missing.json")), ParseError);
}

TEST(Registry, SaveLoadRoundTripIsBitwise) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [c, m] : kReferencePrompts) pairs.emplace_back(m, c);
  const auto reg = synthesize_registry(pairs, 64, 9);
  const auto path = temp_path("rt.json");
  save_registry(reg, path);
  const auto back = load_registry(path);
  ASSERT_EQ(back.size(), reg.size());
  for (std::size_t i = 0; i < reg.size(); ++i) {
    const auto& a = reg.entries()[i].embedding.vector;
    const auto& b = back.entries()[i].embedding.vector;
    for (std::size_t k = 0; k < a.size(); ++k)
      ASSERT_EQ(std::bit_cast<std::uint64_t>(a[k]), std::bit_cast<std::uint64_t>(b[k]));
  }
  EXPECT_TRUE(back == reg);
}

TEST(Registry, RejectsPipeInNames) {
  TokenRegistry reg(2);
  EXPECT_THROW(reg.add("C|T", "x", {{1.0, 0.0}}), ValidationError);
}

TEST(Projection, ZeroAndIdentityAndHandMatmul) {
  TokenRegistry reg(3);
  reg.add("CT", "Nodule", {{0.5, -1.0, 2.0}});
  TokenProjection zero{ad::Tensor::zeros(4, 3, true)};
  for (double v : project_token(reg, zero, "CT", "Nodule").values()) EXPECT_EQ(v, 0.0);

  TokenProjection eye{ad::Tensor::identity(3)};
  EXPECT_EQ(project_token(reg, eye, "CT", "Nodule").values(), (std::vector<double>{0.5, -1.0, 2.0}));

  Rng rng(4);
  auto w = moca::testing::random_tensor(rng, 2, 3, -1, 1, true);
  TokenProjection proj{w};
  const auto m = project_token(reg, proj, "CT", "Nodule");
  ASSERT_EQ(m.shape(), (ad::Shape{1, 2}));
  for (std::size_t r = 0; r < 2; ++r) {
    const double want = w.at(r, 0) * 0.5 + w.at(r, 1) * -1.0 + w.at(r, 2) * 2.0;
    EXPECT_NEAR(m.values()[r], want, 1e-15);
  }
  EXPECT_THROW(project_token(reg, proj, "CT", "Lesion"), LookupError);
}

TEST(Projection, GradientFlowsToWeight) {
  TokenRegistry reg(2);
  reg.add("CT", "Nodule", {{1.0, 2.0}});
  Rng rng(1);
  auto proj = TokenProjection::init(3, 2, rng);
  for (double v : proj.weight.values()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(2.0));
  ad::backward(ad::sum(project_token(reg, proj, "CT", "Nodule")));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(proj.weight.grad()[r * 2 + 0], 1.0);
    EXPECT_EQ(proj.weight.grad()[r * 2 + 1], 2.0);
  }
}

TEST(Silhouette, TwoTightFarClusters) {
  std::vector<std::vector<double>> pts{{0, 0}, {0, 0.1}, {10, 10}, {10, 10.1}};
  std::vector<int> labels{0, 0, 1, 1};
  EXPECT_NEAR(silhouette_score(pts, labels), 0.9929289321903443, 1e-12);  // oracle script
}

TEST(Silhouette, IdenticalPointsScoreZero) {
  std::vector<std::vector<double>> pts(4, {1.0, 1.0});
  std::vector<int> labels{0, 1, 0, 1};
  EXPECT_EQ(silhouette_score(pts, labels), 0.0);
}

TEST(Silhouette, SingleLabelRejected) {
  std::vector<std::vector<double>> pts{{0.0}, {1.0}};
  std::vector<int> labels{3, 3};
  EXPECT_THROW(silhouette_score(pts, labels), ValidationError);
}

TEST(Silhouette, MatchesBruteForceAndBounded) {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.index(49);
    std::vector<std::vector<double>> pts(n, std::vector<double>(3));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.index(4));
      for (double& x : pts[i]) x = rng.uniform(-1, 1) + labels[i];
    }
    labels[0] = 0;
    labels[1] = 1;
    const double s = silhouette_score(pts, labels);
    EXPECT_NEAR(s, brute_silhouette(pts, labels), 1e-12);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}
