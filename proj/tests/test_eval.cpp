#include <gtest/gtest.h>

#include <algorithm>

#include "moca/eval/report_io.hpp"
#include "moca/rng.hpp"

using namespace moca;
using namespace moca::eval;

namespace {

data::Vocabulary fixture_vocab() {
  data::Vocabulary v;
  v.modalities = {"A", "B"};
  v.classes = {"a0", "a1", "b0"};
  v.class_modality = {0, 0, 1};
  return v;
}

BoxCxCyWH xyxy(double x1, double y1, double x2, double y2) { return to_cxcywh({x1, y1, x2, y2}); }

// Same boxes as tests/oracles/ap_fixture.py.
std::vector<EvalImage> fixture_images() {
  return {{"img_a", 0, {{xyxy(0.10, 0.10, 0.30, 0.30), 0}, {xyxy(0.50, 0.50, 0.90, 0.80), 1}}},
          {"img_b", 0, {{xyxy(0.20, 0.20, 0.40, 0.50), 0}, {xyxy(0.60, 0.10, 0.80, 0.30), 0}}},
          {"img_c", 1, {{xyxy(0.30, 0.30, 0.70, 0.70), 2}}}};
}

std::vector<Detection> fixture_dets() {
  return {{xyxy(0.11, 0.10, 0.30, 0.31), 0, 0.95, "img_a"}, {xyxy(0.50, 0.55, 0.90, 0.80), 1, 0.90, "img_a"},
          {xyxy(0.60, 0.60, 0.70, 0.70), 0, 0.40, "img_a"}, {xyxy(0.20, 0.25, 0.40, 0.50), 0, 0.85, "img_b"},
          {xyxy(0.62, 0.12, 0.85, 0.33), 0, 0.60, "img_b"}, {xyxy(0.21, 0.20, 0.40, 0.52), 0, 0.30, "img_b"},
          {xyxy(0.10, 0.60, 0.30, 0.90), 1, 0.50, "img_b"}, {xyxy(0.35, 0.30, 0.70, 0.75), 2, 0.80, "img_c"},
          {xyxy(0.00, 0.00, 0.20, 0.20), 2, 0.70, "img_c"}};
}

}  // namespace

TEST(Iou, Examples) {
  EXPECT_EQ(iou(BoxXYXY{0, 0, 2, 2}, BoxXYXY{0, 0, 2, 2}), 1.0);
  EXPECT_EQ(iou(BoxXYXY{0, 0, 1, 1}, BoxXYXY{2, 2, 3, 3}), 0.0);
  EXPECT_NEAR(iou(BoxXYXY{0, 0, 2, 2}, BoxXYXY{1, 0, 3, 2}), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(iou(BoxXYXY{0, 0, 0, 2}, BoxXYXY{0, 0, 1, 1}), ValidationError);
}

TEST(Thresholds, TenStepsFromHalf) {
  const auto t = iou_thresholds();
  EXPECT_EQ(t.front(), 0.5);
  EXPECT_EQ(t[2], 0.6);
  EXPECT_EQ(t.back(), 0.95);
}

TEST(Matching, GreedyByScore) {
  const BoxCxCyWH gt{0.5, 0.5, 0.4, 0.4};
  EXPECT_EQ(match_and_score({{0.5, 0.5, 0.4, 0.24}}, {0.9}, {gt}, 0.5), (std::vector<bool>{true}));
  // two detections on one GT: the higher score wins regardless of order
  EXPECT_EQ(match_and_score({gt, gt}, {0.3, 0.8}, {gt}, 0.5), (std::vector<bool>{false, true}));
  // equal scores: insertion order decides
  EXPECT_EQ(match_and_score({gt, gt}, {0.5, 0.5}, {gt}, 0.5), (std::vector<bool>{true, false}));
}

TEST(Matching, IouEqualToThresholdIsTruePositive) {
  const BoxCxCyWH gt{0.5, 0.5, 1.0, 1.0};
  const BoxCxCyWH det{0.3, 0.5, 0.6, 1.0};   // IoU exactly 0.6
  ASSERT_EQ(iou(det, gt), 0.6);
  EXPECT_EQ(match_and_score({det}, {1.0}, {gt}, 0.6), (std::vector<bool>{true}));
  EXPECT_EQ(match_and_score({det}, {1.0}, {gt}, 0.65), (std::vector<bool>{false}));
}

TEST(AveragePrecision, Examples) {
  EXPECT_EQ(average_precision({true}, {0.9}, 1), 1.0);
  EXPECT_EQ(average_precision({}, {}, 3), 0.0);
  EXPECT_FALSE(average_precision({}, {}, 0).has_value());
  // precision 1/2 at recall 1 -> 0.5 everywhere
  EXPECT_NEAR(*average_precision({false, true}, {0.9, 0.8}, 1), 0.5, 1e-15);
  // recall 0.5 at precision 1, nothing more: 51 of 101 points
  EXPECT_NEAR(*average_precision({true}, {0.9}, 2), 51.0 / 101.0, 1e-15);
}

TEST(ApReport, SingleDetectionAtIou06GivesPoint3) {
  data::Vocabulary v;
  v.modalities = {"A"};
  v.classes = {"c"};
  v.class_modality = {0};
  const std::vector<EvalImage> imgs{{"x", 0, {{{0.5, 0.5, 1.0, 1.0}, 0}}}};
  const auto rep = ap_report(imgs, {{{0.3, 0.5, 0.6, 1.0}, 0, 0.9, "x"}}, v);
  EXPECT_NEAR(*rep.total.ap, 0.30, 1e-9);
  EXPECT_EQ(*rep.total.ap50, 1.0);
  EXPECT_EQ(*rep.total.ap75, 0.0);
  const auto perfect = ap_report(imgs, {{{0.5, 0.5, 1.0, 1.0}, 0, 0.9, "x"}}, v);
  EXPECT_NEAR(*perfect.total.ap, 1.0, 1e-9);
  // one modality: total equals the modality entry
  EXPECT_EQ(rep.total.ap, rep.per_modality.at(0).ap);
  EXPECT_EQ(rep.total.ap50, rep.per_modality.at(0).ap50);
}

TEST(ApReport, MatchesBruteForceOracle) {
  const auto v = fixture_vocab();
  const auto rep = ap_report(fixture_images(), fixture_dets(), v);
  // python3 tests/oracles/ap_fixture.py
  constexpr double kTol = 1e-12;
  EXPECT_NEAR(*rep.total.ap, 0.6373597359735974, kTol);
  EXPECT_NEAR(*rep.total.ap50, 1.0, kTol);
  EXPECT_NEAR(*rep.total.ap75, 0.8877887788778878, kTol);
  EXPECT_NEAR(*rep.per_modality.at(0).ap, 0.6560396039603961, kTol);
  EXPECT_NEAR(*rep.per_modality.at(0).ap75, 0.8316831683168316, kTol);
  EXPECT_NEAR(*rep.per_modality.at(1).ap, 0.6, kTol);
  EXPECT_NEAR(*rep.per_modality.at(1).ap75, 1.0, kTol);
  const double class0[10] = {1.0, 1.0, 0.6633663366336634, 0.6633663366336634, 0.6633663366336634,
                             0.6633663366336634, 0.6633663366336634, 0.46732673267326735, 0.33663366336633666, 0.0};
  double s = 0.0;
  for (double a : class0) s += a;
  EXPECT_NEAR(*rep.total.per_class.at(0).ap, s / 10.0, kTol);
  EXPECT_NEAR(*rep.total.per_class.at(0).ap75, class0[5], kTol);
  EXPECT_EQ(rep.total.per_class.at(0).n_gt, 3u);
}

TEST(ApReport, InvariantToEnumerationOrder) {
  const auto v = fixture_vocab();
  const auto ref = report_to_json(ap_report(fixture_images(), fixture_dets(), v), v);
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    auto imgs = fixture_images();
    auto dets = fixture_dets();
    rng.shuffle(imgs);
    rng.shuffle(dets);
    EXPECT_EQ(report_to_json(ap_report(imgs, dets, v), v), ref);
  }
}

TEST(ApReport, PropertiesOnRandomFixtures) {
  const auto v = fixture_vocab();
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<EvalImage> imgs;
    std::vector<Detection> dets;
    for (int i = 0; i < 4; ++i) {
      EvalImage img{"im" + std::to_string(i), i % 2, {}};
      const auto classes = v.classes_of(img.modality_id);
      for (int g = 0; g < 3; ++g) {
        const BoxCxCyWH b{rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6), rng.uniform(0.02, 0.3), rng.uniform(0.02, 0.3)};
        const int c = classes[rng.index(classes.size())];
        img.gts.push_back({b, c});
        const BoxCxCyWH jit{b.cx + rng.uniform(-0.03, 0.03), b.cy + rng.uniform(-0.03, 0.03), b.w, b.h};
        dets.push_back({jit, c, rng.uniform(), img.image_id});
        dets.push_back({{rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7), 0.1, 0.1}, c, rng.uniform(), img.image_id});
      }
      imgs.push_back(img);
    }
    const auto rep = ap_report(imgs, dets, v);
    for (const auto& o : {rep.total.ap, rep.total.ap50, rep.total.ap75, rep.total.aps, rep.total.apm, rep.total.apl}) {
      if (!o) continue;
      EXPECT_GE(*o, 0.0);
      EXPECT_LE(*o, 1.0);
    }
    EXPECT_GE(*rep.total.ap50, *rep.total.ap);
    // a correct top-scored detection of a GT nobody claims never lowers AP
    auto with_gt = imgs;
    const data::Annotation extra{{0.9, 0.9, 0.05, 0.05}, imgs[0].gts[0].class_id};
    with_gt[0].gts.push_back(extra);
    const double before = *ap_report(with_gt, dets, v).total.ap;
    auto more = dets;
    more.push_back({extra.box, extra.class_id, 2.0, imgs[0].image_id});
    EXPECT_GE(*ap_report(with_gt, more, v).total.ap, before);
  }
}

TEST(ApReport, SizeBucketsAndDetectionCap) {
  data::Vocabulary v;
  v.modalities = {"A"};
  v.classes = {"c"};
  v.class_modality = {0};
  // areas 0.0016 (small), 0.01 (medium), 0.09 (large)
  const std::vector<EvalImage> imgs{{"x", 0, {{{0.2, 0.2, 0.04, 0.04}, 0}, {{0.5, 0.5, 0.1, 0.1}, 0}, {{0.7, 0.7, 0.3, 0.3}, 0}}}};
  std::vector<Detection> dets{{{0.2, 0.2, 0.04, 0.04}, 0, 0.9, "x"}, {{0.7, 0.7, 0.3, 0.3}, 0, 0.8, "x"}};
  const auto rep = ap_report(imgs, dets, v);
  EXPECT_EQ(*rep.total.aps, 1.0);
  EXPECT_EQ(*rep.total.apm, 0.0);
  EXPECT_EQ(*rep.total.apl, 1.0);
  // 100 higher-scored misses push the real hit out
  for (int i = 0; i < 100; ++i) dets.push_back({{0.05, 0.95, 0.05, 0.05}, 0, 0.95, "x"});
  EXPECT_EQ(*ap_report(imgs, dets, v).total.apl, 0.0);
}

TEST(ApReport, CsvAndJsonLayout) {
  const auto v = fixture_vocab();
  const auto rep = ap_report(fixture_images(), fixture_dets(), v);
  const std::string csv = report_to_csv(rep, v);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,Total,A,B");
  EXPECT_NE(csv.find("AP50,100.0000,100.0000,100.0000"), std::string::npos);
  const auto j = report_to_json(rep, v);
  EXPECT_TRUE(j["per_modality"].contains("B"));
  EXPECT_EQ(j["total"]["per_class"]["a0"]["n_gt"], 3);
  EXPECT_THROW(ap_report(fixture_images(), {{xyxy(0, 0, 1, 1), 7, 0.5, "img_a"}}, v), ValidationError);
  EXPECT_THROW(ap_report(fixture_images(), {{xyxy(0, 0, 1, 1), 0, 0.5, "nope"}}, v), ValidationError);
}
