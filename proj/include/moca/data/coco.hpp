#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/data/image_io.hpp"
#include "moca/data/sample.hpp"
#include "moca/data/vocabulary.hpp"
#include "moca/errors.hpp"

namespace moca::data {

struct IngestError {
  std::string record;   // e.g. "image 7" or "annotation 12"
  std::string message;
};

struct IngestResult {
  std::vector<Sample> samples;
  std::vector<IngestError> errors;
};

struct IngestOptions {
  bool fail_fast = false;
  double bounds_slack_px = 1.0;
};

namespace detail {

inline double snap_integer(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace detail

// Reads a COCO-style object (images / annotations / categories). Category
// names are looked up in `vocab` and must belong to `modality_name`.
// Record-level problems are collected in `errors`; with fail_fast the first
// one is thrown as a ValidationError instead.
inline IngestResult ingest_coco(const nlohmann::json& coco, const std::filesystem::path& image_dir,
                                const std::string& modality_name, const Vocabulary& vocab,
                                const IngestOptions& opt = {}) {
  IngestResult res;
  auto fail = [&](std::string record, std::string msg) {
    if (opt.fail_fast) throw ValidationError(record + ": " + msg);
    res.errors.push_back({std::move(record), std::move(msg)});
  };
  if (!coco.is_object() || !coco.contains("images") || !coco["images"].is_array()) {
    throw ParseError("COCO JSON needs an 'images' array");
  }
  const int modality = vocab.modality_index(modality_name);

  std::map<long long, int> category_to_class;
  for (const auto& cat : coco.value("categories", nlohmann::json::array())) {
    const long long id = cat.at("id").get<long long>();
    const std::string name = cat.at("name").get<std::string>();
    int cls = -1;
    try {
      cls = vocab.class_index(name);
    } catch (const LookupError&) {
      fail("category " + std::to_string(id), "class '" + name + "' is not in the vocabulary");
      continue;
    }
    if (vocab.class_modality[static_cast<std::size_t>(cls)] != modality) {
      fail("category " + std::to_string(id), "class '" + name + "' is not declared for modality " + modality_name);
      continue;
    }
    category_to_class[id] = cls;
  }

  std::map<long long, std::size_t> image_slot;
  std::set<long long> seen_ids;
  for (const auto& im : coco["images"]) {
    const long long id = im.at("id").get<long long>();
    const std::string record = "image " + std::to_string(id);
    if (!seen_ids.insert(id).second) {
      fail(record, "duplicate image id");
      continue;
    }
    const std::string file_name = im.at("file_name").get<std::string>();
    const auto path = image_dir / file_name;
    if (!std::filesystem::exists(path)) {
      fail(record, "missing image file " + path.string());
      continue;
    }
    Sample s;
    try {
      s.image = load_image(path);
    } catch (const ParseError& e) {
      fail(record, e.what());
      continue;
    }
    const auto w = im.value("width", s.image.width);
    const auto h = im.value("height", s.image.height);
    if (w != s.image.width || h != s.image.height) {
      fail(record, "declared size differs from the image file");
      continue;
    }
    s.sample_id = std::filesystem::path(file_name).stem().string();
    s.modality_id = modality;
    image_slot[id] = res.samples.size();
    res.samples.push_back(std::move(s));
  }

  for (const auto& an : coco.value("annotations", nlohmann::json::array())) {
    const std::string record = "annotation " + std::to_string(an.value("id", -1LL));
    const long long image_id = an.at("image_id").get<long long>();
    auto slot = image_slot.find(image_id);
    if (slot == image_slot.end()) {
      if (!seen_ids.contains(image_id)) fail(record, "refers to unknown image " + std::to_string(image_id));
      continue;
    }
    auto cat = category_to_class.find(an.at("category_id").get<long long>());
    if (cat == category_to_class.end()) {
      fail(record, "unknown or rejected category");
      continue;
    }
    const auto& bbox = an.at("bbox");
    if (!bbox.is_array() || bbox.size() != 4) {
      fail(record, "bbox must be [x, y, w, h]");
      continue;
    }
    Sample& s = res.samples[slot->second];
    const double W = static_cast<double>(s.image.width), H = static_cast<double>(s.image.height);
    double x = bbox[0].get<double>(), y = bbox[1].get<double>();
    double bw = bbox[2].get<double>(), bh = bbox[3].get<double>();
    const double slack = opt.bounds_slack_px;
    if (!(bw > 0.0 && bh > 0.0)) {
      fail(record, "degenerate box");
      continue;
    }
    if (x < -slack || y < -slack || x + bw > W + slack || y + bh > H + slack) {
      fail(record, "box outside image bounds");
      continue;
    }
    // clamp the tolerated overhang
    const double x1 = std::max(x, 0.0), y1 = std::max(y, 0.0);
    const double x2 = std::min(x + bw, W), y2 = std::min(y + bh, H);
    Annotation a{box_from_pixels(x1, y1, x2 - x1, y2 - y1, s.image.width, s.image.height), cat->second};
    validate_annotation(a);
    s.annotations.push_back(a);
  }
  return res;
}

inline IngestResult ingest_coco_file(const std::filesystem::path& json_path, const std::filesystem::path& image_dir,
                                     const std::string& modality_name, const Vocabulary& vocab,
                                     const IngestOptions& opt = {}) {
  std::ifstream in(json_path);
  if (!in) throw ParseError("cannot open COCO file: " + json_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed COCO JSON " + json_path.string() + ": " + e.what());
  }
  return ingest_coco(j, image_dir, modality_name, vocab, opt);
}

// COCO object for `samples` (all of one modality). Images are referenced as
// "<sample_id>.f32"; pixel boxes that are integral up to rounding are written
// as integers so re-ingestion reproduces the boxes bitwise.
inline nlohmann::json export_coco(const std::vector<Sample>& samples, const Vocabulary& vocab, int modality) {
  nlohmann::json images = nlohmann::json::array(), anns = nlohmann::json::array(), cats = nlohmann::json::array();
  for (int c : vocab.classes_of(modality)) cats.push_back({{"id", c}, {"name", vocab.classes[static_cast<std::size_t>(c)]}});
  long long ann_id = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.modality_id != modality) throw ContractError("export_coco: sample " + s.sample_id + " has another modality");
    images.push_back({{"id", i}, {"file_name", s.sample_id + ".f32"}, {"width", s.image.width}, {"height", s.image.height}});
    const double W = static_cast<double>(s.image.width), H = static_cast<double>(s.image.height);
    for (const auto& a : s.annotations) {
      const BoxXYXY b = to_xyxy(a.box);
      const double x = detail::snap_integer(b.x1 * W), y = detail::snap_integer(b.y1 * H);
      const double w = detail::snap_integer(a.box.w * W), h = detail::snap_integer(a.box.h * H);
      anns.push_back({{"id", ann_id++}, {"image_id", i}, {"category_id", a.class_id}, {"bbox", {x, y, w, h}},
                      {"area", w * h}, {"iscrowd", 0}});
    }
  }
  return {{"images", images}, {"annotations", anns}, {"categories", cats}};
}

}  // namespace moca::data
