#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/data/coco.hpp"
#include "moca/data/dataset_spec.hpp"
#include "moca/data/image_io.hpp"

namespace moca::data {

// On-disk dataset directory:
//   manifest.json              {"format": "moca-dataset-1", "spec": {...},
//                               "splits": {"train": {"count": n, "coco": {"CXR": "coco/train_m0.json", ...}}}}
//   images/<sample_id>.f32     MOCAIMG1 blobs (see image_io.hpp)
//   coco/<split>_m<idx>.json   one COCO file per split and modality
inline constexpr const char* kDatasetFormat = "moca-dataset-1";

inline void export_dataset(const DatasetSpec& spec, const std::map<std::string, std::vector<Sample>>& splits,
                           const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "coco");
  const Vocabulary vocab = spec.vocabulary();
  nlohmann::json manifest = {{"format", kDatasetFormat}, {"spec", spec}, {"splits", nlohmann::json::object()}};
  for (const auto& [split, samples] : splits) {
    nlohmann::json files = nlohmann::json::object();
    for (std::size_t m = 0; m < vocab.num_modalities(); ++m) {
      std::vector<Sample> of_m;
      for (const auto& s : samples)
        if (s.modality_id == static_cast<int>(m)) of_m.push_back(s);
      const std::string rel = "coco/" + split + "_m" + std::to_string(m) + ".json";
      std::ofstream out(dir / rel);
      if (!out) throw Error("cannot write " + (dir / rel).string());
      out << export_coco(of_m, vocab, static_cast<int>(m)).dump() << "\n";
      files[vocab.modalities[m]] = rel;
    }
    for (const auto& s : samples) write_f32_image(s.image, dir / "images" / (s.sample_id + ".f32"));
    manifest["splits"][split] = {{"count", samples.size()}, {"coco", files}};
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

struct LoadedDataset {
  DatasetSpec spec;
  Vocabulary vocab;
  std::vector<Sample> samples;
};

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ParseError("no manifest.json in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed manifest.json: ") + e.what());
  }
  if (j.value("format", "") != kDatasetFormat) throw ParseError("unknown dataset format in " + dir.string());
  return j;
}

// Samples of `split`, ordered by sample id. Any ingestion error is fatal here.
inline LoadedDataset load_dataset(const std::filesystem::path& dir, const std::string& split) {
  const nlohmann::json manifest = read_manifest(dir);
  LoadedDataset out;
  try {
    out.spec = manifest.at("spec").get<DatasetSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad dataset spec in manifest: ") + e.what());
  }
  out.spec.validate();
  out.vocab = out.spec.vocabulary();
  if (!manifest["splits"].contains(split)) throw LookupError("dataset has no split '" + split + "'");
  for (const auto& [modality, rel] : manifest["splits"][split]["coco"].items()) {
    auto res = ingest_coco_file(dir / rel.get<std::string>(), dir / "images", modality, out.vocab,
                                {.fail_fast = true});
    for (auto& s : res.samples) out.samples.push_back(std::move(s));
  }
  std::sort(out.samples.begin(), out.samples.end(),
            [](const Sample& a, const Sample& b) { return a.sample_id < b.sample_id; });
  return out;
}

}  // namespace moca::data
