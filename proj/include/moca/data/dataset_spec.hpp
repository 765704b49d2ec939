#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/data/vocabulary.hpp"
#include "moca/errors.hpp"

namespace moca::data {

enum class ShapeKind { circle, square, triangle, ring, blob };
enum class TransferCurve { linear, gamma, inverse, sigmoid };

NLOHMANN_JSON_SERIALIZE_ENUM(ShapeKind, {{ShapeKind::circle, "circle"},
                                         {ShapeKind::square, "square"},
                                         {ShapeKind::triangle, "triangle"},
                                         {ShapeKind::ring, "ring"},
                                         {ShapeKind::blob, "blob"}})

NLOHMANN_JSON_SERIALIZE_ENUM(TransferCurve, {{TransferCurve::linear, "linear"},
                                             {TransferCurve::gamma, "gamma"},
                                             {TransferCurve::inverse, "inverse"},
                                             {TransferCurve::sigmoid, "sigmoid"}})

struct ClassSpec {
  std::string name;
  ShapeKind shape = ShapeKind::circle;
};

// Appearance model of one imaging modality.
struct ModalitySpec {
  std::string name;
  std::vector<ClassSpec> classes;
  TransferCurve curve = TransferCurve::linear;
  double noise_sigma = 0.05;
  double texture_freq = 2.0;    // cycles per image side
  double texture_amp = 0.1;
  double background = 0.3;      // pre-curve background level
  double object_level = 0.8;    // pre-curve object intensity
};

struct DatasetSpec {
  std::vector<ModalitySpec> modalities;
  std::size_t image_size = 64;
  std::map<std::string, std::size_t> counts{{"train", 200}, {"val", 100}};
  std::uint64_t seed = 1;
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  std::size_t min_object_px = 3;
  std::size_t max_object_px = 20;

  std::size_t num_modalities() const { return modalities.size(); }

  void validate() const {
    if (modalities.size() < 2) throw ValidationError("dataset needs at least two modalities");
    if (image_size < 16) throw ValidationError("image_size must be at least 16");
    if (min_objects > max_objects) throw ValidationError("min_objects exceeds max_objects");
    if (min_object_px < 3 || min_object_px > max_object_px || max_object_px > image_size) {
      throw ValidationError("object size range must satisfy 3 <= min <= max <= image_size");
    }
    std::set<std::string> mod_names, class_names;
    for (const auto& m : modalities) {
      if (m.name.empty() || !mod_names.insert(m.name).second) {
        throw ValidationError("modality names must be non-empty and unique: '" + m.name + "'");
      }
      if (m.classes.empty()) throw ValidationError("modality " + m.name + " declares no classes");
      if (m.noise_sigma < 0.0) throw ValidationError("noise_sigma must be non-negative");
      for (const auto& c : m.classes) {
        if (c.name.empty() || !class_names.insert(c.name).second) {
          throw ValidationError("class vocabularies must be disjoint and non-empty: '" + c.name + "'");
        }
      }
    }
  }

  Vocabulary vocabulary() const {
    Vocabulary v;
    for (std::size_t m = 0; m < modalities.size(); ++m) {
      v.modalities.push_back(modalities[m].name);
      for (const auto& c : modalities[m].classes) {
        v.classes.push_back(c.name);
        v.class_modality.push_back(static_cast<int>(m));
      }
    }
    return v;
  }
};

inline void to_json(nlohmann::json& j, const ClassSpec& c) { j = {{"name", c.name}, {"shape", c.shape}}; }
inline void from_json(const nlohmann::json& j, ClassSpec& c) {
  j.at("name").get_to(c.name);
  j.at("shape").get_to(c.shape);
}

inline void to_json(nlohmann::json& j, const ModalitySpec& m) {
  j = {{"name", m.name},           {"classes", m.classes},         {"curve", m.curve},
       {"noise_sigma", m.noise_sigma}, {"texture_freq", m.texture_freq}, {"texture_amp", m.texture_amp},
       {"background", m.background}, {"object_level", m.object_level}};
}
inline void from_json(const nlohmann::json& j, ModalitySpec& m) {
  ModalitySpec d;
  j.at("name").get_to(m.name);
  j.at("classes").get_to(m.classes);
  m.curve = j.value("curve", d.curve);
  m.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  m.texture_freq = j.value("texture_freq", d.texture_freq);
  m.texture_amp = j.value("texture_amp", d.texture_amp);
  m.background = j.value("background", d.background);
  m.object_level = j.value("object_level", d.object_level);
}

inline void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = {{"modalities", s.modalities},       {"image_size", s.image_size},
       {"counts", s.counts},               {"seed", s.seed},
       {"min_objects", s.min_objects},     {"max_objects", s.max_objects},
       {"min_object_px", s.min_object_px}, {"max_object_px", s.max_object_px}};
}
inline void from_json(const nlohmann::json& j, DatasetSpec& s) {
  DatasetSpec d;
  j.at("modalities").get_to(s.modalities);
  s.image_size = j.value("image_size", d.image_size);
  s.counts = j.value("counts", d.counts);
  s.seed = j.value("seed", d.seed);
  s.min_objects = j.value("min_objects", d.min_objects);
  s.max_objects = j.value("max_objects", d.max_objects);
  s.min_object_px = j.value("min_object_px", d.min_object_px);
  s.max_object_px = j.value("max_object_px", d.max_object_px);
}

// Five modalities with two classes each. Shapes are assigned so that every
// shape appears in exactly two modalities: the class of an object is only
// identifiable from its shape together with the modality.
inline DatasetSpec default_dataset_spec() {
  DatasetSpec s;
  const std::vector<std::pair<std::string, std::vector<std::string>>> layout = {
      {"CXR", {"Cardiomegaly", "Nodule/Mass"}},
      {"MRI", {"Brain tumor", "Myocardium"}},
      {"CT", {"Nodule", "COVID-19 infection"}},
      {"Colonoscopy", {"Polyp", "Neoplastic polyp"}},
      {"Pathology", {"Epithelial", "Lymphocyte"}},
  };
  const TransferCurve curves[] = {TransferCurve::linear, TransferCurve::gamma, TransferCurve::inverse,
                                  TransferCurve::sigmoid, TransferCurve::linear};
  const double backgrounds[] = {0.25, 0.40, 0.20, 0.55, 0.70};
  const double objects[] = {0.75, 0.85, 0.70, 0.15, 0.30};
  const double noise[] = {0.04, 0.06, 0.03, 0.05, 0.08};
  const double freq[] = {1.0, 2.0, 3.0, 4.0, 6.0};
  for (std::size_t m = 0; m < layout.size(); ++m) {
    ModalitySpec ms;
    ms.name = layout[m].first;
    for (std::size_t k = 0; k < layout[m].second.size(); ++k) {
      ms.classes.push_back({layout[m].second[k], static_cast<ShapeKind>((m + k) % 5)});
    }
    ms.curve = curves[m];
    ms.background = backgrounds[m];
    ms.object_level = objects[m];
    ms.noise_sigma = noise[m];
    ms.texture_freq = freq[m];
    s.modalities.push_back(std::move(ms));
  }
  return s;
}

}  // namespace moca::data
