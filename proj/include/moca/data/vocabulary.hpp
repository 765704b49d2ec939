#pragma once

#include <string>
#include <vector>

#include "moca/errors.hpp"

namespace moca::data {

// Global modality and class index space. Class vocabularies are disjoint
// across modalities, so every class belongs to exactly one modality.
struct Vocabulary {
  std::vector<std::string> modalities;
  std::vector<std::string> classes;
  std::vector<int> class_modality;

  std::size_t num_modalities() const { return modalities.size(); }
  std::size_t num_classes() const { return classes.size(); }

  int modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < modalities.size(); ++i)
      if (modalities[i] == name) return static_cast<int>(i);
    throw LookupError("unknown modality: " + name);
  }

  int class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return static_cast<int>(i);
    throw LookupError("unknown class: " + name);
  }

  std::vector<int> classes_of(int modality) const {
    std::vector<int> out;
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (class_modality[c] == modality) out.push_back(static_cast<int>(c));
    return out;
  }

  // (modality name, class name) for every declared pair, in class order.
  std::vector<std::pair<std::string, std::string>> pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t c = 0; c < classes.size(); ++c)
      out.emplace_back(modalities[static_cast<std::size_t>(class_modality[c])], classes[c]);
    return out;
  }
};

}  // namespace moca::data
