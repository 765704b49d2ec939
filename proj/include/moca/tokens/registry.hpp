#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/errors.hpp"
#include "moca/tokens/embedding.hpp"
#include "moca/tokens/prompt.hpp"

namespace moca::tokens {

// Fixed set of raw modality-token embeddings, one per declared
// (modality, class) pair. Immutable once built.
//
// File format (UTF-8 JSON):
//   {"d_text": 64, "tokens": {"<modality>|<class>": [f64, ...], ...}}
// Entry order in the file is the registry order. '|' may not appear in names.
class TokenRegistry {
 public:
  struct Entry {
    std::string modality;
    std::string class_name;
    RawEmbedding embedding;
  };

  TokenRegistry() = default;
  explicit TokenRegistry(std::size_t d_text) : d_text_(d_text) {
    if (d_text == 0) throw ValidationError("registry d_text must be positive");
  }

  std::size_t d_text() const { return d_text_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  void add(std::string modality, std::string class_name, RawEmbedding emb) {
    detail::check_name(modality, "modality");
    detail::check_name(class_name, "class");
    if (modality.find('|') != std::string::npos || class_name.find('|') != std::string::npos) {
      throw ValidationError("'|' is not allowed in registry names");
    }
    if (emb.vector.size() != d_text_) {
      throw DimensionError("embedding for " + modality + "|" + class_name + " has length " +
                           std::to_string(emb.vector.size()) + ", registry d_text is " + std::to_string(d_text_));
    }
    for (double v : emb.vector)
      if (!std::isfinite(v)) throw ValidationError("non-finite embedding value for " + modality + "|" + class_name);
    auto key = std::make_pair(modality, class_name);
    if (index_.contains(key)) throw DuplicateKeyError("duplicate registry key " + modality + "|" + class_name);
    index_.emplace(key, entries_.size());
    if (std::find(modalities_.begin(), modalities_.end(), modality) == modalities_.end()) modalities_.push_back(modality);
    entries_.push_back({std::move(modality), std::move(class_name), std::move(emb)});
  }

  bool contains(const std::string& modality, const std::string& class_name) const {
    return index_.contains({modality, class_name});
  }

  const RawEmbedding& lookup(const std::string& modality, const std::string& class_name) const {
    auto it = index_.find({modality, class_name});
    if (it == index_.end()) throw LookupError("no modality token for " + modality + "|" + class_name);
    return entries_[it->second].embedding;
  }

  // Modalities in first-declaration order.
  const std::vector<std::string>& modalities() const { return modalities_; }

  bool has_modality(const std::string& modality) const {
    return std::find(modalities_.begin(), modalities_.end(), modality) != modalities_.end();
  }

  std::vector<std::string> classes_for(const std::string& modality) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (e.modality == modality) out.push_back(e.class_name);
    if (out.empty()) throw LookupError("modality not in registry: " + modality);
    return out;
  }

  bool operator==(const TokenRegistry& o) const {
    if (d_text_ != o.d_text_ || entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = o.entries_[i];
      if (a.modality != b.modality || a.class_name != b.class_name || a.embedding.vector != b.embedding.vector)
        return false;
    }
    return true;
  }

 private:
  std::size_t d_text_ = 0;
  std::vector<Entry> entries_;
  std::vector<std::string> modalities_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

inline nlohmann::ordered_json registry_to_json(const TokenRegistry& reg) {
  nlohmann::ordered_json j;
  j["d_text"] = reg.d_text();
  nlohmann::ordered_json toks = nlohmann::ordered_json::object();
  for (const auto& e : reg.entries()) toks[e.modality + "|" + e.class_name] = e.embedding.vector;
  j["tokens"] = std::move(toks);
  return j;
}

inline TokenRegistry registry_from_json(const nlohmann::ordered_json& j,
                                        EmbeddingSource source = EmbeddingSource::file) {
  if (!j.is_object() || !j.contains("d_text") || !j.contains("tokens")) {
    throw ParseError("registry must be an object with 'd_text' and 'tokens'");
  }
  if (!j["d_text"].is_number_integer() || j["d_text"].get<long long>() <= 0) {
    throw ParseError("registry 'd_text' must be a positive integer");
  }
  if (!j["tokens"].is_object()) throw ParseError("registry 'tokens' must be an object");
  TokenRegistry reg(j["d_text"].get<std::size_t>());
  for (const auto& [key, val] : j["tokens"].items()) {
    const auto bar = key.find('|');
    if (bar == std::string::npos || key.find('|', bar + 1) != std::string::npos) {
      throw ParseError("registry key must be '<modality>|<class>': " + key);
    }
    if (!val.is_array()) throw ParseError("registry entry is not an array: " + key);
    RawEmbedding emb;
    emb.source = source;
    emb.vector.reserve(val.size());
    for (const auto& x : val) {
      if (!x.is_number()) throw ParseError("non-numeric registry value in " + key);
      emb.vector.push_back(x.get<double>());
    }
    reg.add(key.substr(0, bar), key.substr(bar + 1), std::move(emb));
  }
  return reg;
}

namespace detail {

// nlohmann keeps the last of duplicated object keys; this callback makes them
// an error instead.
inline nlohmann::ordered_json parse_rejecting_duplicates(std::istream& in) {
  std::vector<std::set<std::string>> keys;
  auto cb = [&keys](int, nlohmann::ordered_json::parse_event_t ev, nlohmann::ordered_json& parsed) {
    using E = nlohmann::ordered_json::parse_event_t;
    if (ev == E::object_start) {
      keys.emplace_back();
    } else if (ev == E::object_end) {
      keys.pop_back();
    } else if (ev == E::key) {
      const auto k = parsed.get<std::string>();
      if (!keys.back().insert(k).second) throw DuplicateKeyError("duplicate JSON key: " + k);
    }
    return true;
  };
  try {
    return nlohmann::ordered_json::parse(in, cb);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace detail

inline TokenRegistry load_registry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open registry file: " + path);
  return registry_from_json(detail::parse_rejecting_duplicates(in));
}

inline void save_registry(const TokenRegistry& reg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write registry file: " + path);
  out << registry_to_json(reg).dump(2) << "\n";
}

// Registry of synthetic embeddings for the given (modality, class) pairs.
inline TokenRegistry synthesize_registry(const std::vector<std::pair<std::string, std::string>>& pairs,
                                         std::size_t d_text, std::uint64_t seed) {
  TokenRegistry reg(d_text);
  for (const auto& [modality, cls] : pairs) {
    reg.add(modality, cls, synth_embedding(build_prompt(cls, modality), d_text, seed));
  }
  return reg;
}

}  // namespace moca::tokens
