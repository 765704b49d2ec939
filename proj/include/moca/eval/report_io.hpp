#pragma once

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "moca/eval/metrics.hpp"

namespace moca::eval {

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::string opt_csv(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", 100.0 * *v);
  return buf;
}

}  // namespace detail

// Undefined entries (no ground truth in range) are null.
inline nlohmann::json metrics_to_json(const Metrics& m, const data::Vocabulary& vocab) {
  using detail::opt_json;
  nlohmann::json j = {{"AP", opt_json(m.ap)},   {"AP50", opt_json(m.ap50)}, {"AP75", opt_json(m.ap75)},
                      {"APs", opt_json(m.aps)}, {"APm", opt_json(m.apm)},   {"APl", opt_json(m.apl)}};
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [c, cm] : m.per_class) {
    if (cm.n_gt == 0) continue;
    per[vocab.classes.at(static_cast<std::size_t>(c))] = {
        {"n_gt", cm.n_gt}, {"AP", opt_json(cm.ap)}, {"AP50", opt_json(cm.ap50)}, {"AP75", opt_json(cm.ap75)}};
  }
  j["per_class"] = per;
  return j;
}

inline nlohmann::json report_to_json(const APReport& r, const data::Vocabulary& vocab) {
  nlohmann::json mods = nlohmann::json::object();
  for (const auto& [m, met] : r.per_modality) mods[vocab.modalities.at(static_cast<std::size_t>(m))] = metrics_to_json(met, vocab);
  return {{"total", metrics_to_json(r.total, vocab)}, {"per_modality", mods}};
}

// One row per metric, columns Total then each modality; values x100.
inline std::string report_to_csv(const APReport& r, const data::Vocabulary& vocab) {
  std::ostringstream os;
  os << "metric,Total";
  for (const auto& [m, met] : r.per_modality) os << "," << vocab.modalities.at(static_cast<std::size_t>(m));
  os << "\n";
  auto row = [&](const char* name, auto get) {
    os << name << "," << detail::opt_csv(get(r.total));
    for (const auto& [m, met] : r.per_modality) os << "," << detail::opt_csv(get(met));
    os << "\n";
  };
  row("AP", [](const Metrics& m) { return m.ap; });
  row("AP50", [](const Metrics& m) { return m.ap50; });
  row("AP75", [](const Metrics& m) { return m.ap75; });
  row("APs", [](const Metrics& m) { return m.aps; });
  row("APm", [](const Metrics& m) { return m.apm; });
  row("APl", [](const Metrics& m) { return m.apl; });
  return os.str();
}

}  // namespace moca::eval
