#pragma once

#include <cctype>
#include <string>
#include <string_view>

#include "moca/errors.hpp"

namespace moca::tokens {

// Text prompt for one (modality, class) pair, rendered "<class> in <modality>".
struct PromptSpec {
  std::string class_name;
  std::string modality_name;
  std::string rendered;

  bool operator==(const PromptSpec&) const = default;
};

namespace detail {
inline void check_name(std::string_view name, const char* what) {
  if (name.empty()) throw ValidationError(std::string(what) + " name is empty");
  if (std::isspace(static_cast<unsigned char>(name.front())) ||
      std::isspace(static_cast<unsigned char>(name.back()))) {
    throw ValidationError(std::string(what) + " name has leading or trailing whitespace: '" + std::string(name) + "'");
  }
}
}  // namespace detail

inline PromptSpec build_prompt(std::string_view class_name, std::string_view modality_name) {
  detail::check_name(class_name, "class");
  detail::check_name(modality_name, "modality");
  PromptSpec p{std::string(class_name), std::string(modality_name), {}};
  p.rendered = p.class_name + " in " + p.modality_name;
  return p;
}

}  // namespace moca::tokens
