#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "moca/autodiff/tensor.hpp"

namespace moca::ad {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // Denominator floor of the relative error, |a - n| / max(|a|, |n|, floor).
  // Keeps round-off in near-zero gradients from reading as a large relative
  // error.
  double denom_floor = 1e-3;
  // 0 checks every entry; otherwise an evenly spaced subset per parameter.
  std::size_t max_entries_per_param = 0;
};

struct GradCheckEntry {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<double> max_rel_error_per_param;
  GradCheckEntry worst;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  bool passed = true;
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares reverse-mode gradients of the scalar `f` against central differences
// for every parameter in `params`. `f` must rebuild its graph from the current
// parameter values on every call.
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                  const GradCheckOptions& opt = {}) {
  if (!(opt.h >= 1e-7 && opt.h <= 1e-3)) throw ValidationError("grad_check: h must lie in [1e-7, 1e-3]");

  auto value_of = [&] {
    NoGradGuard ng;
    return f().item();
  };
  const double base1 = value_of();
  const double base2 = value_of();
  if (std::bit_cast<std::uint64_t>(base1) != std::bit_cast<std::uint64_t>(base2)) {
    throw ContractError("grad_check: function is not deterministic");
  }

  for (auto& p : params) p.zero_grad();
  Tensor loss = f();
  if (loss.requires_grad()) backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  GradCheckReport rep;
  rep.max_rel_error_per_param.assign(params.size(), 0.0);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi].mutable_data();
    const std::size_t n = data.size();
    std::size_t step = 1;
    if (opt.max_entries_per_param > 0 && n > opt.max_entries_per_param) {
      step = (n + opt.max_entries_per_param - 1) / opt.max_entries_per_param;
    }
    for (std::size_t i = 0; i < n; i += step) {
      const double saved = data[i];
      data[i] = saved + opt.h;
      const double fp = value_of();
      data[i] = saved - opt.h;
      const double fm = value_of();
      data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double err = relative_error(analytic[pi][i], numeric, opt.denom_floor);
      ++rep.entries_checked;
      rep.max_rel_error_per_param[pi] = std::max(rep.max_rel_error_per_param[pi], err);
      if (err > rep.max_rel_error || rep.entries_checked == 1) {
        rep.max_rel_error = std::max(rep.max_rel_error, err);
        rep.worst = {pi, i, analytic[pi][i], numeric, err};
      }
    }
  }
  rep.passed = rep.max_rel_error < opt.tol;
  for (auto& p : params) p.zero_grad();
  return rep;
}

}  // namespace moca::ad
