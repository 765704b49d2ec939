#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/autodiff/tensor.hpp"
#include "moca/errors.hpp"

namespace moca::train {

struct OptimConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 50;
  std::size_t decay_epoch = 40;   // lr is multiplied by decay_factor from this epoch on
  double decay_factor = 0.1;
  double grad_clip = 0.1;         // max global L2 norm; 0 disables

  void validate() const {
    if (!(lr > 0.0)) throw ValidationError("optim.lr must be positive");
    if (weight_decay < 0.0) throw ValidationError("optim.weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("optim betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ValidationError("optim.eps must be positive");
    if (epochs == 0) throw ValidationError("optim.epochs must be positive");
    if (!(decay_factor > 0.0)) throw ValidationError("optim.decay_factor must be positive");
    if (grad_clip < 0.0) throw ValidationError("optim.grad_clip must be non-negative");
  }

  // MultiStep schedule with a single milestone.
  double lr_at(std::size_t epoch) const { return epoch >= decay_epoch ? lr * decay_factor : lr; }
};

inline void to_json(nlohmann::json& j, const OptimConfig& o) {
  j = {{"lr", o.lr},         {"weight_decay", o.weight_decay}, {"beta1", o.beta1},
       {"beta2", o.beta2},   {"eps", o.eps},                   {"epochs", o.epochs},
       {"decay_epoch", o.decay_epoch}, {"decay_factor", o.decay_factor}, {"grad_clip", o.grad_clip}};
}

inline void from_json(const nlohmann::json& j, OptimConfig& o) {
  const OptimConfig d;
  o.lr = j.value("lr", d.lr);
  o.weight_decay = j.value("weight_decay", d.weight_decay);
  o.beta1 = j.value("beta1", d.beta1);
  o.beta2 = j.value("beta2", d.beta2);
  o.eps = j.value("eps", d.eps);
  o.epochs = j.value("epochs", d.epochs);
  o.decay_epoch = j.value("decay_epoch", d.decay_epoch);
  o.decay_factor = j.value("decay_factor", d.decay_factor);
  o.grad_clip = j.value("grad_clip", d.grad_clip);
}

// AdamW with decoupled weight decay:
//   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, ad::Tensor>> params, OptimConfig cfg)
      : params_(std::move(params)), cfg_(std::move(cfg)) {
    cfg_.validate();
    for (auto& [name, t] : params_) {
      if (!t.is_leaf()) throw ContractError("optimizer parameter " + name + " is not a leaf tensor");
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  const OptimConfig& config() const { return cfg_; }
  std::size_t steps() const { return t_; }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  // Global L2 norm of the current gradients.
  double grad_norm() const {
    double s = 0.0;
    for (const auto& [name, t] : params_)
      for (double g : t.grad()) s += g * g;
    return std::sqrt(s);
  }

  // One update at learning rate lr. Non-finite gradients abort before any
  // parameter is touched.
  void step(double lr) {
    for (const auto& [name, t] : params_)
      for (double g : t.grad())
        if (!std::isfinite(g)) throw Error("non-finite gradient in parameter " + name + " at step " + std::to_string(t_ + 1));
    double clip = 1.0;
    if (cfg_.grad_clip > 0.0) {
      const double n = grad_norm();
      if (n > cfg_.grad_clip) clip = cfg_.grad_clip / n;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      ad::Tensor& t = params_[p].second;
      const auto& g = t.grad();
      auto w = t.mutable_data();
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g.empty() ? 0.0 : g[i] * clip;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / bc1, vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
      }
    }
  }

 private:
  std::vector<std::pair<std::string, ad::Tensor>> params_;
  OptimConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace moca::train
