#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/mi_lab/joint.hpp"
#include "moca/parallel.hpp"

namespace moca::mi {

enum class CriticKind { optimal, cosine, constant };

inline std::string to_string(CriticKind k) {
  switch (k) {
    case CriticKind::optimal: return "optimal";
    case CriticKind::cosine: return "cosine";
    case CriticKind::constant: return "constant";
  }
  return "?";
}

// Score table s(u, v); -inf marks pairs outside the support.
struct Critic {
  CriticKind kind = CriticKind::constant;
  std::size_t nu = 0, nv = 0;
  std::vector<double> s;
  double at(std::size_t u, std::size_t v) const { return s[u * nv + v]; }
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// s = ln p(v|u) / p(v).
inline Critic optimal_critic(const DiscreteJoint& j) {
  Critic c{CriticKind::optimal, j.nu(), j.nv(), std::vector<double>(j.nu() * j.nv(), kNegInf)};
  for (std::size_t u = 0; u < j.nu(); ++u)
    for (std::size_t v = 0; v < j.nv(); ++v)
      if (j.at(u, v) > 0.0) c.s[u * j.nv() + v] = std::log(j.at(u, v) / (j.pu(u) * j.pv(v)));
  return c;
}

inline Critic constant_critic(std::size_t nu, std::size_t nv, double value = 0.0) {
  return {CriticKind::constant, nu, nv, std::vector<double>(nu * nv, value)};
}

// cos(e_u, e_v) / tau with random u-embeddings and v-embeddings equal to the
// posterior-weighted u-embeddings plus noise, so the critic is informative
// but not optimal.
inline Critic cosine_critic(const DiscreteJoint& j, std::size_t dim, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ValidationError("critic temperature must be positive");
  std::vector<std::vector<double>> eu(j.nu(), std::vector<double>(dim)), ev(j.nv(), std::vector<double>(dim, 0.0));
  for (auto& e : eu)
    for (double& x : e) x = rng.normal();
  for (std::size_t v = 0; v < j.nv(); ++v) {
    for (std::size_t u = 0; u < j.nu(); ++u)
      if (j.pv(v) > 0.0)
        for (std::size_t d = 0; d < dim; ++d) ev[v][d] += j.at(u, v) / j.pv(v) * eu[u][d];
    for (double& x : ev[v]) x += 0.5 * rng.normal();
  }
  auto norm = [](const std::vector<double>& e) {
    double s = 0.0;
    for (double x : e) s += x * x;
    return std::sqrt(s);
  };
  Critic c{CriticKind::cosine, j.nu(), j.nv(), std::vector<double>(j.nu() * j.nv())};
  for (std::size_t u = 0; u < j.nu(); ++u)
    for (std::size_t v = 0; v < j.nv(); ++v) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += eu[u][d] * ev[v][d];
      c.s[u * j.nv() + v] = dot / (norm(eu[u]) * norm(ev[v])) / tau;
    }
  return c;
}

namespace detail {

inline double logsumexp(const std::vector<double>& x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// -ln softmax(scores)[slot]
inline double nce_term(const Critic& c, std::size_t u, const std::vector<std::size_t>& v, std::size_t slot) {
  std::vector<double> z(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) z[k] = c.at(u, v[k]);
  return logsumexp(z) - z[slot];
}

// Calls f(counts, probability) for every multiset of K draws from p(v).
template <class F>
void for_each_multiset(const std::vector<double>& pv, std::size_t K, F&& f) {
  std::vector<std::size_t> counts(pv.size(), 0);
  auto rec = [&](auto& self, std::size_t idx, std::size_t left, double logp) -> void {
    if (idx + 1 == pv.size()) {
      counts[idx] = left;
      if (left > 0 && pv[idx] == 0.0) return;
      const double lp = logp + (left > 0 ? static_cast<double>(left) * std::log(pv[idx]) - std::lgamma(left + 1.0) : 0.0);
      f(counts, std::exp(lp + std::lgamma(static_cast<double>(K) + 1.0)));
      return;
    }
    for (std::size_t c = 0; c <= left; ++c) {
      if (c > 0 && pv[idx] == 0.0) break;
      counts[idx] = c;
      const double lp = c > 0 ? static_cast<double>(c) * std::log(pv[idx]) - std::lgamma(c + 1.0) : 0.0;
      self(self, idx + 1, left - c, logp + lp);
    }
    counts[idx] = 0;
  };
  rec(rec, 0, K, 0.0);
}

// Calls f(u, tuple) for every u with p(u) > 0 and every ordered tuple of K+1
// symbols with p(v) > 0.
template <class F>
void for_each_tuple(const DiscreteJoint& j, std::size_t K, F&& f) {
  std::vector<std::size_t> support;
  for (std::size_t v = 0; v < j.nv(); ++v)
    if (j.pv(v) > 0.0) support.push_back(v);
  std::vector<std::size_t> digits(K + 1, 0), tuple(K + 1);
  for (std::size_t u = 0; u < j.nu(); ++u) {
    if (j.pu(u) == 0.0) continue;
    std::fill(digits.begin(), digits.end(), 0);
    while (true) {
      for (std::size_t k = 0; k <= K; ++k) tuple[k] = support[digits[k]];
      f(u, tuple);
      std::size_t k = 0;
      while (k <= K && ++digits[k] == support.size()) digits[k++] = 0;
      if (k > K) break;
    }
  }
}

}  // namespace detail

struct NceEstimate {
  std::size_t K = 0;
  std::size_t n_samples = 0;
  double loss = 0.0;    // L-hat
  double bound = 0.0;   // ln(1+K) - L-hat
  double se = 0.0;      // standard error of L-hat (and of the bound)
};

inline NceEstimate infonce_estimate(const DiscreteJoint& j, const Critic& c, std::size_t K, std::size_t n_samples,
                                    Rng& rng) {
  if (n_samples < 1000) throw ValidationError("infonce_estimate needs at least 1000 samples");
  if (c.nu != j.nu() || c.nv != j.nv()) throw DimensionError("critic does not match the joint's alphabets");
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Candidates cand = sample_candidates(j, K, rng);
    const double l = detail::nce_term(c, cand.u, cand.v, cand.slot);
    sum += l;
    sq += l * l;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
  return {K, n_samples, mean, std::log(1.0 + static_cast<double>(K)) - mean, std::sqrt(var / n)};
}

// Exact expected InfoNCE loss by summing over multisets of negatives; the
// loss does not depend on where the positive sits.
inline double exact_infonce_loss(const DiscreteJoint& j, const Critic& c, std::size_t K) {
  double total = 0.0;
  detail::for_each_multiset(j.marginal_v(), K, [&](const std::vector<std::size_t>& counts, double pm) {
    for (std::size_t u = 0; u < j.nu(); ++u) {
      std::vector<double> z;
      for (std::size_t v = 0; v < j.nv(); ++v)
        if (counts[v] > 0) z.push_back(c.at(u, v) + std::log(static_cast<double>(counts[v])));
      for (std::size_t v0 = 0; v0 < j.nv(); ++v0) {
        if (j.at(u, v0) == 0.0) continue;
        z.push_back(c.at(u, v0));
        total += j.at(u, v0) * pm * (detail::logsumexp(z) - c.at(u, v0));
        z.pop_back();
      }
    }
  });
  return total;
}

inline double exact_bound(const DiscreteJoint& j, const Critic& c, std::size_t K) {
  return std::log(1.0 + static_cast<double>(K)) - exact_infonce_loss(j, c, K);
}

struct Decomposition {
  double loss = 0.0;                 // E[-ln q(J | U, V_0:K)] under the critic
  double conditional_entropy = 0.0;  // E[H(J | U, V_0:K)]
};

// Exact evaluation over ordered candidate tuples.
inline Decomposition exact_decomposition(const DiscreteJoint& j, const Critic& c, std::size_t K) {
  Decomposition d;
  const double slot_p = 1.0 / static_cast<double>(K + 1);
  detail::for_each_tuple(j, K, [&](std::size_t u, const std::vector<std::size_t>& t) {
    std::vector<double> numer(K + 1);
    double all = 1.0;
    for (std::size_t k = 0; k <= K; ++k) all *= j.pv(t[k]);
    double z = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      numer[k] = all / j.pv(t[k]) * (j.at(u, t[k]) / j.pu(u));
      z += numer[k];
    }
    if (z == 0.0) return;
    for (std::size_t k = 0; k <= K; ++k) {
      if (numer[k] == 0.0) continue;
      const double w = j.pu(u) * slot_p * numer[k];   // P(U=u, tuple, J=k)
      d.conditional_entropy -= w * std::log(numer[k] / z);
      d.loss += w * detail::nce_term(c, u, t, k);
    }
  });
  return d;
}

// Largest |P(J=j | u, v_0:K) - softmax_j(s*(u, v_j))| over the support, with
// the posterior taken from the generative process and s* the optimal critic.
inline double posterior_identity_max_diff(const DiscreteJoint& j, std::size_t K) {
  const Critic c = optimal_critic(j);
  double worst = 0.0;
  detail::for_each_tuple(j, K, [&](std::size_t u, const std::vector<std::size_t>& t) {
    std::vector<double> numer(K + 1), z(K + 1);
    double all = 1.0, sum = 0.0;
    for (std::size_t k = 0; k <= K; ++k) all *= j.pv(t[k]);
    for (std::size_t k = 0; k <= K; ++k) {
      numer[k] = all / j.pv(t[k]) * (j.at(u, t[k]) / j.pu(u));
      sum += numer[k];
      z[k] = c.at(u, t[k]);
    }
    if (sum == 0.0) return;
    const double lse = detail::logsumexp(z);
    for (std::size_t k = 0; k <= K; ++k) worst = std::max(worst, std::abs(numer[k] / sum - std::exp(z[k] - lse)));
  });
  return worst;
}

struct BoundOptions {
  std::vector<std::size_t> Ks{1, 3, 7, 15};
  std::size_t n_samples = 20000;
  std::uint64_t seed = 1;
  double se_multiplier = 5.0;
  double exact_tol = 1e-9;
  std::size_t exact_max_support = 6;
  std::size_t exact_max_K = 3;
  std::size_t decomposition_max_support = 8;
  std::size_t cosine_dim = 4;
  double cosine_tau = 0.5;
};

struct BoundCell {
  std::size_t joint = 0;
  CriticKind critic = CriticKind::optimal;
  NceEstimate estimate;
  double mi = 0.0;
  double exact_bound = 0.0;
  bool exact_checked = false;   // exact-summation assertion applied
  bool violated = false;
};

struct JointChecks {
  std::size_t joint = 0;
  double mi = 0.0;
  std::optional<double> posterior_max_diff;   // optimal critic, K <= exact_max_K
  bool monotone_mc = true;                    // optimal critic, within 2 SE
  bool monotone_exact = true;
  bool decomposition_ok = true;
  double decomposition_gap_optimal = 0.0;     // |L - H| for the optimal critic
  std::vector<std::string> failures;
};

struct BoundReport {
  std::vector<BoundCell> cells;
  std::vector<JointChecks> joints;
  std::size_t violations = 0;
  bool ok = true;
};

inline BoundReport verify_bound(const std::vector<DiscreteJoint>& joints, const BoundOptions& opt = {}) {
  const std::vector<CriticKind> kinds{CriticKind::optimal, CriticKind::cosine};
  const std::size_t nK = opt.Ks.size(), per_joint = kinds.size() * nK;
  BoundReport rep;
  rep.cells.resize(joints.size() * per_joint);
  rep.joints.resize(joints.size());
  parallel_for(joints.size(), [&](std::size_t ji) {
    const DiscreteJoint& j = joints[ji];
    const double mi = exact_mi(j);
    const bool small = j.nu() <= opt.exact_max_support && j.nv() <= opt.exact_max_support;
    Rng critic_rng(derive_seed(opt.seed, 0xC417 + ji));
    const std::vector<Critic> critics{optimal_critic(j),
                                      cosine_critic(j, opt.cosine_dim, opt.cosine_tau, critic_rng)};
    JointChecks jc;
    jc.joint = ji;
    jc.mi = mi;
    for (std::size_t ci = 0; ci < critics.size(); ++ci)
      for (std::size_t ki = 0; ki < nK; ++ki) {
        const std::size_t K = opt.Ks[ki];
        Rng rng(derive_seed(derive_seed(opt.seed, ji), ci * 1000 + K));
        BoundCell cell{ji, kinds[ci], infonce_estimate(j, critics[ci], K, opt.n_samples, rng), mi, 0.0, false, false};
        cell.exact_bound = exact_bound(j, critics[ci], K);
        cell.violated = cell.estimate.bound > mi + opt.se_multiplier * cell.estimate.se;
        if (small && K <= opt.exact_max_K) {
          cell.exact_checked = true;
          cell.violated = cell.violated || cell.exact_bound > mi + opt.exact_tol;
        }
        if (cell.violated) {
          jc.failures.push_back(to_string(kinds[ci]) + " K=" + std::to_string(K) + ": bound " +
                                std::to_string(cell.estimate.bound) + " (exact " + std::to_string(cell.exact_bound) +
                                ") exceeds I=" + std::to_string(mi));
        }
        rep.cells[ji * per_joint + ci * nK + ki] = cell;
      }
    // optimal critic: bound non-decreasing in K
    for (std::size_t ki = 1; ki < nK; ++ki) {
      const auto& a = rep.cells[ji * per_joint + ki - 1];
      const auto& b = rep.cells[ji * per_joint + ki];
      // a constant critic has SE 0, leaving only summation round-off
      const double slack = 2.0 * std::max(a.estimate.se, b.estimate.se) + opt.exact_tol;
      if (b.estimate.bound < a.estimate.bound - slack) jc.monotone_mc = false;
      if (b.exact_bound < a.exact_bound - 1e-12) jc.monotone_exact = false;
    }
    if (!jc.monotone_mc) jc.failures.push_back("optimal-critic bound decreases in K beyond 2 SE");
    if (!jc.monotone_exact) jc.failures.push_back("exact optimal-critic bound decreases in K");
    if (small) {
      double worst = 0.0;
      for (std::size_t K : opt.Ks)
        if (K <= opt.exact_max_K) worst = std::max(worst, posterior_identity_max_diff(j, K));
      jc.posterior_max_diff = worst;
      if (worst >= 1e-10) jc.failures.push_back("posterior identity off by " + std::to_string(worst));
    }
    if (j.nu() <= opt.decomposition_max_support && j.nv() <= opt.decomposition_max_support) {
      for (std::size_t K : opt.Ks) {
        if (K > opt.exact_max_K) continue;
        const auto dopt = exact_decomposition(j, critics[0], K);
        const auto dcos = exact_decomposition(j, critics[1], K);
        jc.decomposition_gap_optimal = std::max(jc.decomposition_gap_optimal, std::abs(dopt.loss - dopt.conditional_entropy));
        if (std::abs(dopt.loss - dopt.conditional_entropy) > 1e-10 || dcos.loss < dcos.conditional_entropy - 1e-12) {
          jc.decomposition_ok = false;
        }
      }
      if (!jc.decomposition_ok) jc.failures.push_back("cross-entropy decomposition violated");
    }
    rep.joints[ji] = jc;
  });
  for (const auto& c : rep.cells) rep.violations += c.violated ? 1 : 0;
  for (const auto& jc : rep.joints) rep.ok = rep.ok && jc.failures.empty();
  rep.ok = rep.ok && rep.violations == 0;
  return rep;
}

inline nlohmann::json report_to_json(const BoundReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"joint", c.joint},
                     {"critic", to_string(c.critic)},
                     {"K", c.estimate.K},
                     {"n_samples", c.estimate.n_samples},
                     {"loss", c.estimate.loss},
                     {"bound", c.estimate.bound},
                     {"se", c.estimate.se},
                     {"exact_bound", c.exact_bound},
                     {"mi", c.mi},
                     {"exact_checked", c.exact_checked},
                     {"violated", c.violated}});
  }
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& jc : r.joints) {
    joints.push_back({{"joint", jc.joint},
                      {"mi", jc.mi},
                      {"posterior_max_diff", jc.posterior_max_diff ? nlohmann::json(*jc.posterior_max_diff) : nlohmann::json()},
                      {"monotone_mc", jc.monotone_mc},
                      {"monotone_exact", jc.monotone_exact},
                      {"decomposition_ok", jc.decomposition_ok},
                      {"decomposition_gap_optimal", jc.decomposition_gap_optimal},
                      {"failures", jc.failures}});
  }
  return {{"ok", r.ok}, {"violations", r.violations}, {"cells", cells}, {"joints", joints}};
}

}  // namespace moca::mi
