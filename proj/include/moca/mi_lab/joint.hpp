#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/errors.hpp"
#include "moca/rng.hpp"

namespace moca::mi {

// p(u, v) over a finite |U| x |V| alphabet, row-major in u.
class DiscreteJoint {
 public:
  DiscreteJoint() = default;

  DiscreteJoint(std::size_t nu, std::size_t nv, std::vector<double> p) : nu_(nu), nv_(nv), p_(std::move(p)) {
    if (nu_ == 0 || nv_ == 0) throw ValidationError("joint alphabets must be non-empty");
    if (p_.size() != nu_ * nv_) throw ValidationError("joint table size does not match alphabets");
    double s = 0.0;
    for (double x : p_) {
      if (!std::isfinite(x) || x < 0.0) throw ValidationError("joint entries must be finite and non-negative");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ValidationError("joint table sums to " + std::to_string(s) + ", not 1");
    pu_.assign(nu_, 0.0);
    pv_.assign(nv_, 0.0);
    for (std::size_t u = 0; u < nu_; ++u)
      for (std::size_t v = 0; v < nv_; ++v) {
        pu_[u] += at(u, v);
        pv_[v] += at(u, v);
      }
  }

  std::size_t nu() const { return nu_; }
  std::size_t nv() const { return nv_; }
  double at(std::size_t u, std::size_t v) const { return p_[u * nv_ + v]; }
  double pu(std::size_t u) const { return pu_[u]; }
  double pv(std::size_t v) const { return pv_[v]; }
  const std::vector<double>& table() const { return p_; }
  const std::vector<double>& marginal_v() const { return pv_; }

  DiscreteJoint transpose() const {
    std::vector<double> t(p_.size());
    for (std::size_t u = 0; u < nu_; ++u)
      for (std::size_t v = 0; v < nv_; ++v) t[v * nu_ + u] = at(u, v);
    return {nv_, nu_, std::move(t)};
  }

 private:
  std::size_t nu_ = 0, nv_ = 0;
  std::vector<double> p_, pu_, pv_;
};

// I(U;V) in nats, 0 ln 0 = 0.
inline double exact_mi(const DiscreteJoint& j) {
  double mi = 0.0;
  for (std::size_t u = 0; u < j.nu(); ++u)
    for (std::size_t v = 0; v < j.nv(); ++v) {
      const double p = j.at(u, v);
      if (p > 0.0) mi += p * std::log(p / (j.pu(u) * j.pv(v)));
    }
  return mi;
}

inline DiscreteJoint identity_joint(std::size_t n) {
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 1.0 / static_cast<double>(n);
  return {n, n, std::move(p)};
}

inline DiscreteJoint product_joint(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> p;
  for (double x : a)
    for (double y : b) p.push_back(x * y);
  double s = 0.0;
  for (double x : p) s += x;
  for (double& x : p) x /= s;
  return {a.size(), b.size(), std::move(p)};
}

// Random joint mixing a random permutation coupling (weight `coupling`) with
// exponential noise; about a quarter of the noise cells are zeroed.
inline DiscreteJoint random_joint(std::size_t nu, std::size_t nv, double coupling, Rng& rng) {
  std::vector<double> p(nu * nv);
  for (double& x : p) x = rng.uniform() < 0.25 ? 0.0 : -std::log(1.0 - rng.uniform());
  std::vector<std::size_t> perm(nv);
  for (std::size_t i = 0; i < nv; ++i) perm[i] = i;
  rng.shuffle(perm);
  double noise = 0.0;
  for (double x : p) noise += x;
  for (double& x : p) x *= (1.0 - coupling) / noise;
  for (std::size_t u = 0; u < nu; ++u) p[u * nv + perm[u % nv]] += coupling / static_cast<double>(nu);
  double s = 0.0;
  for (double x : p) s += x;
  for (double& x : p) x /= s;
  return {nu, nv, std::move(p)};
}

// 20 seeded joints with alphabets between 2 and 8 and a spread of coupling
// strengths, including two independent ones.
inline std::vector<DiscreteJoint> seeded_joints(std::uint64_t seed, std::size_t count = 20) {
  std::vector<DiscreteJoint> out;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t nu = 2 + rng.index(7), nv = 2 + rng.index(7);
    if (i % 10 == 9) {
      std::vector<double> a(nu), b(nv);
      for (double& x : a) x = 0.1 + rng.uniform();
      for (double& x : b) x = 0.1 + rng.uniform();
      out.push_back(product_joint(a, b));
    } else {
      out.push_back(random_joint(nu, nv, rng.uniform(0.2, 0.95), rng));
    }
  }
  return out;
}

inline std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  const double r = rng.uniform();
  double c = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    c += probs[i];
    if (r < c) return i;
  }
  for (std::size_t i = probs.size(); i-- > 0;)   // round-off tail
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

struct Candidates {
  std::size_t u = 0;
  std::size_t slot = 0;                // J, where the positive sits
  std::vector<std::size_t> v;          // K + 1 candidate symbols
};

// (u, v) ~ p, J ~ Uniform{0..K}, the K other slots i.i.d. from p(v).
inline Candidates sample_candidates(const DiscreteJoint& j, std::size_t K, Rng& rng) {
  if (K < 1) throw ValidationError("K must be at least 1");
  const std::size_t cell = sample_index(j.table(), rng);
  Candidates c;
  c.u = cell / j.nv();
  c.slot = rng.index(K + 1);
  c.v.resize(K + 1);
  for (std::size_t k = 0; k <= K; ++k) c.v[k] = k == c.slot ? cell % j.nv() : sample_index(j.marginal_v(), rng);
  return c;
}

inline nlohmann::json joint_to_json(const DiscreteJoint& j) {
  return {{"nu", j.nu()}, {"nv", j.nv()}, {"p", j.table()}};
}

inline DiscreteJoint joint_from_json(const nlohmann::json& j) {
  return {j.at("nu").get<std::size_t>(), j.at("nv").get<std::size_t>(), j.at("p").get<std::vector<double>>()};
}

}  // namespace moca::mi
