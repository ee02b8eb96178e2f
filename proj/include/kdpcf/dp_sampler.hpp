#pragma once

// Exponential-mechanism selection of a whole neighbor set in one draw.
//
// The mechanism outputs a size-N set S with probability proportional to
// exp(eps * q(S) / (2 dq)), q(S) = sum_{v in S} |Sim(u,v)|. Because q is
// additive the weight of S factorizes into prod_{v in S} w_v with
// w_v = exp(eps |Sim(u,v)| / (2 dq)), so the normalizer is the elementary
// symmetric polynomial e_N(w) and S can be drawn exactly by scanning the
// candidates once, without enumerating all C(n, N) sets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kdpcf/common.hpp"
#include "kdpcf/similarity.hpp"

namespace kdpcf {

// Counts mechanism invocations and the budget each one spent.
class PrivacyAccountant {
 public:
  void record(double epsilon) { spends_.push_back(epsilon); }

  std::size_t invocations() const { return spends_.size(); }
  const std::vector<double>& spends() const { return spends_; }

  double total() const {
    double sum = 0.0;
    for (double e : spends_) sum += e;
    return sum;
  }

 private:
  std::vector<double> spends_;
};

// Per-candidate exponential-mechanism weights, kept in log space:
// log w_v = eps * quality_v / (2 dq) with quality_v = |Sim(u,v)|.
struct WeightVector {
  std::vector<UserId> candidates;      // ascending, target excluded
  std::vector<double> qualities;       // |Sim|, parallel to candidates
  std::vector<double> log_weights;     // parallel to candidates
  double epsilon = 0.0;
  double delta_q = 1.0;

  std::size_t size() const { return candidates.size(); }

  double weight(std::size_t i) const { return std::exp(log_weights[i]); }

  // Weights divided by the largest one, so every value is in (0, 1]; the
  // set distribution is unchanged because every set has the same size.
  std::pair<std::vector<double>, double> scaled() const {
    const double shift =
        log_weights.empty() ? 0.0
                            : *std::max_element(log_weights.begin(), log_weights.end());
    std::vector<double> w(log_weights.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - shift);
    return {std::move(w), shift};
  }
};

inline WeightVector make_weights(const SimilarityVector& sims, double epsilon,
                                 double delta_q = 1.0) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be non-negative");
  if (!(delta_q > 0.0)) throw InvalidArgument("sensitivity must be positive");
  WeightVector wv;
  wv.epsilon = epsilon;
  wv.delta_q = delta_q;
  for (const auto& [v, s] : sims.entries) {
    if (v == sims.target) continue;
    wv.candidates.push_back(v);
    wv.qualities.push_back(std::abs(s));
    wv.log_weights.push_back(epsilon * std::abs(s) / (2.0 * delta_q));
  }
  return wv;
}

// q(S) = sum of |Sim| over the members.
inline double quality(const SimilarityVector& sims, std::span<const UserId> members) {
  double q = 0.0;
  for (UserId v : members) q += std::abs(sims.at(v));
  return q;
}

struct NeighborSet {
  std::vector<UserId> members;  // ascending

  std::size_t size() const { return members.size(); }
};

// Keeps each non-target category member independently with probability p.
// The draw looks only at identities. With fewer than `min_size` survivors it
// retries up to 10 times, then returns every non-target member.
inline std::vector<UserId> bernoulli_subsample(std::span<const UserId> category,
                                               UserId target, double p, Rng& rng,
                                               std::size_t min_size = 0) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("subsample probability must be in (0,1]");
  std::vector<UserId> pool;
  for (UserId v : category) {
    if (v != target) pool.push_back(v);
  }
  std::sort(pool.begin(), pool.end());
  if (p == 1.0) return pool;
  for (int attempt = 0; attempt <= 10; ++attempt) {
    std::vector<UserId> kept;
    for (UserId v : pool) {
      if (uniform01(rng) < p) kept.push_back(v);
    }
    if (kept.size() >= min_size) return kept;
  }
  return pool;
}

// e_0..e_N of `weights` scaled by exp(-log_scale), so the true value of e_j
// is coefficients[j] * exp(log_scale).
struct ScaledPolynomials {
  std::vector<double> coefficients;
  double log_scale = 0.0;

  double value(std::size_t j) const { return coefficients[j] * std::exp(log_scale); }
};

namespace detail {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// One step of e_j(W + {w}) = e_j(W) + w e_{j-1}(W) on log e_0..log e_N.
inline void extend_log(std::vector<double>& log_e, double log_w) {
  for (std::size_t j = log_e.size() - 1; j >= 1; --j) {
    log_e[j] = log_add(log_e[j], log_w + log_e[j - 1]);
  }
}

inline std::vector<double> log_elementary(std::span<const double> log_weights,
                                          std::size_t n) {
  std::vector<double> log_e(n + 1, kLogZero);
  log_e[0] = 0.0;
  for (double lw : log_weights) extend_log(log_e, lw);
  return log_e;
}

}  // namespace detail

inline ScaledPolynomials elementary_symmetric_scaled(std::span<const double> weights,
                                                     std::size_t n) {
  if (n > weights.size()) throw InvalidArgument("elementary_symmetric: N exceeds weight count");
  std::vector<double> log_w(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) log_w[i] = std::log(weights[i]);
  const auto log_e = detail::log_elementary(log_w, n);
  ScaledPolynomials p;
  p.log_scale = *std::max_element(log_e.begin(), log_e.end());
  for (double x : log_e) p.coefficients.push_back(std::exp(x - p.log_scale));
  return p;
}

// e_0..e_N in plain doubles; overflows to inf for extreme inputs, use the
// scaled form there.
inline std::vector<double> elementary_symmetric(std::span<const double> weights,
                                                std::size_t n) {
  const auto p = elementary_symmetric_scaled(weights, n);
  std::vector<double> out(n + 1);
  for (std::size_t j = 0; j <= n; ++j) out[j] = p.value(j);
  return out;
}

// Sequential conditional sampler for the product-weight set distribution.
//
// Candidates are scanned in ascending id order; candidate i is included, with
// j slots left, with probability w_i e_{j-1}(after i) / e_j(from i). The
// suffix polynomials are precomputed back to front in log space, which keeps
// them exact even when the weights span thousands of orders of magnitude.
class SequentialSetSampler {
 public:
  SequentialSetSampler(const WeightVector& wv, std::size_t n) : wv_(&wv), n_(n) {
    const std::size_t size = wv.size();
    if (n > size) throw InvalidArgument("sample_neighbor_set: N exceeds candidate count");
    // suffix_[i] holds log e_0..log e_N of w[i..size)
    suffix_.resize(size + 1);
    suffix_[size].assign(n + 1, detail::kLogZero);
    suffix_[size][0] = 0.0;
    for (std::size_t i = size; i-- > 0;) {
      suffix_[i] = suffix_[i + 1];
      detail::extend_log(suffix_[i], wv.log_weights[i]);
    }
  }

  // Probability of taking candidate i when `left` of the N slots are open.
  double include_probability(std::size_t i, std::size_t left) const {
    if (left == 0) return 0.0;
    if (wv_->size() - i <= left) return 1.0;
    return std::exp(wv_->log_weights[i] + suffix_[i + 1][left - 1] - suffix_[i][left]);
  }

  NeighborSet sample(Rng& rng) const {
    NeighborSet out;
    out.members.reserve(n_);
    std::size_t left = n_;
    for (std::size_t i = 0; i < wv_->size() && left > 0; ++i) {
      if (uniform01(rng) < include_probability(i, left)) {
        out.members.push_back(wv_->candidates[i]);
        --left;
      }
    }
    return out;
  }

  // Probability that sample() returns exactly `members` (ascending).
  double probability_of(std::span<const UserId> members) const {
    if (members.size() != n_) return 0.0;
    double p = 1.0;
    std::size_t left = n_;
    std::size_t next = 0;
    for (std::size_t i = 0; i < wv_->size(); ++i) {
      const double inc = include_probability(i, left);
      if (next < members.size() && members[next] == wv_->candidates[i]) {
        p *= inc;
        --left;
        ++next;
      } else {
        p *= 1.0 - inc;
      }
    }
    return next == members.size() ? p : 0.0;
  }

 private:
  const WeightVector* wv_;
  std::size_t n_;
  std::vector<std::vector<double>> suffix_;
};

// Draws a size-N set with probability prod_{v in S} w_v / e_N(w), which is
// exactly the exponential mechanism over N-subsets with additive quality.
inline NeighborSet sample_neighbor_set(const WeightVector& wv, std::size_t n, Rng& rng,
                                       PrivacyAccountant* accountant = nullptr) {
  SequentialSetSampler sampler(wv, n);
  if (accountant != nullptr) accountant->record(wv.epsilon);
  return sampler.sample(rng);
}

// One exponential-mechanism draw of a single candidate, probability
// proportional to exp(epsilon * quality / (2 dq)).
inline std::size_t select_one(std::span<const double> qualities, double epsilon,
                              double delta_q, Rng& rng,
                              PrivacyAccountant* accountant = nullptr) {
  if (qualities.empty()) throw InvalidArgument("select_one: no candidates");
  if (accountant != nullptr) accountant->record(epsilon);
  std::vector<double> logw(qualities.size());
  for (std::size_t i = 0; i < logw.size(); ++i) {
    logw[i] = epsilon * qualities[i] / (2.0 * delta_q);
  }
  const double shift = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double& x : logw) {
    x = std::exp(x - shift);
    total += x;
  }
  const double target = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    acc += logw[i];
    if (acc > target) return i;
  }
  return logw.size() - 1;
}

struct SetDistribution {
  struct Outcome {
    std::vector<UserId> members;  // ascending
    double probability = 0.0;
    double log_probability = 0.0;
  };
  std::vector<Outcome> support;  // in lexicographic order of candidate positions

  double total() const {
    double sum = 0.0;
    for (const auto& o : support) sum += o.probability;
    return sum;
  }
};

inline constexpr double kMaxEnumeratedSets = 1e6;

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return r;
}

// Brute-force distribution over every N-subset, each weighted by
// exp(eps * q(S) / (2 dq)) with q(S) summed from the candidate qualities.
inline SetDistribution enumerate_distribution(const WeightVector& wv, std::size_t n) {
  const std::size_t size = wv.size();
  if (n > size) throw InvalidArgument("enumerate_distribution: N exceeds candidate count");
  if (binomial(size, n) > kMaxEnumeratedSets) {
    throw InvalidArgument("enumerate_distribution: support too large");
  }
  SetDistribution dist;
  std::vector<std::size_t> pick(n);
  for (std::size_t i = 0; i < n; ++i) pick[i] = i;
  std::vector<double> exponents;
  while (true) {
    double q = 0.0;
    SetDistribution::Outcome o;
    for (auto i : pick) {
      q += wv.qualities[i];
      o.members.push_back(wv.candidates[i]);
    }
    exponents.push_back(wv.epsilon * q / (2.0 * wv.delta_q));
    dist.support.push_back(std::move(o));

    // next combination
    std::size_t pos = n;
    while (pos > 0 && pick[pos - 1] == size - n + pos - 1) --pos;
    if (pos == 0) break;
    ++pick[pos - 1];
    for (std::size_t j = pos; j < n; ++j) pick[j] = pick[j - 1] + 1;
  }
  const double shift = *std::max_element(exponents.begin(), exponents.end());
  double total = 0.0;
  for (double x : exponents) total += std::exp(x - shift);
  const double log_total = shift + std::log(total);
  for (std::size_t s = 0; s < dist.support.size(); ++s) {
    dist.support[s].log_probability = exponents[s] - log_total;
    dist.support[s].probability = std::exp(dist.support[s].log_probability);
  }
  return dist;
}

// max over all N-subsets of |ln P1(S) - ln P2(S)| for two weight vectors over
// the same candidates (bounded adjacency: same users, changed ratings).
inline double audit_dp(const WeightVector& first, const WeightVector& second,
                       std::size_t n) {
  if (first.candidates != second.candidates) {
    throw InvalidArgument("audit_dp: candidate lists differ");
  }
  const auto p1 = enumerate_distribution(first, n);
  const auto p2 = enumerate_distribution(second, n);
  double worst = 0.0;
  for (std::size_t s = 0; s < p1.support.size(); ++s) {
    worst = std::max(worst, std::abs(p1.support[s].log_probability -
                                     p2.support[s].log_probability));
  }
  return worst;
}

}  // namespace kdpcf
