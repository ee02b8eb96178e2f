#pragma once

// User-based CF, the per-neighbor exponential-mechanism baseline (DPCF) and
// the clustered single-draw scheme (KDPCF). All three share the prediction
// and top-m stage and differ only in how the neighbor set is chosen.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kdpcf/clustering.hpp"
#include "kdpcf/common.hpp"
#include "kdpcf/data.hpp"
#include "kdpcf/dp_sampler.hpp"
#include "kdpcf/similarity.hpp"

namespace kdpcf {

struct ScoredItem {
  ItemId item;
  double score = 0.0;

  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

struct RecommendationList {
  UserId target;
  std::vector<ScoredItem> items;  // score descending, ties by ascending item id

  friend bool operator==(const RecommendationList&, const RecommendationList&) = default;
};

struct KdpcfParams {
  std::size_t m = 30;
  std::size_t neighbors = 30;
  double epsilon = 1.0;
  std::optional<std::size_t> c_min;  // default 5N
  std::optional<std::size_t> c_max;  // default 10N
  std::optional<std::size_t> k;      // default ceil(2|U| / (c_min + c_max))
  double subsample_p = 1.0;
  std::size_t max_iterations = 50;
  std::size_t max_rounds = 20;

  CategoryBounds bounds() const {
    return {c_min.value_or(5 * neighbors), c_max.value_or(10 * neighbors)};
  }

  std::size_t cluster_count(std::size_t user_count) const {
    if (k) return std::clamp<std::size_t>(*k, 1, std::max<std::size_t>(user_count, 1));
    return default_cluster_count(user_count, bounds());
  }

  // Throws InvalidArgument for inconsistent combinations.
  void validate() const {
    if (m == 0) throw InvalidArgument("m must be positive");
    if (neighbors == 0) throw InvalidArgument("N must be positive");
    if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be non-negative");
    if (!(subsample_p > 0.0 && subsample_p <= 1.0)) {
      throw InvalidArgument("subsample probability must be in (0,1]");
    }
    if (k && *k == 0) throw InvalidArgument("k must be positive");
    bounds().validate(neighbors);
  }
};

// r*_ui = mean_u + sum Sim(u,v)(r_vi - mean_v) / sum |Sim(u,v)| over the
// neighbors who rated i, clamped to [1,5]. A zero denominator gives mean_u.
// nullopt when no neighbor rated i.
inline std::optional<double> predict_rating(const RatingMatrix& matrix, UserId u,
                                            std::span<const UserId> neighbors,
                                            const SimilarityVector& sims, ItemId i) {
  double num = 0.0;
  double den = 0.0;
  bool any = false;
  for (UserId v : neighbors) {
    const auto r = matrix.rating(v, i);
    if (!r) continue;
    any = true;
    const double s = sims.at(v);
    num += s * (*r - mean_rating(matrix, v));
    den += std::abs(s);
  }
  if (!any) return std::nullopt;
  const double base = mean_rating(matrix, u);
  if (den == 0.0) return base;
  return std::clamp(base + num / den, 1.0, 5.0);
}

// Predictions for every item some neighbor rated and u did not.
inline std::vector<ScoredItem> predict_all(const RatingMatrix& matrix, UserId u,
                                           std::span<const UserId> neighbors,
                                           const SimilarityVector& sims) {
  struct Acc {
    double num = 0.0;
    double den = 0.0;
  };
  const std::size_t iu = matrix.require_index(u);
  std::vector<bool> own(matrix.item_count(), false);
  for (const auto& e : matrix.row_at(iu)) own[e.column] = true;

  std::unordered_map<std::uint32_t, Acc> acc;
  for (UserId v : neighbors) {
    const std::size_t iv = matrix.require_index(v);
    const double s = sims.at(v);
    const double mean_v = matrix.mean_at(iv);
    for (const auto& e : matrix.row_at(iv)) {
      if (own[e.column]) continue;
      auto& a = acc[e.column];
      a.num += s * (e.rating - mean_v);
      a.den += std::abs(s);
    }
  }
  const double base = matrix.mean_at(iu);
  std::vector<ScoredItem> out;
  out.reserve(acc.size());
  for (const auto& [col, a] : acc) {
    const double score = a.den == 0.0 ? base : std::clamp(base + a.num / a.den, 1.0, 5.0);
    out.push_back({matrix.items()[col], score});
  }
  std::sort(out.begin(), out.end(),
            [](const ScoredItem& a, const ScoredItem& b) { return a.item < b.item; });
  return out;
}

inline std::vector<ScoredItem> top_m(std::vector<ScoredItem> predictions, std::size_t m) {
  auto better = [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  };
  if (predictions.size() > m) {
    std::partial_sort(predictions.begin(),
                      predictions.begin() + static_cast<std::ptrdiff_t>(m),
                      predictions.end(), better);
    predictions.resize(m);
  } else {
    std::sort(predictions.begin(), predictions.end(), better);
  }
  return predictions;
}

inline RecommendationList recommend_from_neighbors(const RatingMatrix& matrix, UserId u,
                                                   std::span<const UserId> neighbors,
                                                   const SimilarityVector& sims,
                                                   std::size_t m) {
  return {u, top_m(predict_all(matrix, u, neighbors, sims), m)};
}

namespace detail {

inline std::vector<UserId> others(const RatingMatrix& matrix, UserId u) {
  std::vector<UserId> out;
  out.reserve(matrix.user_count());
  for (UserId v : matrix.users()) {
    if (v != u) out.push_back(v);
  }
  return out;
}

}  // namespace detail

// Top-N users by |Sim| (ties by ascending id) among all other users.
inline std::vector<UserId> top_neighbors(const SimilarityVector& sims, std::size_t n) {
  auto ranked = sims.entries;
  auto better = [](const auto& a, const auto& b) {
    const double x = std::abs(a.second);
    const double y = std::abs(b.second);
    if (x != y) return x > y;
    return a.first < b.first;
  };
  const std::size_t take = std::min(n, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take),
                    ranked.end(), better);
  std::vector<UserId> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(ranked[i].first);
  std::sort(out.begin(), out.end());
  return out;
}

inline RecommendationList run_cf(const RatingMatrix& matrix, UserId u, std::size_t n,
                                 std::size_t m, const SimilarityCache* cache = nullptr) {
  const auto sims = similarity_vector(matrix, u, detail::others(matrix, u), cache);
  const auto neighbors = top_neighbors(sims, n);
  return recommend_from_neighbors(matrix, u, neighbors, sims, m);
}

// N sequential single-user exponential-mechanism draws without replacement
// over all other users, each with budget epsilon / N.
inline std::vector<UserId> dpcf_neighbors(const SimilarityVector& sims, std::size_t n,
                                          double epsilon, Rng& rng,
                                          PrivacyAccountant* accountant = nullptr) {
  if (n > sims.size()) throw InvalidArgument("DPCF: fewer than N other users");
  std::vector<UserId> pool;
  std::vector<double> q;
  for (const auto& [v, s] : sims.entries) {
    pool.push_back(v);
    q.push_back(std::abs(s));
  }
  const double per_draw = n == 0 ? 0.0 : epsilon / static_cast<double>(n);
  std::vector<UserId> chosen;
  for (std::size_t d = 0; d < n; ++d) {
    const std::size_t pick = select_one(q, per_draw, 1.0, rng, accountant);
    chosen.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    q.erase(q.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline RecommendationList run_dpcf(const RatingMatrix& matrix, UserId u, std::size_t n,
                                   std::size_t m, double epsilon, Rng& rng,
                                   PrivacyAccountant* accountant = nullptr,
                                   const SimilarityCache* cache = nullptr) {
  const auto sims = similarity_vector(matrix, u, detail::others(matrix, u), cache);
  const auto neighbors = dpcf_neighbors(sims, std::min(n, sims.size()), epsilon, rng, accountant);
  return recommend_from_neighbors(matrix, u, neighbors, sims, m);
}

// Step 1 of KDPCF: k-means over every user of the matrix.
inline Clustering cluster_users(const RatingMatrix& matrix, const KdpcfParams& params,
                                Rng& rng) {
  return kmeans(matrix, matrix.users(), params.cluster_count(matrix.user_count()), rng,
                std::nullopt, {params.max_iterations});
}

// Everything KDPCF decided for one target, for inspection and tests.
struct KdpcfTrace {
  AdjustedCategory category;
  std::vector<UserId> sampled;  // U*
  NeighborSet neighbors;
};

// Steps 2-4 given a Step-1 clustering.
inline RecommendationList run_kdpcf(const RatingMatrix& matrix, UserId u,
                                    const KdpcfParams& params, const Clustering& clustering,
                                    Rng& rng, PrivacyAccountant* accountant = nullptr,
                                    const SimilarityCache* cache = nullptr,
                                    KdpcfTrace* trace = nullptr) {
  AdjustOptions adjust{params.neighbors, params.max_rounds, {params.max_iterations}};
  auto category = adjust_target_category(matrix, clustering, u, params.bounds(), rng, adjust);
  auto sampled = bernoulli_subsample(category.users, u, params.subsample_p, rng,
                                     params.neighbors);
  const auto sims = similarity_vector(matrix, u, sampled, cache);
  const auto weights = make_weights(sims, params.epsilon);
  const std::size_t n = std::min(params.neighbors, weights.size());
  auto neighbors = sample_neighbor_set(weights, n, rng, accountant);
  auto list = recommend_from_neighbors(matrix, u, neighbors.members, sims, params.m);
  if (trace != nullptr) {
    *trace = {std::move(category), std::move(sampled), std::move(neighbors)};
  }
  return list;
}

inline RecommendationList run_kdpcf(const RatingMatrix& matrix, UserId u,
                                    const KdpcfParams& params, Rng& rng,
                                    PrivacyAccountant* accountant = nullptr,
                                    const SimilarityCache* cache = nullptr) {
  matrix.require_index(u);
  const auto clustering = cluster_users(matrix, params, rng);
  return run_kdpcf(matrix, u, params, clustering, rng, accountant, cache);
}

}  // namespace kdpcf
