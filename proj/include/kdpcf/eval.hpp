#pragma once

// Recall/precision and the multi-run experiment driver.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "kdpcf/clustering.hpp"
#include "kdpcf/common.hpp"
#include "kdpcf/data.hpp"
#include "kdpcf/recommend.hpp"
#include "kdpcf/similarity.hpp"

namespace kdpcf {

struct Metrics {
  double recall = 0.0;
  double precision = 0.0;
  std::size_t users_evaluated = 0;
  std::size_t hits = 0;
  std::size_t test_total = 0;         // sum |T_u|
  std::size_t recommended_total = 0;  // sum |R_u|
  bool recall_undefined = false;      // sum |T_u| was 0
  bool precision_undefined = false;   // sum |R_u| was 0
};

// Micro-averaged recall and precision. Users without test ratings are left
// out of every sum.
inline Metrics compute_metrics(const std::map<UserId, RecommendationList>& lists,
                               const RatingMatrix& test) {
  Metrics out;
  for (const auto& [u, list] : lists) {
    const auto idx = test.index_of(u);
    if (!idx) continue;
    const auto truth = test.row_at(*idx);
    ++out.users_evaluated;
    out.test_total += truth.size();
    out.recommended_total += list.items.size();
    for (const auto& rec : list.items) {
      auto it = std::lower_bound(
          truth.begin(), truth.end(), rec.item,
          [](const RatingEntry& e, ItemId item) { return e.item < item; });
      if (it != truth.end() && it->item == rec.item) ++out.hits;
    }
  }
  out.recall_undefined = out.test_total == 0;
  out.precision_undefined = out.recommended_total == 0;
  if (!out.recall_undefined) {
    out.recall = static_cast<double>(out.hits) / static_cast<double>(out.test_total);
  }
  if (!out.precision_undefined) {
    out.precision =
        static_cast<double>(out.hits) / static_cast<double>(out.recommended_total);
  }
  return out;
}

enum class Scheme { kCf, kDpcf, kKdpcf };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::kCf: return "CF";
    case Scheme::kDpcf: return "DPCF";
    case Scheme::kKdpcf: return "KDPCF";
  }
  return "?";
}

inline std::optional<Scheme> parse_scheme(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name == "cf") return Scheme::kCf;
  if (name == "dpcf") return Scheme::kDpcf;
  if (name == "kdpcf") return Scheme::kKdpcf;
  return std::nullopt;
}

struct Sweep {
  std::string parameter;  // "m", "N" or "epsilon"
  std::vector<double> values;
};

// Applies one sweep value to a parameter set.
inline KdpcfParams with_sweep_value(KdpcfParams params, const std::string& parameter,
                                    double value) {
  if (parameter == "m") {
    params.m = static_cast<std::size_t>(std::llround(value));
  } else if (parameter == "N") {
    params.neighbors = static_cast<std::size_t>(std::llround(value));
  } else if (parameter == "epsilon") {
    params.epsilon = value;
  } else {
    throw InvalidArgument("unknown sweep parameter '" + parameter + "'");
  }
  return params;
}

// Stream used for the Step-1 clustering of a run.
inline constexpr std::uint64_t kClusterStream = 0xC1D57E5ULL;

// Supplies the Step-1 clustering for (run seed, k). The default runs k-means
// with a generator seeded from derive_seed(run_seed, kClusterStream).
using ClusterProvider =
    std::function<Clustering(const RatingMatrix&, const KdpcfParams&, std::uint64_t run_seed)>;

inline Clustering default_clusterer(const RatingMatrix& train, const KdpcfParams& params,
                                    std::uint64_t run_seed) {
  Rng rng(derive_seed(run_seed, kClusterStream));
  return cluster_users(train, params, rng);
}

struct ExperimentConfig {
  Scheme scheme = Scheme::kKdpcf;
  KdpcfParams params;
  std::size_t runs = 100;
  std::uint64_t base_seed = 0;
  std::optional<Sweep> sweep;
  std::size_t threads = 1;
  // Draw a fresh train/test split (same test fraction) for every run.
  bool resplit = false;
  ClusterProvider clusterer;  // empty means default_clusterer
};

struct ExperimentRow {
  Scheme scheme = Scheme::kCf;
  std::string parameter = "none";
  std::optional<double> value;
  double recall = 0.0;
  double precision = 0.0;
  double stddev_recall = 0.0;
  double stddev_precision = 0.0;
  std::size_t runs = 0;
  std::vector<double> run_recalls;
  std::vector<double> run_precisions;
  bool undefined_metric = false;  // some run had a zero denominator
};

namespace detail {

inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

inline std::pair<double, double> mean_and_stddev(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace detail

// Recommendations for every user of `test` that also appears in `train`.
// Per-user generators are seeded with derive_seed(run_seed, user_id), so the
// result does not depend on thread scheduling.
inline std::map<UserId, RecommendationList> recommend_all(
    Scheme scheme, const RatingMatrix& train, const RatingMatrix& test,
    const KdpcfParams& params, std::uint64_t run_seed, const SimilarityCache* cache,
    const Clustering* clustering, std::size_t threads) {
  std::vector<UserId> targets;
  for (UserId u : test.users()) {
    if (train.contains(u)) targets.push_back(u);
  }
  std::vector<RecommendationList> lists(targets.size());
  detail::parallel_for(targets.size(), threads, [&](std::size_t i) {
    const UserId u = targets[i];
    Rng rng(derive_seed(run_seed, u.value));
    switch (scheme) {
      case Scheme::kCf:
        lists[i] = run_cf(train, u, params.neighbors, params.m, cache);
        break;
      case Scheme::kDpcf:
        lists[i] = run_dpcf(train, u, params.neighbors, params.m, params.epsilon, rng,
                            nullptr, cache);
        break;
      case Scheme::kKdpcf:
        lists[i] = run_kdpcf(train, u, params, *clustering, rng, nullptr, cache);
        break;
    }
  });
  std::map<UserId, RecommendationList> out;
  for (std::size_t i = 0; i < targets.size(); ++i) out.emplace(targets[i], std::move(lists[i]));
  return out;
}

// One row per sweep value (or a single row without a sweep). Run r uses seed
// base_seed ^ r. CF is deterministic and always runs once.
inline std::vector<ExperimentRow> run_experiment(const ExperimentConfig& config,
                                                 const SplitDataset& data) {
  if (config.runs == 0) throw InvalidArgument("runs must be at least 1");
  const std::size_t runs = config.scheme == Scheme::kCf ? 1 : config.runs;
  const ClusterProvider clusterer =
      config.clusterer ? config.clusterer : ClusterProvider(default_clusterer);

  std::vector<std::pair<std::string, std::optional<double>>> points;
  if (config.sweep) {
    for (double v : config.sweep->values) points.emplace_back(config.sweep->parameter, v);
  } else {
    points.emplace_back("none", std::nullopt);
  }
  for (const auto& [name, value] : points) {
    if (value) with_sweep_value(config.params, name, *value).validate();
  }
  config.params.validate();

  RatingMatrix source;
  double test_fraction = 0.0;
  if (config.resplit) {
    auto all = data.train.to_records();
    const auto test_records = data.test.to_records();
    all.insert(all.end(), test_records.begin(), test_records.end());
    source = RatingMatrix(all);
    test_fraction = static_cast<double>(data.test.record_count()) /
                    static_cast<double>(source.record_count());
  }

  std::vector<ExperimentRow> rows(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    rows[p].scheme = config.scheme;
    rows[p].parameter = points[p].first;
    rows[p].value = points[p].second;
    rows[p].runs = runs;
  }

  // Runs are the outer loop so one split, similarity table and Step-1
  // clustering serve every sweep point of that run.
  for (std::size_t r = 0; r < runs; ++r) {
    const std::uint64_t run_seed = config.base_seed ^ static_cast<std::uint64_t>(r);
    SplitDataset resplit_data;
    if (config.resplit) resplit_data = split(source, test_fraction, run_seed);
    const SplitDataset& d = config.resplit ? resplit_data : data;

    SimilarityCache cache(d.train);
    std::map<std::size_t, Clustering> clusterings;  // by k
    for (std::size_t p = 0; p < points.size(); ++p) {
      const auto params = points[p].second
                              ? with_sweep_value(config.params, points[p].first,
                                                 *points[p].second)
                              : config.params;
      const Clustering* clustering = nullptr;
      if (config.scheme == Scheme::kKdpcf) {
        const std::size_t k = params.cluster_count(d.train.user_count());
        auto it = clusterings.find(k);
        if (it == clusterings.end()) {
          it = clusterings.emplace(k, clusterer(d.train, params, run_seed)).first;
        }
        clustering = &it->second;
      }
      const auto lists = recommend_all(config.scheme, d.train, d.test, params, run_seed,
                                       &cache, clustering, config.threads);
      const auto metrics = compute_metrics(lists, d.test);
      rows[p].run_recalls.push_back(metrics.recall);
      rows[p].run_precisions.push_back(metrics.precision);
      rows[p].undefined_metric =
          rows[p].undefined_metric || metrics.recall_undefined || metrics.precision_undefined;
    }
  }

  for (auto& row : rows) {
    std::tie(row.recall, row.stddev_recall) = detail::mean_and_stddev(row.run_recalls);
    std::tie(row.precision, row.stddev_precision) =
        detail::mean_and_stddev(row.run_precisions);
  }
  return rows;
}

}  // namespace kdpcf
