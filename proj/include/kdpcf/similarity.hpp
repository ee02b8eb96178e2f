#pragma once

// Pearson correlation between sparse rating rows.
//
// Means are taken over each user's full rated set, while the sums run over
// the co-rated items only. An empty overlap or a zero variance factor on the
// overlap yields 0 ("no information"), never NaN.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "kdpcf/common.hpp"
#include "kdpcf/data.hpp"

namespace kdpcf {

inline constexpr double kVarianceEpsilon = 1e-12;

namespace detail {

// Finishes a Pearson evaluation from its three running sums.
inline double correlation_from_sums(double cross, double left_sq,
                                    double right_sq) {
  if (left_sq <= kVarianceEpsilon || right_sq <= kVarianceEpsilon) return 0.0;
  const double value = cross / std::sqrt(left_sq * right_sq);
  return std::clamp(value, -1.0, 1.0);
}

// Merge over two item-sorted rows.
inline double pearson_rows(std::span<const RatingEntry> a, double mean_a,
                           std::span<const RatingEntry> b, double mean_b) {
  double cross = 0.0;
  double a_sq = 0.0;
  double b_sq = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].item < b[j].item) {
      ++i;
    } else if (b[j].item < a[i].item) {
      ++j;
    } else {
      const double da = a[i].rating - mean_a;
      const double db = b[j].rating - mean_b;
      cross += da * db;
      a_sq += da * da;
      b_sq += db * db;
      ++i;
      ++j;
    }
  }
  return correlation_from_sums(cross, a_sq, b_sq);
}

}  // namespace detail

inline double mean_rating(const RatingMatrix& matrix, UserId u) {
  return matrix.mean_at(matrix.require_index(u));
}

inline double pearson(const RatingMatrix& matrix, UserId u, UserId v) {
  if (u == v) throw InvalidArgument("pearson: u and v must differ");
  const std::size_t iu = matrix.require_index(u);
  const std::size_t iv = matrix.require_index(v);
  return detail::pearson_rows(matrix.row_at(iu), matrix.mean_at(iu),
                              matrix.row_at(iv), matrix.mean_at(iv));
}

// Similarities of one target user to a set of other users, sorted by user id.
struct SimilarityVector {
  UserId target;
  std::vector<std::pair<UserId, double>> entries;

  std::size_t size() const { return entries.size(); }

  const double* find(UserId v) const {
    auto it = std::lower_bound(
        entries.begin(), entries.end(), v,
        [](const auto& e, UserId id) { return e.first < id; });
    if (it == entries.end() || it->first != v) return nullptr;
    return &it->second;
  }

  double at(UserId v) const {
    if (const double* s = find(v)) return *s;
    throw InvalidArgument("no similarity entry for user " +
                          std::to_string(v.value));
  }
};

// Memoized pairwise similarities over one matrix, keyed by unordered pair.
// Cells are atomics so concurrent fills are safe; every writer stores the
// same value for a given pair.
class SimilarityCache {
 public:
  explicit SimilarityCache(const RatingMatrix& matrix)
      : matrix_(&matrix),
        n_(matrix.user_count()),
        cells_(n_ * (n_ + 1) / 2) {
    for (auto& c : cells_) c.store(kUnset, std::memory_order_relaxed);
  }

  const RatingMatrix& matrix() const { return *matrix_; }

  double by_index(std::size_t a, std::size_t b) const {
    if (a == b) throw InvalidArgument("pearson: u and v must differ");
    if (a > b) std::swap(a, b);
    auto& cell = cells_[b * (b + 1) / 2 + a];
    double value = cell.load(std::memory_order_relaxed);
    if (std::isnan(value)) {
      value = detail::pearson_rows(matrix_->row_at(a), matrix_->mean_at(a),
                                   matrix_->row_at(b), matrix_->mean_at(b));
      cell.store(value, std::memory_order_relaxed);
    }
    return value;
  }

  double operator()(UserId u, UserId v) const {
    return by_index(matrix_->require_index(u), matrix_->require_index(v));
  }

  void fill_all() const {
    for (std::size_t b = 0; b < n_; ++b) {
      for (std::size_t a = 0; a < b; ++a) by_index(a, b);
    }
  }

 private:
  static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

  const RatingMatrix* matrix_;
  std::size_t n_;
  mutable std::vector<std::atomic<double>> cells_;
};

// Entries for every candidate except u itself. `cache` is optional and never
// changes the values.
inline SimilarityVector similarity_vector(const RatingMatrix& matrix, UserId u,
                                          std::span<const UserId> candidates,
                                          const SimilarityCache* cache = nullptr) {
  const std::size_t iu = matrix.require_index(u);
  SimilarityVector out{u, {}};
  out.entries.reserve(candidates.size());
  for (UserId v : candidates) {
    if (v == u) continue;
    const std::size_t iv = matrix.require_index(v);
    const double s = cache != nullptr
                         ? cache->by_index(iu, iv)
                         : detail::pearson_rows(matrix.row_at(iu), matrix.mean_at(iu),
                                                matrix.row_at(iv), matrix.mean_at(iv));
    out.entries.emplace_back(v, s);
  }
  std::sort(out.entries.begin(), out.entries.end());
  out.entries.erase(std::unique(out.entries.begin(), out.entries.end(),
                                [](const auto& a, const auto& b) {
                                  return a.first == b.first;
                                }),
                    out.entries.end());
  return out;
}

}  // namespace kdpcf
