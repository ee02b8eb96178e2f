#pragma once

// Shared fixtures and brute-force oracles. The oracles deliberately avoid the
// library's code paths (plain std::map rows, explicit subset enumeration).

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "kdpcf/kdpcf.hpp"

namespace kdpcf::testing {

using Row = std::map<std::uint32_t, int>;

inline RatingMatrix matrix_from_rows(const std::map<std::uint32_t, Row>& rows) {
  std::vector<RatingRecord> records;
  for (const auto& [u, row] : rows) {
    for (const auto& [i, r] : row) records.push_back({UserId{u}, ItemId{i}, r, 0});
  }
  return RatingMatrix(records);
}

// The five-user privacy example: u1..u4 are users 1..4, the clone ("sibyl")
// is user 5; u3's row is taken before its unknown new rating.
inline constexpr UserId kSibyl{5};

inline std::map<std::uint32_t, Row> five_user_rows() {
  return {
      {1, {{1, 2}, {3, 4}, {5, 5}}},
      {2, {{1, 3}, {2, 4}, {4, 5}, {6, 4}}},
      {3, {{2, 3}, {3, 5}, {4, 4}}},
      {4, {{1, 2}, {2, 3}, {4, 3}, {6, 5}}},
      {5, {{2, 3}, {3, 5}, {4, 4}}},
  };
}

inline RatingMatrix five_users() { return matrix_from_rows(five_user_rows()); }

inline double oracle_mean(const Row& row) {
  double s = 0;
  for (const auto& [i, r] : row) s += r;
  return s / row.size();
}

// Textbook Pearson over the co-rated set with full-profile means; 0 when the
// overlap is empty or a variance factor vanishes.
inline double oracle_pearson(const Row& a, const Row& b) {
  const double ma = oracle_mean(a);
  const double mb = oracle_mean(b);
  double num = 0, da = 0, db = 0;
  for (const auto& [i, r] : a) {
    auto it = b.find(i);
    if (it == b.end()) continue;
    num += (r - ma) * (it->second - mb);
    da += (r - ma) * (r - ma);
    db += (it->second - mb) * (it->second - mb);
  }
  if (da < 1e-12 || db < 1e-12) return 0.0;
  return std::max(-1.0, std::min(1.0, num / std::sqrt(da * db)));
}

// e_j by summing products over every subset.
inline std::vector<double> oracle_elementary(const std::vector<double>& w, std::size_t n) {
  std::vector<double> e(n + 1, 0.0);
  const std::size_t size = w.size();
  for (std::uint64_t mask = 0; mask < (1ULL << size); ++mask) {
    const auto bits = static_cast<std::size_t>(__builtin_popcountll(mask));
    if (bits > n) continue;
    double prod = 1.0;
    for (std::size_t i = 0; i < size; ++i) {
      if (mask >> i & 1ULL) prod *= w[i];
    }
    e[bits] += prod;
  }
  return e;
}

// Weight vector with explicit qualities, candidates 1..n.
inline WeightVector weights_from_qualities(const std::vector<double>& q, double epsilon) {
  SimilarityVector sims{UserId{1000}, {}};
  for (std::size_t i = 0; i < q.size(); ++i) {
    sims.entries.emplace_back(UserId{static_cast<std::uint32_t>(i + 1)}, q[i]);
  }
  return make_weights(sims, epsilon);
}

// Random sparse matrix: `users` users over `items` items, each rating an item
// with probability `density` (at least two items per user).
inline std::map<std::uint32_t, Row> random_rows(Rng& rng, std::uint32_t users,
                                                std::uint32_t items, double density) {
  std::map<std::uint32_t, Row> rows;
  for (std::uint32_t u = 1; u <= users; ++u) {
    Row row;
    for (std::uint32_t i = 1; i <= items; ++i) {
      if (uniform01(rng) < density) row[i] = 1 + static_cast<int>(uniform_index(rng, 5));
    }
    while (row.size() < 2) {
      row[1 + static_cast<std::uint32_t>(uniform_index(rng, items))] =
          1 + static_cast<int>(uniform_index(rng, 5));
    }
    rows[u] = row;
  }
  return rows;
}

inline std::vector<UserId> ids(std::initializer_list<std::uint32_t> xs) {
  std::vector<UserId> out;
  for (auto x : xs) out.push_back(UserId{x});
  return out;
}

}  // namespace kdpcf::testing
