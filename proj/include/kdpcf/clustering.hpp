#pragma once

// k-means over sparse user rows with k-means++ seeding, and the per-target
// category size adjustment (bisect when too large, merge when too small).
//
// Distance between a user and a centroid is 1 - Pearson, with the centroid's
// sparse mean-rating row standing in for the second user, so it lies in
// [0, 2]. Centroid entries are means over the members who rated the item.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kdpcf/common.hpp"
#include "kdpcf/data.hpp"
#include "kdpcf/similarity.hpp"

namespace kdpcf {

struct Centroid {
  // Sorted by item id; values are mean ratings in [1,5].
  std::vector<std::pair<ItemId, double>> ratings;

  double mean() const {
    if (ratings.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [item, value] : ratings) sum += value;
    return sum / static_cast<double>(ratings.size());
  }

  static Centroid from_row(std::span<const RatingEntry> row) {
    Centroid c;
    c.ratings.reserve(row.size());
    for (const auto& e : row) c.ratings.emplace_back(e.item, e.rating);
    return c;
  }
};

inline double user_centroid_distance(const RatingMatrix& matrix, UserId u,
                                     const Centroid& c) {
  const auto row = matrix.row(u);
  const double mean_u = mean_rating(matrix, u);
  const double mean_c = c.mean();
  double cross = 0.0;
  double u_sq = 0.0;
  double c_sq = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < row.size() && j < c.ratings.size()) {
    if (row[i].item < c.ratings[j].first) {
      ++i;
    } else if (c.ratings[j].first < row[i].item) {
      ++j;
    } else {
      const double du = row[i].rating - mean_u;
      const double dc = c.ratings[j].second - mean_c;
      cross += du * dc;
      u_sq += du * du;
      c_sq += dc * dc;
      ++i;
      ++j;
    }
  }
  return 1.0 - detail::correlation_from_sums(cross, u_sq, c_sq);
}

struct Clustering {
  std::vector<Centroid> centroids;
  // Clustered users in ascending id order and their category indices.
  std::vector<UserId> users;
  std::vector<std::size_t> labels;
  std::size_t k = 0;
  // Sum of member-to-centroid distances after every assignment and every
  // centroid update.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;

  std::size_t category_of(UserId u) const {
    auto it = std::lower_bound(users.begin(), users.end(), u);
    if (it == users.end() || *it != u) {
      throw InvalidArgument("user " + std::to_string(u.value) + " is not clustered");
    }
    return labels[static_cast<std::size_t>(it - users.begin())];
  }

  std::vector<UserId> members(std::size_t category) const {
    std::vector<UserId> out;
    for (std::size_t i = 0; i < users.size(); ++i) {
      if (labels[i] == category) out.push_back(users[i]);
    }
    return out;
  }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> out(k, 0);
    for (auto l : labels) ++out[l];
    return out;
  }
};

struct CategoryBounds {
  std::size_t c_min = 0;
  std::size_t c_max = 0;

  // Throws unless c_min < c_max and c_min > neighbor_count.
  void validate(std::size_t neighbor_count) const {
    if (c_min >= c_max) throw InvalidArgument("category bounds need c_min < c_max");
    if (c_min < neighbor_count + 1) {
      throw InvalidArgument("category bounds need c_min > N");
    }
  }
};

struct KMeansOptions {
  std::size_t max_iterations = 50;
};

namespace detail {

// Centroid over the matrix's dense item columns; NaN marks absent entries.
struct DenseCentroid {
  std::vector<double> values;
  double mean = 0.0;
};

inline DenseCentroid dense_from_row(const RatingMatrix& matrix,
                                    std::size_t user_index) {
  DenseCentroid c{std::vector<double>(matrix.item_count(),
                                      std::numeric_limits<double>::quiet_NaN()),
                  matrix.mean_at(user_index)};
  for (const auto& e : matrix.row_at(user_index)) c.values[e.column] = e.rating;
  return c;
}

inline DenseCentroid dense_mean(const RatingMatrix& matrix,
                                std::span<const std::size_t> member_indices) {
  const std::size_t m = matrix.item_count();
  std::vector<double> sum(m, 0.0);
  std::vector<std::uint32_t> count(m, 0);
  for (auto idx : member_indices) {
    for (const auto& e : matrix.row_at(idx)) {
      sum[e.column] += e.rating;
      ++count[e.column];
    }
  }
  DenseCentroid c{std::vector<double>(m, std::numeric_limits<double>::quiet_NaN()),
                  0.0};
  double total = 0.0;
  std::size_t support = 0;
  for (std::size_t col = 0; col < m; ++col) {
    if (count[col] == 0) continue;
    c.values[col] = sum[col] / count[col];
    total += c.values[col];
    ++support;
  }
  c.mean = support == 0 ? 0.0 : total / static_cast<double>(support);
  return c;
}

inline double distance_dense(const RatingMatrix& matrix, std::size_t user_index,
                             const DenseCentroid& c) {
  const double mean_u = matrix.mean_at(user_index);
  double cross = 0.0;
  double u_sq = 0.0;
  double c_sq = 0.0;
  for (const auto& e : matrix.row_at(user_index)) {
    const double v = c.values[e.column];
    if (std::isnan(v)) continue;
    const double du = e.rating - mean_u;
    const double dc = v - c.mean;
    cross += du * dc;
    u_sq += du * du;
    c_sq += dc * dc;
  }
  return 1.0 - correlation_from_sums(cross, u_sq, c_sq);
}

inline double centroid_distance(const DenseCentroid& a, const DenseCentroid& b) {
  double cross = 0.0;
  double a_sq = 0.0;
  double b_sq = 0.0;
  for (std::size_t col = 0; col < a.values.size(); ++col) {
    if (std::isnan(a.values[col]) || std::isnan(b.values[col])) continue;
    const double da = a.values[col] - a.mean;
    const double db = b.values[col] - b.mean;
    cross += da * db;
    a_sq += da * da;
    b_sq += db * db;
  }
  return 1.0 - correlation_from_sums(cross, a_sq, b_sq);
}

inline Centroid to_sparse(const RatingMatrix& matrix, const DenseCentroid& c) {
  Centroid out;
  for (std::size_t col = 0; col < c.values.size(); ++col) {
    if (!std::isnan(c.values[col])) out.ratings.emplace_back(matrix.items()[col], c.values[col]);
  }
  return out;
}

inline std::vector<std::size_t> sorted_indices(const RatingMatrix& matrix,
                                               std::span<const UserId> users,
                                               std::vector<UserId>& sorted_users) {
  sorted_users.assign(users.begin(), users.end());
  std::sort(sorted_users.begin(), sorted_users.end());
  sorted_users.erase(std::unique(sorted_users.begin(), sorted_users.end()),
                     sorted_users.end());
  std::vector<std::size_t> idx;
  idx.reserve(sorted_users.size());
  for (UserId u : sorted_users) idx.push_back(matrix.require_index(u));
  return idx;
}

}  // namespace detail

// k-means++ seeding. Returns the users chosen as centers, in selection order.
// The first is `forced_first` when given, else uniform; each later one is
// drawn with probability D(u)^2 / sum D^2 among users not yet chosen, where
// D(u) is the distance to the nearest chosen center. If every remaining D is
// zero the draw is uniform over the remaining users.
inline std::vector<UserId> kmeanspp_seeds(const RatingMatrix& matrix,
                                          std::span<const UserId> users,
                                          std::size_t k, Rng& rng,
                                          std::optional<UserId> forced_first = {}) {
  std::vector<UserId> pool;
  const auto idx = detail::sorted_indices(matrix, users, pool);
  if (k == 0) throw InvalidArgument("kmeans++: k must be positive");
  if (k > pool.size()) throw InvalidArgument("kmeans++: k exceeds user count");

  std::size_t first = 0;
  if (forced_first) {
    auto it = std::lower_bound(pool.begin(), pool.end(), *forced_first);
    if (it == pool.end() || *it != *forced_first) {
      throw InvalidArgument("kmeans++: forced first center is not in the user set");
    }
    first = static_cast<std::size_t>(it - pool.begin());
  } else {
    first = uniform_index(rng, pool.size());
  }

  std::vector<bool> chosen(pool.size(), false);
  std::vector<double> nearest(pool.size(), std::numeric_limits<double>::infinity());
  std::vector<UserId> seeds{pool[first]};
  chosen[first] = true;
  std::size_t last = first;

  while (seeds.size() < k) {
    const auto center = detail::dense_from_row(matrix, idx[last]);
    double total = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (chosen[i]) continue;
      nearest[i] = std::min(nearest[i], detail::distance_dense(matrix, idx[i], center));
      total += nearest[i] * nearest[i];
    }
    std::size_t pick = pool.size();
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (chosen[i] || nearest[i] == 0.0) continue;
        acc += nearest[i] * nearest[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      std::size_t remaining = uniform_index(rng, pool.size() - seeds.size());
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (chosen[i]) continue;
        if (remaining-- == 0) {
          pick = i;
          break;
        }
      }
    }
    chosen[pick] = true;
    seeds.push_back(pool[pick]);
    last = pick;
  }
  return seeds;
}

inline std::vector<Centroid> kmeanspp_init(const RatingMatrix& matrix,
                                           std::span<const UserId> users,
                                           std::size_t k, Rng& rng,
                                           std::optional<UserId> forced_first = {}) {
  std::vector<Centroid> out;
  for (UserId u : kmeanspp_seeds(matrix, users, k, rng, forced_first)) {
    out.push_back(Centroid::from_row(matrix.row(u)));
  }
  return out;
}

namespace detail {

struct LloydState {
  std::vector<std::size_t> indices;  // matrix rows of the clustered users
  std::vector<DenseCentroid> centroids;
  std::vector<std::size_t> labels;
  std::vector<double> distances;  // to own centroid
};

inline double objective(const LloydState& s) {
  double sum = 0.0;
  for (double d : s.distances) sum += d;
  return sum;
}

inline void refresh_distances(const RatingMatrix& matrix, LloydState& s) {
  for (std::size_t i = 0; i < s.indices.size(); ++i) {
    s.distances[i] = distance_dense(matrix, s.indices[i], s.centroids[s.labels[i]]);
  }
}

// Nearest centroid per user; ties go to the lowest category index.
inline std::vector<std::size_t> assign(const RatingMatrix& matrix,
                                       const LloydState& s) {
  std::vector<std::size_t> labels(s.indices.size(), 0);
  for (std::size_t i = 0; i < s.indices.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < s.centroids.size(); ++c) {
      const double d = distance_dense(matrix, s.indices[i], s.centroids[c]);
      if (d < best) {
        best = d;
        labels[i] = c;
      }
    }
  }
  return labels;
}

// Moves the farthest-assigned user (taken from a category with at least two
// members) into each empty category and seeds it with that user's row.
inline void reseed_empty(const RatingMatrix& matrix, LloydState& s) {
  const std::size_t k = s.centroids.size();
  std::vector<std::size_t> sizes(k, 0);
  for (auto l : s.labels) ++sizes[l];
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t far = s.indices.size();
    double far_distance = -1.0;
    for (std::size_t i = 0; i < s.indices.size(); ++i) {
      if (sizes[s.labels[i]] < 2) continue;
      if (s.distances[i] > far_distance) {
        far_distance = s.distances[i];
        far = i;
      }
    }
    if (far == s.indices.size()) break;
    --sizes[s.labels[far]];
    s.labels[far] = c;
    ++sizes[c];
    s.centroids[c] = dense_from_row(matrix, s.indices[far]);
    s.distances[far] = distance_dense(matrix, s.indices[far], s.centroids[c]);
  }
}

// Replaces each centroid by the per-item mean of its members. Under the
// 1 - Pearson distance the mean is not guaranteed to lower a category's
// cost, so a category keeps its previous centroid when the mean would raise
// it; this keeps the objective non-increasing.
inline void update_centroids(const RatingMatrix& matrix, LloydState& s) {
  const std::size_t k = s.centroids.size();
  std::vector<std::vector<std::size_t>> members(k);
  std::vector<std::vector<std::size_t>> slots(k);
  for (std::size_t i = 0; i < s.indices.size(); ++i) {
    members[s.labels[i]].push_back(s.indices[i]);
    slots[s.labels[i]].push_back(i);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (members[c].empty()) continue;
    auto candidate = dense_mean(matrix, members[c]);
    double old_cost = 0.0;
    double new_cost = 0.0;
    std::vector<double> fresh(members[c].size());
    for (std::size_t j = 0; j < members[c].size(); ++j) {
      old_cost += s.distances[slots[c][j]];
      fresh[j] = distance_dense(matrix, members[c][j], candidate);
      new_cost += fresh[j];
    }
    if (new_cost <= old_cost) {
      s.centroids[c] = std::move(candidate);
      for (std::size_t j = 0; j < members[c].size(); ++j) s.distances[slots[c][j]] = fresh[j];
    }
  }
}

}  // namespace detail

// Lloyd iterations from k-means++ seeds until assignments stop changing or
// options.max_iterations is reached.
inline Clustering kmeans(const RatingMatrix& matrix, std::span<const UserId> users,
                         std::size_t k, Rng& rng,
                         std::optional<UserId> forced_first = {},
                         const KMeansOptions& options = {}) {
  const auto seeds = kmeanspp_seeds(matrix, users, k, rng, forced_first);

  Clustering out;
  out.k = k;
  detail::LloydState s;
  s.indices = detail::sorted_indices(matrix, users, out.users);
  for (UserId u : seeds) {
    s.centroids.push_back(detail::dense_from_row(matrix, matrix.require_index(u)));
  }
  s.labels = detail::assign(matrix, s);
  s.distances.resize(s.indices.size());
  detail::refresh_distances(matrix, s);
  out.objective_trace.push_back(detail::objective(s));

  bool converged = false;
  while (out.iterations < options.max_iterations) {
    ++out.iterations;
    detail::reseed_empty(matrix, s);
    detail::update_centroids(matrix, s);
    out.objective_trace.push_back(detail::objective(s));
    auto next = detail::assign(matrix, s);
    if (next == s.labels) {
      converged = true;
      break;
    }
    s.labels = std::move(next);
    detail::refresh_distances(matrix, s);
    out.objective_trace.push_back(detail::objective(s));
  }
  if (!converged) {
    detail::reseed_empty(matrix, s);
    detail::update_centroids(matrix, s);
  }

  out.labels = s.labels;
  for (const auto& c : s.centroids) out.centroids.push_back(detail::to_sparse(matrix, c));
  return out;
}

inline std::size_t default_cluster_count(std::size_t user_count,
                                         const CategoryBounds& bounds) {
  const std::size_t denom = bounds.c_min + bounds.c_max;
  std::size_t k = (2 * user_count + denom - 1) / denom;
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(user_count, 1));
}

enum class AdjustStatus {
  kInBounds,        // size landed in [c_min, c_max]
  kFallbackCurrent, // round limit hit, current category kept (size > N)
  kFallbackAll,     // round limit hit, whole user population returned
};

inline const char* to_string(AdjustStatus s) {
  switch (s) {
    case AdjustStatus::kInBounds: return "in_bounds";
    case AdjustStatus::kFallbackCurrent: return "fallback_current";
    case AdjustStatus::kFallbackAll: return "fallback_all";
  }
  return "?";
}

struct AdjustedCategory {
  std::vector<UserId> users;  // ascending, contains the target
  AdjustStatus status = AdjustStatus::kInBounds;
  std::size_t rounds = 0;
};

struct AdjustOptions {
  std::size_t neighbor_count = 30;
  std::size_t max_rounds = 20;
  KMeansOptions kmeans;
};

// Resizes the target's category until its size is within bounds. Too large:
// bisect with 2-means seeded at the target and keep the target's half. Too
// small: merge with the category whose centroid is nearest (lowest index on
// ties). After max_rounds the current category is returned if it holds more
// than N users, else the whole clustered population.
inline AdjustedCategory adjust_target_category(const RatingMatrix& matrix,
                                               const Clustering& clustering,
                                               UserId target,
                                               const CategoryBounds& bounds,
                                               Rng& rng,
                                               const AdjustOptions& options = {}) {
  struct Category {
    std::vector<UserId> users;
    detail::DenseCentroid centroid;
  };
  auto indices_of = [&](const std::vector<UserId>& us) {
    std::vector<std::size_t> idx;
    idx.reserve(us.size());
    for (UserId u : us) idx.push_back(matrix.require_index(u));
    return idx;
  };

  std::vector<Category> categories(clustering.k);
  for (std::size_t i = 0; i < clustering.users.size(); ++i) {
    categories[clustering.labels[i]].users.push_back(clustering.users[i]);
  }
  for (auto& c : categories) c.centroid = detail::dense_mean(matrix, indices_of(c.users));
  std::size_t current = clustering.category_of(target);

  AdjustedCategory out;
  while (true) {
    const std::size_t size = categories[current].users.size();
    if (size >= bounds.c_min && size <= bounds.c_max) {
      out.users = categories[current].users;
      out.status = AdjustStatus::kInBounds;
      return out;
    }
    if (out.rounds >= options.max_rounds) break;
    ++out.rounds;

    if (size > bounds.c_max) {
      const auto halves = kmeans(matrix, categories[current].users, 2, rng, target,
                                 options.kmeans);
      const std::size_t own = halves.category_of(target);
      Category kept{halves.members(own), {}};
      Category other{halves.members(1 - own), {}};
      kept.centroid = detail::dense_mean(matrix, indices_of(kept.users));
      other.centroid = detail::dense_mean(matrix, indices_of(other.users));
      categories[current] = std::move(kept);
      categories.push_back(std::move(other));
    } else {
      std::size_t nearest = categories.size();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < categories.size(); ++c) {
        if (c == current || categories[c].users.empty()) continue;
        const double d =
            detail::centroid_distance(categories[current].centroid, categories[c].centroid);
        if (d < best) {
          best = d;
          nearest = c;
        }
      }
      if (nearest == categories.size()) break;
      auto& merged = categories[current].users;
      merged.insert(merged.end(), categories[nearest].users.begin(),
                    categories[nearest].users.end());
      std::sort(merged.begin(), merged.end());
      categories[current].centroid = detail::dense_mean(matrix, indices_of(merged));
      categories.erase(categories.begin() + static_cast<std::ptrdiff_t>(nearest));
      if (nearest < current) --current;
    }
  }

  if (categories[current].users.size() > options.neighbor_count) {
    out.users = categories[current].users;
    out.status = AdjustStatus::kFallbackCurrent;
  } else {
    out.users = clustering.users;
    out.status = AdjustStatus::kFallbackAll;
  }
  return out;
}

// Cache format: one `user_id<TAB>category_index` line per clustered user.
inline void save_assignment(std::ostream& out, const Clustering& clustering) {
  for (std::size_t i = 0; i < clustering.users.size(); ++i) {
    out << clustering.users[i].value << '\t' << clustering.labels[i] << '\n';
  }
}

// Rebuilds a clustering (centroids recomputed as member means) from a cache
// stream. Throws ParseError on malformed lines and InvalidArgument when the
// assignment leaves a category empty or names unknown users.
inline Clustering load_assignment(std::istream& in, const RatingMatrix& matrix) {
  std::map<UserId, std::size_t> assignment;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    std::uint32_t user = 0;
    std::size_t label = 0;
    if (fields.size() != 2 || !detail::parse_integer(fields[0], user) ||
        !detail::parse_integer(fields[1], label)) {
      throw ParseError(line_no, "expected `user_id<TAB>category_index`");
    }
    assignment[UserId{user}] = label;
  }

  Clustering out;
  for (const auto& [u, label] : assignment) {
    matrix.require_index(u);
    out.users.push_back(u);
    out.labels.push_back(label);
    out.k = std::max(out.k, label + 1);
  }
  std::vector<std::vector<std::size_t>> members(out.k);
  for (std::size_t i = 0; i < out.users.size(); ++i) {
    members[out.labels[i]].push_back(matrix.require_index(out.users[i]));
  }
  for (const auto& m : members) {
    if (m.empty()) throw InvalidArgument("cluster cache has an empty category");
    out.centroids.push_back(detail::to_sparse(matrix, detail::dense_mean(matrix, m)));
  }
  return out;
}

}  // namespace kdpcf
