#pragma once

// Rating ingestion, the sparse rating matrix and train/test splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kdpcf/common.hpp"

namespace kdpcf {

struct RatingRecord {
  UserId user;
  ItemId item;
  int rating = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

// One stored rating in a user row. `column` is the dense index of `item`
// within RatingMatrix::items().
struct RatingEntry {
  ItemId item;
  std::uint32_t column = 0;
  int rating = 0;
};

// Sparse user x item matrix. Rows are sorted by item id, users and items are
// kept in ascending id order. Unrated cells are simply absent.
class RatingMatrix {
 public:
  RatingMatrix() = default;

  // Duplicate (user, item) pairs keep the last occurrence.
  explicit RatingMatrix(std::span<const RatingRecord> records) {
    std::vector<RatingRecord> sorted(records.begin(), records.end());
    for (const auto& r : sorted) check_rating(r);
    // stable so the later duplicate stays behind the earlier one
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const RatingRecord& a, const RatingRecord& b) {
                       return std::pair(a.user, a.item) <
                              std::pair(b.user, b.item);
                     });
    std::vector<RatingRecord> unique;
    unique.reserve(sorted.size());
    for (const auto& r : sorted) {
      if (!unique.empty() && unique.back().user == r.user &&
          unique.back().item == r.item) {
        unique.back() = r;
      } else {
        unique.push_back(r);
      }
    }

    for (const auto& r : unique) items_.push_back(r.item);
    std::sort(items_.begin(), items_.end());
    items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
    for (std::size_t c = 0; c < items_.size(); ++c) {
      item_index_.emplace(items_[c], static_cast<std::uint32_t>(c));
    }

    for (const auto& r : unique) {
      if (users_.empty() || users_.back() != r.user) {
        user_index_.emplace(r.user, users_.size());
        users_.push_back(r.user);
        rows_.emplace_back();
      }
      rows_.back().push_back({r.item, item_index_.at(r.item), r.rating});
    }

    means_.reserve(rows_.size());
    for (const auto& row : rows_) {
      double sum = 0.0;
      for (const auto& e : row) sum += e.rating;
      means_.push_back(sum / static_cast<double>(row.size()));
    }
    record_count_ = unique.size();
  }

  std::size_t user_count() const { return users_.size(); }
  std::size_t item_count() const { return items_.size(); }
  std::size_t record_count() const { return record_count_; }
  bool empty() const { return record_count_ == 0; }

  const std::vector<UserId>& users() const { return users_; }
  const std::vector<ItemId>& items() const { return items_; }

  bool contains(UserId u) const { return user_index_.contains(u); }

  std::optional<std::size_t> index_of(UserId u) const {
    if (auto it = user_index_.find(u); it != user_index_.end()) {
      return it->second;
    }
    return std::nullopt;
  }

  std::optional<std::uint32_t> column_of(ItemId i) const {
    if (auto it = item_index_.find(i); it != item_index_.end()) {
      return it->second;
    }
    return std::nullopt;
  }

  // Throws InvalidArgument for unknown users.
  std::size_t require_index(UserId u) const {
    if (auto idx = index_of(u)) return *idx;
    throw InvalidArgument("unknown user " + std::to_string(u.value));
  }

  std::span<const RatingEntry> row(UserId u) const {
    return rows_[require_index(u)];
  }
  std::span<const RatingEntry> row_at(std::size_t index) const {
    return rows_[index];
  }

  // Mean over the user's full rated set.
  double mean_at(std::size_t index) const { return means_[index]; }

  std::optional<int> rating(UserId u, ItemId i) const {
    auto idx = index_of(u);
    if (!idx) return std::nullopt;
    const auto& row = rows_[*idx];
    auto it = std::lower_bound(
        row.begin(), row.end(), i,
        [](const RatingEntry& e, ItemId item) { return e.item < item; });
    if (it == row.end() || it->item != i) return std::nullopt;
    return it->rating;
  }

  bool has_rated(UserId u, ItemId i) const { return rating(u, i).has_value(); }

  // Records in (user, item) order with zero timestamps.
  std::vector<RatingRecord> to_records() const {
    std::vector<RatingRecord> out;
    out.reserve(record_count_);
    for (std::size_t u = 0; u < users_.size(); ++u) {
      for (const auto& e : rows_[u]) out.push_back({users_[u], e.item, e.rating, 0});
    }
    return out;
  }

 private:
  static void check_rating(const RatingRecord& r) {
    if (r.rating < 1 || r.rating > 5) {
      throw InvalidArgument("rating out of range [1,5]: " +
                            std::to_string(r.rating));
    }
    if (r.user.value == 0 || r.item.value == 0) {
      throw InvalidArgument("user and item ids must be positive");
    }
  }

  std::vector<UserId> users_;
  std::vector<ItemId> items_;
  std::vector<std::vector<RatingEntry>> rows_;
  std::vector<double> means_;
  std::unordered_map<UserId, std::size_t> user_index_;
  std::unordered_map<ItemId, std::uint32_t> item_index_;
  std::size_t record_count_ = 0;
};

namespace detail {

template <class T>
bool parse_integer(std::string_view token, T& out) {
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc{} && ptr == token.data() + token.size();
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

}  // namespace detail

// Parses MovieLens u.data style text: four integer fields per line separated
// by tabs or runs of spaces. Blank lines are skipped.
inline std::vector<RatingRecord> parse_movielens(std::istream& in) {
  std::vector<RatingRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != 4) {
      throw ParseError(line_no, "expected 4 fields, got " +
                                    std::to_string(fields.size()));
    }
    std::uint32_t user = 0;
    std::uint32_t item = 0;
    int rating = 0;
    std::int64_t timestamp = 0;
    if (!detail::parse_integer(fields[0], user) ||
        !detail::parse_integer(fields[1], item) ||
        !detail::parse_integer(fields[2], rating) ||
        !detail::parse_integer(fields[3], timestamp)) {
      throw ParseError(line_no, "non-integer field");
    }
    if (user == 0 || item == 0) {
      throw ParseError(line_no, "user and item ids must be positive");
    }
    if (rating < 1 || rating > 5) {
      throw RangeError(line_no, "rating " + std::to_string(rating) +
                                    " outside [1,5]");
    }
    records.push_back({UserId{user}, ItemId{item}, rating, timestamp});
  }
  return records;
}

inline std::vector<RatingRecord> parse_movielens(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_movielens(in);
}

inline RatingMatrix build_matrix(std::span<const RatingRecord> records) {
  return RatingMatrix(records);
}

inline void write_records(std::ostream& out, const RatingMatrix& matrix) {
  for (const auto& r : matrix.to_records()) {
    out << r.user.value << '\t' << r.item.value << '\t' << r.rating << '\t'
        << r.timestamp << '\n';
  }
}

struct SplitDataset {
  RatingMatrix train;
  RatingMatrix test;
  std::uint64_t seed = 0;
};

// Global per-record split. Exactly round(test_fraction * n) records go to the
// test side, chosen uniformly. A user whose every rating landed in test gets
// its smallest-item record moved back to train; to keep the test size exact a
// random train record of a user with at least two train ratings is moved to
// test in exchange.
inline SplitDataset split(const RatingMatrix& matrix, double test_fraction,
                          std::uint64_t seed) {
  if (matrix.empty()) throw InvalidArgument("split: matrix is empty");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("split: test fraction must lie in (0,1)");
  }
  const auto records = matrix.to_records();
  const std::size_t n = records.size();
  const auto test_target =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
  std::vector<bool> in_test(n, false);
  for (std::size_t i = 0; i < test_target; ++i) in_test[order[i]] = true;

  // records are grouped by user and sorted by item within a user
  std::unordered_map<UserId, std::size_t> train_count;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_test[i]) ++train_count[records[i].user];
  }
  std::size_t moved_back = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && records[end].user == records[start].user) ++end;
    if (train_count[records[start].user] == 0) {
      in_test[start] = false;
      train_count[records[start].user] = 1;
      ++moved_back;
    }
    start = end;
  }
  while (moved_back > 0) {
    std::vector<std::size_t> donors;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_test[i] && train_count[records[i].user] >= 2) donors.push_back(i);
    }
    if (donors.empty()) break;
    const std::size_t pick = donors[uniform_index(rng, donors.size())];
    in_test[pick] = true;
    --train_count[records[pick].user];
    --moved_back;
  }

  std::vector<RatingRecord> train;
  std::vector<RatingRecord> test;
  for (std::size_t i = 0; i < n; ++i) {
    (in_test[i] ? test : train).push_back(records[i]);
  }
  return {RatingMatrix(train), RatingMatrix(test), seed};
}

}  // namespace kdpcf
