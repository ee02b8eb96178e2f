#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kdpcf/similarity.hpp"

namespace kdpcf {
namespace {

using testing::matrix_from_rows;

TEST(MeanRating, Examples) {
  const auto m = matrix_from_rows({{1, {{1, 3}}}, {2, {{2, 3}, {3, 5}, {4, 4}}},
                                   {3, {{1, 2}, {2, 4}, {3, 5}}}});
  EXPECT_DOUBLE_EQ(mean_rating(m, UserId{1}), 3.0);
  EXPECT_DOUBLE_EQ(mean_rating(m, UserId{2}), 4.0);
  EXPECT_DOUBLE_EQ(mean_rating(m, UserId{3}), 11.0 / 3.0);
  EXPECT_THROW(mean_rating(m, UserId{9}), InvalidArgument);
}

TEST(Pearson, NoOverlapIsZero) {
  const auto m = matrix_from_rows({{1, {{1, 1}, {2, 5}}}, {2, {{3, 1}, {4, 5}}}});
  EXPECT_EQ(pearson(m, UserId{1}, UserId{2}), 0.0);
}

TEST(Pearson, IdenticalCenteredProfiles) {
  const auto m = matrix_from_rows({{1, {{1, 1}, {2, 5}}}, {2, {{1, 1}, {2, 5}}}});
  EXPECT_DOUBLE_EQ(pearson(m, UserId{1}, UserId{2}), 1.0);
}

TEST(Pearson, OppositeProfiles) {
  const auto m = matrix_from_rows({{1, {{1, 2}, {2, 4}}}, {2, {{1, 4}, {2, 2}}}});
  EXPECT_DOUBLE_EQ(pearson(m, UserId{1}, UserId{2}), -1.0);
}

TEST(Pearson, ConstantUserIsZeroNotNan) {
  const auto m = matrix_from_rows({{1, {{1, 2}, {2, 4}, {3, 5}}}, {2, {{1, 3}, {2, 3}, {3, 3}}}});
  EXPECT_EQ(pearson(m, UserId{1}, UserId{2}), 0.0);
}

TEST(Pearson, Errors) {
  const auto m = testing::five_users();
  EXPECT_THROW(pearson(m, UserId{1}, UserId{1}), InvalidArgument);
  EXPECT_THROW(pearson(m, UserId{1}, UserId{42}), InvalidArgument);
}

TEST(Pearson, FiveUserSibylAgainstEveryUser) {
  const auto rows = testing::five_user_rows();
  const auto m = testing::five_users();
  for (std::uint32_t v = 1; v <= 4; ++v) {
    EXPECT_NEAR(pearson(m, testing::kSibyl, UserId{v}),
                testing::oracle_pearson(rows.at(5), rows.at(v)), 1e-12);
  }
  // frozen from the oracle
  EXPECT_DOUBLE_EQ(pearson(m, testing::kSibyl, UserId{3}), 1.0);
  EXPECT_DOUBLE_EQ(pearson(m, testing::kSibyl, UserId{1}), 1.0);
  EXPECT_EQ(pearson(m, testing::kSibyl, UserId{2}), 0.0);
  EXPECT_NEAR(pearson(m, testing::kSibyl, UserId{4}), 0.70710678118654752, 1e-12);
}

TEST(Pearson, MatchesOracleAndIsSymmetricOnRandomMatrices) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto rows = testing::random_rows(rng, 15, 12, 0.4);
    const auto m = matrix_from_rows(rows);
    for (std::uint32_t u = 1; u <= 15; ++u) {
      for (std::uint32_t v = 1; v <= 15; ++v) {
        if (u == v) continue;
        const double s = pearson(m, UserId{u}, UserId{v});
        EXPECT_NEAR(s, testing::oracle_pearson(rows.at(u), rows.at(v)), 1e-12);
        EXPECT_EQ(s, pearson(m, UserId{v}, UserId{u}));
        EXPECT_LE(std::abs(s), 1.0);
        EXPECT_FALSE(std::isnan(s));
      }
    }
  }
}

TEST(Pearson, TranslationInvariant) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    testing::Row a, b;
    for (std::uint32_t i = 1; i <= 8; ++i) {
      if (uniform01(rng) < 0.6) a[i] = 1 + static_cast<int>(uniform_index(rng, 3));
      if (uniform01(rng) < 0.6) b[i] = 1 + static_cast<int>(uniform_index(rng, 3));
    }
    if (a.empty() || b.empty()) continue;
    auto shifted = [](testing::Row r) {
      for (auto& [i, x] : r) x += 2;
      return r;
    };
    const auto m = matrix_from_rows({{1, a}, {2, b}});
    const auto ms = matrix_from_rows({{1, shifted(a)}, {2, shifted(b)}});
    EXPECT_NEAR(pearson(m, UserId{1}, UserId{2}), pearson(ms, UserId{1}, UserId{2}), 1e-12);
  }
}

TEST(SimilarityVector, SelfAndEmptyCandidates) {
  const auto m = testing::five_users();
  EXPECT_TRUE(similarity_vector(m, UserId{1}, testing::ids({1})).entries.empty());
  EXPECT_TRUE(similarity_vector(m, UserId{1}, {}).entries.empty());
}

TEST(SimilarityVector, FiveUserSibyl) {
  const auto m = testing::five_users();
  const auto sv = similarity_vector(m, testing::kSibyl, testing::ids({1, 2, 3, 4}));
  EXPECT_EQ(sv.target, testing::kSibyl);
  EXPECT_EQ(sv.size(), 4u);
  EXPECT_DOUBLE_EQ(sv.at(UserId{3}), 1.0);
  EXPECT_EQ(sv.find(testing::kSibyl), nullptr);
  EXPECT_THROW(sv.at(UserId{9}), InvalidArgument);
}

TEST(SimilarityVector, UnknownCandidatePropagates) {
  const auto m = testing::five_users();
  EXPECT_THROW(similarity_vector(m, UserId{1}, testing::ids({2, 77})), InvalidArgument);
}

TEST(SimilarityCache, NeverChangesValues) {
  Rng rng(5);
  const auto m = matrix_from_rows(testing::random_rows(rng, 25, 20, 0.3));
  SimilarityCache cache(m);
  const auto& users = m.users();
  for (int pass = 0; pass < 2; ++pass) {
    for (UserId u : users) {
      const auto cached = similarity_vector(m, u, users, &cache);
      const auto direct = similarity_vector(m, u, users);
      EXPECT_EQ(cached.entries, direct.entries);
    }
  }
}

}  // namespace
}  // namespace kdpcf
