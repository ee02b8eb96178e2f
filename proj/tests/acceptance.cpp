// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Dataset-backed criteria read MovieLens 100K from $KDPCF_DATA_DIR
// (u.data inside it) or the path baked in at configure time.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "kdpcf/kdpcf.hpp"
#include "stats.hpp"

using namespace kdpcf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::optional<RatingMatrix> load_movielens() {
  std::string path = KDPCF_MOVIELENS;
  if (const char* dir = std::getenv("KDPCF_DATA_DIR"); dir != nullptr && *dir != '\0') {
    path = (std::filesystem::path(dir) / "u.data").string();
  }
  std::ifstream in(path);
  if (!in) return std::nullopt;
  return build_matrix(parse_movielens(in));
}

// Qualities drawn from a random small rating matrix: target 1 against
// `candidates` other users.
WeightVector matrix_fixture(Rng& rng, std::size_t candidates, double epsilon) {
  const auto rows =
      testing::random_rows(rng, static_cast<std::uint32_t>(candidates + 1), 10, 0.5);
  const auto m = testing::matrix_from_rows(rows);
  std::vector<UserId> others;
  for (UserId v : m.users()) {
    if (v != UserId{1}) others.push_back(v);
  }
  return make_weights(similarity_vector(m, UserId{1}, others), epsilon);
}

Outcome sampler_exactness() {
  const auto start = Clock::now();
  Rng rng(1001);
  double worst = 0.0;
  std::size_t fixtures = 0;
  for (std::size_t size : {2u, 4u, 6u, 8u}) {
    for (std::size_t n = 1; n <= std::min<std::size_t>(4, size); ++n) {
      for (double eps : {0.0, 0.5, 1.0, 2.0}) {
        const auto wv = matrix_fixture(rng, size, eps);
        const SequentialSetSampler sampler(wv, n);
        std::map<std::vector<UserId>, std::size_t> counts;
        const std::size_t draws = 100000;
        for (std::size_t d = 0; d < draws; ++d) ++counts[sampler.sample(rng).members];
        worst = std::max(worst, testing::total_variation(counts, draws,
                                                         enumerate_distribution(wv, n)));
        ++fixtures;
      }
    }
  }
  const double secs = seconds_since(start);
  std::ostringstream d;
  d << "max TV " << worst << " over " << fixtures << " fixtures (limit 0.02), " << secs
    << " s (limit 30)";
  return {worst < 0.02 && secs < 30.0, d.str()};
}

Outcome factorization_identity() {
  Rng rng(1002);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t size = 1 + uniform_index(rng, 40);
    std::vector<double> q(size);
    for (double& x : q) x = uniform01(rng);
    const double eps = 4.0 * uniform01(rng);
    const auto wv = testing::weights_from_qualities(q, eps);
    double qs = 0.0;
    double prod = 1.0;
    for (std::size_t i = 0; i < size; ++i) {
      if (uniform01(rng) < 0.5) continue;
      qs += wv.qualities[i];
      prod *= wv.weight(i);
    }
    const double direct = std::exp(eps * qs / 2.0);
    worst = std::max(worst, std::abs(direct - prod) / direct);
  }
  std::ostringstream d;
  d << "max relative error " << worst << " over 1000 fixtures (limit 1e-12)";
  return {worst <= 1e-12, d.str()};
}

Outcome dp_bound() {
  Rng rng(1003);
  double worst_margin = -1e300;
  std::size_t audits = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const std::size_t candidates = 2 + uniform_index(rng, 7);
    auto rows = testing::random_rows(rng, static_cast<std::uint32_t>(candidates + 1), 10, 0.5);
    auto moved = rows;
    const auto victim = static_cast<std::uint32_t>(2 + uniform_index(rng, candidates));
    for (auto& [item, r] : moved[victim]) r = 1 + static_cast<int>(uniform_index(rng, 5));
    const auto a = testing::matrix_from_rows(rows);
    const auto b = testing::matrix_from_rows(moved);
    std::vector<UserId> others;
    for (UserId v : a.users()) {
      if (v != UserId{1}) others.push_back(v);
    }
    const auto sa = similarity_vector(a, UserId{1}, others);
    const auto sb = similarity_vector(b, UserId{1}, others);
    for (double eps : {0.5, 1.0, 2.0}) {
      for (std::size_t n = 1; n <= std::min<std::size_t>(4, candidates); ++n) {
        const double leak = audit_dp(make_weights(sa, eps), make_weights(sb, eps), n);
        worst_margin = std::max(worst_margin, leak - eps);
        ++audits;
      }
    }
  }
  std::ostringstream d;
  d << audits << " audits over 100 adjacent pairs, max(leak - eps) " << worst_margin
    << " (limit 1e-9)";
  return {worst_margin <= 1e-9, d.str()};
}

Outcome em_limit() {
  Rng rng(1004);
  std::size_t worst_hits = 1000;
  for (std::size_t n = 1; n <= 4; ++n) {
    // distinct |Sim|, shuffled over the ids
    std::vector<double> q{0.95, 0.85, 0.75, 0.65, 0.55, 0.45, 0.35, 0.25};
    std::shuffle(q.begin(), q.end(), rng);
    SimilarityVector sims{UserId{100}, {}};
    for (std::size_t i = 0; i < q.size(); ++i) {
      sims.entries.emplace_back(UserId{static_cast<std::uint32_t>(i + 1)},
                                i % 2 == 0 ? q[i] : -q[i]);
    }
    const auto top = top_neighbors(sims, n);
    const auto wv = make_weights(sims, 200.0);
    std::size_t hits = 0;
    for (int d = 0; d < 1000; ++d) hits += sample_neighbor_set(wv, n, rng).members == top;
    worst_hits = std::min(worst_hits, hits);
  }
  const auto flat = testing::weights_from_qualities({0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4}, 0.0);
  const auto counts = testing::draw_counts(flat, 2, 100000, rng);
  std::vector<std::size_t> observed;
  for (const auto& o : enumerate_distribution(flat, 2).support) {
    auto it = counts.find(o.members);
    observed.push_back(it == counts.end() ? 0 : it->second);
  }
  const double p = testing::uniform_chi_square_p(observed);
  std::ostringstream d;
  d << "eps=200 top-N hits min " << worst_hits << "/1000 (limit 999); eps=0 chi-square p "
    << p << " (limit 0.01)";
  return {worst_hits >= 999 && p > 0.01, d.str()};
}

Outcome budget_accounting(const RatingMatrix& ml) {
  const KdpcfParams params;
  Rng rng(1005);
  const auto clustering = cluster_users(ml, params, rng);
  bool ok = true;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < ml.users().size(); i += 47) {
    const UserId u = ml.users()[i];
    PrivacyAccountant k_acct;
    run_kdpcf(ml, u, params, clustering, rng, &k_acct);
    ok = ok && k_acct.invocations() == 1 && k_acct.spends()[0] == params.epsilon;
    PrivacyAccountant d_acct;
    run_dpcf(ml, u, params.neighbors, params.m, params.epsilon, rng, &d_acct);
    ok = ok && d_acct.invocations() == params.neighbors;
    for (double e : d_acct.spends()) {
      ok = ok && std::abs(e - params.epsilon / static_cast<double>(params.neighbors)) < 1e-15;
    }
    ok = ok && std::abs(d_acct.total() - params.epsilon) < 1e-12;
    ++checked;
  }
  std::ostringstream d;
  d << checked << " targets: KDPCF 1 draw at eps, DPCF N draws at eps/N";
  return {ok, d.str()};
}

ExperimentRow experiment_row(Scheme scheme, const SplitDataset& data, std::size_t runs,
                             std::optional<Sweep> sweep, std::vector<ExperimentRow>* all) {
  ExperimentConfig config;
  config.scheme = scheme;
  config.runs = runs;
  config.base_seed = 2024;
  config.sweep = std::move(sweep);
  auto rows = run_experiment(config, data);
  if (all != nullptr) *all = rows;
  return rows.front();
}

double pooled_se(const ExperimentRow& a, const ExperimentRow& b, bool recall) {
  const double sa = recall ? a.stddev_recall : a.stddev_precision;
  const double sb = recall ? b.stddev_recall : b.stddev_precision;
  return std::sqrt(sa * sa / static_cast<double>(a.runs) + sb * sb / static_cast<double>(b.runs));
}

Outcome qualitative_ordering(const SplitDataset& data) {
  const auto start = Clock::now();
  const auto cf = experiment_row(Scheme::kCf, data, 20, std::nullopt, nullptr);
  const auto dp = experiment_row(Scheme::kDpcf, data, 20, std::nullopt, nullptr);
  const auto kd = experiment_row(Scheme::kKdpcf, data, 20, std::nullopt, nullptr);
  const double secs = seconds_since(start);
  const double se_r = pooled_se(kd, dp, true);
  const double se_p = pooled_se(kd, dp, false);
  const bool order = cf.recall > kd.recall && kd.recall > dp.recall &&
                     cf.precision > kd.precision && kd.precision > dp.precision;
  const bool gap = kd.recall - dp.recall > 2 * se_r && kd.precision - dp.precision > 2 * se_p;
  std::ostringstream d;
  d << std::setprecision(5) << "recall CF " << cf.recall << " KDPCF " << kd.recall << " DPCF "
    << dp.recall << "; precision CF " << cf.precision << " KDPCF " << kd.precision << " DPCF "
    << dp.precision << "; KDPCF-DPCF recall gap " << (kd.recall - dp.recall) / se_r
    << " SE, precision gap " << (kd.precision - dp.precision) / se_p << " SE; " << secs
    << " s (limit 600)";
  return {order && gap && secs < 600.0, d.str()};
}

// Non-decreasing (sign +1) or non-increasing (sign -1) along the rows,
// allowing `inversions` steps that go the wrong way by at most 1 pooled SE.
bool trend_holds(const std::vector<ExperimentRow>& rows, bool recall, int sign,
                 int inversions) {
  int used = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double a = recall ? rows[i - 1].recall : rows[i - 1].precision;
    const double b = recall ? rows[i].recall : rows[i].precision;
    const double step = sign * (b - a);
    if (step >= 0) continue;
    if (-step <= pooled_se(rows[i - 1], rows[i], recall) && used < inversions) {
      ++used;
      continue;
    }
    return false;
  }
  return true;
}

Outcome trend_shapes(const SplitDataset& data) {
  bool ok = true;
  std::ostringstream d;
  d << std::setprecision(4);
  for (Scheme s : {Scheme::kCf, Scheme::kDpcf, Scheme::kKdpcf}) {
    std::vector<ExperimentRow> rows;
    experiment_row(s, data, 20, Sweep{"m", {10, 30, 50}}, &rows);
    const bool r = trend_holds(rows, true, +1, 0);
    const bool p = trend_holds(rows, false, -1, 0);
    ok = ok && r && p;
    d << to_string(s) << " m: recall";
    for (const auto& row : rows) d << ' ' << row.recall;
    d << " precision";
    for (const auto& row : rows) d << ' ' << row.precision;
    d << (r && p ? " ok; " : " VIOLATED; ");
  }
  for (Scheme s : {Scheme::kDpcf, Scheme::kKdpcf}) {
    std::vector<ExperimentRow> rows;
    experiment_row(s, data, 20, Sweep{"epsilon", {0.2, 0.6, 1.0}}, &rows);
    const bool r = trend_holds(rows, true, +1, 1);
    ok = ok && r;
    d << to_string(s) << " eps: recall";
    for (const auto& row : rows) d << ' ' << row.recall;
    d << (r ? " ok; " : " VIOLATED; ");
  }
  return {ok, d.str()};
}

Outcome adjustment_contract(const RatingMatrix& ml) {
  const KdpcfParams params;
  const auto bounds = params.bounds();
  Rng rng(1008);
  const auto clustering = cluster_users(ml, params, rng);
  std::vector<UserId> users = ml.users();
  std::shuffle(users.begin(), users.end(), rng);
  users.resize(100);
  bool ok = true;
  std::size_t in_bounds = 0, fallback = 0;
  for (UserId u : users) {
    const auto c = adjust_target_category(ml, clustering, u, bounds, rng,
                                          {params.neighbors, params.max_rounds, {}});
    ok = ok && std::binary_search(c.users.begin(), c.users.end(), u);
    ok = ok && c.users.size() > params.neighbors;
    if (c.status == AdjustStatus::kInBounds) {
      ok = ok && c.users.size() >= bounds.c_min && c.users.size() <= bounds.c_max;
      ++in_bounds;
    } else {
      ++fallback;
    }
  }
  std::ostringstream d;
  d << "100 targets: " << in_bounds << " in [" << bounds.c_min << ", " << bounds.c_max
    << "], " << fallback << " documented fallback";
  return {ok, d.str()};
}

Outcome clustering_sanity(const RatingMatrix& ml) {
  const KdpcfParams params;
  const std::size_t k = params.cluster_count(ml.user_count());
  std::size_t violations = 0;
  std::size_t steps = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto c = kmeans(ml, ml.users(), k, rng);
    for (std::size_t i = 1; i < c.objective_trace.size(); ++i) {
      ++steps;
      if (c.objective_trace[i] > c.objective_trace[i - 1] + 1e-9) ++violations;
    }
  }
  std::ostringstream d;
  d << "50 seeds, k=" << k << ", " << steps << " trace steps, " << violations
    << " increases beyond 1e-9";
  return {violations == 0, d.str()};
}

}  // namespace

int main() {
  std::cout << std::setprecision(6);
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& body) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " -- "
              << o.detail << " [" << seconds_since(start) << " s]" << std::endl;
  };

  report(1, "sampler exactness", sampler_exactness);
  report(2, "factorization identity", factorization_identity);
  report(3, "DP bound", dp_bound);
  report(4, "EM limits", em_limit);

  const auto ml = load_movielens();
  const char* missing = "MovieLens 100K u.data not found";
  auto with_data = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!ml) return {false, missing};
      return fn(*ml);
    };
  };
  std::optional<SplitDataset> data;
  if (ml) data = split(*ml, 0.2, 42);
  auto with_split = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!data) return {false, missing};
      return fn(*data);
    };
  };

  report(5, "budget accounting", with_data(budget_accounting));
  report(6, "qualitative ordering", with_split(qualitative_ordering));
  report(7, "trend shapes", with_split(trend_shapes));
  report(8, "adjustment contract", with_data(adjustment_contract));
  report(9, "clustering sanity", with_data(clustering_sanity));

  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << std::endl;
  return failures == 0 ? 0 : 1;
}
