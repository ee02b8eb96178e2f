// kdpcf command-line front end.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kdpcf/kdpcf.hpp"
#include "kdpcf/report.hpp"

namespace fs = std::filesystem;
using namespace kdpcf;

namespace {

std::string default_input() {
  if (const char* dir = std::getenv("KDPCF_DATA_DIR"); dir != nullptr && *dir != '\0') {
    return (fs::path(dir) / "u.data").string();
  }
  return "data/ml-100k/u.data";
}

RatingMatrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return build_matrix(parse_movielens(in));
  } catch (const ParseError& e) {
    throw Error(path + ": " + e.what());
  }
}

void write_file(const std::string& path, const RatingMatrix& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_records(out, m);
}

// Parameters shared by recommend and experiment.
struct ParamFlags {
  std::size_t m = 30;
  std::size_t neighbors = 30;
  double epsilon = 1.0;
  std::optional<std::size_t> c_min;
  std::optional<std::size_t> c_max;
  std::optional<std::size_t> k;
  double subsample_p = 1.0;
  std::size_t max_iterations = 50;
  std::size_t max_rounds = 20;

  void attach(CLI::App& app) {
    app.add_option("-m,--m", m, "recommendation list length")->capture_default_str();
    app.add_option("-N,--neighbors", neighbors, "neighbor count")->capture_default_str();
    app.add_option("-e,--epsilon", epsilon, "privacy budget")->capture_default_str();
    app.add_option("--c-min", c_min, "minimum category size (default 5N)");
    app.add_option("--c-max", c_max, "maximum category size (default 10N)");
    app.add_option("-k,--k", k, "cluster count (default ceil(2|U|/(c_min+c_max)))");
    app.add_option("--subsample-p", subsample_p, "Bernoulli keep probability for U*")
        ->capture_default_str();
    app.add_option("--max-iterations", max_iterations, "k-means iteration cap")
        ->capture_default_str();
    app.add_option("--max-rounds", max_rounds, "category adjustment round cap")
        ->capture_default_str();
  }

  KdpcfParams params() const {
    KdpcfParams p;
    p.m = m;
    p.neighbors = neighbors;
    p.epsilon = epsilon;
    p.c_min = c_min;
    p.c_max = c_max;
    p.k = k;
    p.subsample_p = subsample_p;
    p.max_iterations = max_iterations;
    p.max_rounds = max_rounds;
    p.validate();
    return p;
  }
};

// Loads a cached Step-1 clustering or computes and stores it. The file name
// carries the seed and k so different runs never collide.
Clustering cached_clustering(const std::string& prefix, const RatingMatrix& train,
                             const KdpcfParams& params, std::uint64_t run_seed) {
  const std::size_t k = params.cluster_count(train.user_count());
  std::ostringstream name;
  name << prefix << ".s" << run_seed << ".k" << k << ".r" << train.record_count() << ".tsv";
  const std::string path = name.str();
  if (std::ifstream in(path); in) {
    try {
      return load_assignment(in, train);
    } catch (const Error& e) {
      throw Error("cluster cache '" + path + "': " + e.what());
    }
  }
  auto clustering = default_clusterer(train, params, run_seed);
  std::ofstream out(path);
  if (!out) throw Error("cannot write cluster cache '" + path + "'");
  save_assignment(out, clustering);
  return clustering;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw InvalidArgument("bad sweep value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("sweep needs at least one value");
  return out;
}

Sweep parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw InvalidArgument("sweep must look like param=v1,v2");
  Sweep s{text.substr(0, eq), parse_values(text.substr(eq + 1))};
  if (s.parameter != "m" && s.parameter != "N" && s.parameter != "epsilon") {
    throw InvalidArgument("sweep parameter must be m, N or epsilon");
  }
  return s;
}

// Five-user fixture plus a second copy where user 3 has re-rated items.
std::pair<RatingMatrix, RatingMatrix> tiny_fixture() {
  std::vector<RatingRecord> base{
      {UserId{1}, ItemId{1}, 2, 0}, {UserId{1}, ItemId{3}, 4, 0}, {UserId{1}, ItemId{5}, 5, 0},
      {UserId{2}, ItemId{1}, 3, 0}, {UserId{2}, ItemId{2}, 4, 0}, {UserId{2}, ItemId{4}, 5, 0},
      {UserId{2}, ItemId{6}, 4, 0}, {UserId{3}, ItemId{2}, 3, 0}, {UserId{3}, ItemId{3}, 5, 0},
      {UserId{3}, ItemId{4}, 4, 0}, {UserId{4}, ItemId{1}, 2, 0}, {UserId{4}, ItemId{2}, 3, 0},
      {UserId{4}, ItemId{4}, 3, 0}, {UserId{4}, ItemId{6}, 5, 0}, {UserId{5}, ItemId{2}, 3, 0},
      {UserId{5}, ItemId{3}, 5, 0}, {UserId{5}, ItemId{4}, 4, 0}};
  auto moved = base;
  for (auto& r : moved) {
    if (r.user == UserId{3} && r.item == ItemId{3}) r.rating = 1;
    if (r.user == UserId{3} && r.item == ItemId{4}) r.rating = 5;
  }
  return {RatingMatrix(base), RatingMatrix(moved)};
}

// Random small fixture: 9 users over 10 items; the copy re-draws every
// rating of one non-target user.
std::pair<RatingMatrix, RatingMatrix> random_fixture(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RatingRecord> base;
  for (std::uint32_t u = 1; u <= 9; ++u) {
    for (std::uint32_t i = 1; i <= 10; ++i) {
      if (uniform01(rng) < 0.5 || i <= 2) {
        base.push_back({UserId{u}, ItemId{i}, 1 + static_cast<int>(uniform_index(rng, 5)), 0});
      }
    }
  }
  auto moved = base;
  const auto victim = UserId{2 + static_cast<std::uint32_t>(uniform_index(rng, 8))};
  for (auto& r : moved) {
    if (r.user == victim) r.rating = 1 + static_cast<int>(uniform_index(rng, 5));
  }
  return {RatingMatrix(base), RatingMatrix(moved)};
}

int cmd_split(const std::string& input, double ratio, std::uint64_t seed,
              const std::string& prefix) {
  const auto m = load_matrix(input);
  const auto s = split(m, ratio, seed);
  write_file(prefix + ".train", s.train);
  write_file(prefix + ".test", s.test);
  std::cout << "train " << s.train.record_count() << " records -> " << prefix << ".train\n"
            << "test " << s.test.record_count() << " records -> " << prefix << ".test\n";
  return 0;
}

int cmd_recommend(const std::string& input, Scheme scheme, std::uint32_t user,
                  const KdpcfParams& params, std::uint64_t seed, bool seed_given,
                  const std::string& cluster_cache) {
  const auto m = load_matrix(input);
  const UserId u{user};
  if (!m.contains(u)) throw InvalidArgument("user " + std::to_string(user) + " not in data");
  RecommendationList list;
  PrivacyAccountant acct;
  Rng rng(derive_seed(seed, u.value));
  switch (scheme) {
    case Scheme::kCf:
      if (seed_given) std::cerr << "warning: --seed has no effect for cf\n";
      list = run_cf(m, u, params.neighbors, params.m);
      break;
    case Scheme::kDpcf:
      list = run_dpcf(m, u, params.neighbors, params.m, params.epsilon, rng, &acct);
      break;
    case Scheme::kKdpcf: {
      const auto clustering = cluster_cache.empty()
                                  ? default_clusterer(m, params, seed)
                                  : cached_clustering(cluster_cache, m, params, seed);
      KdpcfTrace trace;
      list = run_kdpcf(m, u, params, clustering, rng, &acct, nullptr, &trace);
      std::cerr << "category " << trace.category.users.size() << " users ("
                << to_string(trace.category.status) << "), neighbors "
                << trace.neighbors.size() << '\n';
      break;
    }
  }
  if (scheme != Scheme::kCf) {
    std::cerr << "mechanism invocations " << acct.invocations() << ", budget "
              << acct.total() << '\n';
  }
  std::cout << "rank\titem\tscore\n" << std::setprecision(6);
  for (std::size_t r = 0; r < list.items.size(); ++r) {
    std::cout << r + 1 << '\t' << list.items[r].item.value << '\t' << list.items[r].score
              << '\n';
  }
  return 0;
}

struct ExperimentFlags {
  std::string input;
  std::string scheme = "all";
  std::string sweep;
  std::size_t runs = 100;
  std::uint64_t seed = 0;
  double ratio = 0.2;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
  std::string json;
  bool resplit = false;
  std::string cluster_cache;
};

int cmd_experiment(const ExperimentFlags& f, const KdpcfParams& params) {
  std::vector<Scheme> schemes;
  if (f.scheme == "all") {
    schemes = {Scheme::kCf, Scheme::kDpcf, Scheme::kKdpcf};
  } else if (auto s = parse_scheme(f.scheme)) {
    schemes = {*s};
  } else {
    throw InvalidArgument("unknown scheme '" + f.scheme + "'");
  }
  std::optional<Sweep> sweep;
  if (!f.sweep.empty()) sweep = parse_sweep(f.sweep);
  if (f.runs == 0) throw InvalidArgument("runs must be at least 1");

  const auto data = split(load_matrix(f.input), f.ratio, f.seed);
  std::vector<ExperimentRow> rows;
  for (Scheme s : schemes) {
    ExperimentConfig config;
    config.scheme = s;
    config.params = params;
    config.runs = f.runs;
    config.base_seed = f.seed;
    config.sweep = sweep;
    config.threads = f.threads;
    config.resplit = f.resplit;
    if (!f.cluster_cache.empty()) {
      const std::string prefix = f.cluster_cache;
      config.clusterer = [prefix](const RatingMatrix& train, const KdpcfParams& p,
                                  std::uint64_t run_seed) {
        return cached_clustering(prefix, train, p, run_seed);
      };
    }
    auto part = run_experiment(config, data);
    rows.insert(rows.end(), part.begin(), part.end());
    std::cerr << to_string(s) << " done\n";
  }
  if (f.out.empty()) {
    write_table_csv(std::cout, rows);
  } else {
    std::ofstream out(f.out);
    if (!out) throw Error("cannot write '" + f.out + "'");
    write_table_csv(out, rows);
  }
  if (!f.json.empty()) {
    std::ofstream out(f.json);
    if (!out) throw Error("cannot write '" + f.json + "'");
    out << table_json(rows).dump(2) << '\n';
  }
  return 0;
}

int cmd_audit(const std::string& fixture, double epsilon, std::size_t n, std::uint64_t seed) {
  std::pair<RatingMatrix, RatingMatrix> pair;
  if (fixture == "tiny") {
    pair = tiny_fixture();
  } else if (fixture == "random") {
    pair = random_fixture(seed);
  } else {
    throw InvalidArgument("unknown fixture '" + fixture + "' (tiny, random)");
  }
  const UserId target{fixture == "tiny" ? 5u : 1u};
  const auto& [a, b] = pair;
  std::vector<UserId> candidates;
  for (UserId v : a.users()) {
    if (v != target) candidates.push_back(v);
  }
  const auto wa = make_weights(similarity_vector(a, target, candidates), epsilon);
  const auto wb = make_weights(similarity_vector(b, target, candidates), epsilon);
  if (n > wa.size()) throw InvalidArgument("N exceeds candidate count");
  const double ratio = audit_dp(wa, wb, n);
  std::cout << std::setprecision(12) << "max_log_ratio " << ratio << "\nepsilon " << epsilon
            << "\nwithin_bound " << (ratio <= epsilon + 1e-9 ? "yes" : "no") << '\n';
  return ratio <= epsilon + 1e-9 ? 0 : 1;
}

int cmd_sample_oracle(std::size_t candidates, std::size_t n, double epsilon,
                      std::size_t draws, std::uint64_t seed) {
  if (n > candidates) throw InvalidArgument("N exceeds candidate count");
  if (draws == 0) throw InvalidArgument("draws must be positive");
  Rng rng(seed);
  SimilarityVector sims{UserId{0}, {}};
  for (std::size_t i = 0; i < candidates; ++i) {
    sims.entries.emplace_back(UserId{static_cast<std::uint32_t>(i + 1)},
                              2.0 * uniform01(rng) - 1.0);
  }
  const auto wv = make_weights(sims, epsilon);
  const auto exact = enumerate_distribution(wv, n);
  std::map<std::vector<UserId>, std::size_t> counts;
  for (std::size_t d = 0; d < draws; ++d) ++counts[sample_neighbor_set(wv, n, rng).members];
  double tv = 0.0;
  std::size_t seen = 0;
  for (const auto& o : exact.support) {
    auto it = counts.find(o.members);
    const std::size_t c = it == counts.end() ? 0 : it->second;
    seen += c;
    tv += std::abs(static_cast<double>(c) / static_cast<double>(draws) - o.probability);
  }
  tv += static_cast<double>(draws - seen) / static_cast<double>(draws);
  tv /= 2.0;
  std::cout << std::setprecision(6) << "sets " << exact.support.size() << "\ndraws " << draws
            << "\ntv_distance " << tv << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private user-based collaborative filtering"};
  app.require_subcommand(1);

  auto* split_cmd = app.add_subcommand("split", "split a ratings file into train/test");
  std::string split_input = default_input();
  double split_ratio = 0.2;
  std::uint64_t split_seed = 0;
  std::string prefix;
  split_cmd->add_option("-i,--input", split_input, "ratings file")->capture_default_str();
  split_cmd->add_option("--ratio", split_ratio, "test fraction")->capture_default_str();
  split_cmd->add_option("-s,--seed", split_seed, "shuffle seed")->capture_default_str();
  split_cmd->add_option("-o,--out-prefix", prefix, "writes PREFIX.train and PREFIX.test")
      ->required();

  auto* rec_cmd = app.add_subcommand("recommend", "top-m list for one user");
  std::string rec_input = default_input();
  std::string rec_scheme = "kdpcf";
  std::uint32_t rec_user = 0;
  std::uint64_t rec_seed = 0;
  std::string rec_cache;
  ParamFlags rec_params;
  rec_cmd->add_option("-i,--input", rec_input, "training ratings file")->capture_default_str();
  rec_cmd->add_option("--scheme", rec_scheme, "cf, dpcf or kdpcf")->capture_default_str();
  rec_cmd->add_option("-u,--user", rec_user, "target user id")->required();
  auto* rec_seed_opt = rec_cmd->add_option("-s,--seed", rec_seed, "seed")->capture_default_str();
  rec_cmd->add_option("--cluster-cache", rec_cache, "path prefix for cached clusterings");
  rec_params.attach(*rec_cmd);

  auto* exp_cmd = app.add_subcommand("experiment", "recall/precision over repeated runs");
  ExperimentFlags ef;
  ef.input = default_input();
  ParamFlags exp_params;
  exp_cmd->add_option("-i,--input", ef.input, "full ratings file")->capture_default_str();
  exp_cmd->add_option("--scheme", ef.scheme, "all, cf, dpcf or kdpcf")->capture_default_str();
  exp_cmd->add_option("--sweep", ef.sweep, "param=v1,v2,... with param in m, N, epsilon");
  exp_cmd->add_option("-r,--runs", ef.runs, "runs per point")->capture_default_str();
  exp_cmd->add_option("-s,--seed", ef.seed, "split and base run seed")->capture_default_str();
  exp_cmd->add_option("--ratio", ef.ratio, "test fraction")->capture_default_str();
  exp_cmd->add_option("-t,--threads", ef.threads, "worker threads")->capture_default_str();
  exp_cmd->add_option("-o,--out", ef.out, "CSV output (default stdout)");
  exp_cmd->add_option("--json", ef.json, "JSON output");
  exp_cmd->add_flag("--resplit", ef.resplit, "fresh train/test split per run");
  exp_cmd->add_option("--cluster-cache", ef.cluster_cache, "path prefix for cached clusterings");
  exp_params.attach(*exp_cmd);

  auto* audit_cmd = app.add_subcommand("audit", "exact privacy-loss audit on a fixture pair");
  std::string fixture = "tiny";
  double audit_eps = 1.0;
  std::size_t audit_n = 2;
  std::uint64_t audit_seed = 0;
  audit_cmd->add_option("--fixture", fixture, "tiny or random")->capture_default_str();
  audit_cmd->add_option("-e,--epsilon", audit_eps, "privacy budget")->capture_default_str();
  audit_cmd->add_option("-N,--neighbors", audit_n, "neighbor set size")->capture_default_str();
  audit_cmd->add_option("-s,--seed", audit_seed, "seed for the random fixture")
      ->capture_default_str();

  auto* oracle_cmd = app.add_subcommand("sample-oracle", "sampler vs enumeration TV distance");
  std::size_t oracle_candidates = 6;
  std::size_t oracle_n = 2;
  double oracle_eps = 1.0;
  std::size_t oracle_draws = 100000;
  std::uint64_t oracle_seed = 0;
  oracle_cmd->add_option("--candidates", oracle_candidates, "candidate count")
      ->capture_default_str();
  oracle_cmd->add_option("-N,--neighbors", oracle_n, "set size")->capture_default_str();
  oracle_cmd->add_option("-e,--epsilon", oracle_eps, "privacy budget")->capture_default_str();
  oracle_cmd->add_option("--draws", oracle_draws, "sample count")->capture_default_str();
  oracle_cmd->add_option("-s,--seed", oracle_seed, "seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (split_cmd->parsed()) return cmd_split(split_input, split_ratio, split_seed, prefix);
    if (rec_cmd->parsed()) {
      const auto scheme = parse_scheme(rec_scheme);
      if (!scheme) throw InvalidArgument("unknown scheme '" + rec_scheme + "'");
      return cmd_recommend(rec_input, *scheme, rec_user, rec_params.params(), rec_seed,
                           rec_seed_opt->count() > 0, rec_cache);
    }
    if (exp_cmd->parsed()) return cmd_experiment(ef, exp_params.params());
    if (audit_cmd->parsed()) return cmd_audit(fixture, audit_eps, audit_n, audit_seed);
    if (oracle_cmd->parsed()) {
      return cmd_sample_oracle(oracle_candidates, oracle_n, oracle_eps, oracle_draws,
                               oracle_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
