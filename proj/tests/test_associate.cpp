#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "support.hpp"
#include "ucoassoc/associate.hpp"

using namespace ucoassoc;
using namespace ucoassoc::associate;

namespace {

// Scores on a 1/64 grid so sums are exact and ties are frequent.
ScoreMatrix random_matrix(std::size_t n, Rng& rng, bool ties) {
  std::vector<std::uint64_t> ids(n);
  for (std::size_t k = 0; k < n; ++k) ids[k] = 1000 + 7 * k;
  std::shuffle(ids.begin(), ids.end(), rng);  // ids need not follow index order
  ScoreMatrix m(ids);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 64);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, ties ? grid(rng) / 64.0 : u(rng));
  }
  return m;
}

struct Expected {
  double cost;
  std::uint64_t lo;
  std::uint64_t hi;
};

// Every triplet containing `base`, cost-sorted with ties broken by the two
// partner ids; partners restricted to scores[base][.] <= d.
std::vector<Expected> brute_force(const ScoreMatrix& m, std::size_t base, double d) {
  const auto& ids = m.ids();
  std::vector<Expected> out;
  for (std::size_t x = 0; x < m.size(); ++x) {
    for (std::size_t y = x + 1; y < m.size(); ++y) {
      if (x == base || y == base || m(base, x) > d || m(base, y) > d) continue;
      // pairwise scores added in ascending id order
      std::array<std::size_t, 3> t{base, x, y};
      std::sort(t.begin(), t.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
      const double cost = m(t[0], t[1]) + m(t[0], t[2]) + m(t[1], t[2]);
      out.push_back({cost, std::min(ids[x], ids[y]), std::max(ids[x], ids[y])});
    }
  }
  std::sort(out.begin(), out.end(), [](const Expected& a, const Expected& b) {
    return std::tie(a.cost, a.lo, a.hi) < std::tie(b.cost, b.lo, b.hi);
  });
  return out;
}

bool same_as_oracle(const std::vector<TripletCandidate>& got, const std::vector<Expected>& want,
                    std::uint64_t base_id) {
  if (got.size() != want.size()) return false;
  for (std::size_t k = 0; k < got.size(); ++k) {
    std::array<std::uint64_t, 3> members{base_id, want[k].lo, want[k].hi};
    std::sort(members.begin(), members.end());
    if (got[k].cost != want[k].cost || got[k].members != members || got[k].base_obs != base_id) {
      return false;
    }
  }
  return true;
}

orbitsim::Observation obs_at(std::uint64_t id, std::uint64_t rso) {
  orbitsim::Observation o;
  o.obs_id = id;
  o.rso_id = rso;
  o.epoch_s = 100.0;
  o.observer_pos = orbitsim::Vec3(6378.137, 0, 0);
  o.los = orbitsim::Vec3(1, 0, 0);
  return o;
}

struct ScoringFixture {
  nn::Mlp model;
  featurize::FeatureStats stats;

  ScoringFixture() {
    Rng rng = make_rng(21);
    model = nn::Mlp::he_initialized({416, 16, 16, 8, 8, 8, 8, 2}, rng);
    // nonzero running statistics so eval mode is not trivial
    for (auto& m : model.running_mean()) m.setConstant(0.3);
    for (auto& v : model.running_var()) v.setConstant(2.0);
    model.finalize();
    orbitsim::ScenarioConfig cfg;
    cfg.n_observations = 2000;
    cfg.seed = 22;
    const auto obs = orbitsim::build_scenario(cfg);
    Rng pr = make_rng(23);
    const auto pairs = featurize::sample_balanced_pairs(obs, 2000, featurize::FeatureTable::standard(), pr);
    stats = featurize::compute_stats(featurize::to_matrix(pairs));
  }
  PairScorer scorer() const { return PairScorer(model, stats, featurize::FeatureTable::standard()); }
};

std::vector<orbitsim::Observation> scenario(std::size_t n, std::uint64_t seed) {
  orbitsim::ScenarioConfig cfg;
  cfg.n_observations = n;
  cfg.seed = seed;
  return orbitsim::build_scenario(cfg);
}

}  // namespace

TEST_CASE("binomial coefficients") {
  CHECK(unique_combinations(1000, 3) == 166167000ULL);
  CHECK(unique_combinations(1000, 2) == 499500ULL);
  CHECK(unique_combinations(6, 3) == 20);
  CHECK(unique_combinations(17, 0) == 1);
  CHECK(unique_combinations(17, 17) == 1);
  CHECK(unique_combinations(0, 0) == 1);
  CHECK(unique_combinations(67, 33) == 14226520737620288370ULL);
  // Pascal's rule as an independent oracle
  for (std::uint64_t n = 1; n < 60; ++n) {
    for (std::uint64_t r = 1; r < n; ++r) {
      REQUIRE(unique_combinations(n, r) ==
              unique_combinations(n - 1, r - 1) + unique_combinations(n - 1, r));
    }
  }
  CHECK(testing::error_kind_of([] { unique_combinations(3, 4); }) == ErrorKind::kDomain);
  CHECK(testing::error_kind_of([] { unique_combinations(100, 50); }) == ErrorKind::kDomain);
}

TEST_CASE("score matrix") {
  ScoreMatrix m({10, 20, 30});
  m.set(0, 2, 0.25);
  CHECK(m(2, 0) == 0.25);
  CHECK(std::isnan(m(1, 1)));
  CHECK(testing::error_kind_of([&] { m.set(0, 1, 1.5); }) == ErrorKind::kDomain);
  CHECK(testing::error_kind_of([&] { m.set(1, 1, 0.5); }) == ErrorKind::kDomain);
  const std::vector<std::size_t> pick = {2, 0};
  const auto sub = m.submatrix(pick);
  CHECK(sub.ids() == std::vector<std::uint64_t>{30, 10});
  CHECK(sub(0, 1) == 0.25);
}

TEST_CASE("four observation example") {
  // A=0, B=1, C=2, D=3
  ScoreMatrix m({1, 2, 3, 4});
  m.set(0, 1, 0.1);
  m.set(0, 2, 0.2);
  m.set(0, 3, 0.9);
  m.set(1, 2, 0.1);
  m.set(1, 3, 0.05);
  m.set(2, 3, 0.0);
  SearchConfig cfg;
  cfg.prune_threshold = 0.3;
  cfg.solutions_per_base = 1;
  const auto r = ucs_triplets(0, m, cfg);
  REQUIRE(r.size() == 1);
  CHECK(r[0].members == std::array<std::uint64_t, 3>{1, 2, 3});
  CHECK(r[0].cost == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(r[0].base_obs == 1);

  cfg.solutions_per_base = 10;
  const auto all = ucs_triplets(0, m, cfg);
  CHECK(all.size() == 1);  // D is pruned, only {A,B,C} survives
}

TEST_CASE("best triplet goes through the cheapest neighbor") {
  // base A with C the cheapest neighbor, as in the tree sketch
  ScoreMatrix m({1, 2, 3, 4, 5});
  const double s[5][5] = {{0, 0.25, 0.05, 0.2, 0.28},
                          {0, 0, 0.6, 0.7, 0.5},
                          {0, 0, 0, 0.1, 0.4},
                          {0, 0, 0, 0, 0.9},
                          {0, 0, 0, 0, 0}};
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) m.set(i, j, s[i][j]);
  }
  SearchConfig cfg;
  const auto r = ucs_triplets(0, m, cfg);
  REQUIRE(r.size() == 1);
  CHECK(r[0].members == std::array<std::uint64_t, 3>{1, 3, 4});
}

TEST_CASE("total pruning and small inputs") {
  Rng rng = make_rng(1);
  auto m = random_matrix(10, rng, false);
  SearchConfig cfg;
  cfg.prune_threshold = 0.0;
  cfg.solutions_per_base = 5;
  for (std::size_t b = 0; b < m.size(); ++b) {
    bool any_zero = false;
    for (std::size_t j = 0; j < m.size(); ++j) any_zero |= j != b && m(b, j) == 0.0;
    if (!any_zero) CHECK(ucs_triplets(b, m, cfg).empty());
  }

  ScoreMatrix two({1, 2});
  two.set(0, 1, 0.1);
  CHECK(testing::error_kind_of([&] { ucs_triplets(0, two, SearchConfig{}); }) == ErrorKind::kInput);

  ScoreMatrix three({1, 2, 3});
  three.set(0, 1, 0.1);
  three.set(0, 2, 0.2);
  three.set(1, 2, 0.1);
  const auto r = run_association(three, SearchConfig{});
  REQUIRE(r.candidates.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(r.candidates[k].members == std::array<std::uint64_t, 3>{1, 2, 3});
    CHECK(r.candidates[k].base_obs == k + 1);
  }
  CHECK(r.explored_fraction == 3.0);

  SearchConfig bad;
  bad.chain_length = 4;
  CHECK(testing::error_kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
  bad = SearchConfig{};
  bad.prune_threshold = 1.5;
  CHECK(testing::error_kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("search equals brute-force enumeration on 100 random matrices") {
  Rng rng = make_rng(2);
  std::uniform_int_distribution<std::size_t> size(3, 30);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size(rng);
    const auto m = random_matrix(n, rng, trial % 2 == 0);
    SearchConfig cfg;
    cfg.prune_threshold = 1.0;
    cfg.solutions_per_base = unique_combinations(n - 1, 2);
    for (std::size_t b = 0; b < n; ++b) {
      mismatches += !same_as_oracle(ucs_triplets(b, m, cfg), brute_force(m, b, 1.0), m.ids()[b]);
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("pruned and truncated search matches the oracle prefix") {
  Rng rng = make_rng(3);
  int mismatches = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto m = random_matrix(25, rng, trial % 3 == 0);
    SearchConfig cfg;
    cfg.prune_threshold = 0.1 + 0.01 * trial;
    cfg.solutions_per_base = 1 + trial % 9;
    for (std::size_t b = 0; b < m.size(); ++b) {
      auto want = brute_force(m, b, cfg.prune_threshold);
      if (want.size() > cfg.solutions_per_base) want.resize(cfg.solutions_per_base);
      const auto got = ucs_triplets(b, m, cfg);
      mismatches += !same_as_oracle(got, want, m.ids()[b]);
      for (const auto& c : got) {
        // soundness: every partner passes the base threshold
        for (auto id : c.members) {
          const auto k = static_cast<std::size_t>(
              std::find(m.ids().begin(), m.ids().end(), id) - m.ids().begin());
          if (k != b) REQUIRE(m(b, k) <= cfg.prune_threshold);
        }
      }
      for (std::size_t k = 1; k < got.size(); ++k) REQUIRE(got[k - 1].cost <= got[k].cost);
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("recovery accounting") {
  std::vector<orbitsim::Observation> obs;
  for (std::uint64_t k = 0; k < 7; ++k) obs.push_back(obs_at(k, k < 3 ? 100 : (k < 5 ? 200 : 300 + k)));
  std::vector<TripletCandidate> none;
  auto empty = evaluate_recovery(none, obs);
  CHECK(empty.n_candidates == 0);
  CHECK(empty.n_true == 0);
  CHECK(empty.n_rso_recovered == 0);
  CHECK(empty.n_rso_represented == 4);
  CHECK(empty.n_rso_recoverable == 1);

  std::vector<TripletCandidate> c = {{0, {0, 1, 2}, 0.3, {}},
                                     {1, {0, 1, 2}, 0.3, {}},
                                     {3, {2, 3, 4}, 0.5, {}}};
  const auto r = evaluate_recovery(c, obs);
  CHECK(r.n_true == 2);
  CHECK(r.n_unique_true_sets == 1);
  CHECK(r.n_rso_recovered == 1);
  CHECK(*c[0].is_true);
  CHECK_FALSE(*c[2].is_true);
  CHECK(r.explored_fraction == doctest::Approx(3.0 / 35.0));

  obs[4].rso_id.reset();
  CHECK(testing::error_kind_of([&] { evaluate_recovery(c, obs); }) == ErrorKind::kInput);
}

TEST_CASE("pair scoring") {
  const ScoringFixture fx;
  const auto scorer = fx.scorer();

  SUBCASE("two observations give one symmetric score") {
    const auto obs = scenario(2, 30);
    const auto m = score_all_pairs(scorer, obs);
    CHECK(m.size() == 2);
    CHECK(m(0, 1) == m(1, 0));
    CHECK(m(0, 1) >= 0.0);
    CHECK(m(0, 1) <= 1.0);
  }
  SUBCASE("identical observations give a constant matrix") {
    std::vector<orbitsim::Observation> obs;
    for (std::uint64_t k = 0; k < 6; ++k) obs.push_back(obs_at(k, k));
    const auto m = score_all_pairs(scorer, obs);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        if (i != j) CHECK(m(i, j) == m(0, 1));
      }
    }
  }
  SUBCASE("a pair's score does not depend on its neighbours in the batch") {
    const auto obs = scenario(120, 31);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      for (std::size_t j = i + 1; j < obs.size(); ++j) pairs.emplace_back(i, j);
    }
    const auto all = scorer.score(obs, pairs);
    for (std::size_t p = 0; p < pairs.size(); p += 97) {
      const std::pair<std::size_t, std::size_t> one[] = {{pairs[p].second, pairs[p].first}};
      REQUIRE(scorer.score(obs, one)[0] == all[p]);
    }
  }
  SUBCASE("mismatched model and statistics are rejected") {
    auto stats = fx.stats;
    stats.mean.pop_back();
    stats.std.pop_back();
    CHECK(testing::error_kind_of([&] { PairScorer(fx.model, stats, featurize::FeatureTable::standard()); }) ==
          ErrorKind::kShape);
  }
  SUBCASE("streaming association equals dense association") {
    const auto obs = scenario(150, 32);
    SearchConfig cfg;
    cfg.prune_threshold = 0.6;
    cfg.solutions_per_base = 4;
    const auto dense = run_association(score_all_pairs(scorer, obs), cfg);
    const auto streamed = run_association_streaming(scorer, obs, cfg);
    REQUIRE(dense.candidates.size() == streamed.candidates.size());
    for (std::size_t k = 0; k < dense.candidates.size(); ++k) {
      CHECK(dense.candidates[k].members == streamed.candidates[k].members);
      CHECK(dense.candidates[k].cost == streamed.candidates[k].cost);
      CHECK(dense.candidates[k].base_obs == streamed.candidates[k].base_obs);
    }
    CHECK(dense.explored_fraction == streamed.explored_fraction);
    CHECK(dense.candidates.size() <= cfg.solutions_per_base * obs.size());
  }
}

TEST_CASE("candidate and recovery csv") {
  testing::TempDir dir("assoc");
  std::vector<TripletCandidate> c = {{5, {1, 5, 9}, 0.125, true}, {9, {1, 5, 9}, 0.125, std::nullopt}};
  write_candidates_csv(dir / "c.csv", c);
  CHECK(testing::slurp(dir / "c.csv") ==
        "base_obs,member1,member2,member3,cost,is_true\n5,1,5,9,0.125,1\n9,1,5,9,0.125,\n");
  RecoveryReport r;
  r.s = 2;
  r.n_candidates = 10;
  r.n_true = 3;
  r.n_rso_recovered = 2;
  r.explored_fraction = 0.5;
  write_recovery_csv(dir / "r.csv", std::vector<RecoveryReport>{r});
  CHECK(testing::slurp(dir / "r.csv") ==
        "s,n_candidates,n_true,n_rso_recovered,explored_fraction\n2,10,3,2,0.5\n");
}
