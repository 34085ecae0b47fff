#include "ucoassoc/associate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <string>

#include "ucoassoc/error.hpp"

namespace ucoassoc::associate {
namespace {

// Scoring always runs on blocks of this many rows (the last block is zero
// padded), so a pair's score does not depend on which other pairs share its block.
constexpr std::size_t kScoreBlock = 256;

struct SearchState {
  double cost = 0.0;
  std::array<std::size_t, 3> chain{};
  std::size_t depth = 0;
};

}  // namespace

ScoreMatrix::ScoreMatrix(std::vector<std::uint64_t> ids)
    : ids_(std::move(ids)), data_(ids_.size() * ids_.size(), 0.0) {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    data_[i * ids_.size() + i] = std::numeric_limits<double>::quiet_NaN();
  }
}

void ScoreMatrix::set(std::size_t i, std::size_t j, double p_no_match) {
  require(i != j && i < size() && j < size(), ErrorKind::kDomain, "bad score matrix index");
  require(p_no_match >= 0.0 && p_no_match <= 1.0, ErrorKind::kDomain,
          "scores must lie in [0, 1]");
  data_[i * size() + j] = p_no_match;
  data_[j * size() + i] = p_no_match;
}

ScoreMatrix ScoreMatrix::submatrix(std::span<const std::size_t> members) const {
  std::vector<std::uint64_t> sub_ids;
  for (auto m : members) sub_ids.push_back(ids_.at(m));
  ScoreMatrix out(std::move(sub_ids));
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      out.set(a, b, (*this)(members[a], members[b]));
    }
  }
  return out;
}

PairScorer::PairScorer(const nn::Mlp& model, featurize::FeatureStats stats,
                       featurize::FeatureTable table)
    : model_(model), stats_(std::move(stats)), table_(std::move(table)) {
  table_.validate();
  require(model_.finalized(), ErrorKind::kState, "scoring needs a finalized model");
  require(stats_.size() == table_.feature_count() && model_.input_dim() == stats_.size(),
          ErrorKind::kShape,
          "model input, feature statistics and feature table disagree on feature count");
}

std::vector<double> PairScorer::score(
    std::span<const Observation> observations,
    std::span<const std::pair<std::size_t, std::size_t>> pairs) const {
  std::vector<featurize::BaseParams> params;
  params.reserve(observations.size());
  for (const auto& o : observations) params.push_back(featurize::base_params(o));

  std::vector<double> out;
  out.reserve(pairs.size());
  const auto width = static_cast<Eigen::Index>(table_.feature_count());
  Matrix block(static_cast<Eigen::Index>(kScoreBlock), width);
  for (std::size_t begin = 0; begin < pairs.size(); begin += kScoreBlock) {
    const std::size_t end = std::min(begin + kScoreBlock, pairs.size());
    // rows past the last pair stay zero padding
    block.bottomRows(static_cast<Eigen::Index>(kScoreBlock - (end - begin))).setZero();
    for (std::size_t p = begin; p < end; ++p) {
      auto [i, j] = pairs[p];
      if (i == j || i >= observations.size() || j >= observations.size()) {
        fail(ErrorKind::kInput, "bad pair index");
      }
      if (!featurize::comes_first(observations[i], observations[j])) std::swap(i, j);
      std::span<double> row(block.row(static_cast<Eigen::Index>(p - begin)).data(),
                            static_cast<std::size_t>(width));
      try {
        featurize::pair_features_into(params[i], params[j], table_, row);
        featurize::standardize(row, stats_);
      } catch (const Error& e) {
        fail(e.kind(), "pair (" + std::to_string(observations[i].obs_id) + ", " +
                           std::to_string(observations[j].obs_id) + "): " + e.what());
      }
    }
    const Eigen::VectorXd p_match = nn::predict_match_prob(model_, block);
    for (std::size_t p = begin; p < end; ++p) {
      out.push_back(std::clamp(1.0 - p_match[static_cast<Eigen::Index>(p - begin)], 0.0, 1.0));
    }
  }
  return out;
}

ScoreMatrix score_all_pairs(const PairScorer& scorer, std::span<const Observation> observations) {
  const std::size_t n = observations.size();
  require(n <= kDenseScoreLimit, ErrorKind::kConfig,
          "dense score matrix limited to " + std::to_string(kDenseScoreLimit) + " observations");
  std::vector<std::uint64_t> ids;
  for (const auto& o : observations) ids.push_back(o.obs_id);
  ScoreMatrix out(std::move(ids));

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - (n > 0)) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  const auto scores = scorer.score(observations, pairs);
  for (std::size_t p = 0; p < pairs.size(); ++p) out.set(pairs[p].first, pairs[p].second, scores[p]);
  return out;
}

void SearchConfig::validate() const {
  require(prune_threshold >= 0.0 && prune_threshold <= 1.0, ErrorKind::kConfig,
          "prune threshold d must lie in [0, 1]");
  require(solutions_per_base >= 1, ErrorKind::kConfig, "solutions per base s must be >= 1");
  require(chain_length == 3, ErrorKind::kConfig, "only chains of three observations are supported");
}

double triplet_cost(const ScoreMatrix& scores, std::size_t a, std::size_t b, std::size_t c) {
  std::array<std::size_t, 3> m{a, b, c};
  const auto& ids = scores.ids();
  std::sort(m.begin(), m.end(), [&](std::size_t x, std::size_t y) { return ids[x] < ids[y]; });
  return scores(m[0], m[1]) + scores(m[0], m[2]) + scores(m[1], m[2]);
}

std::vector<TripletCandidate> ucs_triplets(std::size_t base, const ScoreMatrix& scores,
                                           const SearchConfig& cfg) {
  cfg.validate();
  const std::size_t n = scores.size();
  require(n >= 3, ErrorKind::kInput, "triplet search needs at least 3 observations");
  require(base < n, ErrorKind::kInput, "base index out of range");
  const auto& ids = scores.ids();

  std::vector<std::size_t> admitted;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != base && scores(base, j) <= cfg.prune_threshold) admitted.push_back(j);
  }

  // Min-heap on (cost, member id sequence); a prefix sorts before its extensions.
  auto later = [&](const SearchState& a, const SearchState& b) {
    if (a.cost != b.cost) return a.cost > b.cost;
    const std::size_t common = std::min(a.depth, b.depth);
    for (std::size_t k = 0; k < common; ++k) {
      if (ids[a.chain[k]] != ids[b.chain[k]]) return ids[a.chain[k]] > ids[b.chain[k]];
    }
    return a.depth > b.depth;
  };
  std::priority_queue<SearchState, std::vector<SearchState>, decltype(later)> frontier(later);
  frontier.push({0.0, {base, 0, 0}, 1});

  std::set<std::array<std::uint64_t, 3>> emitted;
  std::vector<TripletCandidate> out;
  while (!frontier.empty() && out.size() < cfg.solutions_per_base) {
    const SearchState state = frontier.top();
    frontier.pop();
    if (state.depth == 3) {
      std::array<std::uint64_t, 3> members{ids[state.chain[0]], ids[state.chain[1]],
                                           ids[state.chain[2]]};
      std::sort(members.begin(), members.end());
      if (emitted.insert(members).second) {
        out.push_back({ids[base], members, state.cost, std::nullopt});
      }
      continue;
    }
    for (auto k : admitted) {
      if (state.depth == 1) {
        frontier.push({scores(base, k), {base, k, 0}, 2});
        continue;
      }
      const std::size_t first = state.chain[1];
      // Both orderings of {first, k} cost the same; keep the smaller id sequence.
      if (k == first || ids[k] < ids[first]) continue;
      frontier.push({triplet_cost(scores, base, first, k), {base, first, k}, 3});
    }
  }
  return out;
}

std::uint64_t unique_combinations(std::uint64_t n, std::uint64_t r) {
  require(r <= n, ErrorKind::kDomain,
          "cannot choose " + std::to_string(r) + " of " + std::to_string(n));
  r = std::min(r, n - r);
  std::uint64_t result = 1;
  for (std::uint64_t k = 1; k <= r; ++k) {
    // result * (n - r + k) is divisible by k at every step.
    const auto next = static_cast<unsigned __int128>(result) * (n - r + k) / k;
    require(next <= std::numeric_limits<std::uint64_t>::max(), ErrorKind::kDomain,
            "binomial coefficient overflows 64 bits");
    result = static_cast<std::uint64_t>(next);
  }
  return result;
}

AssociationResult run_association(const ScoreMatrix& scores, const SearchConfig& cfg) {
  cfg.validate();
  AssociationResult result;
  for (std::size_t base = 0; base < scores.size(); ++base) {
    auto part = ucs_triplets(base, scores, cfg);
    result.candidates.insert(result.candidates.end(), part.begin(), part.end());
  }
  result.explored_fraction = static_cast<double>(result.candidates.size()) /
                             static_cast<double>(unique_combinations(scores.size(), 3));
  return result;
}

AssociationResult run_association_streaming(const PairScorer& scorer,
                                            std::span<const Observation> observations,
                                            const SearchConfig& cfg) {
  cfg.validate();
  const std::size_t n = observations.size();
  require(n >= 3, ErrorKind::kInput, "triplet search needs at least 3 observations");
  AssociationResult result;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t base = 0; base < n; ++base) {
    pairs.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != base) pairs.emplace_back(base, j);
    }
    const auto row = scorer.score(observations, pairs);

    std::vector<std::size_t> members{base};
    std::vector<double> base_scores{0.0};
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      if (row[p] <= cfg.prune_threshold) {
        members.push_back(pairs[p].second);
        base_scores.push_back(row[p]);
      }
    }
    std::vector<std::uint64_t> ids;
    for (auto m : members) ids.push_back(observations[m].obs_id);
    ScoreMatrix local(std::move(ids));
    pairs.clear();
    for (std::size_t a = 1; a < members.size(); ++a) {
      local.set(0, a, base_scores[a]);
      for (std::size_t b = a + 1; b < members.size(); ++b) pairs.emplace_back(members[a], members[b]);
    }
    const auto inner = scorer.score(observations, pairs);
    std::size_t p = 0;
    for (std::size_t a = 1; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) local.set(a, b, inner[p++]);
    }
    if (local.size() < 3) continue;
    auto part = ucs_triplets(0, local, cfg);
    result.candidates.insert(result.candidates.end(), part.begin(), part.end());
  }
  result.explored_fraction = static_cast<double>(result.candidates.size()) /
                             static_cast<double>(unique_combinations(n, 3));
  return result;
}

AssociationResult run_association(const PairScorer& scorer,
                                  std::span<const Observation> observations,
                                  const SearchConfig& cfg) {
  if (observations.size() <= kDenseScoreLimit) {
    return run_association(score_all_pairs(scorer, observations), cfg);
  }
  return run_association_streaming(scorer, observations, cfg);
}

RecoveryReport evaluate_recovery(std::vector<TripletCandidate>& candidates,
                                 std::span<const Observation> observations) {
  std::map<std::uint64_t, std::uint64_t> rso_of;
  std::map<std::uint64_t, std::size_t> obs_per_rso;
  for (const auto& o : observations) {
    require(o.rso_id.has_value(), ErrorKind::kInput,
            "recovery evaluation needs truth labels (observation " + std::to_string(o.obs_id) +
                " is blind)");
    rso_of[o.obs_id] = *o.rso_id;
    ++obs_per_rso[*o.rso_id];
  }

  RecoveryReport report;
  report.n_candidates = candidates.size();
  report.n_rso_represented = obs_per_rso.size();
  for (const auto& [rso, count] : obs_per_rso) report.n_rso_recoverable += count >= 3;

  std::set<std::array<std::uint64_t, 3>> unique_true;
  std::set<std::uint64_t> recovered;
  for (auto& c : candidates) {
    std::array<std::uint64_t, 3> rso{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto it = rso_of.find(c.members[k]);
      require(it != rso_of.end(), ErrorKind::kInput,
              "candidate member " + std::to_string(c.members[k]) + " not in observation set");
      rso[k] = it->second;
    }
    c.is_true = rso[0] == rso[1] && rso[1] == rso[2];
    if (*c.is_true) {
      ++report.n_true;
      unique_true.insert(c.members);
      recovered.insert(rso[0]);
    }
  }
  report.n_unique_true_sets = unique_true.size();
  report.n_rso_recovered = recovered.size();
  if (observations.size() >= 3) {
    report.explored_fraction = static_cast<double>(candidates.size()) /
                               static_cast<double>(unique_combinations(observations.size(), 3));
  }
  return report;
}

void write_candidates_csv(const std::filesystem::path& path,
                          std::span<const TripletCandidate> candidates) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  os << "base_obs,member1,member2,member3,cost,is_true\n";
  char buf[160];
  for (const auto& c : candidates) {
    std::snprintf(buf, sizeof buf, "%llu,%llu,%llu,%llu,%.17g,%s\n",
                  static_cast<unsigned long long>(c.base_obs),
                  static_cast<unsigned long long>(c.members[0]),
                  static_cast<unsigned long long>(c.members[1]),
                  static_cast<unsigned long long>(c.members[2]), c.cost,
                  c.is_true ? (*c.is_true ? "1" : "0") : "");
    os << buf;
  }
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

void write_recovery_csv(const std::filesystem::path& path, std::span<const RecoveryReport> rows) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  os << "s,n_candidates,n_true,n_rso_recovered,explored_fraction\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.17g\n", r.s, r.n_candidates, r.n_true,
                  r.n_rso_recovered, r.explored_fraction);
    os << buf;
  }
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace ucoassoc::associate
