#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ucoassoc/featurize.hpp"
#include "ucoassoc/neuralnet.hpp"
#include "ucoassoc/orbitsim.hpp"

namespace ucoassoc::associate {

using orbitsim::Observation;

/// Dense symmetric matrix of p(no match); the diagonal is NaN.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  explicit ScoreMatrix(std::vector<std::uint64_t> ids);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::uint64_t>& ids() const { return ids_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * ids_.size() + j]; }
  void set(std::size_t i, std::size_t j, double p_no_match);

  /// Scores among `members` (indices into this matrix), in the given order.
  ScoreMatrix submatrix(std::span<const std::size_t> members) const;

 private:
  std::vector<std::uint64_t> ids_;
  std::vector<double> data_;
};

inline constexpr std::size_t kDenseScoreLimit = 20000;

/// Featurize, standardize and classify observation pairs on demand.
class PairScorer {
 public:
  PairScorer(const nn::Mlp& model, featurize::FeatureStats stats, featurize::FeatureTable table);

  /// p(no match) for each (i, j) index pair into `observations`; evaluated in
  /// fixed-size chunks in the given order.
  std::vector<double> score(std::span<const Observation> observations,
                            std::span<const std::pair<std::size_t, std::size_t>> pairs) const;

  const featurize::FeatureTable& table() const { return table_; }

 private:
  const nn::Mlp& model_;
  featurize::FeatureStats stats_;
  featurize::FeatureTable table_;
};

/// Every unordered pair scored once in canonical order and mirrored.
ScoreMatrix score_all_pairs(const PairScorer& scorer, std::span<const Observation> observations);

struct SearchConfig {
  double prune_threshold = 0.3;  // d
  std::size_t solutions_per_base = 1;  // s
  std::size_t chain_length = 3;

  void validate() const;
};

struct TripletCandidate {
  std::uint64_t base_obs = 0;
  std::array<std::uint64_t, 3> members{};  // ascending obs_id
  double cost = 0.0;
  std::optional<bool> is_true;
};

/// Sum of the three pairwise scores, added in ascending obs_id order so every
/// ordering and every matrix layout gives the same bits.
double triplet_cost(const ScoreMatrix& scores, std::size_t a, std::size_t b, std::size_t c);

/// Uniform cost search from `base` over chains of three observations. Nodes
/// whose score against the base exceeds the prune threshold are never
/// admitted; adding node k to a chain costs the sum of its scores against every
/// chain member. Member sets reached by different orderings are emitted once.
std::vector<TripletCandidate> ucs_triplets(std::size_t base, const ScoreMatrix& scores,
                                           const SearchConfig& cfg);

/// Exact n choose r; throws ErrorKind::kDomain for r > n or 64-bit overflow.
std::uint64_t unique_combinations(std::uint64_t n, std::uint64_t r);

struct AssociationResult {
  std::vector<TripletCandidate> candidates;
  double explored_fraction = 0.0;  // candidates / C(n, 3)
};

/// One search per base observation, concatenated in observation order without
/// cross-base deduplication.
AssociationResult run_association(const ScoreMatrix& scores, const SearchConfig& cfg);

/// Same result computed from per-base score rows; memory stays linear in n.
AssociationResult run_association_streaming(const PairScorer& scorer,
                                            std::span<const Observation> observations,
                                            const SearchConfig& cfg);

/// Picks dense or streaming storage by size.
AssociationResult run_association(const PairScorer& scorer,
                                  std::span<const Observation> observations,
                                  const SearchConfig& cfg);

struct RecoveryReport {
  std::size_t s = 0;
  std::size_t n_candidates = 0;
  std::size_t n_true = 0;
  std::size_t n_unique_true_sets = 0;
  std::size_t n_rso_recovered = 0;
  std::size_t n_rso_represented = 0;
  std::size_t n_rso_recoverable = 0;  // objects with >= 3 observations in the set
  double explored_fraction = 0.0;
};

/// Marks each candidate's is_true flag and tallies recovered objects. Throws
/// ErrorKind::kInput when any observation lacks a truth label.
RecoveryReport evaluate_recovery(std::vector<TripletCandidate>& candidates,
                                 std::span<const Observation> observations);

void write_candidates_csv(const std::filesystem::path& path,
                          std::span<const TripletCandidate> candidates);
void write_recovery_csv(const std::filesystem::path& path, std::span<const RecoveryReport> rows);

}  // namespace ucoassoc::associate
