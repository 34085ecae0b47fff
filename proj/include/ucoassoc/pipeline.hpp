#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ucoassoc/associate.hpp"
#include "ucoassoc/config.hpp"
#include "ucoassoc/neuralnet.hpp"
#include "ucoassoc/orbitsim.hpp"

namespace ucoassoc::pipeline {

inline constexpr const char* kVersion = "0.1.0";

// Files inside the run directory.
inline constexpr const char* kTrainObs = "train_obs.csv";
inline constexpr const char* kValObs = "val_obs.csv";
inline constexpr const char* kTestObs = "test_obs.csv";
inline constexpr const char* kProvenance = "simulate_provenance.json";
inline constexpr const char* kModel = "model.ucom";
inline constexpr const char* kStats = "feature_stats.csv";
inline constexpr const char* kTrainReport = "train_report.csv";
inline constexpr const char* kTrainMetrics = "train_metrics.json";
inline constexpr const char* kTestPairs = "test_pairs.ucof";
inline constexpr const char* kSubset = "subset_obs.csv";
inline constexpr const char* kSubsetScores = "subset_scores.csv";
inline constexpr const char* kHistogram = "score_histogram.csv";
inline constexpr const char* kCalibration = "calibration.csv";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kRecovery = "recovery.csv";
inline constexpr const char* kAssociationMetrics = "association_metrics.json";
inline constexpr const char* kSaliencyDir = "saliency";

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

/// Independent population and id range per split, seeded from the master seed.
orbitsim::ScenarioConfig scenario_for(const ExperimentConfig& cfg, Split split);

/// Seeds of the individual stages, all derived from the master seed.
enum class Stage : std::uint64_t {
  kTrainPairs = 11,
  kValPairs = 12,
  kTestPairs = 13,
  kTraining = 20,
  kSubset = 30,
  kSaliency = 40,
};
std::uint64_t stage_seed(const ExperimentConfig& cfg, Stage stage);

struct SimulateSummary {
  std::array<std::size_t, 3> n_observations{};
  std::array<std::size_t, 3> n_rso{};
  double seconds = 0.0;
};

struct TrainSummary {
  nn::TrainReport report;
  std::size_t feature_count = 0;
  double train_acc = 0.0;  // best model, eval mode
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_match = 0;
  std::size_t n_no_match = 0;

  std::size_t total() const { return n_match + n_no_match; }
  /// NaN for an empty bin.
  double match_rate() const;
};

struct EvaluateSummary {
  double test_acc = 0.0;
  std::size_t n_subset = 0;
  std::size_t n_pairs = 0;
  std::size_t n_match_pairs = 0;
  double base_rate = 0.0;
  std::vector<HistogramBin> histogram;
  std::size_t n_above_095 = 0;
  double match_rate_above_095 = 0.0;
  double no_match_below_02_fraction = 0.0;
  double scoring_seconds = 0.0;
};

struct AssociateSummary {
  std::size_t n_observations = 0;
  std::vector<associate::RecoveryReport> rows;  // one per s, empty for blind input
  double seconds = 0.0;
};

struct SaliencySummary {
  std::vector<std::filesystem::path> files;
  std::size_t n_maps = 0;
  std::size_t distinct_argmax = 0;
};

/// All observations of objects taken in seeded-shuffle order until `n` are
/// collected (the last object may be cut short); returned in obs_id order.
std::vector<orbitsim::Observation> select_subset(std::span<const orbitsim::Observation> obs,
                                                 std::size_t n, std::uint64_t seed);

/// `bins` uniform bins on [0, 1]; a score of exactly 1 falls in the last bin.
std::vector<HistogramBin> score_histogram(std::span<const double> p_match,
                                          std::span<const int> is_match, std::size_t bins);

SimulateSummary cmd_simulate(const ExperimentConfig& cfg);
TrainSummary cmd_train(const ExperimentConfig& cfg);
EvaluateSummary cmd_evaluate(const ExperimentConfig& cfg);
AssociateSummary cmd_associate(const ExperimentConfig& cfg,
                               const std::optional<std::filesystem::path>& observations = {});
/// `pairs` is a CSV with header first_obs,second_obs naming test-set obs_ids;
/// without it, cfg.saliency_pairs balanced pairs are drawn from the test set.
SaliencySummary cmd_saliency(const ExperimentConfig& cfg,
                             const std::optional<std::filesystem::path>& pairs = {});

}  // namespace ucoassoc::pipeline
