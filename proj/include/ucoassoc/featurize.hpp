#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ucoassoc/linalg.hpp"
#include "ucoassoc/orbitsim.hpp"
#include "ucoassoc/rng.hpp"

namespace ucoassoc::featurize {

using orbitsim::Observation;

inline constexpr std::size_t kBaseCount = 12;
inline constexpr std::size_t kPairBaseCount = 2 * kBaseCount;

/// Per-observation parameters in this fixed order.
enum BaseIndex : std::size_t {
  kEpoch = 0,
  kObsUnitX,
  kObsUnitY,
  kObsUnitZ,
  kObsMagnitude,
  kLosX,
  kLosY,
  kLosZ,
  kLosRateX,
  kLosRateY,
  kLosRateZ,
  kStreakMagnitude,
};

using BaseParams = std::array<double, kBaseCount>;

std::string_view base_param_name(std::size_t index);
/// Inverse of base_param_name; throws ErrorKind::kConfig for unknown names.
std::size_t base_param_index(std::string_view name);

/// Which base parameters enter the ratio features
///   (later[q] - earlier[r]) / (later[s] - earlier[s])
/// emitted for every (q, r, s) in lexicographic order.
struct FeatureTable {
  std::vector<std::size_t> numerator_later;    // q
  std::vector<std::size_t> numerator_earlier;  // r
  std::vector<std::size_t> denominator;        // s
  double denominator_floor = 1e-9;
  double overflow_cap = 1e9;

  /// 7 x 7 x 8 ratios: line-of-sight geometry over observing baseline.
  static FeatureTable standard();
  /// No ratios, only the 24 copied base parameters.
  static FeatureTable base_only();

  std::size_t derived_count() const {
    return numerator_later.size() * numerator_earlier.size() * denominator.size();
  }
  std::size_t feature_count() const { return kPairBaseCount + derived_count(); }
  void validate() const;
};

enum class Label : std::uint8_t { kNoMatch = 0, kMatch = 1 };

struct PairFeatures {
  std::vector<double> values;
  std::optional<Label> label;
  std::uint64_t first_id = 0;  // earlier observation
  std::uint64_t second_id = 0;
};

BaseParams base_params(const Observation& obs);

/// True when `a` is the earlier member of the pair (epoch, then obs_id).
bool comes_first(const Observation& a, const Observation& b);

/// Writes the feature vector for an already canonical pair into `out`
/// (size feature_count()).
void pair_features_into(const BaseParams& earlier, const BaseParams& later,
                        const FeatureTable& table, std::span<double> out);

/// Orders the pair by epoch first; equal epochs keep argument order.
std::vector<double> pair_features(const BaseParams& a, const BaseParams& b,
                                  const FeatureTable& table);

/// Canonical ordering with obs_id tie-break; label filled when both carry rso_id.
PairFeatures pair_features(const Observation& a, const Observation& b, const FeatureTable& table);

Matrix to_matrix(std::span<const PairFeatures> pairs);
std::vector<int> labels_of(std::span<const PairFeatures> pairs);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;  // population std, already floored
  static constexpr double kStdFloor = 1e-12;

  std::size_t size() const { return mean.size(); }
};

/// Deterministic two-pass column statistics.
FeatureStats compute_stats(const Matrix& features, double std_floor = FeatureStats::kStdFloor);

void standardize(Matrix& features, const FeatureStats& stats);
void standardize(std::span<double> row, const FeatureStats& stats);
std::vector<PairFeatures> standardize(std::vector<PairFeatures> pairs, const FeatureStats& stats);
void unstandardize(Matrix& features, const FeatureStats& stats);

void save_stats_csv(const std::filesystem::path& path, const FeatureStats& stats);
FeatureStats load_stats_csv(const std::filesystem::path& path);

struct PairIndex {
  std::size_t first = 0;  // index into the observation sequence, canonical order
  std::size_t second = 0;
  Label label = Label::kNoMatch;
};

/// n_pairs/2 same-object pairs and n_pairs/2 different-object pairs, no unordered
/// pair repeated, in shuffled order.
std::vector<PairIndex> sample_balanced_indices(std::span<const Observation> observations,
                                               std::size_t n_pairs, Rng& rng);

std::vector<PairFeatures> sample_balanced_pairs(std::span<const Observation> observations,
                                                std::size_t n_pairs, const FeatureTable& table,
                                                Rng& rng);

/// Binary cache: 32-byte header (magic "UCOF", u32 version, u64 rows, u64 cols,
/// 8 reserved), row-major f64 values, then one label byte per row (255 = unlabeled).
void write_feature_cache(const std::filesystem::path& path, std::span<const PairFeatures> pairs);
std::vector<PairFeatures> read_feature_cache(const std::filesystem::path& path);

}  // namespace ucoassoc::featurize
