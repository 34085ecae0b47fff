#include "ucoassoc/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "ucoassoc/binary_io.hpp"
#include "ucoassoc/error.hpp"

namespace ucoassoc::featurize {
namespace {

constexpr std::array<std::string_view, kBaseCount> kBaseNames = {
    "epoch", "obs_unit_x", "obs_unit_y", "obs_unit_z", "obs_pos_magnitude", "los_x",
    "los_y", "los_z", "losr_x", "losr_y", "losr_z", "streak_magnitude"};

constexpr char kCacheMagic[4] = {'U', 'C', 'O', 'F'};
constexpr std::uint32_t kCacheVersion = 1;
constexpr std::uint8_t kUnlabeled = 255;

void check_indices(const std::vector<std::size_t>& idx, const char* name) {
  for (auto i : idx) {
    require(i < kBaseCount, ErrorKind::kConfig,
            std::string("feature table ") + name + " references parameter " + std::to_string(i));
  }
  auto sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::kConfig,
          std::string("feature table ") + name + " lists a parameter twice");
}

}  // namespace

std::string_view base_param_name(std::size_t index) {
  require(index < kBaseCount, ErrorKind::kDomain, "base parameter index out of range");
  return kBaseNames[index];
}

std::size_t base_param_index(std::string_view name) {
  for (std::size_t k = 0; k < kBaseCount; ++k) {
    if (kBaseNames[k] == name) return k;
  }
  fail(ErrorKind::kConfig, "unknown base parameter '" + std::string(name) + "'");
}

FeatureTable FeatureTable::standard() {
  FeatureTable t;
  t.numerator_later = {kLosX, kLosY, kLosZ, kLosRateX, kLosRateY, kLosRateZ, kStreakMagnitude};
  t.numerator_earlier = t.numerator_later;
  t.denominator = {kEpoch, kObsUnitX, kObsUnitY, kObsUnitZ, kObsMagnitude,
                   kLosRateX, kLosRateY, kLosRateZ};
  return t;
}

FeatureTable FeatureTable::base_only() { return FeatureTable{{}, {}, {}, 1e-9, 1e9}; }

void FeatureTable::validate() const {
  check_indices(numerator_later, "q");
  check_indices(numerator_earlier, "r");
  check_indices(denominator, "s");
  require(denominator_floor > 0.0 && overflow_cap > 0.0, ErrorKind::kConfig,
          "denominator floor and overflow cap must be positive");
}

BaseParams base_params(const Observation& obs) {
  const double mag = obs.observer_pos.norm();
  require(mag > 0.0 && std::isfinite(mag), ErrorKind::kInput,
          "observation " + std::to_string(obs.obs_id) + " has zero observer position");
  const orbitsim::Vec3 unit = obs.observer_pos / mag;
  return {obs.epoch_s,   unit.x(),          unit.y(),          unit.z(),
          mag,           obs.los.x(),       obs.los.y(),       obs.los.z(),
          obs.los_rate.x(), obs.los_rate.y(), obs.los_rate.z(), obs.los_rate.norm() * obs.streak_s};
}

bool comes_first(const Observation& a, const Observation& b) {
  if (a.epoch_s != b.epoch_s) return a.epoch_s < b.epoch_s;
  return a.obs_id < b.obs_id;
}

void pair_features_into(const BaseParams& earlier, const BaseParams& later,
                        const FeatureTable& table, std::span<double> out) {
  if (out.size() != table.feature_count()) fail(ErrorKind::kShape, "pair feature buffer has wrong length");
  std::copy(earlier.begin(), earlier.end(), out.begin());
  std::copy(later.begin(), later.end(), out.begin() + kBaseCount);

  const double floor = table.denominator_floor;
  const double cap = table.overflow_cap;
  double den[kBaseCount];
  for (std::size_t si = 0; si < table.denominator.size(); ++si) {
    const auto s = table.denominator[si];
    den[si] = later[s] - earlier[s];
    if (std::abs(den[si]) < floor) den[si] = std::copysign(floor, den[si]);
  }

  auto it = out.begin() + kPairBaseCount;
  for (auto q : table.numerator_later) {
    for (auto r : table.numerator_earlier) {
      const double num = later[q] - earlier[r];
      for (std::size_t si = 0; si < table.denominator.size(); ++si) {
        *it++ = std::clamp(num / den[si], -cap, cap);
      }
    }
  }
}

std::vector<double> pair_features(const BaseParams& a, const BaseParams& b,
                                  const FeatureTable& table) {
  std::vector<double> out(table.feature_count());
  if (b[kEpoch] < a[kEpoch]) {
    pair_features_into(b, a, table, out);
  } else {
    pair_features_into(a, b, table, out);
  }
  return out;
}

PairFeatures pair_features(const Observation& a, const Observation& b, const FeatureTable& table) {
  const bool a_first = comes_first(a, b);
  const Observation& earlier = a_first ? a : b;
  const Observation& later = a_first ? b : a;

  PairFeatures pf;
  pf.values.resize(table.feature_count());
  pair_features_into(base_params(earlier), base_params(later), table, pf.values);
  pf.first_id = earlier.obs_id;
  pf.second_id = later.obs_id;
  if (a.rso_id && b.rso_id) pf.label = *a.rso_id == *b.rso_id ? Label::kMatch : Label::kNoMatch;
  return pf;
}

Matrix to_matrix(std::span<const PairFeatures> pairs) {
  if (pairs.empty()) return Matrix(0, 0);
  const auto cols = pairs.front().values.size();
  Matrix m(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    require(pairs[i].values.size() == cols, ErrorKind::kShape, "ragged pair feature rows");
    std::copy(pairs[i].values.begin(), pairs[i].values.end(), m.row(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

std::vector<int> labels_of(std::span<const PairFeatures> pairs) {
  std::vector<int> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    require(p.label.has_value(), ErrorKind::kInput, "pair has no truth label");
    out.push_back(static_cast<int>(*p.label));
  }
  return out;
}

FeatureStats compute_stats(const Matrix& features, double std_floor) {
  const auto rows = features.rows();
  const auto cols = features.cols();
  require(rows >= 1, ErrorKind::kInput, "cannot compute feature statistics of an empty set");
  FeatureStats stats;
  stats.mean.assign(static_cast<std::size_t>(cols), 0.0);
  stats.std.assign(static_cast<std::size_t>(cols), 0.0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) stats.mean[j] += features(i, j);
  }
  const auto n = static_cast<double>(rows);
  for (auto& m : stats.mean) m /= n;
  // Corrected two-pass: the residual sum repairs rounding in the first-pass mean.
  std::vector<double> resid(static_cast<std::size_t>(cols), 0.0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double d = features(i, j) - stats.mean[j];
      resid[j] += d;
      stats.std[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < stats.size(); ++j) {
    const double var = std::max((stats.std[j] - resid[j] * resid[j] / n) / n, 0.0);
    stats.mean[j] += resid[j] / n;
    stats.std[j] = std::max(std::sqrt(var), std_floor);
  }
  return stats;
}

void standardize(std::span<double> row, const FeatureStats& stats) {
  if (row.size() != stats.size() || stats.std.size() != stats.size()) {
    fail(ErrorKind::kShape, "feature statistics length " + std::to_string(stats.size()) +
                                " does not match feature length " + std::to_string(row.size()));
  }
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - stats.mean[j]) / stats.std[j];
}

void standardize(Matrix& features, const FeatureStats& stats) {
  require(static_cast<std::size_t>(features.cols()) == stats.size() &&
              stats.std.size() == stats.size(),
          ErrorKind::kShape,
          "feature statistics length " + std::to_string(stats.size()) +
              " does not match feature length " + std::to_string(features.cols()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    standardize(std::span<double>(features.row(i).data(), stats.size()), stats);
  }
}

std::vector<PairFeatures> standardize(std::vector<PairFeatures> pairs, const FeatureStats& stats) {
  for (auto& p : pairs) standardize(std::span<double>(p.values), stats);
  return pairs;
}

void unstandardize(Matrix& features, const FeatureStats& stats) {
  require(static_cast<std::size_t>(features.cols()) == stats.size(), ErrorKind::kShape,
          "feature statistics length mismatch");
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      features(i, j) = features(i, j) * stats.std[j] + stats.mean[j];
    }
  }
}

void save_stats_csv(const std::filesystem::path& path, const FeatureStats& stats) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  os << "index,mean,std\n";
  char buf[96];
  for (std::size_t k = 0; k < stats.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", k, stats.mean[k], stats.std[k]);
    os << buf;
  }
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

FeatureStats load_stats_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::string line;
  require(std::getline(is, line) && line == "index,mean,std", ErrorKind::kFormat,
          path.string() + ": bad feature statistics header");
  FeatureStats stats;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t index = 0;
    double mean = 0.0;
    double sd = 0.0;
    require(std::sscanf(line.c_str(), "%zu,%lf,%lf", &index, &mean, &sd) == 3 &&
                index == stats.size(),
            ErrorKind::kFormat, path.string() + ": bad row '" + line + "'");
    stats.mean.push_back(mean);
    stats.std.push_back(sd);
  }
  return stats;
}

std::vector<PairIndex> sample_balanced_indices(std::span<const Observation> observations,
                                               std::size_t n_pairs, Rng& rng) {
  require(n_pairs >= 2 && n_pairs % 2 == 0, ErrorKind::kInput, "n_pairs must be even and >= 2");
  const std::size_t n = observations.size();

  std::map<std::uint64_t, std::vector<std::size_t>> by_rso;
  for (std::size_t i = 0; i < n; ++i) {
    require(observations[i].rso_id.has_value(), ErrorKind::kInput,
            "balanced sampling needs truth labels");
    by_rso[*observations[i].rso_id].push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> groups;
  std::vector<double> group_weight;
  std::uint64_t match_total = 0;
  for (const auto& [rso, members] : by_rso) {
    const std::uint64_t k = members.size();
    if (k < 2) continue;
    groups.push_back(&members);
    group_weight.push_back(static_cast<double>(k * (k - 1) / 2));
    match_total += k * (k - 1) / 2;
  }
  const std::uint64_t all_pairs = static_cast<std::uint64_t>(n) * (n - (n > 0 ? 1 : 0)) / 2;
  const std::uint64_t nomatch_total = all_pairs - match_total;
  const std::uint64_t half = n_pairs / 2;
  require(half <= match_total && half <= nomatch_total, ErrorKind::kSamplingExhausted,
          "requested " + std::to_string(half) + " pairs per class but only " +
              std::to_string(match_total) + " match / " + std::to_string(nomatch_total) +
              " no-match pairs exist");

  auto canonical = [&](std::size_t a, std::size_t b, Label label) {
    return comes_first(observations[a], observations[b]) ? PairIndex{a, b, label}
                                                         : PairIndex{b, a, label};
  };
  auto key = [](std::size_t a, std::size_t b) {
    return a < b ? std::pair<std::size_t, std::size_t>{a, b} : std::pair<std::size_t, std::size_t>{b, a};
  };

  std::vector<PairIndex> out;
  out.reserve(n_pairs);
  std::set<std::pair<std::size_t, std::size_t>> seen;

  // Same-object pairs. Dense requests enumerate, sparse ones use rejection.
  if (2 * half > match_total) {
    std::vector<PairIndex> all;
    for (const auto* g : groups) {
      for (std::size_t a = 0; a < g->size(); ++a) {
        for (std::size_t b = a + 1; b < g->size(); ++b) {
          all.push_back(canonical((*g)[a], (*g)[b], Label::kMatch));
        }
      }
    }
    std::shuffle(all.begin(), all.end(), rng);
    out.insert(out.end(), all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half));
  } else {
    std::discrete_distribution<std::size_t> pick_group(group_weight.begin(), group_weight.end());
    while (seen.size() < half) {
      const auto& g = *groups[pick_group(rng)];
      std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
      const auto a = g[pick(rng)];
      const auto b = g[pick(rng)];
      if (a == b || !seen.insert(key(a, b)).second) continue;
      out.push_back(canonical(a, b, Label::kMatch));
    }
  }

  if (2 * half > nomatch_total) {
    std::vector<PairIndex> all;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (*observations[a].rso_id != *observations[b].rso_id) {
          all.push_back(canonical(a, b, Label::kNoMatch));
        }
      }
    }
    std::shuffle(all.begin(), all.end(), rng);
    out.insert(out.end(), all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t taken = 0;
    while (taken < half) {
      const auto a = pick(rng);
      const auto b = pick(rng);
      if (a == b || *observations[a].rso_id == *observations[b].rso_id) continue;
      if (!seen.insert(key(a, b)).second) continue;
      out.push_back(canonical(a, b, Label::kNoMatch));
      ++taken;
    }
  }

  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<PairFeatures> sample_balanced_pairs(std::span<const Observation> observations,
                                                std::size_t n_pairs, const FeatureTable& table,
                                                Rng& rng) {
  table.validate();
  const auto idx = sample_balanced_indices(observations, n_pairs, rng);
  std::vector<PairFeatures> out;
  out.reserve(idx.size());
  for (const auto& p : idx) {
    out.push_back(pair_features(observations[p.first], observations[p.second], table));
  }
  return out;
}

void write_feature_cache(const std::filesystem::path& path, std::span<const PairFeatures> pairs) {
  const std::uint64_t cols = pairs.empty() ? 0 : pairs.front().values.size();
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  binary::put_bytes(os, kCacheMagic, 4);
  binary::put<std::uint32_t>(os, kCacheVersion);
  binary::put<std::uint64_t>(os, pairs.size());
  binary::put<std::uint64_t>(os, cols);
  binary::put<std::uint64_t>(os, 0);
  for (const auto& p : pairs) {
    require(p.values.size() == cols, ErrorKind::kShape, "ragged pair feature rows");
    binary::put_bytes(os, p.values.data(), cols * sizeof(double));
  }
  for (const auto& p : pairs) {
    binary::put<std::uint8_t>(os, p.label ? static_cast<std::uint8_t>(*p.label) : kUnlabeled);
  }
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<PairFeatures> read_feature_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  binary::Reader in(is, path.string());
  char magic[4];
  in.get_bytes(magic, 4);
  require(std::equal(magic, magic + 4, kCacheMagic), ErrorKind::kFormat,
          path.string() + ": not a feature cache");
  require(in.get<std::uint32_t>() == kCacheVersion, ErrorKind::kFormat,
          path.string() + ": unsupported feature cache version");
  const auto rows = in.get<std::uint64_t>();
  const auto cols = in.get<std::uint64_t>();
  in.get<std::uint64_t>();

  std::vector<PairFeatures> out(rows);
  for (auto& p : out) {
    p.values.resize(cols);
    in.get_bytes(p.values.data(), cols * sizeof(double));
  }
  for (auto& p : out) {
    const auto b = in.get<std::uint8_t>();
    require(b <= 1 || b == kUnlabeled, ErrorKind::kFormat, path.string() + ": bad label byte");
    if (b != kUnlabeled) p.label = static_cast<Label>(b);
  }
  in.expect_end();
  return out;
}

}  // namespace ucoassoc::featurize
