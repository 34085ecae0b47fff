#include "ucoassoc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ucoassoc/error.hpp"
#include "ucoassoc/explain.hpp"
#include "ucoassoc/featurize.hpp"
#include "ucoassoc/observation_io.hpp"

namespace ucoassoc::pipeline {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using orbitsim::Observation;

constexpr std::array<const char*, 3> kSplitFiles = {kTrainObs, kValObs, kTestObs};
constexpr std::uint64_t kSplitIdStride = 1'000'000'000ULL;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path in_run(const ExperimentConfig& cfg, const char* name) { return cfg.out_dir / name; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  os << j.dump(2) << '\n';
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

std::vector<Observation> read_split(const ExperimentConfig& cfg, Split split) {
  return orbitsim::read_observations_csv(
      in_run(cfg, kSplitFiles[static_cast<std::size_t>(split)]));
}

std::size_t count_rso(std::span<const Observation> obs) {
  std::set<std::uint64_t> ids;
  for (const auto& o : obs) {
    if (o.rso_id) ids.insert(*o.rso_id);
  }
  return ids.size();
}

struct TrainedArtifacts {
  nn::Mlp model;
  featurize::FeatureStats stats;
};

TrainedArtifacts load_trained(const ExperimentConfig& cfg) {
  TrainedArtifacts t{nn::load_model(in_run(cfg, kModel)), featurize::load_stats_csv(in_run(cfg, kStats))};
  require(t.stats.size() == cfg.features.feature_count() && t.model.input_dim() == t.stats.size(),
          ErrorKind::kConfig,
          "trained model expects " + std::to_string(t.model.input_dim()) +
              " features but the config's feature table yields " +
              std::to_string(cfg.features.feature_count()));
  return t;
}

json run_metadata(const ExperimentConfig& cfg) {
  return {{"seed", cfg.seed}, {"config_sha256", config_hash(cfg)}, {"version", kVersion}};
}

}  // namespace

orbitsim::ScenarioConfig scenario_for(const ExperimentConfig& cfg, Split split) {
  orbitsim::ScenarioConfig sc = cfg.scenario;
  const auto index = static_cast<std::uint64_t>(split);
  sc.seed = derive_seed(cfg.seed, 1 + index);
  sc.id_base = (index + 1) * kSplitIdStride;
  return sc;
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, Stage stage) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(stage));
}

double HistogramBin::match_rate() const {
  return total() == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : static_cast<double>(n_match) / static_cast<double>(total());
}

std::vector<Observation> select_subset(std::span<const Observation> obs, std::size_t n,
                                       std::uint64_t seed) {
  require(n <= obs.size(), ErrorKind::kInput,
          "subset of " + std::to_string(n) + " requested from " + std::to_string(obs.size()) +
              " observations");
  std::map<std::uint64_t, std::vector<std::size_t>> by_rso;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    require(obs[k].rso_id.has_value(), ErrorKind::kInput, "subset selection needs truth labels");
    by_rso[*obs[k].rso_id].push_back(k);
  }
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [rso, members] : by_rso) groups.push_back(&members);
  Rng rng = make_rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);

  // Whole objects in shuffled order; the last one is cut to hit n exactly.
  std::vector<Observation> out;
  for (const auto* g : groups) {
    for (auto k : *g) {
      if (out.size() == n) break;
      out.push_back(obs[k]);
    }
    if (out.size() == n) break;
  }
  std::sort(out.begin(), out.end(),
            [](const Observation& a, const Observation& b) { return a.obs_id < b.obs_id; });
  return out;
}

std::vector<HistogramBin> score_histogram(std::span<const double> p_match,
                                          std::span<const int> is_match, std::size_t bins) {
  require(p_match.size() == is_match.size(), ErrorKind::kShape, "score/label length mismatch");
  require(bins >= 1, ErrorKind::kConfig, "histogram needs at least one bin");
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = static_cast<double>(b) / static_cast<double>(bins);
    out[b].hi = static_cast<double>(b + 1) / static_cast<double>(bins);
  }
  for (std::size_t k = 0; k < p_match.size(); ++k) {
    const double p = std::clamp(p_match[k], 0.0, 1.0);
    const auto b = std::min(static_cast<std::size_t>(p * static_cast<double>(bins)), bins - 1);
    (is_match[k] ? out[b].n_match : out[b].n_no_match)++;
  }
  return out;
}

SimulateSummary cmd_simulate(const ExperimentConfig& cfg) {
  cfg.validate();
  Stopwatch clock;
  ensure_dir(cfg.out_dir);
  SimulateSummary summary;
  json files = json::object();
  for (auto split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto k = static_cast<std::size_t>(split);
    const auto obs = orbitsim::build_scenario(scenario_for(cfg, split));
    const auto path = in_run(cfg, kSplitFiles[k]);
    orbitsim::write_observations_csv(path, obs);
    summary.n_observations[k] = obs.size();
    summary.n_rso[k] = count_rso(obs);
    files[kSplitFiles[k]] = {{"sha256", file_sha256(path)},
                             {"observations", obs.size()},
                             {"rso", summary.n_rso[k]},
                             {"scenario_seed", scenario_for(cfg, split).seed}};
  }
  json provenance = run_metadata(cfg);
  provenance["files"] = files;
  write_json(in_run(cfg, kProvenance), provenance);
  summary.seconds = clock.seconds();
  return summary;
}

TrainSummary cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto train_obs = read_split(cfg, Split::kTrain);
  const auto val_obs = read_split(cfg, Split::kVal);
  const auto test_obs = read_split(cfg, Split::kTest);

  Rng train_rng = make_rng(stage_seed(cfg, Stage::kTrainPairs));
  Rng val_rng = make_rng(stage_seed(cfg, Stage::kValPairs));
  Rng test_rng = make_rng(stage_seed(cfg, Stage::kTestPairs));
  const auto train_pairs =
      featurize::sample_balanced_pairs(train_obs, cfg.train_pairs, cfg.features, train_rng);
  const auto val_pairs =
      featurize::sample_balanced_pairs(val_obs, cfg.val_pairs, cfg.features, val_rng);
  const auto test_pairs =
      featurize::sample_balanced_pairs(test_obs, cfg.test_pairs, cfg.features, test_rng);
  featurize::write_feature_cache(in_run(cfg, kTestPairs), test_pairs);

  Matrix train_x = featurize::to_matrix(train_pairs);
  Matrix val_x = featurize::to_matrix(val_pairs);
  Matrix test_x = featurize::to_matrix(test_pairs);
  const auto stats = featurize::compute_stats(train_x);
  featurize::standardize(train_x, stats);
  featurize::standardize(val_x, stats);
  featurize::standardize(test_x, stats);
  const auto train_y = featurize::labels_of(train_pairs);
  const auto val_y = featurize::labels_of(val_pairs);
  const auto test_y = featurize::labels_of(test_pairs);

  nn::TrainConfig tc = cfg.train;
  tc.seed = stage_seed(cfg, Stage::kTraining);
  auto result = nn::train(train_x, train_y, val_x, val_y, tc);

  TrainSummary summary;
  summary.feature_count = cfg.features.feature_count();
  summary.train_acc = nn::accuracy(result.model.forward_eval(train_x), train_y);
  summary.val_acc = nn::accuracy(result.model.forward_eval(val_x), val_y);
  summary.test_acc = nn::accuracy(result.model.forward_eval(test_x), test_y);
  result.report.test_acc = summary.test_acc;
  summary.report = result.report;

  nn::save_model(in_run(cfg, kModel), result.model);
  featurize::save_stats_csv(in_run(cfg, kStats), stats);
  nn::write_report_csv(in_run(cfg, kTrainReport), result.report);

  json metrics = run_metadata(cfg);
  metrics["accuracy"] = {{"architecture", std::to_string(summary.feature_count) + " Parameters"},
                         {"features", summary.feature_count},
                         {"train_accuracy", summary.train_acc},
                         {"validation_accuracy", summary.val_acc},
                         {"test_accuracy", summary.test_acc},
                         {"best_epoch", result.report.best_epoch},
                         {"epochs", result.report.epochs.size()}};
  metrics["timing"] = {{"train_seconds", result.report.seconds}};
  write_json(in_run(cfg, kTrainMetrics), metrics);
  return summary;
}

EvaluateSummary cmd_evaluate(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto trained = load_trained(cfg);
  EvaluateSummary summary;

  // Balanced accuracy on the persisted test pairs.
  const auto test_pairs = featurize::read_feature_cache(in_run(cfg, kTestPairs));
  Matrix test_x = featurize::to_matrix(test_pairs);
  featurize::standardize(test_x, trained.stats);
  summary.test_acc = nn::accuracy(trained.model.forward_eval(test_x), featurize::labels_of(test_pairs));

  const auto test_obs = read_split(cfg, Split::kTest);
  const auto subset = select_subset(test_obs, cfg.subset_size, stage_seed(cfg, Stage::kSubset));
  orbitsim::write_observations_csv(in_run(cfg, kSubset), subset);
  summary.n_subset = subset.size();

  associate::PairScorer scorer(trained.model, trained.stats, cfg.features);
  Stopwatch clock;
  const auto scores = associate::score_all_pairs(scorer, subset);
  summary.scoring_seconds = clock.seconds();

  std::vector<double> p_match;
  std::vector<int> is_match;
  {
    std::ofstream os(in_run(cfg, kSubsetScores), std::ios::binary);
    require(os.good(), ErrorKind::kIo, "cannot write subset scores");
    os << "first_obs,second_obs,p_match,is_match\n";
    char buf[96];
    for (std::size_t i = 0; i < subset.size(); ++i) {
      for (std::size_t j = i + 1; j < subset.size(); ++j) {
        const double p = 1.0 - scores(i, j);
        const int m = *subset[i].rso_id == *subset[j].rso_id;
        p_match.push_back(p);
        is_match.push_back(m);
        std::snprintf(buf, sizeof buf, "%llu,%llu,%.17g,%d\n",
                      static_cast<unsigned long long>(subset[i].obs_id),
                      static_cast<unsigned long long>(subset[j].obs_id), p, m);
        os << buf;
      }
    }
    require(os.good(), ErrorKind::kIo, "write failed for subset scores");
  }
  summary.n_pairs = p_match.size();
  summary.n_match_pairs = static_cast<std::size_t>(std::count(is_match.begin(), is_match.end(), 1));
  summary.base_rate = static_cast<double>(summary.n_match_pairs) / static_cast<double>(summary.n_pairs);
  summary.histogram = score_histogram(p_match, is_match, cfg.histogram_bins);

  std::size_t above_match = 0;
  std::size_t no_match = 0;
  std::size_t no_match_low = 0;
  for (std::size_t k = 0; k < p_match.size(); ++k) {
    if (p_match[k] > 0.95) {
      ++summary.n_above_095;
      above_match += is_match[k];
    }
    if (!is_match[k]) {
      ++no_match;
      no_match_low += p_match[k] < 0.2;
    }
  }
  summary.match_rate_above_095 =
      summary.n_above_095 ? static_cast<double>(above_match) / static_cast<double>(summary.n_above_095) : 0.0;
  summary.no_match_below_02_fraction =
      no_match ? static_cast<double>(no_match_low) / static_cast<double>(no_match) : 0.0;

  {
    std::ofstream hist(in_run(cfg, kHistogram), std::ios::binary);
    std::ofstream cal(in_run(cfg, kCalibration), std::ios::binary);
    require(hist.good() && cal.good(), ErrorKind::kIo, "cannot write histogram outputs");
    hist << "bin_lo,bin_hi,n_match,n_no_match\n";
    cal << "bin_lo,bin_hi,n_pairs,match_rate,base_rate\n";
    char buf[160];
    for (const auto& b : summary.histogram) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%zu\n", b.lo, b.hi, b.n_match, b.n_no_match);
      hist << buf;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%.17g,%.17g\n", b.lo, b.hi, b.total(),
                    b.total() ? b.match_rate() : 0.0, summary.base_rate);
      cal << buf;
    }
  }

  json metrics = run_metadata(cfg);
  if (fs::exists(in_run(cfg, kTrainMetrics))) {
    metrics["accuracy"] = read_json(in_run(cfg, kTrainMetrics))["accuracy"];
  }
  metrics["balanced_test_accuracy"] = summary.test_acc;
  json bins = json::array();
  for (const auto& b : summary.histogram) {
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"n_match", b.n_match},
                    {"n_no_match", b.n_no_match},
                    {"match_rate", b.total() ? json(b.match_rate()) : json(nullptr)}});
  }
  metrics["subset"] = {{"observations", summary.n_subset},
                       {"rso", count_rso(subset)},
                       {"pairs", summary.n_pairs},
                       {"match_pairs", summary.n_match_pairs},
                       {"base_rate", summary.base_rate},
                       {"pairs_above_0.95", summary.n_above_095},
                       {"match_rate_above_0.95", summary.match_rate_above_095},
                       {"no_match_fraction_below_0.2", summary.no_match_below_02_fraction},
                       {"histogram", bins}};
  metrics["timing"] = {{"score_all_pairs_seconds", summary.scoring_seconds}};
  write_json(in_run(cfg, kMetrics), metrics);
  return summary;
}

AssociateSummary cmd_associate(const ExperimentConfig& cfg,
                               const std::optional<fs::path>& observations) {
  cfg.validate();
  const fs::path source = observations.value_or(in_run(cfg, kSubset));
  const auto obs = orbitsim::read_observations_csv(source);
  require(obs.size() >= 3, ErrorKind::kInput,
          source.string() + " holds " + std::to_string(obs.size()) +
              " observations; association needs at least 3");
  const bool labeled = std::all_of(obs.begin(), obs.end(),
                                   [](const Observation& o) { return o.rso_id.has_value(); });
  const auto trained = load_trained(cfg);

  Stopwatch clock;
  AssociateSummary summary;
  summary.n_observations = obs.size();
  associate::PairScorer scorer(trained.model, trained.stats, cfg.features);
  std::optional<associate::ScoreMatrix> dense;
  if (obs.size() <= associate::kDenseScoreLimit) dense = associate::score_all_pairs(scorer, obs);

  for (auto s : cfg.s_values) {
    associate::SearchConfig sc;
    sc.prune_threshold = cfg.prune_threshold;
    sc.solutions_per_base = s;
    auto result = dense ? associate::run_association(*dense, sc)
                        : associate::run_association_streaming(scorer, obs, sc);
    if (labeled) {
      auto report = associate::evaluate_recovery(result.candidates, obs);
      report.s = s;
      summary.rows.push_back(report);
    }
    associate::write_candidates_csv(cfg.out_dir / ("candidates_s" + std::to_string(s) + ".csv"),
                                    result.candidates);
  }
  summary.seconds = clock.seconds();

  if (labeled) {
    associate::write_recovery_csv(in_run(cfg, kRecovery), summary.rows);
    json metrics = run_metadata(cfg);
    json rows = json::array();
    for (const auto& r : summary.rows) {
      rows.push_back({{"s", r.s},
                      {"n_candidates", r.n_candidates},
                      {"n_true", r.n_true},
                      {"n_unique_true_sets", r.n_unique_true_sets},
                      {"n_rso_recovered", r.n_rso_recovered},
                      {"explored_fraction", r.explored_fraction}});
    }
    metrics["observations"] = obs.size();
    metrics["prune_threshold"] = cfg.prune_threshold;
    metrics["rso_represented"] = summary.rows.front().n_rso_represented;
    metrics["rso_with_3_or_more_observations"] = summary.rows.front().n_rso_recoverable;
    metrics["recovery"] = rows;
    metrics["timing"] = {{"associate_seconds", summary.seconds}};
    write_json(in_run(cfg, kAssociationMetrics), metrics);
  }
  return summary;
}

SaliencySummary cmd_saliency(const ExperimentConfig& cfg, const std::optional<fs::path>& pairs) {
  cfg.validate();
  const auto trained = load_trained(cfg);
  const auto test_obs = read_split(cfg, Split::kTest);

  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  if (pairs) {
    std::map<std::uint64_t, std::size_t> index_of;
    for (std::size_t k = 0; k < test_obs.size(); ++k) index_of[test_obs[k].obs_id] = k;
    std::ifstream is(*pairs, std::ios::binary);
    require(is.good(), ErrorKind::kIo, "cannot read " + pairs->string());
    std::string line;
    require(std::getline(is, line) && line.rfind("first_obs,second_obs", 0) == 0,
            ErrorKind::kFormat, pairs->string() + ": expected header first_obs,second_obs");
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      unsigned long long a = 0;
      unsigned long long b = 0;
      require(std::sscanf(line.c_str(), "%llu,%llu", &a, &b) == 2, ErrorKind::kFormat,
              pairs->string() + ": bad row '" + line + "'");
      const auto ia = index_of.find(a);
      const auto ib = index_of.find(b);
      require(ia != index_of.end() && ib != index_of.end() && a != b, ErrorKind::kInput,
              "pair (" + std::to_string(a) + ", " + std::to_string(b) +
                  ") does not name two test observations");
      chosen.emplace_back(ia->second, ib->second);
    }
  } else {
    Rng rng = make_rng(stage_seed(cfg, Stage::kSaliency));
    const std::size_t even = cfg.saliency_pairs + cfg.saliency_pairs % 2;
    for (const auto& p : featurize::sample_balanced_indices(test_obs, even, rng)) {
      if (chosen.size() < cfg.saliency_pairs) chosen.emplace_back(p.first, p.second);
    }
  }

  const fs::path dir = cfg.out_dir / kSaliencyDir;
  ensure_dir(dir);
  SaliencySummary summary;
  std::set<std::size_t> argmax;
  for (const auto& [a, b] : chosen) {
    auto pf = featurize::pair_features(test_obs[a], test_obs[b], cfg.features);
    featurize::standardize(std::span<double>(pf.values), trained.stats);
    const auto map = explain::saliency_map(trained.model, pf);
    const auto csv = dir / (map.file_stem() + ".csv");
    const auto pgm = dir / (map.file_stem() + ".pgm");
    explain::write_saliency_csv(csv, map);
    explain::write_saliency_pgm(pgm, map);
    summary.files.push_back(csv);
    summary.files.push_back(pgm);
    argmax.insert(map.argmax_cell());
    ++summary.n_maps;
  }
  summary.distinct_argmax = argmax.size();
  return summary;
}

}  // namespace ucoassoc::pipeline
