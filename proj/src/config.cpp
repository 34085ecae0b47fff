#include "ucoassoc/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "ucoassoc/error.hpp"

namespace ucoassoc {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed", "out"}},
      {"scenario",
       {"n_observations", "window_s", "obs_per_sat_min", "obs_per_sat_max", "streak_s",
        "noise_sigma_m", "elevation_mask_deg", "semi_major_axis_km", "eccentricity",
        "inclination_deg", "raan_deg", "arg_perigee_deg", "mean_anomaly_deg"}},
      {"features", {"q", "r", "s", "denominator_floor", "overflow_cap"}},
      {"network", {"hidden"}},
      {"train",
       {"learning_rate", "lr_floor", "lr_decay", "plateau_patience", "batch_size", "epochs",
        "adam_beta1", "adam_beta2", "adam_epsilon"}},
      {"search", {"d", "s"}},
      {"splits", {"train_pairs", "val_pairs", "test_pairs", "subset_size"}},
      {"evaluate", {"histogram_bins"}},
      {"saliency", {"pairs"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
void read(const pt::ptree& tree, const char* key, T& target) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return;
  try {
    std::istringstream ss(trim(*node));
    T value{};
    ss >> value;
    require(!ss.fail() && ss.eof(), ErrorKind::kConfig, "");
    target = value;
  } catch (const Error&) {
    fail(ErrorKind::kConfig, std::string("bad value for ") + key + ": '" + *node + "'");
  }
}

void read_interval(const pt::ptree& tree, const char* key, orbitsim::Interval& target) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return;
  const auto parts = split_list(*node);
  require(parts.size() == 2, ErrorKind::kConfig,
          std::string(key) + " needs two comma-separated bounds");
  try {
    target = {std::stod(parts[0]), std::stod(parts[1])};
  } catch (const std::exception&) {
    fail(ErrorKind::kConfig, std::string("bad bounds for ") + key);
  }
}

void read_params(const pt::ptree& tree, const char* key, std::vector<std::size_t>& target) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return;
  target.clear();
  for (const auto& name : split_list(*node)) target.push_back(featurize::base_param_index(name));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + std::to_string(v[k]);
  return out;
}

std::string join_params(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out += (k ? "," : "") + std::string(featurize::base_param_name(v[k]));
  }
  return out;
}

std::string interval(const orbitsim::Interval& iv) { return fmt(iv.lo) + "," + fmt(iv.hi); }

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == item.size() && item.find('-') == std::string::npos, ErrorKind::kConfig,
            "bad list entry '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void ExperimentConfig::validate() const {
  scenario.validate();
  features.validate();
  train.validate();
  require(prune_threshold >= 0.0 && prune_threshold <= 1.0, ErrorKind::kConfig,
          "search.d must lie in [0, 1]");
  require(!s_values.empty(), ErrorKind::kConfig, "search.s list must not be empty");
  for (auto s : s_values) require(s >= 1, ErrorKind::kConfig, "search.s entries must be >= 1");
  require(train_pairs >= 2 && train_pairs % 2 == 0 && val_pairs >= 2 && val_pairs % 2 == 0 &&
              test_pairs >= 2 && test_pairs % 2 == 0,
          ErrorKind::kConfig, "pair counts must be even and >= 2");
  require(subset_size >= 3, ErrorKind::kConfig, "splits.subset_size must be >= 3");
  require(histogram_bins >= 1, ErrorKind::kConfig, "evaluate.histogram_bins must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream ss(text);
    pt::ini_parser::read_ini(ss, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::kConfig, std::string("config parse error: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    require(it != known_keys().end(), ErrorKind::kConfig, "unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      require(it->second.count(key) == 1, ErrorKind::kConfig,
              "unknown key '" + key + "' in [" + section + "]");
    }
  }

  ExperimentConfig cfg;
  const pt::ptree empty;
  auto section = [&](const char* name) -> const pt::ptree& {
    const auto child = tree.get_child_optional(name);
    return child ? *child : empty;
  };

  const auto& run = section("run");
  read(run, "seed", cfg.seed);
  if (const auto out = run.get_optional<std::string>("out")) cfg.out_dir = trim(*out);

  const auto& sc = section("scenario");
  read(sc, "n_observations", cfg.scenario.n_observations);
  read(sc, "window_s", cfg.scenario.window_s);
  read(sc, "obs_per_sat_min", cfg.scenario.obs_per_sat_min);
  read(sc, "obs_per_sat_max", cfg.scenario.obs_per_sat_max);
  read(sc, "streak_s", cfg.scenario.streak_s);
  read(sc, "noise_sigma_m", cfg.scenario.noise_sigma_m);
  read(sc, "elevation_mask_deg", cfg.scenario.elevation_mask_deg);
  auto& ranges = cfg.scenario.element_ranges;
  read_interval(sc, "semi_major_axis_km", ranges.semi_major_axis_km);
  read_interval(sc, "eccentricity", ranges.eccentricity);
  read_interval(sc, "inclination_deg", ranges.inclination_deg);
  read_interval(sc, "raan_deg", ranges.raan_deg);
  read_interval(sc, "arg_perigee_deg", ranges.arg_perigee_deg);
  read_interval(sc, "mean_anomaly_deg", ranges.mean_anomaly_deg);

  const auto& ft = section("features");
  read_params(ft, "q", cfg.features.numerator_later);
  read_params(ft, "r", cfg.features.numerator_earlier);
  read_params(ft, "s", cfg.features.denominator);
  read(ft, "denominator_floor", cfg.features.denominator_floor);
  read(ft, "overflow_cap", cfg.features.overflow_cap);

  if (const auto hidden = section("network").get_optional<std::string>("hidden")) {
    cfg.train.hidden = parse_size_list(*hidden);
  }

  const auto& tr = section("train");
  read(tr, "learning_rate", cfg.train.learning_rate);
  read(tr, "lr_floor", cfg.train.lr_floor);
  read(tr, "lr_decay", cfg.train.lr_decay);
  read(tr, "plateau_patience", cfg.train.plateau_patience);
  read(tr, "batch_size", cfg.train.batch_size);
  read(tr, "epochs", cfg.train.epochs);
  read(tr, "adam_beta1", cfg.train.adam.beta1);
  read(tr, "adam_beta2", cfg.train.adam.beta2);
  read(tr, "adam_epsilon", cfg.train.adam.epsilon);

  const auto& search = section("search");
  read(search, "d", cfg.prune_threshold);
  if (const auto s = search.get_optional<std::string>("s")) cfg.s_values = parse_size_list(*s);

  const auto& splits = section("splits");
  read(splits, "train_pairs", cfg.train_pairs);
  read(splits, "val_pairs", cfg.val_pairs);
  read(splits, "test_pairs", cfg.test_pairs);
  read(splits, "subset_size", cfg.subset_size);

  read(section("evaluate"), "histogram_bins", cfg.histogram_bins);
  read(section("saliency"), "pairs", cfg.saliency_pairs);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.s_values) cfg.s_values = *o.s_values;
  if (o.prune_threshold) cfg.prune_threshold = *o.prune_threshold;
  cfg.validate();
}

std::string render_config(const ExperimentConfig& c) {
  const auto& sc = c.scenario;
  const auto& r = sc.element_ranges;
  std::ostringstream os;
  os << "[run]\nseed = " << c.seed << "\nout = " << c.out_dir.string() << "\n\n"
     << "[scenario]\nn_observations = " << sc.n_observations << "\nwindow_s = " << fmt(sc.window_s)
     << "\nobs_per_sat_min = " << sc.obs_per_sat_min << "\nobs_per_sat_max = " << sc.obs_per_sat_max
     << "\nstreak_s = " << fmt(sc.streak_s) << "\nnoise_sigma_m = " << fmt(sc.noise_sigma_m)
     << "\nelevation_mask_deg = " << fmt(sc.elevation_mask_deg)
     << "\nsemi_major_axis_km = " << interval(r.semi_major_axis_km)
     << "\neccentricity = " << interval(r.eccentricity)
     << "\ninclination_deg = " << interval(r.inclination_deg)
     << "\nraan_deg = " << interval(r.raan_deg)
     << "\narg_perigee_deg = " << interval(r.arg_perigee_deg)
     << "\nmean_anomaly_deg = " << interval(r.mean_anomaly_deg) << "\n\n"
     << "[features]\nq = " << join_params(c.features.numerator_later)
     << "\nr = " << join_params(c.features.numerator_earlier)
     << "\ns = " << join_params(c.features.denominator)
     << "\ndenominator_floor = " << fmt(c.features.denominator_floor)
     << "\noverflow_cap = " << fmt(c.features.overflow_cap) << "\n\n"
     << "[network]\nhidden = " << join_sizes(c.train.hidden) << "\n\n"
     << "[train]\nlearning_rate = " << fmt(c.train.learning_rate)
     << "\nlr_floor = " << fmt(c.train.lr_floor) << "\nlr_decay = " << fmt(c.train.lr_decay)
     << "\nplateau_patience = " << c.train.plateau_patience
     << "\nbatch_size = " << c.train.batch_size << "\nepochs = " << c.train.epochs
     << "\nadam_beta1 = " << fmt(c.train.adam.beta1) << "\nadam_beta2 = " << fmt(c.train.adam.beta2)
     << "\nadam_epsilon = " << fmt(c.train.adam.epsilon) << "\n\n"
     << "[search]\nd = " << fmt(c.prune_threshold) << "\ns = " << join_sizes(c.s_values) << "\n\n"
     << "[splits]\ntrain_pairs = " << c.train_pairs << "\nval_pairs = " << c.val_pairs
     << "\ntest_pairs = " << c.test_pairs << "\nsubset_size = " << c.subset_size << "\n\n"
     << "[evaluate]\nhistogram_bins = " << c.histogram_bins << "\n\n"
     << "[saliency]\npairs = " << c.saliency_pairs << "\n";
  return os.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1,
          ErrorKind::kIo, "SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += kHex[digest[k] >> 4];
    out += kHex[digest[k] & 0xf];
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  copy.out_dir.clear();
  return sha256_hex(render_config(copy));
}

}  // namespace ucoassoc
