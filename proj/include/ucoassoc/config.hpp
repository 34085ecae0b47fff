#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ucoassoc/associate.hpp"
#include "ucoassoc/featurize.hpp"
#include "ucoassoc/neuralnet.hpp"
#include "ucoassoc/orbitsim.hpp"

namespace ucoassoc {

/// Everything a run needs. Every constant the experiment depends on lives here
/// so a run is reproducible from its config file and master seed.
struct ExperimentConfig {
  orbitsim::ScenarioConfig scenario;
  featurize::FeatureTable features = featurize::FeatureTable::standard();
  nn::TrainConfig train;
  double prune_threshold = 0.3;
  std::vector<std::size_t> s_values = {1, 2, 5, 10, 20, 50, 100};
  std::size_t train_pairs = 40000;
  std::size_t val_pairs = 4000;
  std::size_t test_pairs = 4000;
  std::size_t subset_size = 1000;
  std::size_t histogram_bins = 20;
  std::size_t saliency_pairs = 4;
  std::filesystem::path out_dir = "run";
  std::uint64_t seed = 1;

  void validate() const;
};

/// Command-line overrides applied on top of the file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::vector<std::size_t>> s_values;
  std::optional<double> prune_threshold;
};

/// INI-style file: [section] headers and key = value lines. Missing keys keep
/// their defaults; unknown sections or keys are config errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& overrides);

/// Canonical key = value rendering of every setting (including defaults).
std::string render_config(const ExperimentConfig& cfg);

/// SHA-256 of render_config with the output directory blanked, hex encoded.
std::string config_hash(const ExperimentConfig& cfg);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace ucoassoc
