#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "ucoassoc/featurize.hpp"
#include "ucoassoc/neuralnet.hpp"

namespace ucoassoc::explain {

inline constexpr std::size_t kGridSide = 21;
inline constexpr std::size_t kGridCells = kGridSide * kGridSide;

/// |d log p(class) / d feature| laid out row-major on a 21 x 21 grid. Cells past
/// the feature count are padding: always zero and flagged in `pad_mask`.
struct SaliencyMap {
  std::array<double, kGridCells> grid{};
  std::array<bool, kGridCells> pad_mask{};
  std::size_t active_cells = 0;
  std::uint64_t first_id = 0;
  std::uint64_t second_id = 0;
  featurize::Label true_class = featurize::Label::kNoMatch;

  /// Grid scaled so the largest active cell is 1 (unchanged if all zero).
  std::array<double, kGridCells> normalized() const;
  std::size_t argmax_cell() const;
  std::string file_stem() const;
};

/// Gradient of the target-class log-probability with respect to each
/// (standardized) input feature, in eval mode.
std::vector<double> input_gradient(const nn::Mlp& model, std::span<const double> features,
                                   int target_class);

/// `pair` must be standardized and labeled; the label selects the class.
SaliencyMap saliency_map(const nn::Mlp& model, const featurize::PairFeatures& pair);

/// 21 rows of 21 comma-separated values.
void write_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map);
/// Binary P5 greymap, 21 x 21, 8-bit, max-normalized.
void write_saliency_pgm(const std::filesystem::path& path, const SaliencyMap& map);

}  // namespace ucoassoc::explain
