#include "ucoassoc/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ucoassoc/error.hpp"

namespace ucoassoc::explain {

std::array<double, kGridCells> SaliencyMap::normalized() const {
  auto out = grid;
  const double peak = *std::max_element(grid.begin(), grid.end());
  if (peak > 0.0) {
    for (auto& v : out) v /= peak;
  }
  return out;
}

std::size_t SaliencyMap::argmax_cell() const {
  return static_cast<std::size_t>(std::max_element(grid.begin(), grid.end()) - grid.begin());
}

std::string SaliencyMap::file_stem() const {
  return "saliency_" + std::to_string(first_id) + "_" + std::to_string(second_id) + "_" +
         (true_class == featurize::Label::kMatch ? "match" : "nomatch");
}

std::vector<double> input_gradient(const nn::Mlp& model, std::span<const double> features,
                                   int target_class) {
  Matrix x(1, static_cast<Eigen::Index>(features.size()));
  std::copy(features.begin(), features.end(), x.data());
  const Matrix g = model.input_gradient(x, target_class);
  return {g.data(), g.data() + g.size()};
}

SaliencyMap saliency_map(const nn::Mlp& model, const featurize::PairFeatures& pair) {
  require(pair.label.has_value(), ErrorKind::kInput, "saliency needs the pair's true class");
  require(pair.values.size() <= kGridCells, ErrorKind::kShape,
          "feature vector does not fit a 21 x 21 grid");
  const auto grad = input_gradient(model, pair.values, static_cast<int>(*pair.label));

  SaliencyMap map;
  map.active_cells = grad.size();
  map.first_id = pair.first_id;
  map.second_id = pair.second_id;
  map.true_class = *pair.label;
  for (std::size_t k = 0; k < kGridCells; ++k) {
    map.pad_mask[k] = k >= grad.size();
    map.grid[k] = k < grad.size() ? std::abs(grad[k]) : 0.0;
  }
  return map;
}

void write_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < kGridSide; ++r) {
    for (std::size_t c = 0; c < kGridSide; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", map.grid[r * kGridSide + c]);
      if (c > 0) os << ',';
      os << buf;
    }
    os << '\n';
  }
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

void write_saliency_pgm(const std::filesystem::path& path, const SaliencyMap& map) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  os << "P5\n" << kGridSide << ' ' << kGridSide << "\n255\n";
  const auto norm = map.normalized();
  for (double v : norm) {
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace ucoassoc::explain
