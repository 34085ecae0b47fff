#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "ucoassoc/orbitsim.hpp"

namespace ucoassoc::orbitsim {

enum class CsvMode { kLabeled, kBlind };

/// Header: obs_id,rso_id,epoch_s,obs_px_km,...,streak_s (rso_id omitted in blind mode).
/// Floating values use 17 significant digits so a read-back is exact.
void write_observations_csv(std::ostream& os, std::span<const Observation> obs,
                            CsvMode mode = CsvMode::kLabeled);
void write_observations_csv(const std::filesystem::path& path, std::span<const Observation> obs,
                            CsvMode mode = CsvMode::kLabeled);

/// Accepts either header variant.
std::vector<Observation> read_observations_csv(std::istream& is);
std::vector<Observation> read_observations_csv(const std::filesystem::path& path);

}  // namespace ucoassoc::orbitsim
