#include "ucoassoc/observation_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "ucoassoc/error.hpp"

namespace ucoassoc::orbitsim {
namespace {

constexpr const char* kLabeledHeader =
    "obs_id,rso_id,epoch_s,obs_px_km,obs_py_km,obs_pz_km,los_x,los_y,los_z,losr_x,losr_y,losr_z,"
    "streak_s";
constexpr const char* kBlindHeader =
    "obs_id,epoch_s,obs_px_km,obs_py_km,obs_pz_km,los_x,los_y,los_z,losr_x,losr_y,losr_z,streak_s";

void put(std::string& line, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, ",%.17g", v);
  line += buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  require(end != s.c_str() && *end == '\0' && errno == 0, ErrorKind::kFormat,
          "bad number '" + s + "' on line " + std::to_string(line_no));
  return v;
}

std::uint64_t parse_id(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  errno = 0;
  const auto v = std::strtoull(s.c_str(), &end, 10);
  require(!s.empty() && end != s.c_str() && *end == '\0' && errno == 0, ErrorKind::kFormat,
          "bad identifier '" + s + "' on line " + std::to_string(line_no));
  return v;
}

}  // namespace

void write_observations_csv(std::ostream& os, std::span<const Observation> obs, CsvMode mode) {
  os << (mode == CsvMode::kLabeled ? kLabeledHeader : kBlindHeader) << '\n';
  std::string line;
  for (const auto& o : obs) {
    line = std::to_string(o.obs_id);
    if (mode == CsvMode::kLabeled) {
      require(o.rso_id.has_value(), ErrorKind::kInput,
              "observation " + std::to_string(o.obs_id) + " has no rso_id");
      line += ',' + std::to_string(*o.rso_id);
    }
    put(line, o.epoch_s);
    for (int k = 0; k < 3; ++k) put(line, o.observer_pos[k]);
    for (int k = 0; k < 3; ++k) put(line, o.los[k]);
    for (int k = 0; k < 3; ++k) put(line, o.los_rate[k]);
    put(line, o.streak_s);
    os << line << '\n';
  }
}

void write_observations_csv(const std::filesystem::path& path, std::span<const Observation> obs,
                            CsvMode mode) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  write_observations_csv(os, obs, mode);
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<Observation> read_observations_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::kFormat,
          "observation file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool labeled = false;
  if (line == kLabeledHeader) {
    labeled = true;
  } else {
    require(line == kBlindHeader, ErrorKind::kFormat, "unrecognized observation header");
  }
  const std::size_t n_fields = labeled ? 13 : 12;

  std::vector<Observation> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    require(f.size() == n_fields, ErrorKind::kFormat,
            "expected " + std::to_string(n_fields) + " fields on line " + std::to_string(line_no));
    Observation o;
    std::size_t c = 0;
    o.obs_id = parse_id(f[c++], line_no);
    if (labeled) o.rso_id = parse_id(f[c++], line_no);
    o.epoch_s = parse_double(f[c++], line_no);
    for (int k = 0; k < 3; ++k) o.observer_pos[k] = parse_double(f[c++], line_no);
    for (int k = 0; k < 3; ++k) o.los[k] = parse_double(f[c++], line_no);
    for (int k = 0; k < 3; ++k) o.los_rate[k] = parse_double(f[c++], line_no);
    o.streak_s = parse_double(f[c++], line_no);
    out.push_back(o);
  }
  return out;
}

std::vector<Observation> read_observations_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  return read_observations_csv(is);
}

}  // namespace ucoassoc::orbitsim
