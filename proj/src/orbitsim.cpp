#include "ucoassoc/orbitsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "ucoassoc/error.hpp"

namespace ucoassoc::orbitsim {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kKeplerMaxIterations = 200;
constexpr int kMaxSensorDraws = 100000;

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

void check_interval(const Interval& iv, const char* name) {
  require(std::isfinite(iv.lo) && std::isfinite(iv.hi) && iv.lo <= iv.hi, ErrorKind::kConfig,
          std::string("invalid range for ") + name + ": [" + std::to_string(iv.lo) + ", " +
              std::to_string(iv.hi) + "]");
}

double draw(const Interval& iv, Rng& rng) {
  return std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
}

}  // namespace

double KeplerianElements::mean_motion() const {
  return std::sqrt(kMuEarth / (semi_major_axis_km * semi_major_axis_km * semi_major_axis_km));
}

double KeplerianElements::period() const { return kTwoPi / mean_motion(); }

void ElementRanges::validate() const {
  check_interval(semi_major_axis_km, "semi_major_axis_km");
  check_interval(eccentricity, "eccentricity");
  check_interval(inclination_deg, "inclination_deg");
  check_interval(raan_deg, "raan_deg");
  check_interval(arg_perigee_deg, "arg_perigee_deg");
  check_interval(mean_anomaly_deg, "mean_anomaly_deg");
  require(semi_major_axis_km.lo > 0.0, ErrorKind::kConfig, "semi-major axis must be positive");
  require(eccentricity.lo >= 0.0 && eccentricity.hi < 1.0, ErrorKind::kConfig,
          "eccentricity range must lie in [0, 1)");
  require(inclination_deg.lo >= 0.0 && inclination_deg.hi <= 180.0, ErrorKind::kConfig,
          "inclination range must lie in [0, 180]");
}

void ScenarioConfig::validate() const {
  element_ranges.validate();
  require(n_observations >= 1, ErrorKind::kConfig, "n_observations must be >= 1");
  require(obs_per_sat_min >= 1 && obs_per_sat_min <= obs_per_sat_max, ErrorKind::kConfig,
          "observations per satellite: need 1 <= min <= max");
  require(streak_s > 0.0 && window_s >= streak_s, ErrorKind::kConfig,
          "window must be at least one streak long");
  require(noise_sigma_m >= 0.0 && std::isfinite(noise_sigma_m), ErrorKind::kConfig,
          "noise_sigma_m must be >= 0");
  require(elevation_mask_deg >= -90.0 && elevation_mask_deg < 90.0, ErrorKind::kConfig,
          "elevation mask must lie in [-90, 90)");
}

double solve_kepler(double mean_anomaly, double eccentricity) {
  require(std::isfinite(mean_anomaly), ErrorKind::kDomain, "mean anomaly must be finite");
  require(eccentricity >= 0.0 && eccentricity < 1.0, ErrorKind::kDomain,
          "eccentricity must lie in [0, 1)");

  const double branch = std::round(mean_anomaly / kTwoPi) * kTwoPi;
  const double m = mean_anomaly - branch;
  const double e = eccentricity;
  if (e == 0.0 || m == 0.0) return mean_anomaly;

  // f(E) = E - e sin E - m is increasing and |E - m| <= e, so the root is bracketed.
  double lo = m - e;
  double hi = m + e;
  double ecc_anomaly = e < 0.8 ? m + e * std::sin(m) : (m >= 0.0 ? std::numbers::pi : -std::numbers::pi);
  ecc_anomaly = std::clamp(ecc_anomaly, lo, hi);

  for (int iter = 0; iter < kKeplerMaxIterations; ++iter) {
    const double f = ecc_anomaly - e * std::sin(ecc_anomaly) - m;
    if (f == 0.0) break;
    if (f > 0.0) {
      hi = ecc_anomaly;
    } else {
      lo = ecc_anomaly;
    }
    const double step = f / (1.0 - e * std::cos(ecc_anomaly));
    double next = ecc_anomaly - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - ecc_anomaly) <= 1e-15 * (1.0 + std::abs(ecc_anomaly));
    ecc_anomaly = next;
    if (done) break;
  }

  const double residual = ecc_anomaly - e * std::sin(ecc_anomaly) - m;
  if (!(std::abs(residual) < 1e-12)) {
    fail(ErrorKind::kSolver, "Kepler solver did not converge (M=" + std::to_string(mean_anomaly) +
                                 ", e=" + std::to_string(eccentricity) + ")");
  }
  return ecc_anomaly + branch;
}

StateVector elements_to_state(const KeplerianElements& el, double t) {
  const double a = el.semi_major_axis_km;
  const double e = el.eccentricity;
  const double n = el.mean_motion();
  const double mean_anomaly = el.mean_anomaly_deg * kDeg + n * (t - el.epoch_ref_s);
  const double ecc_anomaly = solve_kepler(mean_anomaly, e);

  const double cos_e = std::cos(ecc_anomaly);
  const double sin_e = std::sin(ecc_anomaly);
  const double root = std::sqrt(1.0 - e * e);
  const double radius = a * (1.0 - e * cos_e);
  const double speed_scale = std::sqrt(kMuEarth * a) / radius;

  const Vec3 pos_pf(a * (cos_e - e), a * root * sin_e, 0.0);
  const Vec3 vel_pf(-speed_scale * sin_e, speed_scale * root * cos_e, 0.0);

  const Eigen::Matrix3d rot =
      (Eigen::AngleAxisd(el.raan_deg * kDeg, Vec3::UnitZ()) *
       Eigen::AngleAxisd(el.inclination_deg * kDeg, Vec3::UnitX()) *
       Eigen::AngleAxisd(el.arg_perigee_deg * kDeg, Vec3::UnitZ()))
          .toRotationMatrix();
  return {rot * pos_pf, rot * vel_pf};
}

std::vector<KeplerianElements> sample_population(std::size_t n_sats, const ElementRanges& ranges,
                                                 Rng& rng) {
  require(n_sats >= 1, ErrorKind::kConfig, "population size must be >= 1");
  ranges.validate();
  std::vector<KeplerianElements> out;
  out.reserve(n_sats);
  for (std::size_t k = 0; k < n_sats; ++k) {
    KeplerianElements el;
    el.semi_major_axis_km = draw(ranges.semi_major_axis_km, rng);
    el.eccentricity = draw(ranges.eccentricity, rng);
    el.inclination_deg = draw(ranges.inclination_deg, rng);
    el.raan_deg = wrap_degrees(draw(ranges.raan_deg, rng));
    el.arg_perigee_deg = wrap_degrees(draw(ranges.arg_perigee_deg, rng));
    el.mean_anomaly_deg = wrap_degrees(draw(ranges.mean_anomaly_deg, rng));
    out.push_back(el);
  }
  return out;
}

Vec3 sensor_eci(const Sensor& sensor, double t) {
  const double lat = sensor.latitude_deg * kDeg;
  const double theta = sensor.longitude_deg * kDeg + kEarthRotation * t;
  const double r = kEarthRadius + sensor.altitude_km;
  return {r * std::cos(lat) * std::cos(theta), r * std::cos(lat) * std::sin(theta),
          r * std::sin(lat)};
}

Sensor random_sensor(Rng& rng) {
  Sensor s;
  s.longitude_deg = std::uniform_real_distribution<double>(-180.0, 180.0)(rng);
  s.latitude_deg = std::asin(std::uniform_real_distribution<double>(-1.0, 1.0)(rng)) / kDeg;
  return s;
}

double elevation_deg(const Vec3& site, const Vec3& target) {
  const Vec3 up = site.normalized();
  const Vec3 los = (target - site).normalized();
  return std::asin(std::clamp(up.dot(los), -1.0, 1.0)) / kDeg;
}

std::optional<Observation> observe(const KeplerianElements& el, const Sensor& sensor, double epoch,
                                   const ScenarioConfig& cfg, Rng& rng) {
  require(epoch >= 0.0 && epoch + cfg.streak_s <= cfg.window_s, ErrorKind::kInput,
          "streak must fit inside the scenario window");

  const Vec3 site_start = sensor_eci(sensor, epoch);
  const Vec3 rso_start = elements_to_state(el, epoch).position;
  if (elevation_deg(site_start, rso_start) < cfg.elevation_mask_deg) return std::nullopt;

  const double end = epoch + cfg.streak_s;
  const Vec3 site_end = sensor_eci(sensor, end);
  const Vec3 rso_end = elements_to_state(el, end).position;

  const double sigma_km = cfg.noise_sigma_m * 1e-3;
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 noise_start, noise_end;
  for (int k = 0; k < 3; ++k) noise_start[k] = sigma_km * gauss(rng);
  for (int k = 0; k < 3; ++k) noise_end[k] = sigma_km * gauss(rng);

  Observation obs;
  obs.epoch_s = epoch;
  obs.observer_pos = site_start;
  obs.los = (rso_start + noise_start - site_start).normalized();
  const Vec3 los_end = (rso_end + noise_end - site_end).normalized();
  obs.los_rate = (los_end - obs.los) / cfg.streak_s;
  obs.streak_s = cfg.streak_s;
  return obs;
}

std::vector<Observation> build_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<Observation> out;
  out.reserve(cfg.n_observations);

  std::uint64_t sat = 0;
  while (out.size() < cfg.n_observations) {
    Rng rng = make_rng(cfg.seed, sat);
    KeplerianElements el = sample_population(1, cfg.element_ranges, rng).front();
    const auto remaining = cfg.n_observations - out.size();
    auto count = static_cast<std::size_t>(
        std::uniform_int_distribution<int>(cfg.obs_per_sat_min, cfg.obs_per_sat_max)(rng));
    count = std::min(count, remaining);

    std::uniform_real_distribution<double> epoch_dist(0.0, cfg.window_s - cfg.streak_s);
    for (std::size_t k = 0; k < count; ++k) {
      const double epoch = epoch_dist(rng);
      std::optional<Observation> obs;
      for (int attempt = 0; attempt < kMaxSensorDraws && !obs; ++attempt) {
        obs = observe(el, random_sensor(rng), epoch, cfg, rng);
      }
      require(obs.has_value(), ErrorKind::kInput,
              "no sensor placement sees satellite " + std::to_string(sat));
      obs->rso_id = cfg.id_base + sat;
      out.push_back(*obs);
    }
    ++sat;
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const Observation& a, const Observation& b) { return a.epoch_s < b.epoch_s; });
  for (std::size_t k = 0; k < out.size(); ++k) out[k].obs_id = cfg.id_base + k;
  return out;
}

}  // namespace ucoassoc::orbitsim
