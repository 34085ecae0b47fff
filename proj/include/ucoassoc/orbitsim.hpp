#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "ucoassoc/rng.hpp"

namespace ucoassoc::orbitsim {

inline constexpr double kMuEarth = 398600.4418;        // km^3/s^2
inline constexpr double kEarthRadius = 6378.137;       // km
inline constexpr double kEarthRotation = 7.2921159e-5; // rad/s

using Vec3 = Eigen::Vector3d;

struct KeplerianElements {
  double semi_major_axis_km = 0.0;
  double eccentricity = 0.0;
  double inclination_deg = 0.0;
  double raan_deg = 0.0;
  double arg_perigee_deg = 0.0;
  double mean_anomaly_deg = 0.0;  // at epoch_ref_s
  double epoch_ref_s = 0.0;

  double mean_motion() const;  // rad/s
  double period() const;       // s
};

struct StateVector {
  Vec3 position;  // km, ECI
  Vec3 velocity;  // km/s, ECI
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Bounds of the uniform element distribution.
struct ElementRanges {
  Interval semi_major_axis_km{41164.0, 43164.0};
  Interval eccentricity{0.0, 0.1};
  Interval inclination_deg{0.0, 20.0};
  Interval raan_deg{0.0, 360.0};
  Interval arg_perigee_deg{0.0, 360.0};
  Interval mean_anomaly_deg{0.0, 360.0};

  void validate() const;
};

struct Sensor {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double altitude_km = 0.0;
};

struct Observation {
  std::uint64_t obs_id = 0;
  std::optional<std::uint64_t> rso_id;
  double epoch_s = 0.0;  // streak start
  Vec3 observer_pos = Vec3::Zero();
  Vec3 los = Vec3::Zero();
  Vec3 los_rate = Vec3::Zero();  // 1/s
  double streak_s = 120.0;
};

struct ScenarioConfig {
  std::size_t n_observations = 100000;
  double window_s = 43200.0;
  int obs_per_sat_min = 3;
  int obs_per_sat_max = 10;
  double streak_s = 120.0;
  double noise_sigma_m = 100.0;
  double elevation_mask_deg = 10.0;
  std::uint64_t seed = 1;
  // Added to every obs_id and rso_id so separately generated scenarios never collide.
  std::uint64_t id_base = 0;
  ElementRanges element_ranges;

  void validate() const;
};

/// Solves Kepler's equation E - e sin E = M. The result lies in the same 2*pi
/// branch as M. Throws ErrorKind::kSolver if the iteration does not converge.
double solve_kepler(double mean_anomaly, double eccentricity);

StateVector elements_to_state(const KeplerianElements& el, double t);

std::vector<KeplerianElements> sample_population(std::size_t n_sats, const ElementRanges& ranges,
                                                 Rng& rng);

Vec3 sensor_eci(const Sensor& sensor, double t);

/// Uniform over the sphere surface.
Sensor random_sensor(Rng& rng);

/// Elevation of `target` above the local horizon of a site at `site` (both ECI, km).
double elevation_deg(const Vec3& site, const Vec3& target);

/// Simulates one streak. Returns nullopt when the object is below the
/// elevation mask at streak start; the caller resamples the sensor.
std::optional<Observation> observe(const KeplerianElements& el, const Sensor& sensor, double epoch,
                                   const ScenarioConfig& cfg, Rng& rng);

/// Observations sorted by epoch; obs_id assigned in that order.
std::vector<Observation> build_scenario(const ScenarioConfig& cfg);

}  // namespace ucoassoc::orbitsim
