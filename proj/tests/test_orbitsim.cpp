#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include <Eigen/Geometry>

#include "support.hpp"
#include "ucoassoc/error.hpp"
#include "ucoassoc/orbitsim.hpp"

using namespace ucoassoc;
using namespace ucoassoc::orbitsim;

namespace {

constexpr double kPi = std::numbers::pi;

// Plain bisection on f(E) = E - e sin E - M, which is increasing in E.
double bisect_kepler(double m, double e, double lo, double hi) {
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid - e * std::sin(mid) - m < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

KeplerianElements geo_circular() {
  KeplerianElements el;
  el.semi_major_axis_km = 42164.0;
  return el;
}

double energy(const StateVector& s) {
  return 0.5 * s.velocity.squaredNorm() - kMuEarth / s.position.norm();
}

}  // namespace

TEST_CASE("kepler solver trivial cases") {
  CHECK(solve_kepler(0.0, 0.05) == 0.0);
  CHECK(solve_kepler(1.7, 0.0) == doctest::Approx(1.7).epsilon(1e-15));
}

TEST_CASE("kepler solver matches bisection oracle") {
  const double oracle = bisect_kepler(1.0, 0.1, 0.0, kPi);
  const double e = solve_kepler(1.0, 0.1);
  CHECK(std::abs(e - oracle) < 1e-12);
  CHECK(e == doctest::Approx(1.08860).epsilon(1e-5));
}

TEST_CASE("kepler residual below 1e-12 over random inputs") {
  Rng rng = make_rng(2024);
  std::uniform_real_distribution<double> m_dist(-20.0, 20.0);
  std::uniform_real_distribution<double> e_dist(0.0, 0.999);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const double m = m_dist(rng);
    const double e = e_dist(rng);
    const double ea = solve_kepler(m, e);
    worst = std::max(worst, std::abs(ea - e * std::sin(ea) - m));
    // same 2*pi branch: |E - M| <= e
    REQUIRE(std::abs(ea - m) <= e + 1e-12);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("kepler rejects out-of-domain input") {
  CHECK(testing::error_kind_of([] { solve_kepler(1.0, 1.0); }) == ErrorKind::kDomain);
  CHECK(testing::error_kind_of([] { solve_kepler(NAN, 0.1); }) == ErrorKind::kDomain);
}

TEST_CASE("circular equatorial orbit geometry") {
  const auto el = geo_circular();
  const auto s0 = elements_to_state(el, 0.0);
  CHECK(s0.position.x() == doctest::Approx(42164.0).epsilon(1e-15));
  CHECK(std::abs(s0.position.y()) < 1e-9);
  CHECK(std::abs(s0.position.z()) < 1e-9);

  const auto half = elements_to_state(el, el.period() / 2.0);
  CHECK(std::abs(half.position.x() + 42164.0) < 1e-6);
  CHECK(std::abs(half.position.y()) < 1e-6);
  CHECK(std::abs(half.position.z()) < 1e-6);
}

TEST_CASE("perigee radius") {
  auto el = geo_circular();
  el.eccentricity = 0.1;
  CHECK(elements_to_state(el, 0.0).position.norm() == doctest::Approx(42164.0 * 0.9).epsilon(1e-14));
}

TEST_CASE("one period returns the initial state and invariants are conserved") {
  Rng rng = make_rng(5);
  const auto population = sample_population(50, ElementRanges{}, rng);
  std::uniform_real_distribution<double> t_dist(0.0, 86400.0 * 3);
  for (const auto& el : population) {
    const auto s0 = elements_to_state(el, 1234.5);
    const auto s1 = elements_to_state(el, 1234.5 + el.period());
    CHECK((s1.position - s0.position).norm() / s0.position.norm() < 1e-9);
    CHECK((s1.velocity - s0.velocity).norm() / s0.velocity.norm() < 1e-9);

    const double e0 = energy(s0);
    const double h0 = s0.position.cross(s0.velocity).norm();
    double worst_e = 0.0;
    double worst_h = 0.0;
    for (int k = 0; k < 100; ++k) {
      const auto s = elements_to_state(el, t_dist(rng));
      worst_e = std::max(worst_e, std::abs(energy(s) - e0) / std::abs(e0));
      worst_h = std::max(worst_h, std::abs(s.position.cross(s.velocity).norm() - h0) / h0);
    }
    CHECK(worst_e < 1e-9);
    CHECK(worst_h < 1e-9);
    // vis-viva gives the expected specific energy
    CHECK(e0 == doctest::Approx(-kMuEarth / (2.0 * el.semi_major_axis_km)).epsilon(1e-12));
  }
}

TEST_CASE("population sampling") {
  SUBCASE("degenerate ranges give exactly that element") {
    ElementRanges r;
    r.semi_major_axis_km = {42164.0, 42164.0};
    r.eccentricity = {0.0, 0.0};
    r.inclination_deg = {0.0, 0.0};
    r.raan_deg = {0.0, 0.0};
    r.arg_perigee_deg = {0.0, 0.0};
    r.mean_anomaly_deg = {0.0, 0.0};
    Rng rng = make_rng(1);
    const auto p = sample_population(1, r, rng);
    REQUIRE(p.size() == 1);
    CHECK(p[0].semi_major_axis_km == 42164.0);
    CHECK(p[0].eccentricity == 0.0);
    CHECK(p[0].inclination_deg == 0.0);
    CHECK(p[0].raan_deg == 0.0);
    CHECK(p[0].arg_perigee_deg == 0.0);
    CHECK(p[0].mean_anomaly_deg == 0.0);
  }
  SUBCASE("uniform moments and bounds") {
    Rng rng = make_rng(77);
    const auto p = sample_population(10000, ElementRanges{}, rng);
    double sum = 0.0;
    for (const auto& el : p) {
      sum += el.semi_major_axis_km;
      REQUIRE(el.semi_major_axis_km >= 41164.0);
      REQUIRE(el.semi_major_axis_km <= 43164.0);
      REQUIRE(el.eccentricity >= 0.0);
      REQUIRE(el.eccentricity <= 0.1);
      REQUIRE(el.inclination_deg >= 0.0);
      REQUIRE(el.inclination_deg <= 20.0);
      for (double angle : {el.raan_deg, el.arg_perigee_deg, el.mean_anomaly_deg}) {
        REQUIRE(angle >= 0.0);
        REQUIRE(angle < 360.0);
      }
    }
    const double sigma_mean = 2000.0 / std::sqrt(12.0) / 100.0;
    CHECK(std::abs(sum / 10000.0 - 42164.0) < 3.0 * sigma_mean);
  }
  SUBCASE("deterministic") {
    Rng a = make_rng(9);
    Rng b = make_rng(9);
    const auto pa = sample_population(100, ElementRanges{}, a);
    const auto pb = sample_population(100, ElementRanges{}, b);
    for (std::size_t k = 0; k < pa.size(); ++k) {
      CHECK(pa[k].semi_major_axis_km == pb[k].semi_major_axis_km);
      CHECK(pa[k].mean_anomaly_deg == pb[k].mean_anomaly_deg);
    }
  }
  SUBCASE("inverted range is a config error") {
    ElementRanges r;
    r.eccentricity = {0.1, 0.0};
    Rng rng = make_rng(1);
    CHECK(testing::error_kind_of([&] { sample_population(1, r, rng); }) == ErrorKind::kConfig);
  }
}

TEST_CASE("sensor position in the inertial frame") {
  CHECK((sensor_eci({90.0, 123.0, 0.0}, 5000.0) - Vec3(0, 0, kEarthRadius)).norm() < 1e-9);
  CHECK((sensor_eci({0.0, 0.0, 0.0}, 0.0) - Vec3(kEarthRadius, 0, 0)).norm() < 1e-12);
  CHECK((sensor_eci({0.0, 0.0, 0.0}, 2.0 * kPi / kEarthRotation) - Vec3(kEarthRadius, 0, 0)).norm() <
        1e-6);
  // quarter turn carries the Greenwich site to +y
  CHECK((sensor_eci({0.0, 0.0, 0.0}, 0.5 * kPi / kEarthRotation) - Vec3(0, kEarthRadius, 0)).norm() <
        1e-6);

  Rng rng = make_rng(3);
  double z_sum = 0.0;
  for (int k = 0; k < 20000; ++k) {
    const auto s = random_sensor(rng);
    REQUIRE(s.latitude_deg >= -90.0);
    REQUIRE(s.latitude_deg <= 90.0);
    REQUIRE(s.longitude_deg >= -180.0);
    REQUIRE(s.longitude_deg < 180.0);
    const auto p = sensor_eci(s, 100.0 * k);
    REQUIRE(std::abs(p.norm() - kEarthRadius) / kEarthRadius < 1e-9);
    z_sum += std::sin(s.latitude_deg * kPi / 180.0);
  }
  // uniform on the sphere: sin(latitude) is uniform on [-1, 1]
  CHECK(std::abs(z_sum / 20000.0) < 3.0 * std::sqrt(1.0 / 3.0 / 20000.0));
}

TEST_CASE("observation geometry") {
  ScenarioConfig cfg;
  cfg.noise_sigma_m = 0.0;
  const auto el = geo_circular();
  Rng rng = make_rng(1);

  SUBCASE("overhead object on the x-axis") {
    const auto obs = observe(el, {0.0, 0.0, 0.0}, 0.0, cfg, rng);
    REQUIRE(obs.has_value());
    CHECK((obs->los - Vec3(1, 0, 0)).norm() < 1e-15);
    CHECK(obs->streak_s == 120.0);
  }
  SUBCASE("noise-free rate is the exact finite difference") {
    const Sensor site{20.0, -30.0, 0.0};
    auto tilted = el;
    tilted.inclination_deg = 10.0;
    for (double t = 0.0; t < 43000.0; t += 997.0) {
      const auto obs = observe(tilted, site, t, cfg, rng);
      if (!obs) continue;
      const Vec3 a = (elements_to_state(tilted, t).position - sensor_eci(site, t)).normalized();
      const Vec3 b =
          (elements_to_state(tilted, t + 120.0).position - sensor_eci(site, t + 120.0)).normalized();
      CHECK((obs->los - a).norm() < 1e-14);
      CHECK((obs->los_rate - (b - a) / 120.0).norm() < 1e-15);
      CHECK(obs->los_rate.norm() * 120.0 <= 2.0);
      CHECK(std::abs(obs->los.norm() - 1.0) < 1e-12);
    }
  }
  SUBCASE("object below the horizon is rejected") {
    CHECK_FALSE(observe(el, {0.0, 180.0 - 1e-9, 0.0}, 0.0, cfg, rng).has_value());
  }
  SUBCASE("streak must fit in the window") {
    CHECK(testing::error_kind_of([&] { observe(el, {0.0, 0.0, 0.0}, 43100.0, cfg, rng); }) ==
          ErrorKind::kInput);
  }
}

TEST_CASE("noise induces the small-angle error at GEO range") {
  ScenarioConfig cfg;
  ScenarioConfig clean = cfg;
  clean.noise_sigma_m = 0.0;
  const auto el = geo_circular();
  const Sensor site{0.0, 0.0, 0.0};
  Rng rng = make_rng(11);
  const auto truth = observe(el, site, 0.0, clean, rng);
  REQUIRE(truth.has_value());
  const double range = 42164.0 - kEarthRadius;
  const double expected = 0.1 / range;  // rad

  // Deviation along the two axes perpendicular to the (x-aligned) line of sight.
  double sy = 0.0;
  double sz = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const auto obs = observe(el, site, 0.0, cfg, rng);
    REQUIRE(obs.has_value());
    const Vec3 d = obs->los - truth->los;
    sy += d.y() * d.y();
    sz += d.z() * d.z();
  }
  CHECK(std::abs(std::sqrt(sy / n) / expected - 1.0) < 0.2);
  CHECK(std::abs(std::sqrt(sz / n) / expected - 1.0) < 0.2);
}

TEST_CASE("scenario construction") {
  SUBCASE("six observations at three per satellite") {
    ScenarioConfig cfg;
    cfg.n_observations = 6;
    cfg.obs_per_sat_min = cfg.obs_per_sat_max = 3;
    const auto obs = build_scenario(cfg);
    REQUIRE(obs.size() == 6);
    std::set<std::uint64_t> rsos;
    for (const auto& o : obs) rsos.insert(*o.rso_id);
    CHECK(rsos.size() == 2);
  }
  SUBCASE("thousand observations and the invariants of every observation") {
    ScenarioConfig cfg;
    cfg.n_observations = 1000;
    cfg.seed = 42;
    const auto obs = build_scenario(cfg);
    REQUIRE(obs.size() == 1000);
    std::set<std::uint64_t> rsos;
    std::set<std::uint64_t> ids;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      const auto& o = obs[k];
      rsos.insert(*o.rso_id);
      ids.insert(o.obs_id);
      REQUIRE(std::abs(o.los.norm() - 1.0) < 1e-12);
      REQUIRE(std::abs(o.observer_pos.norm() - kEarthRadius) < 1e-6);
      REQUIRE(o.epoch_s >= 0.0);
      REQUIRE(o.epoch_s <= 43200.0 - 120.0);
      if (k > 0) REQUIRE(obs[k - 1].epoch_s <= o.epoch_s);
      // noise moves the measured elevation by a few microradians at most
      const Vec3 target = o.observer_pos + o.los;
      REQUIRE(elevation_deg(o.observer_pos, target) >= 10.0 - 1e-3);
    }
    CHECK(ids.size() == 1000);
    CHECK(rsos.size() >= 100);
    CHECK(rsos.size() <= 334);
  }
  SUBCASE("deterministic per seed") {
    ScenarioConfig cfg;
    cfg.n_observations = 300;
    cfg.seed = 8;
    const auto a = build_scenario(cfg);
    const auto b = build_scenario(cfg);
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].obs_id == b[k].obs_id);
      CHECK(a[k].epoch_s == b[k].epoch_s);
      CHECK(a[k].los == b[k].los);
      CHECK(a[k].los_rate == b[k].los_rate);
    }
    cfg.seed = 9;
    CHECK(build_scenario(cfg)[0].epoch_s != a[0].epoch_s);
  }
  SUBCASE("unreachable budget is a config error") {
    ScenarioConfig cfg;
    cfg.obs_per_sat_min = 10;
    cfg.obs_per_sat_max = 3;
    CHECK(testing::error_kind_of([&] { build_scenario(cfg); }) == ErrorKind::kConfig);
  }
}
