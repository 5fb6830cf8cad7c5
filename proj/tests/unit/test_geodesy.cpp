#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "geoloc/error.hpp"
#include "geoloc/geodesy.hpp"
#include "geoloc/random.hpp"
#include "oracles.hpp"

using namespace geoloc;

TEST_SUITE("geodesy") {
  TEST_CASE("haversine reference distances") {
    CHECK(haversine({48.85, 2.35}, {48.85, 2.35}) == 0.0);
    // pi * 6371 and Paris-London, evaluated at 50 digits.
    CHECK(haversine({0, 0}, {0, 180}) == doctest::Approx(20015.086796020573).epsilon(1e-12));
    CHECK(haversine({48.8566, 2.3522}, {51.5074, -0.1278}) == doctest::Approx(343.55606034104199).epsilon(1e-12));
  }

  TEST_CASE("haversine agrees with the chord formula") {
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
      const GeoPoint a(rng.uniform(-90, 90), rng.uniform(-180, 180));
      const GeoPoint b(rng.uniform(-90, 90), rng.uniform(-180, 180));
      const double want = oracle::chord_distance_km(a.lat(), a.lon(), b.lat(), b.lon());
      CHECK(std::abs(haversine(a, b) - want) <= 1e-9 * std::max(want, 1.0));
    }
  }

  TEST_CASE("haversine symmetry, bound and triangle inequality") {
    Rng rng(12);
    const EarthModel earth;
    for (int i = 0; i < 2000; ++i) {
      const GeoPoint a(rng.uniform(-90, 90), rng.uniform(-180, 180));
      const GeoPoint b(rng.uniform(-90, 90), rng.uniform(-180, 180));
      const GeoPoint c(rng.uniform(-90, 90), rng.uniform(-180, 180));
      const double ab = haversine(a, b);
      CHECK(ab == haversine(b, a));
      CHECK(ab >= 0.0);
      CHECK(ab <= kPi * earth.radius_km);
      CHECK(haversine(a, c) <= ab + haversine(b, c) + 1e-9 * earth.radius_km);
    }
  }

  TEST_CASE("haversine is zero across the antimeridian seam") {
    CHECK(haversine({10, 180}, {10, -180}) == 0.0);
    CHECK(haversine({90, 0}, {90, 123}) == doctest::Approx(0.0).epsilon(1e-9));
  }

  TEST_CASE("earth radius scales distances") {
    const EarthModel half{3185.5};
    CHECK(haversine({0, 0}, {0, 90}, half) == doctest::Approx(haversine({0, 0}, {0, 90}) / 2).epsilon(1e-15));
    CHECK_THROWS_AS(EarthModel{0.0}.validate(), DomainError);
    CHECK_THROWS_AS(haversine({0, 0}, {1, 1}, EarthModel{-1.0}), DomainError);
  }

  TEST_CASE("geoscore values") {
    CHECK(geoscore(0.0) == 5000.0);
    CHECK(geoscore(1492.7) == doctest::Approx(1839.3972058572116).epsilon(1e-13));
    CHECK(geoscore(std::numeric_limits<double>::infinity()) == 0.0);
    CHECK_THROWS_AS(geoscore(-1e-9), DomainError);
    CHECK_THROWS_AS(geoscore(std::nan("")), DomainError);

    std::vector<double> mixed(9, 0.0);
    mixed.push_back(20000.0);
    CHECK(mean_geoscore(mixed) == doctest::Approx(4500.000758679254).epsilon(1e-13));
    const std::vector<double> constant(10, 2000.0);
    CHECK(mean_geoscore(constant) == doctest::Approx(1309.4195619149064).epsilon(1e-13));
  }

  TEST_CASE("geoscore is strictly decreasing") {
    double prev = geoscore(0.0);
    for (double d = 0.5; d < 30000; d *= 1.7) {
      const double s = geoscore(d);
      CHECK(s < prev);
      prev = s;
    }
  }

  TEST_CASE("GeoPoint normalization") {
    CHECK(GeoPoint(0, 180).lon() == -180.0);
    CHECK(GeoPoint(0, 190).lon() == doctest::Approx(-170.0));
    CHECK(GeoPoint(0, -180).lon() == -180.0);
    CHECK(GeoPoint(0, 540).lon() == -180.0);
    CHECK(GeoPoint(0, -190).lon() == doctest::Approx(170.0));
    CHECK(GeoPoint(90, 0).lat() == 90.0);
    CHECK_THROWS_AS(GeoPoint(90.0001, 0), DomainError);
    CHECK_THROWS_AS(GeoPoint(std::nan(""), 0), DomainError);
    CHECK_THROWS_AS(GeoPoint(0, std::numeric_limits<double>::infinity()), DomainError);
  }

  TEST_CASE("decode_sincos examples") {
    const GeoPoint p0 = decode_sincos(std::array<double, 4>{0, 1, 0, 1});
    CHECK(p0.lat() == 0.0);
    CHECK(p0.lon() == 0.0);
    const double r = std::sqrt(2.0) / 2;
    const GeoPoint p1 = decode_sincos(std::array<double, 4>{1, 0, r, r});
    CHECK(p1.lat() == doctest::Approx(45.0).epsilon(1e-12));
    CHECK(p1.lon() == doctest::Approx(90.0).epsilon(1e-12));
    const GeoPoint p2 = decode_sincos(std::array<double, 4>{2, 0, 0, 2});
    CHECK(p2 == decode_sincos(std::array<double, 4>{1, 0, 0, 1}));
    CHECK(p2.lon() == doctest::Approx(90.0).epsilon(1e-12));
    CHECK_THROWS_AS(decode_sincos(std::array<double, 4>{0, 0, 0, 1}), DomainError);
    CHECK_THROWS_AS(decode_sincos(std::array<double, 4>{1, 0, 1e-13, 0}), DomainError);
  }

  TEST_CASE("decode_sincos inverts encode_sincos") {
    Rng rng(13);
    for (int i = 0; i < 5000; ++i) {
      const GeoPoint p(rng.uniform(-89.999, 89.999), rng.uniform(-180, 180));
      const GeoPoint q = decode_sincos(encode_sincos(p));
      CHECK(std::abs(q.lat() - p.lat()) < 1e-9);
      const double dlon = std::abs(q.lon() - p.lon());
      CHECK(std::min(dlon, 360.0 - dlon) < 1e-9);
    }
  }
}
