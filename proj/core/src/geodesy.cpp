#include "geoloc/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "geoloc/error.hpp"

namespace geoloc {

double normalize_longitude(double lon_deg) {
  if (lon_deg >= -180.0 && lon_deg < 180.0) return lon_deg;
  double wrapped = std::fmod(lon_deg + 180.0, 360.0);
  if (wrapped < 0.0) wrapped += 360.0;
  wrapped -= 180.0;
  // fmod can land exactly on 360 after the negative correction.
  if (wrapped >= 180.0) wrapped -= 360.0;
  return wrapped;
}

GeoPoint::GeoPoint(double lat_deg, double lon_deg) {
  if (!std::isfinite(lat_deg) || !std::isfinite(lon_deg)) {
    throw DomainError("GeoPoint: non-finite coordinate");
  }
  if (lat_deg < -90.0 || lat_deg > 90.0) {
    throw DomainError("GeoPoint: latitude " + std::to_string(lat_deg) + " outside [-90, 90]");
  }
  lat_ = lat_deg;
  lon_ = normalize_longitude(lon_deg);
}

void EarthModel::validate() const {
  if (!(radius_km > 0.0) || !std::isfinite(radius_km)) {
    throw DomainError("EarthModel: radius must be positive");
  }
}

double haversine(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth) {
  earth.validate();
  // Absolute differences and a commutative product keep the result exactly
  // symmetric in (a, b).
  const double dlat = std::abs(a.lat() - b.lat()) * kDegToRad;
  const double dlon = std::abs(a.lon() - b.lon()) * kDegToRad;
  const double s_lat = std::sin(0.5 * dlat);
  const double s_lon = std::sin(0.5 * dlon);
  const double cos_product = std::cos(a.lat() * kDegToRad) * std::cos(b.lat() * kDegToRad);
  double h = s_lat * s_lat + cos_product * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * earth.radius_km * std::asin(std::sqrt(h));
}

double geoscore(double delta_km) {
  if (!(delta_km >= 0.0)) throw DomainError("geoscore: distance must be non-negative");
  if (std::isinf(delta_km)) return 0.0;
  return kGeoscoreMax * std::exp(-delta_km / kGeoscoreScaleKm);
}

double mean_geoscore(std::span<const double> deltas_km) {
  if (deltas_km.empty()) throw DomainError("mean_geoscore: empty batch");
  double total = 0.0;
  for (double d : deltas_km) total += geoscore(d);
  return total / static_cast<double>(deltas_km.size());
}

std::array<double, 4> encode_sincos(const GeoPoint& p) {
  const double lon = p.lon() * kDegToRad;
  const double lat = p.lat() * kDegToRad;
  return {std::sin(lon), std::cos(lon), std::sin(lat), std::cos(lat)};
}

GeoPoint decode_sincos(std::span<const double, 4> raw) {
  const double lon_norm = std::hypot(raw[0], raw[1]);
  const double lat_norm = std::hypot(raw[2], raw[3]);
  if (!(lon_norm >= 1e-12) || !(lat_norm >= 1e-12)) {
    throw DomainError("decode_sincos: degenerate (sin, cos) pair");
  }
  const double lon = std::atan2(raw[0] / lon_norm, raw[1] / lon_norm) * kRadToDeg;
  double lat = std::atan2(raw[2] / lat_norm, raw[3] / lat_norm) * kRadToDeg;
  // A negative cosine puts atan2 past the poles; fold back onto the sphere.
  if (lat > 90.0) lat = 180.0 - lat;
  if (lat < -90.0) lat = -180.0 - lat;
  return GeoPoint(lat, lon);
}

GeoPoint decode_sincos(const std::array<double, 4>& raw) {
  return decode_sincos(std::span<const double, 4>(raw));
}

}  // namespace geoloc
