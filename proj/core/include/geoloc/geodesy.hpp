#pragma once

#include <array>
#include <span>

namespace geoloc {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

/// Wraps a longitude into [-180, 180).
double normalize_longitude(double lon_deg);

/// Latitude/longitude in degrees. Construction rejects latitudes outside
/// [-90, 90] and non-finite values, and wraps the longitude into [-180, 180).
class GeoPoint {
 public:
  GeoPoint() = default;
  GeoPoint(double lat_deg, double lon_deg);

  double lat() const { return lat_; }
  double lon() const { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

struct EarthModel {
  double radius_km = 6371.0;

  /// Throws DomainError unless radius_km is finite and positive.
  void validate() const;
  double km_per_degree() const { return radius_km * kDegToRad; }
};

inline constexpr double kGeoscoreMax = 5000.0;
inline constexpr double kGeoscoreScaleKm = 1492.7;

/// Great-circle distance in km, asin form of the haversine formula.
double haversine(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth = {});

/// 5000 exp(-delta / 1492.7). Negative or non-finite delta is a DomainError.
double geoscore(double delta_km);

/// Per-sample average of geoscore over a batch of error distances.
double mean_geoscore(std::span<const double> deltas_km);

/// Sines and cosines of a location in the order (sin lon, cos lon, sin lat, cos lat).
std::array<double, 4> encode_sincos(const GeoPoint& p);

/// Inverse of encode_sincos. Each (sin, cos) pair is rescaled to unit norm
/// before atan2; a pair with norm below 1e-12 is a DomainError.
GeoPoint decode_sincos(std::span<const double, 4> raw);
GeoPoint decode_sincos(const std::array<double, 4>& raw);

}  // namespace geoloc
