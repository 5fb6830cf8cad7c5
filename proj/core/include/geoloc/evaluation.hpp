#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "geoloc/geodesy.hpp"
#include "geoloc/partition.hpp"

namespace geoloc {

/// Division centroids of one administrative level, used as a stand-in
/// reverse geocoder: a point belongs to the division with the nearest centroid.
struct DivisionLevel {
  std::string name;
  std::vector<std::string> keys;
  std::vector<GeoPoint> centroids;

  /// Index of the nearest centroid (haversine); ties go to the lowest index.
  std::size_t nearest(const GeoPoint& p, const EarthModel& earth = {}) const;
};

/// Builds one DivisionLevel per admin level from a hierarchy and its lookups.
std::vector<DivisionLevel> division_levels(const AdminHierarchy& hierarchy,
                                           std::span<const LookupTable, kNumAdminLevels> lookups);

struct EvalReport {
  double geoscore = 0.0;
  double mean_distance_km = 0.0;
  double median_distance_km = 0.0;
  std::map<std::string, double> accuracy;  // level -> fraction
  std::size_t n_samples = 0;
};

std::vector<double> error_distances(std::span<const GeoPoint> preds, std::span<const GeoPoint> truth,
                                    const EarthModel& earth = {});

/// Geoscore (averaged per sample), mean/median distance, and per-level
/// accuracy. truth_keys[l][i] is the true division key of sample i at
/// levels[l]; an empty key leaves the sample out of that level's accuracy.
EvalReport evaluate(std::span<const GeoPoint> preds, std::span<const GeoPoint> truth,
                    std::span<const DivisionLevel> levels, std::span<const std::vector<std::string>> truth_keys,
                    const EarthModel& earth = {});

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);

/// Uniform draws, with replacement, of training locations.
std::vector<GeoPoint> random_baseline(std::span<const GeoPoint> train, std::size_t count, std::uint64_t seed);

struct GridCell {
  std::int64_t lat_bin = 0;
  std::int64_t lon_bin = 0;
  double mean_km = 0.0;
  std::size_t count = 0;
};

/// Mean error per (floor(lat / cell), floor(lon / cell)) bin of the true
/// location, sorted by (lat_bin, lon_bin); empty bins are omitted.
std::vector<GridCell> error_grid(std::span<const GeoPoint> preds, std::span<const GeoPoint> truth, double cell_deg,
                                 const EarthModel& earth = {});

struct CurvePoint {
  double distance_km = 0.0;
  double fraction = 0.0;
};

/// Distinct sorted distances with the fraction of samples at or below each.
std::vector<CurvePoint> cumulative_error_curve(std::span<const double> distances_km);

std::string grid_to_csv(std::span<const GridCell> grid);
std::string curve_to_csv(std::span<const CurvePoint> curve);

/// For each radius, the candidates whose distance to every training point
/// exceeds the radius and whose sequence id no training sample shares.
/// Empty sequence ids never match. Results are sorted candidate indices.
std::vector<std::vector<std::size_t>> separation_splits(std::span<const GeoPoint> train,
                                                        std::span<const std::string> train_sequences,
                                                        std::span<const GeoPoint> candidates,
                                                        std::span<const std::string> candidate_sequences,
                                                        std::span<const double> radii_km,
                                                        const EarthModel& earth = {});

/// Distance from each candidate to its nearest training point, exact but only
/// resolved up to `horizon_km`: anything farther is reported as +infinity.
std::vector<double> nearest_train_distance(std::span<const GeoPoint> train, std::span<const GeoPoint> candidates,
                                           double horizon_km, const EarthModel& earth = {});

}  // namespace geoloc
