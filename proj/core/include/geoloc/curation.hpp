#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoloc/geodesy.hpp"

namespace geoloc {

struct SitePoint {
  std::uint64_t id = 0;
  GeoPoint location;
};

/// Keeps one randomly chosen point per local-metric grid cell of `cell_m`
/// metres (longitude extent scaled by cos(lat)). Output keeps input order.
std::vector<std::uint64_t> grid_dedup(std::span<const SitePoint> points, double cell_m, std::uint64_t seed,
                                      const EarthModel& earth = {});

/// density(p)^alpha, where density is the number of points sharing p's
/// coarse (floor(lat / cell), floor(lon / cell)) bin.
std::vector<double> density_weights(std::span<const SitePoint> points, double density_cell_deg, double alpha);

/// Weighted sampling of n distinct ids without replacement (successive
/// sampling through exponential keys), weights from density_weights.
std::vector<std::uint64_t> density_weighted_sample(std::span<const SitePoint> points, std::size_t n,
                                                   double density_cell_deg, double alpha, std::uint64_t seed);

/// Weighted sampling without replacement for explicit weights; returns indices.
std::vector<std::size_t> weighted_sample_indices(std::span<const double> weights, std::size_t n, std::uint64_t seed);

/// 8-bit interleaved RGB image.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> rgb);
  static RasterImage filled(std::size_t width, std::size_t height, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t pixel_count() const { return width_ * height_; }
  std::span<const std::uint8_t> rgb() const { return rgb_; }
  std::span<std::uint8_t> rgb() { return rgb_; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const { return rgb_.data() + 3 * (y * width_ + x); }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> rgb_;
};

/// Binary PPM (P6, maxval 255).
RasterImage decode_ppm(std::string_view bytes);
std::string encode_ppm(const RasterImage& image);
RasterImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RasterImage& image);

struct FilterThresholds {
  double min_blur_db = 120.0;
  double min_brightness = 50.0;
  double max_purple_fraction = 0.5;
  int purple_min_red = 60;
  int purple_min_green = 60;
  int purple_max_blue = 50;
  double exposure_fraction = 0.7;
  double overexposed_level = 250.0;
  double underexposed_level = 5.0;
  double spectrum_epsilon = 1e-12;
};

struct FilterVerdict {
  double blur_db = 0.0;
  double brightness = 0.0;
  double purple_fraction = 0.0;
  double overexposed_fraction = 0.0;
  double underexposed_fraction = 0.0;
  bool blur_ok = true;
  bool radiometry_ok = true;
  bool purple_ok = true;
  bool exposure_ok = true;
  bool keep = true;

  double exposure_fraction() const;
  /// "keep" or the '+'-joined names of the failed filters.
  std::string verdict() const;
};

/// Channel mean per pixel, row-major.
std::vector<double> grayscale(const RasterImage& image);

/// Mean over every 2-D DFT bin (DC included) of 20 log10(|F| + epsilon),
/// F the transform of the grayscale image.
double blur_score(const RasterImage& image, double epsilon = 1e-12);

FilterVerdict quality_filter(const RasterImage& image, const FilterThresholds& thresholds = {});

enum class RotationAction { kKeep, kRotate180, kDiscard };

std::string_view to_string(RotationAction action);

/// Policy for a rotation classifier's output class in degrees: upright kept,
/// upside-down turned by a half-turn, quarter-turns discarded.
RotationAction rotation_policy(int predicted_degrees);

/// Rotates an image by 180 degrees.
RasterImage rotate_half_turn(const RasterImage& image);

}  // namespace geoloc
