#include "geoloc/curation.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>

#include "geoloc/error.hpp"
#include "geoloc/random.hpp"

namespace geoloc {

std::vector<std::uint64_t> grid_dedup(std::span<const SitePoint> points, double cell_m, std::uint64_t seed,
                                      const EarthModel& earth) {
  if (!(cell_m > 0.0)) throw DomainError("grid_dedup: cell size must be positive");
  const double cell_km = cell_m / 1000.0;
  const double km_per_deg = earth.km_per_degree();
  Rng rng(seed);
  struct Best {
    std::uint64_t priority;
    std::size_t index;
  };
  std::map<std::pair<std::int64_t, std::int64_t>, Best> cells;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const GeoPoint& p = points[i].location;
    const auto lat_key = static_cast<std::int64_t>(std::floor(p.lat() * km_per_deg / cell_km));
    const auto lon_key =
        static_cast<std::int64_t>(std::floor(p.lon() * km_per_deg * std::cos(p.lat() * kDegToRad) / cell_km));
    const std::uint64_t priority = rng.next_u64();
    auto [it, inserted] = cells.try_emplace({lat_key, lon_key}, Best{priority, i});
    if (!inserted && priority < it->second.priority) it->second = Best{priority, i};
  }
  std::vector<std::size_t> keep;
  keep.reserve(cells.size());
  for (const auto& [key, best] : cells) keep.push_back(best.index);
  std::sort(keep.begin(), keep.end());
  std::vector<std::uint64_t> ids;
  ids.reserve(keep.size());
  for (std::size_t i : keep) ids.push_back(points[i].id);
  return ids;
}

std::vector<double> density_weights(std::span<const SitePoint> points, double density_cell_deg, double alpha) {
  if (!(density_cell_deg > 0.0)) throw DomainError("density_weights: cell size must be positive");
  const auto key_of = [&](const GeoPoint& p) {
    return std::pair{static_cast<std::int64_t>(std::floor(p.lat() / density_cell_deg)),
                     static_cast<std::int64_t>(std::floor(p.lon() / density_cell_deg))};
  };
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> counts;
  for (const SitePoint& p : points) ++counts[key_of(p.location)];
  std::vector<double> w(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    w[i] = std::pow(static_cast<double>(counts[key_of(points[i].location)]), alpha);
  }
  return w;
}

std::vector<std::size_t> weighted_sample_indices(std::span<const double> weights, std::size_t n, std::uint64_t seed) {
  if (n > weights.size()) {
    throw DomainError("weighted sample: asked for " + std::to_string(n) + " of " + std::to_string(weights.size()));
  }
  Rng rng(seed);
  // Efraimidis-Spirakis: the n largest log(u) / w keys form a successive
  // weighted sample without replacement.
  std::vector<std::pair<double, std::size_t>> keys(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) throw DomainError("weighted sample: weights must be positive");
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    keys[i] = {std::log(u) / weights[i], i};
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n), keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = keys[i].second;
  return out;
}

std::vector<std::uint64_t> density_weighted_sample(std::span<const SitePoint> points, std::size_t n,
                                                   double density_cell_deg, double alpha, std::uint64_t seed) {
  const auto w = density_weights(points, density_cell_deg, alpha);
  const auto picked = weighted_sample_indices(w, n, seed);
  std::vector<std::uint64_t> ids;
  ids.reserve(picked.size());
  for (std::size_t i : picked) ids.push_back(points[i].id);
  return ids;
}

// ---- images -----------------------------------------------------------------

RasterImage::RasterImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), rgb_(std::move(rgb)) {
  if (width_ == 0 || height_ == 0) throw DomainError("image must have at least one pixel");
  if (rgb_.size() != 3 * width_ * height_) throw ShapeError("image: pixel buffer size mismatch");
}

RasterImage RasterImage::filled(std::size_t width, std::size_t height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  std::vector<std::uint8_t> rgb(3 * width * height);
  for (std::size_t i = 0; i < width * height; ++i) {
    rgb[3 * i] = r;
    rgb[3 * i + 1] = g;
    rgb[3 * i + 2] = b;
  }
  return RasterImage(width, height, std::move(rgb));
}

namespace {

std::size_t skip_space_and_comments(std::string_view s, std::size_t pos) {
  while (pos < s.size()) {
    if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

std::size_t read_header_number(std::string_view s, std::size_t& pos) {
  pos = skip_space_and_comments(s, pos);
  std::size_t value = 0;
  const std::size_t start = pos;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    value = value * 10 + static_cast<std::size_t>(s[pos] - '0');
    if (value > (1u << 28)) throw DataError("PPM: header value too large");
    ++pos;
  }
  if (pos == start) throw DataError("PPM: malformed header");
  return value;
}

}  // namespace

RasterImage decode_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != "P6") throw DataError("PPM: not a binary P6 file");
  std::size_t pos = 2;
  const std::size_t width = read_header_number(bytes, pos);
  const std::size_t height = read_header_number(bytes, pos);
  const std::size_t maxval = read_header_number(bytes, pos);
  if (maxval != 255) throw DataError("PPM: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw DataError("PPM: missing separator before pixel data");
  }
  ++pos;
  const std::size_t n = 3 * width * height;
  if (bytes.size() - pos < n) throw DataError("PPM: truncated pixel data");
  std::vector<std::uint8_t> rgb(n);
  std::memcpy(rgb.data(), bytes.data() + pos, n);
  return RasterImage(width, height, std::move(rgb));
}

std::string encode_ppm(const RasterImage& image) {
  std::string out = "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.rgb().data()), image.rgb().size());
  return out;
}

RasterImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_ppm(ss.str());
}

void write_ppm(const std::filesystem::path& path, const RasterImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = encode_ppm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> grayscale(const RasterImage& image) {
  std::vector<double> gray(image.pixel_count());
  const auto rgb = image.rgb();
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = (static_cast<double>(rgb[3 * i]) + rgb[3 * i + 1] + rgb[3 * i + 2]) / 3.0;
  }
  return gray;
}

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  fftw_complex* data;
  explicit FftwBuffer(std::size_t n) : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

struct FftwPlan {
  fftw_plan plan = nullptr;
  ~FftwPlan() {
    if (plan) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

}  // namespace

double blur_score(const RasterImage& image, double epsilon) {
  if (image.pixel_count() == 0) throw DomainError("blur_score: empty image");
  const std::size_t n = image.pixel_count();
  const auto gray = grayscale(image);
  FftwBuffer in(n);
  FftwBuffer out(n);
  FftwPlan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan.plan = fftw_plan_dft_2d(static_cast<int>(image.height()), static_cast<int>(image.width()), in.data, out.data,
                                 FFTW_FORWARD, FFTW_ESTIMATE);
  }
  if (!plan.plan) throw NumericError("blur_score: FFT planning failed");
  for (std::size_t i = 0; i < n; ++i) {
    in.data[i][0] = gray[i];
    in.data[i][1] = 0.0;
  }
  fftw_execute(plan.plan);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += 20.0 * std::log10(std::hypot(out.data[i][0], out.data[i][1]) + epsilon);
  }
  return total / static_cast<double>(n);
}

double FilterVerdict::exposure_fraction() const { return std::max(overexposed_fraction, underexposed_fraction); }

std::string FilterVerdict::verdict() const {
  if (keep) return "keep";
  std::string out;
  const auto add = [&](bool ok, const char* name) {
    if (ok) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(blur_ok, "blur");
  add(radiometry_ok, "dark");
  add(purple_ok, "purple");
  add(exposure_ok, "exposure");
  return out;
}

FilterVerdict quality_filter(const RasterImage& image, const FilterThresholds& t) {
  if (image.pixel_count() == 0) throw DomainError("quality_filter: empty image");
  FilterVerdict v;
  const double n = static_cast<double>(image.pixel_count());
  const auto rgb = image.rgb();
  double channel_sum = 0.0;
  std::size_t purple = 0;
  std::size_t over = 0;
  std::size_t under = 0;
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    const int r = rgb[3 * i];
    const int g = rgb[3 * i + 1];
    const int b = rgb[3 * i + 2];
    channel_sum += r + g + b;
    const double brightness = (r + g + b) / 3.0;
    if (r > t.purple_min_red && g > t.purple_min_green && b < t.purple_max_blue) ++purple;
    if (brightness > t.overexposed_level) ++over;
    if (brightness < t.underexposed_level) ++under;
  }
  v.brightness = channel_sum / (3.0 * n);
  v.purple_fraction = static_cast<double>(purple) / n;
  v.overexposed_fraction = static_cast<double>(over) / n;
  v.underexposed_fraction = static_cast<double>(under) / n;
  v.blur_db = blur_score(image, t.spectrum_epsilon);

  v.blur_ok = v.blur_db >= t.min_blur_db;
  v.radiometry_ok = v.brightness >= t.min_brightness;
  v.purple_ok = v.purple_fraction <= t.max_purple_fraction;
  v.exposure_ok = v.overexposed_fraction < t.exposure_fraction && v.underexposed_fraction < t.exposure_fraction;
  v.keep = v.blur_ok && v.radiometry_ok && v.purple_ok && v.exposure_ok;
  return v;
}

std::string_view to_string(RotationAction action) {
  switch (action) {
    case RotationAction::kKeep: return "keep";
    case RotationAction::kRotate180: return "rotate180";
    case RotationAction::kDiscard: return "discard";
  }
  return "unknown";
}

RotationAction rotation_policy(int predicted_degrees) {
  switch (predicted_degrees) {
    case 0: return RotationAction::kKeep;
    case 180: return RotationAction::kRotate180;
    case 90:
    case 270: return RotationAction::kDiscard;
    default: throw DomainError("rotation_policy: unknown rotation class " + std::to_string(predicted_degrees));
  }
}

RasterImage rotate_half_turn(const RasterImage& image) {
  std::vector<std::uint8_t> rgb(image.rgb().size());
  const std::size_t n = image.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(rgb.data() + 3 * (n - 1 - i), image.rgb().data() + 3 * i, 3);
  }
  return RasterImage(image.width(), image.height(), std::move(rgb));
}

}  // namespace geoloc
