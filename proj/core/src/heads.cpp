#include "geoloc/heads.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "geoloc/error.hpp"

namespace geoloc {

GeoPoint decode_regression(std::span<const double> raw) {
  if (raw.size() != 2) throw ShapeError("decode_regression: expected 2 values");
  if (!std::isfinite(raw[0]) || !std::isfinite(raw[1])) throw NumericError("decode_regression: non-finite output");
  return GeoPoint(std::clamp(raw[0], -90.0, 90.0), raw[1]);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

GeoPoint decode_classification(std::span<const double> probs, const LookupTable& lookup) {
  if (probs.size() != lookup.num_divisions()) throw ShapeError("decode_classification: K differs from lookup size");
  return lookup.at(argmax(probs)).centroid;
}

namespace {

double clamp_relative(double v) {
  if (!std::isfinite(v)) throw NumericError("relative coordinate is not finite");
  return std::clamp(v, -1.0, 1.0);
}

// The two half-extents on either side of the centroid, (x* w) and ((1 - x*) w).
struct Spans {
  double below;
  double above;
};

Spans lon_spans(const CellStats& s) {
  return {s.centroid.lon() - s.bbox.lon_min, s.bbox.lon_max - s.centroid.lon()};
}

Spans lat_spans(const CellStats& s) {
  return {s.centroid.lat() - s.bbox.lat_min, s.bbox.lat_max - s.centroid.lat()};
}

double decode_axis(double v, double center, const Spans& spans) {
  return v <= 0.0 ? center + v * spans.below : center + v * spans.above;
}

double encode_axis(double coord, double center, const Spans& spans) {
  const double d = coord - center;
  if (d == 0.0) return 0.0;
  const double span = d < 0.0 ? spans.below : spans.above;
  if (!(span > 0.0)) return d < 0.0 ? -1.0 : 1.0;
  return std::clamp(d / span, -1.0, 1.0);
}

}  // namespace

GeoPoint decode_relative(double x, double y, const CellStats& stats) {
  const double cx = clamp_relative(x);
  const double cy = clamp_relative(y);
  const double lon = decode_axis(cx, stats.centroid.lon(), lon_spans(stats));
  const double lat = decode_axis(cy, stats.centroid.lat(), lat_spans(stats));
  // The world's east edge (lon 180) is the same meridian as -180.
  return GeoPoint(std::clamp(lat, -90.0, 90.0), lon);
}

std::pair<double, double> encode_relative(const GeoPoint& p, const CellStats& stats) {
  if (!stats.bbox.contains_closed(p, 1e-9)) {
    throw DomainError("encode_relative: point outside the cell bounding box");
  }
  return {encode_axis(p.lon(), stats.centroid.lon(), lon_spans(stats)),
          encode_axis(p.lat(), stats.centroid.lat(), lat_spans(stats))};
}

GeoPoint decode_hybrid(std::span<const double> probs, std::span<const double> relative, const LookupTable& lookup) {
  if (relative.size() != 2 * probs.size()) throw ShapeError("decode_hybrid: relative output must hold 2K values");
  if (probs.size() != lookup.num_divisions()) throw ShapeError("decode_hybrid: K differs from lookup size");
  const std::size_t k = argmax(probs);
  return decode_relative(relative[2 * k], relative[2 * k + 1], lookup.at(k));
}

std::vector<std::vector<double>> aggregate_hierarchical(std::span<const double> fine_probs, const Hierarchy& hierarchy) {
  hierarchy.validate();
  if (fine_probs.size() != hierarchy.fine_size) throw ShapeError("aggregate_hierarchical: fine size mismatch");
  std::vector<std::vector<double>> out;
  out.emplace_back(fine_probs.begin(), fine_probs.end());
  for (const HierarchyLevel& level : hierarchy.levels) {
    std::vector<double> coarse(level.size, 0.0);
    for (std::size_t f = 0; f < fine_probs.size(); ++f) coarse[level.parent_of_fine[f]] += fine_probs[f];
    out.push_back(std::move(coarse));
  }
  return out;
}

std::vector<double> restrict_to_populated(std::span<const double> probs, const LookupTable& lookup) {
  if (probs.size() != lookup.num_divisions()) throw ShapeError("restrict_to_populated: K differs from lookup size");
  std::vector<double> out(probs.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (lookup.contains(k)) {
      out[k] = probs[k];
      total += probs[k];
    }
  }
  if (lookup.num_populated() == 0) throw DataError("lookup has no populated division");
  if (total > 0.0) {
    for (double& p : out) p /= total;
  } else {
    // All mass sat on empty divisions: fall back to uniform over populated ones.
    for (std::size_t k = 0; k < probs.size(); ++k) out[k] = lookup.contains(k) ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace geoloc
