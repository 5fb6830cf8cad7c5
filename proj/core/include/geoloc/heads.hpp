#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "geoloc/geodesy.hpp"
#include "geoloc/matrix.hpp"
#include "geoloc/partition.hpp"

namespace geoloc {

/// Raw (lat, lon) regression output -> GeoPoint, clamping latitude into
/// [-90, 90] and wrapping longitude. Non-finite values are a NumericError.
GeoPoint decode_regression(std::span<const double> raw);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Centroid of the most probable division.
GeoPoint decode_classification(std::span<const double> probs, const LookupTable& lookup);

/// Relative cell coordinates in [-1, 1]^2 -> location. (0, 0) is the training
/// centroid, (-1, -1) the bbox minimum corner and (1, 1) the maximum corner;
/// each axis is linear on either side of the centroid.
GeoPoint decode_relative(double x, double y, const CellStats& stats);

/// Exact inverse of decode_relative for a point inside the cell bbox.
std::pair<double, double> encode_relative(const GeoPoint& p, const CellStats& stats);

/// Argmax cell, then that cell's relative pair decoded inside it. relative
/// holds 2K values (x_k, y_k interleaved); raw values are clamped to [-1, 1].
GeoPoint decode_hybrid(std::span<const double> probs, std::span<const double> relative, const LookupTable& lookup);

/// Fine probabilities summed up the hierarchy: element 0 is the fine level
/// itself, then one distribution per coarse level.
std::vector<std::vector<double>> aggregate_hierarchical(std::span<const double> fine_probs, const Hierarchy& hierarchy);

/// Zeroes the probability of every division absent from the lookup and
/// renormalizes, so argmax-based decoding only picks populated divisions.
std::vector<double> restrict_to_populated(std::span<const double> probs, const LookupTable& lookup);

}  // namespace geoloc
