#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "geoloc/matrix.hpp"
#include "geoloc/partition.hpp"

namespace geoloc {

/// Loss value and its gradient w.r.t. the loss input.
struct LossResult {
  double value = 0.0;
  Matrix grad;
};

/// Mean over rows of the summed absolute column differences (degrees for
/// coordinates). Subgradient 0 at exact ties.
LossResult l1_loss(const Matrix& pred, const Matrix& target);

/// Mean of -log softmax(logits)[label].
LossResult cross_entropy(const Matrix& logits, std::span<const std::size_t> labels);

/// Cross-entropy at the fine level plus one term per coarse level, where a
/// coarse probability is the sum of its descendants' fine probabilities.
/// Labels are fine class ids; coarse truths follow from the hierarchy.
LossResult hierarchical_ce(const Matrix& logits, std::span<const std::size_t> fine_labels, const Hierarchy& hierarchy);

/// Per-level cross-entropy terms of hierarchical_ce (fine first), for reporting.
std::vector<double> hierarchical_ce_terms(const Matrix& logits, std::span<const std::size_t> fine_labels,
                                          const Hierarchy& hierarchy);

/// Squared error on the 2 outputs of the true cell only, averaged over the
/// supervised components (2 per sample). relative is batch x 2K, targets batch x 2.
LossResult hybrid_relative_loss(const Matrix& relative, std::span<const std::size_t> cells, const Matrix& targets);

/// Positive partners of each batch member.
struct PositivePairSpec {
  std::vector<std::vector<std::size_t>> positives;

  std::size_t size() const { return positives.size(); }
  /// Throws DataError unless the spec is irreflexive, symmetric and every set is non-empty.
  void validate() const;
};

/// Pairs each sample with every other batch member carrying the same label.
/// Negative labels mean "absent" and are a DataError, as is a sample with no partner.
PositivePairSpec geographic_pairs(std::span<const std::int64_t> labels);

struct ContrastiveConfig {
  double temperature = 0.1;
};

/// Multi-positive MIL-NCE over unit-norm rows:
///   -(1/|B|) sum_i log( sum_{p in P_i} e^{<z_i,z_p>/T} / sum_{j != i} e^{<z_i,z_j>/T} ).
/// The anchor itself is excluded from both sums.
LossResult milnce_loss(const Matrix& embeddings, const PositivePairSpec& pairs, const ContrastiveConfig& cfg = {});

/// Auxiliary targets of one sample.
struct AuxTargets {
  std::size_t land_cover = 0;  // of 11
  std::size_t climate = 0;     // of 31
  std::size_t soil = 0;        // of 15
  bool drives_left = false;
  double dist_to_sea_km = 0.0;

  void validate() const;
};

/// Column layout of the auxiliary head output.
struct AuxSlices {
  static constexpr std::size_t kLandCover = 0;
  static constexpr std::size_t kClimate = 11;
  static constexpr std::size_t kSoil = 42;
  static constexpr std::size_t kDrivingSide = 57;
  static constexpr std::size_t kDistance = 58;
  static constexpr std::size_t kWidth = 59;
};

/// Per-term values of aux_loss.
struct AuxLossTerms {
  double land_cover = 0.0;
  double climate = 0.0;
  double soil = 0.0;
  double driving_side = 0.0;
  double distance = 0.0;
  double total() const { return land_cover + climate + soil + driving_side + distance; }
};

/// Unweighted sum of land cover / climate / soil cross-entropies, a binary
/// cross-entropy on the driving-side logit and an L1 term on distance (km).
LossResult aux_loss(const Matrix& outputs, std::span<const AuxTargets> targets, AuxLossTerms* terms = nullptr);

}  // namespace geoloc
