#include "geoloc/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "geoloc/error.hpp"
#include "geoloc/model.hpp"

namespace geoloc {

namespace {

void require_batch(std::size_t n, const char* what) {
  if (n == 0) throw DomainError(std::string(what) + ": empty batch");
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Cross-entropy of one row slice; adds (softmax - onehot) * scale into grad.
double slice_ce(std::span<const double> logits, std::size_t label, std::span<double> grad, double scale) {
  const double lse = log_sum_exp(logits);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    grad[k] += scale * (std::exp(logits[k] - lse) - (k == label ? 1.0 : 0.0));
  }
  return lse - logits[label];
}

}  // namespace

LossResult l1_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("l1_loss: shape mismatch");
  require_batch(pred.rows(), "l1_loss");
  const double n = static_cast<double>(pred.rows());
  LossResult out{0.0, Matrix(pred.rows(), pred.cols())};
  auto p = pred.values();
  auto t = target.values();
  auto g = out.grad.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double diff = p[i] - t[i];
    out.value += std::abs(diff);
    g[i] = sign_of(diff) / n;
  }
  out.value /= n;
  return out;
}

LossResult cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.rows() != labels.size()) throw ShapeError("cross_entropy: label count mismatch");
  require_batch(labels.size(), "cross_entropy");
  const double scale = 1.0 / static_cast<double>(labels.size());
  LossResult out{0.0, Matrix(logits.rows(), logits.cols())};
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= logits.cols()) {
      throw DataError("cross_entropy: label " + std::to_string(labels[r]) + " >= K=" + std::to_string(logits.cols()));
    }
    out.value += slice_ce(logits.row(r), labels[r], out.grad.row(r), scale);
  }
  out.value *= scale;
  return out;
}

namespace {

struct LevelMembers {
  // members[c] = fine classes whose ancestor at this level is c
  std::vector<std::vector<std::size_t>> members;
};

std::vector<LevelMembers> level_members(const Hierarchy& h) {
  h.validate();
  std::vector<LevelMembers> out(h.levels.size());
  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    out[l].members.resize(h.levels[l].size);
    for (std::size_t f = 0; f < h.fine_size; ++f) out[l].members[h.levels[l].parent_of_fine[f]].push_back(f);
  }
  return out;
}

void check_hierarchical_inputs(const Matrix& logits, std::span<const std::size_t> labels, const Hierarchy& h) {
  if (logits.rows() != labels.size()) throw ShapeError("hierarchical_ce: label count mismatch");
  if (logits.cols() != h.fine_size) throw ShapeError("hierarchical_ce: logits width differs from fine level size");
  require_batch(labels.size(), "hierarchical_ce");
  for (std::size_t y : labels) {
    if (y >= h.fine_size) throw DataError("hierarchical_ce: fine label out of range");
  }
}

}  // namespace

LossResult hierarchical_ce(const Matrix& logits, std::span<const std::size_t> fine_labels, const Hierarchy& hierarchy) {
  check_hierarchical_inputs(logits, fine_labels, hierarchy);
  const auto members = level_members(hierarchy);
  const double scale = 1.0 / static_cast<double>(fine_labels.size());
  LossResult out{0.0, Matrix(logits.rows(), logits.cols())};
  std::vector<double> subset;
  for (std::size_t r = 0; r < fine_labels.size(); ++r) {
    const auto z = logits.row(r);
    auto g = out.grad.row(r);
    const double lse = log_sum_exp(z);
    out.value += slice_ce(z, fine_labels[r], g, scale);
    for (std::size_t l = 0; l < hierarchy.levels.size(); ++l) {
      const auto& group = members[l].members[hierarchy.levels[l].parent_of_fine[fine_labels[r]]];
      subset.clear();
      for (std::size_t f : group) subset.push_back(z[f]);
      const double lse_group = log_sum_exp(subset);
      out.value += lse - lse_group;
      // d/dz_j [lse - lse_group] = p_j - [j in group] q_j
      for (std::size_t k = 0; k < z.size(); ++k) g[k] += scale * std::exp(z[k] - lse);
      for (std::size_t f : group) g[f] -= scale * std::exp(z[f] - lse_group);
    }
  }
  out.value *= scale;
  return out;
}

std::vector<double> hierarchical_ce_terms(const Matrix& logits, std::span<const std::size_t> fine_labels,
                                          const Hierarchy& hierarchy) {
  check_hierarchical_inputs(logits, fine_labels, hierarchy);
  const auto members = level_members(hierarchy);
  std::vector<double> terms(hierarchy.levels.size() + 1, 0.0);
  std::vector<double> subset;
  for (std::size_t r = 0; r < fine_labels.size(); ++r) {
    const auto z = logits.row(r);
    const double lse = log_sum_exp(z);
    terms[0] += lse - z[fine_labels[r]];
    for (std::size_t l = 0; l < hierarchy.levels.size(); ++l) {
      const auto& group = members[l].members[hierarchy.levels[l].parent_of_fine[fine_labels[r]]];
      subset.clear();
      for (std::size_t f : group) subset.push_back(z[f]);
      terms[l + 1] += lse - log_sum_exp(subset);
    }
  }
  for (double& t : terms) t /= static_cast<double>(fine_labels.size());
  return terms;
}

LossResult hybrid_relative_loss(const Matrix& relative, std::span<const std::size_t> cells, const Matrix& targets) {
  if (relative.rows() != cells.size() || targets.rows() != cells.size()) {
    throw ShapeError("hybrid_relative_loss: batch size mismatch");
  }
  if (targets.cols() != 2 || relative.cols() % 2 != 0) throw ShapeError("hybrid_relative_loss: bad widths");
  require_batch(cells.size(), "hybrid_relative_loss");
  const std::size_t num_cells = relative.cols() / 2;
  const double components = 2.0 * static_cast<double>(cells.size());
  LossResult out{0.0, Matrix(relative.rows(), relative.cols())};
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (cells[r] >= num_cells) throw DataError("hybrid_relative_loss: cell id out of range");
    for (std::size_t a = 0; a < 2; ++a) {
      const std::size_t col = 2 * cells[r] + a;
      const double diff = relative(r, col) - targets(r, a);
      out.value += diff * diff;
      out.grad(r, col) = 2.0 * diff / components;
    }
  }
  out.value /= components;
  return out;
}

void PositivePairSpec::validate() const {
  const std::size_t n = positives.size();
  std::vector<std::vector<char>> member(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    if (positives[i].empty()) throw DataError("positive pairs: sample " + std::to_string(i) + " has no partner");
    for (std::size_t j : positives[i]) {
      if (j >= n) throw DataError("positive pairs: index out of batch");
      if (j == i) throw DataError("positive pairs: sample paired with itself");
      member[i][j] = 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (member[i][j] != member[j][i]) throw DataError("positive pairs: relation is not symmetric");
    }
  }
}

PositivePairSpec geographic_pairs(std::span<const std::int64_t> labels) {
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw DataError("geographic_pairs: sample " + std::to_string(i) + " has no label");
    groups[labels[i]].push_back(i);
  }
  PositivePairSpec spec;
  spec.positives.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j : groups[labels[i]]) {
      if (j != i) spec.positives[i].push_back(j);
    }
    if (spec.positives[i].empty()) {
      throw DataError("geographic_pairs: sample " + std::to_string(i) + " has no positive partner in the batch");
    }
  }
  return spec;
}

LossResult milnce_loss(const Matrix& embeddings, const PositivePairSpec& pairs, const ContrastiveConfig& cfg) {
  const std::size_t n = embeddings.rows();
  if (pairs.size() != n) throw ShapeError("milnce_loss: pair spec size differs from batch");
  require_batch(n, "milnce_loss");
  if (!(cfg.temperature > 0.0)) throw DomainError("milnce_loss: temperature must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    double n2 = 0.0;
    for (double v : embeddings.row(i)) n2 += v * v;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) throw DomainError("milnce_loss: embeddings must be unit-norm");
    if (pairs.positives[i].empty()) {
      throw DataError("milnce_loss: sample " + std::to_string(i) + " has no positive partner");
    }
  }

  const double inv_t = 1.0 / cfg.temperature;
  const double scale = 1.0 / static_cast<double>(n);
  LossResult out{0.0, Matrix(n, embeddings.cols())};
  std::vector<double> logits(n);
  std::vector<double> pos_logits;
  std::vector<char> is_positive(n);
  std::vector<double> others;
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = embeddings.row(i);
    others.clear();
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      const auto zj = embeddings.row(j);
      for (std::size_t c = 0; c < zi.size(); ++c) dot += zi[c] * zj[c];
      logits[j] = dot * inv_t;
      if (j != i) others.push_back(logits[j]);
    }
    std::fill(is_positive.begin(), is_positive.end(), 0);
    pos_logits.clear();
    for (std::size_t p : pairs.positives[i]) {
      if (p >= n || p == i) throw DataError("milnce_loss: invalid positive index");
      is_positive[p] = 1;
      pos_logits.push_back(logits[p]);
    }
    const double lse_all = log_sum_exp(others);
    const double lse_pos = log_sum_exp(pos_logits);
    out.value += lse_all - lse_pos;

    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d_logit = std::exp(logits[j] - lse_all);
      if (is_positive[j]) d_logit -= std::exp(logits[j] - lse_pos);
      const double coef = scale * d_logit * inv_t;
      if (coef == 0.0) continue;
      auto gi = out.grad.row(i);
      auto gj = out.grad.row(j);
      const auto zj = embeddings.row(j);
      for (std::size_t c = 0; c < zi.size(); ++c) {
        gi[c] += coef * zj[c];
        gj[c] += coef * zi[c];
      }
    }
  }
  out.value *= scale;
  return out;
}

void AuxTargets::validate() const {
  if (land_cover >= kAuxLandCover || climate >= kAuxClimate || soil >= kAuxSoil) {
    throw DataError("auxiliary targets: class index out of range");
  }
  if (!(dist_to_sea_km >= 0.0) || !std::isfinite(dist_to_sea_km)) {
    throw DataError("auxiliary targets: distance to sea must be a non-negative number");
  }
}

LossResult aux_loss(const Matrix& outputs, std::span<const AuxTargets> targets, AuxLossTerms* terms) {
  if (outputs.cols() != AuxSlices::kWidth) {
    throw ShapeError("aux_loss: expected " + std::to_string(AuxSlices::kWidth) + " outputs, got " +
                     std::to_string(outputs.cols()));
  }
  if (outputs.rows() != targets.size()) throw ShapeError("aux_loss: batch size mismatch");
  require_batch(targets.size(), "aux_loss");
  const double scale = 1.0 / static_cast<double>(targets.size());
  LossResult out{0.0, Matrix(outputs.rows(), outputs.cols())};
  AuxLossTerms t;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const AuxTargets& y = targets[r];
    y.validate();
    const auto z = outputs.row(r);
    auto g = out.grad.row(r);
    t.land_cover += slice_ce(z.subspan(AuxSlices::kLandCover, kAuxLandCover), y.land_cover,
                             g.subspan(AuxSlices::kLandCover, kAuxLandCover), scale);
    t.climate += slice_ce(z.subspan(AuxSlices::kClimate, kAuxClimate), y.climate,
                          g.subspan(AuxSlices::kClimate, kAuxClimate), scale);
    t.soil += slice_ce(z.subspan(AuxSlices::kSoil, kAuxSoil), y.soil, g.subspan(AuxSlices::kSoil, kAuxSoil), scale);

    const double s = z[AuxSlices::kDrivingSide];
    const double label = y.drives_left ? 1.0 : 0.0;
    t.driving_side += std::max(s, 0.0) - label * s + std::log1p(std::exp(-std::abs(s)));
    g[AuxSlices::kDrivingSide] += scale * (1.0 / (1.0 + std::exp(-s)) - label);

    const double diff = z[AuxSlices::kDistance] - y.dist_to_sea_km;
    t.distance += std::abs(diff);
    g[AuxSlices::kDistance] += scale * sign_of(diff);
  }
  t.land_cover *= scale;
  t.climate *= scale;
  t.soil *= scale;
  t.driving_side *= scale;
  t.distance *= scale;
  out.value = t.total();
  if (terms) *terms = t;
  return out;
}

}  // namespace geoloc
