#include "geoloc/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "geoloc/error.hpp"

namespace geoloc {

RetrievalIndex::RetrievalIndex(std::vector<std::uint64_t> ids, Matrix unit_rows, std::vector<GeoPoint> locations)
    : ids_(std::move(ids)), rows_(std::move(unit_rows)), locations_(std::move(locations)) {
  if (ids_.size() != rows_.rows() || ids_.size() != locations_.size()) {
    throw ShapeError("retrieval index: ids, rows and locations differ in length");
  }
}

namespace {

double row_norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

}  // namespace

RetrievalIndex build_index(const EmbeddingSet& train, std::span<const GeoPoint> locations) {
  train.validate();
  if (locations.size() != train.size()) throw DataError("build_index: every train embedding needs a location");
  Matrix rows(train.size(), train.dim());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto src = train.features.row(i);
    const double norm = row_norm(src);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw NumericError("build_index: embedding " + std::to_string(train.ids[i]) + " has zero or non-finite norm");
    }
    auto dst = rows.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / norm;
  }
  return RetrievalIndex(train.ids, std::move(rows), {locations.begin(), locations.end()});
}

std::vector<RetrievalResult> knn_predict(const RetrievalIndex& index, const EmbeddingSet& queries, std::size_t k) {
  if (k == 0) throw DomainError("knn_predict: k must be at least 1");
  if (index.size() == 0) throw DataError("knn_predict: empty index");
  if (queries.dim() != index.dim()) {
    throw ShapeError("knn_predict: query dim " + std::to_string(queries.dim()) + " != index dim " +
                     std::to_string(index.dim()));
  }
  const std::size_t keep = std::min(k, index.size());
  const auto better = [](const Neighbor& a, const Neighbor& b) {
    return a.similarity > b.similarity || (a.similarity == b.similarity && a.id < b.id);
  };
  std::vector<RetrievalResult> out;
  out.reserve(queries.size());
  std::vector<std::pair<Neighbor, std::size_t>> scored(index.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto query = queries.features.row(q);
    const double norm = row_norm(query);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw NumericError("knn_predict: query " + std::to_string(queries.ids[q]) + " has zero or non-finite norm");
    }
    // Normalizing the query up front makes the similarities bit-identical
    // under positive rescaling of the query.
    std::vector<double> unit(query.size());
    for (std::size_t j = 0; j < query.size(); ++j) unit[j] = query[j] / norm;
    for (std::size_t i = 0; i < index.size(); ++i) {
      const auto row = index.rows().row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < unit.size(); ++j) dot += unit[j] * row[j];
      scored[i] = {Neighbor{index.ids()[i], dot}, i};
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      [&](const auto& a, const auto& b) { return better(a.first, b.first); });
    RetrievalResult r;
    r.location = index.locations()[scored.front().second];
    r.matched_id = scored.front().first.id;
    r.neighbors.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) r.neighbors.push_back(scored[i].first);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace geoloc
