#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "geoloc/geodesy.hpp"
#include "geoloc/matrix.hpp"
#include "geoloc/trainer.hpp"

namespace geoloc {

/// Exact cosine-similarity index over unit-normalized train embeddings.
/// Immutable after build; concurrent queries are safe.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  RetrievalIndex(std::vector<std::uint64_t> ids, Matrix unit_rows, std::vector<GeoPoint> locations);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return rows_.cols(); }
  const std::vector<std::uint64_t>& ids() const { return ids_; }
  const Matrix& rows() const { return rows_; }
  const std::vector<GeoPoint>& locations() const { return locations_; }

 private:
  std::vector<std::uint64_t> ids_;
  Matrix rows_;
  std::vector<GeoPoint> locations_;
};

/// Normalizes each row; a zero-norm row is rejected with its id.
RetrievalIndex build_index(const EmbeddingSet& train, std::span<const GeoPoint> locations);

struct Neighbor {
  std::uint64_t id = 0;
  double similarity = 0.0;
};

struct RetrievalResult {
  GeoPoint location;          // location of the top match
  std::uint64_t matched_id = 0;
  std::vector<Neighbor> neighbors;  // best first, size min(k, index size)
};

/// Top-k by cosine similarity; ties go to the lowest id. Queries with zero
/// norm are rejected.
std::vector<RetrievalResult> knn_predict(const RetrievalIndex& index, const EmbeddingSet& queries, std::size_t k = 1);

}  // namespace geoloc
