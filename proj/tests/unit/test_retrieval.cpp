#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "geoloc/error.hpp"
#include "geoloc/retrieval.hpp"
#include "oracles.hpp"

using namespace geoloc;

namespace {

EmbeddingSet random_set(std::size_t n, std::size_t d, std::uint64_t first_id, Rng& rng) {
  EmbeddingSet s;
  s.features = fixture::random_matrix(n, d, rng);
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(first_id + i);
  return s;
}

std::vector<GeoPoint> numbered_locations(std::size_t n) {
  std::vector<GeoPoint> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(static_cast<double>(i % 90), static_cast<double>(i % 180));
  return out;
}

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("nearest neighbour matches brute force") {
    Rng rng(1);
    const EmbeddingSet train = random_set(200, 16, 100, rng);
    const EmbeddingSet queries = random_set(50, 16, 9000, rng);
    const auto locs = numbered_locations(200);
    const RetrievalIndex index = build_index(train, locs);
    const auto results = knn_predict(index, queries);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < 200; ++i) rows.emplace_back(train.features.row(i).begin(), train.features.row(i).end());
    for (std::size_t q = 0; q < 50; ++q) {
      const std::vector<double> query(queries.features.row(q).begin(), queries.features.row(q).end());
      const std::size_t best = oracle::brute_nearest(rows, train.ids, query);
      CHECK(results[q].matched_id == train.ids[best]);
      CHECK(results[q].location == locs[best]);
      CHECK(results[q].neighbors.size() == 1);
    }
  }

  TEST_CASE("scaling queries or train rows changes nothing") {
    Rng rng(2);
    EmbeddingSet train = random_set(60, 8, 0, rng);
    EmbeddingSet queries = random_set(20, 8, 500, rng);
    const auto locs = numbered_locations(60);
    const auto base = knn_predict(build_index(train, locs), queries, 3);
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (double& v : train.features.row(i)) v *= 0.5 + static_cast<double>(i);
    }
    for (double& v : queries.features.values()) v *= 1e3;
    const auto scaled = knn_predict(build_index(train, locs), queries, 3);
    for (std::size_t q = 0; q < 20; ++q) {
      REQUIRE(scaled[q].neighbors.size() == 3);
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(scaled[q].neighbors[j].id == base[q].neighbors[j].id);
        CHECK(scaled[q].neighbors[j].similarity == doctest::Approx(base[q].neighbors[j].similarity).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("neighbours are ordered and ties go to the lowest id") {
    EmbeddingSet train;
    train.ids = {30, 10, 20};
    train.features = Matrix(3, 2, {1, 0, 2, 0, 0, 1});
    const auto locs = numbered_locations(3);
    const RetrievalIndex index = build_index(train, locs);
    EmbeddingSet q;
    q.ids = {1};
    q.features = Matrix(1, 2, {1, 0.1});
    const auto r = knn_predict(index, q, 5);
    REQUIRE(r[0].neighbors.size() == 3);
    CHECK(r[0].matched_id == 10);
    CHECK(r[0].neighbors[1].id == 30);
    CHECK(r[0].neighbors[2].id == 20);
    CHECK(r[0].neighbors[0].similarity >= r[0].neighbors[2].similarity);
    CHECK(r[0].location == locs[1]);
  }

  TEST_CASE("self query returns itself") {
    Rng rng(3);
    const EmbeddingSet train = random_set(30, 5, 1, rng);
    const auto r = knn_predict(build_index(train, numbered_locations(30)), train);
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(r[i].matched_id == train.ids[i]);
      CHECK(r[i].neighbors[0].similarity == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("errors") {
    Rng rng(4);
    EmbeddingSet train = random_set(4, 3, 1, rng);
    const auto locs = numbered_locations(4);
    CHECK_THROWS_AS(build_index(train, numbered_locations(3)), DataError);
    const RetrievalIndex index = build_index(train, locs);
    CHECK_THROWS_AS(knn_predict(index, random_set(2, 4, 9, rng)), ShapeError);
    CHECK_THROWS_AS(knn_predict(index, train, 0), DomainError);
    CHECK_THROWS_AS(knn_predict(RetrievalIndex{}, train), DataError);
    EmbeddingSet zero = train;
    for (double& v : zero.features.row(2)) v = 0;
    try {
      build_index(zero, locs);
      FAIL("expected a zero-norm error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find(" 3 ") != std::string::npos);
    }
    CHECK_THROWS_AS(knn_predict(index, zero), NumericError);
  }
}
