#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "geoloc/error.hpp"
#include "geoloc/evaluation.hpp"
#include "geoloc/random.hpp"

using namespace geoloc;

namespace {

std::vector<GeoPoint> random_points(std::size_t n, Rng& rng, double lat_lo = -60, double lat_hi = 60,
                                    double lon_lo = -180, double lon_hi = 180) {
  std::vector<GeoPoint> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(rng.uniform(lat_lo, lat_hi), rng.uniform(lon_lo, lon_hi));
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("perfect predictions") {
    Rng rng(1);
    const auto pts = random_points(20, rng);
    const EvalReport r = evaluate(pts, pts, {}, {});
    CHECK(r.geoscore == 5000.0);
    CHECK(r.mean_distance_km == 0.0);
    CHECK(r.median_distance_km == 0.0);
    CHECK(r.n_samples == 20);
    CHECK_THROWS_AS(evaluate(std::vector<GeoPoint>{}, std::vector<GeoPoint>{}, {}, {}), DomainError);
    CHECK_THROWS_AS(evaluate(pts, std::span(pts).first(3), {}, {}), ShapeError);
  }

  TEST_CASE("mixed errors") {
    std::vector<GeoPoint> truth(10, GeoPoint(0, 0));
    std::vector<GeoPoint> pred(10, GeoPoint(0, 0));
    pred[9] = GeoPoint(0, 180);
    const EvalReport r = evaluate(pred, truth, {}, {});
    const double half = kPi * 6371.0;
    CHECK(r.mean_distance_km == doctest::Approx(half / 10));
    CHECK(r.median_distance_km == 0.0);
    CHECK(r.geoscore == doctest::Approx((9 * 5000.0 + geoscore(half)) / 10).epsilon(1e-14));
  }

  TEST_CASE("division accuracy by nearest centroid") {
    DivisionLevel country{"country", {"A", "B"}, {GeoPoint(0, 0), GeoPoint(0, 90)}};
    const std::vector<GeoPoint> truth = {GeoPoint(1, 1), GeoPoint(2, 88), GeoPoint(0, 50), GeoPoint(0, 0)};
    const std::vector<GeoPoint> pred = {GeoPoint(0, 10), GeoPoint(0, 30), GeoPoint(0, 50), GeoPoint(0, 0)};
    const std::vector<std::vector<std::string>> keys = {{"A", "B", "B", ""}};
    const std::vector<DivisionLevel> levels = {country};
    const EvalReport r = evaluate(pred, truth, levels, keys);
    // Predictions fall to A, A, B; the unlabelled fourth sample is skipped.
    CHECK(r.accuracy.at("country") == doctest::Approx(2.0 / 3.0));
    CHECK(country.nearest(GeoPoint(10, 80)) == 1);
    CHECK_THROWS_AS(DivisionLevel{}.nearest(GeoPoint(0, 0)), DataError);
  }

  TEST_CASE("division levels skip empty divisions") {
    const std::vector<AdminNames> names = {{"X", "X1", "Xa", "x"}, {"Y", "Y1", "Ya", "y"}};
    const AdminHierarchy h = AdminHierarchy::build(names);
    std::array<LookupTable, kNumAdminLevels> lookups;
    for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
      lookups[l] = LookupTable(2);
      lookups[l].set(make_cell_stats(0, GeoPoint(3, 4), BBox{3, 2, 5, 4}, 1));
    }
    const auto levels = division_levels(h, lookups);
    REQUIRE(levels.size() == 4);
    for (const auto& l : levels) {
      CHECK(l.keys.size() == 1);
      CHECK(l.centroids[0] == GeoPoint(3, 4));
    }
    CHECK(levels[0].name == "country");
    CHECK(levels[3].name == "city");
  }

  TEST_CASE("report json round trip") {
    EvalReport r;
    r.geoscore = 1234.5;
    r.mean_distance_km = 88.25;
    r.median_distance_km = 7;
    r.accuracy = {{"country", 0.5}, {"city", 0.125}};
    r.n_samples = 9;
    const EvalReport back = report_from_json(report_to_json(r));
    CHECK(back.geoscore == r.geoscore);
    CHECK(back.mean_distance_km == r.mean_distance_km);
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.n_samples == 9);
    const std::string json = report_to_json(r);
    CHECK(json.find("country") < json.find("city"));
    CHECK_THROWS_AS(report_from_json("{\"geoscore\": 1}"), DataError);
  }

  TEST_CASE("toy geoscore") {
    // Two predictions, one exact and one 1492.7 km off.
    const std::vector<double> d = {0.0, 1492.7};
    CHECK(mean_geoscore(d) == doctest::Approx((5000.0 + 5000.0 * std::exp(-1.0)) / 2).epsilon(1e-14));
  }

  TEST_CASE("random baseline draws training locations") {
    const std::vector<GeoPoint> train = {GeoPoint(1, 2), GeoPoint(3, 4), GeoPoint(5, 6)};
    const auto a = random_baseline(train, 50, 7);
    const auto b = random_baseline(train, 50, 7);
    CHECK(a == b);
    std::map<double, int> hist;
    for (const auto& p : a) {
      CHECK(std::find(train.begin(), train.end(), p) != train.end());
      ++hist[p.lat()];
    }
    CHECK(hist.size() == 3);
    CHECK_THROWS_AS(random_baseline(std::vector<GeoPoint>{}, 3, 1), DomainError);
  }

  TEST_CASE("error grid matches a direct binning") {
    Rng rng(2);
    const auto truth = random_points(300, rng, -5, 5, -5, 5);
    const auto pred = random_points(300, rng, -5, 5, -5, 5);
    const auto grid = error_grid(pred, truth, 2.0);
    std::map<std::pair<long, long>, std::pair<double, std::size_t>> want;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      auto& w = want[{static_cast<long>(std::floor(truth[i].lat() / 2)), static_cast<long>(std::floor(truth[i].lon() / 2))}];
      w.first += haversine(pred[i], truth[i]);
      ++w.second;
    }
    REQUIRE(grid.size() == want.size());
    std::size_t total = 0;
    for (const GridCell& c : grid) {
      const auto& w = want.at({c.lat_bin, c.lon_bin});
      CHECK(c.count == w.second);
      CHECK(c.mean_km == doctest::Approx(w.first / static_cast<double>(w.second)).epsilon(1e-12));
      total += c.count;
    }
    CHECK(total == 300);
    CHECK(grid_to_csv(grid).rfind("lat_bin,lon_bin,mean_km,count\n", 0) == 0);
    CHECK_THROWS_AS(error_grid(pred, truth, 0.0), DomainError);
  }

  TEST_CASE("cumulative curve equals the empirical CDF") {
    const std::vector<double> d = {5, 1, 3, 3, 10};
    const auto curve = cumulative_error_curve(d);
    REQUIRE(curve.size() == 4);
    CHECK(curve[0].distance_km == 1);
    CHECK(curve[0].fraction == doctest::Approx(0.2));
    CHECK(curve[1].distance_km == 3);
    CHECK(curve[1].fraction == doctest::Approx(0.6));
    CHECK(curve[3].fraction == 1.0);
    Rng rng(3);
    std::vector<double> many(200);
    for (double& v : many) v = std::floor(rng.uniform(0, 50));
    for (const auto& p : cumulative_error_curve(many)) {
      const auto below = std::count_if(many.begin(), many.end(), [&](double v) { return v <= p.distance_km; });
      CHECK(p.fraction == doctest::Approx(static_cast<double>(below) / 200.0));
    }
    CHECK_THROWS_AS(cumulative_error_curve(std::vector<double>{}), DomainError);
  }

  TEST_CASE("separation splits match brute force") {
    Rng rng(4);
    const auto train = random_points(400, rng, 40, 41, 0, 1);
    const auto cand = random_points(300, rng, 40, 41, 0, 1);
    std::vector<std::string> tseq(train.size()), cseq(cand.size());
    tseq[0] = "s0";
    cseq[5] = "s0";  // shares a sequence with training: always excluded
    cseq[6] = "other";
    const std::vector<double> radii = {0, 1, 5};
    const auto splits = separation_splits(train, tseq, cand, cseq, radii);
    REQUIRE(splits.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
      std::vector<std::size_t> want;
      for (std::size_t c = 0; c < cand.size(); ++c) {
        if (c == 5) continue;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : train) best = std::min(best, haversine(cand[c], t));
        if (best > radii[r]) want.push_back(c);
      }
      CHECK(splits[r] == want);
    }
    CHECK(std::includes(splits[0].begin(), splits[0].end(), splits[1].begin(), splits[1].end()));
    CHECK(std::includes(splits[1].begin(), splits[1].end(), splits[2].begin(), splits[2].end()));
    CHECK(splits[2].size() < splits[0].size());
    const std::vector<double> neg = {-1};
    CHECK_THROWS_AS(separation_splits(train, tseq, cand, cseq, neg), DomainError);
  }

  TEST_CASE("nearest training distance respects the horizon") {
    const std::vector<GeoPoint> train = {GeoPoint(0, 0)};
    const std::vector<GeoPoint> cand = {GeoPoint(0, 0.001), GeoPoint(10, 0)};
    const auto d = nearest_train_distance(train, cand, 50);
    CHECK(d[0] == doctest::Approx(haversine(train[0], cand[0])));
    CHECK(std::isinf(d[1]));
  }
}
