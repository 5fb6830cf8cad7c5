#include <algorithm>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "geoloc/error.hpp"
#include "geoloc/partition.hpp"
#include "geoloc/random.hpp"

using namespace geoloc;

namespace {

std::vector<std::size_t> scan_leaves(const QuadTreePartition& tree, const GeoPoint& p) {
  std::vector<std::size_t> hits;
  for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
    if (tree.node(tree.leaf_node(leaf)).bbox.contains(p)) hits.push_back(leaf);
  }
  return hits;
}

std::vector<GeoPoint> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GeoPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    // Clustered so the tree gets deep in places.
    if (i % 2 == 0) {
      pts.emplace_back(rng.uniform(-90, 90), rng.uniform(-180, 180));
    } else {
      pts.emplace_back(std::clamp(45 + 3 * rng.normal(), -90.0, 90.0), 7 + 3 * rng.normal());
    }
  }
  return pts;
}

}  // namespace

TEST_SUITE("partition") {
  TEST_CASE("one point per quadrant splits once") {
    const std::vector<GeoPoint> pts = {{-10, -10}, {-10, 10}, {10, -10}, {10, 10}};
    const auto tree = build_quadtree(pts, 10, 1);
    REQUIRE(tree.num_leaves() == 4);
    CHECK(tree.num_nodes() == 5);
    for (std::size_t leaf = 0; leaf < 4; ++leaf) {
      const QuadNode& n = tree.node(tree.leaf_node(leaf));
      CHECK(n.depth == 1);
      CHECK(n.count == 1);
    }
    // Depth-first order SW, SE, NW, NE.
    CHECK(locate_cell(tree, pts[0]) == 0);
    CHECK(locate_cell(tree, pts[1]) == 1);
    CHECK(locate_cell(tree, pts[2]) == 2);
    CHECK(locate_cell(tree, pts[3]) == 3);
  }

  TEST_CASE("a single point stays in the root") {
    const std::vector<GeoPoint> pts = {{12, 34}};
    const auto tree = build_quadtree(pts, 10, 1);
    CHECK(tree.num_leaves() == 1);
    CHECK(tree.node(0).is_leaf());
    CHECK(tree.node(0).bbox == BBox::world());
    CHECK(cell_lineage(tree, 0) == std::vector<std::size_t>{0});
  }

  TEST_CASE("depth cap wins over leaf size") {
    const std::vector<GeoPoint> pts(1001, GeoPoint(12.5, 33.3));
    const auto tree = build_quadtree(pts, 10, 1000);
    const QuadNode& leaf = tree.node(tree.leaf_node(locate_cell(tree, pts[0])));
    CHECK(leaf.depth == 10);
    CHECK(leaf.count == 1001);
    CHECK(tree.num_leaves() == 1 + 3 * 10);
  }

  TEST_CASE("build errors") {
    const std::vector<GeoPoint> none;
    CHECK_THROWS_AS(build_quadtree(none, 3, 1), DomainError);
    const std::vector<GeoPoint> one = {{0, 0}};
    CHECK_THROWS_AS(build_quadtree(one, -1, 1), DomainError);
    CHECK_THROWS_AS(build_quadtree(one, 3, 0), DomainError);
  }

  TEST_CASE("boundary convention") {
    const std::vector<GeoPoint> pts = {{-10, -10}, {-10, 10}, {10, -10}, {10, 10}};
    const auto tree = build_quadtree(pts, 10, 1);
    CHECK(locate_cell(tree, {10, 0}) == 3);    // on the split meridian -> east
    CHECK(locate_cell(tree, {-10, 0}) == 1);
    CHECK(locate_cell(tree, {0, 10}) == 3);    // on the equator -> north
    CHECK(locate_cell(tree, {0, -10}) == 2);
    CHECK(locate_cell(tree, {0, 0}) == 3);
    CHECK(locate_cell(tree, {90, 179.999}) == 3);  // closed north edge
    CHECK(locate_cell(tree, {-90, -180}) == 0);
    CHECK(locate_cell(tree, {-90, 180}) == 0);     // 180 wraps to -180
  }

  TEST_CASE("locate_cell equals a naive scan of every leaf") {
    const auto pts = random_points(500, 3);
    const auto tree = build_quadtree(pts, 6, 8);
    CHECK(tree.num_leaves() > 20);
    Rng rng(4);
    std::vector<GeoPoint> queries = pts;
    for (int i = 0; i < 500; ++i) queries.emplace_back(rng.uniform(-90, 90), rng.uniform(-180, 180));
    queries.emplace_back(90, 0);
    queries.emplace_back(0, 0);
    queries.emplace_back(45, 0);
    queries.emplace_back(-90, -180);
    for (const GeoPoint& q : queries) {
      const auto hits = scan_leaves(tree, q);
      REQUIRE(hits.size() == 1);
      CHECK(locate_cell(tree, q) == hits[0]);
    }
  }

  TEST_CASE("leaf counts and depth invariants") {
    const auto pts = random_points(500, 5);
    const auto tree = build_quadtree(pts, 6, 8);
    std::size_t total = 0;
    std::vector<std::size_t> counted(tree.num_leaves(), 0);
    for (const GeoPoint& p : pts) ++counted[locate_cell(tree, p)];
    for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
      const QuadNode& n = tree.node(tree.leaf_node(leaf));
      CHECK(n.count == counted[leaf]);
      CHECK(n.depth <= 6);
      if (n.depth < 6) CHECK(n.count <= 8);
      total += n.count;
    }
    CHECK(total == pts.size());
    for (const QuadNode& n : tree.nodes()) {
      if (n.is_leaf()) continue;
      // Children tile the parent exactly.
      const BBox& b = n.bbox;
      const double mx = 0.5 * (b.lon_min + b.lon_max);
      const double my = 0.5 * (b.lat_min + b.lat_max);
      CHECK(tree.node(n.children[kSouthWest]).bbox == BBox{b.lon_min, b.lat_min, mx, my});
      CHECK(tree.node(n.children[kSouthEast]).bbox == BBox{mx, b.lat_min, b.lon_max, my});
      CHECK(tree.node(n.children[kNorthWest]).bbox == BBox{b.lon_min, my, mx, b.lat_max});
      CHECK(tree.node(n.children[kNorthEast]).bbox == BBox{mx, my, b.lon_max, b.lat_max});
      std::size_t below = 0;
      for (auto c : n.children) below += tree.node(static_cast<std::size_t>(c)).count;
      CHECK(below == n.count);
    }
  }

  TEST_CASE("cell lineage") {
    const std::vector<GeoPoint> pts = {{50, 100}, {80, 170}};
    const auto tree = build_quadtree(pts, 10, 1);
    const std::size_t leaf = locate_cell(tree, {80, 170});
    const auto chain = cell_lineage(tree, leaf);
    REQUIRE(chain.size() == 4);
    CHECK(chain.front() == 0);
    CHECK(tree.node(chain[1]).bbox == BBox{0, 0, 180, 90});
    CHECK(tree.node(chain[2]).bbox == BBox{90, 45, 180, 90});
    CHECK(tree.node(chain[3]).bbox == BBox{135, 67.5, 180, 90});
    for (std::size_t i = 1; i < chain.size(); ++i) {
      CHECK(static_cast<std::size_t>(tree.node(chain[i]).parent) == chain[i - 1]);
    }
    CHECK(chain.size() == static_cast<std::size_t>(tree.node(chain.back()).depth) + 1);

    const std::vector<GeoPoint> quad = {{-10, -10}, {-10, 10}, {10, -10}, {10, 10}};
    const auto t1 = build_quadtree(quad, 10, 1);
    CHECK(cell_lineage(t1, 2) == std::vector<std::size_t>{0, t1.leaf_node(2)});
    CHECK_THROWS_AS(cell_lineage(t1, 4), DataError);
  }

  TEST_CASE("quadtree hierarchy maps leaves to ancestors") {
    const auto pts = random_points(300, 6);
    const auto tree = build_quadtree(pts, 5, 10);
    const Hierarchy h = quadtree_hierarchy(tree);
    h.validate();
    CHECK(h.fine_size == tree.num_leaves());
    for (std::size_t l = 0; l < h.levels.size(); ++l) {
      const auto& level = h.levels[l];
      // Leaves sharing an ancestor at this depth map to the same coarse id.
      for (std::size_t a = 0; a < tree.num_leaves(); ++a) {
        for (std::size_t b = 0; b < tree.num_leaves(); ++b) {
          const auto ca = cell_lineage(tree, a);
          const auto cb = cell_lineage(tree, b);
          const std::size_t d = l + 1;
          const auto anc_a = ca[std::min(d, ca.size() - 1)];
          const auto anc_b = cb[std::min(d, cb.size() - 1)];
          CHECK((anc_a == anc_b) == (level.parent_of_fine[a] == level.parent_of_fine[b]));
        }
      }
    }
  }

  TEST_CASE("lookup examples") {
    const std::vector<std::size_t> labels = {0, 0};
    const std::vector<GeoPoint> pts = {{0, 0}, {10, 10}};
    const LookupTable t = build_lookup(labels, pts, 1);
    const CellStats& s = t.at(0);
    CHECK(s.centroid == GeoPoint(5, 5));
    CHECK(s.bbox == BBox{0, 0, 10, 10});
    CHECK(s.xstar == 0.5);
    CHECK(s.ystar == 0.5);
    CHECK(s.count == 2);

    const std::vector<std::size_t> one = {0};
    const std::vector<GeoPoint> single = {{3, 4}};
    const LookupTable pt = build_lookup(one, single, 1);
    const CellStats& p = pt.at(0);
    CHECK(p.centroid == GeoPoint(3, 4));
    CHECK(p.bbox.width() == doctest::Approx(kMinCellExtentDeg));
    CHECK(p.bbox.height() == doctest::Approx(kMinCellExtentDeg));
    CHECK(p.bbox.contains_closed(p.centroid));

    const std::vector<std::size_t> three = {0, 0, 0};
    const std::vector<GeoPoint> line = {{0, 0}, {5, 0}, {10, 0}};
    const LookupTable ct = build_lookup(three, line, 1);
    const CellStats& c = ct.at(0);
    CHECK(c.centroid.lat() == 5.0);
    CHECK(c.centroid.lon() == 0.0);
    CHECK(c.bbox.width() == doctest::Approx(kMinCellExtentDeg));
    CHECK(c.bbox.height() == 10.0);
    CHECK(c.ystar == 0.5);
  }

  TEST_CASE("lookup centroids equal a second-pass mean and skip empty divisions") {
    const auto pts = random_points(400, 7);
    std::vector<std::size_t> labels(pts.size());
    Rng rng(8);
    for (auto& l : labels) l = rng.index(9);  // division 9 stays empty
    const LookupTable t = build_lookup(labels, pts, 10);
    CHECK(t.num_populated() == 9);
    CHECK_FALSE(t.contains(9));
    CHECK_THROWS_AS(t.at(9), DataError);
    for (std::size_t k = 0; k < 9; ++k) {
      double lat = 0, lon = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (labels[i] != k) continue;
        lat += pts[i].lat();
        lon += pts[i].lon();
        ++n;
      }
      const CellStats& s = t.at(k);
      CHECK(s.centroid.lat() == lat / static_cast<double>(n));
      CHECK(s.centroid.lon() == lon / static_cast<double>(n));
      CHECK(s.xstar >= 0.0);
      CHECK(s.xstar <= 1.0);
      CHECK(s.ystar >= 0.0);
      CHECK(s.ystar <= 1.0);
      CHECK(s.bbox.contains_closed(s.centroid));
    }
  }

  TEST_CASE("quadtree lookup uses tree boxes") {
    const auto pts = random_points(200, 9);
    const auto tree = build_quadtree(pts, 6, 8);
    const LookupTable t = build_lookup(tree, pts);
    for (std::size_t k = 0; k < tree.num_leaves(); ++k) {
      if (!t.contains(k)) {
        CHECK(tree.node(tree.leaf_node(k)).count == 0);
        continue;
      }
      CHECK(t.at(k).bbox == tree.node(tree.leaf_node(k)).bbox);
      CHECK(t.at(k).count == tree.node(tree.leaf_node(k)).count);
    }
  }

  TEST_CASE("admin hierarchy keys by full path") {
    const std::vector<AdminNames> samples = {
        {"FR", "IDF", "Paris", "Paris"},
        {"US", "TX", "Lamar", "Paris"},
        {"FR", "IDF", "Paris", "Paris"},
        {"FR", "PACA", "", ""},
    };
    const AdminHierarchy h = AdminHierarchy::build(samples);
    CHECK(h.level_size(AdminLevel::kCountry) == 2);
    CHECK(h.level_size(AdminLevel::kRegion) == 3);
    CHECK(h.level_size(AdminLevel::kCity) == 2);
    CHECK(h.keys(AdminLevel::kCountry) == std::vector<std::string>{"FR", "US"});
    const auto paris_fr = h.find(AdminLevel::kCity, "FR/IDF/Paris/Paris");
    const auto paris_us = h.find(AdminLevel::kCity, "US/TX/Lamar/Paris");
    REQUIRE(paris_fr);
    REQUIRE(paris_us);
    CHECK(*paris_fr != *paris_us);
    const std::size_t area = h.parent(AdminLevel::kCity, *paris_us);
    const std::size_t region = h.parent(AdminLevel::kArea, area);
    const std::size_t country = h.parent(AdminLevel::kRegion, region);
    CHECK(h.keys(AdminLevel::kCountry)[country] == "US");
    CHECK_THROWS_AS(h.parent(AdminLevel::kCountry, 0), DataError);

    const Hierarchy fine = h.to_hierarchy(AdminLevel::kCity);
    fine.validate();
    CHECK(fine.fine_size == 2);
    CHECK(fine.levels.size() == 3);

    const AdminNames broken = {"", "IDF", "", ""};
    CHECK_THROWS_AS(AdminHierarchy::path_key(broken, AdminLevel::kRegion), DataError);
  }

  TEST_CASE("hierarchy validation rejects orphans") {
    Hierarchy h;
    h.fine_name = "city";
    h.fine_size = 3;
    h.levels.push_back({"country", 2, {0, 1, 2}});
    CHECK_THROWS_AS(h.validate(), DataError);
    h.levels[0].parent_of_fine = {0, 1};
    CHECK_THROWS_AS(h.validate(), DataError);
  }
}
