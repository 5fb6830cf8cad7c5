#include "geoloc/partition.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "geoloc/error.hpp"

namespace geoloc {

bool BBox::contains(const GeoPoint& p) const {
  const bool lon_ok = p.lon() >= lon_min && (p.lon() < lon_max || (lon_max >= 180.0 && p.lon() <= lon_max));
  const bool lat_ok = p.lat() >= lat_min && (p.lat() < lat_max || (lat_max >= 90.0 && p.lat() <= lat_max));
  return lon_ok && lat_ok;
}

bool BBox::contains_closed(const GeoPoint& p, double tolerance) const {
  return p.lon() >= lon_min - tolerance && p.lon() <= lon_max + tolerance && p.lat() >= lat_min - tolerance &&
         p.lat() <= lat_max + tolerance;
}

namespace {

std::array<BBox, 4> split_box(const BBox& box) {
  const double mid_lon = 0.5 * (box.lon_min + box.lon_max);
  const double mid_lat = 0.5 * (box.lat_min + box.lat_max);
  return {{
      {box.lon_min, box.lat_min, mid_lon, mid_lat},  // SW
      {mid_lon, box.lat_min, box.lon_max, mid_lat},  // SE
      {box.lon_min, mid_lat, mid_lon, box.lat_max},  // NW
      {mid_lon, mid_lat, box.lon_max, box.lat_max},  // NE
  }};
}

int quadrant_of(const BBox& box, const GeoPoint& p) {
  const double mid_lon = 0.5 * (box.lon_min + box.lon_max);
  const double mid_lat = 0.5 * (box.lat_min + box.lat_max);
  const int east = p.lon() >= mid_lon ? 1 : 0;
  const int north = p.lat() >= mid_lat ? 1 : 0;
  return east + 2 * north;
}

struct Builder {
  std::span<const GeoPoint> points;
  int max_depth;
  std::size_t max_leaf;
  std::vector<QuadNode> nodes;

  std::int32_t grow(std::vector<std::size_t> members, const BBox& box, int depth, std::int32_t parent) {
    const auto id = static_cast<std::int32_t>(nodes.size());
    QuadNode node;
    node.bbox = box;
    node.depth = depth;
    node.parent = parent;
    node.count = members.size();
    nodes.push_back(node);
    if (members.size() <= max_leaf || depth >= max_depth) return id;

    std::array<std::vector<std::size_t>, 4> parts;
    for (std::size_t m : members) parts[static_cast<std::size_t>(quadrant_of(box, points[m]))].push_back(m);
    members.clear();
    members.shrink_to_fit();
    const auto boxes = split_box(box);
    for (std::size_t q = 0; q < 4; ++q) {
      const std::int32_t child = grow(std::move(parts[q]), boxes[q], depth + 1, id);
      nodes[static_cast<std::size_t>(id)].children[q] = child;
    }
    return id;
  }
};

}  // namespace

QuadTreePartition build_quadtree(std::span<const GeoPoint> points, int max_depth, std::size_t max_leaf) {
  if (points.empty()) throw DomainError("build_quadtree: no points");
  if (max_depth < 0) throw DomainError("build_quadtree: max_depth must be >= 0");
  if (max_leaf < 1) throw DomainError("build_quadtree: max_leaf must be >= 1");

  Builder builder{points, max_depth, max_leaf, {}};
  std::vector<std::size_t> all(points.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  builder.grow(std::move(all), BBox::world(), 0, -1);

  QuadTreePartition tree;
  tree.max_depth_ = max_depth;
  tree.max_leaf_ = max_leaf;
  tree.nodes_ = std::move(builder.nodes);
  tree.index_leaves();
  return tree;
}

QuadTreePartition::QuadTreePartition(int max_depth, std::size_t max_leaf, std::vector<QuadNode> nodes)
    : max_depth_(max_depth), max_leaf_(max_leaf), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw DataError("QuadTreePartition: no nodes");
  if (nodes_[0].parent != -1 || nodes_[0].depth != 0) throw DataError("QuadTreePartition: bad root");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const QuadNode& n = nodes_[i];
    if (n.is_leaf()) continue;
    const auto boxes = split_box(n.bbox);
    for (std::size_t q = 0; q < 4; ++q) {
      const auto c = n.children[q];
      if (c <= static_cast<std::int32_t>(i) || static_cast<std::size_t>(c) >= nodes_.size()) {
        throw DataError("QuadTreePartition: child index out of order");
      }
      const QuadNode& child = nodes_[static_cast<std::size_t>(c)];
      if (child.parent != static_cast<std::int32_t>(i) || child.depth != n.depth + 1 || !(child.bbox == boxes[q])) {
        throw DataError("QuadTreePartition: child " + std::to_string(c) + " inconsistent with its parent");
      }
    }
  }
  index_leaves();
}

void QuadTreePartition::index_leaves() {
  leaf_nodes_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf()) {
      nodes_[i].leaf_id = static_cast<std::int32_t>(leaf_nodes_.size());
      leaf_nodes_.push_back(i);
    } else {
      nodes_[i].leaf_id = -1;
    }
  }
}

std::size_t QuadTreePartition::leaf_node(std::size_t leaf_id) const {
  if (leaf_id >= leaf_nodes_.size()) throw DataError("unknown leaf id " + std::to_string(leaf_id));
  return leaf_nodes_[leaf_id];
}

std::size_t QuadTreePartition::locate(const GeoPoint& q) const {
  std::size_t id = 0;
  while (!nodes_[id].is_leaf()) {
    const QuadNode& n = nodes_[id];
    id = static_cast<std::size_t>(n.children[static_cast<std::size_t>(quadrant_of(n.bbox, q))]);
  }
  return static_cast<std::size_t>(nodes_[id].leaf_id);
}

std::vector<std::size_t> QuadTreePartition::lineage(std::size_t leaf_id) const {
  std::vector<std::size_t> chain;
  for (auto id = static_cast<std::int32_t>(leaf_node(leaf_id)); id >= 0; id = nodes_[static_cast<std::size_t>(id)].parent) {
    chain.push_back(static_cast<std::size_t>(id));
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

std::size_t locate_cell(const QuadTreePartition& tree, const GeoPoint& q) { return tree.locate(q); }

std::vector<std::size_t> cell_lineage(const QuadTreePartition& tree, std::size_t leaf_id) {
  return tree.lineage(leaf_id);
}

void Hierarchy::validate() const {
  for (const HierarchyLevel& level : levels) {
    if (level.parent_of_fine.size() != fine_size) {
      throw DataError("hierarchy level '" + level.name + "' does not cover every fine class");
    }
    for (std::size_t parent : level.parent_of_fine) {
      if (parent >= level.size) throw DataError("hierarchy level '" + level.name + "' has an orphan fine class");
    }
  }
}

Hierarchy quadtree_hierarchy(const QuadTreePartition& tree) {
  Hierarchy h;
  h.fine_name = "cell";
  h.fine_size = tree.num_leaves();
  int deepest = 0;
  for (const QuadNode& n : tree.nodes()) {
    if (n.is_leaf()) deepest = std::max(deepest, n.depth);
  }
  std::vector<std::vector<std::size_t>> lineages(tree.num_leaves());
  for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) lineages[leaf] = tree.lineage(leaf);

  for (int depth = 1; depth < deepest; ++depth) {
    HierarchyLevel level;
    level.name = "depth-" + std::to_string(depth);
    level.parent_of_fine.resize(h.fine_size);
    std::map<std::size_t, std::size_t> coarse_ids;
    for (std::size_t leaf = 0; leaf < h.fine_size; ++leaf) {
      const auto& chain = lineages[leaf];
      const std::size_t ancestor = chain[std::min(static_cast<std::size_t>(depth), chain.size() - 1)];
      auto [it, inserted] = coarse_ids.emplace(ancestor, coarse_ids.size());
      level.parent_of_fine[leaf] = it->second;
    }
    level.size = coarse_ids.size();
    h.levels.push_back(std::move(level));
  }
  return h;
}

std::string_view to_string(AdminLevel level) { return kAdminLevelNames[static_cast<std::size_t>(level)]; }

std::optional<AdminLevel> parse_admin_level(std::string_view name) {
  for (std::size_t i = 0; i < kNumAdminLevels; ++i) {
    if (kAdminLevelNames[i] == name) return static_cast<AdminLevel>(i);
  }
  return std::nullopt;
}

std::string AdminHierarchy::path_key(const AdminNames& names, AdminLevel level) {
  const auto depth = static_cast<std::size_t>(level);
  if (names[depth].empty()) return {};
  std::string key;
  for (std::size_t i = 0; i <= depth; ++i) {
    if (names[i].empty()) {
      throw DataError("admin names: '" + names[depth] + "' has no " + std::string(kAdminLevelNames[i]));
    }
    if (i > 0) key += '/';
    key += names[i];
  }
  return key;
}

AdminHierarchy AdminHierarchy::build(std::span<const AdminNames> samples) {
  std::array<std::set<std::string>, kNumAdminLevels> seen;
  std::array<std::map<std::string, std::string>, kNumAdminLevels> parent_key;
  for (const AdminNames& names : samples) {
    for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
      std::string key = path_key(names, static_cast<AdminLevel>(l));
      if (key.empty()) continue;
      if (l > 0) parent_key[l][key] = path_key(names, static_cast<AdminLevel>(l - 1));
      seen[l].insert(std::move(key));
    }
  }
  AdminHierarchy h;
  for (std::size_t l = 0; l < kNumAdminLevels; ++l) h.keys_[l].assign(seen[l].begin(), seen[l].end());
  h.rebuild_index();
  for (std::size_t l = 1; l < kNumAdminLevels; ++l) {
    h.parents_[l].reserve(h.keys_[l].size());
    for (const std::string& key : h.keys_[l]) {
      h.parents_[l].push_back(h.index_[l - 1].at(parent_key[l].at(key)));
    }
  }
  return h;
}

AdminHierarchy AdminHierarchy::from_parts(std::array<std::vector<std::string>, kNumAdminLevels> keys,
                                          std::array<std::vector<std::size_t>, kNumAdminLevels> parents) {
  AdminHierarchy h;
  h.keys_ = std::move(keys);
  h.parents_ = std::move(parents);
  if (!h.parents_[0].empty()) throw DataError("admin hierarchy: countries cannot have parents");
  for (std::size_t l = 1; l < kNumAdminLevels; ++l) {
    if (h.parents_[l].size() != h.keys_[l].size()) throw DataError("admin hierarchy: parent list size mismatch");
    for (std::size_t p : h.parents_[l]) {
      if (p >= h.keys_[l - 1].size()) throw DataError("admin hierarchy: dangling parent id");
    }
  }
  h.rebuild_index();
  return h;
}

void AdminHierarchy::rebuild_index() {
  for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
    index_[l].clear();
    for (std::size_t i = 0; i < keys_[l].size(); ++i) {
      if (!index_[l].emplace(keys_[l][i], i).second) throw DataError("admin hierarchy: duplicate key " + keys_[l][i]);
    }
  }
}

std::optional<std::size_t> AdminHierarchy::find(AdminLevel level, std::string_view key) const {
  const auto& idx = index_[index(level)];
  auto it = idx.find(std::string(key));
  if (it == idx.end()) return std::nullopt;
  return it->second;
}

std::size_t AdminHierarchy::parent(AdminLevel level, std::size_t id) const {
  if (level == AdminLevel::kCountry) throw DataError("countries have no parent division");
  return parents_[index(level)].at(id);
}

Hierarchy AdminHierarchy::to_hierarchy(AdminLevel fine) const {
  Hierarchy h;
  h.fine_name = std::string(to_string(fine));
  h.fine_size = level_size(fine);
  std::vector<std::size_t> current(h.fine_size);
  std::iota(current.begin(), current.end(), std::size_t{0});
  for (int l = static_cast<int>(fine) - 1; l >= 0; --l) {
    const auto child_level = static_cast<AdminLevel>(l + 1);
    for (std::size_t& id : current) id = parent(child_level, id);
    HierarchyLevel level;
    level.name = std::string(kAdminLevelNames[static_cast<std::size_t>(l)]);
    level.size = level_size(static_cast<AdminLevel>(l));
    level.parent_of_fine = current;
    h.levels.push_back(std::move(level));
  }
  return h;
}

const CellStats& LookupTable::at(std::size_t id) const {
  if (!contains(id)) throw DataError("lookup: division " + std::to_string(id) + " has no training points");
  return *cells_[id];
}

void LookupTable::set(CellStats stats) {
  if (stats.id >= cells_.size()) throw DataError("lookup: division id out of range");
  const std::size_t id = stats.id;
  cells_[id] = std::move(stats);
}

std::size_t LookupTable::num_populated() const {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.has_value(); }));
}

CellStats make_cell_stats(std::size_t id, const GeoPoint& centroid, BBox bbox, std::size_t count) {
  if (bbox.width() < kMinCellExtentDeg) bbox.lon_max = bbox.lon_min + kMinCellExtentDeg;
  if (bbox.height() < kMinCellExtentDeg) bbox.lat_max = bbox.lat_min + kMinCellExtentDeg;
  CellStats s;
  s.id = id;
  s.centroid = centroid;
  s.bbox = bbox;
  s.count = count;
  s.xstar = std::clamp((centroid.lon() - bbox.lon_min) / bbox.width(), 0.0, 1.0);
  s.ystar = std::clamp((centroid.lat() - bbox.lat_min) / bbox.height(), 0.0, 1.0);
  return s;
}

namespace {

struct Accumulator {
  double lat_sum = 0.0;
  double lon_sum = 0.0;
  std::size_t count = 0;
  BBox hull{180.0, 90.0, -180.0, -90.0};

  void add(const GeoPoint& p) {
    lat_sum += p.lat();
    lon_sum += p.lon();
    ++count;
    hull.lon_min = std::min(hull.lon_min, p.lon());
    hull.lon_max = std::max(hull.lon_max, p.lon());
    hull.lat_min = std::min(hull.lat_min, p.lat());
    hull.lat_max = std::max(hull.lat_max, p.lat());
  }

  GeoPoint centroid() const {
    const double n = static_cast<double>(count);
    return GeoPoint(std::clamp(lat_sum / n, -90.0, 90.0), lon_sum / n);
  }
};

std::vector<Accumulator> accumulate(std::span<const std::size_t> labels, std::span<const GeoPoint> coords,
                                    std::size_t num_divisions) {
  if (labels.size() != coords.size()) throw ShapeError("build_lookup: labels and coordinates differ in length");
  std::vector<Accumulator> acc(num_divisions);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_divisions) throw DataError("build_lookup: division id out of range");
    acc[labels[i]].add(coords[i]);
  }
  return acc;
}

}  // namespace

LookupTable build_lookup(std::span<const std::size_t> labels, std::span<const GeoPoint> coords,
                         std::size_t num_divisions) {
  const auto acc = accumulate(labels, coords, num_divisions);
  LookupTable table(num_divisions);
  for (std::size_t k = 0; k < num_divisions; ++k) {
    if (acc[k].count == 0) continue;
    // The centroid can round one ulp past the hull; widen the hull to cover it.
    BBox hull = acc[k].hull;
    const GeoPoint c = acc[k].centroid();
    hull.lon_min = std::min(hull.lon_min, c.lon());
    hull.lon_max = std::max(hull.lon_max, c.lon());
    hull.lat_min = std::min(hull.lat_min, c.lat());
    hull.lat_max = std::max(hull.lat_max, c.lat());
    table.set(make_cell_stats(k, c, hull, acc[k].count));
  }
  return table;
}

LookupTable build_lookup(const QuadTreePartition& tree, std::span<const GeoPoint> coords) {
  std::vector<std::size_t> labels(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) labels[i] = tree.locate(coords[i]);
  const auto acc = accumulate(labels, coords, tree.num_leaves());
  LookupTable table(tree.num_leaves());
  for (std::size_t k = 0; k < tree.num_leaves(); ++k) {
    if (acc[k].count == 0) continue;
    table.set(make_cell_stats(k, acc[k].centroid(), tree.node(tree.leaf_node(k)).bbox, acc[k].count));
  }
  return table;
}

}  // namespace geoloc
