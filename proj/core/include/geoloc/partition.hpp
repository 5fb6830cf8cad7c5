#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoloc/geodesy.hpp"

namespace geoloc {

/// Axis-aligned lon/lat box in degrees. Membership is half-open [min, max)
/// except on the world's east and north edges, which are closed.
struct BBox {
  double lon_min = -180.0;
  double lat_min = -90.0;
  double lon_max = 180.0;
  double lat_max = 90.0;

  double width() const { return lon_max - lon_min; }
  double height() const { return lat_max - lat_min; }
  bool contains(const GeoPoint& p) const;
  /// Closed-interval test, used for hulls and relative coordinates.
  bool contains_closed(const GeoPoint& p, double tolerance = 0.0) const;

  static BBox world() { return {}; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Child order inside a split node.
enum Quadrant : int { kSouthWest = 0, kSouthEast = 1, kNorthWest = 2, kNorthEast = 3 };

struct QuadNode {
  BBox bbox;
  int depth = 0;
  std::int32_t parent = -1;
  std::array<std::int32_t, 4> children{-1, -1, -1, -1};
  std::int32_t leaf_id = -1;
  std::size_t count = 0;  // training points below this node

  bool is_leaf() const { return children[0] < 0; }
};

/// Adaptive QuadTree over the world box. Nodes are stored in depth-first
/// pre-order (root = node 0); leaves are numbered 0..K-1 in the same order,
/// which fixes the class id of every geocell.
class QuadTreePartition {
 public:
  QuadTreePartition() = default;
  /// Reassembles a tree from stored nodes; validates the structure.
  QuadTreePartition(int max_depth, std::size_t max_leaf, std::vector<QuadNode> nodes);

  int max_depth() const { return max_depth_; }
  std::size_t max_leaf() const { return max_leaf_; }
  std::size_t num_leaves() const { return leaf_nodes_.size(); }
  std::size_t num_nodes() const { return nodes_.size(); }
  const QuadNode& node(std::size_t id) const { return nodes_.at(id); }
  std::span<const QuadNode> nodes() const { return nodes_; }
  /// Node id of a leaf. Throws DataError for an unknown leaf id.
  std::size_t leaf_node(std::size_t leaf_id) const;

  std::size_t locate(const GeoPoint& q) const;
  std::vector<std::size_t> lineage(std::size_t leaf_id) const;

 private:
  friend QuadTreePartition build_quadtree(std::span<const GeoPoint>, int, std::size_t);
  void index_leaves();

  int max_depth_ = 0;
  std::size_t max_leaf_ = 1;
  std::vector<QuadNode> nodes_;
  std::vector<std::size_t> leaf_nodes_;
};

/// Splits any node holding more than max_leaf points while depth < max_depth.
QuadTreePartition build_quadtree(std::span<const GeoPoint> points, int max_depth, std::size_t max_leaf);

/// Leaf id whose box contains q.
std::size_t locate_cell(const QuadTreePartition& tree, const GeoPoint& q);

/// Node ids from the root down to the given leaf.
std::vector<std::size_t> cell_lineage(const QuadTreePartition& tree, std::size_t leaf_id);

/// Maps every fine class to one division per coarser level.
struct HierarchyLevel {
  std::string name;
  std::size_t size = 0;
  std::vector<std::size_t> parent_of_fine;
};

struct Hierarchy {
  std::string fine_name;
  std::size_t fine_size = 0;
  std::vector<HierarchyLevel> levels;  // coarse levels only, fine level excluded

  /// Throws DataError if some fine class has no valid ancestor at a level.
  void validate() const;
};

/// Coarse levels are QuadTree depths 1..(deepest leaf - 1); a leaf shallower
/// than a level is its own ancestor there.
Hierarchy quadtree_hierarchy(const QuadTreePartition& tree);

enum class AdminLevel : int { kCountry = 0, kRegion = 1, kArea = 2, kCity = 3 };
inline constexpr std::size_t kNumAdminLevels = 4;
inline constexpr std::array<std::string_view, kNumAdminLevels> kAdminLevelNames = {"country", "region",
                                                                                    "area", "city"};

std::string_view to_string(AdminLevel level);
std::optional<AdminLevel> parse_admin_level(std::string_view name);

/// Raw administrative names of one sample; an empty string means unknown.
using AdminNames = std::array<std::string, kNumAdminLevels>;

/// Nested country > region > area > city divisions. Divisions are keyed by
/// their full path ("FR/IDF/Paris/Paris") so equal names under different
/// parents stay distinct; ids are assigned in sorted key order.
class AdminHierarchy {
 public:
  AdminHierarchy() = default;
  static AdminHierarchy build(std::span<const AdminNames> samples);

  static std::string path_key(const AdminNames& names, AdminLevel level);

  std::size_t level_size(AdminLevel level) const { return keys_[index(level)].size(); }
  const std::vector<std::string>& keys(AdminLevel level) const { return keys_[index(level)]; }
  std::optional<std::size_t> find(AdminLevel level, std::string_view key) const;
  /// Parent division id at the next coarser level. Countries have none.
  std::size_t parent(AdminLevel level, std::size_t id) const;

  /// Generic hierarchy with `fine` as the finest level.
  Hierarchy to_hierarchy(AdminLevel fine) const;

  /// Rebuilds from stored keys and parents (deserialization).
  static AdminHierarchy from_parts(std::array<std::vector<std::string>, kNumAdminLevels> keys,
                                   std::array<std::vector<std::size_t>, kNumAdminLevels> parents);
  const std::vector<std::size_t>& parents(AdminLevel level) const { return parents_[index(level)]; }

 private:
  static std::size_t index(AdminLevel level) { return static_cast<std::size_t>(level); }
  void rebuild_index();

  std::array<std::vector<std::string>, kNumAdminLevels> keys_;
  std::array<std::vector<std::size_t>, kNumAdminLevels> parents_;
  std::array<std::unordered_map<std::string, std::size_t>, kNumAdminLevels> index_;
};

inline constexpr double kMinCellExtentDeg = 1e-6;

/// Lookup statistics of one division: training centroid, bounding box and
/// the centroid's relative position (x*, y*) inside the box.
struct CellStats {
  std::size_t id = 0;
  GeoPoint centroid;
  BBox bbox;
  double xstar = 0.5;
  double ystar = 0.5;
  std::size_t count = 0;
};

/// Division id -> CellStats, defined only for divisions with training points.
class LookupTable {
 public:
  LookupTable() = default;
  explicit LookupTable(std::size_t num_divisions) : cells_(num_divisions) {}

  std::size_t num_divisions() const { return cells_.size(); }
  bool contains(std::size_t id) const { return id < cells_.size() && cells_[id].has_value(); }
  /// Throws DataError for an id without statistics.
  const CellStats& at(std::size_t id) const;
  void set(CellStats stats);
  std::size_t num_populated() const;

 private:
  std::vector<std::optional<CellStats>> cells_;
};

/// Centroid = per-coordinate mean; bbox = hull of the division's points,
/// with zero extents floored at kMinCellExtentDeg.
LookupTable build_lookup(std::span<const std::size_t> labels, std::span<const GeoPoint> coords,
                         std::size_t num_divisions);

/// Same centroids, but each cell's bbox is its QuadTree box.
LookupTable build_lookup(const QuadTreePartition& tree, std::span<const GeoPoint> coords);

/// Fills x*, y* (and floors degenerate extents) from centroid and bbox.
CellStats make_cell_stats(std::size_t id, const GeoPoint& centroid, BBox bbox, std::size_t count);

}  // namespace geoloc
