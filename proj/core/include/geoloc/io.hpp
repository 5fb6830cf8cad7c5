#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoloc/geodesy.hpp"
#include "geoloc/objectives.hpp"
#include "geoloc/partition.hpp"
#include "geoloc/trainer.hpp"

namespace geoloc {

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

// ---- metadata CSV -------------------------------------------------------------

struct MetadataRecord {
  std::uint64_t id = 0;
  GeoPoint location;
  AdminNames admin;
  std::string sequence_id;
  std::string split;  // "train", "test" or empty
  std::optional<AuxTargets> aux;
};

/// Parsed metadata plus which optional columns the header declared.
struct Metadata {
  std::vector<MetadataRecord> records;
  std::array<bool, kNumAdminLevels> has_admin{};
  bool has_sequence = false;
  bool has_split = false;
  bool has_aux = false;

  std::vector<GeoPoint> locations() const;
  /// id -> record index (ids are unique after parsing).
  std::unordered_map<std::uint64_t, std::size_t> id_index() const;
};

/// Required columns: id, latitude, longitude. Optional: country, region,
/// area, city, sequence_id, split, and the five auxiliary columns
/// land_cover, climate, soil, drives_left, dist_to_sea_km (all or none).
/// Errors carry the source name and line number.
Metadata parse_metadata_csv(std::string_view text, std::string_view source = "<input>");
Metadata read_metadata_csv(const std::filesystem::path& path);
/// Writes the columns the metadata declares, in canonical order.
std::string metadata_to_csv(const Metadata& meta);
/// Same columns, restricted to the given record indices.
std::string metadata_to_csv(const Metadata& meta, std::span<const std::size_t> rows);

// ---- embeddings -------------------------------------------------------------

/// "GLKEMB1\n", u32 n, u32 d, then n records of (u64 id, d x f32), little-endian.
EmbeddingSet decode_embeddings(std::string_view bytes);
/// Values are rounded to f32; throws NumericError if one is out of range.
std::string encode_embeddings(const EmbeddingSet& set);
EmbeddingSet read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);
/// Header "id,e0,...,e{d-1}".
std::string embeddings_to_csv(const EmbeddingSet& set);

/// Shortest text form that parses back to the same double.
std::string format_double(double value);

// ---- partition ----------------------------------------------------------------

/// Every division set a run can train against: QuadTree cells and the four
/// administrative levels, each with its lookup statistics.
struct PartitionSet {
  QuadTreePartition tree;
  LookupTable cell_lookup;
  AdminHierarchy admin;
  std::array<LookupTable, kNumAdminLevels> admin_lookups;

  /// "cell" or an admin level name; throws DataError otherwise.
  std::size_t num_classes(std::string_view level) const;
  const LookupTable& lookup(std::string_view level) const;
  /// Division of a sample at a level, if its names reach that level.
  std::optional<std::size_t> division_of(std::string_view level, const MetadataRecord& record) const;
  std::optional<Hierarchy> hierarchy(std::string_view level) const;
};

PartitionSet build_partition_set(const Metadata& meta, int max_depth, std::size_t max_leaf);
std::string partition_to_json(const PartitionSet& partition);
PartitionSet partition_from_json(std::string_view text);

/// Joins embeddings (sample order) to metadata by id and derives the labels
/// the config needs. Throws DataError on unmatched ids or missing labels.
TrainingSet assemble_training_set(const TrainConfig& cfg, const PartitionSet& partition, const Metadata& meta,
                                  const EmbeddingSet& embeddings);

// ---- run config ----------------------------------------------------------------

struct DataPaths {
  std::string train_embeddings;
  std::string train_metadata;
  std::string test_embeddings;
  std::string test_metadata;
  std::string partition;
};

struct PartitionParams {
  int max_depth = 10;
  std::size_t max_leaf = 1000;
};

struct EvalParams {
  double heatmap_cell_deg = 1.0;
};

struct CurationParams {
  double radius_km = 1.0;
  double grid_m = 100.0;
  double alpha = -0.75;
  double density_cell_deg = 0.1;
  double test_fraction = 0.1;
  std::optional<std::size_t> sample_size;
};

/// Strict JSON document; every section and key is optional but unknown keys
/// are rejected.
struct RunConfig {
  DataPaths data;
  PartitionParams partition;
  TrainConfig train;
  EvalParams eval;
  CurationParams curation;
};

RunConfig parse_run_config(std::string_view text);
std::string run_config_to_json(const RunConfig& config);

}  // namespace geoloc
