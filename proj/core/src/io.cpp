#include "geoloc/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

#include "geoloc/error.hpp"
#include "json.hpp"

namespace geoloc {

using json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot replace " + path.string() + ": " + ec.message());
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw NumericError("cannot format number");
  return {buf, end};
}

namespace {

std::string format_float(float value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw NumericError("cannot format number");
  return {buf, end};
}

// ---- CSV ----------------------------------------------------------------------

class CsvError {
 public:
  CsvError(std::string_view source, std::size_t line) : prefix_(std::string(source) + ":" + std::to_string(line) + ": ") {}
  [[noreturn]] void fail(const std::string& message) const { throw DataError(prefix_ + message); }

 private:
  std::string prefix_;
};

std::vector<std::string> split_csv_line(std::string_view line, const CsvError& err) {
  std::vector<std::string> fields;
  std::string field;
  std::size_t i = 0;
  while (true) {
    field.clear();
    if (i < line.size() && line[i] == '"') {
      ++i;
      while (true) {
        if (i >= line.size()) err.fail("unterminated quoted field");
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        field += line[i++];
      }
      if (i < line.size() && line[i] != ',') err.fail("unexpected character after quoted field");
    } else {
      while (i < line.size() && line[i] != ',') {
        if (line[i] == '"') err.fail("stray quote in unquoted field");
        field += line[i++];
      }
    }
    fields.push_back(field);
    if (i >= line.size()) break;
    ++i;  // comma
  }
  return fields;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

constexpr std::array<std::string_view, 5> kAuxColumns = {"land_cover", "climate", "soil", "drives_left",
                                                         "dist_to_sea_km"};

enum Column : int {
  kId,
  kLatitude,
  kLongitude,
  kCountry,
  kRegion,
  kArea,
  kCity,
  kSequence,
  kSplit,
  kLandCover,
  kClimate,
  kSoil,
  kDrivesLeft,
  kDistToSea,
  kNumColumns
};

constexpr std::array<std::string_view, kNumColumns> kColumnNames = {
    "id",   "latitude",    "longitude", "country",    "region",  "area", "city", "sequence_id",
    "split", "land_cover", "climate",   "soil",       "drives_left", "dist_to_sea_km"};

}  // namespace

std::vector<GeoPoint> Metadata::locations() const {
  std::vector<GeoPoint> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.location);
  return out;
}

std::unordered_map<std::uint64_t, std::size_t> Metadata::id_index() const {
  std::unordered_map<std::uint64_t, std::size_t> index;
  index.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!index.emplace(records[i].id, i).second) throw DataError("duplicate id " + std::to_string(records[i].id));
  }
  return index;
}

Metadata parse_metadata_csv(std::string_view text, std::string_view source) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  Metadata meta;
  std::array<int, kNumColumns> position;
  position.fill(-1);
  std::size_t width = 0;
  bool have_header = false;
  std::set<std::uint64_t> seen_ids;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const CsvError err(source, line_no);
    if (line.empty()) {
      if (!have_header) err.fail("empty header line");
      continue;
    }
    auto fields = split_csv_line(line, err);
    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const auto it = std::find(kColumnNames.begin(), kColumnNames.end(), fields[i]);
        if (it == kColumnNames.end()) err.fail("unknown column '" + fields[i] + "'");
        const auto c = static_cast<std::size_t>(it - kColumnNames.begin());
        if (position[c] >= 0) err.fail("duplicate column '" + fields[i] + "'");
        position[c] = static_cast<int>(i);
      }
      for (int c : {kId, kLatitude, kLongitude}) {
        if (position[c] < 0) err.fail("missing required column '" + std::string(kColumnNames[c]) + "'");
      }
      int aux_present = 0;
      for (int c = kLandCover; c <= kDistToSea; ++c) aux_present += position[c] >= 0;
      if (aux_present != 0 && aux_present != static_cast<int>(kAuxColumns.size())) {
        err.fail("auxiliary columns must be given all together");
      }
      for (std::size_t l = 0; l < kNumAdminLevels; ++l) meta.has_admin[l] = position[kCountry + l] >= 0;
      meta.has_sequence = position[kSequence] >= 0;
      meta.has_split = position[kSplit] >= 0;
      meta.has_aux = aux_present > 0;
      width = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != width) {
      err.fail("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
    }
    const auto field = [&](int c) -> const std::string& {
      static const std::string empty;
      return position[c] >= 0 ? fields[static_cast<std::size_t>(position[c])] : empty;
    };
    MetadataRecord r;
    if (!parse_number(field(kId), r.id)) err.fail("bad id '" + field(kId) + "'");
    if (!seen_ids.insert(r.id).second) err.fail("duplicate id " + field(kId));
    double lat = 0.0;
    double lon = 0.0;
    if (!parse_number(field(kLatitude), lat)) err.fail("bad latitude '" + field(kLatitude) + "'");
    if (!parse_number(field(kLongitude), lon)) err.fail("bad longitude '" + field(kLongitude) + "'");
    try {
      r.location = GeoPoint(lat, lon);
    } catch (const Error& e) {
      err.fail(e.what());
    }
    for (std::size_t l = 0; l < kNumAdminLevels; ++l) r.admin[l] = field(static_cast<int>(kCountry + l));
    for (std::size_t l = 1; l < kNumAdminLevels; ++l) {
      if (!r.admin[l].empty() && r.admin[l - 1].empty()) {
        err.fail(std::string(kAdminLevelNames[l]) + " given without " + std::string(kAdminLevelNames[l - 1]));
      }
    }
    r.sequence_id = field(kSequence);
    r.split = field(kSplit);
    if (!r.split.empty() && r.split != "train" && r.split != "test") err.fail("split must be train or test");
    if (meta.has_aux) {
      int filled = 0;
      for (int c = kLandCover; c <= kDistToSea; ++c) filled += !field(c).empty();
      if (filled == static_cast<int>(kAuxColumns.size())) {
        AuxTargets t;
        std::size_t drives = 0;
        if (!parse_number(field(kLandCover), t.land_cover)) err.fail("bad land_cover");
        if (!parse_number(field(kClimate), t.climate)) err.fail("bad climate");
        if (!parse_number(field(kSoil), t.soil)) err.fail("bad soil");
        if (!parse_number(field(kDrivesLeft), drives) || drives > 1) err.fail("drives_left must be 0 or 1");
        if (!parse_number(field(kDistToSea), t.dist_to_sea_km)) err.fail("bad dist_to_sea_km");
        t.drives_left = drives == 1;
        try {
          t.validate();
        } catch (const Error& e) {
          err.fail(e.what());
        }
        r.aux = t;
      } else if (filled != 0) {
        err.fail("auxiliary fields must be all filled or all empty");
      }
    }
    meta.records.push_back(std::move(r));
  }
  if (!have_header) throw DataError(std::string(source) + ":1: missing header");
  return meta;
}

Metadata read_metadata_csv(const std::filesystem::path& path) {
  return parse_metadata_csv(read_file(path), path.string());
}

std::string metadata_to_csv(const Metadata& meta, std::span<const std::size_t> rows) {
  std::vector<int> columns = {kId, kLatitude, kLongitude};
  for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
    if (meta.has_admin[l]) columns.push_back(static_cast<int>(kCountry + l));
  }
  if (meta.has_sequence) columns.push_back(kSequence);
  if (meta.has_split) columns.push_back(kSplit);
  if (meta.has_aux) {
    for (int c = kLandCover; c <= kDistToSea; ++c) columns.push_back(c);
  }
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out += ',';
    out += kColumnNames[columns[i]];
  }
  out += '\n';
  for (std::size_t row : rows) {
    const MetadataRecord& r = meta.records.at(row);
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out += ',';
      const int c = columns[i];
      switch (c) {
        case kId: out += std::to_string(r.id); break;
        case kLatitude: out += format_double(r.location.lat()); break;
        case kLongitude: out += format_double(r.location.lon()); break;
        case kSequence: out += csv_field(r.sequence_id); break;
        case kSplit: out += r.split; break;
        case kLandCover: if (r.aux) out += std::to_string(r.aux->land_cover); break;
        case kClimate: if (r.aux) out += std::to_string(r.aux->climate); break;
        case kSoil: if (r.aux) out += std::to_string(r.aux->soil); break;
        case kDrivesLeft: if (r.aux) out += r.aux->drives_left ? "1" : "0"; break;
        case kDistToSea: if (r.aux) out += format_double(r.aux->dist_to_sea_km); break;
        default: out += csv_field(r.admin[static_cast<std::size_t>(c - kCountry)]); break;
      }
    }
    out += '\n';
  }
  return out;
}

std::string metadata_to_csv(const Metadata& meta) {
  std::vector<std::size_t> rows(meta.records.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return metadata_to_csv(meta, rows);
}

// ---- embeddings ---------------------------------------------------------------

namespace {

constexpr std::string_view kEmbeddingMagic = "GLKEMB1\n";

template <class T>
T read_le(std::string_view bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

template <class T>
void append_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out += static_cast<char>((value >> (8 * i)) & 0xFF);
}

}  // namespace

EmbeddingSet decode_embeddings(std::string_view bytes) {
  constexpr std::size_t header = kEmbeddingMagic.size() + 8;
  if (bytes.size() < header || bytes.substr(0, kEmbeddingMagic.size()) != kEmbeddingMagic) {
    throw DataError("embedding file: bad magic");
  }
  const std::uint64_t n = read_le<std::uint32_t>(bytes, kEmbeddingMagic.size());
  const std::uint64_t d = read_le<std::uint32_t>(bytes, kEmbeddingMagic.size() + 4);
  const std::uint64_t record = 8 + 4 * d;
  if (bytes.size() != header + n * record) {
    throw DataError("embedding file: declared " + std::to_string(n) + "x" + std::to_string(d) +
                    " does not match file length " + std::to_string(bytes.size()));
  }
  EmbeddingSet set;
  set.ids.resize(n);
  set.features = Matrix(n, d);
  std::size_t off = header;
  for (std::size_t i = 0; i < n; ++i) {
    set.ids[i] = read_le<std::uint64_t>(bytes, off);
    off += 8;
    auto row = set.features.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const float v = std::bit_cast<float>(read_le<std::uint32_t>(bytes, off));
      off += 4;
      if (!std::isfinite(v)) throw DataError("embedding file: non-finite value for id " + std::to_string(set.ids[i]));
      row[j] = v;
    }
  }
  set.validate();
  return set;
}

std::string encode_embeddings(const EmbeddingSet& set) {
  set.validate();
  if (set.size() > 0xFFFFFFFFu || set.dim() > 0xFFFFFFFFu) throw DataError("embedding file: too large");
  std::string out(kEmbeddingMagic);
  out.reserve(out.size() + 8 + set.size() * (8 + 4 * set.dim()));
  append_le(out, static_cast<std::uint32_t>(set.size()));
  append_le(out, static_cast<std::uint32_t>(set.dim()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    append_le(out, set.ids[i]);
    for (double v : set.features.row(i)) {
      const float f = static_cast<float>(v);
      if (!std::isfinite(f)) throw NumericError("embedding " + std::to_string(set.ids[i]) + ": value not representable");
      append_le(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  try {
    return decode_embeddings(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  write_file(path, encode_embeddings(set));
}

std::string embeddings_to_csv(const EmbeddingSet& set) {
  std::string out = "id";
  for (std::size_t j = 0; j < set.dim(); ++j) out += ",e" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    out += std::to_string(set.ids[i]);
    for (double v : set.features.row(i)) {
      out += ',';
      out += format_float(static_cast<float>(v));
    }
    out += '\n';
  }
  return out;
}

// ---- partition ----------------------------------------------------------------

namespace {

AdminLevel admin_level_or_throw(std::string_view level) {
  auto parsed = parse_admin_level(level);
  if (!parsed) throw DataError("unknown division level '" + std::string(level) + "'");
  return *parsed;
}

}  // namespace

std::size_t PartitionSet::num_classes(std::string_view level) const {
  if (level == "cell") return tree.num_leaves();
  return admin.level_size(admin_level_or_throw(level));
}

const LookupTable& PartitionSet::lookup(std::string_view level) const {
  if (level == "cell") return cell_lookup;
  return admin_lookups[static_cast<std::size_t>(admin_level_or_throw(level))];
}

std::optional<std::size_t> PartitionSet::division_of(std::string_view level, const MetadataRecord& record) const {
  if (level == "cell") return locate_cell(tree, record.location);
  const AdminLevel l = admin_level_or_throw(level);
  const std::string key = AdminHierarchy::path_key(record.admin, l);
  if (key.empty()) return std::nullopt;
  return admin.find(l, key);
}

std::optional<Hierarchy> PartitionSet::hierarchy(std::string_view level) const {
  if (level == "cell") return quadtree_hierarchy(tree);
  return admin.to_hierarchy(admin_level_or_throw(level));
}

PartitionSet build_partition_set(const Metadata& meta, int max_depth, std::size_t max_leaf) {
  if (meta.records.empty()) throw DataError("partition: metadata has no samples");
  const auto coords = meta.locations();
  PartitionSet p;
  p.tree = build_quadtree(coords, max_depth, max_leaf);
  p.cell_lookup = build_lookup(p.tree, coords);
  std::vector<AdminNames> names;
  names.reserve(meta.records.size());
  for (const auto& r : meta.records) names.push_back(r.admin);
  p.admin = AdminHierarchy::build(names);
  for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
    const auto level = static_cast<AdminLevel>(l);
    std::vector<std::size_t> labels;
    std::vector<GeoPoint> pts;
    for (const auto& r : meta.records) {
      const std::string key = AdminHierarchy::path_key(r.admin, level);
      if (key.empty()) continue;
      labels.push_back(*p.admin.find(level, key));
      pts.push_back(r.location);
    }
    p.admin_lookups[l] = build_lookup(labels, pts, p.admin.level_size(level));
  }
  return p;
}

namespace {

json bbox_to_json(const BBox& b) { return json::array({b.lon_min, b.lat_min, b.lon_max, b.lat_max}); }

BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("partition: bbox must have 4 numbers");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json lookup_to_json(const LookupTable& lookup) {
  json cells = json::array();
  for (std::size_t id = 0; id < lookup.num_divisions(); ++id) {
    if (!lookup.contains(id)) continue;
    const CellStats& s = lookup.at(id);
    cells.push_back(json{{"id", s.id},
                         {"centroid", json::array({s.centroid.lat(), s.centroid.lon()})},
                         {"bbox", bbox_to_json(s.bbox)},
                         {"xstar", s.xstar},
                         {"ystar", s.ystar},
                         {"count", s.count}});
  }
  return json{{"num_divisions", lookup.num_divisions()}, {"cells", std::move(cells)}};
}

LookupTable lookup_from_json(const json& j) {
  LookupTable lookup(j.at("num_divisions").get<std::size_t>());
  for (const json& c : j.at("cells")) {
    CellStats s;
    s.id = c.at("id").get<std::size_t>();
    const json& centroid = c.at("centroid");
    s.centroid = GeoPoint(centroid.at(0).get<double>(), centroid.at(1).get<double>());
    s.bbox = bbox_from_json(c.at("bbox"));
    s.xstar = c.at("xstar").get<double>();
    s.ystar = c.at("ystar").get<double>();
    s.count = c.at("count").get<std::size_t>();
    lookup.set(s);
  }
  return lookup;
}

}  // namespace

std::string partition_to_json(const PartitionSet& p) {
  json nodes = json::array();
  for (const QuadNode& n : p.tree.nodes()) {
    nodes.push_back(json{{"bbox", bbox_to_json(n.bbox)},
                         {"depth", n.depth},
                         {"parent", n.parent},
                         {"children", json::array({n.children[0], n.children[1], n.children[2], n.children[3]})},
                         {"leaf", n.leaf_id},
                         {"count", n.count}});
  }
  json admin = json::object();
  for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
    const auto level = static_cast<AdminLevel>(l);
    admin[std::string(kAdminLevelNames[l])] = json{{"keys", p.admin.keys(level)},
                                                   {"parents", p.admin.parents(level)},
                                                   {"lookup", lookup_to_json(p.admin_lookups[l])}};
  }
  json doc{{"format", "geoloc-partition-1"},
           {"quadtree",
            json{{"max_depth", p.tree.max_depth()},
                 {"max_leaf", p.tree.max_leaf()},
                 {"num_leaves", p.tree.num_leaves()},
                 {"nodes", std::move(nodes)}}},
           {"cells", lookup_to_json(p.cell_lookup)},
           {"admin", std::move(admin)}};
  return doc.dump() + "\n";
}

PartitionSet partition_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", "") != "geoloc-partition-1") throw DataError("partition: unknown format");
    PartitionSet p;
    const json& qt = doc.at("quadtree");
    std::vector<QuadNode> nodes;
    for (const json& n : qt.at("nodes")) {
      QuadNode node;
      node.bbox = bbox_from_json(n.at("bbox"));
      node.depth = n.at("depth").get<int>();
      node.parent = n.at("parent").get<std::int32_t>();
      const json& ch = n.at("children");
      if (!ch.is_array() || ch.size() != 4) throw DataError("partition: node needs 4 children entries");
      for (std::size_t q = 0; q < 4; ++q) node.children[q] = ch[q].get<std::int32_t>();
      node.leaf_id = n.at("leaf").get<std::int32_t>();
      node.count = n.at("count").get<std::size_t>();
      nodes.push_back(node);
    }
    p.tree = QuadTreePartition(qt.at("max_depth").get<int>(), qt.at("max_leaf").get<std::size_t>(), std::move(nodes));
    p.cell_lookup = lookup_from_json(doc.at("cells"));
    if (p.cell_lookup.num_divisions() != p.tree.num_leaves()) throw DataError("partition: cell lookup size != leaves");
    std::array<std::vector<std::string>, kNumAdminLevels> keys;
    std::array<std::vector<std::size_t>, kNumAdminLevels> parents;
    const json& admin = doc.at("admin");
    for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
      const json& level = admin.at(std::string(kAdminLevelNames[l]));
      keys[l] = level.at("keys").get<std::vector<std::string>>();
      parents[l] = level.at("parents").get<std::vector<std::size_t>>();
      p.admin_lookups[l] = lookup_from_json(level.at("lookup"));
      if (p.admin_lookups[l].num_divisions() != keys[l].size()) throw DataError("partition: admin lookup size mismatch");
    }
    p.admin = AdminHierarchy::from_parts(std::move(keys), std::move(parents));
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("partition: ") + e.what());
  }
}

TrainingSet assemble_training_set(const TrainConfig& cfg, const PartitionSet& partition, const Metadata& meta,
                                  const EmbeddingSet& embeddings) {
  embeddings.validate();
  const auto index = meta.id_index();
  std::vector<const MetadataRecord*> rows;
  rows.reserve(embeddings.size());
  for (std::uint64_t id : embeddings.ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("embedding id " + std::to_string(id) + " has no metadata row");
    rows.push_back(&meta.records[it->second]);
  }
  const auto require_column = [&](std::string_view level, std::string_view role) {
    if (level == "cell") return;
    const auto l = parse_admin_level(level);
    if (!l) throw DataError(std::string(role) + " level '" + std::string(level) + "' is not a division level");
    if (!meta.has_admin[static_cast<std::size_t>(*l)]) {
      throw DataError("missing label: " + std::string(role) + " level '" + std::string(level) +
                      "' needs the metadata column '" + std::string(level) + "'");
    }
  };

  TrainingSet data;
  data.embeddings = embeddings;
  for (const auto* r : rows) data.locations.push_back(r->location);

  const bool needs_classes = cfg.head == HeadKind::kClassification || cfg.head == HeadKind::kHybrid;
  if (needs_classes) {
    require_column(cfg.level, "division");
    data.num_classes = partition.num_classes(cfg.level);
    for (const auto* r : rows) {
      auto c = partition.division_of(cfg.level, *r);
      if (!c) throw DataError("missing label: sample " + std::to_string(r->id) + " has no '" + cfg.level + "' division");
      data.classes.push_back(*c);
    }
    data.lookup = partition.lookup(cfg.level);
    if (cfg.hierarchical) data.hierarchy = partition.hierarchy(cfg.level);
  }
  if (cfg.contrastive) {
    require_column(cfg.contrastive->level, "contrastive");
    for (const auto* r : rows) {
      auto c = partition.division_of(cfg.contrastive->level, *r);
      data.pair_labels.push_back(c ? static_cast<std::int64_t>(*c) : -1);
    }
  }
  if (cfg.auxiliary_weight) {
    if (!meta.has_aux) throw DataError("missing label: auxiliary columns are absent from the metadata");
    for (const auto* r : rows) {
      if (!r->aux) throw DataError("missing label: sample " + std::to_string(r->id) + " has no auxiliary targets");
      data.aux.push_back(*r->aux);
    }
  }
  return data;
}

// ---- run config ----------------------------------------------------------------

namespace {

class Section {
 public:
  Section(const json& obj, std::string name, std::initializer_list<std::string_view> allowed)
      : obj_(obj), name_(std::move(name)) {
    if (!obj_.is_object()) throw DataError("config: '" + name_ + "' must be an object");
    for (const auto& [key, value] : obj_.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        throw DataError("config: unknown key '" + name_ + "." + key + "'");
      }
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }
  const json& at(const char* key) const { return obj_.at(key); }
  std::string where(const char* key) const { return "config: '" + name_ + "." + key + "'"; }

  void get(const char* key, double& out) const {
    if (!has(key)) return;
    if (!at(key).is_number()) throw DataError(where(key) + " must be a number");
    out = at(key).get<double>();
    if (!std::isfinite(out)) throw DataError(where(key) + " must be finite");
  }
  void get(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    if (!at(key).is_number_unsigned()) throw DataError(where(key) + " must be a non-negative integer");
    out = at(key).get<std::uint64_t>();
  }
  void get(const char* key, int& out) const {
    if (!has(key)) return;
    if (!at(key).is_number_integer()) throw DataError(where(key) + " must be an integer");
    out = at(key).get<int>();
  }
  void get(const char* key, bool& out) const {
    if (!has(key)) return;
    if (!at(key).is_boolean()) throw DataError(where(key) + " must be true or false");
    out = at(key).get<bool>();
  }
  void get(const char* key, std::string& out) const {
    if (!has(key)) return;
    if (!at(key).is_string()) throw DataError(where(key) + " must be a string");
    out = at(key).get<std::string>();
  }

 private:
  const json& obj_;
  std::string name_;
};

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  const Section root(doc, "<root>", {"data", "partition", "train", "eval", "curation"});
  if (root.has("data")) {
    const Section s(root.at("data"), "data",
                    {"train_embeddings", "train_metadata", "test_embeddings", "test_metadata", "partition"});
    s.get("train_embeddings", cfg.data.train_embeddings);
    s.get("train_metadata", cfg.data.train_metadata);
    s.get("test_embeddings", cfg.data.test_embeddings);
    s.get("test_metadata", cfg.data.test_metadata);
    s.get("partition", cfg.data.partition);
  }
  if (root.has("partition")) {
    const Section s(root.at("partition"), "partition", {"max_depth", "max_leaf"});
    s.get("max_depth", cfg.partition.max_depth);
    std::uint64_t leaf = cfg.partition.max_leaf;
    s.get("max_leaf", leaf);
    cfg.partition.max_leaf = leaf;
    if (cfg.partition.max_depth < 0) throw DataError("config: 'partition.max_depth' must be >= 0");
    if (cfg.partition.max_leaf < 1) throw DataError("config: 'partition.max_leaf' must be >= 1");
  }
  if (root.has("train")) {
    const Section s(root.at("train"), "train",
                    {"batch_size", "epochs", "learning_rate", "seed", "head", "level", "hierarchical",
                     "classification_weight", "relative_weight", "contrastive", "auxiliary_weight", "optimizer",
                     "momentum", "adam_beta1", "adam_beta2", "adam_epsilon", "norm_groups"});
    TrainConfig& t = cfg.train;
    std::uint64_t batch = t.batch_size;
    std::uint64_t epochs = t.epochs;
    s.get("batch_size", batch);
    s.get("epochs", epochs);
    t.batch_size = batch;
    t.epochs = epochs;
    s.get("learning_rate", t.learning_rate);
    s.get("seed", t.seed);
    if (s.has("head")) {
      std::string head;
      s.get("head", head);
      auto kind = parse_head_kind(head);
      if (!kind) throw DataError("config: unknown head '" + head + "'");
      t.head = *kind;
    }
    s.get("level", t.level);
    if (t.level != "cell" && !parse_admin_level(t.level)) throw DataError("config: unknown level '" + t.level + "'");
    s.get("hierarchical", t.hierarchical);
    s.get("classification_weight", t.classification_weight);
    s.get("relative_weight", t.relative_weight);
    if (s.has("contrastive") && !s.at("contrastive").is_null()) {
      const Section c(s.at("contrastive"), "train.contrastive", {"level", "weight", "temperature"});
      ContrastiveSettings cs;
      c.get("level", cs.level);
      if (cs.level != "cell" && !parse_admin_level(cs.level)) {
        throw DataError("config: unknown contrastive level '" + cs.level + "'");
      }
      c.get("weight", cs.weight);
      c.get("temperature", cs.temperature);
      t.contrastive = cs;
    }
    if (s.has("auxiliary_weight") && !s.at("auxiliary_weight").is_null()) {
      double w = 1.0;
      s.get("auxiliary_weight", w);
      t.auxiliary_weight = w;
    }
    if (s.has("optimizer")) {
      std::string name;
      s.get("optimizer", name);
      auto kind = parse_optimizer(name);
      if (!kind) throw DataError("config: unknown optimizer '" + name + "'");
      t.optimizer = *kind;
    }
    s.get("momentum", t.momentum);
    s.get("adam_beta1", t.adam_beta1);
    s.get("adam_beta2", t.adam_beta2);
    s.get("adam_epsilon", t.adam_epsilon);
    s.get("norm_groups", t.norm_groups);
    t.validate();
  }
  if (root.has("eval")) {
    const Section s(root.at("eval"), "eval", {"heatmap_cell_deg"});
    s.get("heatmap_cell_deg", cfg.eval.heatmap_cell_deg);
    if (!(cfg.eval.heatmap_cell_deg > 0.0)) throw DataError("config: 'eval.heatmap_cell_deg' must be positive");
  }
  if (root.has("curation")) {
    const Section s(root.at("curation"), "curation",
                    {"radius_km", "grid_m", "alpha", "density_cell_deg", "test_fraction", "sample_size"});
    CurationParams& c = cfg.curation;
    s.get("radius_km", c.radius_km);
    s.get("grid_m", c.grid_m);
    s.get("alpha", c.alpha);
    s.get("density_cell_deg", c.density_cell_deg);
    s.get("test_fraction", c.test_fraction);
    if (s.has("sample_size") && !s.at("sample_size").is_null()) {
      std::uint64_t n = 0;
      s.get("sample_size", n);
      c.sample_size = n;
    }
  }
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json train{{"batch_size", t.batch_size},
             {"epochs", t.epochs},
             {"learning_rate", t.learning_rate},
             {"seed", t.seed},
             {"head", std::string(to_string(t.head))},
             {"level", t.level},
             {"hierarchical", t.hierarchical},
             {"classification_weight", t.classification_weight},
             {"relative_weight", t.relative_weight},
             {"contrastive", nullptr},
             {"auxiliary_weight", nullptr},
             {"optimizer", std::string(to_string(t.optimizer))},
             {"momentum", t.momentum},
             {"adam_beta1", t.adam_beta1},
             {"adam_beta2", t.adam_beta2},
             {"adam_epsilon", t.adam_epsilon},
             {"norm_groups", t.norm_groups}};
  if (t.contrastive) {
    train["contrastive"] = json{{"level", t.contrastive->level},
                                {"weight", t.contrastive->weight},
                                {"temperature", t.contrastive->temperature}};
  }
  if (t.auxiliary_weight) train["auxiliary_weight"] = *t.auxiliary_weight;
  json curation{{"radius_km", cfg.curation.radius_km},
                {"grid_m", cfg.curation.grid_m},
                {"alpha", cfg.curation.alpha},
                {"density_cell_deg", cfg.curation.density_cell_deg},
                {"test_fraction", cfg.curation.test_fraction},
                {"sample_size", nullptr}};
  if (cfg.curation.sample_size) curation["sample_size"] = *cfg.curation.sample_size;
  json doc{{"data",
            json{{"train_embeddings", cfg.data.train_embeddings},
                 {"train_metadata", cfg.data.train_metadata},
                 {"test_embeddings", cfg.data.test_embeddings},
                 {"test_metadata", cfg.data.test_metadata},
                 {"partition", cfg.data.partition}}},
           {"partition", json{{"max_depth", cfg.partition.max_depth}, {"max_leaf", cfg.partition.max_leaf}}},
           {"train", std::move(train)},
           {"eval", json{{"heatmap_cell_deg", cfg.eval.heatmap_cell_deg}}},
           {"curation", std::move(curation)}};
  return doc.dump(2) + "\n";
}

}  // namespace geoloc
