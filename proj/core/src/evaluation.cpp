#include "geoloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "geoloc/error.hpp"
#include "geoloc/random.hpp"
#include "json.hpp"

namespace geoloc {

std::size_t DivisionLevel::nearest(const GeoPoint& p, const EarthModel& earth) const {
  if (centroids.empty()) throw DataError("division level '" + name + "' has no divisions");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    const double d = haversine(p, centroids[i], earth);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<DivisionLevel> division_levels(const AdminHierarchy& hierarchy,
                                           std::span<const LookupTable, kNumAdminLevels> lookups) {
  std::vector<DivisionLevel> out;
  for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
    const auto level = static_cast<AdminLevel>(l);
    DivisionLevel dl;
    dl.name = std::string(to_string(level));
    const auto& keys = hierarchy.keys(level);
    for (std::size_t id = 0; id < keys.size(); ++id) {
      if (!lookups[l].contains(id)) continue;
      dl.keys.push_back(keys[id]);
      dl.centroids.push_back(lookups[l].at(id).centroid);
    }
    out.push_back(std::move(dl));
  }
  return out;
}

std::vector<double> error_distances(std::span<const GeoPoint> preds, std::span<const GeoPoint> truth,
                                    const EarthModel& earth) {
  if (preds.size() != truth.size()) throw ShapeError("prediction and ground-truth counts differ");
  std::vector<double> d(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) d[i] = haversine(preds[i], truth[i], earth);
  return d;
}

EvalReport evaluate(std::span<const GeoPoint> preds, std::span<const GeoPoint> truth,
                    std::span<const DivisionLevel> levels, std::span<const std::vector<std::string>> truth_keys,
                    const EarthModel& earth) {
  if (preds.empty()) throw DomainError("evaluate: empty batch");
  if (levels.size() != truth_keys.size()) throw ShapeError("evaluate: one key list per level required");
  const std::vector<double> d = error_distances(preds, truth, earth);

  EvalReport report;
  report.n_samples = preds.size();
  report.geoscore = mean_geoscore(d);
  report.mean_distance_km = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  report.median_distance_km = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (truth_keys[l].size() != preds.size()) throw ShapeError("evaluate: key count differs for " + levels[l].name);
    std::size_t hits = 0;
    std::size_t labelled = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (truth_keys[l][i].empty()) continue;
      ++labelled;
      if (levels[l].keys[levels[l].nearest(preds[i], earth)] == truth_keys[l][i]) ++hits;
    }
    report.accuracy[levels[l].name] = labelled ? static_cast<double>(hits) / static_cast<double>(labelled) : 0.0;
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["geoscore"] = report.geoscore;
  j["mean_distance_km"] = report.mean_distance_km;
  j["median_distance_km"] = report.median_distance_km;
  nlohmann::ordered_json acc = nlohmann::ordered_json::object();
  for (std::string_view name : kAdminLevelNames) {
    auto it = report.accuracy.find(std::string(name));
    if (it != report.accuracy.end()) acc[it->first] = it->second;
  }
  for (const auto& [name, value] : report.accuracy) {
    if (!acc.contains(name)) acc[name] = value;
  }
  j["accuracy"] = acc;
  j["n_samples"] = report.n_samples;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.geoscore = j.at("geoscore").get<double>();
    r.mean_distance_km = j.at("mean_distance_km").get<double>();
    r.median_distance_km = j.value("median_distance_km", 0.0);
    for (const auto& [k, v] : j.at("accuracy").items()) r.accuracy[k] = v.get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

std::vector<GeoPoint> random_baseline(std::span<const GeoPoint> train, std::size_t count, std::uint64_t seed) {
  if (train.empty()) throw DomainError("random_baseline: empty training set");
  Rng rng(seed);
  std::vector<GeoPoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(train[rng.index(train.size())]);
  return out;
}

std::vector<GridCell> error_grid(std::span<const GeoPoint> preds, std::span<const GeoPoint> truth, double cell_deg,
                                 const EarthModel& earth) {
  if (!(cell_deg > 0.0)) throw DomainError("error_grid: cell size must be positive");
  const std::vector<double> d = error_distances(preds, truth, earth);
  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::map<std::pair<std::int64_t, std::int64_t>, Acc> bins;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto lat_bin = static_cast<std::int64_t>(std::floor(truth[i].lat() / cell_deg));
    const auto lon_bin = static_cast<std::int64_t>(std::floor(truth[i].lon() / cell_deg));
    Acc& a = bins[{lat_bin, lon_bin}];
    a.sum += d[i];
    ++a.count;
  }
  std::vector<GridCell> out;
  out.reserve(bins.size());
  for (const auto& [key, a] : bins) out.push_back({key.first, key.second, a.sum / static_cast<double>(a.count), a.count});
  return out;
}

std::vector<CurvePoint> cumulative_error_curve(std::span<const double> distances_km) {
  if (distances_km.empty()) throw DomainError("cumulative_error_curve: no distances");
  std::vector<double> sorted(distances_km.begin(), distances_km.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    out.push_back({sorted[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

std::string grid_to_csv(std::span<const GridCell> grid) {
  std::ostringstream out;
  out.precision(17);
  out << "lat_bin,lon_bin,mean_km,count\n";
  for (const GridCell& c : grid) out << c.lat_bin << ',' << c.lon_bin << ',' << c.mean_km << ',' << c.count << '\n';
  return out.str();
}

std::string curve_to_csv(std::span<const CurvePoint> curve) {
  std::ostringstream out;
  out.precision(17);
  out << "distance_km,fraction\n";
  for (const CurvePoint& p : curve) out << p.distance_km << ',' << p.fraction << '\n';
  return out.str();
}

std::vector<double> nearest_train_distance(std::span<const GeoPoint> train, std::span<const GeoPoint> candidates,
                                           double horizon_km, const EarthModel& earth) {
  // Great-circle distance is at least R * |dlat|, so only training points in
  // a latitude band around the candidate can be within the horizon.
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return train[a].lat() < train[b].lat(); });
  std::vector<double> lats(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) lats[i] = train[order[i]].lat();

  const double band_deg = horizon_km / earth.radius_km * kRadToDeg + 1e-6;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> out(candidates.size(), inf);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double lat = candidates[c].lat();
    auto lo = std::lower_bound(lats.begin(), lats.end(), lat - band_deg);
    auto hi = std::upper_bound(lats.begin(), lats.end(), lat + band_deg);
    double best = inf;
    for (auto it = lo; it != hi; ++it) {
      const auto idx = order[static_cast<std::size_t>(it - lats.begin())];
      best = std::min(best, haversine(candidates[c], train[idx], earth));
    }
    out[c] = best <= horizon_km ? best : inf;
  }
  return out;
}

std::vector<std::vector<std::size_t>> separation_splits(std::span<const GeoPoint> train,
                                                        std::span<const std::string> train_sequences,
                                                        std::span<const GeoPoint> candidates,
                                                        std::span<const std::string> candidate_sequences,
                                                        std::span<const double> radii_km, const EarthModel& earth) {
  if (train_sequences.size() != train.size() || candidate_sequences.size() != candidates.size()) {
    throw ShapeError("separation_splits: sequence id count mismatch");
  }
  double horizon = 0.0;
  for (double r : radii_km) {
    if (!(r >= 0.0)) throw DomainError("separation_splits: radii must be non-negative");
    horizon = std::max(horizon, r);
  }
  const std::vector<double> nearest = nearest_train_distance(train, candidates, horizon, earth);
  std::unordered_set<std::string> train_seq;
  for (const std::string& s : train_sequences) {
    if (!s.empty()) train_seq.insert(s);
  }
  std::vector<std::vector<std::size_t>> out(radii_km.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (!candidate_sequences[c].empty() && train_seq.contains(candidate_sequences[c])) continue;
    for (std::size_t r = 0; r < radii_km.size(); ++r) {
      if (nearest[c] > radii_km[r]) out[r].push_back(c);
    }
  }
  return out;
}

}  // namespace geoloc
