#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "geoloc/io.hpp"
#include "geoloc/matrix.hpp"
#include "geoloc/model.hpp"
#include "geoloc/random.hpp"
#include "geoloc/trainer.hpp"

namespace fixture {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("geoloc-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline geoloc::Matrix random_matrix(std::size_t rows, std::size_t cols, geoloc::Rng& rng, double scale = 1.0) {
  geoloc::Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline geoloc::Matrix unit_rows(geoloc::Matrix m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0;
    for (double v : m.row(r)) s += v * v;
    s = std::sqrt(s);
    for (double& v : m.row(r)) v /= s;
  }
  return m;
}

/// Fourth-order central differences of f at x, one coordinate at a time.
inline std::vector<double> numeric_gradient(std::vector<double> x, const std::function<double(const std::vector<double>&)>& f,
                                            double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    double v[4];
    const double steps[4] = {-2 * h, -h, h, 2 * h};
    for (int s = 0; s < 4; ++s) {
      x[i] = keep + steps[s];
      v[s] = f(x);
    }
    x[i] = keep;
    g[i] = (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h);
  }
  return g;
}

/// |a - n| / max(|a|, |n|, floor): relative error with an absolute floor.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  return worst;
}

struct ParamCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +-h step crosses a ReLU kink
};

/// Sign pattern of every ReLU output of every branch, used to detect
/// perturbations that cross a kink (where finite differences are invalid).
inline std::vector<bool> relu_pattern(const geoloc::Model& model, const geoloc::Matrix& x) {
  const auto fwd = model.forward(x);
  std::vector<bool> pattern;
  const auto add = [&](const geoloc::Mlp& mlp, const geoloc::Mlp::Cache& cache) {
    for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
      if (!std::holds_alternative<geoloc::ReluLayer>(mlp.layers()[l])) continue;
      for (double v : cache.layers[l].output.values()) pattern.push_back(v > 0.0);
    }
  };
  add(model.primary(), fwd.primary);
  if (fwd.relative) add(*model.relative(), *fwd.relative);
  if (fwd.auxiliary) add(*model.auxiliary(), *fwd.auxiliary);
  return pattern;
}

/// Compares the model's accumulated parameter gradients (already computed by
/// the caller) with fourth-order central differences of `loss`.
inline ParamCheck check_parameters(geoloc::Model& model, const geoloc::Matrix& x, const std::function<double()>& loss,
                                   double h) {
  std::vector<std::span<double>> values;
  std::vector<std::vector<double>> grads;
  model.for_each_parameter([&](std::span<double> v, std::span<double> g) {
    values.push_back(v);
    grads.emplace_back(g.begin(), g.end());
  });
  const std::vector<bool> base = relu_pattern(model, x);
  ParamCheck out;
  for (std::size_t t = 0; t < values.size(); ++t) {
    for (std::size_t i = 0; i < values[t].size(); ++i) {
      const double keep = values[t][i];
      const double steps[4] = {-2 * h, -h, h, 2 * h};
      double v[4];
      bool kink = false;
      for (int k = 0; k < 4; ++k) {
        values[t][i] = keep + steps[k];
        v[k] = loss();
        kink = kink || relu_pattern(model, x) != base;
      }
      values[t][i] = keep;
      if (kink) {
        ++out.skipped;
        continue;
      }
      ++out.checked;
      out.max_rel = std::max(out.max_rel, relative_error(grads[t][i], (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h)));
    }
  }
  return out;
}

/// Small labelled set for gradient checks: every sample gets a location,
/// a class among k with a matching lookup, a two-level hierarchy, one shared
/// pairing label and auxiliary targets.
inline geoloc::TrainingSet tiny_training_set(std::size_t n, std::size_t dim, std::size_t k, std::uint64_t seed) {
  geoloc::Rng rng(seed);
  geoloc::TrainingSet data;
  data.embeddings.features = random_matrix(n, dim, rng);
  for (std::size_t i = 0; i < n; ++i) {
    data.embeddings.ids.push_back(i + 1);
    const std::size_t c = i % k;
    data.classes.push_back(c);
    data.locations.emplace_back(rng.uniform(0, 10), 10.0 * static_cast<double>(c) + rng.uniform(0, 10));
    data.pair_labels.push_back(7);
    geoloc::AuxTargets a;
    a.land_cover = rng.index(11);
    a.climate = rng.index(31);
    a.soil = rng.index(15);
    a.drives_left = rng.uniform() < 0.5;
    a.dist_to_sea_km = rng.uniform(0, 3);
    data.aux.push_back(a);
  }
  data.num_classes = k;
  data.lookup = geoloc::build_lookup(data.classes, data.locations, k);
  geoloc::Hierarchy h;
  h.fine_name = "city";
  h.fine_size = k;
  std::vector<std::size_t> parent(k);
  for (std::size_t c = 0; c < k; ++c) parent[c] = c < (k + 1) / 2 ? 0 : 1;
  h.levels.push_back({"region", 2, parent});
  data.hierarchy = h;
  return data;
}

/// Finite-difference check of every parameter gradient of batch_loss.
inline ParamCheck check_batch_gradients(const geoloc::TrainConfig& cfg, const geoloc::TrainingSet& data,
                                        std::span<const std::size_t> batch, std::uint64_t seed, double h = 1e-4) {
  geoloc::Model model = geoloc::Model::create(geoloc::make_descriptor(cfg, data), seed);
  model.zero_grad();
  geoloc::batch_loss(model, cfg, data, batch, true);
  const geoloc::Matrix x = data.embeddings.features.gather_rows(batch);
  return check_parameters(model, x, [&] { return geoloc::batch_loss(model, cfg, data, batch, false).total; }, h);
}

// ---- synthetic world --------------------------------------------------------------

struct WorldSpec {
  std::size_t countries = 4;
  std::size_t cities_per_country = 5;
  std::size_t train = 5000;
  std::size_t test = 1000;
  std::size_t dim = 16;
  double city_sigma_deg = 0.6;
  double country_spread_deg = 6.0;
  double noise = 0.05;
};

struct World {
  geoloc::Metadata train_meta;
  geoloc::Metadata test_meta;
  geoloc::EmbeddingSet train_emb;
  geoloc::EmbeddingSet test_emb;
};

/// Gaussian-mixture world: cities grouped into countries, every sample drawn
/// around its city. Embeddings carry a country code, a city code and the
/// position (global and city-local), plus isotropic noise.
inline World make_world(const WorldSpec& spec, std::uint64_t seed) {
  geoloc::Rng rng(seed);
  const double country_centres[][2] = {{42, -98}, {48, 12}, {-26, 136}, {-14, -56}, {35, 105}, {0, 20}};
  struct City {
    double lat, lon;
    std::size_t country;
    std::vector<double> code;
  };
  std::vector<std::vector<double>> country_codes(spec.countries);
  for (auto& c : country_codes) {
    c.resize(4);
    for (double& v : c) v = rng.normal();
  }
  std::vector<City> cities;
  for (std::size_t c = 0; c < spec.countries; ++c) {
    for (std::size_t k = 0; k < spec.cities_per_country; ++k) {
      City city{country_centres[c % 6][0] + spec.country_spread_deg * (rng.uniform() - 0.5) * 2,
                country_centres[c % 6][1] + spec.country_spread_deg * (rng.uniform() - 0.5) * 2, c, {}};
      city.code.resize(8);
      for (double& v : city.code) v = rng.normal();
      cities.push_back(city);
    }
  }
  const auto sample = [&](std::size_t n, std::uint64_t first_id, geoloc::Metadata& meta, geoloc::EmbeddingSet& emb) {
    meta.has_admin = {true, true, true, true};
    meta.has_sequence = true;
    emb.features = geoloc::Matrix(n, spec.dim);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ci = rng.index(cities.size());
      const City& city = cities[ci];
      const double lat = std::clamp(city.lat + spec.city_sigma_deg * rng.normal(), -89.0, 89.0);
      const double lon = city.lon + spec.city_sigma_deg * rng.normal();
      geoloc::MetadataRecord r;
      r.id = first_id + i;
      r.location = geoloc::GeoPoint(lat, lon);
      const std::string country = "C" + std::to_string(city.country);
      r.admin = {country, country + "r", country + "a", "city" + std::to_string(ci)};
      r.sequence_id = "seq" + std::to_string(first_id + i);
      meta.records.push_back(r);
      emb.ids.push_back(r.id);
      auto row = emb.features.row(i);
      std::size_t j = 0;
      for (double v : country_codes[city.country]) row[j++] = v;
      for (double v : city.code) row[j++] = 0.7 * v;
      row[j++] = lat / 30.0;
      row[j++] = lon / 60.0;
      row[j++] = (lat - city.lat) / spec.city_sigma_deg;
      row[j++] = (lon - city.lon) / spec.city_sigma_deg;
      for (; j < spec.dim; ++j) row[j] = 0.0;
      for (double& v : row) v += spec.noise * rng.normal();
    }
  };
  World w;
  sample(spec.train, 1, w.train_meta, w.train_emb);
  sample(spec.test, 1'000'000, w.test_meta, w.test_emb);
  return w;
}

}  // namespace fixture
