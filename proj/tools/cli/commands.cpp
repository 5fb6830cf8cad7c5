#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "geoloc/curation.hpp"
#include "geoloc/error.hpp"
#include "geoloc/evaluation.hpp"
#include "geoloc/random.hpp"
#include "geoloc/retrieval.hpp"
#include "json.hpp"

namespace geoloc::cli {

namespace {

std::string fmt(double v) { return format_double(v); }

std::vector<GeoPoint> locations_for(const Metadata& meta, const std::vector<std::uint64_t>& ids,
                                    std::string_view what) {
  const auto index = meta.id_index();
  std::vector<GeoPoint> out;
  out.reserve(ids.size());
  for (std::uint64_t id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError(std::string(what) + " id " + std::to_string(id) + " has no metadata row");
    out.push_back(meta.records[it->second].location);
  }
  return out;
}

std::string predictions_csv(const std::vector<std::uint64_t>& ids, const std::vector<GeoPoint>& preds) {
  std::string out = "id,latitude,longitude\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += std::to_string(ids[i]) + "," + fmt(preds[i].lat()) + "," + fmt(preds[i].lon()) + "\n";
  }
  return out;
}

}  // namespace

// ---- partition --------------------------------------------------------------

PartitionSet cmd_partition(const PartitionOptions& opts, std::ostream& log) {
  const Metadata meta = read_metadata_csv(opts.meta);
  if (meta.records.empty()) throw DataError(opts.meta.string() + ": no samples");
  PartitionSet p = build_partition_set(meta, opts.max_depth, opts.max_leaf);
  write_file(opts.out, partition_to_json(p));

  std::map<int, std::size_t> depths;
  for (const QuadNode& n : p.tree.nodes()) {
    if (n.is_leaf()) ++depths[n.depth];
  }
  log << "cells K=" << p.tree.num_leaves() << "\n";
  for (const auto& [depth, count] : depths) log << "  depth " << depth << ": " << count << "\n";
  for (std::size_t l = 0; l < kNumAdminLevels; ++l) {
    log << kAdminLevelNames[l] << " divisions=" << p.admin.level_size(static_cast<AdminLevel>(l)) << "\n";
  }
  return p;
}

// ---- train --------------------------------------------------------------------

TrainOutcome cmd_train(const TrainOptions& opts, std::ostream& log) {
  const RunConfig run = parse_run_config(read_file(opts.config));
  TrainOutcome outcome;
  outcome.config = run.train;
  if (opts.seed) outcome.config.seed = *opts.seed;

  const std::filesystem::path emb_path = !opts.embeddings.empty() ? opts.embeddings : std::filesystem::path(run.data.train_embeddings);
  const std::filesystem::path meta_path = !opts.meta.empty() ? opts.meta : std::filesystem::path(run.data.train_metadata);
  if (emb_path.empty()) throw DataError("train: no embedding file given");
  if (meta_path.empty()) throw DataError("train: no metadata file given");
  const Metadata meta = read_metadata_csv(meta_path);
  const EmbeddingSet emb = read_embeddings(emb_path);

  const std::filesystem::path part_path = !opts.partition.empty() ? opts.partition : std::filesystem::path(run.data.partition);
  const PartitionSet partition = part_path.empty()
                                     ? build_partition_set(meta, run.partition.max_depth, run.partition.max_leaf)
                                     : partition_from_json(read_file(part_path));

  outcome.data = assemble_training_set(outcome.config, partition, meta, emb);
  check_supervision(outcome.config, outcome.data);
  outcome.result = train(outcome.config, outcome.data);
  if (!outcome.result.dropped.empty()) {
    log << "warning: " << outcome.result.dropped.size()
        << " samples have no contrastive partner and were left out of the contrastive batches\n";
  }
  outcome.result.model.save(opts.out);
  std::filesystem::path trace = opts.trace;
  if (trace.empty()) {
    trace = opts.out;
    trace += ".trace.csv";
  }
  write_file(trace, trace_to_csv(outcome.result.trace));
  outcome.final_loss = dataset_loss(outcome.result.model, outcome.config, outcome.data).total;
  log << "trained " << to_string(outcome.config.head) << " head on " << outcome.data.embeddings.size()
      << " samples, " << outcome.config.epochs << " epochs\n";
  log << "final_loss " << fmt(outcome.final_loss) << "\n";
  return outcome;
}

// ---- eval ---------------------------------------------------------------------

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  // Reuse the metadata reader's strictness for id/latitude/longitude by
  // projecting those columns out first.
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ":1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string h;
    while (std::getline(hs, h, ',')) header.push_back(h);
  }
  const auto col = [&](const char* name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path.string() + ":1: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = col("id");
  const std::size_t c_lat = col("latitude");
  const std::size_t c_lon = col("longitude");
  std::string projected = "id,latitude,longitude\n";
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      projected += "\n";
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string v;
    while (std::getline(ls, v, ',')) f.push_back(v);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields");
    }
    projected += f[c_id] + "," + f[c_lat] + "," + f[c_lon] + "\n";
  }
  const Metadata m = parse_metadata_csv(projected, path.string());
  std::vector<Prediction> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) out.push_back({r.id, r.location});
  return out;
}

EvalReport cmd_eval(const EvalOptions& opts, std::ostream& log) {
  const Metadata meta = read_metadata_csv(opts.meta);
  const PartitionSet partition = partition_from_json(read_file(opts.partition));

  std::vector<std::uint64_t> ids;
  std::vector<GeoPoint> preds;
  if (!opts.predictions.empty()) {
    if (!opts.model.empty()) throw DataError("eval: give either --model or --predictions, not both");
    for (const Prediction& p : read_predictions(opts.predictions)) {
      ids.push_back(p.id);
      preds.push_back(p.location);
    }
  } else {
    if (opts.model.empty() || opts.embeddings.empty()) throw DataError("eval: --model and --emb are required");
    const Model model = Model::load(opts.model);
    const HeadDescriptor& d = model.descriptor();
    const EmbeddingSet emb = read_embeddings(opts.embeddings);
    if (emb.dim() != d.input_dim) {
      throw DataError("eval: embeddings have dim " + std::to_string(emb.dim()) + " but the model expects " +
                      std::to_string(d.input_dim));
    }
    const LookupTable* lookup = nullptr;
    if (d.kind == HeadKind::kClassification || d.kind == HeadKind::kHybrid) {
      const std::size_t k = partition.num_classes(d.level);
      if (k != d.num_classes) {
        throw DataError("eval: model has K=" + std::to_string(d.num_classes) + " '" + d.level +
                        "' classes but the partition has " + std::to_string(k));
      }
      lookup = &partition.lookup(d.level);
    }
    ids = emb.ids;
    preds = predict_locations(model, emb.features, lookup);
  }
  if (ids.empty()) throw DataError("eval: no predictions");

  const std::vector<GeoPoint> truth = locations_for(meta, ids, "prediction");
  const auto index = meta.id_index();
  std::vector<DivisionLevel> levels;
  std::vector<std::vector<std::string>> keys;
  for (DivisionLevel& level : division_levels(partition.admin, partition.admin_lookups)) {
    const auto l = *parse_admin_level(level.name);
    if (!meta.has_admin[static_cast<std::size_t>(l)] || level.centroids.empty()) continue;
    std::vector<std::string> k;
    k.reserve(ids.size());
    for (std::uint64_t id : ids) k.push_back(AdminHierarchy::path_key(meta.records[index.at(id)].admin, l));
    levels.push_back(std::move(level));
    keys.push_back(std::move(k));
  }
  const EvalReport report = evaluate(preds, truth, levels, keys);
  write_file(opts.out, report_to_json(report));

  const std::vector<double> dist = error_distances(preds, truth);
  if (!opts.curves.empty()) write_file(opts.curves, curve_to_csv(cumulative_error_curve(dist)));
  if (!opts.heatmap.empty()) {
    write_file(opts.heatmap, grid_to_csv(error_grid(preds, truth, opts.heatmap_cell_deg)));
  }
  if (!opts.per_sample.empty()) {
    std::string csv = "id,true_latitude,true_longitude,latitude,longitude,distance_km,geoscore\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      csv += std::to_string(ids[i]) + "," + fmt(truth[i].lat()) + "," + fmt(truth[i].lon()) + "," +
             fmt(preds[i].lat()) + "," + fmt(preds[i].lon()) + "," + fmt(dist[i]) + "," + fmt(geoscore(dist[i])) +
             "\n";
    }
    write_file(opts.per_sample, csv);
  }
  log << "samples " << report.n_samples << "  geoscore " << std::fixed << std::setprecision(1) << report.geoscore
      << "  mean " << report.mean_distance_km << " km  median " << report.median_distance_km << " km\n";
  log.unsetf(std::ios::floatfield);
  return report;
}

// ---- curate -------------------------------------------------------------------

CurateSummary cmd_curate(const CurateOptions& opts, std::ostream& log) {
  if (opts.radius_km < 0.0) throw DomainError("curate: radius must be non-negative");
  if (!(opts.test_fraction >= 0.0 && opts.test_fraction <= 1.0)) throw DomainError("curate: test fraction in [0, 1]");
  const Metadata meta = read_metadata_csv(opts.meta);
  CurateSummary s;
  s.input = meta.records.size();
  Rng seeds(opts.seed);
  const std::uint64_t dedup_seed = seeds.next_u64();
  const std::uint64_t sample_seed = seeds.next_u64();
  const std::uint64_t split_seed = seeds.next_u64();

  std::vector<SitePoint> points;
  points.reserve(meta.records.size());
  for (const auto& r : meta.records) points.push_back({r.id, r.location});
  const auto index = meta.id_index();

  const auto to_rows = [&](const std::vector<std::uint64_t>& ids) {
    std::vector<std::size_t> rows;
    rows.reserve(ids.size());
    for (std::uint64_t id : ids) rows.push_back(index.at(id));
    std::sort(rows.begin(), rows.end());
    return rows;
  };

  std::vector<std::size_t> rows = to_rows(grid_dedup(points, opts.grid_m, dedup_seed));
  s.after_dedup = rows.size();

  if (opts.sample_size) {
    std::vector<SitePoint> kept;
    kept.reserve(rows.size());
    for (std::size_t r : rows) kept.push_back(points[r]);
    rows = to_rows(density_weighted_sample(kept, *opts.sample_size, opts.density_cell_deg, opts.alpha, sample_seed));
  }
  s.after_sampling = rows.size();

  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> cand_rows;
  const bool planted = std::any_of(rows.begin(), rows.end(), [&](std::size_t r) { return !meta.records[r].split.empty(); });
  if (planted) {
    for (std::size_t r : rows) (meta.records[r].split == "test" ? cand_rows : train_rows).push_back(r);
  } else {
    std::vector<std::size_t> shuffled = rows;
    Rng rng(split_seed);
    rng.shuffle(std::span<std::size_t>(shuffled));
    const auto n_test = static_cast<std::size_t>(std::llround(opts.test_fraction * static_cast<double>(rows.size())));
    cand_rows.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test), shuffled.end());
    std::sort(cand_rows.begin(), cand_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
  }
  s.test_candidates = cand_rows.size();

  const auto gather = [&](const std::vector<std::size_t>& rs) {
    std::pair<std::vector<GeoPoint>, std::vector<std::string>> out;
    for (std::size_t r : rs) {
      out.first.push_back(meta.records[r].location);
      out.second.push_back(meta.records[r].sequence_id);
    }
    return out;
  };
  const auto [train_pts, train_seq] = gather(train_rows);
  const auto [cand_pts, cand_seq] = gather(cand_rows);
  const double radius[] = {opts.radius_km};
  const auto kept = separation_splits(train_pts, train_seq, cand_pts, cand_seq, radius).front();
  std::vector<std::size_t> test_rows;
  for (std::size_t k : kept) test_rows.push_back(cand_rows[k]);

  std::filesystem::create_directories(opts.out);
  if (!opts.images.empty()) {
    std::string report = "id,blur_db,brightness,purple_frac,exposure_frac,verdict\n";
    const auto filter = [&](std::vector<std::size_t>& rs) {
      std::vector<std::size_t> pass;
      for (std::size_t r : rs) {
        const std::uint64_t id = meta.records[r].id;
        const auto image_path = opts.images / (std::to_string(id) + ".ppm");
        try {
          const FilterVerdict v = quality_filter(read_ppm(image_path), opts.filters);
          report += std::to_string(id) + "," + fmt(v.blur_db) + "," + fmt(v.brightness) + "," + fmt(v.purple_fraction) +
                    "," + fmt(v.exposure_fraction()) + "," + v.verdict() + "\n";
          if (v.keep) {
            pass.push_back(r);
          } else {
            ++s.image_rejected;
          }
        } catch (const Error& e) {
          report += std::to_string(id) + ",,,,,unreadable\n";
          log << "warning: image for id " << id << " unreadable: " << e.what() << "\n";
          ++s.image_unreadable;
        }
      }
      rs = std::move(pass);
    };
    filter(train_rows);
    filter(test_rows);
    write_file(opts.out / "filter_report.csv", report);
  }
  s.train = train_rows.size();
  s.test = test_rows.size();

  write_file(opts.out / "train.csv", metadata_to_csv(meta, train_rows));
  write_file(opts.out / "test.csv", metadata_to_csv(meta, test_rows));
  const nlohmann::ordered_json summary{{"input", s.input},
                                       {"after_dedup", s.after_dedup},
                                       {"after_sampling", s.after_sampling},
                                       {"test_candidates", s.test_candidates},
                                       {"train", s.train},
                                       {"test", s.test},
                                       {"image_rejected", s.image_rejected},
                                       {"image_unreadable", s.image_unreadable},
                                       {"radius_km", opts.radius_km},
                                       {"grid_m", opts.grid_m},
                                       {"seed", opts.seed}};
  write_file(opts.out / "summary.json", summary.dump(2) + "\n");
  log << "input " << s.input << ", after dedup " << s.after_dedup << ", sampled " << s.after_sampling << ", train "
      << s.train << ", test " << s.test << " of " << s.test_candidates << " candidates\n";
  return s;
}

// ---- retrieve / baseline / report / export ------------------------------------

void cmd_retrieve(const RetrieveOptions& opts, std::ostream& log) {
  const EmbeddingSet train_emb = read_embeddings(opts.train_embeddings);
  const Metadata train_meta = read_metadata_csv(opts.train_meta);
  const EmbeddingSet test_emb = read_embeddings(opts.test_embeddings);
  const RetrievalIndex index = build_index(train_emb, locations_for(train_meta, train_emb.ids, "train embedding"));
  const auto results = knn_predict(index, test_emb, opts.k);
  std::string csv = "id,latitude,longitude,matched_id,similarity";
  if (opts.k > 1) csv += ",neighbors";
  csv += "\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const RetrievalResult& r = results[i];
    csv += std::to_string(test_emb.ids[i]) + "," + fmt(r.location.lat()) + "," + fmt(r.location.lon()) + "," +
           std::to_string(r.matched_id) + "," + fmt(r.neighbors.front().similarity);
    if (opts.k > 1) {
      csv += ",";
      for (std::size_t j = 0; j < r.neighbors.size(); ++j) {
        if (j) csv += ';';
        csv += std::to_string(r.neighbors[j].id);
      }
    }
    csv += "\n";
  }
  write_file(opts.out, csv);
  log << "retrieved " << results.size() << " queries against " << index.size() << " train rows\n";
}

void cmd_baseline(const BaselineOptions& opts, std::ostream& log) {
  const Metadata train_meta = read_metadata_csv(opts.train_meta);
  const Metadata test_meta = read_metadata_csv(opts.test_meta);
  if (train_meta.records.empty()) throw DataError("baseline: no training locations");
  std::vector<std::uint64_t> ids;
  for (const auto& r : test_meta.records) ids.push_back(r.id);
  const auto preds = random_baseline(train_meta.locations(), ids.size(), opts.seed);
  write_file(opts.out, predictions_csv(ids, preds));
  log << "wrote " << ids.size() << " random-baseline predictions\n";
}

void cmd_report(const std::vector<std::filesystem::path>& reports, std::ostream& out) {
  if (reports.empty()) throw DataError("report: no report files");
  std::vector<EvalReport> parsed;
  std::vector<std::string> levels;
  for (const auto& path : reports) {
    parsed.push_back(report_from_json(read_file(path)));
    for (const auto& [name, acc] : parsed.back().accuracy) {
      if (std::find(levels.begin(), levels.end(), name) == levels.end()) levels.push_back(name);
    }
  }
  std::sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
    const auto rank = [](const std::string& s) {
      auto l = parse_admin_level(s);
      return l ? static_cast<int>(*l) : 99;
    };
    return std::pair(rank(a), a) < std::pair(rank(b), b);
  });
  std::size_t name_width = 6;
  for (const auto& p : reports) name_width = std::max(name_width, p.filename().string().size());
  out << std::left << std::setw(static_cast<int>(name_width)) << "report" << std::right << std::setw(10) << "geoscore"
      << std::setw(12) << "mean_km" << std::setw(12) << "median_km";
  for (const auto& l : levels) out << std::setw(10) << l;
  out << std::setw(9) << "n" << "\n";
  out << std::fixed;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const EvalReport& r = parsed[i];
    out << std::left << std::setw(static_cast<int>(name_width)) << reports[i].filename().string() << std::right
        << std::setprecision(1) << std::setw(10) << r.geoscore << std::setw(12) << r.mean_distance_km << std::setw(12)
        << r.median_distance_km << std::setprecision(3);
    for (const auto& l : levels) {
      auto it = r.accuracy.find(l);
      if (it == r.accuracy.end()) {
        out << std::setw(10) << "-";
      } else {
        out << std::setw(10) << it->second;
      }
    }
    out << std::setw(9) << r.n_samples << "\n";
  }
  out.unsetf(std::ios::floatfield);
}

void cmd_export_csv(const std::filesystem::path& embeddings, const std::filesystem::path& out) {
  write_file(out, embeddings_to_csv(read_embeddings(embeddings)));
}

// ---- argument parsing ---------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Geolocation from image embeddings: partition, train, evaluate, curate, retrieve."};
  app.name("geoloc");
  app.require_subcommand(1);

  PartitionOptions part;
  auto* sub_part = app.add_subcommand("partition", "Build QuadTree cells and admin lookups from metadata");
  sub_part->add_option("--meta", part.meta, "Metadata CSV")->required();
  sub_part->add_option("--out", part.out, "Partition JSON to write")->required();
  sub_part->add_option("--max-depth", part.max_depth, "QuadTree depth cap")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub_part->add_option("--max-leaf", part.max_leaf, "Maximum points per leaf")->capture_default_str()->check(CLI::PositiveNumber);

  TrainOptions tr;
  std::uint64_t train_seed = 0;
  auto* sub_train = app.add_subcommand("train", "Train a head on precomputed embeddings");
  sub_train->add_option("--config", tr.config, "Run config JSON")->required();
  sub_train->add_option("--emb", tr.embeddings, "Train embedding file");
  sub_train->add_option("--meta", tr.meta, "Train metadata CSV");
  sub_train->add_option("--partition", tr.partition, "Partition JSON (default: built from --meta)");
  sub_train->add_option("--out", tr.out, "Checkpoint to write")->required();
  sub_train->add_option("--trace", tr.trace, "Loss trace CSV (default: <out>.trace.csv)");
  auto* seed_opt = sub_train->add_option("--seed", train_seed, "Override the config seed");

  EvalOptions ev;
  auto* sub_eval = app.add_subcommand("eval", "Evaluate a checkpoint or a predictions CSV");
  sub_eval->add_option("--model", ev.model, "Checkpoint");
  sub_eval->add_option("--emb", ev.embeddings, "Test embedding file");
  sub_eval->add_option("--predictions", ev.predictions, "Predictions CSV (id,latitude,longitude)");
  sub_eval->add_option("--meta", ev.meta, "Test metadata CSV")->required();
  sub_eval->add_option("--partition", ev.partition, "Partition JSON")->required();
  sub_eval->add_option("--out", ev.out, "Report JSON to write")->required();
  sub_eval->add_option("--curves", ev.curves, "Cumulative error curve CSV");
  sub_eval->add_option("--heatmap", ev.heatmap, "Error grid CSV");
  sub_eval->add_option("--per-sample", ev.per_sample, "Per-sample error CSV");
  sub_eval->add_option("--heatmap-cell-deg", ev.heatmap_cell_deg, "Error grid cell size")->capture_default_str()->check(CLI::PositiveNumber);

  CurateOptions cu;
  std::size_t sample_size = 0;
  auto* sub_cur = app.add_subcommand("curate", "Deduplicate, sample, split and filter a raw collection");
  sub_cur->add_option("--meta", cu.meta, "Raw metadata CSV")->required();
  sub_cur->add_option("--images", cu.images, "Directory of <id>.ppm images");
  sub_cur->add_option("--out", cu.out, "Output directory")->required();
  sub_cur->add_option("--radius-km", cu.radius_km, "Train/test separation radius")->capture_default_str();
  sub_cur->add_option("--grid-m", cu.grid_m, "Deduplication grid cell")->capture_default_str();
  sub_cur->add_option("--alpha", cu.alpha, "Density weight exponent")->capture_default_str();
  sub_cur->add_option("--density-cell-deg", cu.density_cell_deg, "Density grid cell")->capture_default_str();
  sub_cur->add_option("--test-fraction", cu.test_fraction, "Share of samples proposed for test")->capture_default_str();
  sub_cur->add_option("--min-blur-db", cu.filters.min_blur_db, "Blur threshold on the mean log spectrum")->capture_default_str();
  sub_cur->add_option("--min-brightness", cu.filters.min_brightness, "Darkness threshold")->capture_default_str();
  auto* sample_opt = sub_cur->add_option("--sample", sample_size, "Draw this many samples after dedup");
  sub_cur->add_option("--seed", cu.seed, "Random seed")->capture_default_str();

  RetrieveOptions re;
  auto* sub_ret = app.add_subcommand("retrieve", "Nearest-neighbour geolocation by cosine similarity");
  sub_ret->add_option("--train-emb", re.train_embeddings, "Train embedding file")->required();
  sub_ret->add_option("--train-meta", re.train_meta, "Train metadata CSV")->required();
  sub_ret->add_option("--test", re.test_embeddings, "Query embedding file")->required();
  sub_ret->add_option("--out", re.out, "Predictions CSV to write")->required();
  sub_ret->add_option("-k", re.k, "Neighbours to report")->capture_default_str()->check(CLI::PositiveNumber);

  BaselineOptions ba;
  auto* sub_base = app.add_subcommand("baseline", "Random training-location baseline");
  sub_base->add_option("--train-meta", ba.train_meta, "Train metadata CSV")->required();
  sub_base->add_option("--test-meta", ba.test_meta, "Test metadata CSV")->required();
  sub_base->add_option("--out", ba.out, "Predictions CSV to write")->required();
  sub_base->add_option("--seed", ba.seed, "Random seed")->capture_default_str();

  std::vector<std::filesystem::path> reports;
  auto* sub_rep = app.add_subcommand("report", "Tabulate report JSON files");
  sub_rep->add_option("reports", reports, "Report JSON files")->required();

  std::filesystem::path export_in;
  std::filesystem::path export_out;
  auto* sub_exp = app.add_subcommand("export-csv", "Dump an embedding file as CSV");
  sub_exp->add_option("--emb", export_in, "Embedding file")->required();
  sub_exp->add_option("--out", export_out, "CSV to write")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ERROR: " << e.what() << "\n";
    return 2;
  }

  try {
    if (sub_part->parsed()) {
      cmd_partition(part, out);
    } else if (sub_train->parsed()) {
      if (seed_opt->count() > 0) tr.seed = train_seed;
      cmd_train(tr, out);
    } else if (sub_eval->parsed()) {
      cmd_eval(ev, out);
    } else if (sub_cur->parsed()) {
      if (sample_opt->count() > 0) cu.sample_size = sample_size;
      cmd_curate(cu, out);
    } else if (sub_ret->parsed()) {
      cmd_retrieve(re, out);
    } else if (sub_base->parsed()) {
      cmd_baseline(ba, out);
    } else if (sub_rep->parsed()) {
      cmd_report(reports, out);
    } else if (sub_exp->parsed()) {
      cmd_export_csv(export_in, export_out);
    }
  } catch (const std::exception& e) {
    err << "ERROR: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace geoloc::cli
