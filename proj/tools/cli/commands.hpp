#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "geoloc/curation.hpp"
#include "geoloc/evaluation.hpp"
#include "geoloc/io.hpp"
#include "geoloc/trainer.hpp"

namespace geoloc::cli {

struct PartitionOptions {
  std::filesystem::path meta;
  std::filesystem::path out;
  int max_depth = 10;
  std::size_t max_leaf = 1000;
};

/// Builds cells and admin lookups from metadata and writes partition JSON.
PartitionSet cmd_partition(const PartitionOptions& opts, std::ostream& log);

struct TrainOptions {
  std::filesystem::path config;
  std::filesystem::path embeddings;
  std::filesystem::path meta;
  std::filesystem::path out;
  std::filesystem::path partition;  // optional; built from --meta when empty
  std::filesystem::path trace;      // defaults to <out>.trace.csv
  std::optional<std::uint64_t> seed;
};

struct TrainOutcome {
  TrainConfig config;
  TrainingSet data;
  TrainResult result;
  double final_loss = 0.0;  // dataset loss of the trained model
};

/// Trains per the run config and writes the checkpoint, its descriptor
/// sidecar and the loss trace.
TrainOutcome cmd_train(const TrainOptions& opts, std::ostream& log);

struct EvalOptions {
  std::filesystem::path model;
  std::filesystem::path embeddings;
  std::filesystem::path predictions;  // alternative to model + embeddings
  std::filesystem::path meta;
  std::filesystem::path partition;
  std::filesystem::path out;
  std::filesystem::path curves;
  std::filesystem::path heatmap;
  std::filesystem::path per_sample;
  double heatmap_cell_deg = 1.0;
};

EvalReport cmd_eval(const EvalOptions& opts, std::ostream& log);

struct CurateOptions {
  std::filesystem::path meta;
  std::filesystem::path images;
  std::filesystem::path out;
  double radius_km = 1.0;
  double grid_m = 100.0;
  double alpha = -0.75;
  double density_cell_deg = 0.1;
  double test_fraction = 0.1;
  std::optional<std::size_t> sample_size;
  std::uint64_t seed = 0;
  FilterThresholds filters;
};

struct CurateSummary {
  std::size_t input = 0;
  std::size_t after_dedup = 0;
  std::size_t after_sampling = 0;
  std::size_t train = 0;
  std::size_t test_candidates = 0;
  std::size_t test = 0;
  std::size_t image_rejected = 0;
  std::size_t image_unreadable = 0;
};

CurateSummary cmd_curate(const CurateOptions& opts, std::ostream& log);

struct RetrieveOptions {
  std::filesystem::path train_embeddings;
  std::filesystem::path train_meta;
  std::filesystem::path test_embeddings;
  std::filesystem::path out;
  std::size_t k = 1;
};

void cmd_retrieve(const RetrieveOptions& opts, std::ostream& log);

struct BaselineOptions {
  std::filesystem::path train_meta;
  std::filesystem::path test_meta;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};

void cmd_baseline(const BaselineOptions& opts, std::ostream& log);

/// Prints a table of one or more report JSON files.
void cmd_report(const std::vector<std::filesystem::path>& reports, std::ostream& out);

void cmd_export_csv(const std::filesystem::path& embeddings, const std::filesystem::path& out);

/// Predictions CSV: header "id,latitude,longitude" (extra columns ignored).
struct Prediction {
  std::uint64_t id = 0;
  GeoPoint location;
};
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

/// Parses argv (without the program name) and runs one subcommand. Errors go
/// to `err` prefixed with "ERROR:"; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geoloc::cli
