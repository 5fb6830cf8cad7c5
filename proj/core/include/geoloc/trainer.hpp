#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoloc/geodesy.hpp"
#include "geoloc/matrix.hpp"
#include "geoloc/model.hpp"
#include "geoloc/objectives.hpp"
#include "geoloc/partition.hpp"

namespace geoloc {

/// Precomputed image embeddings, one row per sample.
struct EmbeddingSet {
  std::vector<std::uint64_t> ids;
  Matrix features;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return features.cols(); }
  /// Throws DataError on duplicate ids or a row count mismatch.
  void validate() const;
};

/// Embeddings plus whatever supervision the enabled losses need.
struct TrainingSet {
  EmbeddingSet embeddings;
  std::vector<GeoPoint> locations;
  std::vector<std::size_t> classes;  // fine division of each sample
  std::size_t num_classes = 0;
  LookupTable lookup;                  // per-division stats for hybrid targets and decoding
  std::optional<Hierarchy> hierarchy;  // coarse levels for hierarchical supervision
  std::vector<std::int64_t> pair_labels;  // contrastive pairing level, -1 = unknown
  std::vector<AuxTargets> aux;
};

enum class OptimizerKind { kSgd, kMomentum, kAdam };

std::string_view to_string(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer(std::string_view name);

struct ContrastiveSettings {
  std::string level = "region";
  double weight = 1.0;
  double temperature = 0.1;
};

struct TrainConfig {
  std::size_t batch_size = 512;
  std::size_t epochs = 30;
  double learning_rate = 2e-4;
  std::uint64_t seed = 0;
  HeadKind head = HeadKind::kRegression;
  std::string level = "cell";
  bool hierarchical = false;
  double classification_weight = 1.0;
  double relative_weight = 1.0;
  std::optional<ContrastiveSettings> contrastive;
  std::optional<double> auxiliary_weight;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t norm_groups = 4;  // GroupNorm groups in every hidden block

  void validate() const;
};

/// Head descriptor implied by a config and the data it trains on.
HeadDescriptor make_descriptor(const TrainConfig& cfg, const TrainingSet& data);

/// Throws DataError naming the first label the enabled losses need but the
/// data lacks.
void check_supervision(const TrainConfig& cfg, const TrainingSet& data);

struct LossTerm {
  std::string name;
  double value = 0.0;
};

struct BatchLoss {
  double total = 0.0;
  std::vector<LossTerm> terms;
};

/// Sum of every enabled objective on one batch. With accumulate_gradients,
/// parameter gradients are added into the model's buffers (not zeroed first).
BatchLoss batch_loss(Model& model, const TrainConfig& cfg, const TrainingSet& data, std::span<const std::size_t> batch,
                     bool accumulate_gradients);

/// Mean of batch_loss over the whole set in one pass (no gradients).
BatchLoss dataset_loss(Model& model, const TrainConfig& cfg, const TrainingSet& data);

/// Fixed-rate first-order update over Model::for_each_parameter.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
  void step(Model& model);

 private:
  TrainConfig cfg_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

struct ContrastivePlan {
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> dropped;  // samples whose label no other sample shares
};

/// Groups samples by label so that every batch member has a same-label
/// partner in its batch: label groups are shuffled and cut into pairs (plus a
/// triple for odd groups), and the units are packed into batches.
ContrastivePlan make_contrastive_batches(std::span<const std::int64_t> labels, std::size_t batch_size,
                                         std::uint64_t seed);

/// Shuffled consecutive batches; the last one may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

struct TraceRow {
  std::size_t epoch = 0;
  std::string term;
  double value = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<TraceRow> trace;
  std::vector<std::size_t> dropped;  // contrastive singletons, reported once
};

TrainResult train(const TrainConfig& cfg, const TrainingSet& data);

/// Loss trace as CSV with header "epoch,term,value".
std::string trace_to_csv(std::span<const TraceRow> trace);

/// Decodes every row into a location with the model's head.
std::vector<GeoPoint> predict_locations(const Model& model, const Matrix& x, const LookupTable* lookup);

/// Argmax class per row (classification and hybrid heads).
std::vector<std::size_t> predict_classes(const Model& model, const Matrix& x);

}  // namespace geoloc
