#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "geoloc/matrix.hpp"
#include "geoloc/random.hpp"

namespace geoloc {

/// y = x W^T + b with W of shape out x in.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;
  Matrix grad_weight;
  std::vector<double> grad_bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out);
  std::size_t in_width() const { return weight.cols(); }
  std::size_t out_width() const { return weight.rows(); }
};

/// Group normalization over contiguous feature groups of each sample.
struct GroupNormLayer {
  std::size_t features = 0;
  std::size_t groups = 4;
  double epsilon = 1e-5;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;

  GroupNormLayer() = default;
  GroupNormLayer(std::size_t features, std::size_t groups, double epsilon);
};

struct ReluLayer {};

/// Rescales each consecutive column pair (0,1), (2,3), ... to unit norm.
struct PairNormalizeLayer {};

using Layer = std::variant<DenseLayer, GroupNormLayer, ReluLayer, PairNormalizeLayer>;

/// Sequential stack: hidden blocks of linear -> GroupNorm -> ReLU, then a
/// plain linear output layer (optionally pair-normalized).
class Mlp {
 public:
  struct LayerCache {
    Matrix output;
    Matrix normalized;            // GroupNorm x-hat
    std::vector<double> inv_std;  // GroupNorm, one per (sample, group)
  };
  struct Cache {
    Matrix input;
    std::vector<LayerCache> layers;
    const Matrix& output() const { return layers.back().output; }
  };

  Mlp() = default;
  /// widths = {in, hidden..., out}.
  Mlp(std::span<const std::size_t> widths, std::size_t groups, double epsilon, bool pair_normalize_output, Rng& rng);

  std::size_t in_width() const;
  std::size_t out_width() const;
  std::span<Layer> layers() { return layers_; }
  std::span<const Layer> layers() const { return layers_; }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;

  /// Backpropagates `upstream` (gradient w.r.t. the output) and accumulates
  /// parameter gradients. `injected` adds extra gradients on the outputs of
  /// intermediate layers, keyed by layer index. Returns the input gradient.
  Matrix backward(const Cache& cache, const Matrix& upstream,
                  std::span<const std::pair<std::size_t, const Matrix*>> injected = {});

  void zero_grad();

 private:
  std::vector<Layer> layers_;
};

enum class HeadKind { kRegression, kSinCos, kClassification, kHybrid };

std::string_view to_string(HeadKind kind);
std::optional<HeadKind> parse_head_kind(std::string_view name);

inline constexpr std::size_t kAuxLandCover = 11;
inline constexpr std::size_t kAuxClimate = 31;
inline constexpr std::size_t kAuxSoil = 15;
inline constexpr std::size_t kAuxWidth = kAuxLandCover + kAuxClimate + kAuxSoil + 1 + 1;

/// Everything needed to rebuild the network shape.
struct HeadDescriptor {
  HeadKind kind = HeadKind::kRegression;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;  // K, classification and hybrid only
  bool auxiliary = false;
  std::size_t groups = 4;
  double epsilon = 1e-5;
  std::string level = "cell";  // division set the classes index

  /// Width of the primary head output: 2, 4, K or K (hybrid classifier).
  std::size_t primary_width() const;
  /// Width of all concatenated outputs: 2, 4, K or 3K, plus A when auxiliary.
  std::size_t output_width() const;
  void validate() const;
};

/// Index of the layer whose output feeds the contrastive objective: the
/// GroupNorm of the primary branch's first hidden block.
inline constexpr std::size_t kRepresentationLayer = 1;

/// All heads of one geolocation model. Every head is its own MLP reading the
/// image embedding: primary (regression, sin/cos, or classifier),
/// relative (hybrid only) and auxiliary (optional).
class Model {
 public:
  struct Forward {
    Mlp::Cache primary;
    std::optional<Mlp::Cache> relative;
    std::optional<Mlp::Cache> auxiliary;

    const Matrix& primary_output() const { return primary.output(); }
    const Matrix& relative_output() const;
    const Matrix& auxiliary_output() const;
    const Matrix& representation() const { return primary.layers[kRepresentationLayer].output; }
  };

  /// Gradients of the loss w.r.t. each head output; empty matrices mean zero.
  struct OutputGradients {
    Matrix primary;
    Matrix relative;
    Matrix auxiliary;
    Matrix representation;
  };

  Model() = default;
  static Model create(const HeadDescriptor& descriptor, std::uint64_t seed);

  const HeadDescriptor& descriptor() const { return descriptor_; }

  Forward forward(const Matrix& x) const;
  void backward(const Forward& forward, const OutputGradients& grads);
  void zero_grad();

  /// Visits (values, gradients) of every trainable tensor in a fixed order.
  void for_each_parameter(const std::function<void(std::span<double>, std::span<double>)>& visit);
  std::size_t parameter_count();

  Mlp& primary() { return primary_; }
  const Mlp& primary() const { return primary_; }
  Mlp* relative() { return relative_ ? &*relative_ : nullptr; }
  Mlp* auxiliary() { return auxiliary_ ? &*auxiliary_ : nullptr; }
  const Mlp* relative() const { return relative_ ? &*relative_ : nullptr; }
  const Mlp* auxiliary() const { return auxiliary_ ? &*auxiliary_ : nullptr; }

  /// Binary checkpoint plus "<path>.json" sidecar with the head descriptor.
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);
  std::string to_bytes() const;
  static Model from_bytes(const HeadDescriptor& descriptor, std::string_view bytes);

 private:
  std::vector<const Layer*> parametric_layers() const;

  HeadDescriptor descriptor_;
  Mlp primary_;
  std::optional<Mlp> relative_;
  std::optional<Mlp> auxiliary_;
};

std::string descriptor_to_json(const HeadDescriptor& descriptor);
HeadDescriptor descriptor_from_json(std::string_view text);

/// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);
double log_sum_exp(std::span<const double> values);

/// Row-wise L2 normalization and its backward pass. Zero rows are a NumericError.
Matrix l2_normalize_rows(const Matrix& x);
Matrix l2_normalize_rows_backward(const Matrix& normalized, const Matrix& x, const Matrix& grad_normalized);

}  // namespace geoloc
