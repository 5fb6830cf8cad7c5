#include "geoloc/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "geoloc/error.hpp"
#include "json.hpp"

namespace geoloc {

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : weight(out, in), bias(out, 0.0), grad_weight(out, in), grad_bias(out, 0.0) {}

GroupNormLayer::GroupNormLayer(std::size_t features_, std::size_t groups_, double epsilon_)
    : features(features_),
      groups(groups_),
      epsilon(epsilon_),
      gamma(features_, 1.0),
      beta(features_, 0.0),
      grad_gamma(features_, 0.0),
      grad_beta(features_, 0.0) {
  if (groups == 0 || features % groups != 0) {
    throw ShapeError("GroupNorm: " + std::to_string(features) + " features not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (!(epsilon > 0.0)) throw DomainError("GroupNorm: epsilon must be positive");
}

Mlp::Mlp(std::span<const std::size_t> widths, std::size_t groups, double epsilon, bool pair_normalize_output,
         Rng& rng) {
  if (widths.size() < 2) throw ShapeError("Mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer dense(widths[i], widths[i + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(widths[i] + widths[i + 1]));
    for (double& w : dense.weight.values()) w = rng.uniform(-limit, limit);
    layers_.emplace_back(std::move(dense));
    if (i + 2 < widths.size()) {
      layers_.emplace_back(GroupNormLayer(widths[i + 1], groups, epsilon));
      layers_.emplace_back(ReluLayer{});
    }
  }
  if (pair_normalize_output) {
    if (widths.back() % 2 != 0) throw ShapeError("Mlp: pair normalization needs an even output width");
    layers_.emplace_back(PairNormalizeLayer{});
  }
}

std::size_t Mlp::in_width() const { return std::get<DenseLayer>(layers_.front()).in_width(); }

std::size_t Mlp::out_width() const {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (const auto* dense = std::get_if<DenseLayer>(&*it)) return dense->out_width();
  }
  return 0;
}

namespace {

Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
  const std::size_t in = layer.in_width();
  const std::size_t out = layer.out_width();
  Matrix y(x.rows(), out);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    auto yr = y.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const auto w = layer.weight.row(o);
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

Matrix dense_backward(DenseLayer& layer, const Matrix& x, const Matrix& dy) {
  const std::size_t in = layer.in_width();
  const std::size_t out = layer.out_width();
  Matrix dx(x.rows(), in);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    const auto dyr = dy.row(r);
    auto dxr = dx.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      layer.grad_bias[o] += g;
      auto gw = layer.grad_weight.row(o);
      const auto w = layer.weight.row(o);
      for (std::size_t i = 0; i < in; ++i) {
        gw[i] += g * xr[i];
        dxr[i] += g * w[i];
      }
    }
  }
  return dx;
}

void group_norm_forward(const GroupNormLayer& layer, const Matrix& x, Mlp::LayerCache& cache) {
  const std::size_t group_size = layer.features / layer.groups;
  cache.output = Matrix(x.rows(), layer.features);
  cache.normalized = Matrix(x.rows(), layer.features);
  cache.inv_std.assign(x.rows() * layer.groups, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    for (std::size_t g = 0; g < layer.groups; ++g) {
      const std::size_t begin = g * group_size;
      double mean = 0.0;
      for (std::size_t f = begin; f < begin + group_size; ++f) mean += xr[f];
      mean /= static_cast<double>(group_size);
      double var = 0.0;
      for (std::size_t f = begin; f < begin + group_size; ++f) var += (xr[f] - mean) * (xr[f] - mean);
      var /= static_cast<double>(group_size);
      const double inv_std = 1.0 / std::sqrt(var + layer.epsilon);
      cache.inv_std[r * layer.groups + g] = inv_std;
      for (std::size_t f = begin; f < begin + group_size; ++f) {
        const double xhat = (xr[f] - mean) * inv_std;
        cache.normalized(r, f) = xhat;
        cache.output(r, f) = layer.gamma[f] * xhat + layer.beta[f];
      }
    }
  }
}

Matrix group_norm_backward(GroupNormLayer& layer, const Mlp::LayerCache& cache, const Matrix& dy) {
  const std::size_t group_size = layer.features / layer.groups;
  const double m = static_cast<double>(group_size);
  Matrix dx(dy.rows(), layer.features);
  std::vector<double> dxhat(group_size);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    for (std::size_t g = 0; g < layer.groups; ++g) {
      const std::size_t begin = g * group_size;
      double sum_dxhat = 0.0;
      double sum_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < group_size; ++j) {
        const std::size_t f = begin + j;
        const double xhat = cache.normalized(r, f);
        layer.grad_gamma[f] += dy(r, f) * xhat;
        layer.grad_beta[f] += dy(r, f);
        dxhat[j] = dy(r, f) * layer.gamma[f];
        sum_dxhat += dxhat[j];
        sum_dxhat_xhat += dxhat[j] * xhat;
      }
      const double inv_std = cache.inv_std[r * layer.groups + g];
      for (std::size_t j = 0; j < group_size; ++j) {
        const std::size_t f = begin + j;
        dx(r, f) = inv_std / m * (m * dxhat[j] - sum_dxhat - cache.normalized(r, f) * sum_dxhat_xhat);
      }
    }
  }
  return dx;
}

Matrix pair_normalize_forward(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c + 1 < x.cols(); c += 2) {
      const double n = std::hypot(x(r, c), x(r, c + 1));
      if (!(n > 0.0)) throw NumericError("pair normalization of a zero pair");
      y(r, c) = x(r, c) / n;
      y(r, c + 1) = x(r, c + 1) / n;
    }
  }
  return y;
}

Matrix pair_normalize_backward(const Matrix& x, const Matrix& y, const Matrix& dy) {
  Matrix dx(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c + 1 < x.cols(); c += 2) {
      const double n = std::hypot(x(r, c), x(r, c + 1));
      const double dot = y(r, c) * dy(r, c) + y(r, c + 1) * dy(r, c + 1);
      dx(r, c) = (dy(r, c) - y(r, c) * dot) / n;
      dx(r, c + 1) = (dy(r, c + 1) - y(r, c + 1) * dot) / n;
    }
  }
  return dx;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (layers_.empty()) throw ShapeError("Mlp: no layers");
  if (x.cols() != in_width()) {
    throw ShapeError("Mlp: input width " + std::to_string(x.cols()) + ", expected " + std::to_string(in_width()));
  }
  if (!x.all_finite()) throw NumericError("Mlp: non-finite input");

  Cache local;
  Cache& c = cache ? *cache : local;
  c.input = x;
  c.layers.assign(layers_.size(), {});
  const Matrix* current = &c.input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerCache& lc = c.layers[i];
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, DenseLayer>) {
            lc.output = dense_forward(layer, *current);
          } else if constexpr (std::is_same_v<T, GroupNormLayer>) {
            group_norm_forward(layer, *current, lc);
          } else if constexpr (std::is_same_v<T, ReluLayer>) {
            lc.output = *current;
            for (double& v : lc.output.values()) v = v > 0.0 ? v : 0.0;
          } else {
            lc.output = pair_normalize_forward(*current);
          }
        },
        layers_[i]);
    current = &lc.output;
  }
  if (!c.output().all_finite()) throw NumericError("Mlp: non-finite output");
  return c.output();
}

Matrix Mlp::backward(const Cache& cache, const Matrix& upstream,
                     std::span<const std::pair<std::size_t, const Matrix*>> injected) {
  if (cache.layers.size() != layers_.size()) throw Error("Mlp::backward: no forward cache for this network");
  require_same_shape(upstream, cache.output(), "Mlp::backward");
  Matrix grad = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    for (const auto& [index, extra] : injected) {
      if (index != k || extra == nullptr || extra->empty()) continue;
      require_same_shape(*extra, grad, "Mlp::backward injection");
      auto g = grad.values();
      auto e = extra->values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += e[i];
    }
    const Matrix& input = k == 0 ? cache.input : cache.layers[k - 1].output;
    const LayerCache& lc = cache.layers[k];
    grad = std::visit(
        [&](auto& layer) -> Matrix {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, DenseLayer>) {
            return dense_backward(layer, input, grad);
          } else if constexpr (std::is_same_v<T, GroupNormLayer>) {
            return group_norm_backward(layer, lc, grad);
          } else if constexpr (std::is_same_v<T, ReluLayer>) {
            Matrix out = grad;
            auto in = input.values();
            auto o = out.values();
            for (std::size_t i = 0; i < o.size(); ++i) {
              if (!(in[i] > 0.0)) o[i] = 0.0;
            }
            return out;
          } else {
            return pair_normalize_backward(input, lc.output, grad);
          }
        },
        layers_[k]);
  }
  return grad;
}

void Mlp::zero_grad() {
  for (Layer& layer : layers_) {
    if (auto* dense = std::get_if<DenseLayer>(&layer)) {
      dense->grad_weight.fill(0.0);
      std::fill(dense->grad_bias.begin(), dense->grad_bias.end(), 0.0);
    } else if (auto* gn = std::get_if<GroupNormLayer>(&layer)) {
      std::fill(gn->grad_gamma.begin(), gn->grad_gamma.end(), 0.0);
      std::fill(gn->grad_beta.begin(), gn->grad_beta.end(), 0.0);
    }
  }
}

std::string_view to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::kRegression: return "regression";
    case HeadKind::kSinCos: return "sincos";
    case HeadKind::kClassification: return "classification";
    case HeadKind::kHybrid: return "hybrid";
  }
  return "unknown";
}

std::optional<HeadKind> parse_head_kind(std::string_view name) {
  for (HeadKind k : {HeadKind::kRegression, HeadKind::kSinCos, HeadKind::kClassification, HeadKind::kHybrid}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::size_t HeadDescriptor::primary_width() const {
  switch (kind) {
    case HeadKind::kRegression: return 2;
    case HeadKind::kSinCos: return 4;
    case HeadKind::kClassification:
    case HeadKind::kHybrid: return num_classes;
  }
  return 0;
}

std::size_t HeadDescriptor::output_width() const {
  std::size_t width = primary_width();
  if (kind == HeadKind::kHybrid) width += 2 * num_classes;
  if (auxiliary) width += kAuxWidth;
  return width;
}

void HeadDescriptor::validate() const {
  if (input_dim == 0) throw ShapeError("head: input dimension must be positive");
  if ((kind == HeadKind::kClassification || kind == HeadKind::kHybrid) && num_classes == 0) {
    throw ShapeError("head: classification needs at least one class");
  }
  if (groups == 0 || input_dim % groups != 0) {
    throw ShapeError("head: input dimension " + std::to_string(input_dim) + " not divisible by " +
                     std::to_string(groups) + " GroupNorm groups");
  }
}

const Matrix& Model::Forward::relative_output() const {
  if (!relative) throw Error("model has no relative head");
  return relative->output();
}

const Matrix& Model::Forward::auxiliary_output() const {
  if (!auxiliary) throw Error("model has no auxiliary head");
  return auxiliary->output();
}

Model Model::create(const HeadDescriptor& descriptor, std::uint64_t seed) {
  descriptor.validate();
  Model model;
  model.descriptor_ = descriptor;
  Rng rng(seed);
  const std::size_t d = descriptor.input_dim;
  const bool wide = descriptor.kind == HeadKind::kClassification || descriptor.kind == HeadKind::kHybrid;
  const std::vector<std::size_t> primary_widths{d, d, wide ? std::size_t{512} : std::size_t{64},
                                                descriptor.primary_width()};
  model.primary_ = Mlp(primary_widths, descriptor.groups, descriptor.epsilon,
                       descriptor.kind == HeadKind::kSinCos, rng);
  if (descriptor.kind == HeadKind::kHybrid) {
    const std::vector<std::size_t> widths{d, d, 512, 2 * descriptor.num_classes};
    model.relative_ = Mlp(widths, descriptor.groups, descriptor.epsilon, false, rng);
  }
  if (descriptor.auxiliary) {
    const std::vector<std::size_t> widths{d, d, 64, kAuxWidth};
    model.auxiliary_ = Mlp(widths, descriptor.groups, descriptor.epsilon, false, rng);
  }
  return model;
}

Model::Forward Model::forward(const Matrix& x) const {
  Forward f;
  primary_.forward(x, &f.primary);
  if (relative_) {
    f.relative.emplace();
    relative_->forward(x, &*f.relative);
  }
  if (auxiliary_) {
    f.auxiliary.emplace();
    auxiliary_->forward(x, &*f.auxiliary);
  }
  return f;
}

void Model::backward(const Forward& forward, const OutputGradients& grads) {
  const auto or_zero = [](const Matrix& g, const Matrix& like) { return g.empty() ? Matrix(like.rows(), like.cols()) : g; };
  std::vector<std::pair<std::size_t, const Matrix*>> injected;
  if (!grads.representation.empty()) injected.emplace_back(kRepresentationLayer, &grads.representation);
  primary_.backward(forward.primary, or_zero(grads.primary, forward.primary_output()), injected);
  if (relative_ && !grads.relative.empty()) relative_->backward(*forward.relative, grads.relative);
  if (auxiliary_ && !grads.auxiliary.empty()) auxiliary_->backward(*forward.auxiliary, grads.auxiliary);
}

void Model::zero_grad() {
  primary_.zero_grad();
  if (relative_) relative_->zero_grad();
  if (auxiliary_) auxiliary_->zero_grad();
}

void Model::for_each_parameter(const std::function<void(std::span<double>, std::span<double>)>& visit) {
  const auto visit_mlp = [&](Mlp& mlp) {
    for (Layer& layer : mlp.layers()) {
      if (auto* dense = std::get_if<DenseLayer>(&layer)) {
        visit(dense->weight.values(), dense->grad_weight.values());
        visit(dense->bias, dense->grad_bias);
      } else if (auto* gn = std::get_if<GroupNormLayer>(&layer)) {
        visit(gn->gamma, gn->grad_gamma);
        visit(gn->beta, gn->grad_beta);
      }
    }
  };
  visit_mlp(primary_);
  if (relative_) visit_mlp(*relative_);
  if (auxiliary_) visit_mlp(*auxiliary_);
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for_each_parameter([&](std::span<double> v, std::span<double>) { n += v.size(); });
  return n;
}

// ---- checkpoint -------------------------------------------------------------

namespace {

constexpr std::string_view kCheckpointMagic = "GLKMDL1\n";
constexpr std::uint32_t kDenseTag = 1;
constexpr std::uint32_t kGroupNormTag = 2;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated file");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace

std::vector<const Layer*> Model::parametric_layers() const {
  std::vector<const Layer*> out;
  const auto collect = [&](const Mlp& mlp) {
    for (const Layer& layer : mlp.layers()) {
      if (std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<GroupNormLayer>(layer)) {
        out.push_back(&layer);
      }
    }
  };
  collect(primary_);
  if (relative_) collect(*relative_);
  if (auxiliary_) collect(*auxiliary_);
  return out;
}

std::string Model::to_bytes() const {
  std::string out(kCheckpointMagic);
  const auto layers = parametric_layers();
  put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const Layer* layer : layers) {
    if (const auto* dense = std::get_if<DenseLayer>(layer)) {
      put_u32(out, kDenseTag);
      put_u32(out, static_cast<std::uint32_t>(dense->out_width()));
      put_u32(out, static_cast<std::uint32_t>(dense->in_width()));
      for (double v : dense->weight.values()) put_f64(out, v);
      for (double v : dense->bias) put_f64(out, v);
    } else {
      const auto& gn = std::get<GroupNormLayer>(*layer);
      put_u32(out, kGroupNormTag);
      put_u32(out, static_cast<std::uint32_t>(gn.features));
      put_u32(out, static_cast<std::uint32_t>(gn.groups));
      for (double v : gn.gamma) put_f64(out, v);
      for (double v : gn.beta) put_f64(out, v);
    }
  }
  return out;
}

Model Model::from_bytes(const HeadDescriptor& descriptor, std::string_view bytes) {
  Model model = create(descriptor, 0);
  Reader reader(bytes);
  if (reader.take(kCheckpointMagic.size()) != kCheckpointMagic) throw DataError("checkpoint: bad magic");
  const std::uint32_t count = reader.u32();
  if (count != model.parametric_layers().size()) {
    throw DataError("checkpoint: " + std::to_string(count) + " layers, head expects " +
                    std::to_string(model.parametric_layers().size()));
  }
  const auto load_mlp = [&](Mlp& mlp) {
    for (Layer& layer : mlp.layers()) {
      if (auto* dense = std::get_if<DenseLayer>(&layer)) {
        if (reader.u32() != kDenseTag || reader.u32() != dense->out_width() || reader.u32() != dense->in_width()) {
          throw DataError("checkpoint: dense layer shape mismatch");
        }
        for (double& v : dense->weight.values()) v = reader.f64();
        for (double& v : dense->bias) v = reader.f64();
      } else if (auto* gn = std::get_if<GroupNormLayer>(&layer)) {
        if (reader.u32() != kGroupNormTag || reader.u32() != gn->features || reader.u32() != gn->groups) {
          throw DataError("checkpoint: group norm shape mismatch");
        }
        for (double& v : gn->gamma) v = reader.f64();
        for (double& v : gn->beta) v = reader.f64();
      }
    }
  };
  load_mlp(model.primary_);
  if (model.relative_) load_mlp(*model.relative_);
  if (model.auxiliary_) load_mlp(*model.auxiliary_);
  if (!reader.done()) throw DataError("checkpoint: trailing bytes");
  return model;
}

void Model::save(const std::filesystem::path& path) const {
  write_file(path, to_bytes());
  write_file(path.string() + ".json", descriptor_to_json(descriptor_));
}

Model Model::load(const std::filesystem::path& path) {
  const HeadDescriptor descriptor = descriptor_from_json(read_file(path.string() + ".json"));
  return from_bytes(descriptor, read_file(path));
}

std::string descriptor_to_json(const HeadDescriptor& d) {
  nlohmann::ordered_json j;
  j["format"] = "GLKMDL1";
  j["head"] = std::string(to_string(d.kind));
  j["input_dim"] = d.input_dim;
  j["num_classes"] = d.num_classes;
  j["auxiliary"] = d.auxiliary;
  j["groups"] = d.groups;
  j["epsilon"] = d.epsilon;
  j["level"] = d.level;
  j["output_width"] = d.output_width();
  return j.dump(2) + "\n";
}

HeadDescriptor descriptor_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    HeadDescriptor d;
    const auto kind = parse_head_kind(j.at("head").get<std::string>());
    if (!kind) throw DataError("checkpoint sidecar: unknown head kind");
    d.kind = *kind;
    d.input_dim = j.at("input_dim").get<std::size_t>();
    d.num_classes = j.at("num_classes").get<std::size_t>();
    d.auxiliary = j.at("auxiliary").get<bool>();
    d.groups = j.at("groups").get<std::size_t>();
    d.epsilon = j.at("epsilon").get<double>();
    d.level = j.at("level").get<std::string>();
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint sidecar: ") + e.what());
  }
}

// ---- elementwise helpers ------------------------------------------------------

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double s = 0.0;
  for (double& v : p) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : p) v /= s;
  return p;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

Matrix l2_normalize_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double n2 = 0.0;
    for (double v : x.row(r)) n2 += v * v;
    const double n = std::sqrt(n2);
    if (!(n > 0.0)) throw NumericError("l2 normalization of a zero row");
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) / n;
  }
  return y;
}

Matrix l2_normalize_rows_backward(const Matrix& normalized, const Matrix& x, const Matrix& grad_normalized) {
  Matrix dx(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double n2 = 0.0;
    for (double v : x.row(r)) n2 += v * v;
    const double n = std::sqrt(n2);
    double dot = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) dot += normalized(r, c) * grad_normalized(r, c);
    for (std::size_t c = 0; c < x.cols(); ++c) dx(r, c) = (grad_normalized(r, c) - normalized(r, c) * dot) / n;
  }
  return dx;
}

}  // namespace geoloc
