#include "geoloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "geoloc/error.hpp"
#include "geoloc/heads.hpp"

namespace geoloc {

void EmbeddingSet::validate() const {
  if (features.rows() != ids.size()) throw DataError("embedding set: id count differs from feature rows");
  std::set<std::uint64_t> seen;
  for (std::uint64_t id : ids) {
    if (!seen.insert(id).second) throw DataError("embedding set: duplicate id " + std::to_string(id));
  }
}

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdam: return "adam";
  }
  return "unknown";
}

std::optional<OptimizerKind> parse_optimizer(std::string_view name) {
  for (OptimizerKind k : {OptimizerKind::kSgd, OptimizerKind::kMomentum, OptimizerKind::kAdam}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw DomainError("train config: batch_size must be >= 1");
  if (contrastive && batch_size < 2) throw DomainError("train config: contrastive training needs batch_size >= 2");
  if (!(learning_rate > 0.0)) throw DomainError("train config: learning_rate must be positive");
  if (norm_groups < 1) throw DomainError("train config: norm_groups must be >= 1");
  if (contrastive && !(contrastive->temperature > 0.0)) throw DomainError("train config: temperature must be positive");
  if (hierarchical && head != HeadKind::kClassification && head != HeadKind::kHybrid) {
    throw DomainError("train config: hierarchical supervision needs a classification or hybrid head");
  }
}

HeadDescriptor make_descriptor(const TrainConfig& cfg, const TrainingSet& data) {
  HeadDescriptor d;
  d.kind = cfg.head;
  d.input_dim = data.embeddings.dim();
  d.num_classes = (cfg.head == HeadKind::kClassification || cfg.head == HeadKind::kHybrid) ? data.num_classes : 0;
  d.auxiliary = cfg.auxiliary_weight.has_value();
  d.level = cfg.level;
  d.groups = cfg.norm_groups;
  return d;
}

void check_supervision(const TrainConfig& cfg, const TrainingSet& data) {
  data.embeddings.validate();
  const std::size_t n = data.embeddings.size();
  if (n == 0) throw DataError("training set is empty");
  const bool needs_locations = cfg.head == HeadKind::kRegression || cfg.head == HeadKind::kSinCos ||
                               cfg.head == HeadKind::kHybrid;
  if (needs_locations && data.locations.size() != n) throw DataError("missing label: latitude/longitude");
  if (cfg.head == HeadKind::kClassification || cfg.head == HeadKind::kHybrid) {
    if (data.classes.size() != n) throw DataError("missing label: division '" + cfg.level + "'");
    if (data.num_classes == 0) throw DataError("division '" + cfg.level + "' has no classes");
    for (std::size_t c : data.classes) {
      if (c >= data.num_classes) throw DataError("division id out of range for level '" + cfg.level + "'");
    }
  }
  if (cfg.head == HeadKind::kHybrid) {
    if (data.lookup.num_divisions() != data.num_classes) throw DataError("hybrid head: lookup size differs from K");
    for (std::size_t i = 0; i < n; ++i) {
      encode_relative(data.locations[i], data.lookup.at(data.classes[i]));
    }
  }
  if (cfg.hierarchical) {
    if (!data.hierarchy) throw DataError("hierarchical supervision: no hierarchy for level '" + cfg.level + "'");
    data.hierarchy->validate();
    if (data.hierarchy->fine_size != data.num_classes) throw DataError("hierarchy fine size differs from K");
  }
  if (cfg.contrastive && data.pair_labels.size() != n) {
    throw DataError("missing label: contrastive level '" + cfg.contrastive->level + "'");
  }
  if (cfg.auxiliary_weight) {
    if (data.aux.size() != n) throw DataError("missing label: auxiliary targets");
    for (const AuxTargets& t : data.aux) t.validate();
  }
}

namespace {

void scale_in_place(Matrix& m, double s) {
  if (s == 1.0) return;
  for (double& v : m.values()) v *= s;
}

}  // namespace

BatchLoss batch_loss(Model& model, const TrainConfig& cfg, const TrainingSet& data, std::span<const std::size_t> batch,
                     bool accumulate_gradients) {
  if (batch.empty()) throw DomainError("batch_loss: empty batch");
  const Matrix x = data.embeddings.features.gather_rows(batch);
  const Model::Forward fwd = model.forward(x);
  Model::OutputGradients grads;
  BatchLoss out;
  const auto add = [&](std::string name, double value, double weight) {
    out.terms.push_back({std::move(name), value});
    out.total += weight * value;
  };

  std::vector<std::size_t> classes;
  if (cfg.head == HeadKind::kClassification || cfg.head == HeadKind::kHybrid) {
    for (std::size_t i : batch) classes.push_back(data.classes[i]);
  }

  switch (cfg.head) {
    case HeadKind::kRegression:
    case HeadKind::kSinCos: {
      const std::size_t width = cfg.head == HeadKind::kRegression ? 2 : 4;
      Matrix target(batch.size(), width);
      for (std::size_t r = 0; r < batch.size(); ++r) {
        const GeoPoint& p = data.locations[batch[r]];
        if (cfg.head == HeadKind::kRegression) {
          target(r, 0) = p.lat();
          target(r, 1) = p.lon();
        } else {
          const auto sc = encode_sincos(p);
          std::copy(sc.begin(), sc.end(), target.row(r).begin());
        }
      }
      LossResult l1 = l1_loss(fwd.primary_output(), target);
      add(cfg.head == HeadKind::kRegression ? "l1" : "l1_sincos", l1.value, 1.0);
      grads.primary = std::move(l1.grad);
      break;
    }
    case HeadKind::kClassification:
    case HeadKind::kHybrid: {
      LossResult ce = cfg.hierarchical ? hierarchical_ce(fwd.primary_output(), classes, *data.hierarchy)
                                       : cross_entropy(fwd.primary_output(), classes);
      add(cfg.hierarchical ? "hierarchical_ce" : "ce", ce.value, cfg.classification_weight);
      scale_in_place(ce.grad, cfg.classification_weight);
      grads.primary = std::move(ce.grad);
      if (cfg.head == HeadKind::kHybrid) {
        Matrix targets(batch.size(), 2);
        for (std::size_t r = 0; r < batch.size(); ++r) {
          const auto [tx, ty] = encode_relative(data.locations[batch[r]], data.lookup.at(classes[r]));
          targets(r, 0) = tx;
          targets(r, 1) = ty;
        }
        LossResult rel = hybrid_relative_loss(fwd.relative_output(), classes, targets);
        add("relative_l2", rel.value, cfg.relative_weight);
        scale_in_place(rel.grad, cfg.relative_weight);
        grads.relative = std::move(rel.grad);
      }
      break;
    }
  }

  if (cfg.contrastive) {
    std::vector<std::int64_t> labels;
    for (std::size_t i : batch) labels.push_back(data.pair_labels[i]);
    const Matrix& rep = fwd.representation();
    const Matrix z = l2_normalize_rows(rep);
    LossResult nce = milnce_loss(z, geographic_pairs(labels), ContrastiveConfig{cfg.contrastive->temperature});
    add("milnce", nce.value, cfg.contrastive->weight);
    scale_in_place(nce.grad, cfg.contrastive->weight);
    grads.representation = l2_normalize_rows_backward(z, rep, nce.grad);
  }

  if (cfg.auxiliary_weight) {
    std::vector<AuxTargets> targets;
    for (std::size_t i : batch) targets.push_back(data.aux[i]);
    LossResult aux = aux_loss(fwd.auxiliary_output(), targets);
    add("aux", aux.value, *cfg.auxiliary_weight);
    scale_in_place(aux.grad, *cfg.auxiliary_weight);
    grads.auxiliary = std::move(aux.grad);
  }

  if (!std::isfinite(out.total)) throw NumericError("batch loss is not finite");
  if (accumulate_gradients) model.backward(fwd, grads);
  return out;
}

namespace {

struct TermAccumulator {
  std::vector<std::string> order;
  std::map<std::string, double> sums;
  double total = 0.0;
  double weight = 0.0;

  void add(const BatchLoss& loss, double w) {
    for (const LossTerm& t : loss.terms) {
      if (!sums.contains(t.name)) order.push_back(t.name);
      sums[t.name] += w * t.value;
    }
    total += w * loss.total;
    weight += w;
  }

  BatchLoss mean() const {
    BatchLoss out;
    for (const std::string& name : order) out.terms.push_back({name, sums.at(name) / weight});
    out.total = total / weight;
    return out;
  }
};

std::vector<std::vector<std::size_t>> contrastive_or_plain_batches(const TrainConfig& cfg, const TrainingSet& data,
                                                                   Rng& rng, std::vector<std::size_t>* dropped) {
  if (cfg.contrastive) {
    ContrastivePlan plan = make_contrastive_batches(data.pair_labels, cfg.batch_size, rng.next_u64());
    if (plan.batches.empty()) throw DataError("contrastive training: no label is shared by two samples");
    if (dropped) *dropped = std::move(plan.dropped);
    return std::move(plan.batches);
  }
  return make_batches(data.embeddings.size(), cfg.batch_size, rng);
}

}  // namespace

BatchLoss dataset_loss(Model& model, const TrainConfig& cfg, const TrainingSet& data) {
  std::vector<std::vector<std::size_t>> batches;
  if (cfg.contrastive) {
    Rng rng(cfg.seed);
    batches = contrastive_or_plain_batches(cfg, data, rng, nullptr);
  } else {
    const std::size_t n = data.embeddings.size();
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      std::vector<std::size_t> b(std::min(cfg.batch_size, n - begin));
      std::iota(b.begin(), b.end(), begin);
      batches.push_back(std::move(b));
    }
  }
  TermAccumulator acc;
  for (const auto& b : batches) acc.add(batch_loss(model, cfg, data, b, false), static_cast<double>(b.size()));
  return acc.mean();
}

void Optimizer::step(Model& model) {
  ++steps_;
  std::size_t tensor = 0;
  const double lr = cfg_.learning_rate;
  model.for_each_parameter([&](std::span<double> values, std::span<double> grads) {
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grads[i];
      ++tensor;
      return;
    }
    if (first_.size() <= tensor) first_.emplace_back(values.size(), 0.0);
    if (cfg_.optimizer == OptimizerKind::kMomentum) {
      auto& velocity = first_[tensor];
      for (std::size_t i = 0; i < values.size(); ++i) {
        velocity[i] = cfg_.momentum * velocity[i] + grads[i];
        values[i] -= lr * velocity[i];
      }
    } else {
      if (second_.size() <= tensor) second_.emplace_back(values.size(), 0.0);
      auto& m = first_[tensor];
      auto& v = second_[tensor];
      const double b1 = cfg_.adam_beta1;
      const double b2 = cfg_.adam_beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
      for (std::size_t i = 0; i < values.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grads[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grads[i] * grads[i];
        values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_epsilon);
      }
    }
    ++tensor;
  });
}

ContrastivePlan make_contrastive_batches(std::span<const std::int64_t> labels, std::size_t batch_size,
                                         std::uint64_t seed) {
  if (labels.empty()) throw DataError("contrastive batches: level labels absent");
  if (batch_size < 2) throw DomainError("contrastive batches: batch_size must be >= 2");
  ContrastivePlan plan;
  std::map<std::int64_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      plan.dropped.push_back(i);
    } else {
      by_label[labels[i]].push_back(i);
    }
  }
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [label, members] : by_label) {
    if (members.size() < 2) {
      plan.dropped.push_back(members.front());
    } else {
      groups.push_back(std::move(members));
    }
  }
  std::sort(plan.dropped.begin(), plan.dropped.end());

  Rng rng(seed);
  rng.shuffle(std::span(groups));
  std::deque<std::vector<std::size_t>> pairs;
  std::deque<std::vector<std::size_t>> triples;
  for (auto& g : groups) {
    rng.shuffle(std::span(g));
    std::size_t i = 0;
    for (; g.size() - i >= 4 || g.size() - i == 2; i += 2) pairs.push_back({g[i], g[i + 1]});
    if (g.size() - i == 3) {
      if (batch_size >= 3) {
        triples.push_back({g[i], g[i + 1], g[i + 2]});
      } else {
        // A 2-slot batch cannot hold a triple; the odd member sits this epoch out.
        pairs.push_back({g[i], g[i + 1]});
      }
    }
  }

  while (!pairs.empty() || !triples.empty()) {
    std::vector<std::size_t> batch;
    while (true) {
      const std::size_t room = batch_size - batch.size();
      std::deque<std::vector<std::size_t>>* source = nullptr;
      if (room >= 3 && room % 2 == 1 && !triples.empty()) {
        source = &triples;
      } else if (room >= 2 && !pairs.empty()) {
        source = &pairs;
      } else if (room >= 3 && !triples.empty()) {
        source = &triples;
      }
      if (!source) break;
      batch.insert(batch.end(), source->front().begin(), source->front().end());
      source->pop_front();
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

TrainResult train(const TrainConfig& cfg, const TrainingSet& data) {
  cfg.validate();
  check_supervision(cfg, data);
  TrainResult result;
  result.model = Model::create(make_descriptor(cfg, data), cfg.seed);
  Optimizer optimizer(cfg);
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> dropped;
    const auto batches = contrastive_or_plain_batches(cfg, data, rng, &dropped);
    if (epoch == 1) result.dropped = std::move(dropped);
    TermAccumulator acc;
    for (const auto& batch : batches) {
      result.model.zero_grad();
      acc.add(batch_loss(result.model, cfg, data, batch, true), static_cast<double>(batch.size()));
      optimizer.step(result.model);
    }
    const BatchLoss mean = acc.mean();
    for (const LossTerm& t : mean.terms) result.trace.push_back({epoch, t.name, t.value});
    result.trace.push_back({epoch, "total", mean.total});
  }
  return result;
}

std::string trace_to_csv(std::span<const TraceRow> trace) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,term,value\n";
  for (const TraceRow& row : trace) out << row.epoch << ',' << row.term << ',' << row.value << '\n';
  return out.str();
}

std::vector<GeoPoint> predict_locations(const Model& model, const Matrix& x, const LookupTable* lookup) {
  const Model::Forward fwd = model.forward(x);
  const HeadKind kind = model.descriptor().kind;
  if ((kind == HeadKind::kClassification || kind == HeadKind::kHybrid) && lookup == nullptr) {
    throw DataError("predict: classification heads need a lookup table");
  }
  std::vector<GeoPoint> out;
  out.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto raw = fwd.primary_output().row(r);
    switch (kind) {
      case HeadKind::kRegression: out.push_back(decode_regression(raw)); break;
      case HeadKind::kSinCos: out.push_back(decode_sincos(std::span<const double, 4>(raw.data(), 4))); break;
      case HeadKind::kClassification:
        out.push_back(decode_classification(restrict_to_populated(softmax(raw), *lookup), *lookup));
        break;
      case HeadKind::kHybrid:
        out.push_back(decode_hybrid(restrict_to_populated(softmax(raw), *lookup), fwd.relative_output().row(r), *lookup));
        break;
    }
  }
  return out;
}

std::vector<std::size_t> predict_classes(const Model& model, const Matrix& x) {
  const HeadKind kind = model.descriptor().kind;
  if (kind != HeadKind::kClassification && kind != HeadKind::kHybrid) {
    throw DataError("predict_classes: head has no classifier");
  }
  const Matrix logits = model.primary().forward(x);
  std::vector<std::size_t> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = argmax(logits.row(r));
  return out;
}

}  // namespace geoloc
