#include <benchmark/benchmark.h>

#include <vector>

#include "geoloc/curation.hpp"
#include "geoloc/geodesy.hpp"
#include "geoloc/model.hpp"
#include "geoloc/partition.hpp"
#include "geoloc/random.hpp"
#include "geoloc/retrieval.hpp"

using namespace geoloc;

namespace {

std::vector<GeoPoint> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GeoPoint> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(rng.uniform(-90, 90), rng.uniform(-180, 180));
  return pts;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

void BM_Haversine(benchmark::State& state) {
  const auto a = random_points(1024, 1);
  const auto b = random_points(1024, 2);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(haversine(a[i & 1023], b[i & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Haversine);

void BM_LocateCell(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 3);
  const auto tree = build_quadtree(pts, 10, 50);
  const auto queries = random_points(1024, 4);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(locate_cell(tree, queries[i & 1023]));
    ++i;
  }
  state.counters["leaves"] = static_cast<double>(tree.num_leaves());
}
BENCHMARK(BM_LocateCell)->Arg(10'000)->Arg(100'000);

void BM_BuildQuadtree(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(build_quadtree(pts, 10, 100).num_leaves());
}
BENCHMARK(BM_BuildQuadtree)->Arg(100'000);

void BM_HybridForwardBackward(benchmark::State& state) {
  HeadDescriptor d;
  d.kind = HeadKind::kHybrid;
  d.input_dim = 64;
  d.num_classes = static_cast<std::size_t>(state.range(0));
  Model model = Model::create(d, 7);
  const Matrix x = random_matrix(64, 64, 8);
  for (auto _ : state) {
    const auto fwd = model.forward(x);
    Model::OutputGradients g;
    g.primary = Matrix(fwd.primary_output().rows(), fwd.primary_output().cols(), 1e-3);
    g.relative = Matrix(fwd.relative_output().rows(), fwd.relative_output().cols(), 1e-3);
    model.zero_grad();
    model.backward(fwd, g);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_HybridForwardBackward)->Arg(64)->Arg(512);

void BM_BlurScore(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  Rng rng(9);
  std::vector<std::uint8_t> rgb(3 * side * side);
  for (auto& v : rgb) v = static_cast<std::uint8_t>(rng.index(256));
  const RasterImage img(side, side, std::move(rgb));
  for (auto _ : state) benchmark::DoNotOptimize(blur_score(img));
}
BENCHMARK(BM_BlurScore)->Arg(64)->Arg(224);

void BM_KnnPredict(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  EmbeddingSet train, queries;
  train.features = random_matrix(n, 128, 10);
  queries.features = random_matrix(16, 128, 11);
  for (std::size_t i = 0; i < n; ++i) train.ids.push_back(i);
  for (std::size_t i = 0; i < 16; ++i) queries.ids.push_back(i);
  const auto index = build_index(train, random_points(n, 12));
  for (auto _ : state) benchmark::DoNotOptimize(knn_predict(index, queries, 5).size());
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_KnnPredict)->Arg(10'000);

}  // namespace

BENCHMARK_MAIN();
