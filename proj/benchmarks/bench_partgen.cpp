// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

// Microbenchmarks for the hot paths: metric kernels, likelihood evaluation,
// network forward passes and isosurface extraction.

#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "partgen/blending.hpp"
#include "partgen/evaluation.hpp"
#include "partgen/generator_training.hpp"
#include "partgen/marching_cubes.hpp"

namespace partgen {
namespace {

PointCloud random_cloud(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g;
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(g(rng), g(rng), g(rng));
  return c;
}

const Dataset& bench_dataset() {
  static const Dataset ds = [] {
    DatasetConfig c;
    c.seed = 17;
    c.train_per_category = 16;
    c.val_per_category = 2;
    c.test_per_category = 2;
    c.kmeans.clusters = 8;
    return make_dataset(c);
  }();
  return ds;
}

void BM_Chamfer(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointCloud a = random_cloud(n, rng), b = random_cloud(n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(chamfer(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n));
}
BENCHMARK(BM_Chamfer)->Arg(256)->Arg(2048)->Arg(8192);

void BM_ChamferMatrix(benchmark::State& state) {
  Rng rng(2);
  std::vector<PointCloud> g, r;
  for (int i = 0; i < 8; ++i) g.push_back(random_cloud(1024, rng));
  for (int i = 0; i < 8; ++i) r.push_back(random_cloud(1024, rng));
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_matrix(g, r, 1));
}
BENCHMARK(BM_ChamferMatrix)->Unit(benchmark::kMillisecond);

void BM_MolLogProb(benchmark::State& state) {
  Rng rng(3);
  const int k = static_cast<int>(state.range(0));
  std::vector<double> p(static_cast<std::size_t>(dist::MixtureOfLogistics::packed_width(3, k)));
  for (double& v : p) v = 2.0 * dist::uniform01(rng) - 1.0;
  const dist::MixtureOfLogistics mol(p, 3, k);
  const std::vector<double> x = {0.1, -0.4, 0.9};
  for (auto _ : state) benchmark::DoNotOptimize(dist::mol_log_prob(mol, x));
}
BENCHMARK(BM_MolLogProb)->Arg(1)->Arg(5)->Arg(10);

void BM_GeneratorFeatures(benchmark::State& state) {
  const Dataset& ds = bench_dataset();
  const PartGenerator g(GeneratorConfig{}, GeneratorContext::from_manifest(ds.manifest), 4);
  const ObjectRecord& r = ds.records.front();
  for (auto _ : state) {
    ad::Tape t(false);
    benchmark::DoNotOptimize(g.features(t, r.bbox, r.parts).value().data());
  }
  state.counters["parts"] = static_cast<double>(r.parts.size());
}
BENCHMARK(BM_GeneratorFeatures)->Unit(benchmark::kMillisecond);

void BM_TeacherForcingStep(benchmark::State& state) {
  const Dataset& ds = bench_dataset();
  PartGenerator g(GeneratorConfig{}, GeneratorContext::from_manifest(ds.manifest), 5);
  const ObjectRecord& r = ds.records.front();
  Rng rng(5);
  for (auto _ : state) {
    g.parameters().zero_grad();
    ad::Tape t;
    t.backward(teacher_forcing_loss(g, t, r, {}, rng));
  }
}
BENCHMARK(BM_TeacherForcingStep)->Unit(benchmark::kMillisecond);

void BM_OccupancyForward(benchmark::State& state) {
  const Dataset& ds = bench_dataset();
  const OccupancyNetwork net(BlenderConfig{}, 6);
  const ObjectRecord& r = ds.records.front();
  const std::vector<Part> parts = normalized_parts(r.bbox, r.parts);
  Rng rng(6);
  std::vector<Vec3> q(static_cast<std::size_t>(state.range(0)));
  for (Vec3& p : q) p = Vec3(2 * dist::uniform01(rng) - 1, 2 * dist::uniform01(rng) - 1, 2 * dist::uniform01(rng) - 1);
  for (auto _ : state) benchmark::DoNotOptimize(net.occupancy(parts, q));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OccupancyForward)->Arg(256)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_MarchingCubesSphere(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  const ScalarGrid grid = sample_grid(res, Vec3::Constant(-1.0), Vec3::Constant(1.0),
                                      [](std::span<const Vec3> p, std::span<float> out) {
                                        for (std::size_t i = 0; i < p.size(); ++i) {
                                          out[i] = static_cast<float>(0.6 - p[i].norm());
                                        }
                                      });
  for (auto _ : state) benchmark::DoNotOptimize(marching_cubes(grid, 0.0));
}
BENCHMARK(BM_MarchingCubesSphere)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace partgen

BENCHMARK_MAIN();
