// SPDX-License-Identifier: Apache-2.0
// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include "ddpc/motion.hpp"
#include "ddpc/rng.hpp"
#include "ddpc/sparse_nn.hpp"
#include "ddpc/synthetic.hpp"

namespace {

using namespace ddpc;

std::vector<Coord> shell(size_t points) {
  RigidSpec spec;
  spec.points = points;
  spec.frames = 1;
  spec.precision_bits = 9;
  return rigid_sequence(spec).front().coords();
}

SparseTensor random_tensor(const std::vector<Coord>& coords, int channels, uint64_t seed) {
  Rng rng(seed);
  SparseTensor t(0, channels, coords);
  for (auto& v : t.feats) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

struct ConvCase {
  SparseTensor x;
  ConvSpec spec{16, 16, 3, 1, false};
  std::vector<float> w, b;
  explicit ConvCase(size_t points) : x(random_tensor(shell(points), 16, 1)) {
    Rng rng(2);
    w.resize(static_cast<size_t>(spec.volume() * 16 * 16));
    b.resize(16);
    for (auto& v : w) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  }
};

void BM_SparseConvParallel(benchmark::State& st) {
  ConvCase c(static_cast<size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(sparse_conv<float>(c.x, c.spec, c.w, c.b, c.x.coords));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_SparseConvSerial(benchmark::State& st) {
  ConvCase c(static_cast<size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::sparse_conv_scatter<float>(c.x, c.spec, c.w, c.b, c.x.coords));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

struct AwiCase {
  SparseTensor motion, prev;
  explicit AwiCase(size_t points) {
    const auto coords = shell(points);
    prev = random_tensor(coords, 16, 3);
    motion = random_tensor(coords, 3, 4);
  }
};

void BM_AwiParallel(benchmark::State& st) {
  AwiCase c(static_cast<size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(awi_3d<float>(c.motion, c.prev, kDefaultAlpha));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_AwiSerial(benchmark::State& st) {
  AwiCase c(static_cast<size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::awi_3d_serial<float>(c.motion, c.prev, kDefaultAlpha));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(BM_SparseConvParallel)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SparseConvSerial)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AwiParallel)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AwiSerial)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
