// Copyright 2026 The FVQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "fvq/bridge.h"
#include "fvq/quantizer.h"
#include "fvq/random.h"
#include "fvq/trainer.h"

namespace fvq {
namespace {

// args: vectors, K, d
void BM_NearestIndices(benchmark::State& state) {
  Rng rng(0);
  const auto n = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1)),
             d = static_cast<std::size_t>(state.range(2));
  const Tensor z = rng.normal_tensor({n, d}, 1.0), cb = rng.normal_tensor({k, d}, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(nearest_indices(z, cb));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_NearestIndices)->Args({256, 256, 16})->Args({512, 1024, 32})->Args({1024, 4096, 64});

// args: K, d, p
void BM_BridgeForwardBackward(benchmark::State& state) {
  Rng rng(1);
  BridgeConfig c;
  c.codebook_size = static_cast<std::size_t>(state.range(0));
  c.dim = static_cast<std::size_t>(state.range(1));
  c.patch = static_cast<std::size_t>(state.range(2));
  Bridge bridge(c, rng);
  Tensor cb = rng.normal_tensor({c.codebook_size, c.dim}, 0.25, true);
  for (auto _ : state) {
    reset_record();
    backward(sum(bridge.forward(cb)));
  }
  reset_record();
}
BENCHMARK(BM_BridgeForwardBackward)->Args({256, 16, 1})->Args({1024, 32, 4})->Args({4096, 64, 16});

void BM_Materialize(benchmark::State& state) {
  Rng rng(2);
  BridgeConfig c;
  c.codebook_size = static_cast<std::size_t>(state.range(0));
  c.dim = static_cast<std::size_t>(state.range(1));
  c.patch = static_cast<std::size_t>(state.range(2));
  Bridge bridge(c, rng);
  const Tensor cb = rng.normal_tensor({c.codebook_size, c.dim}, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(bridge.materialize(cb));
}
BENCHMARK(BM_Materialize)->Args({1024, 32, 4})->Args({4096, 64, 16});

// args: K, d, projector (0 none, 3 bridge)
void BM_TrainStep(benchmark::State& state) {
  TrainConfig c;
  c.model.codebook_size = static_cast<std::size_t>(state.range(0));
  c.model.dim = static_cast<std::size_t>(state.range(1));
  c.model.projector = static_cast<ProjectorKind>(state.range(2));
  c.model.bridge.patch = c.model.codebook_size / 256;
  c.schedule = ScheduleConfig::reconstruction(1e-3, 1 << 30);
  c.eval_every = 1 << 30;
  c.data.count = 256;
  Trainer t(c);
  std::int64_t step = 0;
  for (auto _ : state) t.run(++step);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.batch_size));
}
BENCHMARK(BM_TrainStep)->Args({256, 16, 0})->Args({256, 16, 3})->Args({1024, 32, 3})->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace fvq

// The packaged benchmark_main archive carries LTO bytecode from another
// compiler release, so main is defined here.
BENCHMARK_MAIN();
