// Copyright 2026 The Mimic Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mimic/graph.hpp"
#include "mimic/scae_model.hpp"
#include "mimic/scae_train.hpp"
#include "mimic/toy_sim.hpp"

namespace mimic {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t = Tensor::zeros(std::move(shape), grad);
  for (double& v : t.data) v = n(rng);
  return t;
}

ScaeConfig bench_config(int hidden, int kernel) {
  ScaeConfig c;
  c.state_dim = 6;
  c.latent_channels = 8;
  c.hidden = hidden;
  c.kernel = kernel;
  c.horizon = 8;
  return c;
}

// [B, C, H] input through a C -> C conv of width K, forward and backward.
void BM_Conv1d(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0)), kernel = static_cast<int>(state.range(1));
  Tensor x = random_tensor({32, channels, 51}, 1, true);
  Tensor w = random_tensor({channels, channels, kernel}, 2, true);
  Tensor b = random_tensor({channels}, 3, true);
  for (auto _ : state) {
    Graph g;
    const auto y = g.conv1d_same(g.parameter(x), g.parameter(w), g.parameter(b));
    g.backward(g.weighted_sum(y, Tensor::zeros(g.value(y).shape)));
    benchmark::DoNotOptimize(g.grad(y).data());
  }
}
BENCHMARK(BM_Conv1d)->Args({16, 25})->Args({64, 51});

// One forward and backward pass of the multi-step loss on a batch of windows.
void BM_ScaeLossStep(benchmark::State& state) {
  const int hidden = static_cast<int>(state.range(0)), kernel = static_cast<int>(state.range(1));
  ScaeModel model(bench_config(hidden, kernel), 1);
  const ScaeConfig& c = model.config();
  const int batch = 16;
  WindowBatch wb{random_tensor({batch, c.state_dim, c.window}, 4),
                 random_tensor({(c.horizon + 1) * batch, c.state_dim, c.window}, 5), c.horizon};
  for (auto _ : state) {
    Graph g;
    const LossNodes loss = scae_loss_graph(g, model, wb, 1.0, BnMode::kTrain);
    g.backward(loss.total);
    benchmark::DoNotOptimize(g.value(loss.total).data.data());
  }
}
BENCHMARK(BM_ScaeLossStep)->Args({16, 25})->Args({64, 51})->Unit(benchmark::kMillisecond);

void BM_SimStepPd(benchmark::State& state) {
  const SimConfig sim;
  SimState s = SimState::rest(sim);
  Eigen::VectorXd target = Eigen::VectorXd::Constant(sim.links, 0.3);
  int k = 0;
  for (auto _ : state) {
    target(0) = (k++ % 100 < 50) ? 0.3 : -0.3;
    s = step_pd(sim, s, target);
    benchmark::DoNotOptimize(s.q.data());
  }
}
BENCHMARK(BM_SimStepPd);

// Newest decoded state for a batch of latent rows, as used once per control step.
void BM_DecodeNewest(benchmark::State& state) {
  ScaeModel model(bench_config(16, 25), 1);
  const int batch = static_cast<int>(state.range(0));
  const Tensor x = random_tensor({batch, 6, model.config().window}, 6);
  const LatentTensors params = model.parameterize(model.encode(x));
  for (auto _ : state) {
    Eigen::MatrixXd out = model.decode_newest(params);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_DecodeNewest)->Arg(1)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace mimic

BENCHMARK_MAIN();
