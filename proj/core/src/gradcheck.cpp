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

#include "mimic/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mimic/error.hpp"

namespace mimic {
namespace {

double evaluate(const ScalarForward& forward) {
  Graph g;
  const Graph::NodeId out = forward(g);
  const Tensor& v = g.value(out);
  if (v.numel() != 1) throw ContractError("check_gradients: forward output is not a scalar");
  return v.data[0];
}

}  // namespace

GradCheckReport check_gradients(const ScalarForward& forward, std::span<const NamedParam> params,
                                const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ContractError("check_gradients: eps must be positive");
  for (const NamedParam& p : params) {
    if (p.tensor == nullptr) throw ContractError("check_gradients: null tensor for " + p.name);
    for (double v : p.tensor->data) {
      if (!std::isfinite(v)) throw ContractError("check_gradients: non-finite value in " + p.name);
    }
  }

  for (const NamedParam& p : params) {
    if (p.tensor->requires_grad) p.tensor->zero_grad();
  }
  {
    Graph g;
    const Graph::NodeId out = forward(g);
    if (g.value(out).numel() != 1) throw ContractError("check_gradients: forward output is not a scalar");
    g.backward(out);
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (const NamedParam& p : params) {
    Tensor& t = *p.tensor;
    if (!t.requires_grad) continue;
    report.params_checked.push_back(p.name);
    std::vector<std::size_t> indices(t.numel());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_entries_per_param > 0 && indices.size() > options.max_entries_per_param) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_entries_per_param);
      std::sort(indices.begin(), indices.end());
    }
    const Buffer analytic = t.grad;
    for (std::size_t i : indices) {
      const double saved = t.data[i];
      t.data[i] = saved + options.eps;
      const double up = evaluate(forward);
      t.data[i] = saved - options.eps;
      const double down = evaluate(forward);
      t.data[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel >= report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = {p.name, i, a, numeric, rel};
      }
    }
  }
  report.pass = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace mimic
