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

#ifndef MIMIC_GRADCHECK_HPP_
#define MIMIC_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mimic/graph.hpp"

namespace mimic {

struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Relative errors use max(|analytic|, |numeric|, abs_floor) as denominator.
  double abs_floor = 1e-6;
  // 0 checks every entry; otherwise a seeded random subset per tensor.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = true;
  std::size_t entries_checked = 0;
  std::vector<std::string> params_checked;  // frozen tensors are skipped
  GradCheckEntry worst;
};

// Builds the graph for one evaluation and returns the scalar output node.
// Must bind every checked tensor through Graph::parameter so perturbations are
// seen by the next evaluation.
using ScalarForward = std::function<Graph::NodeId(Graph&)>;

// Compares reverse-mode gradients with central finite differences for every
// tensor in `params` that requires a gradient.
GradCheckReport check_gradients(const ScalarForward& forward, std::span<const NamedParam> params,
                                const GradCheckOptions& options = {});

}  // namespace mimic

#endif  // MIMIC_GRADCHECK_HPP_
