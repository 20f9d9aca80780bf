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

#ifndef MIMIC_OPTIM_HPP_
#define MIMIC_OPTIM_HPP_

#include <string>
#include <vector>

#include "mimic/checkpoint.hpp"
#include "mimic/tensor.hpp"

namespace mimic {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // L2 penalty added to the gradient before the moment updates.
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<ParamRef> params, AdamConfig config);

  void step();
  void zero_grad();

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

  // Moments and step count under `prefix` (e.g. "adam.m.3").
  void save_state(Checkpoint& ck, const std::string& prefix) const;
  void load_state(const Checkpoint& ck, const std::string& prefix);

 private:
  std::vector<ParamRef> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

double grad_norm(const std::vector<ParamRef>& params);
bool grads_finite(const std::vector<ParamRef>& params);
// Rescales gradients so that their global norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm);

}  // namespace mimic

#endif  // MIMIC_OPTIM_HPP_
