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

#include "mimic/optim.hpp"

#include <cmath>

#include "mimic/error.hpp"

namespace mimic {

Adam::Adam(std::vector<ParamRef> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const ParamRef& p : params_) {
    if (p.value.size() != p.grad.size()) throw ContractError("Adam: parameter without a gradient buffer");
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double step_size = config_.lr / c1;
  const double inv_sqrt_c2 = 1.0 / std::sqrt(c2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const ParamRef& p = params_[k];
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] + config_.weight_decay * p.value[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (const ParamRef& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void Adam::save_state(Checkpoint& ck, const std::string& prefix) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ck.put(prefix + ".m." + std::to_string(k), m_[k]);
    ck.put(prefix + ".v." + std::to_string(k), v_[k]);
  }
  ck.put(prefix + ".t", std::vector<double>{static_cast<double>(t_)});
  ck.put(prefix + ".lr", std::vector<double>{config_.lr});
}

void Adam::load_state(const Checkpoint& ck, const std::string& prefix) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ck.restore(prefix + ".m." + std::to_string(k), m_[k]);
    ck.restore(prefix + ".v." + std::to_string(k), v_[k]);
  }
  t_ = static_cast<long>(ck.at(prefix + ".t").data.at(0));
  config_.lr = ck.at(prefix + ".lr").data.at(0);
}

double grad_norm(const std::vector<ParamRef>& params) {
  double s = 0.0;
  for (const ParamRef& p : params) {
    for (double g : p.grad) s += g * g;
  }
  return std::sqrt(s);
}

bool grads_finite(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    for (double g : p.grad) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const ParamRef& p : params) {
      for (double& g : p.grad) g *= s;
    }
  }
  return norm;
}

}  // namespace mimic
