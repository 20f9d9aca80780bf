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

#include "mimic/mlp.hpp"

#include <cmath>

#include "mimic/error.hpp"

namespace mimic {

Mlp::Mlp(int inputs, const std::vector<int>& hidden, int outputs, std::mt19937_64& rng, double output_gain) {
  if (inputs < 1 || outputs < 1) throw ValidationError("mlp: input and output widths must be positive");
  std::vector<int> widths{inputs};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(outputs);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l + 1] < 1) throw ValidationError("mlp: hidden widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd w(widths[l + 1], widths[l]);
    Eigen::VectorXd b(widths[l + 1]);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
    if (l + 2 == widths.size()) {
      w *= output_gain;
      b *= output_gain;
    }
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
  zero_grad();
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (x.rows() != inputs()) {
    throw ShapeError("mlp: expected " + std::to_string(inputs()) + " input rows, got " + std::to_string(x.rows()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < layers(); ++l) {
    if (cache) cache->inputs.push_back(h);
    Eigen::MatrixXd z = weights_[l] * h;
    z.colwise() += biases_[l];
    if (l + 1 == layers()) return z;
    if (cache) cache->pre.push_back(z);
    h = z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  }
  return h;
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dy, Eigen::MatrixXd* dx) {
  Eigen::MatrixXd g = dy;
  for (int l = layers() - 1; l >= 0; --l) {
    dweights_[l].noalias() += g * cache.inputs[static_cast<std::size_t>(l)].transpose();
    dbiases_[l] += g.rowwise().sum();
    if (l == 0 && dx == nullptr) break;
    Eigen::MatrixXd up = weights_[l].transpose() * g;
    if (l == 0) {
      *dx = std::move(up);
      break;
    }
    const Eigen::MatrixXd& pre = cache.pre[static_cast<std::size_t>(l - 1)];
    g = up.cwiseProduct(pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); }));
  }
}

void Mlp::zero_grad() {
  dweights_.resize(weights_.size());
  dbiases_.resize(biases_.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    dweights_[l].setZero(weights_[l].rows(), weights_[l].cols());
    dbiases_[l].setZero(biases_[l].size());
  }
}

std::vector<ParamRef> Mlp::param_refs() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({{weights_[l].data(), static_cast<std::size_t>(weights_[l].size())},
                   {dweights_[l].data(), static_cast<std::size_t>(dweights_[l].size())}});
    out.push_back({{biases_[l].data(), static_cast<std::size_t>(biases_[l].size())},
                   {dbiases_[l].data(), static_cast<std::size_t>(dbiases_[l].size())}});
  }
  return out;
}

bool Mlp::finite() const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
  }
  return true;
}

void Mlp::write(Checkpoint& ck, const std::string& prefix) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Eigen::MatrixXd& w = weights_[l];
    ck.put(prefix + ".w" + std::to_string(l),
           Tensor({static_cast<int>(w.rows()), static_cast<int>(w.cols())}, std::vector<double>(w.data(), w.data() + w.size())));
    ck.put(prefix + ".b" + std::to_string(l),
           Tensor({static_cast<int>(biases_[l].size())}, std::vector<double>(biases_[l].data(), biases_[l].data() + biases_[l].size())));
  }
}

void Mlp::read(const Checkpoint& ck, const std::string& prefix) {
  weights_.clear();
  biases_.clear();
  for (int l = 0; ck.contains(prefix + ".w" + std::to_string(l)); ++l) {
    const Tensor& w = ck.at(prefix + ".w" + std::to_string(l));
    const Tensor& b = ck.at(prefix + ".b" + std::to_string(l));
    if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0)) throw ParseError("mlp " + prefix + ": malformed layer");
    if (!weights_.empty() && weights_.back().rows() != w.dim(1)) throw ParseError("mlp " + prefix + ": layer widths do not chain");
    weights_.push_back(Eigen::Map<const Eigen::MatrixXd>(w.data.data(), w.dim(0), w.dim(1)));
    biases_.push_back(Eigen::Map<const Eigen::VectorXd>(b.data.data(), b.dim(0)));
  }
  if (weights_.empty()) throw ParseError("mlp " + prefix + ": no layers in checkpoint");
  zero_grad();
}

}  // namespace mimic
