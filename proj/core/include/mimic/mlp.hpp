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

#ifndef MIMIC_MLP_HPP_
#define MIMIC_MLP_HPP_

#include <Eigen/Core>
#include <random>
#include <string>
#include <vector>

#include "mimic/checkpoint.hpp"
#include "mimic/tensor.hpp"

namespace mimic {

// Fully connected network with ELU hidden activations and a linear output.
// Batches are column-major: one sample per column.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input of every layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of every hidden layer
  };

  Mlp() = default;
  // Weights uniform in +-1/sqrt(fan_in); the output layer is scaled by `output_gain`.
  Mlp(int inputs, const std::vector<int>& hidden, int outputs, std::mt19937_64& rng, double output_gain = 1.0);

  int inputs() const { return weights_.empty() ? 0 : static_cast<int>(weights_.front().cols()); }
  int outputs() const { return weights_.empty() ? 0 : static_cast<int>(weights_.back().rows()); }
  int layers() const { return static_cast<int>(weights_.size()); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients for upstream gradient `dy` ([outputs, B]).
  // Returns the gradient with respect to the input when `dx` is non-null.
  void backward(const Cache& cache, const Eigen::MatrixXd& dy, Eigen::MatrixXd* dx = nullptr);

  void zero_grad();
  std::vector<ParamRef> param_refs();
  bool finite() const;

  void write(Checkpoint& ck, const std::string& prefix) const;
  void read(const Checkpoint& ck, const std::string& prefix);

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  std::vector<Eigen::MatrixXd>& weight_grads() { return dweights_; }
  std::vector<Eigen::VectorXd>& bias_grads() { return dbiases_; }

 private:
  std::vector<Eigen::MatrixXd> weights_, dweights_;
  std::vector<Eigen::VectorXd> biases_, dbiases_;
};

}  // namespace mimic

#endif  // MIMIC_MLP_HPP_
