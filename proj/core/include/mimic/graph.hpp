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

#ifndef MIMIC_GRAPH_HPP_
#define MIMIC_GRAPH_HPP_

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "mimic/tensor.hpp"

namespace mimic {

enum class OpKind {
  kConstant,
  kParameter,
  kConv1dSame,
  kBatchNorm,
  kElu,
  kLinear,
  kChannelLinear,
  kAtan2Phase,
  kRealDft,
  kSpectralParams,
  kSinusoid,
  kTakeColumn,
  kMse,
  kAdd,
  kScale,
  kWeightedSum,
};

std::string_view op_name(OpKind kind);

enum class BnMode { kTrain, kEval };

// Running statistics of one batch-norm layer. The learnable scale/shift live
// in separate parameter tensors.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(int channels)
      : running_mean(static_cast<std::size_t>(channels), 0.0),
        running_var(static_cast<std::size_t>(channels), 1.0) {}
};

// Reverse-mode tape over the fixed operator set used by the autoencoder.
//
// Nodes are appended in construction order, so the node list is always a
// topological order and every input id is smaller than its consumer's id.
// Parameter leaves copy the bound tensor's values at bind time; backward()
// accumulates into the bound tensor's grad when it requires one.
class Graph {
 public:
  using NodeId = int;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  NodeId constant(Tensor value);
  NodeId parameter(Tensor& param);

  const Tensor& value(NodeId id) const;
  // Gradient of the last backward() output w.r.t. this node (empty if the node
  // does not participate in differentiation).
  const Buffer& grad(NodeId id) const;
  bool needs_grad(NodeId id) const;
  OpKind kind(NodeId id) const;
  const std::vector<NodeId>& inputs(NodeId id) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // x [B, c_in, H], weight [c_out, c_in, K] (K odd), bias [c_out] -> [B, c_out, H].
  // Cross-correlation with (K-1)/2 zeros of padding on each side.
  NodeId conv1d_same(NodeId x, NodeId weight, NodeId bias);

  // x [B, c, H]; statistics over the batch and time axes per channel. Train
  // mode uses the population variance of the batch and updates `state`.
  NodeId batch_norm(NodeId x, NodeId scale, NodeId shift, BatchNormState& state, BnMode mode);

  NodeId elu(NodeId x);

  // x [..., n], weight [m, n], bias [m] -> [..., m].
  NodeId linear(NodeId x, NodeId weight, NodeId bias);

  // Independent affine map per channel: x [B, c, n], weight [c, m, n],
  // bias [c, m] -> [B, c, m].
  NodeId channel_linear(NodeId x, NodeId weight, NodeId bias);

  // pair [..., 2] holding (y, x) -> phase in cycles, atan2(y, x) / 2pi wrapped
  // into [-0.5, 0.5). Throws ContractError on an exact (0, 0) pair.
  NodeId atan2_phase(NodeId pair);

  // x [..., H] -> unnormalized one-sided spectrum [..., H/2 + 1, 2] of (re, im).
  NodeId real_dft(NodeId x);

  // spectrum [..., K, 2] of a window of `window` samples spaced `dt` apart ->
  // [..., 3] holding (amplitude, frequency in Hz, offset):
  //   offset    = Re(X_0) / H
  //   amplitude = (2 / H) * sqrt(sum_{k>=1} |X_k|^2)
  //   frequency = sum_{k>=1} nu_k |X_k|^2 / sum_{k>=1} |X_k|^2, nu_k = k / (H dt)
  // An AC spectrum at rounding level (relative to the DC bin) yields frequency 0.
  NodeId spectral_params(NodeId spectrum, int window, double dt);

  // phase [B, c] (cycles), params [B, c, 3] as produced by spectral_params,
  // time grid [H] in seconds and time shifts [M] in seconds ->
  // [M * B, c, H] with out[m*B + b, ch, n] =
  //   a * sin(2pi (f * (grid[n] + shift[m]) + phase)) + offset.
  // A shift of i*dt advances the phase by i*f*dt.
  NodeId sinusoid(NodeId phase, NodeId params, std::span<const double> grid,
                  std::span<const double> shifts);

  // x [B, c, H] -> [B, c] taking time index `column`.
  NodeId take_column(NodeId x, int column);

  // Scalar sum_g w_g * mean((a - b)^2 over group g), where the leading axis of
  // a and b is split into weights.size() equal groups. Empty weights mean a
  // single group of weight 1.
  NodeId mse(NodeId a, NodeId b, std::span<const double> group_weights = {});

  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  // Scalar sum_i w_i * a_i.
  NodeId weighted_sum(NodeId a, const Tensor& weights);

  // Runs reverse mode from a scalar node. Throws ContractError otherwise.
  void backward(NodeId output);

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor* bound = nullptr;
    bool needs_grad = false;
    Buffer grad;
    std::function<void(Graph&, NodeId)> backward;
  };

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value,
              std::function<void(Graph&, NodeId)> backward);
  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  // Gradient buffer of an input node, allocated on first use.
  Buffer& grad_buffer(NodeId id);

  std::vector<Node> nodes_;
};

}  // namespace mimic

#endif  // MIMIC_GRAPH_HPP_
