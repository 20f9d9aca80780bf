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

#include "mimic/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mimic/error.hpp"

namespace mimic {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Lays out x [B, cin, H] as a (cin*K) x (B*H) matrix of shifted copies.
void im2col(const double* x, int batch, int cin, int len, int kernel, RowMat& cols) {
  const int pad = (kernel - 1) / 2;
  cols.setZero(static_cast<Eigen::Index>(cin) * kernel, static_cast<Eigen::Index>(batch) * len);
  for (int ci = 0; ci < cin; ++ci) {
    for (int k = 0; k < kernel; ++k) {
      double* row = cols.row(static_cast<Eigen::Index>(ci) * kernel + k).data();
      const int shift = k - pad;
      const int h_lo = std::max(0, -shift);
      const int h_hi = std::min(len, len - shift);
      for (int b = 0; b < batch; ++b) {
        const double* src = x + (static_cast<std::size_t>(b) * cin + ci) * len;
        double* dst = row + static_cast<std::size_t>(b) * len;
        for (int h = h_lo; h < h_hi; ++h) dst[h] = src[h + shift];
      }
    }
  }
}

void col2im_add(const RowMat& cols, int batch, int cin, int len, int kernel, double* dx) {
  const int pad = (kernel - 1) / 2;
  for (int ci = 0; ci < cin; ++ci) {
    for (int k = 0; k < kernel; ++k) {
      const double* row = cols.row(static_cast<Eigen::Index>(ci) * kernel + k).data();
      const int shift = k - pad;
      const int h_lo = std::max(0, -shift);
      const int h_hi = std::min(len, len - shift);
      for (int b = 0; b < batch; ++b) {
        double* dst = dx + (static_cast<std::size_t>(b) * cin + ci) * len;
        const double* src = row + static_cast<std::size_t>(b) * len;
        for (int h = h_lo; h < h_hi; ++h) dst[h + shift] += src[h];
      }
    }
  }
}

double wrap_cycles(double phase) {
  double w = phase - std::floor(phase + 0.5);
  if (w >= 0.5) w -= 1.0;
  return w;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kConv1dSame: return "conv1d_same";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kElu: return "elu";
    case OpKind::kLinear: return "linear";
    case OpKind::kChannelLinear: return "channel_linear";
    case OpKind::kAtan2Phase: return "atan2_phase";
    case OpKind::kRealDft: return "real_dft";
    case OpKind::kSpectralParams: return "spectral_params";
    case OpKind::kSinusoid: return "sinusoid";
    case OpKind::kTakeColumn: return "take_column";
    case OpKind::kMse: return "mse";
    case OpKind::kAdd: return "add";
    case OpKind::kScale: return "scale";
    case OpKind::kWeightedSum: return "weighted_sum";
  }
  return "unknown";
}

Graph::Node& Graph::node(NodeId id) {
  if (id < 0 || id >= size()) throw ContractError("graph node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id < 0 || id >= size()) throw ContractError("graph node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }
const Buffer& Graph::grad(NodeId id) const { return node(id).grad; }
bool Graph::needs_grad(NodeId id) const { return node(id).needs_grad; }
OpKind Graph::kind(NodeId id) const { return node(id).kind; }
const std::vector<Graph::NodeId>& Graph::inputs(NodeId id) const { return node(id).inputs; }

Buffer& Graph::grad_buffer(NodeId id) {
  Node& n = node(id);
  if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

Graph::NodeId Graph::push(OpKind kind, std::vector<NodeId> inputs, Tensor value,
                          std::function<void(Graph&, NodeId)> backward) {
  Node n;
  n.kind = kind;
  for (NodeId in : inputs) {
    if (in < 0 || in >= size()) throw ContractError("graph input id does not precede consumer");
    n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(in)].needs_grad;
  }
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.value.grad.clear();
  n.value.requires_grad = false;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return size() - 1;
}

Graph::NodeId Graph::constant(Tensor value) {
  return push(OpKind::kConstant, {}, std::move(value), nullptr);
}

Graph::NodeId Graph::parameter(Tensor& param) {
  Node n;
  n.kind = OpKind::kParameter;
  n.value = Tensor(param.shape, param.data);
  n.bound = &param;
  n.needs_grad = param.requires_grad;
  nodes_.push_back(std::move(n));
  return size() - 1;
}

// ---------------------------------------------------------------------------
// conv1d_same

Graph::NodeId Graph::conv1d_same(NodeId x_id, NodeId w_id, NodeId b_id) {
  const Tensor& x = value(x_id);
  const Tensor& w = value(w_id);
  const Tensor& b = value(b_id);
  if (x.rank() != 3) throw ShapeError("conv1d_same input: expected [B, c_in, H], got " + shape_string(x.shape));
  if (w.rank() != 3) throw ShapeError("conv1d_same weight: expected [c_out, c_in, K], got " + shape_string(w.shape));
  const int batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const int cout = w.dim(0), kernel = w.dim(2);
  if (w.dim(1) != cin) {
    throw ShapeError("conv1d_same weight: c_in " + std::to_string(w.dim(1)) +
                     " does not match input channels " + std::to_string(cin));
  }
  if (kernel % 2 == 0) throw ShapeError("conv1d_same weight: kernel size must be odd");
  expect_shape(b, {cout}, "conv1d_same bias");

  // One GEMM per sample keeps every output independent of the batch size.
  const std::size_t in_stride = static_cast<std::size_t>(cin) * len, out_stride = static_cast<std::size_t>(cout) * len;
  ConstMapRow wm(w.data.data(), cout, static_cast<Eigen::Index>(cin) * kernel);
  Tensor out({batch, cout, len});
  RowMat cols;
  for (int bi = 0; bi < batch; ++bi) {
    im2col(x.data.data() + bi * in_stride, 1, cin, len, kernel, cols);
    MapRow y(out.data.data() + bi * out_stride, cout, len);
    y.noalias() = wm * cols;
    for (int co = 0; co < cout; ++co) y.row(co).array() += b.data[static_cast<std::size_t>(co)];
  }

  auto backward = [=](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    const Tensor& xv = g.value(x_id);
    const Tensor& wv = g.value(w_id);
    const bool need_x = g.needs_grad(x_id), need_w = g.needs_grad(w_id), need_b = g.needs_grad(b_id);
    ConstMapRow wmv(wv.data.data(), cout, static_cast<Eigen::Index>(cin) * kernel);
    RowMat cols_b, dcols;
    for (int bi = 0; bi < batch; ++bi) {
      ConstMapRow dy(dout.data() + bi * out_stride, cout, len);
      if (need_w) {
        im2col(xv.data.data() + bi * in_stride, 1, cin, len, kernel, cols_b);
        MapRow dw(g.grad_buffer(w_id).data(), cout, static_cast<Eigen::Index>(cin) * kernel);
        dw.noalias() += dy * cols_b.transpose();
      }
      if (need_b) {
        Buffer& db = g.grad_buffer(b_id);
        for (int co = 0; co < cout; ++co) db[static_cast<std::size_t>(co)] += dy.row(co).sum();
      }
      if (need_x) {
        dcols.noalias() = wmv.transpose() * dy;
        col2im_add(dcols, 1, cin, len, kernel, g.grad_buffer(x_id).data() + bi * in_stride);
      }
    }
  };
  return push(OpKind::kConv1dSame, {x_id, w_id, b_id}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// batch_norm

Graph::NodeId Graph::batch_norm(NodeId x_id, NodeId scale_id, NodeId shift_id,
                                BatchNormState& state, BnMode mode) {
  const Tensor& x = value(x_id);
  if (x.rank() != 3) throw ShapeError("batch_norm input: expected [B, c, H], got " + shape_string(x.shape));
  const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  expect_shape(value(scale_id), {ch}, "batch_norm scale");
  expect_shape(value(shift_id), {ch}, "batch_norm shift");
  if (state.running_mean.size() != static_cast<std::size_t>(ch) ||
      state.running_var.size() != static_cast<std::size_t>(ch)) {
    throw ShapeError("batch_norm running statistics do not match channel count " + std::to_string(ch));
  }
  if (mode == BnMode::kTrain && batch < 2) {
    throw ContractError("batch_norm in train mode needs a batch of at least 2");
  }
  const double count = static_cast<double>(batch) * len;
  Buffer mean(static_cast<std::size_t>(ch)), inv_std(static_cast<std::size_t>(ch));
  if (mode == BnMode::kTrain) {
    for (int c = 0; c < ch; ++c) {
      double s = 0.0;
      for (int b = 0; b < batch; ++b) {
        const double* p = x.data.data() + (static_cast<std::size_t>(b) * ch + c) * len;
        for (int h = 0; h < len; ++h) s += p[h];
      }
      const double m = s / count;
      double v = 0.0;
      for (int b = 0; b < batch; ++b) {
        const double* p = x.data.data() + (static_cast<std::size_t>(b) * ch + c) * len;
        for (int h = 0; h < len; ++h) v += (p[h] - m) * (p[h] - m);
      }
      v /= count;
      mean[static_cast<std::size_t>(c)] = m;
      inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(v + state.eps);
      auto& rm = state.running_mean[static_cast<std::size_t>(c)];
      auto& rv = state.running_var[static_cast<std::size_t>(c)];
      rm = (1.0 - state.momentum) * rm + state.momentum * m;
      rv = (1.0 - state.momentum) * rv + state.momentum * v;
    }
  } else {
    for (int c = 0; c < ch; ++c) {
      mean[static_cast<std::size_t>(c)] = state.running_mean[static_cast<std::size_t>(c)];
      inv_std[static_cast<std::size_t>(c)] =
          1.0 / std::sqrt(state.running_var[static_cast<std::size_t>(c)] + state.eps);
    }
  }

  const Tensor& gamma = value(scale_id);
  const Tensor& beta = value(shift_id);
  Tensor out(x.shape);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * len;
      const double m = mean[static_cast<std::size_t>(c)], is = inv_std[static_cast<std::size_t>(c)];
      const double gm = gamma.data[static_cast<std::size_t>(c)], bt = beta.data[static_cast<std::size_t>(c)];
      for (int h = 0; h < len; ++h) out.data[off + h] = gm * (x.data[off + h] - m) * is + bt;
    }
  }

  const bool train = mode == BnMode::kTrain;
  auto backward = [=](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    const Tensor& xv = g.value(x_id);
    const Tensor& gv = g.value(scale_id);
    const bool need_x = g.needs_grad(x_id);
    Buffer* dgamma = g.needs_grad(scale_id) ? &g.grad_buffer(scale_id) : nullptr;
    Buffer* dbeta = g.needs_grad(shift_id) ? &g.grad_buffer(shift_id) : nullptr;
    Buffer* dx = need_x ? &g.grad_buffer(x_id) : nullptr;
    for (int c = 0; c < ch; ++c) {
      const double m = mean[static_cast<std::size_t>(c)], is = inv_std[static_cast<std::size_t>(c)];
      const double gm = gv.data[static_cast<std::size_t>(c)];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < batch; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * len;
        for (int h = 0; h < len; ++h) {
          const double xhat = (xv.data[off + h] - m) * is;
          sum_dy += dout[off + h];
          sum_dy_xhat += dout[off + h] * xhat;
        }
      }
      if (dgamma) (*dgamma)[static_cast<std::size_t>(c)] += sum_dy_xhat;
      if (dbeta) (*dbeta)[static_cast<std::size_t>(c)] += sum_dy;
      if (!dx) continue;
      for (int b = 0; b < batch; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * len;
        for (int h = 0; h < len; ++h) {
          if (train) {
            const double xhat = (xv.data[off + h] - m) * is;
            (*dx)[off + h] += gm * is * (dout[off + h] - sum_dy / count - xhat * sum_dy_xhat / count);
          } else {
            (*dx)[off + h] += gm * is * dout[off + h];
          }
        }
      }
    }
  };
  return push(OpKind::kBatchNorm, {x_id, scale_id, shift_id}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// elementwise

Graph::NodeId Graph::elu(NodeId x_id) {
  const Tensor& x = value(x_id);
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.data[i];
    out.data[i] = v > 0.0 ? v : std::expm1(v);
  }
  auto backward = [=](Graph& g, NodeId self) {
    const Node& me = g.node(self);
    const Tensor& xv = g.value(x_id);
    Buffer& dx = g.grad_buffer(x_id);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double slope = xv.data[i] > 0.0 ? 1.0 : me.value.data[i] + 1.0;
      dx[i] += slope * me.grad[i];
    }
  };
  return push(OpKind::kElu, {x_id}, std::move(out), backward);
}

Graph::NodeId Graph::add(NodeId a_id, NodeId b_id) {
  const Tensor& a = value(a_id);
  const Tensor& b = value(b_id);
  if (a.shape != b.shape) {
    throw ShapeError("add: operand shapes " + shape_string(a.shape) + " and " + shape_string(b.shape) + " differ");
  }
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] + b.data[i];
  auto backward = [=](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    for (NodeId in : {a_id, b_id}) {
      if (!g.needs_grad(in)) continue;
      Buffer& d = g.grad_buffer(in);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i];
    }
  };
  return push(OpKind::kAdd, {a_id, b_id}, std::move(out), backward);
}

Graph::NodeId Graph::scale(NodeId a_id, double factor) {
  const Tensor& a = value(a_id);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = factor * a.data[i];
  auto backward = [=](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    Buffer& d = g.grad_buffer(a_id);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * dout[i];
  };
  return push(OpKind::kScale, {a_id}, std::move(out), backward);
}

Graph::NodeId Graph::weighted_sum(NodeId a_id, const Tensor& weights) {
  const Tensor& a = value(a_id);
  if (weights.numel() != a.numel()) {
    throw ShapeError("weighted_sum weights: expected " + std::to_string(a.numel()) + " values, got " +
                     std::to_string(weights.numel()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += weights.data[i] * a.data[i];
  Buffer w = weights.data;
  auto backward = [=](Graph& g, NodeId self) {
    const double dout = g.node(self).grad[0];
    Buffer& d = g.grad_buffer(a_id);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += w[i] * dout;
  };
  return push(OpKind::kWeightedSum, {a_id}, Tensor({1}, {s}), backward);
}

// ---------------------------------------------------------------------------
// linear maps

Graph::NodeId Graph::linear(NodeId x_id, NodeId w_id, NodeId b_id) {
  const Tensor& x = value(x_id);
  const Tensor& w = value(w_id);
  if (w.rank() != 2) throw ShapeError("linear weight: expected [m, n], got " + shape_string(w.shape));
  const int m = w.dim(0), n = w.dim(1);
  if (x.rank() < 1 || x.shape.back() != n) {
    throw ShapeError("linear input: last extent must be " + std::to_string(n) + ", got " + shape_string(x.shape));
  }
  expect_shape(value(b_id), {m}, "linear bias");
  const Eigen::Index rows = static_cast<Eigen::Index>(x.numel() / static_cast<std::size_t>(n));
  Shape out_shape = x.shape;
  out_shape.back() = m;
  Tensor out(out_shape);
  ConstMapRow xm(x.data.data(), rows, n);
  ConstMapRow wm(w.data.data(), m, n);
  MapRow om(out.data.data(), rows, m);
  om.noalias() = xm * wm.transpose();
  const Eigen::Map<const Eigen::RowVectorXd> bv(value(b_id).data.data(), m);
  om.rowwise() += bv;

  auto backward = [=](Graph& g, NodeId self) {
    ConstMapRow dout(g.node(self).grad.data(), rows, m);
    if (g.needs_grad(w_id)) {
      ConstMapRow xv(g.value(x_id).data.data(), rows, n);
      MapRow dw(g.grad_buffer(w_id).data(), m, n);
      dw.noalias() += dout.transpose() * xv;
    }
    if (g.needs_grad(b_id)) {
      Eigen::Map<Eigen::RowVectorXd> db(g.grad_buffer(b_id).data(), m);
      db += dout.colwise().sum();
    }
    if (g.needs_grad(x_id)) {
      ConstMapRow wv(g.value(w_id).data.data(), m, n);
      MapRow dx(g.grad_buffer(x_id).data(), rows, n);
      dx.noalias() += dout * wv;
    }
  };
  return push(OpKind::kLinear, {x_id, w_id, b_id}, std::move(out), backward);
}

Graph::NodeId Graph::channel_linear(NodeId x_id, NodeId w_id, NodeId b_id) {
  const Tensor& x = value(x_id);
  const Tensor& w = value(w_id);
  if (x.rank() != 3) throw ShapeError("channel_linear input: expected [B, c, n], got " + shape_string(x.shape));
  if (w.rank() != 3) throw ShapeError("channel_linear weight: expected [c, m, n], got " + shape_string(w.shape));
  const int batch = x.dim(0), ch = x.dim(1), n = x.dim(2);
  const int m = w.dim(1);
  if (w.dim(0) != ch || w.dim(2) != n) {
    throw ShapeError("channel_linear weight: expected [" + std::to_string(ch) + ", m, " + std::to_string(n) +
                     "], got " + shape_string(w.shape));
  }
  expect_shape(value(b_id), {ch, m}, "channel_linear bias");
  const Tensor& bias = value(b_id);
  Tensor out({batch, ch, m});
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < ch; ++c) {
      const double* xp = x.data.data() + (static_cast<std::size_t>(b) * ch + c) * n;
      for (int o = 0; o < m; ++o) {
        const double* wp = w.data.data() + (static_cast<std::size_t>(c) * m + o) * n;
        double s = bias.data[static_cast<std::size_t>(c) * m + o];
        for (int i = 0; i < n; ++i) s += wp[i] * xp[i];
        out.data[(static_cast<std::size_t>(b) * ch + c) * m + o] = s;
      }
    }
  }
  auto backward = [=](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    const Tensor& xv = g.value(x_id);
    const Tensor& wv = g.value(w_id);
    Buffer* dx = g.needs_grad(x_id) ? &g.grad_buffer(x_id) : nullptr;
    Buffer* dw = g.needs_grad(w_id) ? &g.grad_buffer(w_id) : nullptr;
    Buffer* db = g.needs_grad(b_id) ? &g.grad_buffer(b_id) : nullptr;
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < ch; ++c) {
        const std::size_t xoff = (static_cast<std::size_t>(b) * ch + c) * n;
        for (int o = 0; o < m; ++o) {
          const double d = dout[(static_cast<std::size_t>(b) * ch + c) * m + o];
          const std::size_t woff = (static_cast<std::size_t>(c) * m + o) * n;
          if (db) (*db)[static_cast<std::size_t>(c) * m + o] += d;
          if (dw) {
            for (int i = 0; i < n; ++i) (*dw)[woff + i] += d * xv.data[xoff + i];
          }
          if (dx) {
            for (int i = 0; i < n; ++i) (*dx)[xoff + i] += d * wv.data[woff + i];
          }
        }
      }
    }
  };
  return push(OpKind::kChannelLinear, {x_id, w_id, b_id}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// phase, spectrum and sinusoid

Graph::NodeId Graph::atan2_phase(NodeId pair_id) {
  const Tensor& p = value(pair_id);
  if (p.rank() < 1 || p.shape.back() != 2) {
    throw ShapeError("atan2_phase input: last extent must be 2, got " + shape_string(p.shape));
  }
  Shape out_shape(p.shape.begin(), p.shape.end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  const std::size_t count = p.numel() / 2;
  for (std::size_t i = 0; i < count; ++i) {
    const double y = p.data[2 * i], x = p.data[2 * i + 1];
    if (y == 0.0 && x == 0.0) {
      throw ContractError("atan2_phase: degenerate (0, 0) pair at index " + std::to_string(i));
    }
    out.data[i] = wrap_cycles(std::atan2(y, x) / kTwoPi);
  }
  auto backward = [=](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    const Tensor& pv = g.value(pair_id);
    Buffer& dp = g.grad_buffer(pair_id);
    for (std::size_t i = 0; i < count; ++i) {
      const double y = pv.data[2 * i], x = pv.data[2 * i + 1];
      const double r2 = x * x + y * y;
      dp[2 * i] += dout[i] * x / (kTwoPi * r2);
      dp[2 * i + 1] += dout[i] * -y / (kTwoPi * r2);
    }
  };
  return push(OpKind::kAtan2Phase, {pair_id}, std::move(out), backward);
}

Graph::NodeId Graph::real_dft(NodeId x_id) {
  const Tensor& x = value(x_id);
  if (x.rank() < 1) throw ShapeError("real_dft input must have at least one axis");
  const int len = x.shape.back();
  const int bins = len / 2 + 1;
  const std::size_t rows = x.numel() / static_cast<std::size_t>(len);
  // cos/sin tables of 2pi k n / H
  Buffer cos_t(static_cast<std::size_t>(bins) * len), sin_t(cos_t.size());
  for (int k = 0; k < bins; ++k) {
    for (int n = 0; n < len; ++n) {
      const long kn = (static_cast<long>(k) * n) % len;
      const double ang = kTwoPi * static_cast<double>(kn) / len;
      cos_t[static_cast<std::size_t>(k) * len + n] = std::cos(ang);
      sin_t[static_cast<std::size_t>(k) * len + n] = std::sin(ang);
    }
  }
  Shape out_shape = x.shape;
  out_shape.back() = bins;
  out_shape.push_back(2);
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xp = x.data.data() + r * len;
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      const double* ct = cos_t.data() + static_cast<std::size_t>(k) * len;
      const double* st = sin_t.data() + static_cast<std::size_t>(k) * len;
      for (int n = 0; n < len; ++n) {
        re += xp[n] * ct[n];
        im -= xp[n] * st[n];
      }
      out.data[(r * bins + k) * 2] = re;
      out.data[(r * bins + k) * 2 + 1] = im;
    }
  }
  auto backward = [=, cos_t = std::move(cos_t), sin_t = std::move(sin_t)](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    Buffer& dx = g.grad_buffer(x_id);
    for (std::size_t r = 0; r < rows; ++r) {
      double* dxp = dx.data() + r * len;
      for (int k = 0; k < bins; ++k) {
        const double dre = dout[(r * bins + k) * 2];
        const double dim = dout[(r * bins + k) * 2 + 1];
        const double* ct = cos_t.data() + static_cast<std::size_t>(k) * len;
        const double* st = sin_t.data() + static_cast<std::size_t>(k) * len;
        for (int n = 0; n < len; ++n) dxp[n] += dre * ct[n] - dim * st[n];
      }
    }
  };
  return push(OpKind::kRealDft, {x_id}, std::move(out), backward);
}

Graph::NodeId Graph::spectral_params(NodeId spec_id, int window, double dt) {
  const Tensor& s = value(spec_id);
  if (s.rank() < 2 || s.shape.back() != 2) {
    throw ShapeError("spectral_params input: expected [..., K, 2], got " + shape_string(s.shape));
  }
  const int bins = s.shape[s.shape.size() - 2];
  if (bins != window / 2 + 1) {
    throw ShapeError("spectral_params input: " + std::to_string(bins) + " bins do not match window " +
                     std::to_string(window));
  }
  if (!(dt > 0.0)) throw ContractError("spectral_params: dt must be positive");
  const std::size_t rows = s.numel() / (static_cast<std::size_t>(bins) * 2);
  const double inv_len = 1.0 / window;
  const double df = 1.0 / (window * dt);
  Shape out_shape(s.shape.begin(), s.shape.end() - 2);
  out_shape.push_back(3);
  Tensor out(out_shape);
  Buffer power(rows), sqrt_power(rows);
  std::vector<char> silent(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* sp = s.data.data() + r * bins * 2;
    double p = 0.0, weighted = 0.0;
    for (int k = 1; k < bins; ++k) {
      const double pk = sp[2 * k] * sp[2 * k] + sp[2 * k + 1] * sp[2 * k + 1];
      p += pk;
      weighted += k * df * pk;
    }
    // rounding leaves ~1e-16 relative energy in the AC bins of a constant row
    silent[r] = p <= 1e-24 * (1.0 + sp[0] * sp[0]) ? 1 : 0;
    power[r] = p;
    sqrt_power[r] = std::sqrt(p);
    out.data[r * 3 + 0] = 2.0 * inv_len * sqrt_power[r];
    out.data[r * 3 + 1] = silent[r] ? 0.0 : weighted / p;
    out.data[r * 3 + 2] = sp[0] * inv_len;
  }
  auto backward = [=, power = std::move(power), sqrt_power = std::move(sqrt_power),
                   silent = std::move(silent)](Graph& g, NodeId self) {
    const Node& me = g.node(self);
    const Buffer& dout = me.grad;
    const Tensor& sv = g.value(spec_id);
    Buffer& ds = g.grad_buffer(spec_id);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* sp = sv.data.data() + r * bins * 2;
      double* dsp = ds.data() + r * bins * 2;
      const double da = dout[r * 3 + 0], dfreq = dout[r * 3 + 1], doff = dout[r * 3 + 2];
      dsp[0] += doff * inv_len;
      if (silent[r]) continue;
      const double freq = me.value.data[r * 3 + 1];
      const double amp_scale = da * 2.0 * inv_len / sqrt_power[r];
      for (int k = 1; k < bins; ++k) {
        const double fscale = dfreq * 2.0 * (k * df - freq) / power[r];
        dsp[2 * k] += (amp_scale + fscale) * sp[2 * k];
        dsp[2 * k + 1] += (amp_scale + fscale) * sp[2 * k + 1];
      }
    }
  };
  return push(OpKind::kSpectralParams, {spec_id}, std::move(out), backward);
}

Graph::NodeId Graph::sinusoid(NodeId phase_id, NodeId params_id, std::span<const double> grid_in,
                              std::span<const double> shifts_in) {
  const Tensor& ph = value(phase_id);
  const Tensor& pr = value(params_id);
  if (ph.rank() != 2) throw ShapeError("sinusoid phase: expected [B, c], got " + shape_string(ph.shape));
  const int batch = ph.dim(0), ch = ph.dim(1);
  expect_shape(pr, {batch, ch, 3}, "sinusoid params");
  if (shifts_in.empty()) throw ContractError("sinusoid: at least one time shift is required");
  Buffer grid(grid_in.begin(), grid_in.end());
  Buffer shifts(shifts_in.begin(), shifts_in.end());
  const int len = static_cast<int>(grid.size());
  const int steps = static_cast<int>(shifts.size());
  Tensor out({steps * batch, ch, len});
  for (int m = 0; m < steps; ++m) {
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < ch; ++c) {
        const std::size_t pi = static_cast<std::size_t>(b) * ch + c;
        const double amp = pr.data[pi * 3], freq = pr.data[pi * 3 + 1], off = pr.data[pi * 3 + 2];
        const double phase = ph.data[pi];
        double* dst = out.data.data() + ((static_cast<std::size_t>(m) * batch + b) * ch + c) * len;
        for (int n = 0; n < len; ++n) {
          dst[n] = amp * std::sin(kTwoPi * (freq * (grid[static_cast<std::size_t>(n)] + shifts[static_cast<std::size_t>(m)]) + phase)) + off;
        }
      }
    }
  }
  auto backward = [=, grid = std::move(grid), shifts = std::move(shifts)](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    const Tensor& phv = g.value(phase_id);
    const Tensor& prv = g.value(params_id);
    Buffer* dph = g.needs_grad(phase_id) ? &g.grad_buffer(phase_id) : nullptr;
    Buffer* dpr = g.needs_grad(params_id) ? &g.grad_buffer(params_id) : nullptr;
    for (int m = 0; m < steps; ++m) {
      for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < ch; ++c) {
          const std::size_t pi = static_cast<std::size_t>(b) * ch + c;
          const double amp = prv.data[pi * 3], freq = prv.data[pi * 3 + 1];
          const double phase = phv.data[pi];
          const double* d = dout.data() + ((static_cast<std::size_t>(m) * batch + b) * ch + c) * len;
          double g_amp = 0.0, g_freq = 0.0, g_off = 0.0, g_phase = 0.0;
          for (int n = 0; n < len; ++n) {
            const double t = grid[static_cast<std::size_t>(n)] + shifts[static_cast<std::size_t>(m)];
            const double u = kTwoPi * (freq * t + phase);
            const double cu = std::cos(u);
            g_amp += d[n] * std::sin(u);
            g_off += d[n];
            g_freq += d[n] * amp * cu * kTwoPi * t;
            g_phase += d[n] * amp * cu * kTwoPi;
          }
          if (dpr) {
            (*dpr)[pi * 3] += g_amp;
            (*dpr)[pi * 3 + 1] += g_freq;
            (*dpr)[pi * 3 + 2] += g_off;
          }
          if (dph) (*dph)[pi] += g_phase;
        }
      }
    }
  };
  return push(OpKind::kSinusoid, {phase_id, params_id}, std::move(out), backward);
}

Graph::NodeId Graph::take_column(NodeId x_id, int column) {
  const Tensor& x = value(x_id);
  if (x.rank() != 3) throw ShapeError("take_column input: expected [B, c, H], got " + shape_string(x.shape));
  const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (column < 0 || column >= len) throw ContractError("take_column: column out of range");
  Tensor out({batch, ch});
  for (std::size_t r = 0; r < out.numel(); ++r) out.data[r] = x.data[r * len + static_cast<std::size_t>(column)];
  auto backward = [=](Graph& g, NodeId self) {
    const Buffer& dout = g.node(self).grad;
    Buffer& dx = g.grad_buffer(x_id);
    for (std::size_t r = 0; r < dout.size(); ++r) dx[r * len + static_cast<std::size_t>(column)] += dout[r];
  };
  return push(OpKind::kTakeColumn, {x_id}, std::move(out), backward);
}

Graph::NodeId Graph::mse(NodeId a_id, NodeId b_id, std::span<const double> weights_in) {
  const Tensor& a = value(a_id);
  const Tensor& b = value(b_id);
  if (a.shape != b.shape) {
    throw ShapeError("mse: operand shapes " + shape_string(a.shape) + " and " + shape_string(b.shape) + " differ");
  }
  Buffer weights(weights_in.begin(), weights_in.end());
  if (weights.empty()) weights.push_back(1.0);
  const std::size_t groups = weights.size();
  if (a.rank() < 1 || a.dim(0) % static_cast<int>(groups) != 0) {
    throw ShapeError("mse: leading extent of " + shape_string(a.shape) + " not divisible into " +
                     std::to_string(groups) + " groups");
  }
  const std::size_t per_group = a.numel() / groups;
  double loss = 0.0;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double s = 0.0;
    for (std::size_t i = gi * per_group; i < (gi + 1) * per_group; ++i) {
      const double d = a.data[i] - b.data[i];
      s += d * d;
    }
    loss += weights[gi] * s / static_cast<double>(per_group);
  }
  auto backward = [=, weights = std::move(weights)](Graph& g, NodeId self) {
    const double dout = g.node(self).grad[0];
    const Tensor& av = g.value(a_id);
    const Tensor& bv = g.value(b_id);
    Buffer* da = g.needs_grad(a_id) ? &g.grad_buffer(a_id) : nullptr;
    Buffer* db = g.needs_grad(b_id) ? &g.grad_buffer(b_id) : nullptr;
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const double k = dout * 2.0 * weights[gi] / static_cast<double>(per_group);
      for (std::size_t i = gi * per_group; i < (gi + 1) * per_group; ++i) {
        const double d = k * (av.data[i] - bv.data[i]);
        if (da) (*da)[i] += d;
        if (db) (*db)[i] -= d;
      }
    }
  };
  return push(OpKind::kMse, {a_id, b_id}, Tensor({1}, {loss}), backward);
}

// ---------------------------------------------------------------------------

void Graph::backward(NodeId output) {
  Node& out = node(output);
  if (out.value.numel() != 1) {
    throw ContractError("backward needs a scalar output, got shape " + shape_string(out.value.shape));
  }
  for (Node& n : nodes_) n.grad.clear();
  if (!out.needs_grad) return;
  out.grad.assign(1, 1.0);
  for (NodeId id = output; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.kind != OpKind::kParameter || n.bound == nullptr || !n.bound->requires_grad || n.grad.empty()) continue;
    Buffer& target = n.bound->grad;
    if (target.size() != n.grad.size()) target.assign(n.grad.size(), 0.0);
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += n.grad[i];
  }
}

}  // namespace mimic
