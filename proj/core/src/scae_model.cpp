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

#include "mimic/scae_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mimic/error.hpp"

namespace mimic {

void ScaeConfig::validate() const {
  if (state_dim < 2) throw ValidationError("scae: state_dim must be >= 2");
  if (latent_channels < 1) throw ValidationError("scae: latent_channels must be >= 1");
  if (window < 3 || window % 2 == 0) throw ValidationError("scae: window must be odd and >= 3");
  if (!(dt > 0.0)) throw ValidationError("scae: dt must be positive");
  if (horizon < 0) throw ValidationError("scae: horizon must be >= 0");
  if (!(alpha > 0.0)) throw ValidationError("scae: alpha must be positive");
  if (beta < 0.0) throw ValidationError("scae: beta must be >= 0");
  if (hidden < 1) throw ValidationError("scae: hidden must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ValidationError("scae: kernel must be odd");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ValidationError("scae: bn_momentum must be in (0, 1]");
}

void ScaeConfig::write(KvDocument& doc, const std::string& section) const {
  doc.set_int(section, "state_dim", state_dim);
  doc.set_int(section, "latent_channels", latent_channels);
  doc.set_int(section, "window", window);
  doc.set_double(section, "dt", dt);
  doc.set_int(section, "horizon", horizon);
  doc.set_double(section, "alpha", alpha);
  doc.set_double(section, "beta", beta);
  doc.set_int(section, "hidden", hidden);
  doc.set_int(section, "kernel", kernel);
  doc.set_bool(section, "final_decoder_activation", final_decoder_activation);
  doc.set_double(section, "bn_momentum", bn_momentum);
}

ScaeConfig ScaeConfig::read(const KvDocument& doc, const std::string& section) {
  ScaeConfig c;
  c.state_dim = static_cast<int>(doc.get_int(section, "state_dim", c.state_dim));
  c.latent_channels = static_cast<int>(doc.get_int(section, "latent_channels", c.latent_channels));
  c.window = static_cast<int>(doc.get_int(section, "window", c.window));
  c.dt = doc.get_double(section, "dt", c.dt);
  c.horizon = static_cast<int>(doc.get_int(section, "horizon", c.horizon));
  c.alpha = doc.get_double(section, "alpha", c.alpha);
  c.beta = doc.get_double(section, "beta", c.beta);
  c.hidden = static_cast<int>(doc.get_int(section, "hidden", c.hidden));
  c.kernel = static_cast<int>(doc.get_int(section, "kernel", c.kernel));
  c.final_decoder_activation = doc.get_bool(section, "final_decoder_activation", c.final_decoder_activation);
  c.bn_momentum = doc.get_double(section, "bn_momentum", c.bn_momentum);
  c.validate();
  return c;
}

std::vector<double> ScaeConfig::time_grid() const {
  std::vector<double> grid(static_cast<std::size_t>(window));
  const double centre = 0.5 * (window - 1);
  for (int n = 0; n < window; ++n) grid[static_cast<std::size_t>(n)] = (n - centre) * dt;
  return grid;
}

// ---------------------------------------------------------------------------
// latent parameters

double wrap_phase(double cycles) {
  double w = cycles - std::floor(cycles + 0.5);
  if (w >= 0.5) w -= 1.0;
  return w;
}

void LatentParams::validate() const {
  const Eigen::Index c = phase.size();
  if (frequency.size() != c || amplitude.size() != c || offset.size() != c) {
    throw ContractError("latent params: channel counts differ");
  }
  for (Eigen::Index i = 0; i < c; ++i) {
    if (!(amplitude(i) >= 0.0)) throw ContractError("latent params: negative amplitude");
    if (!(frequency(i) >= 0.0)) throw ContractError("latent params: negative frequency");
    if (!(phase(i) >= -0.5 && phase(i) < 0.5)) throw ContractError("latent params: phase not wrapped");
    if (!std::isfinite(offset(i))) throw ContractError("latent params: non-finite offset");
  }
}

LatentParams LatentTensors::row(int b) const {
  const int c = phase.dim(1);
  LatentParams p;
  p.phase.resize(c);
  p.frequency.resize(c);
  p.amplitude.resize(c);
  p.offset.resize(c);
  for (int ch = 0; ch < c; ++ch) {
    const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * 3;
    p.phase(ch) = phase.data[static_cast<std::size_t>(b) * c + ch];
    p.amplitude(ch) = params.data[base + 0];
    p.frequency(ch) = params.data[base + 1];
    p.offset(ch) = params.data[base + 2];
  }
  return p;
}

LatentTensors LatentTensors::stack(std::span<const LatentParams> rows) {
  if (rows.empty()) throw ContractError("latent tensors: empty batch");
  const int b = static_cast<int>(rows.size()), c = rows.front().channels();
  LatentTensors t{Tensor({b, c}), Tensor({b, c, 3})};
  for (int i = 0; i < b; ++i) {
    const LatentParams& p = rows[static_cast<std::size_t>(i)];
    if (p.channels() != c) throw ShapeError("latent tensors: channel counts differ within the batch");
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * 3;
      t.phase.data[static_cast<std::size_t>(i) * c + ch] = p.phase(ch);
      t.params.data[base + 0] = p.amplitude(ch);
      t.params.data[base + 1] = p.frequency(ch);
      t.params.data[base + 2] = p.offset(ch);
    }
  }
  return t;
}

LatentParams advance_phase(const LatentParams& p, double elapsed_seconds) {
  LatentParams out = p;
  for (Eigen::Index i = 0; i < p.phase.size(); ++i) out.phase(i) = wrap_phase(p.phase(i) + p.frequency(i) * elapsed_seconds);
  return out;
}

LatentParams interpolate_params(const LatentParams& a, const LatentParams& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("interpolate: lambda must lie in [0, 1]");
  if (a.channels() != b.channels()) throw ShapeError("interpolate: channel counts differ");
  LatentParams out = a;
  if (lambda == 0.0) return out;
  if (lambda == 1.0) {
    out.frequency = b.frequency;
    out.amplitude = b.amplitude;
    out.offset = b.offset;
    return out;
  }
  out.frequency = (1.0 - lambda) * a.frequency + lambda * b.frequency;
  out.amplitude = (1.0 - lambda) * a.amplitude + lambda * b.amplitude;
  out.offset = (1.0 - lambda) * a.offset + lambda * b.offset;
  return out;
}

// ---------------------------------------------------------------------------
// model

namespace {

void init_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.data) v = u(rng);
}

ConvLayer make_conv(int cout, int cin, int kernel, std::mt19937_64& rng) {
  ConvLayer c{Tensor::zeros({cout, cin, kernel}, true), Tensor::zeros({cout}, true)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * kernel));
  init_uniform(c.weight, bound, rng);
  init_uniform(c.bias, bound, rng);
  return c;
}

NormLayer make_norm(int channels, double momentum) {
  NormLayer n{Tensor::filled({channels}, 1.0, true), Tensor::zeros({channels}, true), BatchNormState(channels)};
  n.stats.momentum = momentum;
  return n;
}

}  // namespace

ScaeModel::ScaeModel(const ScaeConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.state_dim, h = config_.hidden, c = config_.latent_channels, k = config_.kernel;
  enc_[0] = make_conv(h, d, k, rng);
  enc_[1] = make_conv(h, h, k, rng);
  enc_[2] = make_conv(c, h, k, rng);
  enc_norm_[0] = make_norm(h, config_.bn_momentum);
  enc_norm_[1] = make_norm(h, config_.bn_momentum);
  enc_norm_[2] = make_norm(c, config_.bn_momentum);
  phase_weight_ = Tensor::zeros({c, 2, config_.window}, true);
  phase_bias_ = Tensor::zeros({c, 2}, true);
  const double pb = 1.0 / std::sqrt(static_cast<double>(config_.window));
  init_uniform(phase_weight_, pb, rng);
  init_uniform(phase_bias_, pb, rng);
  dec_[0] = make_conv(h, c, k, rng);
  dec_[1] = make_conv(h, h, k, rng);
  dec_[2] = make_conv(d, h, k, rng);
  dec_norm_[0] = make_norm(h, config_.bn_momentum);
  dec_norm_[1] = make_norm(h, config_.bn_momentum);
  dec_norm_[2] = make_norm(d, config_.bn_momentum);
  state_mean = Eigen::VectorXd::Zero(d);
  state_std = Eigen::VectorXd::Ones(d);
}

Graph::NodeId ScaeModel::conv_block(Graph& g, Graph::NodeId x, ConvLayer& conv, NormLayer* norm, BnMode mode) {
  Graph::NodeId y = g.conv1d_same(x, g.parameter(conv.weight), g.parameter(conv.bias));
  if (norm == nullptr) return y;
  y = g.batch_norm(y, g.parameter(norm->scale), g.parameter(norm->shift), norm->stats, mode);
  return g.elu(y);
}

ScaeModel::Encoded ScaeModel::encode_graph(Graph& g, Graph::NodeId x, BnMode mode) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 3 || xv.dim(1) != config_.state_dim || xv.dim(2) != config_.window) {
    throw ShapeError("encode: expected [B, " + std::to_string(config_.state_dim) + ", " +
                     std::to_string(config_.window) + "], got " + shape_string(xv.shape));
  }
  Encoded e;
  Graph::NodeId h = x;
  for (int i = 0; i < 3; ++i) h = conv_block(g, h, enc_[i], &enc_norm_[i], mode);
  e.z = h;
  e.phase = g.atan2_phase(g.channel_linear(h, g.parameter(phase_weight_), g.parameter(phase_bias_)));
  e.params = g.spectral_params(g.real_dft(h), config_.window, config_.dt);
  return e;
}

Graph::NodeId ScaeModel::decode_graph(Graph& g, Graph::NodeId zhat, BnMode mode) {
  const Tensor& zv = g.value(zhat);
  if (zv.rank() != 3 || zv.dim(1) != config_.latent_channels || zv.dim(2) != config_.window) {
    throw ShapeError("decode: expected [B, " + std::to_string(config_.latent_channels) + ", " +
                     std::to_string(config_.window) + "], got " + shape_string(zv.shape));
  }
  Graph::NodeId h = conv_block(g, zhat, dec_[0], &dec_norm_[0], mode);
  h = conv_block(g, h, dec_[1], &dec_norm_[1], mode);
  return conv_block(g, h, dec_[2], config_.final_decoder_activation ? &dec_norm_[2] : nullptr, mode);
}

Graph::NodeId ScaeModel::reconstruct_graph(Graph& g, Graph::NodeId phase, Graph::NodeId params,
                                           std::span<const double> shifts) const {
  const std::vector<double> grid = config_.time_grid();
  return g.sinusoid(phase, params, grid, shifts);
}

Tensor ScaeModel::encode(const Tensor& x) {
  Graph g;
  return g.value(encode_graph(g, g.constant(x), BnMode::kEval).z);
}

LatentTensors ScaeModel::parameterize(const Tensor& z) {
  Graph g;
  const Graph::NodeId zn = g.constant(z);
  const Graph::NodeId phase = g.atan2_phase(g.channel_linear(zn, g.constant(phase_weight_), g.constant(phase_bias_)));
  const Graph::NodeId params = g.spectral_params(g.real_dft(zn), config_.window, config_.dt);
  return {g.value(phase), g.value(params)};
}

Tensor ScaeModel::reconstruct_latent(const LatentTensors& p) const {
  Graph g;
  const double zero = 0.0;
  return g.value(reconstruct_graph(g, g.constant(p.phase), g.constant(p.params), std::span<const double>(&zero, 1)));
}

Tensor ScaeModel::decode(const Tensor& zhat) {
  Graph g;
  return g.value(decode_graph(g, g.constant(zhat), BnMode::kEval));
}

ScaeModel::Prediction ScaeModel::predict_forward(const Tensor& x, int i) {
  if (i < 0 || i > config_.horizon) {
    throw ContractError("predict_forward: horizon index " + std::to_string(i) + " outside [0, " +
                        std::to_string(config_.horizon) + "]");
  }
  Graph g;
  const Encoded e = encode_graph(g, g.constant(x), BnMode::kEval);
  const double shift = i * config_.dt;
  const Graph::NodeId zhat = reconstruct_graph(g, e.phase, e.params, std::span<const double>(&shift, 1));
  const Graph::NodeId tau = decode_graph(g, zhat, BnMode::kEval);
  Prediction p{g.value(zhat), g.value(tau), {g.value(e.phase), g.value(e.params)}};
  const int b = p.params.batch(), c = channels();
  for (int r = 0; r < b * c; ++r) {
    const double f = p.params.params.data[static_cast<std::size_t>(r) * 3 + 1];
    p.params.phase.data[static_cast<std::size_t>(r)] = wrap_phase(p.params.phase.data[static_cast<std::size_t>(r)] + f * shift);
  }
  return p;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Same-padded conv of x [cin, len] evaluated at output columns [lo, len) only;
// the other columns of the result stay zero.
RowMat conv_tail(const ConvLayer& conv, const RowMat& x, int lo) {
  const int cout = conv.weight.dim(0), cin = conv.weight.dim(1), kernel = conv.weight.dim(2);
  const int len = static_cast<int>(x.cols()), pad = (kernel - 1) / 2, n = len - lo;
  RowMat cols = RowMat::Zero(static_cast<Eigen::Index>(cin) * kernel, n);
  for (int ci = 0; ci < cin; ++ci)
    for (int k = 0; k < kernel; ++k)
      for (int h = lo; h < len; ++h) {
        const int src = h + k - pad;
        if (src >= 0 && src < len) cols(static_cast<Eigen::Index>(ci) * kernel + k, h - lo) = x(ci, src);
      }
  const Eigen::Map<const RowMat> w(conv.weight.data.data(), cout, static_cast<Eigen::Index>(cin) * kernel);
  RowMat y = RowMat::Zero(cout, len);
  y.rightCols(n).noalias() = w * cols;
  for (int co = 0; co < cout; ++co) y.row(co).tail(n).array() += conv.bias.data[static_cast<std::size_t>(co)];
  return y;
}

void norm_elu_tail(const NormLayer& norm, RowMat& y, int lo) {
  for (Eigen::Index c = 0; c < y.rows(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double m = norm.stats.running_mean[i], is = 1.0 / std::sqrt(norm.stats.running_var[i] + norm.stats.eps);
    const double gm = norm.scale.data[i], bt = norm.shift.data[i];
    for (Eigen::Index h = lo; h < y.cols(); ++h) {
      const double v = gm * (y(c, h) - m) * is + bt;
      y(c, h) = v > 0.0 ? v : std::expm1(v);
    }
  }
}

}  // namespace

Eigen::MatrixXd ScaeModel::decode_newest(const LatentTensors& params) {
  // Only the receptive field of the last output column is evaluated.
  const Tensor zhat = reconstruct_latent(params);
  const int b = zhat.dim(0), c = zhat.dim(1), h = zhat.dim(2), d = config_.state_dim;
  const int pad = (config_.kernel - 1) / 2;
  const int lo2 = h - 1, lo1 = std::max(0, lo2 - pad), lo0 = std::max(0, lo1 - pad);
  Eigen::MatrixXd out(b, d);
  for (int i = 0; i < b; ++i) {
    const RowMat z = Eigen::Map<const RowMat>(zhat.data.data() + static_cast<std::size_t>(i) * c * h, c, h);
    RowMat a0 = conv_tail(dec_[0], z, lo0);
    norm_elu_tail(dec_norm_[0], a0, lo0);
    RowMat a1 = conv_tail(dec_[1], a0, lo1);
    norm_elu_tail(dec_norm_[1], a1, lo1);
    RowMat a2 = conv_tail(dec_[2], a1, lo2);
    if (config_.final_decoder_activation) norm_elu_tail(dec_norm_[2], a2, lo2);
    out.row(i) = a2.col(h - 1).transpose();
  }
  return out;
}

template <typename F>
void ScaeModel::for_each(ParamGroup group, F&& f) {
  switch (group) {
    case ParamGroup::kEncoder:
      for (int i = 0; i < 3; ++i) {
        f("encoder.conv" + std::to_string(i) + ".weight", enc_[i].weight);
        f("encoder.conv" + std::to_string(i) + ".bias", enc_[i].bias);
      }
      break;
    case ParamGroup::kPhaseHead:
      f("phase_head.weight", phase_weight_);
      f("phase_head.bias", phase_bias_);
      break;
    case ParamGroup::kDecoder:
      for (int i = 0; i < 3; ++i) {
        f("decoder.conv" + std::to_string(i) + ".weight", dec_[i].weight);
        f("decoder.conv" + std::to_string(i) + ".bias", dec_[i].bias);
      }
      break;
    case ParamGroup::kNorm:
      for (int i = 0; i < 3; ++i) {
        f("encoder.bn" + std::to_string(i) + ".scale", enc_norm_[i].scale);
        f("encoder.bn" + std::to_string(i) + ".shift", enc_norm_[i].shift);
      }
      for (int i = 0; i < (config_.final_decoder_activation ? 3 : 2); ++i) {
        f("decoder.bn" + std::to_string(i) + ".scale", dec_norm_[i].scale);
        f("decoder.bn" + std::to_string(i) + ".shift", dec_norm_[i].shift);
      }
      break;
  }
}

std::vector<NamedParam> ScaeModel::named_parameters(ParamGroup group) {
  std::vector<NamedParam> out;
  for_each(group, [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

std::vector<NamedParam> ScaeModel::named_parameters() {
  std::vector<NamedParam> out;
  for (ParamGroup g : {ParamGroup::kEncoder, ParamGroup::kPhaseHead, ParamGroup::kDecoder, ParamGroup::kNorm}) {
    for (NamedParam& p : named_parameters(g)) out.push_back(p);
  }
  return out;
}

std::vector<ParamRef> ScaeModel::param_refs(ParamGroup group) {
  std::vector<ParamRef> out;
  for_each(group, [&](const std::string&, Tensor& t) { out.push_back(param_ref(t)); });
  return out;
}

std::vector<ParamRef> ScaeModel::param_refs() {
  std::vector<ParamRef> out;
  for (NamedParam& p : named_parameters()) out.push_back(param_ref(*p.tensor));
  return out;
}

void ScaeModel::set_trainable(ParamGroup group, bool trainable) {
  for_each(group, [&](const std::string&, Tensor& t) { t.set_requires_grad(trainable); });
}

bool ScaeModel::trainable(ParamGroup group) {
  bool any = false;
  for_each(group, [&](const std::string&, Tensor& t) { any = any || t.requires_grad; });
  return any;
}

std::uint64_t ScaeModel::frozen_hash() {
  Fnv1a h;
  for (ParamGroup g : {ParamGroup::kEncoder, ParamGroup::kPhaseHead, ParamGroup::kNorm}) {
    for_each(g, [&](const std::string&, Tensor& t) { h.add(t.data); });
  }
  for (const NormLayer& n : enc_norm_) {
    h.add(n.stats.running_mean);
    h.add(n.stats.running_var);
  }
  for (const NormLayer& n : dec_norm_) {
    h.add(n.stats.running_mean);
    h.add(n.stats.running_var);
  }
  return h.digest();
}

std::uint64_t ScaeModel::decoder_hash() {
  Fnv1a h;
  for_each(ParamGroup::kDecoder, [&](const std::string&, Tensor& t) { h.add(t.data); });
  return h.digest();
}

Eigen::VectorXd ScaeModel::normalize(const Eigen::VectorXd& s) const {
  return ((s - state_mean).array() / state_std.array()).matrix();
}

Eigen::VectorXd ScaeModel::denormalize(const Eigen::VectorXd& s) const {
  return (s.array() * state_std.array()).matrix() + state_mean;
}

void ScaeModel::write(Checkpoint& ck) const {
  config_.write(ck.config, "scae");
  auto& self = const_cast<ScaeModel&>(*this);
  for (NamedParam& p : self.named_parameters()) ck.put(p.name, *p.tensor);
  for (int i = 0; i < 3; ++i) {
    ck.put("encoder.bn" + std::to_string(i) + ".running_mean", enc_norm_[i].stats.running_mean);
    ck.put("encoder.bn" + std::to_string(i) + ".running_var", enc_norm_[i].stats.running_var);
    ck.put("decoder.bn" + std::to_string(i) + ".running_mean", dec_norm_[i].stats.running_mean);
    ck.put("decoder.bn" + std::to_string(i) + ".running_var", dec_norm_[i].stats.running_var);
  }
  ck.put("data.mean", std::vector<double>(state_mean.data(), state_mean.data() + state_mean.size()));
  ck.put("data.std", std::vector<double>(state_std.data(), state_std.data() + state_std.size()));
}

void ScaeModel::read(const Checkpoint& ck) {
  *this = ScaeModel(ScaeConfig::read(ck.config, "scae"), 0);
  for (NamedParam& p : named_parameters()) ck.restore(p.name, *p.tensor);
  for (int i = 0; i < 3; ++i) {
    ck.restore("encoder.bn" + std::to_string(i) + ".running_mean", enc_norm_[i].stats.running_mean);
    ck.restore("encoder.bn" + std::to_string(i) + ".running_var", enc_norm_[i].stats.running_var);
    ck.restore("decoder.bn" + std::to_string(i) + ".running_mean", dec_norm_[i].stats.running_mean);
    ck.restore("decoder.bn" + std::to_string(i) + ".running_var", dec_norm_[i].stats.running_var);
  }
  const Tensor& mean = ck.at("data.mean");
  const Tensor& sd = ck.at("data.std");
  if (static_cast<int>(mean.numel()) != config_.state_dim || sd.numel() != mean.numel()) {
    throw ShapeError("checkpoint data statistics do not match state_dim");
  }
  state_mean = Eigen::Map<const Eigen::VectorXd>(mean.data.data(), static_cast<Eigen::Index>(mean.numel()));
  state_std = Eigen::Map<const Eigen::VectorXd>(sd.data.data(), static_cast<Eigen::Index>(sd.numel()));
}

void ScaeModel::save(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.kind = "scae-model";
  write(ck);
  ck.save(path);
}

ScaeModel ScaeModel::load(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path, "scae-model");
  ScaeModel m;
  m.read(ck);
  return m;
}

}  // namespace mimic
