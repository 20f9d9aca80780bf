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

#include "mimic/scae_train.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mimic/error.hpp"

namespace mimic {

void TrainConfig::validate() const {
  if (max_iters < 0) throw ValidationError("train: max_iters must be >= 0");
  if (!(lr > 0.0)) throw ValidationError("train: lr must be positive");
  if (weight_decay < 0.0) throw ValidationError("train: weight_decay must be >= 0");
  if (epochs_per_iter < 1 || minibatches < 1) throw ValidationError("train: epochs_per_iter and minibatches must be >= 1");
  if (windows_per_iter < 2 * minibatches) {
    throw ValidationError("train: windows_per_iter must give every minibatch at least 2 windows");
  }
  if (eval_windows < 1) throw ValidationError("train: eval_windows must be >= 1");
}

void TrainConfig::write(KvDocument& doc, const std::string& section) const {
  doc.set_int(section, "max_iters", max_iters);
  doc.set_double(section, "lr", lr);
  doc.set_double(section, "weight_decay", weight_decay);
  doc.set_int(section, "epochs_per_iter", epochs_per_iter);
  doc.set_int(section, "minibatches", minibatches);
  doc.set_int(section, "windows_per_iter", windows_per_iter);
  doc.set_int(section, "eval_windows", eval_windows);
  doc.set_int(section, "seed", static_cast<long>(seed));
}

TrainConfig TrainConfig::read(const KvDocument& doc, const std::string& section) {
  TrainConfig c;
  c.max_iters = static_cast<int>(doc.get_int(section, "max_iters", c.max_iters));
  c.lr = doc.get_double(section, "lr", c.lr);
  c.weight_decay = doc.get_double(section, "weight_decay", c.weight_decay);
  c.epochs_per_iter = static_cast<int>(doc.get_int(section, "epochs_per_iter", c.epochs_per_iter));
  c.minibatches = static_cast<int>(doc.get_int(section, "minibatches", c.minibatches));
  c.windows_per_iter = static_cast<int>(doc.get_int(section, "windows_per_iter", c.windows_per_iter));
  c.eval_windows = static_cast<int>(doc.get_int(section, "eval_windows", c.eval_windows));
  c.seed = static_cast<std::uint64_t>(doc.get_int(section, "seed", static_cast<long>(c.seed)));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// windows

WindowSource::WindowSource(const MotionDataset& dataset, int window, int horizon)
    : window_(window), horizon_(horizon), dim_(dataset.dim()) {
  dataset.require_window(window);
  for (int m = 0; m < static_cast<int>(dataset.motions().size()); ++m) {
    normalized_.emplace_back();
    const int n = static_cast<int>(dataset.motions()[static_cast<std::size_t>(m)].trajectories.size());
    for (int k = 0; k < n; ++k) {
      normalized_.back().push_back(dataset.normalized_trajectory(m, k));
      const int steps = static_cast<int>(normalized_.back().back().rows());
      for (int t : window_starts(steps, window, horizon)) valid_.push_back({m, k, t});
    }
  }
}

const Eigen::MatrixXd& WindowSource::trajectory(int motion, int trajectory) const {
  return normalized_.at(static_cast<std::size_t>(motion)).at(static_cast<std::size_t>(trajectory));
}

std::vector<WindowRef> WindowSource::strided(int stride) const {
  if (stride < 1) throw ValidationError("window stride must be >= 1");
  std::vector<WindowRef> out;
  for (const WindowRef& r : valid_) {
    if (r.start % stride == 0) out.push_back(r);
  }
  return out;
}

WindowBatch make_window_batch(const WindowSource& source, const std::vector<WindowRef>& refs) {
  if (refs.empty()) throw ContractError("window batch: no windows");
  const int b = static_cast<int>(refs.size()), d = source.dim(), h = source.window(), n = source.horizon();
  WindowBatch batch{Tensor({b, d, h}), Tensor({(n + 1) * b, d, h}), n};
  for (int j = 0; j < b; ++j) {
    const WindowRef& r = refs[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd& traj = source.trajectory(r.motion, r.trajectory);
    if (r.start < 0 || r.start + h - 1 + n >= traj.rows()) {
      throw ContractError("window at step " + std::to_string(r.start) + " with horizon " + std::to_string(n) +
                          " crosses the end of trajectory " + std::to_string(r.trajectory) + " of motion " +
                          std::to_string(r.motion));
    }
    for (int i = 0; i <= n; ++i) {
      double* dst = batch.targets.data.data() + static_cast<std::size_t>(i * b + j) * d * h;
      for (int ch = 0; ch < d; ++ch)
        for (int col = 0; col < h; ++col) dst[ch * h + col] = traj(r.start + i + col, ch);
    }
    std::copy_n(batch.targets.data.data() + static_cast<std::size_t>(j) * d * h, static_cast<std::size_t>(d) * h,
                batch.input.data.data() + static_cast<std::size_t>(j) * d * h);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// losses

namespace {

std::vector<double> horizon_shifts(int horizon, double dt) {
  std::vector<double> s(static_cast<std::size_t>(horizon) + 1);
  for (int i = 0; i <= horizon; ++i) s[static_cast<std::size_t>(i)] = i * dt;
  return s;
}

std::vector<double> decay_weights(int horizon, double alpha) {
  std::vector<double> w(static_cast<std::size_t>(horizon) + 1);
  double a = 1.0;
  for (double& v : w) {
    v = a;
    a *= alpha;
  }
  return w;
}

}  // namespace

LossNodes scae_loss_graph(Graph& g, ScaeModel& model, const WindowBatch& batch, double beta, BnMode mode) {
  const ScaeConfig& cfg = model.config();
  if (batch.horizon > cfg.horizon) {
    throw ContractError("loss: batch horizon " + std::to_string(batch.horizon) + " exceeds model horizon " +
                        std::to_string(cfg.horizon));
  }
  const std::vector<double> shifts = horizon_shifts(batch.horizon, cfg.dt);
  const std::vector<double> weights = decay_weights(batch.horizon, cfg.alpha);
  const ScaeModel::Encoded e = model.encode_graph(g, g.constant(batch.input), mode);
  const Graph::NodeId zhat = model.reconstruct_graph(g, e.phase, e.params, shifts);
  const Graph::NodeId tau_hat = model.decode_graph(g, zhat, mode);
  LossNodes out;
  out.motion = g.mse(tau_hat, g.constant(batch.targets), weights);
  out.total = out.motion;
  if (beta > 0.0) {
    const ScaeModel::Encoded re = model.encode_graph(g, tau_hat, mode);
    const double zero = 0.0;
    const Graph::NodeId zbar = model.reconstruct_graph(g, re.phase, re.params, std::span<const double>(&zero, 1));
    out.latent = g.mse(zbar, zhat, weights);
    out.total = g.add(out.motion, g.scale(out.latent, beta));
  }
  return out;
}

double fld_loss(ScaeModel& model, const WindowBatch& batch, BnMode mode) {
  Graph g;
  return g.value(scae_loss_graph(g, model, batch, 0.0, mode).total).data[0];
}

double scae_loss(ScaeModel& model, const WindowBatch& batch, double beta, BnMode mode) {
  Graph g;
  return g.value(scae_loss_graph(g, model, batch, beta, mode).total).data[0];
}

ReconstructionMetrics evaluate_reconstruction(ScaeModel& model, const WindowSource& source,
                                              const std::vector<WindowRef>& refs, int chunk) {
  ReconstructionMetrics m;
  if (refs.empty()) return m;
  const double dt = model.config().dt;
  const std::vector<double> shifts = horizon_shifts(source.horizon(), dt);
  double total = 0.0;
  for (std::size_t begin = 0; begin < refs.size(); begin += static_cast<std::size_t>(chunk)) {
    const std::vector<WindowRef> part(refs.begin() + static_cast<std::ptrdiff_t>(begin),
                                      refs.begin() + static_cast<std::ptrdiff_t>(std::min(refs.size(), begin + chunk)));
    const WindowBatch batch = make_window_batch(source, part);
    Graph g;
    const ScaeModel::Encoded e = model.encode_graph(g, g.constant(batch.input), BnMode::kEval);
    const Graph::NodeId zhat = model.reconstruct_graph(g, e.phase, e.params, shifts);
    const Graph::NodeId tau_hat = model.decode_graph(g, zhat, BnMode::kEval);
    const ScaeModel::Encoded re = model.encode_graph(g, tau_hat, BnMode::kEval);
    const double zero = 0.0;
    const Graph::NodeId zbar = model.reconstruct_graph(g, re.phase, re.params, std::span<const double>(&zero, 1));
    const double w = static_cast<double>(part.size());
    m.motion_mse += w * g.value(g.mse(tau_hat, g.constant(batch.targets))).data[0];
    m.latent_mse += w * g.value(g.mse(zbar, zhat)).data[0];
    total += w;
  }
  m.motion_mse /= total;
  m.latent_mse /= total;
  return m;
}

// ---------------------------------------------------------------------------
// latent buffer

void LatentSampleBuffer::add(LatentSample s) {
  s.params.validate();
  entries_.push_back(std::move(s));
}

LatentSampleBuffer LatentSampleBuffer::filter(const std::vector<int>& motions) const {
  LatentSampleBuffer out;
  out.motion_names = motion_names;
  for (const LatentSample& s : entries_) {
    if (std::find(motions.begin(), motions.end(), s.motion) != motions.end()) out.entries_.push_back(s);
  }
  return out;
}

void LatentSampleBuffer::save(const std::filesystem::path& path) const {
  if (entries_.empty()) throw ContractError("latent buffer: refusing to save an empty buffer");
  std::vector<LatentParams> rows;
  Tensor labels({static_cast<int>(entries_.size()), 3});
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    rows.push_back(entries_[i].params);
    labels.data[i * 3 + 0] = entries_[i].motion;
    labels.data[i * 3 + 1] = entries_[i].trajectory;
    labels.data[i * 3 + 2] = entries_[i].start;
  }
  const LatentTensors t = LatentTensors::stack(rows);
  Checkpoint ck;
  ck.kind = "latent-buffer";
  std::string names;
  for (const std::string& n : motion_names) names += (names.empty() ? "" : ",") + n;
  ck.config.set("buffer", "motions", names);
  ck.put("phase", t.phase);
  ck.put("params", t.params);
  ck.put("labels", labels);
  ck.save(path);
}

LatentSampleBuffer LatentSampleBuffer::load(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path, "latent-buffer");
  LatentSampleBuffer out;
  std::stringstream ss(ck.config.get_string("buffer", "motions", ""));
  std::string item;
  while (std::getline(ss, item, ',')) out.motion_names.push_back(item);
  const LatentTensors t{ck.at("phase"), ck.at("params")};
  const Tensor& labels = ck.at("labels");
  for (int i = 0; i < t.batch(); ++i) {
    out.add({t.row(i), static_cast<int>(labels.data[static_cast<std::size_t>(i) * 3]),
             static_cast<int>(labels.data[static_cast<std::size_t>(i) * 3 + 1]),
             static_cast<int>(labels.data[static_cast<std::size_t>(i) * 3 + 2])});
  }
  return out;
}

namespace {

// Eval-mode latent parameters of every referenced window (horizon ignored).
std::vector<LatentParams> encode_windows(ScaeModel& model, const WindowSource& source,
                                         const std::vector<WindowRef>& refs, int chunk) {
  std::vector<LatentParams> out;
  const int d = source.dim(), h = source.window();
  for (std::size_t begin = 0; begin < refs.size(); begin += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(refs.size(), begin + static_cast<std::size_t>(chunk));
    const int b = static_cast<int>(end - begin);
    Tensor x({b, d, h});
    for (int j = 0; j < b; ++j) {
      const WindowRef& r = refs[begin + static_cast<std::size_t>(j)];
      const Eigen::MatrixXd& traj = source.trajectory(r.motion, r.trajectory);
      for (int ch = 0; ch < d; ++ch)
        for (int col = 0; col < h; ++col) x.data[(static_cast<std::size_t>(j) * d + ch) * h + col] = traj(r.start + col, ch);
    }
    Graph g;
    const ScaeModel::Encoded e = model.encode_graph(g, g.constant(x), BnMode::kEval);
    const LatentTensors t{g.value(e.phase), g.value(e.params)};
    for (int j = 0; j < b; ++j) out.push_back(t.row(j));
  }
  return out;
}

}  // namespace

LatentSampleBuffer collect_latent_buffer(ScaeModel& model, const MotionDataset& dataset, int chunk) {
  const WindowSource source(dataset, model.config().window, 0);
  const std::vector<LatentParams> params = encode_windows(model, source, source.valid(), chunk);
  LatentSampleBuffer buf;
  for (const Motion& m : dataset.motions()) buf.motion_names.push_back(m.name);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const WindowRef& r = source.valid()[i];
    buf.add({params[i], r.motion, r.trajectory, r.start});
  }
  return buf;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw ParseError("training state: corrupt RNG state");
}

void append_log(const std::filesystem::path& path, const TrainLogRow& r) {
  std::ofstream out(path, std::ios::app);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.iter, r.loss, r.motion_recon_mse,
                r.latent_recon_mse, r.lr, r.wallclock);
  out << buf;
}

}  // namespace

TrainResult train_scae(ScaeModel& model, const MotionDataset& dataset, const TrainConfig& config,
                       const TrainOptions& options) {
  config.validate();
  const ScaeConfig& mc = model.config();
  if (dataset.dim() != mc.state_dim) {
    throw ValidationError("train: dataset dimension " + std::to_string(dataset.dim()) + " does not match model " +
                          std::to_string(mc.state_dim));
  }
  const WindowSource source(dataset, mc.window, mc.horizon);
  if (source.valid().empty()) {
    throw ValidationError("train: no trajectory is long enough for window " + std::to_string(mc.window) +
                          " plus horizon " + std::to_string(mc.horizon));
  }
  for (ParamGroup g : {ParamGroup::kEncoder, ParamGroup::kPhaseHead, ParamGroup::kDecoder, ParamGroup::kNorm}) {
    model.set_trainable(g, true);
  }
  model.state_mean = dataset.mean();
  model.state_std = dataset.stddev();

  std::mt19937_64 rng(config.seed);
  std::vector<WindowRef> eval_refs;
  {
    std::mt19937_64 eval_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<std::size_t> pick(0, source.valid().size() - 1);
    for (int i = 0; i < config.eval_windows; ++i) eval_refs.push_back(source.valid()[pick(eval_rng)]);
  }

  Adam adam(model.param_refs(), AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  int start_iter = 0;
  if (!options.resume_from.empty()) {
    const Checkpoint ck = Checkpoint::load(options.resume_from, "scae-train");
    model.read(ck);
    for (ParamGroup g : {ParamGroup::kEncoder, ParamGroup::kPhaseHead, ParamGroup::kDecoder, ParamGroup::kNorm}) {
      model.set_trainable(g, true);
    }
    adam = Adam(model.param_refs(), AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    adam.load_state(ck, "adam");
    start_iter = static_cast<int>(ck.config.get_int("trainer", "iter", 0));
    rng_from_string(rng, ck.config.get_string("trainer", "rng", ""));
  } else if (!options.log_csv.empty()) {
    if (options.log_csv.has_parent_path()) std::filesystem::create_directories(options.log_csv.parent_path());
    std::ofstream out(options.log_csv, std::ios::trunc);
    out << "iter,loss,motion_recon_mse,latent_recon_mse,lr,wallclock\n";
  }

  auto save_state = [&](int iter) {
    Checkpoint ck;
    ck.kind = "scae-train";
    model.write(ck);
    config.write(ck.config, "train");
    adam.save_state(ck, "adam");
    ck.config.set_int("trainer", "iter", iter);
    ck.config.set("trainer", "rng", rng_to_string(rng));
    ck.save(options.checkpoint);
  };

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.completed_iters = start_iter;
  std::uniform_int_distribution<std::size_t> pick(0, source.valid().size() - 1);
  for (int iter = start_iter + 1; iter <= config.max_iters; ++iter) {
    if (options.stop_after > 0 && iter - start_iter > options.stop_after) break;
    double loss_sum = 0.0;
    int steps = 0;
    std::vector<WindowRef> drawn(static_cast<std::size_t>(config.windows_per_iter));
    for (int epoch = 0; epoch < config.epochs_per_iter; ++epoch) {
      for (WindowRef& r : drawn) r = source.valid()[pick(rng)];
      for (int mb = 0; mb < config.minibatches; ++mb) {
        const std::size_t lo = drawn.size() * mb / config.minibatches;
        const std::size_t hi = drawn.size() * (mb + 1) / config.minibatches;
        const std::vector<WindowRef> refs(drawn.begin() + static_cast<std::ptrdiff_t>(lo),
                                          drawn.begin() + static_cast<std::ptrdiff_t>(hi));
        const WindowBatch batch = make_window_batch(source, refs);
        Graph g;
        const LossNodes loss = scae_loss_graph(g, model, batch, mc.beta, BnMode::kTrain);
        const double value = g.value(loss.total).data[0];
        if (!std::isfinite(value)) {
          if (!options.divergence_snapshot.empty()) model.save(options.divergence_snapshot);
          throw DivergenceError("SCAE training diverged at iteration " + std::to_string(iter) + " (epoch " +
                                std::to_string(epoch) + ", minibatch " + std::to_string(mb) + "): loss is " +
                                std::to_string(value));
        }
        adam.zero_grad();
        g.backward(loss.total);
        adam.step();
        loss_sum += value;
        ++steps;
      }
    }
    const ReconstructionMetrics eval = evaluate_reconstruction(model, source, eval_refs);
    TrainLogRow row;
    row.iter = iter;
    row.loss = loss_sum / steps;
    row.motion_recon_mse = eval.motion_mse;
    row.latent_recon_mse = eval.latent_mse;
    row.lr = adam.lr();
    row.wallclock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);
    result.completed_iters = iter;
    if (!options.log_csv.empty()) append_log(options.log_csv, row);
    if (options.on_iteration) options.on_iteration(row);
    if (!options.checkpoint.empty() && options.checkpoint_every > 0 && iter % options.checkpoint_every == 0) {
      save_state(iter);
    }
  }
  if (!options.checkpoint.empty()) save_state(result.completed_iters);
  return result;
}

// ---------------------------------------------------------------------------
// analysis

std::vector<double> amplitude_sparsity(const LatentSampleBuffer& buffer, int motions, double threshold) {
  std::vector<double> sum(static_cast<std::size_t>(motions), 0.0), count(static_cast<std::size_t>(motions), 0.0);
  for (const LatentSample& s : buffer.entries()) {
    const double peak = s.params.amplitude.maxCoeff();
    int active = 0;
    if (peak > 0.0) {
      for (Eigen::Index ch = 0; ch < s.params.amplitude.size(); ++ch) active += s.params.amplitude(ch) > threshold * peak;
    }
    sum.at(static_cast<std::size_t>(s.motion)) += active;
    count.at(static_cast<std::size_t>(s.motion)) += 1.0;
  }
  for (std::size_t m = 0; m < sum.size(); ++m) sum[m] = count[m] > 0 ? sum[m] / count[m] : 0.0;
  return sum;
}

std::vector<double> amplitude_sparsity(ScaeModel& model, const MotionDataset& dataset, double threshold, int stride) {
  const WindowSource source(dataset, model.config().window, 0);
  const std::vector<WindowRef> refs = source.strided(stride);
  const std::vector<LatentParams> params = encode_windows(model, source, refs, 128);
  LatentSampleBuffer buf;
  for (std::size_t i = 0; i < refs.size(); ++i) buf.add({params[i], refs[i].motion, refs[i].trajectory, refs[i].start});
  return amplitude_sparsity(buf, static_cast<int>(dataset.motions().size()), threshold);
}

std::vector<ManifoldPoint> project_manifold(const Eigen::MatrixXd& features, const std::vector<WindowRef>& refs) {
  if (features.rows() != static_cast<Eigen::Index>(refs.size())) throw ShapeError("manifold: one feature row per window");
  std::vector<ManifoldPoint> out;
  if (refs.empty()) return out;
  const Eigen::RowVectorXd mean = features.colwise().mean();
  const Eigen::MatrixXd centred = features.rowwise() - mean;
  const Eigen::MatrixXd cov = centred.transpose() * centred / std::max<Eigen::Index>(1, features.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index n = cov.rows();
  Eigen::MatrixXd basis(n, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = n - 1 - k >= 0 ? Eigen::VectorXd(es.eigenvectors().col(n - 1 - k)) : Eigen::VectorXd::Zero(n);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(k) = v;
  }
  const Eigen::MatrixXd proj = centred * basis;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.push_back({proj(r, 0), proj(r, 1), refs[i].motion, refs[i].trajectory, refs[i].start});
  }
  return out;
}

std::vector<ManifoldPoint> export_manifold(ScaeModel& model, const MotionDataset& dataset, int stride) {
  const WindowSource source(dataset, model.config().window, 0);
  const std::vector<WindowRef> refs = source.strided(stride);
  const std::vector<LatentParams> params = encode_windows(model, source, refs, 128);
  const int c = model.channels(), h = model.config().window;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(refs.size()), c * h);
  for (std::size_t begin = 0; begin < params.size(); begin += 128) {
    const std::size_t end = std::min(params.size(), begin + 128);
    const LatentTensors t = LatentTensors::stack(std::span<const LatentParams>(params.data() + begin, end - begin));
    const Tensor z = model.reconstruct_latent(t);
    for (std::size_t j = 0; j < end - begin; ++j)
      for (int k = 0; k < c * h; ++k)
        features(static_cast<Eigen::Index>(begin + j), k) = z.data[j * static_cast<std::size_t>(c * h) + static_cast<std::size_t>(k)];
  }
  return project_manifold(features, refs);
}

}  // namespace mimic
