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

#ifndef MIMIC_SCAE_TRAIN_HPP_
#define MIMIC_SCAE_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mimic/motion_data.hpp"
#include "mimic/optim.hpp"
#include "mimic/scae_model.hpp"

namespace mimic {

struct TrainConfig {
  int max_iters = 5000;
  double lr = 1e-4;
  double weight_decay = 5e-4;
  int epochs_per_iter = 5;
  int minibatches = 4;
  // Windows drawn afresh every epoch and split into `minibatches`.
  int windows_per_iter = 64;
  // Fixed windows scored every iteration for the log.
  int eval_windows = 32;
  std::uint64_t seed = 0;

  void validate() const;
  void write(KvDocument& doc, const std::string& section = "train") const;
  static TrainConfig read(const KvDocument& doc, const std::string& section = "train");
};

// A window reference: steps start .. start + H - 1 + N of one trajectory.
struct WindowRef {
  int motion = 0;
  int trajectory = 0;
  int start = 0;
};

// Normalised trajectories of a dataset and the window starts valid for a
// given (H, N).
class WindowSource {
 public:
  WindowSource(const MotionDataset& dataset, int window, int horizon);

  int window() const { return window_; }
  int horizon() const { return horizon_; }
  int dim() const { return dim_; }
  const std::vector<WindowRef>& valid() const { return valid_; }
  const Eigen::MatrixXd& trajectory(int motion, int trajectory) const;
  // Every valid window whose start is a multiple of `stride`.
  std::vector<WindowRef> strided(int stride) const;

 private:
  int window_, horizon_, dim_;
  std::vector<std::vector<Eigen::MatrixXd>> normalized_;
  std::vector<WindowRef> valid_;
};

// input [B, d, H] holds tau_t; targets [(N + 1) * B, d, H] holds tau_{t+i}
// at row i * B + b.
struct WindowBatch {
  Tensor input;
  Tensor targets;
  int horizon = 0;
  int batch() const { return input.dim(0); }
};

// Throws ContractError if a window runs past the end of its trajectory.
WindowBatch make_window_batch(const WindowSource& source, const std::vector<WindowRef>& refs);

struct LossNodes {
  Graph::NodeId total = -1;
  Graph::NodeId motion = -1;  // sum_i alpha^i mean (tau'_{t+i} - tau_{t+i})^2
  Graph::NodeId latent = -1;  // sum_i alpha^i mean (zbar'_{t+i} - z'_{t+i})^2, -1 when beta = 0
};

// Multi-step prediction loss. With beta = 0 the latent branch is not built,
// which makes the result identical to the plain prediction loss.
LossNodes scae_loss_graph(Graph& g, ScaeModel& model, const WindowBatch& batch, double beta, BnMode mode);
double fld_loss(ScaeModel& model, const WindowBatch& batch, BnMode mode = BnMode::kEval);
double scae_loss(ScaeModel& model, const WindowBatch& batch, double beta, BnMode mode = BnMode::kEval);

struct ReconstructionMetrics {
  double motion_mse = 0.0;  // mean over horizon steps and entries
  double latent_mse = 0.0;
};
// Eval-mode scores over the given windows, evaluated in chunks.
ReconstructionMetrics evaluate_reconstruction(ScaeModel& model, const WindowSource& source,
                                              const std::vector<WindowRef>& refs, int chunk = 64);

struct LatentSample {
  LatentParams params;
  int motion = 0;
  int trajectory = 0;
  int start = 0;
};

class LatentSampleBuffer {
 public:
  void add(LatentSample s);
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const LatentSample& operator[](std::size_t i) const { return entries_.at(i); }
  const std::vector<LatentSample>& entries() const { return entries_; }
  // Buffer restricted to the listed motion indices.
  LatentSampleBuffer filter(const std::vector<int>& motions) const;

  std::vector<std::string> motion_names;

  void save(const std::filesystem::path& path) const;
  static LatentSampleBuffer load(const std::filesystem::path& path);

 private:
  std::vector<LatentSample> entries_;
};

// One eval-mode entry per segment (stride 1) of every trajectory.
LatentSampleBuffer collect_latent_buffer(ScaeModel& model, const MotionDataset& dataset, int chunk = 128);

struct TrainLogRow {
  int iter = 0;
  double loss = 0.0;  // mean training loss over the iteration's minibatches
  double motion_recon_mse = 0.0;
  double latent_recon_mse = 0.0;
  double lr = 0.0;
  double wallclock = 0.0;  // seconds since the run (or resume) started
};

struct TrainOptions {
  std::filesystem::path log_csv;          // appended to; empty disables
  std::filesystem::path checkpoint;       // training state, written every checkpoint_every
  int checkpoint_every = 0;
  std::filesystem::path resume_from;      // training state to continue from
  std::filesystem::path divergence_snapshot;  // model written when the loss turns non-finite
  // Stop after this many iterations in this call (0 = run to max_iters).
  int stop_after = 0;
  std::function<void(const TrainLogRow&)> on_iteration;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  int completed_iters = 0;
};

// Adam over every model parameter. Deterministic for a fixed seed; training
// state (model, optimiser moments, RNG) resumes bit-exactly.
TrainResult train_scae(ScaeModel& model, const MotionDataset& dataset, const TrainConfig& config,
                       const TrainOptions& options = {});

// Mean number of channels whose amplitude exceeds `threshold` times the
// largest channel amplitude of the same segment, per motion.
std::vector<double> amplitude_sparsity(ScaeModel& model, const MotionDataset& dataset, double threshold = 0.1,
                                       int stride = 1);
std::vector<double> amplitude_sparsity(const LatentSampleBuffer& buffer, int motions, double threshold = 0.1);

struct ManifoldPoint {
  double x = 0.0;
  double y = 0.0;
  int motion = 0;
  int trajectory = 0;
  int t = 0;
};
// Two leading principal components of the flattened reconstructions zhat.
std::vector<ManifoldPoint> export_manifold(ScaeModel& model, const MotionDataset& dataset, int stride = 1);
std::vector<ManifoldPoint> project_manifold(const Eigen::MatrixXd& features, const std::vector<WindowRef>& refs);

}  // namespace mimic

#endif  // MIMIC_SCAE_TRAIN_HPP_
