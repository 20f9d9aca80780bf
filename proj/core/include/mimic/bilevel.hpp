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

#ifndef MIMIC_BILEVEL_HPP_
#define MIMIC_BILEVEL_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mimic/kv_config.hpp"
#include "mimic/optim.hpp"
#include "mimic/policy.hpp"
#include "mimic/scae_model.hpp"
#include "mimic/toy_sim.hpp"

namespace mimic {

struct BmiConfig {
  int outer_iters = 50;       // K
  int policy_iters = 20;      // PPO iterations per outer iteration
  int decoder_samples = 1024; // (z, s) pairs drawn per decoder update
  int decoder_epochs = 1;
  int decoder_minibatches = 2;
  double decoder_lr = 1e-5;
  double beta_ft = 200.0;
  bool train_policy = true;
  ActionMode policy_mode = ActionMode::kStochastic;
  // Metric probes: episodes per motion and their length in control steps.
  int probe_episodes = 8;
  int probe_steps = 100;
  // Tracking evaluation on a fixed set of episodes.
  int eval_envs = 64;
  int eval_steps = 100;
  std::uint64_t seed = 0;

  void validate() const;
  void write(KvDocument& doc, const std::string& section = "bmi") const;
  static BmiConfig read(const KvDocument& doc, const std::string& section = "bmi");
};

// Realized (z, s) pairs gathered by the policy; states are stored normalized.
class RolloutBuffer {
 public:
  // Drops transitions that ended in a simulator fault.
  void add(const RolloutBatch& batch, const ScaeModel& model);
  void clear();
  int size() const { return static_cast<int>(latents_.size()); }
  bool empty() const { return latents_.empty(); }
  const LatentParams& latent(int i) const { return latents_[static_cast<std::size_t>(i)]; }
  const Eigen::VectorXd& state(int i) const { return states_[static_cast<std::size_t>(i)]; }
  int motion(int i) const { return motions_[static_cast<std::size_t>(i)]; }

  // `n` indices drawn uniformly with replacement. Throws ContractError when empty.
  std::vector<int> sample(int n, std::mt19937_64& rng) const;

 private:
  std::vector<LatentParams> latents_;
  std::vector<Eigen::VectorXd> states_;
  std::vector<int> motions_;
};

struct DecoderBatch {
  LatentTensors latents;
  Eigen::MatrixXd states;  // [B, d], normalized

  static DecoderBatch gather(const RolloutBuffer& buffer, const std::vector<int>& indices);
};

struct DecoderLoss {
  double total = 0.0;
  double tracking = 0.0;  // newest decoded column vs realized state
  double latent = 0.0;    // re-encoded decode vs its source latent
};

// Every batch-norm layer runs in eval mode. Gradients reach only the
// trainable parameter groups of `model`.
DecoderLoss decoder_loss(ScaeModel& model, const DecoderBatch& batch, double beta_ft, bool with_grad);

struct DecoderUpdateStats {
  double loss = 0.0;
  double tracking = 0.0;
  double latent = 0.0;
  int steps = 0;
  int reverts = 0;  // non-finite updates undone (learning rate halved)
};

// One decoder update on `decoder_samples` pairs from `buffer`.
DecoderUpdateStats update_decoder(ScaeModel& model, Adam& adam, const RolloutBuffer& buffer, const BmiConfig& config,
                                  std::mt19937_64& rng);

struct MotionProbe {
  double violation_rate = 0.0;
  double violation_magnitude = 0.0;
  double target_amplitude = 0.0;  // mean re-encoded amplitude of decoded windows
  double latent_drift = 0.0;
};

// Decodes `episodes` phase-propagated target trajectories of `steps` steps
// per motion in `buffer` and audits them with the feasibility probe.
// Deterministic in `seed`.
std::vector<MotionProbe> probe_decoded_motions(ScaeModel& model, const LatentSampleBuffer& buffer,
                                               const SimConfig& sim, int motions, int episodes, int steps,
                                               std::uint64_t seed);

// Writes motion,episode,step,<state columns> rows of the probed targets.
void dump_decoded_targets(ScaeModel& model, const LatentSampleBuffer& buffer, const SimConfig& sim, int motions,
                          int episodes, int steps, std::uint64_t seed, const std::filesystem::path& path);

struct BmiReportRow {
  int outer_iter = 0;
  double tracking_mse = 0.0;
  double latent_drift = 0.0;
  double violation_rate = 0.0;   // mean over the audited motions
  double reward = 0.0;
  double violation_magnitude = 0.0;
  double target_amplitude = 0.0;  // mean over every motion
  std::vector<MotionProbe> motions;
};

struct BmiOptions {
  std::filesystem::path report_csv;
  std::filesystem::path dump_dir;  // targets_before.csv / targets_after.csv
  std::filesystem::path decoder_checkpoint;
  // Motions whose violations are averaged into the report; empty means all.
  std::vector<int> audited_motions;
  std::function<void(const BmiReportRow&)> on_iteration;
};

struct BmiResult {
  std::vector<BmiReportRow> rows;  // row 0 is the state before any update
  int decoder_reverts = 0;
};

// Alternates policy improvement on the current decoded targets with decoder
// updates on the realized states. Encoder, phase head and normalization stay
// frozen; ContractError if their hash changes. `nets` may be null when
// `config.policy_mode` is kRandom.
BmiResult run_bmi(PolicyNets* nets, ScaeModel& model, const LatentSampleBuffer& buffer, const SimConfig& sim,
                  const PpoConfig& ppo, const RewardConfig& reward, const ObservationConfig& obs,
                  const BmiConfig& config, const BmiOptions& options);

void write_bmi_report_header(const std::filesystem::path& path);
void append_bmi_report(const std::filesystem::path& path, const BmiReportRow& row);

}  // namespace mimic

#endif  // MIMIC_BILEVEL_HPP_
