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

#ifndef MIMIC_POLICY_HPP_
#define MIMIC_POLICY_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mimic/kv_config.hpp"
#include "mimic/latent_ops.hpp"
#include "mimic/mlp.hpp"
#include "mimic/optim.hpp"
#include "mimic/scae_model.hpp"
#include "mimic/scae_train.hpp"
#include "mimic/toy_sim.hpp"

namespace mimic {

// Gaussian noise added to the proprioceptive part of the observation.
struct ObservationConfig {
  bool noise = true;
  double q_noise = 0.01;
  double qd_noise = 0.75;

  void validate() const;
  void write(KvDocument& doc, const std::string& section = "observation") const;
  static ObservationConfig read(const KvDocument& doc, const std::string& section = "observation");
};

// q, qd, last action, sin(phase), cos(phase), frequency, amplitude, offset.
int observation_dim(int joints, int channels);

// Writes one observation into `out` (length observation_dim). Noise is drawn
// from `rng` when enabled; the action and latent blocks are never perturbed.
void build_observation(const SimState& sim, const Eigen::VectorXd& last_action, const LatentParams& latent,
                       const ObservationConfig& config, std::mt19937_64* rng, Eigen::Ref<Eigen::VectorXd> out);

struct RewardConfig {
  double w_q = 1.0;
  double w_qd = 1.0;
  double sigma_q = 1.0;
  double sigma_qd = 0.2;
  double w_action_rate = -0.01;
  double w_joint_acc = -2.5e-7;
  double w_torque = -1e-5;

  void validate() const;
  void write(KvDocument& doc, const std::string& section = "reward") const;
  static RewardConfig read(const KvDocument& doc, const std::string& section = "reward");
};

struct TrackingReward {
  double q = 0.0;   // in [0, 1]
  double qd = 0.0;  // in [0, 1]
  double total = 0.0;
};

// target and state are [q; qd] of equal length. Throws ShapeError otherwise.
TrackingReward tracking_reward(const RewardConfig& config, const Eigen::VectorXd& target, const Eigen::VectorXd& state);

double regularization_reward(const RewardConfig& config, const Eigen::VectorXd& prev_action,
                             const Eigen::VectorXd& action, const Eigen::VectorXd& prev_qd, const Eigen::VectorXd& qd,
                             const Eigen::VectorXd& torque, double dt);

struct PpoConfig {
  double lr = 1e-3;
  double kl_target = 0.01;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 1.0;
  double max_grad_norm = 1.0;
  int steps_per_iter = 24;
  int epochs = 5;
  int minibatches = 4;
  int envs = 256;
  int max_iters = 3000;
  double episode_seconds = 20.0;
  std::vector<int> hidden{128, 128, 128};
  double init_log_std = -1.0;
  std::uint64_t seed = 0;

  void validate() const;
  void write(KvDocument& doc, const std::string& section = "ppo") const;
  static PpoConfig read(const KvDocument& doc, const std::string& section = "ppo");
};

// Actor (mean joint targets), critic and a state-independent log-std.
struct PolicyNets {
  static constexpr double kMinLogStd = -20.0;
  static constexpr double kMaxLogStd = 2.0;

  Mlp actor;
  Mlp critic;
  Eigen::VectorXd log_std;
  Eigen::VectorXd log_std_grad;

  PolicyNets() = default;
  PolicyNets(int obs_dim, int act_dim, const std::vector<int>& hidden, double init_log_std, std::uint64_t seed);

  int obs_dim() const { return actor.inputs(); }
  int act_dim() const { return actor.outputs(); }

  Eigen::MatrixXd mean(const Eigen::MatrixXd& obs) const { return actor.forward(obs); }
  Eigen::VectorXd value(const Eigen::MatrixXd& obs) const;
  // Column-wise log density of `actions` under N(mean, diag(exp(log_std))^2).
  Eigen::VectorXd log_prob(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& actions) const;
  double entropy() const;

  void zero_grad();
  std::vector<ParamRef> param_refs();
  bool finite() const;
  void clamp_log_std();

  void write(Checkpoint& ck) const;
  void read(const Checkpoint& ck);
  void save(const std::filesystem::path& path, const KvDocument& config) const;
  static PolicyNets load(const std::filesystem::path& path, KvDocument* config = nullptr);
};

enum class ActionMode { kStochastic, kDeterministic, kRandom };

// Parallel environments that share one simulator config, SCAE model and
// latent buffer. Episodes start on the decoded target state.
class VecEnv {
 public:
  VecEnv(const SimConfig& sim, ScaeModel& model, const LatentSampleBuffer& buffer, int envs, double episode_seconds,
         const ObservationConfig& obs, std::uint64_t seed);

  int size() const { return static_cast<int>(sims_.size()); }
  int joints() const { return sim_.links; }
  int channels() const { return model_->channels(); }
  int obs_dim() const { return observation_dim(sim_.links, model_->channels()); }
  const SimConfig& sim_config() const { return sim_; }
  ScaeModel& model() { return *model_; }
  const LatentSampleBuffer& buffer() const { return *buffer_; }
  int episode_steps() const { return episode_steps_; }

  void reset_all();
  Eigen::MatrixXd observations();  // [obs_dim, envs]

  const SimState& sim_state(int env) const { return sims_[static_cast<std::size_t>(env)]; }
  const EpisodeLatentState& latent(int env) const { return latents_[static_cast<std::size_t>(env)]; }
  const Eigen::VectorXd& target(int env) const { return targets_[static_cast<std::size_t>(env)]; }
  const Eigen::VectorXd& last_action(int env) const { return last_actions_[static_cast<std::size_t>(env)]; }
  int episode_id(int env) const { return episode_ids_[static_cast<std::size_t>(env)]; }
  int step_in_episode(int env) const { return steps_[static_cast<std::size_t>(env)]; }
  std::mt19937_64& rng() { return rng_; }

  struct StepResult {
    Eigen::VectorXd reward;
    Eigen::VectorXd tracking;
    Eigen::VectorXd regularization;
    std::vector<char> done;
    std::vector<char> timeout;
    std::vector<char> fault;
    // Post-step observations of environments that finished, taken before the reset.
    Eigen::MatrixXd terminal_obs;
    // Realized state, its decoded target and the latent code that produced it.
    std::vector<Eigen::VectorXd> state;
    std::vector<Eigen::VectorXd> target;
    std::vector<LatentParams> latent;
    std::vector<int> episode;
    std::vector<int> step;
  };
  // `actions` [act_dim, envs] are PD joint targets, clipped to the joint limits.
  StepResult step(const Eigen::MatrixXd& actions, const RewardConfig& reward);

 private:
  void reset(int env);
  void refresh_targets(const std::vector<int>& envs);

  SimConfig sim_;
  ScaeModel* model_;
  const LatentSampleBuffer* buffer_;
  ObservationConfig obs_;
  int episode_steps_;
  std::mt19937_64 rng_;
  int next_episode_ = 0;
  std::vector<SimState> sims_;
  std::vector<EpisodeLatentState> latents_;
  std::vector<Eigen::VectorXd> targets_;
  std::vector<Eigen::VectorXd> last_actions_;
  std::vector<int> steps_;
  std::vector<int> episode_ids_;
};

// One iteration of experience, stored step-major: column t * envs + e.
struct RolloutBatch {
  int steps = 0;
  int envs = 0;
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::VectorXd log_prob;
  Eigen::VectorXd values;
  Eigen::VectorXd rewards;
  Eigen::VectorXd tracking;
  Eigen::VectorXd regularization;
  std::vector<char> dones;
  Eigen::VectorXd last_values;  // bootstrap value per env after the final step
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
  // (z, s) pairs for decoder fine-tuning
  std::vector<LatentParams> latents;
  Eigen::MatrixXd states;   // [d, steps * envs], physical units
  Eigen::MatrixXd targets;  // [d, steps * envs], physical units
  std::vector<int> episode;
  std::vector<int> episode_step;
  std::vector<int> motion;
  int faults = 0;

  int size() const { return steps * envs; }
};

// Runs `steps` control steps in every environment. `nets` may be null only
// in kRandom mode (uniform joint targets within the joint limits).
RolloutBatch collect_rollout(PolicyNets* nets, VecEnv& env, int steps, ActionMode mode, const RewardConfig& reward,
                             double gamma);

// Generalized advantage estimation over a step-major batch. Fills
// `advantages` and `returns`.
void compute_gae(RolloutBatch& batch, double gamma, double lambda);

// Zero mean, unit standard deviation; an (almost) constant vector becomes zeros.
void normalize_advantages(Eigen::VectorXd& adv);

struct PpoMinibatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::VectorXd old_log_prob;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

struct PpoLoss {
  double total = 0.0;
  double surrogate = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

// Clipped surrogate + value loss - entropy bonus; accumulates gradients into
// `nets` when `with_grad` is set.
PpoLoss ppo_loss(PolicyNets& nets, const PpoMinibatch& mb, const PpoConfig& config, bool with_grad);

// Mean KL(old || new) between diagonal Gaussians with shared std per net.
double gaussian_kl(const Eigen::MatrixXd& old_mean, const Eigen::VectorXd& old_log_std, const Eigen::MatrixXd& new_mean,
                   const Eigen::VectorXd& new_log_std);

struct PpoStats {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double lr = 0.0;  // used for this update
  int skipped = 0;  // minibatches dropped for non-finite gradients
};

// Adaptive learning rate: halve above 2x the KL target, grow by 1.5 below
// half of it, clamped to [1e-6, 1e-2].
double adapt_learning_rate(double lr, double kl, double kl_target);

class PpoTrainer {
 public:
  PpoTrainer(PolicyNets& nets, const PpoConfig& config);
  PpoStats update(RolloutBatch& batch, std::mt19937_64& rng);
  double lr() const { return adam_.lr(); }
  void set_lr(double lr) { adam_.set_lr(lr); }
  Adam& optimizer() { return adam_; }

 private:
  PolicyNets* nets_;
  PpoConfig config_;
  Adam adam_;
};

struct PretrainLogRow {
  int iter = 0;
  double mean_reward = 0.0;
  double tracking_reward = 0.0;
  double reg_reward = 0.0;
  double kl = 0.0;
  double lr = 0.0;
  double wallclock = 0.0;
};

struct PretrainOptions {
  std::filesystem::path log_csv;
  std::filesystem::path checkpoint;
  std::function<void(const PretrainLogRow&)> on_iteration;
};

struct PretrainResult {
  std::vector<PretrainLogRow> log;
  int faults = 0;
};

// PPO pre-training on targets sampled from `buffer`.
PretrainResult pretrain_policy(PolicyNets& nets, ScaeModel& model, const LatentSampleBuffer& buffer,
                               const SimConfig& sim, const PpoConfig& ppo, const RewardConfig& reward,
                               const ObservationConfig& obs, const PretrainOptions& options);

void write_pretrain_log_header(const std::filesystem::path& path);
void append_pretrain_log(const std::filesystem::path& path, const PretrainLogRow& row);

struct PolicyEvaluation {
  double tracking_reward = 0.0;  // mean per step
  double reward = 0.0;
  double tracking_mse = 0.0;  // mean squared error in the model's normalized space
};

// Mean statistics of `iterations` rollouts of `steps` steps. `nets` may be
// null in kRandom mode.
PolicyEvaluation evaluate_policy(PolicyNets* nets, VecEnv& env, int steps, int iterations, ActionMode mode,
                                 const RewardConfig& reward);

}  // namespace mimic

#endif  // MIMIC_POLICY_HPP_
