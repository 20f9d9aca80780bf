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

#include "mimic/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <span>

#include "mimic/error.hpp"

namespace mimic {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // log(2 pi)

Eigen::VectorXd to_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// configs

void ObservationConfig::validate() const {
  if (q_noise < 0.0 || qd_noise < 0.0) throw ValidationError("observation: noise levels must be >= 0");
}

void ObservationConfig::write(KvDocument& doc, const std::string& section) const {
  doc.set_bool(section, "noise", noise);
  doc.set_double(section, "q_noise", q_noise);
  doc.set_double(section, "qd_noise", qd_noise);
}

ObservationConfig ObservationConfig::read(const KvDocument& doc, const std::string& section) {
  ObservationConfig c;
  c.noise = doc.get_bool(section, "noise", c.noise);
  c.q_noise = doc.get_double(section, "q_noise", c.q_noise);
  c.qd_noise = doc.get_double(section, "qd_noise", c.qd_noise);
  c.validate();
  return c;
}

void RewardConfig::validate() const {
  if (w_q < 0.0 || w_qd < 0.0) throw ValidationError("reward: tracking weights must be >= 0");
  if (sigma_q < 0.0 || sigma_qd < 0.0) throw ValidationError("reward: temperatures must be >= 0");
  if (w_action_rate > 0.0 || w_joint_acc > 0.0 || w_torque > 0.0) {
    throw ValidationError("reward: regularization weights must be <= 0");
  }
}

void RewardConfig::write(KvDocument& doc, const std::string& section) const {
  doc.set_double(section, "w_q", w_q);
  doc.set_double(section, "w_qd", w_qd);
  doc.set_double(section, "sigma_q", sigma_q);
  doc.set_double(section, "sigma_qd", sigma_qd);
  doc.set_double(section, "w_action_rate", w_action_rate);
  doc.set_double(section, "w_joint_acc", w_joint_acc);
  doc.set_double(section, "w_torque", w_torque);
}

RewardConfig RewardConfig::read(const KvDocument& doc, const std::string& section) {
  RewardConfig c;
  c.w_q = doc.get_double(section, "w_q", c.w_q);
  c.w_qd = doc.get_double(section, "w_qd", c.w_qd);
  c.sigma_q = doc.get_double(section, "sigma_q", c.sigma_q);
  c.sigma_qd = doc.get_double(section, "sigma_qd", c.sigma_qd);
  c.w_action_rate = doc.get_double(section, "w_action_rate", c.w_action_rate);
  c.w_joint_acc = doc.get_double(section, "w_joint_acc", c.w_joint_acc);
  c.w_torque = doc.get_double(section, "w_torque", c.w_torque);
  c.validate();
  return c;
}

void PpoConfig::validate() const {
  if (!(lr > 0.0) || !(kl_target > 0.0)) throw ValidationError("ppo: lr and kl_target must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("ppo: gamma must lie in (0, 1] and lambda in [0, 1]");
  }
  if (!(clip > 0.0 && clip < 1.0)) throw ValidationError("ppo: clip must lie in (0, 1)");
  if (entropy_coef < 0.0 || value_coef < 0.0 || !(max_grad_norm > 0.0)) {
    throw ValidationError("ppo: coefficients must be >= 0 and max_grad_norm positive");
  }
  if (steps_per_iter < 1 || epochs < 1 || minibatches < 1 || envs < 1 || max_iters < 0) {
    throw ValidationError("ppo: steps_per_iter, epochs, minibatches and envs must be >= 1");
  }
  if (steps_per_iter * envs < minibatches) throw ValidationError("ppo: fewer transitions than minibatches");
  if (!(episode_seconds > 0.0)) throw ValidationError("ppo: episode_seconds must be positive");
  if (hidden.empty()) throw ValidationError("ppo: at least one hidden layer");
  for (int h : hidden) {
    if (h < 1) throw ValidationError("ppo: hidden widths must be positive");
  }
  if (init_log_std < PolicyNets::kMinLogStd || init_log_std > PolicyNets::kMaxLogStd) {
    throw ValidationError("ppo: init_log_std outside [-20, 2]");
  }
}

void PpoConfig::write(KvDocument& doc, const std::string& section) const {
  doc.set_double(section, "lr", lr);
  doc.set_double(section, "kl_target", kl_target);
  doc.set_double(section, "gamma", gamma);
  doc.set_double(section, "lambda", lambda);
  doc.set_double(section, "clip", clip);
  doc.set_double(section, "entropy_coef", entropy_coef);
  doc.set_double(section, "value_coef", value_coef);
  doc.set_double(section, "max_grad_norm", max_grad_norm);
  doc.set_int(section, "steps_per_iter", steps_per_iter);
  doc.set_int(section, "epochs", epochs);
  doc.set_int(section, "minibatches", minibatches);
  doc.set_int(section, "envs", envs);
  doc.set_int(section, "max_iters", max_iters);
  doc.set_double(section, "episode_seconds", episode_seconds);
  doc.set_doubles(section, "hidden", std::vector<double>(hidden.begin(), hidden.end()));
  doc.set_double(section, "init_log_std", init_log_std);
  doc.set_int(section, "seed", static_cast<long>(seed));
}

PpoConfig PpoConfig::read(const KvDocument& doc, const std::string& section) {
  PpoConfig c;
  c.lr = doc.get_double(section, "lr", c.lr);
  c.kl_target = doc.get_double(section, "kl_target", c.kl_target);
  c.gamma = doc.get_double(section, "gamma", c.gamma);
  c.lambda = doc.get_double(section, "lambda", c.lambda);
  c.clip = doc.get_double(section, "clip", c.clip);
  c.entropy_coef = doc.get_double(section, "entropy_coef", c.entropy_coef);
  c.value_coef = doc.get_double(section, "value_coef", c.value_coef);
  c.max_grad_norm = doc.get_double(section, "max_grad_norm", c.max_grad_norm);
  c.steps_per_iter = static_cast<int>(doc.get_int(section, "steps_per_iter", c.steps_per_iter));
  c.epochs = static_cast<int>(doc.get_int(section, "epochs", c.epochs));
  c.minibatches = static_cast<int>(doc.get_int(section, "minibatches", c.minibatches));
  c.envs = static_cast<int>(doc.get_int(section, "envs", c.envs));
  c.max_iters = static_cast<int>(doc.get_int(section, "max_iters", c.max_iters));
  c.episode_seconds = doc.get_double(section, "episode_seconds", c.episode_seconds);
  const std::vector<double> h = doc.get_doubles(section, "hidden", std::vector<double>(c.hidden.begin(), c.hidden.end()));
  c.hidden.clear();
  for (double v : h) c.hidden.push_back(static_cast<int>(v));
  c.init_log_std = doc.get_double(section, "init_log_std", c.init_log_std);
  c.seed = static_cast<std::uint64_t>(doc.get_int(section, "seed", static_cast<long>(c.seed)));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// observation and rewards

int observation_dim(int joints, int channels) { return 3 * joints + 5 * channels; }

void build_observation(const SimState& sim, const Eigen::VectorXd& last_action, const LatentParams& latent,
                       const ObservationConfig& config, std::mt19937_64* rng, Eigen::Ref<Eigen::VectorXd> out) {
  const auto n = sim.q.size();
  const int c = latent.channels();
  if (out.size() != observation_dim(static_cast<int>(n), c) || last_action.size() != n) {
    throw ShapeError("observation: buffer or action width does not match the layout");
  }
  out.segment(0, n) = sim.q;
  out.segment(n, n) = sim.qd;
  if (config.noise && rng != nullptr) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) out(i) += config.q_noise * g(*rng);
    for (Eigen::Index i = 0; i < n; ++i) out(n + i) += config.qd_noise * g(*rng);
  }
  out.segment(2 * n, n) = last_action;
  const Eigen::Index base = 3 * n;
  for (int k = 0; k < c; ++k) {
    const double angle = 2.0 * std::numbers::pi * latent.phase(k);
    out(base + k) = std::sin(angle);
    out(base + c + k) = std::cos(angle);
  }
  out.segment(base + 2 * c, c) = latent.frequency;
  out.segment(base + 3 * c, c) = latent.amplitude;
  out.segment(base + 4 * c, c) = latent.offset;
}

TrackingReward tracking_reward(const RewardConfig& config, const Eigen::VectorXd& target, const Eigen::VectorXd& state) {
  if (target.size() != state.size() || state.size() % 2 != 0 || state.size() == 0) {
    throw ShapeError("tracking reward: target and state must both be [q; qd] of equal length");
  }
  const Eigen::Index n = state.size() / 2;
  TrackingReward r;
  r.q = std::exp(-config.sigma_q * (target.head(n) - state.head(n)).squaredNorm());
  r.qd = std::exp(-config.sigma_qd * (target.tail(n) - state.tail(n)).squaredNorm());
  r.total = config.w_q * r.q + config.w_qd * r.qd;
  return r;
}

double regularization_reward(const RewardConfig& config, const Eigen::VectorXd& prev_action,
                             const Eigen::VectorXd& action, const Eigen::VectorXd& prev_qd, const Eigen::VectorXd& qd,
                             const Eigen::VectorXd& torque, double dt) {
  return config.w_action_rate * (prev_action - action).squaredNorm() +
         config.w_joint_acc * ((prev_qd - qd) / dt).squaredNorm() + config.w_torque * torque.squaredNorm();
}

// ---------------------------------------------------------------------------
// networks

PolicyNets::PolicyNets(int obs_dim, int act_dim, const std::vector<int>& hidden, double init_log_std,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  actor = Mlp(obs_dim, hidden, act_dim, rng, 0.1);
  critic = Mlp(obs_dim, hidden, 1, rng);
  log_std = Eigen::VectorXd::Constant(act_dim, init_log_std);
  log_std_grad = Eigen::VectorXd::Zero(act_dim);
}

Eigen::VectorXd PolicyNets::value(const Eigen::MatrixXd& obs) const { return critic.forward(obs).row(0).transpose(); }

Eigen::VectorXd PolicyNets::log_prob(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& actions) const {
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  const Eigen::ArrayXXd z = (actions - mean).array().colwise() * inv_std;
  const double norm = log_std.sum() + 0.5 * kLogTwoPi * static_cast<double>(log_std.size());
  return (-0.5 * z.square().colwise().sum() - norm).matrix().transpose();
}

double PolicyNets::entropy() const {
  return log_std.sum() + (0.5 + 0.5 * kLogTwoPi) * static_cast<double>(log_std.size());
}

void PolicyNets::zero_grad() {
  actor.zero_grad();
  critic.zero_grad();
  log_std_grad.setZero(log_std.size());
}

std::vector<ParamRef> PolicyNets::param_refs() {
  std::vector<ParamRef> out = actor.param_refs();
  const std::vector<ParamRef> c = critic.param_refs();
  out.insert(out.end(), c.begin(), c.end());
  out.push_back({{log_std.data(), static_cast<std::size_t>(log_std.size())},
                 {log_std_grad.data(), static_cast<std::size_t>(log_std_grad.size())}});
  return out;
}

bool PolicyNets::finite() const { return actor.finite() && critic.finite() && log_std.allFinite(); }

void PolicyNets::clamp_log_std() { log_std = log_std.cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd); }

void PolicyNets::write(Checkpoint& ck) const {
  actor.write(ck, "actor");
  critic.write(ck, "critic");
  ck.put("log_std", std::vector<double>(log_std.data(), log_std.data() + log_std.size()));
}

void PolicyNets::read(const Checkpoint& ck) {
  actor.read(ck, "actor");
  critic.read(ck, "critic");
  const Tensor& ls = ck.at("log_std");
  if (ls.numel() != static_cast<std::size_t>(actor.outputs())) throw ParseError("policy: log_std width mismatch");
  log_std = to_vector(ls.data);
  log_std_grad = Eigen::VectorXd::Zero(log_std.size());
  if (critic.inputs() != actor.inputs() || critic.outputs() != 1) throw ParseError("policy: critic shape mismatch");
}

void PolicyNets::save(const std::filesystem::path& path, const KvDocument& config) const {
  Checkpoint ck;
  ck.kind = "policy";
  ck.config = config;
  write(ck);
  ck.save(path);
}

PolicyNets PolicyNets::load(const std::filesystem::path& path, KvDocument* config) {
  const Checkpoint ck = Checkpoint::load(path, "policy");
  PolicyNets nets;
  nets.read(ck);
  if (config) *config = ck.config;
  return nets;
}

// ---------------------------------------------------------------------------
// environments

VecEnv::VecEnv(const SimConfig& sim, ScaeModel& model, const LatentSampleBuffer& buffer, int envs,
               double episode_seconds, const ObservationConfig& obs, std::uint64_t seed)
    : sim_(sim), model_(&model), buffer_(&buffer), obs_(obs), rng_(seed) {
  sim_.validate();
  obs_.validate();
  if (envs < 1) throw ValidationError("env: at least one environment");
  if (buffer.empty()) throw ContractError("env: latent buffer is empty");
  if (model.config().state_dim != 2 * sim.links) {
    throw ValidationError("env: model state dimension " + std::to_string(model.config().state_dim) +
                          " is not 2 x links (" + std::to_string(2 * sim.links) + ")");
  }
  if (model.state_mean.size() != model.config().state_dim) {
    throw ContractError("env: SCAE model carries no data normalization statistics");
  }
  episode_steps_ = std::max(1, static_cast<int>(std::lround(episode_seconds / sim.dt)));
  const auto n = static_cast<std::size_t>(envs);
  sims_.resize(n);
  latents_.resize(n);
  targets_.resize(n);
  last_actions_.resize(n);
  steps_.assign(n, 0);
  episode_ids_.assign(n, 0);
  reset_all();
}

void VecEnv::refresh_targets(const std::vector<int>& envs) {
  if (envs.empty()) return;
  std::vector<EpisodeLatentState> states;
  states.reserve(envs.size());
  for (int e : envs) states.push_back(latents_[static_cast<std::size_t>(e)]);
  const Eigen::MatrixXd t = synthesize_targets(*model_, states);
  for (std::size_t i = 0; i < envs.size(); ++i) targets_[static_cast<std::size_t>(envs[i])] = t.row(static_cast<Eigen::Index>(i)).transpose();
}

void VecEnv::reset(int e) {
  const auto i = static_cast<std::size_t>(e);
  const int n = sim_.links;
  const Eigen::VectorXd& t = targets_[i];
  SimState s;
  s.q = t.head(n).cwiseMax(to_vector(sim_.joint_min)).cwiseMin(to_vector(sim_.joint_max));
  s.qd = t.tail(n).cwiseMax(-to_vector(sim_.velocity_limit)).cwiseMin(to_vector(sim_.velocity_limit));
  sims_[i] = s;
  last_actions_[i] = s.q;
  steps_[i] = 0;
  episode_ids_[i] = next_episode_++;
}

void VecEnv::reset_all() {
  std::vector<int> all(sims_.size());
  std::iota(all.begin(), all.end(), 0);
  for (int e : all) latents_[static_cast<std::size_t>(e)] = sample_episode_target(*buffer_, rng_);
  refresh_targets(all);
  for (int e : all) reset(e);
}

Eigen::MatrixXd VecEnv::observations() {
  Eigen::MatrixXd out(obs_dim(), size());
  for (int e = 0; e < size(); ++e) {
    const auto i = static_cast<std::size_t>(e);
    build_observation(sims_[i], last_actions_[i], latents_[i].params(), obs_, &rng_, out.col(e));
  }
  return out;
}

VecEnv::StepResult VecEnv::step(const Eigen::MatrixXd& actions, const RewardConfig& reward) {
  const int n = sim_.links, envs = size();
  if (actions.rows() != n || actions.cols() != envs) throw ShapeError("env step: actions must be [joints, envs]");
  const Eigen::VectorXd lo = to_vector(sim_.joint_min), hi = to_vector(sim_.joint_max);
  StepResult r;
  r.reward = Eigen::VectorXd::Zero(envs);
  r.tracking = Eigen::VectorXd::Zero(envs);
  r.regularization = Eigen::VectorXd::Zero(envs);
  r.done.assign(static_cast<std::size_t>(envs), 0);
  r.timeout.assign(static_cast<std::size_t>(envs), 0);
  r.fault.assign(static_cast<std::size_t>(envs), 0);
  std::vector<Eigen::VectorXd> applied(static_cast<std::size_t>(envs)), torque(static_cast<std::size_t>(envs)),
      prev_qd(static_cast<std::size_t>(envs));
  std::vector<int> all(static_cast<std::size_t>(envs));
  std::iota(all.begin(), all.end(), 0);
  for (int e : all) {
    const auto i = static_cast<std::size_t>(e);
    applied[i] = actions.col(e).cwiseMax(lo).cwiseMin(hi);
    prev_qd[i] = sims_[i].qd;
    try {
      sims_[i] = step_pd(sim_, sims_[i], applied[i], &torque[i]);
    } catch (const SimulationFault&) {
      r.fault[i] = 1;
    }
    latents_[i] = step_phase(latents_[i], sim_.dt);
    ++steps_[i];
  }
  refresh_targets(all);
  std::vector<int> finished;
  for (int e : all) {
    const auto i = static_cast<std::size_t>(e);
    Eigen::VectorXd s(2 * n);
    s << sims_[i].q, sims_[i].qd;
    r.state.push_back(s);
    r.target.push_back(targets_[i]);
    r.latent.push_back(latents_[i].params());
    r.episode.push_back(r.fault[i] ? -1 : episode_ids_[i]);
    r.step.push_back(steps_[i]);
    if (!r.fault[i]) {
      const TrackingReward tr = tracking_reward(reward, targets_[i], s);
      r.tracking(e) = tr.total;
      r.regularization(e) =
          regularization_reward(reward, last_actions_[i], applied[i], prev_qd[i], sims_[i].qd, torque[i], sim_.dt);
      r.reward(e) = r.tracking(e) + r.regularization(e);
      last_actions_[i] = applied[i];
    }
    r.timeout[i] = !r.fault[i] && steps_[i] >= episode_steps_;
    r.done[i] = r.fault[i] || r.timeout[i];
    if (r.done[i]) finished.push_back(e);
  }
  r.terminal_obs = Eigen::MatrixXd::Zero(obs_dim(), envs);
  for (int e : finished) {
    const auto i = static_cast<std::size_t>(e);
    if (r.timeout[i]) build_observation(sims_[i], last_actions_[i], latents_[i].params(), obs_, &rng_, r.terminal_obs.col(e));
    latents_[i] = sample_episode_target(*buffer_, rng_);
  }
  refresh_targets(finished);
  for (int e : finished) reset(e);
  return r;
}

// ---------------------------------------------------------------------------
// rollouts

RolloutBatch collect_rollout(PolicyNets* nets, VecEnv& env, int steps, ActionMode mode, const RewardConfig& reward,
                             double gamma) {
  if (nets == nullptr && mode != ActionMode::kRandom) throw ContractError("rollout: a policy is required");
  if (nets && nets->obs_dim() != env.obs_dim()) throw ShapeError("rollout: policy and environment disagree on observation width");
  const int envs = env.size(), n = env.joints(), total = steps * envs, d = 2 * n;
  RolloutBatch b;
  b.steps = steps;
  b.envs = envs;
  b.obs.resize(env.obs_dim(), total);
  b.actions.resize(n, total);
  b.log_prob = Eigen::VectorXd::Zero(total);
  b.values = Eigen::VectorXd::Zero(total);
  b.rewards.resize(total);
  b.tracking.resize(total);
  b.regularization.resize(total);
  b.dones.assign(static_cast<std::size_t>(total), 0);
  b.states.resize(d, total);
  b.targets.resize(d, total);
  const SimConfig& sim = env.sim_config();
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd obs = env.observations();
  for (int t = 0; t < steps; ++t) {
    Eigen::MatrixXd actions(n, envs);
    const Eigen::Index col = static_cast<Eigen::Index>(t) * envs;
    if (mode == ActionMode::kRandom) {
      for (int e = 0; e < envs; ++e)
        for (int j = 0; j < n; ++j) {
          std::uniform_real_distribution<double> u(sim.joint_min[static_cast<std::size_t>(j)], sim.joint_max[static_cast<std::size_t>(j)]);
          actions(j, e) = u(env.rng());
        }
    } else {
      const Eigen::MatrixXd mean = nets->mean(obs);
      actions = mean;
      if (mode == ActionMode::kStochastic) {
        const Eigen::VectorXd std = nets->log_std.array().exp().matrix();
        for (int e = 0; e < envs; ++e)
          for (int j = 0; j < n; ++j) actions(j, e) += std(j) * gauss(env.rng());
      }
      b.log_prob.segment(col, envs) = nets->log_prob(mean, actions);
      b.values.segment(col, envs) = nets->value(obs);
    }
    b.obs.middleCols(col, envs) = obs;
    b.actions.middleCols(col, envs) = actions;
    VecEnv::StepResult r = env.step(actions, reward);
    b.rewards.segment(col, envs) = r.reward;
    b.tracking.segment(col, envs) = r.tracking;
    b.regularization.segment(col, envs) = r.regularization;
    // time-outs are not failures: bootstrap from the value of the final state
    if (nets) {
      std::vector<int> timed_out;
      for (int e = 0; e < envs; ++e) {
        if (r.timeout[static_cast<std::size_t>(e)]) timed_out.push_back(e);
      }
      if (!timed_out.empty()) {
        const Eigen::VectorXd v = nets->value(r.terminal_obs(Eigen::all, timed_out));
        for (std::size_t k = 0; k < timed_out.size(); ++k) b.rewards(col + timed_out[k]) += gamma * v(static_cast<Eigen::Index>(k));
      }
    }
    for (int e = 0; e < envs; ++e) {
      const auto i = static_cast<std::size_t>(e);
      b.dones[static_cast<std::size_t>(col + e)] = r.done[i];
      b.faults += r.fault[i];
      b.states.col(col + e) = r.state[i];
      b.targets.col(col + e) = r.target[i];
      b.latents.push_back(std::move(r.latent[i]));
      b.episode.push_back(r.episode[i]);
      b.episode_step.push_back(r.step[i]);
      const LatentSampleBuffer& buf = env.buffer();
      b.motion.push_back(buf[env.latent(e).source()].motion);
    }
    obs = env.observations();
  }
  b.last_values = nets ? nets->value(obs) : Eigen::VectorXd::Zero(envs);
  return b;
}

void compute_gae(RolloutBatch& batch, double gamma, double lambda) {
  const int T = batch.steps, E = batch.envs;
  batch.advantages.resize(batch.size());
  for (int e = 0; e < E; ++e) {
    double adv = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      const int idx = t * E + e;
      const double next_value = t == T - 1 ? batch.last_values(e) : batch.values(idx + E);
      const double nonterminal = batch.dones[static_cast<std::size_t>(idx)] ? 0.0 : 1.0;
      const double delta = batch.rewards(idx) + gamma * next_value * nonterminal - batch.values(idx);
      adv = delta + gamma * lambda * nonterminal * adv;
      batch.advantages(idx) = adv;
    }
  }
  batch.returns = batch.advantages + batch.values;
}

void normalize_advantages(Eigen::VectorXd& adv) {
  if (adv.size() == 0) return;
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().mean();
  if (!(std::sqrt(var) > 1e-8 * std::max(1.0, std::abs(mean)))) {
    adv.setZero();
    return;
  }
  adv = ((adv.array() - mean) / std::sqrt(var)).matrix();
}

// ---------------------------------------------------------------------------
// PPO

PpoLoss ppo_loss(PolicyNets& nets, const PpoMinibatch& mb, const PpoConfig& config, bool with_grad) {
  const auto n = mb.obs.cols();
  if (n == 0) throw ContractError("ppo: empty minibatch");
  Mlp::Cache actor_cache, critic_cache;
  const Eigen::MatrixXd mean = nets.actor.forward(mb.obs, with_grad ? &actor_cache : nullptr);
  const Eigen::VectorXd value = nets.critic.forward(mb.obs, with_grad ? &critic_cache : nullptr).row(0).transpose();
  const Eigen::VectorXd logp = nets.log_prob(mean, mb.actions);
  const Eigen::ArrayXd ratio = (logp - mb.old_log_prob).array().exp();
  const Eigen::ArrayXd clipped = ratio.cwiseMax(1.0 - config.clip).cwiseMin(1.0 + config.clip);
  const Eigen::ArrayXd s1 = ratio * mb.advantages.array(), s2 = clipped * mb.advantages.array();
  PpoLoss out;
  out.surrogate = -s1.min(s2).mean();
  out.value = (mb.returns - value).squaredNorm() / static_cast<double>(n);
  out.entropy = nets.entropy();
  out.clip_fraction = ((ratio - 1.0).abs() > config.clip).cast<double>().mean();
  out.total = out.surrogate + config.value_coef * out.value - config.entropy_coef * out.entropy;
  if (!with_grad) return out;

  // d total / d log_prob, per sample
  const Eigen::ArrayXd g = (s1 <= s2).select(-ratio * mb.advantages.array(), 0.0) / static_cast<double>(n);
  const Eigen::ArrayXd inv_var = (-2.0 * nets.log_std.array()).exp();
  const Eigen::MatrixXd diff = mb.actions - mean;
  Eigen::MatrixXd dmean = diff;
  for (Eigen::Index c = 0; c < n; ++c) dmean.col(c) = (diff.col(c).array() * inv_var * g(c)).matrix();
  nets.actor.backward(actor_cache, dmean);
  const Eigen::ArrayXXd z2 = diff.array().square().colwise() * inv_var;
  for (Eigen::Index j = 0; j < nets.log_std.size(); ++j) {
    nets.log_std_grad(j) += ((z2.row(j).transpose() - 1.0) * g).sum() - config.entropy_coef;
  }
  const Eigen::MatrixXd dvalue = (2.0 * config.value_coef / static_cast<double>(n) * (value - mb.returns)).transpose();
  nets.critic.backward(critic_cache, dvalue);
  return out;
}

double gaussian_kl(const Eigen::MatrixXd& old_mean, const Eigen::VectorXd& old_log_std, const Eigen::MatrixXd& new_mean,
                   const Eigen::VectorXd& new_log_std) {
  const Eigen::ArrayXd old_var = (2.0 * old_log_std.array()).exp(), new_var = (2.0 * new_log_std.array()).exp();
  const double per_dim = (new_log_std.array() - old_log_std.array() + old_var / (2.0 * new_var) - 0.5).sum();
  const Eigen::ArrayXXd d2 = (old_mean - new_mean).array().square().colwise() / (2.0 * new_var);
  return per_dim + d2.colwise().sum().mean();
}

double adapt_learning_rate(double lr, double kl, double kl_target) {
  if (kl > 2.0 * kl_target) lr *= 0.5;
  else if (kl < 0.5 * kl_target) lr *= 1.5;
  return std::clamp(lr, 1e-6, 1e-2);
}

PpoTrainer::PpoTrainer(PolicyNets& nets, const PpoConfig& config)
    : nets_(&nets), config_(config), adam_(nets.param_refs(), AdamConfig{config.lr, 0.9, 0.999, 1e-8, 0.0}) {
  config_.validate();
}

PpoStats PpoTrainer::update(RolloutBatch& batch, std::mt19937_64& rng) {
  compute_gae(batch, config_.gamma, config_.lambda);
  Eigen::VectorXd adv = batch.advantages;
  normalize_advantages(adv);
  const Eigen::MatrixXd old_mean = nets_->mean(batch.obs);
  const Eigen::VectorXd old_log_std = nets_->log_std;
  const std::vector<ParamRef> refs = nets_->param_refs();
  PpoStats stats;
  stats.lr = adam_.lr();
  std::vector<int> order(static_cast<std::size_t>(batch.size()));
  int updates = 0;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int m = 0; m < config_.minibatches; ++m) {
      const std::size_t lo = order.size() * static_cast<std::size_t>(m) / static_cast<std::size_t>(config_.minibatches);
      const std::size_t hi = order.size() * static_cast<std::size_t>(m + 1) / static_cast<std::size_t>(config_.minibatches);
      const std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
      PpoMinibatch mb{batch.obs(Eigen::all, idx), batch.actions(Eigen::all, idx), batch.log_prob(idx), adv(idx),
                      batch.returns(idx)};
      nets_->zero_grad();
      const PpoLoss loss = ppo_loss(*nets_, mb, config_, true);
      if (!std::isfinite(loss.total) || !grads_finite(refs)) {
        ++stats.skipped;
        continue;
      }
      clip_grad_norm(refs, config_.max_grad_norm);
      adam_.step();
      nets_->clamp_log_std();
      stats.surrogate += loss.surrogate;
      stats.value_loss += loss.value;
      stats.entropy += loss.entropy;
      stats.clip_fraction += loss.clip_fraction;
      ++updates;
    }
  }
  nets_->zero_grad();
  if (updates > 0) {
    stats.surrogate /= updates;
    stats.value_loss /= updates;
    stats.entropy /= updates;
    stats.clip_fraction /= updates;
  }
  stats.kl = gaussian_kl(old_mean, old_log_std, nets_->mean(batch.obs), nets_->log_std);
  adam_.set_lr(adapt_learning_rate(adam_.lr(), stats.kl, config_.kl_target));
  return stats;
}

// ---------------------------------------------------------------------------
// pre-training

void write_pretrain_log_header(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << "iter,mean_reward,tracking_reward,reg_reward,kl,lr,wallclock\n";
}

void append_pretrain_log(const std::filesystem::path& path, const PretrainLogRow& r) {
  std::ofstream out(path, std::ios::app);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.iter, r.mean_reward, r.tracking_reward,
                r.reg_reward, r.kl, r.lr, r.wallclock);
  out << buf;
}

PretrainResult pretrain_policy(PolicyNets& nets, ScaeModel& model, const LatentSampleBuffer& buffer,
                               const SimConfig& sim, const PpoConfig& ppo, const RewardConfig& reward,
                               const ObservationConfig& obs, const PretrainOptions& options) {
  ppo.validate();
  reward.validate();
  VecEnv env(sim, model, buffer, ppo.envs, ppo.episode_seconds, obs, ppo.seed);
  if (nets.obs_dim() != env.obs_dim() || nets.act_dim() != sim.links) {
    throw ValidationError("pretrain: policy shape does not match the environment");
  }
  PpoTrainer trainer(nets, ppo);
  std::mt19937_64 rng(ppo.seed ^ 0x5851f42d4c957f2dull);
  if (!options.log_csv.empty()) write_pretrain_log_header(options.log_csv);
  const auto t0 = std::chrono::steady_clock::now();
  PretrainResult result;
  for (int iter = 1; iter <= ppo.max_iters; ++iter) {
    RolloutBatch batch = collect_rollout(&nets, env, ppo.steps_per_iter, ActionMode::kStochastic, reward, ppo.gamma);
    const double mean_reward = batch.rewards.mean();
    const PpoStats stats = trainer.update(batch, rng);
    PretrainLogRow row;
    row.iter = iter;
    row.mean_reward = mean_reward;
    row.tracking_reward = batch.tracking.mean();
    row.reg_reward = batch.regularization.mean();
    row.kl = stats.kl;
    row.lr = stats.lr;
    row.wallclock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.faults += batch.faults;
    result.log.push_back(row);
    if (!options.log_csv.empty()) append_pretrain_log(options.log_csv, row);
    if (options.on_iteration) options.on_iteration(row);
  }
  if (!options.checkpoint.empty()) {
    KvDocument doc;
    ppo.write(doc);
    reward.write(doc);
    obs.write(doc);
    nets.save(options.checkpoint, doc);
  }
  return result;
}

PolicyEvaluation evaluate_policy(PolicyNets* nets, VecEnv& env, int steps, int iterations, ActionMode mode,
                                 const RewardConfig& reward) {
  PolicyEvaluation ev;
  const ScaeModel& model = env.model();
  long count = 0;
  for (int i = 0; i < iterations; ++i) {
    const RolloutBatch b = collect_rollout(nets, env, steps, mode, reward, 0.99);
    ev.tracking_reward += b.tracking.sum();
    ev.reward += b.tracking.sum() + b.regularization.sum();
    const Eigen::MatrixXd err = (b.targets - b.states).array().colwise() / model.state_std.array();
    ev.tracking_mse += err.squaredNorm() / static_cast<double>(err.rows());
    count += b.size();
  }
  if (count > 0) {
    ev.tracking_reward /= static_cast<double>(count);
    ev.reward /= static_cast<double>(count);
    ev.tracking_mse /= static_cast<double>(count);
  }
  return ev;
}

}  // namespace mimic
