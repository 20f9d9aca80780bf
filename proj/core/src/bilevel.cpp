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

#include "mimic/bilevel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>

#include "mimic/error.hpp"
#include "mimic/graph.hpp"
#include "mimic/latent_ops.hpp"

namespace mimic {

namespace {

const char* mode_name(ActionMode m) {
  switch (m) {
    case ActionMode::kStochastic: return "stochastic";
    case ActionMode::kDeterministic: return "deterministic";
    case ActionMode::kRandom: return "random";
  }
  return "stochastic";
}

ActionMode parse_mode(const std::string& s) {
  if (s == "stochastic") return ActionMode::kStochastic;
  if (s == "deterministic") return ActionMode::kDeterministic;
  if (s == "random") return ActionMode::kRandom;
  throw ValidationError("bmi: unknown policy_mode '" + s + "' (stochastic, deterministic, random)");
}

// Episodes of every motion: latent start states plus their decoded target trajectories.
struct ProbeEpisodes {
  std::vector<int> motion;
  std::vector<EpisodeLatentState> start;
  std::vector<Eigen::MatrixXd> targets;  // steps x d, physical units
};

ProbeEpisodes decode_probe_episodes(ScaeModel& model, const LatentSampleBuffer& buffer, double dt, int motions,
                                    int episodes, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(-0.5, 0.5);
  ProbeEpisodes out;
  for (int m = 0; m < motions; ++m) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      if (buffer[i].motion == m) pool.push_back(i);
    }
    if (pool.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int e = 0; e < episodes; ++e) {
      const std::size_t src = pool[pick(rng)];
      const int c = buffer[src].params.channels();
      Eigen::VectorXd ph(c);
      for (int k = 0; k < c; ++k) ph(k) = phase(rng);
      out.motion.push_back(m);
      out.start.emplace_back(buffer[src].params, ph, src);
    }
  }
  const int d = model.config().state_dim;
  out.targets.assign(out.start.size(), Eigen::MatrixXd(steps, d));
  std::vector<EpisodeLatentState> cur = out.start;
  for (int t = 0; t < steps && !cur.empty(); ++t) {
    const Eigen::MatrixXd s = synthesize_targets(model, cur);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      out.targets[i].row(t) = s.row(static_cast<Eigen::Index>(i));
      cur[i] = step_phase(cur[i], dt);
    }
  }
  return out;
}

}  // namespace

void BmiConfig::validate() const {
  if (outer_iters < 0 || policy_iters < 1) throw ValidationError("bmi: outer_iters >= 0 and policy_iters >= 1 required");
  if (decoder_samples < 1 || decoder_epochs < 1 || decoder_minibatches < 1) {
    throw ValidationError("bmi: decoder_samples, decoder_epochs and decoder_minibatches must be >= 1");
  }
  if (decoder_samples < decoder_minibatches) throw ValidationError("bmi: fewer decoder samples than minibatches");
  if (decoder_lr < 0.0 || beta_ft < 0.0) throw ValidationError("bmi: decoder_lr and beta_ft must be >= 0");
  if (probe_episodes < 1 || probe_steps < 3 || eval_envs < 1 || eval_steps < 1) {
    throw ValidationError("bmi: probe_episodes >= 1, probe_steps >= 3, eval_envs and eval_steps >= 1 required");
  }
}

void BmiConfig::write(KvDocument& doc, const std::string& section) const {
  doc.set_int(section, "outer_iters", outer_iters);
  doc.set_int(section, "policy_iters", policy_iters);
  doc.set_int(section, "decoder_samples", decoder_samples);
  doc.set_int(section, "decoder_epochs", decoder_epochs);
  doc.set_int(section, "decoder_minibatches", decoder_minibatches);
  doc.set_double(section, "decoder_lr", decoder_lr);
  doc.set_double(section, "beta_ft", beta_ft);
  doc.set_bool(section, "train_policy", train_policy);
  doc.set(section, "policy_mode", mode_name(policy_mode));
  doc.set_int(section, "probe_episodes", probe_episodes);
  doc.set_int(section, "probe_steps", probe_steps);
  doc.set_int(section, "eval_envs", eval_envs);
  doc.set_int(section, "eval_steps", eval_steps);
  doc.set_int(section, "seed", static_cast<long>(seed));
}

BmiConfig BmiConfig::read(const KvDocument& doc, const std::string& section) {
  BmiConfig c;
  c.outer_iters = static_cast<int>(doc.get_int(section, "outer_iters", c.outer_iters));
  c.policy_iters = static_cast<int>(doc.get_int(section, "policy_iters", c.policy_iters));
  c.decoder_samples = static_cast<int>(doc.get_int(section, "decoder_samples", c.decoder_samples));
  c.decoder_epochs = static_cast<int>(doc.get_int(section, "decoder_epochs", c.decoder_epochs));
  c.decoder_minibatches = static_cast<int>(doc.get_int(section, "decoder_minibatches", c.decoder_minibatches));
  c.decoder_lr = doc.get_double(section, "decoder_lr", c.decoder_lr);
  c.beta_ft = doc.get_double(section, "beta_ft", c.beta_ft);
  c.train_policy = doc.get_bool(section, "train_policy", c.train_policy);
  c.policy_mode = parse_mode(doc.get_string(section, "policy_mode", mode_name(c.policy_mode)));
  c.probe_episodes = static_cast<int>(doc.get_int(section, "probe_episodes", c.probe_episodes));
  c.probe_steps = static_cast<int>(doc.get_int(section, "probe_steps", c.probe_steps));
  c.eval_envs = static_cast<int>(doc.get_int(section, "eval_envs", c.eval_envs));
  c.eval_steps = static_cast<int>(doc.get_int(section, "eval_steps", c.eval_steps));
  c.seed = static_cast<std::uint64_t>(doc.get_int(section, "seed", static_cast<long>(c.seed)));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// buffer

void RolloutBuffer::add(const RolloutBatch& batch, const ScaeModel& model) {
  for (int i = 0; i < batch.size(); ++i) {
    if (batch.episode[static_cast<std::size_t>(i)] < 0) continue;
    latents_.push_back(batch.latents[static_cast<std::size_t>(i)]);
    states_.push_back(model.normalize(batch.states.col(i)));
    motions_.push_back(batch.motion[static_cast<std::size_t>(i)]);
  }
}

void RolloutBuffer::clear() {
  latents_.clear();
  states_.clear();
  motions_.clear();
}

std::vector<int> RolloutBuffer::sample(int n, std::mt19937_64& rng) const {
  if (empty()) throw ContractError("rollout buffer: cannot sample from an empty buffer");
  std::uniform_int_distribution<int> pick(0, size() - 1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int& i : out) i = pick(rng);
  return out;
}

DecoderBatch DecoderBatch::gather(const RolloutBuffer& buffer, const std::vector<int>& indices) {
  if (indices.empty()) throw ContractError("decoder batch: no samples");
  std::vector<LatentParams> rows;
  rows.reserve(indices.size());
  DecoderBatch b;
  b.states.resize(static_cast<Eigen::Index>(indices.size()), buffer.state(indices.front()).size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    rows.push_back(buffer.latent(indices[i]));
    b.states.row(static_cast<Eigen::Index>(i)) = buffer.state(indices[i]).transpose();
  }
  b.latents = LatentTensors::stack(rows);
  return b;
}

// ---------------------------------------------------------------------------
// decoder objective

DecoderLoss decoder_loss(ScaeModel& model, const DecoderBatch& batch, double beta_ft, bool with_grad) {
  const ScaeConfig& cfg = model.config();
  const int n = batch.latents.batch();
  if (batch.states.rows() != n || batch.states.cols() != cfg.state_dim) {
    throw ShapeError("decoder loss: states must be [batch, state_dim]");
  }
  Graph g;
  const double zero = 0.0;
  const std::span<const double> now(&zero, 1);
  const Graph::NodeId zhat = model.reconstruct_graph(g, g.constant(batch.latents.phase), g.constant(batch.latents.params), now);
  const Graph::NodeId tau = model.decode_graph(g, zhat, BnMode::kEval);
  Tensor target({n, cfg.state_dim});
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < cfg.state_dim; ++d) target.data[static_cast<std::size_t>(b) * cfg.state_dim + d] = batch.states(b, d);
  const Graph::NodeId tracking = g.mse(g.take_column(tau, cfg.window - 1), g.constant(std::move(target)));
  const ScaeModel::Encoded re = model.encode_graph(g, tau, BnMode::kEval);
  const Graph::NodeId zbar = model.reconstruct_graph(g, re.phase, re.params, now);
  const Graph::NodeId latent = g.mse(zbar, zhat);
  const Graph::NodeId total = beta_ft > 0.0 ? g.add(tracking, g.scale(latent, beta_ft)) : tracking;
  DecoderLoss out;
  out.tracking = g.value(tracking).data[0];
  out.latent = g.value(latent).data[0];
  out.total = g.value(total).data[0];
  if (with_grad) g.backward(total);
  return out;
}

DecoderUpdateStats update_decoder(ScaeModel& model, Adam& adam, const RolloutBuffer& buffer, const BmiConfig& config,
                                  std::mt19937_64& rng) {
  const std::vector<ParamRef> refs = model.param_refs(ParamGroup::kDecoder);
  const std::vector<int> pool = buffer.sample(config.decoder_samples, rng);
  std::vector<int> order(pool.size());
  DecoderUpdateStats stats;
  for (int epoch = 0; epoch < config.decoder_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int m = 0; m < config.decoder_minibatches; ++m) {
      const std::size_t lo = order.size() * static_cast<std::size_t>(m) / static_cast<std::size_t>(config.decoder_minibatches);
      const std::size_t hi = order.size() * static_cast<std::size_t>(m + 1) / static_cast<std::size_t>(config.decoder_minibatches);
      std::vector<int> idx;
      for (std::size_t k = lo; k < hi; ++k) idx.push_back(pool[static_cast<std::size_t>(order[k])]);
      const DecoderBatch batch = DecoderBatch::gather(buffer, idx);
      std::vector<std::vector<double>> snapshot;
      for (const ParamRef& r : refs) snapshot.emplace_back(r.value.begin(), r.value.end());
      adam.zero_grad();
      const DecoderLoss loss = decoder_loss(model, batch, config.beta_ft, true);
      bool ok = std::isfinite(loss.total) && grads_finite(refs);
      if (ok) {
        adam.step();
        for (const ParamRef& r : refs) ok = ok && std::all_of(r.value.begin(), r.value.end(), [](double v) { return std::isfinite(v); });
      }
      if (!ok) {
        for (std::size_t p = 0; p < refs.size(); ++p) std::copy(snapshot[p].begin(), snapshot[p].end(), refs[p].value.begin());
        adam.set_lr(adam.lr() * 0.5);
        ++stats.reverts;
        continue;
      }
      stats.loss += loss.total;
      stats.tracking += loss.tracking;
      stats.latent += loss.latent;
      ++stats.steps;
    }
  }
  adam.zero_grad();
  if (stats.steps > 0) {
    stats.loss /= stats.steps;
    stats.tracking /= stats.steps;
    stats.latent /= stats.steps;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// probes

std::vector<MotionProbe> probe_decoded_motions(ScaeModel& model, const LatentSampleBuffer& buffer,
                                               const SimConfig& sim, int motions, int episodes, int steps,
                                               std::uint64_t seed) {
  const ProbeEpisodes ep = decode_probe_episodes(model, buffer, sim.dt, motions, episodes, steps, seed);
  std::vector<MotionProbe> out(static_cast<std::size_t>(motions));
  std::vector<int> count(static_cast<std::size_t>(motions), 0);
  if (ep.start.empty()) return out;
  const int n = sim.links;
  std::vector<LatentParams> rows;
  for (const EpisodeLatentState& s : ep.start) rows.push_back(s.params());
  DecoderBatch probe{LatentTensors::stack(rows), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), model.config().state_dim)};
  const Tensor decoded = model.decode(model.reconstruct_latent(probe.latents));
  const LatentTensors re = model.parameterize(model.encode(decoded));
  const int c = model.channels();
  for (std::size_t i = 0; i < ep.start.size(); ++i) {
    const auto m = static_cast<std::size_t>(ep.motion[i]);
    const FeasibilityReport r = feasibility_probe(sim, ep.targets[i].leftCols(n), ep.targets[i].middleCols(n, n));
    out[m].violation_rate += r.violation_rate;
    out[m].violation_magnitude += r.violation_magnitude;
    double amp = 0.0;
    for (int k = 0; k < c; ++k) amp += re.params.data[(i * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)) * 3];
    out[m].target_amplitude += amp / c;
    DecoderBatch one{LatentTensors::stack(std::span<const LatentParams>(&rows[i], 1)),
                     Eigen::MatrixXd::Zero(1, model.config().state_dim)};
    out[m].latent_drift += decoder_loss(model, one, 0.0, false).latent;
    ++count[m];
  }
  for (std::size_t m = 0; m < out.size(); ++m) {
    if (count[m] == 0) continue;
    const double w = 1.0 / count[m];
    out[m].violation_rate *= w;
    out[m].violation_magnitude *= w;
    out[m].target_amplitude *= w;
    out[m].latent_drift *= w;
  }
  return out;
}

void dump_decoded_targets(ScaeModel& model, const LatentSampleBuffer& buffer, const SimConfig& sim, int motions,
                          int episodes, int steps, std::uint64_t seed, const std::filesystem::path& path) {
  const ProbeEpisodes ep = decode_probe_episodes(model, buffer, sim.dt, motions, episodes, steps, seed);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MissingArtifact("cannot write " + path.string());
  out << "motion,episode,step";
  const int d = model.config().state_dim;
  for (int k = 0; k < d; ++k) out << ",s" << k;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ep.targets.size(); ++i) {
    for (Eigen::Index t = 0; t < ep.targets[i].rows(); ++t) {
      out << ep.motion[i] << ',' << i << ',' << t;
      for (int k = 0; k < d; ++k) {
        std::snprintf(buf, sizeof(buf), ",%.17g", ep.targets[i](t, k));
        out << buf;
      }
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// outer loop

void write_bmi_report_header(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << "outer_iter,tracking_mse,latent_drift,violation_rate,reward,violation_magnitude,target_amplitude\n";
}

void append_bmi_report(const std::filesystem::path& path, const BmiReportRow& r) {
  std::ofstream out(path, std::ios::app);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.outer_iter, r.tracking_mse,
                r.latent_drift, r.violation_rate, r.reward, r.violation_magnitude, r.target_amplitude);
  out << buf;
}

BmiResult run_bmi(PolicyNets* nets, ScaeModel& model, const LatentSampleBuffer& buffer, const SimConfig& sim,
                  const PpoConfig& ppo, const RewardConfig& reward, const ObservationConfig& obs,
                  const BmiConfig& config, const BmiOptions& options) {
  config.validate();
  ppo.validate();
  if (nets == nullptr && config.policy_mode != ActionMode::kRandom) {
    throw ContractError("bmi: a policy is required unless policy_mode is random");
  }
  int motions = static_cast<int>(buffer.motion_names.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) motions = std::max(motions, buffer[i].motion + 1);
  std::vector<int> audited = options.audited_motions;
  if (audited.empty()) {
    for (int m = 0; m < motions; ++m) audited.push_back(m);
  }

  for (ParamGroup g : {ParamGroup::kEncoder, ParamGroup::kPhaseHead, ParamGroup::kNorm}) model.set_trainable(g, false);
  model.set_trainable(ParamGroup::kDecoder, true);
  const std::uint64_t frozen = model.frozen_hash();

  VecEnv env(sim, model, buffer, ppo.envs, ppo.episode_seconds, obs, ppo.seed);
  std::unique_ptr<PpoTrainer> trainer;
  if (nets && config.train_policy && config.policy_mode != ActionMode::kRandom) trainer = std::make_unique<PpoTrainer>(*nets, ppo);
  Adam adam(model.param_refs(ParamGroup::kDecoder), AdamConfig{config.decoder_lr, 0.9, 0.999, 1e-8, 0.0});
  std::mt19937_64 rng(config.seed);
  const std::uint64_t probe_seed = config.seed ^ 0x2545f4914f6cdd1dull;
  const std::uint64_t eval_seed = config.seed ^ 0x9e3779b97f4a7c15ull;

  auto measure = [&](int k) {
    BmiReportRow row;
    row.outer_iter = k;
    VecEnv eval(sim, model, buffer, config.eval_envs, ppo.episode_seconds, obs, eval_seed);
    const ActionMode mode = config.policy_mode == ActionMode::kRandom ? ActionMode::kRandom : ActionMode::kDeterministic;
    const PolicyEvaluation ev = evaluate_policy(mode == ActionMode::kRandom ? nullptr : nets, eval, config.eval_steps, 1, mode, reward);
    row.tracking_mse = ev.tracking_mse;
    row.reward = ev.reward;
    row.motions = probe_decoded_motions(model, buffer, sim, motions, config.probe_episodes, config.probe_steps, probe_seed);
    int present = 0;
    for (const MotionProbe& p : row.motions) {
      row.latent_drift += p.latent_drift;
      row.target_amplitude += p.target_amplitude;
      ++present;
    }
    row.latent_drift /= std::max(1, present);
    row.target_amplitude /= std::max(1, present);
    for (int m : audited) {
      row.violation_rate += row.motions[static_cast<std::size_t>(m)].violation_rate;
      row.violation_magnitude += row.motions[static_cast<std::size_t>(m)].violation_magnitude;
    }
    row.violation_rate /= static_cast<double>(audited.size());
    row.violation_magnitude /= static_cast<double>(audited.size());
    return row;
  };

  if (!options.report_csv.empty()) write_bmi_report_header(options.report_csv);
  if (!options.dump_dir.empty()) {
    dump_decoded_targets(model, buffer, sim, motions, config.probe_episodes, config.probe_steps, probe_seed,
                         options.dump_dir / "targets_before.csv");
  }
  BmiResult result;
  auto record = [&](BmiReportRow row) {
    if (!options.report_csv.empty()) append_bmi_report(options.report_csv, row);
    if (options.on_iteration) options.on_iteration(row);
    result.rows.push_back(std::move(row));
  };
  record(measure(0));

  RolloutBuffer data;
  for (int k = 1; k <= config.outer_iters; ++k) {
    data.clear();
    for (int m = 0; m < config.policy_iters; ++m) {
      RolloutBatch batch = collect_rollout(config.policy_mode == ActionMode::kRandom ? nullptr : nets, env,
                                           ppo.steps_per_iter, config.policy_mode, reward, ppo.gamma);
      data.add(batch, model);
      if (trainer) trainer->update(batch, rng);
    }
    if (!data.empty()) result.decoder_reverts += update_decoder(model, adam, data, config, rng).reverts;
    if (model.frozen_hash() != frozen) throw ContractError("bmi: frozen encoder parameters changed");
    record(measure(k));
  }
  if (!options.dump_dir.empty()) {
    dump_decoded_targets(model, buffer, sim, motions, config.probe_episodes, config.probe_steps, probe_seed,
                         options.dump_dir / "targets_after.csv");
  }
  if (!options.decoder_checkpoint.empty()) model.save(options.decoder_checkpoint);
  return result;
}

}  // namespace mimic
