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

#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numbers>

#include "mimic/error.hpp"

namespace mimic::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MissingArtifact("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

MotionDataset load_corpus(const RunConfig& c) {
  LoadOptions opt;
  opt.window = c.scae.window;
  MotionDataset ds = load_dataset(c.data_dir(), opt);
  if (ds.dim() != c.scae.state_dim) {
    throw ValidationError("dataset has " + std::to_string(ds.dim()) + " state columns, [scae] state_dim is " +
                          std::to_string(c.scae.state_dim));
  }
  if (std::abs(ds.dt() - c.sim.dt) > 1e-12) throw ValidationError("dataset dt differs from [sim] dt");
  return ds;
}

std::vector<int> motions_where(const MotionDataset& ds, bool feasible) {
  std::vector<int> out;
  for (std::size_t m = 0; m < ds.motions().size(); ++m) {
    if (ds.motions()[m].feasible == feasible) out.push_back(static_cast<int>(m));
  }
  return out;
}

fs::path model_path(const RunConfig& c) { return c.model_dir() / "model.ckpt"; }
fs::path buffer_path(const RunConfig& c) { return c.model_dir() / "latent_buffer.ckpt"; }
fs::path policy_path(const RunConfig& c) { return c.pretrain_dir() / "policy.ckpt"; }

json sparsity_json(const MotionDataset& ds, const std::vector<double>& counts) {
  json j = json::object();
  for (std::size_t m = 0; m < counts.size(); ++m) j[ds.motions()[m].name] = counts[m];
  return j;
}

json probe_json(const MotionDataset& ds, const std::vector<MotionProbe>& probes) {
  json j = json::object();
  for (std::size_t m = 0; m < probes.size() && m < ds.motions().size(); ++m) {
    j[ds.motions()[m].name] = {{"violation_rate", probes[m].violation_rate},
                               {"violation_magnitude", probes[m].violation_magnitude},
                               {"target_amplitude", probes[m].target_amplitude},
                               {"latent_drift", probes[m].latent_drift}};
  }
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_gen_data(const RunConfig& c) {
  MotionDataset ds;
  if (!c.data.import_dir.empty()) {
    LoadOptions opt;
    opt.window = c.scae.window;
    ds = load_dataset(c.data.import_dir, opt);
  } else {
    SyntheticOptions opt;
    opt.trajectories = c.data.trajectories;
    opt.steps = c.data.steps;
    opt.window = c.scae.window;
    opt.dt = c.sim.dt;
    opt.seed = c.data.seed;
    ds = generate_synthetic_dataset(c.motions, opt, c.sim);
  }
  write_dataset(ds, c.data_dir());
  write_resolved(c, c.data_dir());
  std::printf("wrote %zu motions to %s\n", ds.motions().size(), c.data_dir().string().c_str());
  for (const Motion& m : ds.motions()) {
    std::printf("  %-12s trajectories=%zu feasible=%s\n", m.name.c_str(), m.trajectories.size(),
                m.feasible ? "yes" : "no");
  }
}

void cmd_train_scae(const RunConfig& c, bool resume) {
  const MotionDataset ds = load_corpus(c);
  for (double beta : c.betas) {
    const fs::path dir = c.scae_dir(beta);
    fs::create_directories(dir);
    write_resolved(c, dir);
    ScaeConfig mc = c.scae;
    mc.beta = beta;
    ScaeModel model(mc, c.init_seed);
    TrainOptions opt;
    opt.log_csv = dir / "train_log.csv";
    opt.checkpoint = dir / "train_state.ckpt";
    opt.checkpoint_every = c.run.checkpoint_every;
    opt.divergence_snapshot = dir / "divergence.ckpt";
    if (resume && fs::exists(opt.checkpoint)) opt.resume_from = opt.checkpoint;
    const std::string label = RunConfig::beta_label(beta);
    opt.on_iteration = [&](const TrainLogRow& r) {
      if (r.iter == 1 || r.iter % 10 == 0 || r.iter == c.train.max_iters) {
        std::printf("[%s] iter %d loss %.6g motion %.6g latent %.6g\n", label.c_str(), r.iter, r.loss,
                    r.motion_recon_mse, r.latent_recon_mse);
        std::fflush(stdout);
      }
    };
    train_scae(model, ds, c.train, opt);
    model.save(dir / "model.ckpt");
    collect_latent_buffer(model, ds).save(dir / "latent_buffer.ckpt");
    const WindowSource src(ds, mc.window, mc.horizon);
    const ReconstructionMetrics rm = evaluate_reconstruction(model, src, src.strided(c.eval.stride));
    write_json(dir / "metrics.json",
               {{"label", label},
                {"beta", beta},
                {"motion_recon_mse", rm.motion_mse},
                {"latent_recon_mse", rm.latent_mse},
                {"sparsity", sparsity_json(ds, amplitude_sparsity(model, ds, c.eval.threshold, c.eval.stride))}});
    std::printf("[%s] final motion_recon_mse %.6g latent_recon_mse %.6g -> %s\n", label.c_str(), rm.motion_mse,
                rm.latent_mse, (dir / "model.ckpt").string().c_str());
  }
}

void cmd_pretrain(const RunConfig& c) {
  ScaeModel model = ScaeModel::load(model_path(c));
  const LatentSampleBuffer all = LatentSampleBuffer::load(buffer_path(c));
  const MotionDataset ds = load_corpus(c);
  const std::vector<int> feasible = motions_where(ds, true);
  if (feasible.empty()) throw ValidationError("pretrain: the corpus has no feasible motion");
  const LatentSampleBuffer buffer = all.filter(feasible);
  const fs::path dir = c.pretrain_dir();
  fs::create_directories(dir);
  write_resolved(c, dir);
  PolicyNets nets(observation_dim(c.sim.links, model.channels()), c.sim.links, c.ppo.hidden, c.ppo.init_log_std,
                  c.ppo.seed);
  PretrainOptions opt;
  opt.log_csv = dir / "log.csv";
  opt.checkpoint = policy_path(c);
  opt.on_iteration = [&](const PretrainLogRow& r) {
    if (r.iter == 1 || r.iter % 10 == 0 || r.iter == c.ppo.max_iters) {
      std::printf("iter %d reward %.5f tracking %.5f kl %.4g lr %.3g\n", r.iter, r.mean_reward, r.tracking_reward,
                  r.kl, r.lr);
      std::fflush(stdout);
    }
  };
  const PretrainResult res = pretrain_policy(nets, model, buffer, c.sim, c.ppo, c.reward, c.observation, opt);
  const std::uint64_t eval_seed = c.ppo.seed ^ 0x9e3779b97f4a7c15ull;
  VecEnv env(c.sim, model, buffer, c.eval.envs, c.ppo.episode_seconds, c.observation, eval_seed);
  const PolicyEvaluation pol = evaluate_policy(&nets, env, c.eval.steps, 1, ActionMode::kDeterministic, c.reward);
  VecEnv env_random(c.sim, model, buffer, c.eval.envs, c.ppo.episode_seconds, c.observation, eval_seed);
  const PolicyEvaluation rnd = evaluate_policy(nullptr, env_random, c.eval.steps, 1, ActionMode::kRandom, c.reward);
  write_json(dir / "metrics.json", {{"iterations", static_cast<int>(res.log.size())},
                                    {"faults", res.faults},
                                    {"policy", {{"tracking_reward", pol.tracking_reward}, {"reward", pol.reward}, {"tracking_mse", pol.tracking_mse}}},
                                    {"random", {{"tracking_reward", rnd.tracking_reward}, {"reward", rnd.reward}, {"tracking_mse", rnd.tracking_mse}}}});
  std::printf("policy tracking reward %.5f, random %.5f -> %s\n", pol.tracking_reward, rnd.tracking_reward,
              policy_path(c).string().c_str());
}

void cmd_bmi(const RunConfig& c) {
  ScaeModel model = ScaeModel::load(model_path(c));
  const LatentSampleBuffer buffer = LatentSampleBuffer::load(buffer_path(c));
  const MotionDataset ds = load_corpus(c);
  PolicyNets nets;
  PolicyNets* policy = nullptr;
  if (c.bmi.policy_mode != ActionMode::kRandom) {
    nets = PolicyNets::load(policy_path(c));
    policy = &nets;
  }
  const fs::path dir = c.bmi_dir();
  fs::create_directories(dir);
  write_resolved(c, dir);
  BmiOptions opt;
  opt.report_csv = dir / "report.csv";
  opt.dump_dir = dir;
  opt.decoder_checkpoint = dir / "model.ckpt";
  opt.audited_motions = motions_where(ds, false);
  std::ofstream per_motion(dir / "motions.csv", std::ios::trunc);
  per_motion << "outer_iter,motion,violation_rate,violation_magnitude,target_amplitude,latent_drift\n";
  opt.on_iteration = [&](const BmiReportRow& r) {
    std::printf("outer %d tracking_mse %.6g violation_rate %.4f magnitude %.6g amplitude %.5f drift %.3g\n",
                r.outer_iter, r.tracking_mse, r.violation_rate, r.violation_magnitude, r.target_amplitude,
                r.latent_drift);
    std::fflush(stdout);
    for (std::size_t m = 0; m < r.motions.size(); ++m) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%.17g,%.17g,%.17g\n", r.outer_iter,
                    m < ds.motions().size() ? ds.motions()[m].name.c_str() : "?", r.motions[m].violation_rate,
                    r.motions[m].violation_magnitude, r.motions[m].target_amplitude, r.motions[m].latent_drift);
      per_motion << buf;
    }
    per_motion.flush();
  };
  const BmiResult res = run_bmi(policy, model, buffer, c.sim, c.ppo, c.reward, c.observation, c.bmi, opt);
  if (policy) policy->save(dir / "policy.ckpt", c.resolved);
  std::printf("%zu outer iterations, %d decoder reverts -> %s\n", res.rows.size() - 1, res.decoder_reverts,
              opt.report_csv.string().c_str());
}

void cmd_eval(const RunConfig& c) {
  ScaeModel model = ScaeModel::load(model_path(c));
  const MotionDataset ds = load_corpus(c);
  const fs::path dir = c.eval_dir();
  fs::create_directories(dir);
  write_resolved(c, dir);
  const ScaeConfig& mc = model.config();
  const WindowSource src(ds, mc.window, mc.horizon);
  const ReconstructionMetrics rm = evaluate_reconstruction(model, src, src.strided(c.eval.stride));
  const std::vector<double> sparsity = amplitude_sparsity(model, ds, c.eval.threshold, c.eval.stride);
  json metrics = {{"model", c.model_label()},
                  {"motion_recon_mse", rm.motion_mse},
                  {"latent_recon_mse", rm.latent_mse},
                  {"sparsity", sparsity_json(ds, sparsity)}};

  // phase circle: the first window of each motion
  const LatentSampleBuffer buffer = collect_latent_buffer(model, ds);
  {
    std::ofstream out(dir / "phase_circle.csv", std::ios::trunc);
    out << "motion,channel,amplitude,phase\n";
    for (std::size_t m = 0; m < ds.motions().size(); ++m) {
      for (std::size_t i = 0; i < buffer.size(); ++i) {
        const LatentSample& s = buffer[i];
        if (s.motion != static_cast<int>(m) || s.trajectory != 0 || s.start != 0) continue;
        for (int k = 0; k < s.params.channels(); ++k) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g\n", ds.motions()[m].name.c_str(), k, s.params.amplitude(k),
                        s.params.phase(k));
          out << buf;
        }
        break;
      }
    }
  }
  {
    std::ofstream out(dir / "manifold.csv", std::ios::trunc);
    out << "motion,trajectory,t,pc1,pc2\n";
    for (const ManifoldPoint& p : export_manifold(model, ds, c.eval.stride)) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.17g,%.17g\n", ds.motions()[static_cast<std::size_t>(p.motion)].name.c_str(),
                    p.trajectory, p.t, p.x, p.y);
      out << buf;
    }
  }
  std::ofstream sp(dir / "sparsity.csv", std::ios::trunc);
  sp << "model,motion,active_channels\n";
  auto sparsity_rows = [&](const std::string& label, const std::vector<double>& counts) {
    for (std::size_t m = 0; m < counts.size(); ++m) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g\n", label.c_str(), ds.motions()[m].name.c_str(), counts[m]);
      sp << buf;
    }
  };
  sparsity_rows(c.model_label(), sparsity);

  // comparison against the FLD baseline
  const fs::path fld_path = c.run.out / "scae" / "fld" / "model.ckpt";
  if (c.eval.compare && c.model_label() != "fld" && fs::exists(fld_path)) {
    ScaeModel fld = ScaeModel::load(fld_path);
    const ReconstructionMetrics fm = evaluate_reconstruction(fld, src, src.strided(c.eval.stride));
    const std::vector<double> fs_counts = amplitude_sparsity(fld, ds, c.eval.threshold, c.eval.stride);
    sparsity_rows("fld", fs_counts);
    bool sparser = true;
    for (std::size_t m = 0; m < sparsity.size(); ++m) sparser = sparser && sparsity[m] < fs_counts[m];
    metrics["comparison"] = {{"fld", {{"motion_recon_mse", fm.motion_mse}, {"latent_recon_mse", fm.latent_mse},
                                      {"sparsity", sparsity_json(ds, fs_counts)}}},
                             {"latent_error_ratio", rm.latent_mse / fm.latent_mse},
                             {"motion_error_ratio", rm.motion_mse / fm.motion_mse},
                             {"sparser_on_every_motion", sparser}};
  }

  // reconstruction curves of every trained model
  {
    std::ofstream out(dir / "recon_curves.csv", std::ios::trunc);
    out << "model,iter,motion_recon_mse,latent_recon_mse\n";
    if (fs::is_directory(c.run.out / "scae")) {
      std::vector<fs::path> runs;
      for (const auto& e : fs::directory_iterator(c.run.out / "scae")) runs.push_back(e.path());
      std::sort(runs.begin(), runs.end());
      for (const fs::path& run : runs) {
        std::ifstream in(run / "train_log.csv");
        std::string line;
        if (!std::getline(in, line)) continue;
        while (std::getline(in, line)) {
          // iter,loss,motion,latent,lr,wallclock
          std::vector<std::string> f;
          std::size_t pos = 0, next;
          while ((next = line.find(',', pos)) != std::string::npos) {
            f.push_back(line.substr(pos, next - pos));
            pos = next + 1;
          }
          f.push_back(line.substr(pos));
          if (f.size() < 4) continue;
          out << run.filename().string() << ',' << f[0] << ',' << f[2] << ',' << f[3] << '\n';
        }
      }
    }
  }

  // tracking of the pre-trained and fine-tuned policies
  if (fs::exists(policy_path(c))) {
    const std::vector<int> feasible = motions_where(ds, true);
    const LatentSampleBuffer train_buffer = feasible.empty() ? buffer : buffer.filter(feasible);
    PolicyNets nets = PolicyNets::load(policy_path(c));
    const std::uint64_t seed = c.ppo.seed ^ 0x9e3779b97f4a7c15ull;
    VecEnv env(c.sim, model, train_buffer, c.eval.envs, c.ppo.episode_seconds, c.observation, seed);
    const PolicyEvaluation pol = evaluate_policy(&nets, env, c.eval.steps, 1, ActionMode::kDeterministic, c.reward);
    VecEnv env_random(c.sim, model, train_buffer, c.eval.envs, c.ppo.episode_seconds, c.observation, seed);
    const PolicyEvaluation rnd = evaluate_policy(nullptr, env_random, c.eval.steps, 1, ActionMode::kRandom, c.reward);
    metrics["tracking"] = {{"policy_tracking_reward", pol.tracking_reward},
                           {"policy_tracking_mse", pol.tracking_mse},
                           {"random_tracking_reward", rnd.tracking_reward},
                           {"random_tracking_mse", rnd.tracking_mse}};
  }
  if (fs::exists(c.bmi_dir() / "model.ckpt")) {
    ScaeModel tuned = ScaeModel::load(c.bmi_dir() / "model.ckpt");
    const int motions = static_cast<int>(ds.motions().size());
    const std::uint64_t seed = c.bmi.seed ^ 0x2545f4914f6cdd1dull;
    metrics["bmi"] = {
        {"before", probe_json(ds, probe_decoded_motions(model, buffer, c.sim, motions, c.bmi.probe_episodes, c.bmi.probe_steps, seed))},
        {"after", probe_json(ds, probe_decoded_motions(tuned, buffer, c.sim, motions, c.bmi.probe_episodes, c.bmi.probe_steps, seed))}};
  }
  write_json(dir / "metrics.json", metrics);
  std::printf("motion_recon_mse %.6g latent_recon_mse %.6g -> %s\n", rm.motion_mse, rm.latent_mse,
              (dir / "metrics.json").string().c_str());
}

}  // namespace mimic::cli
