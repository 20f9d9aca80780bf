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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "mimic/bilevel.hpp"
#include "mimic/error.hpp"

namespace mimic {
namespace {

LatentParams make_params(std::vector<double> f, std::vector<double> a, std::vector<double> b) {
  const int c = static_cast<int>(f.size());
  return {Eigen::VectorXd::Zero(c), Eigen::Map<Eigen::VectorXd>(f.data(), c), Eigen::Map<Eigen::VectorXd>(a.data(), c),
          Eigen::Map<Eigen::VectorXd>(b.data(), c)};
}

ScaeModel chain_model(std::uint64_t seed) {
  ScaeConfig c;
  c.state_dim = 6;
  c.latent_channels = 2;
  c.window = 11;
  c.horizon = 2;
  c.hidden = 5;
  c.kernel = 5;
  ScaeModel m(c, seed);
  m.state_mean = Eigen::VectorXd::Zero(6);
  m.state_std = (Eigen::VectorXd(6) << 0.5, 0.4, 0.3, 2.0, 2.0, 2.0).finished();
  return m;
}

LatentSampleBuffer chain_buffer() {
  LatentSampleBuffer buf;
  buf.motion_names = {"a", "b", "c"};
  buf.add({make_params({1.0, 2.0}, {0.5, 0.1}, {0.0, 0.2}), 0, 0, 0});
  buf.add({make_params({0.5, 1.5}, {0.2, 0.3}, {0.1, -0.2}), 1, 0, 0});
  buf.add({make_params({0.8, 0.4}, {0.4, 0.2}, {-0.1, 0.1}), 2, 0, 0});
  return buf;
}

RolloutBuffer filled_buffer(ScaeModel& model, int steps, std::uint64_t seed) {
  const LatentSampleBuffer lat = chain_buffer();
  ObservationConfig obs;
  VecEnv env(SimConfig(), model, lat, 8, 1.0, obs, seed);
  const RolloutBatch b = collect_rollout(nullptr, env, steps, ActionMode::kRandom, RewardConfig(), 0.99);
  RolloutBuffer out;
  out.add(b, model);
  return out;
}

BmiConfig small_bmi() {
  BmiConfig c;
  c.outer_iters = 1;
  c.policy_iters = 1;
  c.decoder_samples = 32;
  c.probe_episodes = 2;
  c.probe_steps = 20;
  c.eval_envs = 4;
  c.eval_steps = 10;
  c.decoder_lr = 1e-3;
  return c;
}

PpoConfig small_ppo() {
  PpoConfig p;
  p.envs = 4;
  p.steps_per_iter = 8;
  p.hidden = {8};
  p.episode_seconds = 1.0;
  return p;
}

std::vector<std::vector<double>> decoder_values(ScaeModel& m) {
  std::vector<std::vector<double>> out;
  for (const ParamRef& r : m.param_refs(ParamGroup::kDecoder)) out.emplace_back(r.value.begin(), r.value.end());
  return out;
}

TEST(RolloutBufferTest, StoresNormalizedStatesAndSamples) {
  ScaeModel model = chain_model(1);
  const RolloutBuffer buf = filled_buffer(model, 5, 2);
  ASSERT_EQ(buf.size(), 40);
  std::mt19937_64 rng(3);
  for (int i : buf.sample(100, rng)) {
    ASSERT_GE(i, 0);
    ASSERT_LT(i, 40);
  }
  EXPECT_THROW(RolloutBuffer().sample(1, rng), ContractError);
}

TEST(RolloutBufferTest, LatentStateAndTargetShareTheStep) {
  ScaeModel model = chain_model(2);
  const LatentSampleBuffer lat = chain_buffer();
  VecEnv env(SimConfig(), model, lat, 4, 1.0, ObservationConfig(), 5);
  const RolloutBatch b = collect_rollout(nullptr, env, 6, ActionMode::kRandom, RewardConfig(), 0.99);
  ASSERT_EQ(b.faults, 0);
  RolloutBuffer buf;
  buf.add(b, model);
  ASSERT_EQ(buf.size(), b.size());
  for (int k = 0; k < b.size(); ++k) {
    const LatentParams& z = b.latents[static_cast<std::size_t>(k)];
    // the stored latent decodes to the target tracked at that step
    const Eigen::VectorXd target =
        model.denormalize(model.decode_newest(LatentTensors::stack(std::span<const LatentParams>(&z, 1))).row(0).transpose());
    EXPECT_LT((target - b.targets.col(k)).cwiseAbs().maxCoeff(), 1e-12) << "transition " << k;
    EXPECT_EQ(buf.latent(k).phase, z.phase);
    EXPECT_EQ(buf.state(k), model.normalize(b.states.col(k)));
    EXPECT_EQ(buf.motion(k), b.motion[static_cast<std::size_t>(k)]);
  }
}

TEST(RolloutBufferTest, FaultedTransitionsAreDropped) {
  ScaeModel model = chain_model(1);
  RolloutBatch b;
  b.steps = 1;
  b.envs = 2;
  b.latents = {make_params({1.0, 1.0}, {0.1, 0.1}, {0.0, 0.0}), make_params({1.0, 1.0}, {0.1, 0.1}, {0.0, 0.0})};
  b.states = Eigen::MatrixXd::Ones(6, 2);
  b.episode = {-1, 3};
  b.motion = {0, 1};
  RolloutBuffer buf;
  buf.add(b, model);
  ASSERT_EQ(buf.size(), 1);
  EXPECT_EQ(buf.motion(0), 1);
  EXPECT_EQ(buf.state(0), model.normalize(Eigen::VectorXd::Ones(6)));
}

TEST(DecoderLossTest, GradientsMatchFiniteDifferences) {
  ScaeModel model = chain_model(4);
  model.set_trainable(ParamGroup::kEncoder, false);
  model.set_trainable(ParamGroup::kPhaseHead, false);
  model.set_trainable(ParamGroup::kNorm, false);
  model.set_trainable(ParamGroup::kDecoder, true);
  const RolloutBuffer buf = filled_buffer(model, 3, 5);
  std::mt19937_64 rng(6);
  const DecoderBatch batch = DecoderBatch::gather(buf, buf.sample(6, rng));
  const std::vector<ParamRef> refs = model.param_refs(ParamGroup::kDecoder);
  for (const ParamRef& r : refs) std::fill(r.grad.begin(), r.grad.end(), 0.0);
  decoder_loss(model, batch, 3.0, true);
  const double eps = 1e-5;
  double worst = 0.0;
  for (const ParamRef& r : refs) {
    for (std::size_t i = 0; i < r.value.size(); i += 3) {
      const double keep = r.value[i];
      r.value[i] = keep + eps;
      const double up = decoder_loss(model, batch, 3.0, false).total;
      r.value[i] = keep - eps;
      const double down = decoder_loss(model, batch, 3.0, false).total;
      r.value[i] = keep;
      const double fd = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(r.grad[i] - fd) / std::max(1e-4, std::abs(fd)));
    }
  }
  EXPECT_LT(worst, 1e-4);
  // no gradient reaches frozen groups
  for (const ParamRef& r : model.param_refs(ParamGroup::kEncoder)) EXPECT_TRUE(r.grad.empty() || std::all_of(r.grad.begin(), r.grad.end(), [](double g) { return g == 0.0; }));
}

TEST(DecoderLossTest, ZeroBetaIsTheTrackingTermAlone) {
  ScaeModel model = chain_model(7);
  const RolloutBuffer buf = filled_buffer(model, 2, 8);
  std::vector<int> idx(static_cast<std::size_t>(buf.size()));
  std::iota(idx.begin(), idx.end(), 0);
  const DecoderBatch batch = DecoderBatch::gather(buf, idx);
  const DecoderLoss l = decoder_loss(model, batch, 0.0, false);
  EXPECT_EQ(l.total, l.tracking);
  // independent oracle on the newest decoded column
  const Tensor tau = model.decode(model.reconstruct_latent(batch.latents));
  const int h = model.config().window;
  double sum = 0.0;
  for (int b = 0; b < batch.latents.batch(); ++b)
    for (int d = 0; d < 6; ++d) {
      const double e = tau.data[(static_cast<std::size_t>(b) * 6 + d) * h + h - 1] - batch.states(b, d);
      sum += e * e;
    }
  EXPECT_NEAR(l.tracking, sum / (batch.latents.batch() * 6), 1e-12);
  EXPECT_NEAR(decoder_loss(model, batch, 2.0, false).total, l.tracking + 2.0 * l.latent, 1e-12);
}

TEST(DecoderLossTest, ZeroWhenDecoderMatchesAndIsSelfConsistent) {
  ScaeModel model = chain_model(23);
  // a zero decoder emits the zero state for every latent
  for (const ParamRef& r : model.param_refs(ParamGroup::kDecoder)) std::fill(r.value.begin(), r.value.end(), 0.0);
  const int h = model.config().window;
  DecoderBatch batch;
  // the latent the frozen encoder assigns to that zero motion
  batch.latents = model.parameterize(model.encode(Tensor({2, 6, h})));
  batch.states = Eigen::MatrixXd::Zero(2, 6);
  const DecoderLoss l = decoder_loss(model, batch, 200.0, false);
  EXPECT_EQ(l.tracking, 0.0);
  EXPECT_NEAR(l.latent, 0.0, 1e-24);
  EXPECT_NEAR(l.total, 0.0, 1e-21);
}

TEST(UpdateDecoderTest, ZeroLearningRateLeavesParametersIdentical) {
  ScaeModel model = chain_model(9);
  model.set_trainable(ParamGroup::kDecoder, true);
  const RolloutBuffer buf = filled_buffer(model, 4, 10);
  const auto before = decoder_values(model);
  Adam adam(model.param_refs(ParamGroup::kDecoder), AdamConfig{0.0, 0.9, 0.999, 1e-8, 0.0});
  BmiConfig cfg = small_bmi();
  std::mt19937_64 rng(11);
  const DecoderUpdateStats s = update_decoder(model, adam, buf, cfg, rng);
  EXPECT_EQ(s.steps, cfg.decoder_minibatches);
  EXPECT_EQ(decoder_values(model), before);
}

TEST(UpdateDecoderTest, SmallStepDoesNotIncreaseTheLoss) {
  ScaeModel model = chain_model(12);
  for (ParamGroup g : {ParamGroup::kEncoder, ParamGroup::kPhaseHead, ParamGroup::kNorm}) model.set_trainable(g, false);
  model.set_trainable(ParamGroup::kDecoder, true);
  const RolloutBuffer buf = filled_buffer(model, 4, 13);
  std::vector<int> idx(static_cast<std::size_t>(buf.size()));
  std::iota(idx.begin(), idx.end(), 0);
  const DecoderBatch batch = DecoderBatch::gather(buf, idx);
  Adam adam(model.param_refs(ParamGroup::kDecoder), AdamConfig{1e-4, 0.9, 0.999, 1e-8, 0.0});
  const double before = decoder_loss(model, batch, 200.0, true).total;
  adam.step();
  adam.zero_grad();
  EXPECT_LE(decoder_loss(model, batch, 200.0, false).total, before);
}

TEST(UpdateDecoderTest, NonFiniteStepIsRevertedAndLrHalved) {
  ScaeModel model = chain_model(14);
  model.set_trainable(ParamGroup::kDecoder, true);
  RolloutBatch b;
  b.steps = 1;
  b.envs = 1;
  b.latents = {make_params({1.0, 1.0}, {0.1, 0.1}, {0.0, 0.0})};
  b.states = Eigen::MatrixXd::Constant(6, 1, std::numeric_limits<double>::quiet_NaN());
  b.episode = {0};
  b.motion = {0};
  RolloutBuffer buf;
  buf.add(b, model);
  const auto before = decoder_values(model);
  Adam adam(model.param_refs(ParamGroup::kDecoder), AdamConfig{1e-3, 0.9, 0.999, 1e-8, 0.0});
  BmiConfig cfg = small_bmi();
  std::mt19937_64 rng(15);
  const DecoderUpdateStats s = update_decoder(model, adam, buf, cfg, rng);
  EXPECT_EQ(s.reverts, cfg.decoder_minibatches);
  EXPECT_DOUBLE_EQ(adam.lr(), 1e-3 / (1 << cfg.decoder_minibatches));
  EXPECT_EQ(decoder_values(model), before);
}

TEST(ProbeTest, DeterministicAndPerMotion) {
  ScaeModel model = chain_model(16);
  const LatentSampleBuffer lat = chain_buffer();
  const auto a = probe_decoded_motions(model, lat, SimConfig(), 3, 3, 30, 4);
  const auto b = probe_decoded_motions(model, lat, SimConfig(), 3, 3, 30, 4);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_EQ(a[m].violation_magnitude, b[m].violation_magnitude);
    EXPECT_EQ(a[m].target_amplitude, b[m].target_amplitude);
    EXPECT_GT(a[m].target_amplitude, 0.0);
    EXPECT_GE(a[m].violation_rate, 0.0);
    EXPECT_LE(a[m].violation_rate, 1.0);
  }
}

TEST(RunBmiTest, ZeroOuterIterationsIsTheIdentity) {
  ScaeModel model = chain_model(17);
  const LatentSampleBuffer lat = chain_buffer();
  BmiConfig cfg = small_bmi();
  cfg.outer_iters = 0;
  const std::uint64_t dec = model.decoder_hash(), frozen = model.frozen_hash();
  cfg.policy_mode = ActionMode::kRandom;
  const BmiResult r = run_bmi(nullptr, model, lat, SimConfig(), small_ppo(), RewardConfig(), ObservationConfig(), cfg, {});
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].outer_iter, 0);
  EXPECT_EQ(model.decoder_hash(), dec);
  EXPECT_EQ(model.frozen_hash(), frozen);
}

TEST(RunBmiTest, UpdatesOnlyTheDecoderAndWritesTheReport) {
  ScaeModel model = chain_model(18);
  const LatentSampleBuffer lat = chain_buffer();
  const PpoConfig ppo = small_ppo();
  PolicyNets nets(observation_dim(3, 2), 3, ppo.hidden, ppo.init_log_std, 19);
  BmiConfig cfg = small_bmi();
  cfg.outer_iters = 2;
  const std::uint64_t dec = model.decoder_hash(), frozen = model.frozen_hash();
  const auto dir = std::filesystem::temp_directory_path() / "mimic_bmi_test";
  std::filesystem::remove_all(dir);
  BmiOptions opt;
  opt.report_csv = dir / "bmi.csv";
  opt.dump_dir = dir;
  opt.audited_motions = {1, 2};
  const BmiResult r = run_bmi(&nets, model, lat, SimConfig(), ppo, RewardConfig(), ObservationConfig(), cfg, opt);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_NE(model.decoder_hash(), dec);
  EXPECT_EQ(model.frozen_hash(), frozen);
  std::ifstream in(opt.report_csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "outer_iter,tracking_mse,latent_drift,violation_rate,reward,violation_magnitude,target_amplitude");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_TRUE(std::filesystem::exists(dir / "targets_before.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "targets_after.csv"));
  const BmiReportRow& row0 = r.rows[0];
  EXPECT_NEAR(row0.violation_magnitude, 0.5 * (row0.motions[1].violation_magnitude + row0.motions[2].violation_magnitude), 1e-15);
  std::filesystem::remove_all(dir);
}

TEST(RunBmiTest, SameSeedSameReport) {
  auto run = [] {
    ScaeModel model = chain_model(20);
    const LatentSampleBuffer lat = chain_buffer();
    const PpoConfig ppo = small_ppo();
    PolicyNets nets(observation_dim(3, 2), 3, ppo.hidden, ppo.init_log_std, 21);
    return run_bmi(&nets, model, lat, SimConfig(), ppo, RewardConfig(), ObservationConfig(), small_bmi(), {});
  };
  const BmiResult a = run(), b = run();
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].tracking_mse, b.rows[i].tracking_mse);
    EXPECT_EQ(a.rows[i].latent_drift, b.rows[i].latent_drift);
    EXPECT_EQ(a.rows[i].target_amplitude, b.rows[i].target_amplitude);
  }
}

TEST(RunBmiTest, LatentTermKeepsDriftBelowTheUnregularizedRun) {
  auto final_drift = [](double beta_ft) {
    ScaeModel model = chain_model(24);
    BmiConfig cfg = small_bmi();
    cfg.outer_iters = 4;
    cfg.beta_ft = beta_ft;
    cfg.policy_mode = ActionMode::kRandom;
    cfg.train_policy = false;
    cfg.seed = 25;
    return run_bmi(nullptr, model, chain_buffer(), SimConfig(), small_ppo(), RewardConfig(), ObservationConfig(), cfg,
                   {})
        .rows.back()
        .latent_drift;
  };
  const double regularized = final_drift(200.0), free = final_drift(0.0);
  EXPECT_LT(regularized, free);
}

TEST(RunBmiTest, PolicyRequiredUnlessRandom) {
  ScaeModel model = chain_model(22);
  EXPECT_THROW(run_bmi(nullptr, model, chain_buffer(), SimConfig(), small_ppo(), RewardConfig(), ObservationConfig(),
                       small_bmi(), {}),
               ContractError);
}

TEST(BmiConfigTest, RoundTripAndValidation) {
  BmiConfig c = small_bmi();
  c.policy_mode = ActionMode::kRandom;
  c.beta_ft = 0.0;
  KvDocument doc;
  c.write(doc);
  const BmiConfig back = BmiConfig::read(doc);
  EXPECT_EQ(back.policy_mode, ActionMode::kRandom);
  EXPECT_EQ(back.beta_ft, 0.0);
  EXPECT_EQ(back.decoder_samples, 32);
  c.decoder_samples = 1;
  EXPECT_THROW(c.validate(), ValidationError);
  doc.set("bmi", "policy_mode", "greedy");
  EXPECT_THROW(BmiConfig::read(doc), ValidationError);
}

}  // namespace
}  // namespace mimic
