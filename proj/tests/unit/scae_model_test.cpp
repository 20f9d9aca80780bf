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

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "mimic/checkpoint.hpp"
#include "mimic/error.hpp"
#include "mimic/scae_model.hpp"
#include "mimic/scae_train.hpp"

namespace mimic {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

ScaeConfig tiny_config() {
  ScaeConfig c;
  c.state_dim = 2;
  c.latent_channels = 2;
  c.window = 9;
  c.horizon = 2;
  c.hidden = 4;
  c.kernel = 3;
  c.alpha = 0.9;
  c.beta = 1.0;
  return c;
}

Tensor random_input(int b, int d, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor x({b, d, h});
  for (double& v : x.data) v = n(rng);
  return x;
}

// Smooth multi-channel windows so the targets look like motion, not noise.
WindowBatch smooth_batch(const ScaeConfig& c, int b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WindowBatch batch{Tensor({b, c.state_dim, c.window}), Tensor({(c.horizon + 1) * b, c.state_dim, c.window}),
                    c.horizon};
  for (int j = 0; j < b; ++j) {
    for (int ch = 0; ch < c.state_dim; ++ch) {
      const double a = 0.5 + u(rng), f = 0.5 + 2.0 * u(rng), p = u(rng);
      for (int i = 0; i <= c.horizon; ++i)
        for (int t = 0; t < c.window; ++t) {
          const double v = a * std::sin(kTwoPi * (f * (i + t) * c.dt + p));
          batch.targets.data[((static_cast<std::size_t>(i) * b + j) * c.state_dim + ch) * c.window + t] = v;
          if (i == 0) batch.input.data[(static_cast<std::size_t>(j) * c.state_dim + ch) * c.window + t] = v;
        }
    }
  }
  return batch;
}

TEST(ScaeConfigTest, RejectsEvenWindowAndBadHorizon) {
  ScaeConfig c = tiny_config();
  c.window = 10;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.horizon = -1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  EXPECT_NO_THROW(c.validate());
}

TEST(ScaeConfigTest, TimeGridIsCentred) {
  ScaeConfig c = tiny_config();
  const std::vector<double> grid = c.time_grid();
  ASSERT_EQ(grid.size(), 9u);
  EXPECT_DOUBLE_EQ(grid[4], 0.0);
  EXPECT_DOUBLE_EQ(grid[0], -4 * c.dt);
  EXPECT_DOUBLE_EQ(grid[8], 4 * c.dt);
}

TEST(ScaeModelTest, IdentifiesBinAlignedSinusoids) {
  ScaeConfig c = tiny_config();
  c.window = 51;
  c.latent_channels = 1;
  ScaeModel model(c, 3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> amp(0.1, 2.0), off(-1.0, 1.0), ph(0.0, 1.0);
  std::uniform_int_distribution<int> bin(1, (c.window - 1) / 2);
  const std::vector<double> grid = c.time_grid();
  for (int trial = 0; trial < 50; ++trial) {
    const double a = amp(rng), b = off(rng), p = ph(rng);
    const int k = bin(rng);
    const double f = k / (c.window * c.dt);
    Tensor z({1, 1, c.window});
    for (int t = 0; t < c.window; ++t) z.data[static_cast<std::size_t>(t)] = b + a * std::sin(kTwoPi * (f * grid[t] + p));
    const LatentParams lp = model.parameterize(z).row(0);
    EXPECT_NEAR(lp.amplitude(0), a, 1e-3) << "trial " << trial;
    EXPECT_NEAR(lp.frequency(0), f, 1e-3) << "trial " << trial;
    EXPECT_NEAR(lp.offset(0), b, 1e-3) << "trial " << trial;
  }
}

TEST(ScaeModelTest, ShapesAndDeterminism) {
  const ScaeConfig c = tiny_config();
  ScaeModel a(c, 5), b(c, 5), other(c, 6);
  const Tensor x = random_input(3, c.state_dim, c.window, 1);
  const Tensor za = a.encode(x), zb = b.encode(x);
  EXPECT_EQ(za.shape, (Shape{3, c.latent_channels, c.window}));
  EXPECT_EQ(za.data, zb.data);
  EXPECT_NE(za.data, other.encode(x).data);
  const LatentTensors p = a.parameterize(za);
  EXPECT_EQ(p.phase.shape, (Shape{3, c.latent_channels}));
  EXPECT_EQ(p.params.shape, (Shape{3, c.latent_channels, 3}));
  const Tensor tau = a.decode(a.reconstruct_latent(p));
  EXPECT_EQ(tau.shape, (Shape{3, c.state_dim, c.window}));
  for (int r = 0; r < 3; ++r) EXPECT_NO_THROW(p.row(r).validate());
}

LatentParams random_params(int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LatentParams p{Eigen::VectorXd(c), Eigen::VectorXd(c), Eigen::VectorXd(c), Eigen::VectorXd(c)};
  for (int i = 0; i < c; ++i) {
    p.phase(i) = wrap_phase(u(rng));
    p.frequency(i) = 0.2 + 3.0 * u(rng);
    p.amplitude(i) = 2.0 * u(rng);
    p.offset(i) = u(rng) - 0.5;
  }
  return p;
}

TEST(LatentAlgebraTest, WrapPhaseRange) {
  for (double v : {-3.7, -0.5, -0.25, 0.0, 0.5, 0.999, 12.25}) {
    const double w = wrap_phase(v);
    EXPECT_GE(w, -0.5);
    EXPECT_LT(w, 0.5);
    EXPECT_NEAR(std::remainder(w - v, 1.0), 0.0, 1e-12);
  }
}

TEST(LatentAlgebraTest, ReconstructionIsPeriodicInPhase) {
  const ScaeConfig c = tiny_config();
  ScaeModel model(c, 1);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const LatentParams p = random_params(c.latent_channels, s);
    const LatentTensors t = LatentTensors::stack(std::span<const LatentParams>(&p, 1));
    LatentTensors u = t;
    for (int i = 0; i < c.latent_channels; ++i) u.phase.data[static_cast<std::size_t>(i)] += 1.0;
    const Tensor a = model.reconstruct_latent(t), b = model.reconstruct_latent(u);
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-12);
  }
}

TEST(LatentAlgebraTest, OffsetShiftsReconstructionUniformly) {
  const ScaeConfig c = tiny_config();
  ScaeModel model(c, 1);
  LatentParams p = random_params(c.latent_channels, 4), q = p;
  q.offset.array() += 0.75;
  const Tensor a = model.reconstruct_latent(LatentTensors::stack(std::span<const LatentParams>(&p, 1)));
  const Tensor b = model.reconstruct_latent(LatentTensors::stack(std::span<const LatentParams>(&q, 1)));
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(b.data[i] - a.data[i], 0.75, 1e-12);
}

TEST(LatentAlgebraTest, PhaseAdvanceIsASemigroup) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> dur(0.0, 5.0);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const LatentParams p = random_params(4, s);
    const double t1 = dur(rng), t2 = dur(rng);
    const LatentParams a = advance_phase(advance_phase(p, t1), t2);
    const LatentParams b = advance_phase(p, t1 + t2);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(std::remainder(a.phase(i) - b.phase(i), 1.0), 0.0, 1e-9);
    EXPECT_EQ(a.frequency, p.frequency);
    EXPECT_EQ(a.amplitude, p.amplitude);
  }
}

TEST(LatentAlgebraTest, AdvanceMatchesShiftedReconstruction) {
  const ScaeConfig c = tiny_config();
  ScaeModel model(c, 1);
  const LatentParams p = random_params(c.latent_channels, 9);
  const double shift = 3 * c.dt;
  const LatentParams adv = advance_phase(p, shift);
  const Tensor a = model.reconstruct_latent(LatentTensors::stack(std::span<const LatentParams>(&adv, 1)));
  // Oracle: the sinusoid evaluated at grid + shift with the original phase.
  const std::vector<double> grid = c.time_grid();
  for (int ch = 0; ch < c.latent_channels; ++ch)
    for (int t = 0; t < c.window; ++t) {
      const double want = p.amplitude(ch) * std::sin(kTwoPi * (p.frequency(ch) * (grid[t] + shift) + p.phase(ch))) +
                          p.offset(ch);
      EXPECT_NEAR(a.data[static_cast<std::size_t>(ch) * c.window + t], want, 1e-9);
    }
}

TEST(LatentAlgebraTest, InterpolationEndpointsAreExact) {
  const LatentParams a = random_params(3, 1), b = random_params(3, 2);
  const LatentParams l0 = interpolate_params(a, b, 0.0), l1 = interpolate_params(a, b, 1.0);
  EXPECT_EQ(l0.amplitude, a.amplitude);
  EXPECT_EQ(l0.frequency, a.frequency);
  EXPECT_EQ(l1.amplitude, b.amplitude);
  EXPECT_EQ(l1.offset, b.offset);
  // phase belongs to the running episode and is never blended
  EXPECT_EQ(l0.phase, a.phase);
  EXPECT_EQ(l1.phase, a.phase);
  const LatentParams mid = interpolate_params(a, b, 0.25);
  EXPECT_EQ(mid.phase, a.phase);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mid.frequency(i), 0.75 * a.frequency(i) + 0.25 * b.frequency(i), 1e-15);
  EXPECT_THROW(interpolate_params(a, b, 1.5), ContractError);
}

TEST(ScaeModelTest, FullLossGradcheck) {
  for (BnMode mode : {BnMode::kEval, BnMode::kTrain}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      ScaeModel model(tiny_config(), seed);
      const WindowBatch batch = smooth_batch(model.config(), 3, seed + 100);
      std::vector<NamedParam> params = model.named_parameters();
      GradCheckOptions opt;
      opt.tol = 1e-4;
      // batch norm cancels the first conv bias in train mode; its numeric
      // gradient is pure rounding noise
      opt.abs_floor = 1e-5;
      opt.max_entries_per_param = 12;
      opt.seed = seed;
      const GradCheckReport r = check_gradients(
          [&](Graph& g) { return scae_loss_graph(g, model, batch, 1.0, mode).total; }, params, opt);
      EXPECT_TRUE(r.pass) << "seed " << seed << " worst " << r.worst.param << "[" << r.worst.index
                          << "] analytic " << r.worst.analytic << " numeric " << r.worst.numeric;
      EXPECT_EQ(r.params_checked.size(), params.size());
    }
  }
}

TEST(ScaeModelTest, FrozenGroupsGetNoGradient) {
  ScaeModel model(tiny_config(), 1);
  model.set_trainable(ParamGroup::kEncoder, false);
  model.set_trainable(ParamGroup::kPhaseHead, false);
  model.set_trainable(ParamGroup::kNorm, false);
  EXPECT_FALSE(model.trainable(ParamGroup::kEncoder));
  EXPECT_TRUE(model.trainable(ParamGroup::kDecoder));
  const WindowBatch batch = smooth_batch(model.config(), 3, 1);
  const GradCheckReport r = check_gradients(
      [&](Graph& g) { return scae_loss_graph(g, model, batch, 1.0, BnMode::kEval).total; }, model.named_parameters(),
      {});
  EXPECT_EQ(r.params_checked.size(), model.named_parameters(ParamGroup::kDecoder).size());
  EXPECT_TRUE(r.pass);
}

// Independent evaluation of the reconstruction-only objective.
double fld_oracle(ScaeModel& model, const WindowBatch& batch) {
  const ScaeConfig& c = model.config();
  const int b = batch.batch(), d = c.state_dim, h = c.window;
  const Tensor z = model.encode(batch.input);
  const LatentTensors p = model.parameterize(z);
  double total = 0.0, weight = 1.0;
  for (int i = 0; i <= batch.horizon; ++i) {
    std::vector<LatentParams> rows;
    for (int j = 0; j < b; ++j) rows.push_back(advance_phase(p.row(j), i * c.dt));
    const Tensor tau = model.decode(model.reconstruct_latent(LatentTensors::stack(rows)));
    double se = 0.0;
    for (std::size_t k = 0; k < tau.data.size(); ++k) {
      const double diff = tau.data[k] - batch.targets.data[static_cast<std::size_t>(i) * b * d * h + k];
      se += diff * diff;
    }
    total += weight * se / static_cast<double>(tau.data.size());
    weight *= c.alpha;
  }
  return total;
}

TEST(ScaeModelTest, BetaZeroIsTheReconstructionObjective) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ScaeModel model(tiny_config(), seed);
    const WindowBatch batch = smooth_batch(model.config(), 4, seed);
    const double fld = fld_loss(model, batch);
    EXPECT_EQ(scae_loss(model, batch, 0.0), fld);
    EXPECT_NEAR(fld, fld_oracle(model, batch), 1e-10 * std::max(1.0, fld));
    EXPECT_GT(scae_loss(model, batch, 1.0), fld);
  }
}

TEST(ScaeModelTest, CheckpointRoundTripIsBitExact) {
  ScaeConfig c = tiny_config();
  c.final_decoder_activation = true;
  ScaeModel model(c, 8);
  model.state_mean = Eigen::VectorXd::Constant(c.state_dim, 0.1 / 3.0);
  model.state_std = Eigen::VectorXd::Constant(c.state_dim, std::sqrt(2.0));
  // move the running statistics off their initial values
  const WindowBatch batch = smooth_batch(c, 3, 2);
  Graph g;
  g.value(scae_loss_graph(g, model, batch, 1.0, BnMode::kTrain).total);
  const auto path = std::filesystem::temp_directory_path() / "mimic_scae_roundtrip.ckpt";
  model.save(path);
  ScaeModel back = ScaeModel::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.frozen_hash(), model.frozen_hash());
  EXPECT_EQ(back.decoder_hash(), model.decoder_hash());
  EXPECT_EQ(back.state_mean, model.state_mean);
  EXPECT_EQ(back.state_std, model.state_std);
  EXPECT_TRUE(back.config().final_decoder_activation);
  const Tensor x = random_input(2, c.state_dim, c.window, 4);
  EXPECT_EQ(back.predict_forward(x, 1).tau.data, model.predict_forward(x, 1).tau.data);
}

TEST(ScaeModelTest, LoadRejectsWrongKind) {
  Checkpoint ck;
  ck.kind = "policy";
  const auto path = std::filesystem::temp_directory_path() / "mimic_wrong_kind.ckpt";
  ck.save(path);
  EXPECT_THROW(ScaeModel::load(path), ValidationError);
  std::filesystem::remove(path);
}

TEST(ScaeModelTest, FrozenHashTracksRunningStatistics) {
  ScaeModel model(tiny_config(), 2);
  const std::uint64_t before = model.frozen_hash(), dec = model.decoder_hash();
  const WindowBatch batch = smooth_batch(model.config(), 3, 1);
  Graph g;
  g.value(scae_loss_graph(g, model, batch, 0.0, BnMode::kTrain).total);
  EXPECT_NE(model.frozen_hash(), before);
  EXPECT_EQ(model.decoder_hash(), dec);
}

// Upper bound on the eval-mode decoder's Lipschitz constant: each same-padded
// conv is bounded by sqrt(K) ||W||_F, each batch norm by max |scale| / sqrt(var + eps)
// and ELU by 1.
double decoder_lipschitz_bound(const ScaeModel& model) {
  Checkpoint ck;
  model.write(ck);
  const ScaeConfig& c = model.config();
  double bound = 1.0;
  for (int l = 0; l < 3; ++l) {
    const Tensor& w = ck.at("decoder.conv" + std::to_string(l) + ".weight");
    double fro = 0.0;
    for (double v : w.data) fro += v * v;
    bound *= std::sqrt(c.kernel * fro);
    if (l < 2 || c.final_decoder_activation) {
      const std::string bn = "decoder.bn" + std::to_string(l);
      const Tensor& s = ck.at(bn + ".scale");
      const Tensor& var = ck.at(bn + ".running_var");
      double m = 0.0;
      for (std::size_t i = 0; i < s.data.size(); ++i) m = std::max(m, std::abs(s.data[i]) / std::sqrt(var.data[i] + 1e-5));
      bound *= m;
    }
  }
  return bound;
}

TEST(ScaeModelTest, DecoderRespectsLipschitzBound) {
  const ScaeConfig c = tiny_config();
  ScaeModel model(c, 6);
  const double bound = decoder_lipschitz_bound(model);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    Tensor a = random_input(1, c.latent_channels, c.window, 200 + trial), b = a;
    const double scale = std::pow(10.0, -3 + trial % 4);
    for (double& v : b.data) v += scale * n(rng);
    const Tensor da = model.decode(a), db = model.decode(b);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < da.data.size(); ++i) num += (da.data[i] - db.data[i]) * (da.data[i] - db.data[i]);
    for (std::size_t i = 0; i < a.data.size(); ++i) den += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    EXPECT_LE(std::sqrt(num / den), bound * (1.0 + 1e-9));
  }
}

TEST(ScaeModelTest, PredictAtZeroMatchesPipeline) {
  const ScaeConfig c = tiny_config();
  ScaeModel model(c, 7);
  const Tensor x = random_input(3, c.state_dim, c.window, 9);
  const ScaeModel::Prediction p = model.predict_forward(x, 0);
  const Tensor tau = model.decode(model.reconstruct_latent(model.parameterize(model.encode(x))));
  EXPECT_EQ(p.tau.data, tau.data);
}

TEST(ScaeModelTest, NewestColumnMatchesFullDecode) {
  for (bool final_activation : {false, true}) {
    for (int kernel : {3, 5, 9, 13}) {
      ScaeConfig c = tiny_config();
      c.kernel = kernel;
      c.final_decoder_activation = final_activation;
      ScaeModel model(c, 7);
      const WindowBatch batch = smooth_batch(c, 4, 3);
      Graph g;
      g.value(scae_loss_graph(g, model, batch, 0.0, BnMode::kTrain).total);  // non-trivial running stats
      const Tensor x = random_input(3, c.state_dim, c.window, 9);
      const LatentTensors p = model.parameterize(model.encode(x));
      const Tensor tau = model.decode(model.reconstruct_latent(p));
      const Eigen::MatrixXd newest = model.decode_newest(p);
      for (int b = 0; b < 3; ++b)
        for (int d = 0; d < c.state_dim; ++d)
          EXPECT_NEAR(newest(b, d), tau.data[(static_cast<std::size_t>(b) * c.state_dim + d) * c.window + c.window - 1],
                      1e-12);
      // rows are decoded independently of the batch they sit in
      const LatentParams last = p.row(2);
      EXPECT_EQ(model.decode_newest(LatentTensors::stack(std::span<const LatentParams>(&last, 1))).row(0), newest.row(2));
    }
  }
}

TEST(ScaeModelTest, PredictBeyondHorizonIsAContractError) {
  const ScaeConfig c = tiny_config();
  ScaeModel model(c, 7);
  const Tensor x = random_input(1, c.state_dim, c.window, 9);
  EXPECT_NO_THROW(model.predict_forward(x, c.horizon));
  EXPECT_THROW(model.predict_forward(x, c.horizon + 1), ContractError);
  EXPECT_THROW(model.predict_forward(x, -1), ContractError);
}

TEST(ScaeModelTest, PredictedPhaseIsAdvanced) {
  const ScaeConfig c = tiny_config();
  ScaeModel model(c, 7);
  const Tensor x = random_input(2, c.state_dim, c.window, 9);
  const LatentTensors p0 = model.predict_forward(x, 0).params;
  const LatentTensors p2 = model.predict_forward(x, 2).params;
  for (int b = 0; b < 2; ++b) {
    const LatentParams want = advance_phase(p0.row(b), 2 * c.dt);
    const LatentParams got = p2.row(b);
    for (int ch = 0; ch < c.latent_channels; ++ch) EXPECT_NEAR(std::remainder(got.phase(ch) - want.phase(ch), 1.0), 0.0, 1e-12);
  }
}

}  // namespace
}  // namespace mimic
