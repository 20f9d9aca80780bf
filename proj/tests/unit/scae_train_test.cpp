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
#include <fstream>
#include <limits>

#include "mimic/error.hpp"
#include "mimic/motion_data.hpp"
#include "mimic/scae_model.hpp"
#include "mimic/scae_train.hpp"

namespace mimic {
namespace {

namespace fs = std::filesystem;

MotionDataset small_dataset() {
  SyntheticOptions opt;
  opt.trajectories = 2;
  opt.steps = 40;
  opt.window = 9;
  opt.seed = 4;
  std::vector<SyntheticMotionSpec> specs = default_synthetic_specs();
  specs.resize(3);
  return generate_synthetic_dataset(specs, opt, SimConfig());
}

ScaeConfig small_config() {
  ScaeConfig c;
  c.state_dim = 6;
  c.latent_channels = 3;
  c.window = 9;
  c.horizon = 3;
  c.hidden = 6;
  c.kernel = 5;
  c.alpha = 0.9;
  c.beta = 1.0;
  return c;
}

TrainConfig small_train() {
  TrainConfig t;
  t.max_iters = 4;
  t.lr = 1e-3;
  t.epochs_per_iter = 2;
  t.minibatches = 2;
  t.windows_per_iter = 8;
  t.eval_windows = 6;
  t.seed = 17;
  return t;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(WindowSourceTest, ValidStartsLeaveRoomForTheHorizon) {
  const MotionDataset ds = small_dataset();
  const WindowSource src(ds, 9, 3);
  // 40 steps, window 9, horizon 3: starts 0..28 per trajectory
  EXPECT_EQ(src.valid().size(), 3u * 2u * 29u);
  for (const WindowRef& r : src.valid()) EXPECT_LE(r.start + 9 - 1 + 3, 39);
  EXPECT_EQ(src.strided(7).size(), 3u * 2u * 5u);
  EXPECT_THROW(src.strided(0), ValidationError);
}

TEST(WindowSourceTest, BatchLayoutMatchesTrajectory) {
  const MotionDataset ds = small_dataset();
  const WindowSource src(ds, 9, 3);
  const std::vector<WindowRef> refs{{0, 1, 5}, {2, 0, 28}};
  const WindowBatch batch = make_window_batch(src, refs);
  EXPECT_EQ(batch.input.shape, (Shape{2, 6, 9}));
  EXPECT_EQ(batch.targets.shape, (Shape{8, 6, 9}));
  for (int j = 0; j < 2; ++j) {
    const Eigen::MatrixXd traj = ds.normalized_trajectory(refs[j].motion, refs[j].trajectory);
    for (int i = 0; i <= 3; ++i)
      for (int d = 0; d < 6; ++d)
        for (int t = 0; t < 9; ++t) {
          EXPECT_EQ(batch.targets.data[((static_cast<std::size_t>(i) * 2 + j) * 6 + d) * 9 + t],
                    traj(refs[j].start + i + t, d));
          if (i == 0) EXPECT_EQ(batch.input.data[(static_cast<std::size_t>(j) * 6 + d) * 9 + t], traj(refs[j].start + t, d));
        }
  }
}

TEST(WindowSourceTest, WindowPastTheEndIsAContractError) {
  const MotionDataset ds = small_dataset();
  const WindowSource src(ds, 9, 3);
  EXPECT_THROW(make_window_batch(src, {{0, 0, 29}}), ContractError);
  EXPECT_THROW(make_window_batch(src, {}), ContractError);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig t = small_train();
  EXPECT_NO_THROW(t.validate());
  t.windows_per_iter = 3;
  EXPECT_THROW(t.validate(), ValidationError);
  t = small_train();
  t.lr = 0.0;
  EXPECT_THROW(t.validate(), ValidationError);
  KvDocument doc;
  small_train().write(doc);
  const TrainConfig back = TrainConfig::read(doc);
  EXPECT_EQ(back.seed, 17u);
  EXPECT_EQ(back.windows_per_iter, 8);
}

TEST(TrainScaeTest, LossDecreasesAndLogIsWritten) {
  const MotionDataset ds = small_dataset();
  ScaeModel model(small_config(), 1);
  TrainConfig t = small_train();
  t.max_iters = 30;
  const fs::path dir = temp_dir("mimic_train_log");
  TrainOptions opt;
  opt.log_csv = dir / "log.csv";
  const TrainResult r = train_scae(model, ds, t, opt);
  ASSERT_EQ(r.log.size(), 30u);
  EXPECT_LT(r.log.back().motion_recon_mse, r.log.front().motion_recon_mse);
  EXPECT_EQ(model.state_mean, ds.mean());
  std::ifstream in(opt.log_csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "iter,loss,motion_recon_mse,latent_recon_mse,lr,wallclock");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 30);
  fs::remove_all(dir);
}

TEST(TrainScaeTest, ResumeReproducesAnUninterruptedRun) {
  const MotionDataset ds = small_dataset();
  const TrainConfig t = small_train();
  const fs::path dir = temp_dir("mimic_train_resume");

  ScaeModel straight(small_config(), 2);
  const TrainResult full = train_scae(straight, ds, t, {});

  ScaeModel first(small_config(), 2);
  TrainOptions opt;
  opt.checkpoint = dir / "state.ckpt";
  opt.stop_after = 2;
  EXPECT_EQ(train_scae(first, ds, t, opt).completed_iters, 2);

  ScaeModel resumed(small_config(), 99);
  TrainOptions opt2;
  opt2.resume_from = dir / "state.ckpt";
  const TrainResult rest = train_scae(resumed, ds, t, opt2);
  ASSERT_EQ(rest.log.size(), 2u);
  EXPECT_EQ(rest.log.front().iter, 3);
  EXPECT_NEAR(rest.log.back().loss, full.log.back().loss, 1e-9);
  const auto a = straight.named_parameters(), b = resumed.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].tensor->data.size(); ++k)
      EXPECT_NEAR(a[i].tensor->data[k], b[i].tensor->data[k], 1e-9) << a[i].name;
  EXPECT_EQ(straight.frozen_hash(), resumed.frozen_hash());
  fs::remove_all(dir);
}

TEST(TrainScaeTest, NonFiniteLossRaisesDivergence) {
  MotionDataset ds = small_dataset();
  ds.mutable_motions()[0].trajectories[0](10, 2) = std::numeric_limits<double>::quiet_NaN();
  ds.set_normalization(Eigen::VectorXd::Zero(6), Eigen::VectorXd::Ones(6));
  ScaeModel model(small_config(), 3);
  TrainConfig t = small_train();
  t.windows_per_iter = 64;
  t.minibatches = 1;
  const fs::path dir = temp_dir("mimic_train_nan");
  TrainOptions opt;
  opt.divergence_snapshot = dir / "diverged.ckpt";
  EXPECT_THROW(train_scae(model, ds, t, opt), DivergenceError);
  EXPECT_TRUE(fs::exists(opt.divergence_snapshot));
  fs::remove_all(dir);
}

TEST(TrainScaeTest, RejectsDatasetWithoutRoomForHorizon) {
  const MotionDataset ds = small_dataset();
  ScaeConfig c = small_config();
  c.horizon = 35;
  ScaeModel model(c, 1);
  EXPECT_THROW(train_scae(model, ds, small_train(), {}), ValidationError);
}

LatentParams constant_params(std::vector<double> amps) {
  const int c = static_cast<int>(amps.size());
  LatentParams p{Eigen::VectorXd::Zero(c), Eigen::VectorXd::Ones(c), Eigen::Map<Eigen::VectorXd>(amps.data(), c),
                 Eigen::VectorXd::Zero(c)};
  return p;
}

TEST(LatentBufferTest, SparsityCountsChannelsAboveRelativeThreshold) {
  LatentSampleBuffer buf;
  buf.add({constant_params({1.0, 0.05, 0.2, 0.0}), 0, 0, 0});  // 2 active
  buf.add({constant_params({1.0, 1.0, 1.0, 1.0}), 0, 0, 1});   // 4 active
  buf.add({constant_params({0.0, 0.0, 0.0, 0.0}), 1, 0, 0});   // 0 active
  buf.add({constant_params({0.5, 0.04, 0.06, 0.0}), 1, 0, 1}); // 2 active
  const std::vector<double> s = amplitude_sparsity(buf, 2, 0.1);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0], 3.0);
  EXPECT_DOUBLE_EQ(s[1], 1.0);
}

TEST(LatentBufferTest, SaveLoadRoundTripAndFilter) {
  const MotionDataset ds = small_dataset();
  ScaeModel model(small_config(), 5);
  model.state_mean = ds.mean();
  model.state_std = ds.stddev();
  const LatentSampleBuffer buf = collect_latent_buffer(model, ds);
  EXPECT_EQ(buf.size(), 3u * 2u * 32u);
  const fs::path dir = temp_dir("mimic_buffer");
  buf.save(dir / "buffer.ckpt");
  const LatentSampleBuffer back = LatentSampleBuffer::load(dir / "buffer.ckpt");
  ASSERT_EQ(back.size(), buf.size());
  EXPECT_EQ(back.motion_names, buf.motion_names);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    EXPECT_EQ(back[i].params.phase, buf[i].params.phase);
    EXPECT_EQ(back[i].params.amplitude, buf[i].params.amplitude);
    EXPECT_EQ(back[i].motion, buf[i].motion);
    EXPECT_EQ(back[i].start, buf[i].start);
  }
  const LatentSampleBuffer only = buf.filter({1});
  EXPECT_EQ(only.size(), 2u * 32u);
  for (const LatentSample& s : only.entries()) EXPECT_EQ(s.motion, 1);
  EXPECT_THROW(LatentSampleBuffer().save(dir / "empty.ckpt"), ContractError);
  fs::remove_all(dir);
}

TEST(ManifoldTest, ProjectionRecoversPlanarCoordinates) {
  // Points spanning a 2-D plane inside 5-D space; PCA must preserve pairwise
  // distances exactly.
  const int n = 30;
  Eigen::MatrixXd feat(n, 5);
  std::vector<WindowRef> refs;
  Eigen::Vector<double, 5> u, v;
  u << 1, 2, 0, -1, 0.5;
  v << 0, 1, -1, 1, 2;
  for (int i = 0; i < n; ++i) {
    const double a = 3.0 * std::cos(0.3 * i), b = std::sin(0.7 * i);
    feat.row(i) = (a * u + b * v).transpose();
    refs.push_back({i % 2, 0, i});
  }
  const std::vector<ManifoldPoint> pts = project_manifold(feat, refs);
  ASSERT_EQ(pts.size(), static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; j += 7) {
      const double want = (feat.row(i) - feat.row(j)).norm();
      const double got = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
      EXPECT_NEAR(got, want, 1e-9);
    }
  EXPECT_EQ(pts[3].motion, 1);
  EXPECT_EQ(pts[3].t, 3);
}

TEST(ManifoldTest, ExportCoversStridedWindows) {
  const MotionDataset ds = small_dataset();
  ScaeModel model(small_config(), 5);
  const std::vector<ManifoldPoint> pts = export_manifold(model, ds, 4);
  EXPECT_EQ(pts.size(), 3u * 2u * 8u);
  double mx = 0.0, my = 0.0;
  for (const ManifoldPoint& p : pts) {
    mx += p.x;
    my += p.y;
  }
  EXPECT_NEAR(mx / pts.size(), 0.0, 1e-9);
  EXPECT_NEAR(my / pts.size(), 0.0, 1e-9);
}

}  // namespace
}  // namespace mimic
