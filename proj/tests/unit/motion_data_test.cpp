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
#include <numbers>
#include <random>

#include "mimic/error.hpp"
#include "mimic/motion_data.hpp"

namespace mimic {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mimic_motion_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SimConfig single_joint_sim() {
  SimConfig c;
  c.links = 1;
  c.masses = {1.0};
  c.lengths = {0.5};
  c.torque_limit = {50.0};
  c.velocity_limit = {10.0};
  c.joint_min = {-2.6};
  c.joint_max = {2.6};
  return c;
}

SyntheticMotionSpec unit_sine() {
  return {"sine", {JointMotion{0.0, {{1.0, 1.0, 0.0}}}}, 0.0};
}

TEST(StateLayout, HumanoidRecordAndDynamicsSelection) {
  const StateLayout full = StateLayout::humanoid_record();
  EXPECT_EQ(full.dim(), 52);
  EXPECT_EQ(full.slice("joint_pos").begin, 16);
  EXPECT_EQ(full.slice("joint_pos").end, 34);
  std::vector<int> cols;
  const StateLayout dyn = full.select(StateLayout::humanoid_dynamics_slices(), &cols);
  EXPECT_EQ(dyn.dim(), 27);
  EXPECT_EQ(dyn.slice("joint_pos").begin, 9);
  EXPECT_EQ(dyn.slice("joint_pos").end, 27);
  ASSERT_EQ(cols.size(), 27u);
  EXPECT_EQ(cols[0], 7);
  EXPECT_EQ(cols[9], 16);
  EXPECT_EQ(cols[26], 33);
}

TEST(StateLayout, RejectsGapsAndOverlaps) {
  EXPECT_THROW(StateLayout({{"a", 0, 2}, {"b", 3, 4}}), ValidationError);
  EXPECT_THROW(StateLayout({{"a", 0, 2}, {"b", 1, 4}}), ValidationError);
  EXPECT_THROW(StateLayout({{"a", 0, 1}}), ValidationError);
  EXPECT_THROW(StateLayout({{"a", 0, 1}, {"a", 1, 2}}), ValidationError);
  EXPECT_NO_THROW(StateLayout({{"b", 2, 4}, {"a", 0, 2}}));
}

TEST(StateLayout, TextRoundTrip) {
  const StateLayout l = StateLayout::humanoid_record();
  EXPECT_EQ(StateLayout::parse(l.to_string()), l);
  EXPECT_THROW(StateLayout::parse("a:0"), ValidationError);
}

TEST(MotionState, Invariants) {
  const StateLayout l = StateLayout::joint_chain(2);
  EXPECT_THROW(MotionState(Eigen::VectorXd::Zero(3), l), ShapeError);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(4);
  v(1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(MotionState(v, l), ValidationError);
  v(1) = 2.0;
  EXPECT_EQ(MotionState(v, l).slice("joint_pos")(1), 2.0);
}

TEST(TrajectorySegment, WindowMustBeOdd) {
  EXPECT_THROW(TrajectorySegment(Eigen::MatrixXd::Zero(2, 50), 0.02), ValidationError);
  EXPECT_THROW(TrajectorySegment(Eigen::MatrixXd::Zero(2, 51), 0.0), ValidationError);
}

TEST(LoadDataset, PaperLayoutSelectsDynamicsColumns) {
  const fs::path root = fresh_dir("paper");
  fs::create_directories(root / "walk");
  Eigen::MatrixXd rows(60, 52);
  for (int t = 0; t < 60; ++t)
    for (int c = 0; c < 52; ++c) rows(t, c) = 100.0 * c + t;
  write_trajectory_file(root / "walk" / "t0.txt", rows);
  LoadOptions opt;
  opt.file_layout = StateLayout::humanoid_record();
  opt.select = StateLayout::humanoid_dynamics_slices();
  const MotionDataset ds = load_dataset(root, opt);
  ASSERT_EQ(ds.dim(), 27);
  const Eigen::MatrixXd& t = ds.motions()[0].trajectories[0];
  EXPECT_EQ(t(5, 0), 100.0 * 7 + 5);
  EXPECT_EQ(t(5, 9), 100.0 * 16 + 5);
  const auto segs = slice_segments(ds, 51, 1);
  ASSERT_EQ(segs.size(), 10u);
  EXPECT_EQ(segs[0].segment.dim(), 27);
  EXPECT_EQ(segs[0].segment.window(), 51);
}

TEST(LoadDataset, ExactlyWindowLengthGivesOneSegment) {
  const fs::path root = fresh_dir("exact");
  fs::create_directories(root / "m");
  write_trajectory_file(root / "m" / "a.csv", Eigen::MatrixXd::Random(51, 4));
  LoadOptions opt;
  opt.file_layout = StateLayout::joint_chain(2);
  const MotionDataset ds = load_dataset(root, opt);
  EXPECT_EQ(slice_segments(ds, 51, 1).size(), 1u);
  EXPECT_EQ(slice_segments(ds, 51, 7).size(), 1u);
}

TEST(LoadDataset, ShortRowNamesRowIndex) {
  const fs::path root = fresh_dir("short_row");
  fs::create_directories(root / "m");
  write_trajectory_file(root / "m" / "a.csv", Eigen::MatrixXd::Zero(1, 51));
  LoadOptions opt;
  opt.file_layout = StateLayout::humanoid_record();
  try {
    load_dataset(root, opt);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 0);
  }
}

TEST(LoadDataset, WhitespaceCommentsAndTooShort) {
  const fs::path root = fresh_dir("ws");
  fs::create_directories(root / "m");
  {
    std::ofstream f(root / "m" / "a.txt");
    f << "# header\n1 2\n3,4\n\n5\t6\n";
  }
  LoadOptions opt;
  opt.file_layout = StateLayout::joint_chain(1);
  opt.window = 3;
  const MotionDataset ds = load_dataset(root, opt);
  EXPECT_EQ(ds.motions()[0].trajectories[0](2, 1), 6.0);
  opt.window = 5;
  EXPECT_THROW(load_dataset(root, opt), TrajectoryTooShort);
  EXPECT_THROW(load_dataset(root / "absent", opt), MissingArtifact);
}

TEST(Synthetic, ClosedFormSine) {
  SyntheticOptions opt;
  opt.trajectories = 1;
  const MotionDataset ds = generate_synthetic_dataset({unit_sine()}, opt, single_joint_sim());
  const Eigen::MatrixXd& t = ds.motions()[0].trajectories[0];
  ASSERT_EQ(t.rows(), 240);
  for (int s = 0; s < 240; ++s) {
    EXPECT_NEAR(t(s, 0), std::sin(2.0 * std::numbers::pi * 0.02 * s), 1e-12);
    EXPECT_NEAR(t(s, 1), 2.0 * std::numbers::pi * std::cos(2.0 * std::numbers::pi * 0.02 * s), 1e-12);
  }
}

TEST(Synthetic, DeterministicInSeed) {
  SyntheticOptions opt;
  opt.seed = 42;
  const auto specs = default_synthetic_specs();
  const MotionDataset a = generate_synthetic_dataset(specs, opt, SimConfig{});
  const MotionDataset b = generate_synthetic_dataset(specs, opt, SimConfig{});
  opt.seed = 43;
  const MotionDataset c = generate_synthetic_dataset(specs, opt, SimConfig{});
  for (std::size_t m = 0; m < specs.size(); ++m) {
    for (int k = 0; k < 3; ++k) {
      EXPECT_TRUE((a.motions()[m].trajectories[k].array() == b.motions()[m].trajectories[k].array()).all());
      EXPECT_FALSE((a.motions()[m].trajectories[k].array() == c.motions()[m].trajectories[k].array()).all());
    }
  }
}

TEST(Synthetic, VelocityAboveLimitIsInfeasible) {
  SyntheticOptions opt;
  opt.trajectories = 1;
  SyntheticMotionSpec fast = unit_sine();
  fast.joints[0].terms[0].frequency = 2.0;  // peak speed 4 pi > 10 rad/s
  SimConfig sim = single_joint_sim();
  sim.torque_limit = {1e6};
  EXPECT_FALSE(generate_synthetic_dataset({fast}, opt, sim).motions()[0].feasible);
  EXPECT_TRUE(generate_synthetic_dataset({unit_sine()}, opt, sim).motions()[0].feasible);
}

TEST(Synthetic, DefaultCorpusHasExactlyTwoInfeasibleMotions) {
  const MotionDataset ds = generate_synthetic_dataset(default_synthetic_specs(), SyntheticOptions{}, SimConfig{});
  ASSERT_EQ(ds.motions().size(), 6u);
  std::vector<std::string> infeasible;
  for (const Motion& m : ds.motions()) {
    EXPECT_EQ(m.trajectories.size(), 3u);
    if (!m.feasible) infeasible.push_back(m.name);
  }
  EXPECT_EQ(infeasible, (std::vector<std::string>{"whip", "lift"}));
  EXPECT_EQ(ds.dim(), 6);
}

TEST(Synthetic, ValidationErrors) {
  SyntheticMotionSpec s = unit_sine();
  s.joints[0].terms[0].frequency = 25.0;  // Nyquist at dt 0.02
  EXPECT_THROW(generate_synthetic_dataset({s}, SyntheticOptions{}, single_joint_sim()), ValidationError);
  s = unit_sine();
  s.joints[0].terms[0].amplitude = -0.1;
  EXPECT_THROW(generate_synthetic_dataset({s}, SyntheticOptions{}, single_joint_sim()), ValidationError);
  EXPECT_THROW(generate_synthetic_dataset({}, SyntheticOptions{}, single_joint_sim()), ValidationError);
  SyntheticOptions shortopt;
  shortopt.steps = 40;
  EXPECT_THROW(generate_synthetic_dataset({unit_sine()}, shortopt, single_joint_sim()), TrajectoryTooShort);
}

TEST(Segments, PaperCountPerTrajectory) {
  const MotionDataset ds = generate_synthetic_dataset(default_synthetic_specs(), SyntheticOptions{}, SimConfig{});
  const auto segs = slice_segments(ds, 51, 1);
  EXPECT_EQ(segs.size(), 6u * 3u * 190u);
  EXPECT_EQ(slice_segments(ds, 51, 4).size(), 6u * 3u * ((240u - 51u) / 4u + 1u));
  EXPECT_THROW(slice_segments(ds, 51, 0), ValidationError);
  for (const LabeledSegment& s : segs) {
    ASSERT_LE(s.start + 51, 240);
    ASSERT_EQ(s.segment.window(), 51);
  }
}

TEST(Segments, NormalizedWithDatasetStatistics) {
  const MotionDataset ds = generate_synthetic_dataset(default_synthetic_specs(), SyntheticOptions{}, SimConfig{});
  const auto segs = slice_segments(ds, 51, 1);
  const LabeledSegment& s = segs[200];
  const Eigen::MatrixXd& raw = ds.motions()[s.motion].trajectories[s.trajectory];
  for (int c = 0; c < 51; ++c) {
    const Eigen::VectorXd expect = ds.normalize(raw.row(s.start + c).transpose());
    EXPECT_LT((s.segment.states.col(c) - expect).norm(), 1e-12);
  }
}

TEST(Dataset, WriteLoadRoundTripIsExact) {
  SyntheticOptions opt;
  opt.seed = 9;
  const MotionDataset ds = generate_synthetic_dataset(default_synthetic_specs(), opt, SimConfig{});
  const fs::path root = fresh_dir("roundtrip");
  write_dataset(ds, root);
  const MotionDataset back = load_dataset(root, LoadOptions{});
  ASSERT_EQ(back.motions().size(), ds.motions().size());
  EXPECT_EQ(back.dt(), ds.dt());
  EXPECT_EQ(back.layout(), ds.layout());
  for (std::size_t m = 0; m < ds.motions().size(); ++m) {
    EXPECT_EQ(back.motions()[m].name, ds.motions()[m].name);
    EXPECT_EQ(back.motions()[m].feasible, ds.motions()[m].feasible);
    for (std::size_t k = 0; k < ds.motions()[m].trajectories.size(); ++k) {
      EXPECT_TRUE((back.motions()[m].trajectories[k].array() == ds.motions()[m].trajectories[k].array()).all());
    }
  }
}

TEST(Dataset, NormalizationProperty) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Motion> motions(2);
    for (Motion& m : motions) {
      m.name = "m" + std::to_string(&m - motions.data());
      for (int k = 0; k < 2; ++k) {
        Eigen::MatrixXd t(60, 4);
        for (int r = 0; r < 60; ++r) {
          t(r, 0) = 5.0 + 3.0 * g(rng);
          t(r, 1) = -2.0 + 0.01 * g(rng);
          t(r, 2) = 7.0;  // degenerate
          t(r, 3) = 100.0 * g(rng);
        }
        m.trajectories.push_back(t);
      }
    }
    const MotionDataset ds(StateLayout::joint_chain(2), 0.02, motions);
    EXPECT_EQ(ds.stddev()(2), 1.0);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(4), sq = Eigen::VectorXd::Zero(4);
    double count = 0;
    for (int m = 0; m < 2; ++m)
      for (int k = 0; k < 2; ++k) {
        const Eigen::MatrixXd n = ds.normalized_trajectory(m, k);
        sum += n.colwise().sum().transpose();
        sq += n.array().square().colwise().sum().matrix().transpose();
        count += n.rows();
      }
    for (int d : {0, 1, 3}) {
      const double mean = sum(d) / count;
      EXPECT_NEAR(mean, 0.0, 1e-6);
      EXPECT_NEAR(std::sqrt(sq(d) / count - mean * mean), 1.0, 1e-6);
    }
    EXPECT_NEAR(ds.denormalize(ds.normalize(motions[0].trajectories[0].row(3).transpose()))(3),
                motions[0].trajectories[0](3, 3), 1e-9);
  }
}

TEST(Segments, HorizonWindowsStayInRange) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pick(1, 60);
  for (int trial = 0; trial < 500; ++trial) {
    const int h = 2 * pick(rng) - 1, n = pick(rng) - 1, extra = pick(rng) - 1;
    const int steps = h + n + extra;
    const auto starts = window_starts(steps, h, n);
    ASSERT_EQ(static_cast<int>(starts.size()), steps - h - n + 1);
    for (int t : starts) {
      ASSERT_GE(t, 0);
      ASSERT_LT(t + h - 1 + n, steps);
    }
  }
  EXPECT_TRUE(window_starts(10, 7, 4).empty());
}

}  // namespace
}  // namespace mimic
