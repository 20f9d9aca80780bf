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

#ifndef MIMIC_MOTION_DATA_HPP_
#define MIMIC_MOTION_DATA_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mimic/error.hpp"
#include "mimic/toy_sim.hpp"

namespace mimic {

// Raised when a trajectory has fewer steps than the segment window.
class TrajectoryTooShort : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct LayoutSlice {
  std::string name;
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
};

// Named, contiguous, non-overlapping slices covering [0, dim).
class StateLayout {
 public:
  StateLayout() = default;
  explicit StateLayout(std::vector<LayoutSlice> slices);

  int dim() const { return dim_; }
  const std::vector<LayoutSlice>& slices() const { return slices_; }
  const LayoutSlice& slice(std::string_view name) const;
  bool contains(std::string_view name) const;

  // Layout made of the named slices in the given order, re-based from 0.
  // `source_columns` receives, for each new column, its column in this layout.
  StateLayout select(const std::vector<std::string>& names, std::vector<int>* source_columns = nullptr) const;

  // "name:begin:end,name:begin:end,..."
  std::string to_string() const;
  static StateLayout parse(std::string_view text);

  // 52-wide per-step record of the humanoid corpus.
  static StateLayout humanoid_record();
  // The 27 columns (base velocities, gravity, joint positions) the dynamics
  // model consumes from a humanoid record.
  static std::vector<std::string> humanoid_dynamics_slices();
  // joint_pos[0..n), joint_vel[n..2n) for an n-joint chain.
  static StateLayout joint_chain(int joints);

  bool operator==(const StateLayout& other) const { return to_string() == other.to_string(); }

 private:
  std::vector<LayoutSlice> slices_;
  int dim_ = 0;
};

struct MotionState {
  Eigen::VectorXd values;
  StateLayout layout;

  MotionState(Eigen::VectorXd v, StateLayout l);
  Eigen::VectorXd slice(std::string_view name) const;
};

// d x H window, columns ordered oldest to newest.
struct TrajectorySegment {
  Eigen::MatrixXd states;
  double dt = 0.02;

  TrajectorySegment() = default;
  TrajectorySegment(Eigen::MatrixXd s, double step);
  int dim() const { return static_cast<int>(states.rows()); }
  int window() const { return static_cast<int>(states.cols()); }
};

struct Motion {
  std::string name;
  // One T x d matrix per demonstration; row t is the state at step t.
  std::vector<Eigen::MatrixXd> trajectories;
  bool feasible = true;
};

class MotionDataset {
 public:
  MotionDataset() = default;
  MotionDataset(StateLayout layout, double dt, std::vector<Motion> motions);

  const StateLayout& layout() const { return layout_; }
  int dim() const { return layout_.dim(); }
  double dt() const { return dt_; }
  const std::vector<Motion>& motions() const { return motions_; }
  std::vector<Motion>& mutable_motions() { return motions_; }
  int motion_index(std::string_view name) const;

  // Per-dimension z-scoring statistics over every step of every trajectory.
  // Dimensions with (near) zero spread get std = 1.
  void fit_normalization();
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& stddev() const { return std_; }
  void set_normalization(Eigen::VectorXd mean, Eigen::VectorXd stddev);

  Eigen::MatrixXd normalized_trajectory(int motion, int trajectory) const;  // T x d
  Eigen::VectorXd normalize(const Eigen::VectorXd& state) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& state) const;

  // Throws TrajectoryTooShort if any trajectory has fewer than `window` steps.
  void require_window(int window) const;
  int shortest_trajectory() const;

 private:
  StateLayout layout_;
  double dt_ = 0.02;
  std::vector<Motion> motions_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd std_;
};

struct LoadOptions {
  StateLayout file_layout;
  // Slices to keep, in order; empty keeps the full file layout.
  std::vector<std::string> select;
  int window = 51;
};

// Reads `root/manifest.txt` when present (dt, motion order, feasibility) and
// one trajectory per file under `root/<motion>/`. Rows hold comma or
// whitespace separated decimals; '#' lines are ignored.
MotionDataset load_dataset(const std::filesystem::path& root, const LoadOptions& options);

// Writes manifest plus one CSV per trajectory with round-trip precision.
void write_dataset(const MotionDataset& dataset, const std::filesystem::path& root);

// Single-file trajectory reader/writer used by the dataset layout.
Eigen::MatrixXd read_trajectory_file(const std::filesystem::path& path, int width);
void write_trajectory_file(const std::filesystem::path& path, const Eigen::MatrixXd& rows);

struct SinusoidTerm {
  double amplitude = 0.0;  // rad
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // cycles
};

struct JointMotion {
  double offset = 0.0;  // rad
  std::vector<SinusoidTerm> terms;
};

// Joint angles q_j(t) = offset_j + sum A sin(2pi (f t + phase)); velocities are
// the exact time derivative. Gaussian noise of `noise_std` is added to both.
struct SyntheticMotionSpec {
  std::string name;
  std::vector<JointMotion> joints;
  double noise_std = 0.0;

  // Throws ValidationError on negative amplitude or frequency at/above Nyquist.
  void validate(double dt) const;
};

struct SyntheticOptions {
  int trajectories = 3;
  int steps = 240;
  int window = 51;
  double dt = 0.02;
  std::uint64_t seed = 0;
};

// Deterministic in `options.seed`. Each motion's feasibility flag is the
// conjunction of feasibility_probe over its trajectories.
MotionDataset generate_synthetic_dataset(const std::vector<SyntheticMotionSpec>& specs,
                                         const SyntheticOptions& options, const SimConfig& sim);

// Six motion classes for a 3-joint chain; the last two exceed the default
// simulator's velocity and torque limits respectively.
std::vector<SyntheticMotionSpec> default_synthetic_specs();

struct LabeledSegment {
  TrajectorySegment segment;  // normalized
  int motion = 0;
  int trajectory = 0;
  int start = 0;  // first step covered
};

// Sliding windows of `window` steps per trajectory (never across
// trajectories), floor((T - window) / stride) + 1 per trajectory.
std::vector<LabeledSegment> slice_segments(const MotionDataset& dataset, int window, int stride);

// Start indices t such that steps t .. t + window - 1 + horizon all exist.
std::vector<int> window_starts(int steps, int window, int horizon, int stride = 1);

}  // namespace mimic

#endif  // MIMIC_MOTION_DATA_HPP_
