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

#ifndef MIMIC_LATENT_OPS_HPP_
#define MIMIC_LATENT_OPS_HPP_

#include <Eigen/Core>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mimic/scae_model.hpp"
#include "mimic/scae_train.hpp"

namespace mimic {

// Target code of one episode: (frequency, amplitude, offset) fixed at reset,
// phase advanced every control step.
class EpisodeLatentState {
 public:
  EpisodeLatentState() = default;
  // `phase` is wrapped into [-0.5, 0.5).
  EpisodeLatentState(const LatentParams& theta, Eigen::VectorXd phase, std::size_t source = 0);

  const Eigen::VectorXd& phase() const { return phase_; }
  const Eigen::VectorXd& frequency() const { return frequency_; }
  const Eigen::VectorXd& amplitude() const { return amplitude_; }
  const Eigen::VectorXd& offset() const { return offset_; }
  std::size_t source() const { return source_; }
  int channels() const { return static_cast<int>(phase_.size()); }

  // Current (phase, frequency, amplitude, offset).
  LatentParams params() const;

 private:
  friend EpisodeLatentState step_phase(const EpisodeLatentState& state, double dt);

  Eigen::VectorXd phase_;
  Eigen::VectorXd frequency_;
  Eigen::VectorXd amplitude_;
  Eigen::VectorXd offset_;
  std::size_t source_ = 0;
};

// Uniform buffer entry for theta, phase uniform on [-0.5, 0.5) per channel.
// Throws ContractError on an empty buffer.
EpisodeLatentState sample_episode_target(const LatentSampleBuffer& buffer, std::mt19937_64& rng);

// phase <- wrap(phase + f dt). Throws ContractError unless dt > 0.
EpisodeLatentState step_phase(const EpisodeLatentState& state, double dt);

struct TargetSample {
  Eigen::MatrixXd segment;  // d x H, physical units
  Eigen::VectorXd state;    // newest column
};

TargetSample synthesize_target(ScaeModel& model, const EpisodeLatentState& state);

// Newest decoded state for each episode, physical units: [B, d].
Eigen::MatrixXd synthesize_targets(ScaeModel& model, std::span<const EpisodeLatentState> states);

// Linear blend of frequency, amplitude and offset; phase is taken from `a`.
inline LatentParams interpolate_latents(const LatentParams& a, const LatentParams& b, double lambda) {
  return interpolate_params(a, b, lambda);
}

}  // namespace mimic

#endif  // MIMIC_LATENT_OPS_HPP_
