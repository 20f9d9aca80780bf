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

#include "mimic/latent_ops.hpp"

#include "mimic/error.hpp"

namespace mimic {

EpisodeLatentState::EpisodeLatentState(const LatentParams& theta, Eigen::VectorXd phase, std::size_t source)
    : phase_(std::move(phase)),
      frequency_(theta.frequency),
      amplitude_(theta.amplitude),
      offset_(theta.offset),
      source_(source) {
  if (phase_.size() != frequency_.size()) throw ShapeError("episode latent: phase and theta channel counts differ");
  for (Eigen::Index i = 0; i < phase_.size(); ++i) phase_(i) = wrap_phase(phase_(i));
}

LatentParams EpisodeLatentState::params() const { return {phase_, frequency_, amplitude_, offset_}; }

EpisodeLatentState sample_episode_target(const LatentSampleBuffer& buffer, std::mt19937_64& rng) {
  if (buffer.empty()) throw ContractError("sample_episode_target: latent buffer is empty");
  std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
  const std::size_t idx = pick(rng);
  const LatentParams& theta = buffer[idx].params;
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Eigen::VectorXd phase(theta.channels());
  for (Eigen::Index i = 0; i < phase.size(); ++i) phase(i) = u(rng);
  return EpisodeLatentState(theta, std::move(phase), idx);
}

EpisodeLatentState step_phase(const EpisodeLatentState& state, double dt) {
  if (!(dt > 0.0)) throw ContractError("step_phase: dt must be positive");
  EpisodeLatentState out = state;
  for (Eigen::Index i = 0; i < out.phase_.size(); ++i) {
    out.phase_(i) = wrap_phase(state.phase_(i) + state.frequency_(i) * dt);
  }
  return out;
}

TargetSample synthesize_target(ScaeModel& model, const EpisodeLatentState& state) {
  const LatentParams p = state.params();
  const Tensor tau = model.decode(model.reconstruct_latent(LatentTensors::stack(std::span<const LatentParams>(&p, 1))));
  const int d = tau.dim(1), h = tau.dim(2);
  TargetSample out{Eigen::MatrixXd(d, h), Eigen::VectorXd(d)};
  for (int t = 0; t < h; ++t) {
    Eigen::VectorXd col(d);
    for (int i = 0; i < d; ++i) col(i) = tau.data[static_cast<std::size_t>(i) * h + t];
    out.segment.col(t) = model.denormalize(col);
  }
  out.state = out.segment.col(h - 1);
  return out;
}

Eigen::MatrixXd synthesize_targets(ScaeModel& model, std::span<const EpisodeLatentState> states) {
  std::vector<LatentParams> rows;
  rows.reserve(states.size());
  for (const EpisodeLatentState& s : states) rows.push_back(s.params());
  Eigen::MatrixXd newest = model.decode_newest(LatentTensors::stack(rows));
  for (Eigen::Index r = 0; r < newest.rows(); ++r) {
    newest.row(r) = model.denormalize(newest.row(r).transpose()).transpose();
  }
  return newest;
}

}  // namespace mimic
