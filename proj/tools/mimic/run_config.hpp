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

#ifndef MIMIC_TOOLS_RUN_CONFIG_HPP_
#define MIMIC_TOOLS_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mimic/bilevel.hpp"
#include "mimic/kv_config.hpp"
#include "mimic/motion_data.hpp"
#include "mimic/policy.hpp"
#include "mimic/scae_model.hpp"
#include "mimic/scae_train.hpp"
#include "mimic/toy_sim.hpp"

namespace mimic::cli {

inline constexpr const char* kEnvPrefix = "MIMIC_";

struct RunSection {
  std::uint64_t seed = 0;
  std::filesystem::path out = "runs";
  bool deterministic = false;
  // Label of the trained model used by pretrain, bmi and eval ("fld" or "beta_<b>").
  std::string model = "";
  int checkpoint_every = 50;
};

struct DataSection {
  std::uint64_t seed = 0;
  int trajectories = 3;
  int steps = 240;
  // Read trajectories from here instead of synthesizing them.
  std::filesystem::path import_dir;
};

struct EvalSection {
  int stride = 5;
  double threshold = 0.1;
  bool compare = true;
  int envs = 64;
  int steps = 200;
};

struct CliOverrides {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  bool deterministic = false;
};

// Every module config of one run, resolved from the document.
struct RunConfig {
  RunSection run;
  DataSection data;
  std::vector<SyntheticMotionSpec> motions;
  SimConfig sim;
  ScaeConfig scae;
  std::uint64_t init_seed = 1;  // model initialization
  TrainConfig train;
  std::vector<double> betas;
  PpoConfig ppo;
  RewardConfig reward;
  ObservationConfig observation;
  BmiConfig bmi;
  EvalSection eval;
  // Fully resolved document, echoed next to every output.
  KvDocument resolved;

  std::filesystem::path data_dir() const { return run.out / "data"; }
  std::filesystem::path scae_dir(double beta) const { return run.out / "scae" / beta_label(beta); }
  std::filesystem::path model_dir() const { return run.out / "scae" / model_label(); }
  std::filesystem::path pretrain_dir() const { return run.out / "pretrain"; }
  std::filesystem::path bmi_dir() const { return run.out / "bmi"; }
  std::filesystem::path eval_dir() const { return run.out / "eval"; }

  std::string model_label() const { return run.model.empty() ? beta_label(scae.beta) : run.model; }
  static std::string beta_label(double beta);
};

// Loads the config file (if any), applies MIMIC_<SECTION>__<KEY> environment
// overrides and command-line flags, then reads every section. Unknown keys
// raise ValidationError.
RunConfig resolve_config(const CliOverrides& overrides);
RunConfig resolve_config(KvDocument doc, const CliOverrides& overrides);

// Motion specs from [motion.<name>] sections:
//   noise_std = 0.01
//   joint0 = offset, amplitude, frequency, phase[, amplitude, frequency, phase ...]
std::vector<SyntheticMotionSpec> read_motion_specs(const KvDocument& doc);
void write_motion_specs(KvDocument& doc, const std::vector<SyntheticMotionSpec>& specs);

void write_resolved(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace mimic::cli

#endif  // MIMIC_TOOLS_RUN_CONFIG_HPP_
