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

#include "run_config.hpp"

#include <sstream>

#include "mimic/error.hpp"

namespace mimic::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMotionPrefix = "motion.";

void default_int(KvDocument& doc, const std::string& section, const std::string& key, long value) {
  if (!doc.has(section, key)) doc.set_int(section, key, value);
}

void default_double(KvDocument& doc, const std::string& section, const std::string& key, double value) {
  if (!doc.has(section, key)) doc.set_double(section, key, value);
}

}  // namespace

std::string RunConfig::beta_label(double beta) {
  if (beta == 0.0) return "fld";
  return "beta_" + format_double(beta);
}

std::vector<SyntheticMotionSpec> read_motion_specs(const KvDocument& doc) {
  std::vector<SyntheticMotionSpec> specs;
  for (const std::string& section : doc.sections()) {
    if (section.rfind(kMotionPrefix, 0) != 0) continue;
    SyntheticMotionSpec spec;
    spec.name = section.substr(std::string(kMotionPrefix).size());
    if (spec.name.empty()) throw ValidationError("config: motion section needs a name, as in [motion.walk]");
    spec.noise_std = doc.get_double(section, "noise_std", 0.0);
    for (int j = 0; doc.has(section, "joint" + std::to_string(j)); ++j) {
      const std::vector<double> v = doc.get_doubles(section, "joint" + std::to_string(j), {});
      if (v.empty() || (v.size() - 1) % 3 != 0) {
        throw ValidationError("config: [" + section + "] joint" + std::to_string(j) +
                              " must list offset followed by (amplitude, frequency, phase) triples");
      }
      JointMotion jm;
      jm.offset = v[0];
      for (std::size_t k = 1; k < v.size(); k += 3) jm.terms.push_back({v[k], v[k + 1], v[k + 2]});
      spec.joints.push_back(std::move(jm));
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

void write_motion_specs(KvDocument& doc, const std::vector<SyntheticMotionSpec>& specs) {
  for (const SyntheticMotionSpec& s : specs) {
    const std::string section = kMotionPrefix + s.name;
    doc.set_double(section, "noise_std", s.noise_std);
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
      std::vector<double> v{s.joints[j].offset};
      for (const SinusoidTerm& t : s.joints[j].terms) {
        v.push_back(t.amplitude);
        v.push_back(t.frequency);
        v.push_back(t.phase);
      }
      doc.set_doubles(section, "joint" + std::to_string(j), v);
    }
  }
}

RunConfig resolve_config(const CliOverrides& overrides) {
  KvDocument doc;
  if (overrides.config) {
    if (!fs::exists(*overrides.config)) throw MissingArtifact("config file not found: " + overrides.config->string());
    doc = KvDocument::load(*overrides.config);
  }
  return resolve_config(std::move(doc), overrides);
}

RunConfig resolve_config(KvDocument doc, const CliOverrides& overrides) {
  doc.apply_env_overrides(kEnvPrefix);
  if (overrides.seed) doc.set_int("run", "seed", static_cast<long>(*overrides.seed));
  if (overrides.out) doc.set("run", "out", overrides.out->string());
  if (overrides.deterministic) doc.set_bool("run", "deterministic", true);

  RunConfig c;
  c.run.seed = static_cast<std::uint64_t>(doc.get_int("run", "seed", 0));
  c.run.out = doc.get_string("run", "out", c.run.out.string());
  c.run.deterministic = doc.get_bool("run", "deterministic", false);
  c.run.model = doc.get_string("run", "model", "");
  c.run.checkpoint_every = static_cast<int>(doc.get_int("run", "checkpoint_every", c.run.checkpoint_every));
  if (c.run.checkpoint_every < 0) throw ValidationError("config: [run] checkpoint_every must be >= 0");

  // per-module seeds follow the run seed unless given explicitly
  const long s = static_cast<long>(c.run.seed);
  default_int(doc, "data", "seed", s);
  default_int(doc, "scae", "init_seed", s + 1);
  default_int(doc, "train", "seed", s + 2);
  default_int(doc, "ppo", "seed", s + 3);
  default_int(doc, "bmi", "seed", s + 4);

  c.sim = SimConfig::read(doc);
  default_int(doc, "scae", "state_dim", 2 * c.sim.links);
  default_double(doc, "scae", "dt", c.sim.dt);
  c.scae = ScaeConfig::read(doc);
  if (c.scae.dt != c.sim.dt) throw ValidationError("config: [scae] dt must equal [sim] dt");
  c.train = TrainConfig::read(doc);
  c.betas = doc.get_doubles("sweep", "betas", {c.scae.beta});
  if (c.betas.empty()) throw ValidationError("config: [sweep] betas is empty");
  for (double b : c.betas) {
    if (b < 0.0) throw ValidationError("config: [sweep] betas must be >= 0");
  }

  c.data.trajectories = static_cast<int>(doc.get_int("data", "trajectories", c.data.trajectories));
  c.data.steps = static_cast<int>(doc.get_int("data", "steps", c.data.steps));
  c.data.import_dir = doc.get_string("data", "import_dir", "");
  if (c.data.trajectories < 1) throw ValidationError("config: [data] trajectories must be >= 1");
  c.motions = read_motion_specs(doc);
  if (c.motions.empty()) c.motions = default_synthetic_specs();
  for (const SyntheticMotionSpec& m : c.motions) {
    if (static_cast<int>(m.joints.size()) != c.sim.links) {
      throw ValidationError("config: motion '" + m.name + "' has " + std::to_string(m.joints.size()) +
                            " joints, the simulator has " + std::to_string(c.sim.links));
    }
    m.validate(c.sim.dt);
  }

  c.ppo = PpoConfig::read(doc);
  c.reward = RewardConfig::read(doc);
  c.observation = ObservationConfig::read(doc);
  c.bmi = BmiConfig::read(doc);

  c.eval.stride = static_cast<int>(doc.get_int("eval", "stride", c.eval.stride));
  c.eval.threshold = doc.get_double("eval", "threshold", c.eval.threshold);
  c.eval.compare = doc.get_bool("eval", "compare", c.eval.compare);
  c.eval.envs = static_cast<int>(doc.get_int("eval", "envs", c.eval.envs));
  c.eval.steps = static_cast<int>(doc.get_int("eval", "steps", c.eval.steps));
  if (c.eval.stride < 1 || c.eval.envs < 1 || c.eval.steps < 1) {
    throw ValidationError("config: [eval] stride, envs and steps must be >= 1");
  }
  if (!(c.eval.threshold > 0.0 && c.eval.threshold < 1.0)) throw ValidationError("config: [eval] threshold must lie in (0, 1)");

  const long data_seed = doc.get_int("data", "seed", s);
  const long init_seed = doc.get_int("scae", "init_seed", s + 1);
  c.data.seed = static_cast<std::uint64_t>(data_seed);
  c.init_seed = static_cast<std::uint64_t>(init_seed);
  doc.reject_unknown();

  KvDocument& r = c.resolved;
  r.set_int("run", "seed", s);
  r.set("run", "out", c.run.out.string());
  r.set_bool("run", "deterministic", c.run.deterministic);
  r.set("run", "model", c.model_label());
  r.set_int("run", "checkpoint_every", c.run.checkpoint_every);
  r.set_int("data", "seed", data_seed);
  r.set_int("data", "trajectories", c.data.trajectories);
  r.set_int("data", "steps", c.data.steps);
  r.set("data", "import_dir", c.data.import_dir.string());
  c.sim.write(r);
  c.scae.write(r);
  r.set_int("scae", "init_seed", init_seed);
  c.train.write(r);
  r.set_doubles("sweep", "betas", c.betas);
  c.ppo.write(r);
  c.reward.write(r);
  c.observation.write(r);
  c.bmi.write(r);
  r.set_int("eval", "stride", c.eval.stride);
  r.set_double("eval", "threshold", c.eval.threshold);
  r.set_bool("eval", "compare", c.eval.compare);
  r.set_int("eval", "envs", c.eval.envs);
  r.set_int("eval", "steps", c.eval.steps);
  write_motion_specs(r, c.motions);
  return c;
}

void write_resolved(const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  config.resolved.save(dir / "config.resolved.txt");
}

}  // namespace mimic::cli
