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

#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "mimic/error.hpp"

namespace {

// Stable exit codes.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kDivergence = 3;
constexpr int kMissingArtifact = 4;

}  // namespace

int main(int argc, char** argv) {
  using namespace mimic::cli;
  CLI::App app{"Motion imitation toolkit: periodic autoencoders, PPO tracking and bi-level decoder fine-tuning.\n"
               "Exit codes: 0 ok, 2 config error, 3 divergence, 4 missing artifact.\n"
               "Any config key can be overridden with MIMIC_<SECTION>__<KEY>=value."};
  app.require_subcommand(1);

  CliOverrides flags;
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool resume = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (key = value with [section] headers)");
    sub->add_option("--seed", seed, "Run seed; module seeds derive from it unless set explicitly");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_flag("--deterministic", flags.deterministic, "Determinism mode");
  };
  CLI::App* gen = app.add_subcommand("gen-data", "Generate or import the motion corpus");
  CLI::App* train = app.add_subcommand("train-scae", "Train one autoencoder per [sweep] betas entry (0 = fld)");
  CLI::App* pre = app.add_subcommand("pretrain", "PPO pre-training on the feasible motions");
  CLI::App* bmi = app.add_subcommand("bmi", "Bi-level fine-tuning of the decoder");
  CLI::App* eval = app.add_subcommand("eval", "Metrics JSON and plot CSVs");
  for (CLI::App* s : {gen, train, pre, bmi, eval}) add_common(s);
  train->add_flag("--resume", resume, "Continue from the saved training state");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (!config_path.empty()) flags.config = config_path;
    if (!out_dir.empty()) flags.out = out_dir;
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed") > 0) flags.seed = seed;
    const RunConfig config = resolve_config(flags);
    if (sub == gen) cmd_gen_data(config);
    else if (sub == train) cmd_train_scae(config, resume);
    else if (sub == pre) cmd_pretrain(config);
    else if (sub == bmi) cmd_bmi(config);
    else cmd_eval(config);
    return kOk;
  } catch (const mimic::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDivergence;
  } catch (const mimic::MissingArtifact& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kMissingArtifact;
  } catch (const mimic::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  } catch (const mimic::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
}
