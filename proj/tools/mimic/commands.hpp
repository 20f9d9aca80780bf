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

#ifndef MIMIC_TOOLS_COMMANDS_HPP_
#define MIMIC_TOOLS_COMMANDS_HPP_

#include "run_config.hpp"

namespace mimic::cli {

void cmd_gen_data(const RunConfig& config);
// Trains one model per entry of [sweep] betas. With `resume`, continues from
// the training state saved in each run directory when present.
void cmd_train_scae(const RunConfig& config, bool resume);
void cmd_pretrain(const RunConfig& config);
void cmd_bmi(const RunConfig& config);
void cmd_eval(const RunConfig& config);

}  // namespace mimic::cli

#endif  // MIMIC_TOOLS_COMMANDS_HPP_
