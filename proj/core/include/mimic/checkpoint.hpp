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

#ifndef MIMIC_CHECKPOINT_HPP_
#define MIMIC_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mimic/kv_config.hpp"
#include "mimic/tensor.hpp"

namespace mimic {

// Self-describing container shared by model, policy and trainer snapshots:
//
//   MIMIC-CKPT 1
//   kind <kind>
//   config <line count>
//   <key = value document>
//   tensor <name> <rank> <extents...>
//   <hexadecimal floats>
//   ...
//   end
//
// Values are written as C99 hex floats so a save/load round trip is bit-exact.
struct Checkpoint {
  static constexpr int kVersion = 1;

  std::string kind;
  KvDocument config;
  std::map<std::string, Tensor> tensors;

  void put(const std::string& name, const Tensor& t);
  void put(const std::string& name, const std::vector<double>& values);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.contains(name); }
  // Copies a stored tensor into `dst`, which must already have the stored shape.
  void restore(const std::string& name, Tensor& dst) const;
  void restore(const std::string& name, std::vector<double>& dst) const;

  void save(const std::filesystem::path& path) const;
  // Throws MissingArtifact if absent, ParseError on a malformed file and
  // ValidationError when `expected_kind` is non-empty and differs.
  static Checkpoint load(const std::filesystem::path& path, const std::string& expected_kind = "");
};

// 64-bit FNV-1a over the raw bytes of a sequence of doubles.
class Fnv1a {
 public:
  void add(std::span<const double> values);
  void add(double value);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

}  // namespace mimic

#endif  // MIMIC_CHECKPOINT_HPP_
