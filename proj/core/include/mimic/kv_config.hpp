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

#ifndef MIMIC_KV_CONFIG_HPP_
#define MIMIC_KV_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mimic {

// Line-oriented `key = value` document with optional `[section]` headers.
// '#' starts a comment. Keys before the first header belong to section "".
//
// Typed getters record which keys were read so that reject_unknown() can flag
// anything a consumer never asked for.
class KvDocument {
 public:
  static KvDocument parse(std::string_view text, const std::string& source = "<string>");
  static KvDocument load(const std::filesystem::path& path);

  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, std::string value);
  void erase(const std::string& section, const std::string& key);

  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long get_int(const std::string& section, const std::string& key, long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  // Comma-separated list of reals.
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;

  void set_double(const std::string& section, const std::string& key, double value);
  void set_int(const std::string& section, const std::string& key, long value);
  void set_bool(const std::string& section, const std::string& key, bool value);
  void set_doubles(const std::string& section, const std::string& key, const std::vector<double>& values);

  // Marks a key as understood without reading it.
  void mark_used(const std::string& section, const std::string& key) const;
  // Throws ValidationError naming every key that no getter consumed.
  void reject_unknown() const;

  // Applies environment variables of the form PREFIX<SECTION>__<KEY>=value
  // (section and key upper-cased; an empty section is written as ROOT).
  // Returns the number of overrides applied.
  int apply_env_overrides(const std::string& prefix);

  std::vector<std::string> sections() const;
  std::vector<std::string> keys(const std::string& section) const;

 private:
  struct Entry {
    std::string section;
    std::string key;
    std::string value;
  };
  const Entry* find(const std::string& section, const std::string& key) const;

  std::vector<Entry> entries_;
  mutable std::set<std::pair<std::string, std::string>> used_;
};

// Formats a double so that parsing it back yields the identical value.
std::string format_double(double value);
double parse_double(std::string_view text, const std::string& what);

}  // namespace mimic

#endif  // MIMIC_KV_CONFIG_HPP_
