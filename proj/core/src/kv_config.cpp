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

#include "mimic/kv_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mimic/error.hpp"

extern char** environ;

namespace mimic {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string qualified(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_double(std::string_view text, const std::string& what) {
  std::string s(trim(text));
  if (s.empty()) throw ValidationError(what + ": empty numeric value");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ValidationError(what + ": not a number: '" + s + "'");
  return v;
}

KvDocument KvDocument::parse(std::string_view text, const std::string& source) {
  KvDocument doc;
  std::string section;
  long line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source + ": unterminated section header", line_no);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source + ": expected key=value", line_no);
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(source + ": empty key", line_no);
    if (doc.has(section, key)) throw ParseError(source + ": duplicate key " + qualified(section, key), line_no);
    doc.entries_.push_back({section, key, std::string(trim(line.substr(eq + 1)))});
  }
  return doc;
}

KvDocument KvDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KvDocument::to_string() const {
  std::string out;
  for (const std::string& section : sections()) {
    if (!section.empty()) {
      if (!out.empty()) out += "\n";
      out += "[" + section + "]\n";
    }
    for (const Entry& e : entries_) {
      if (e.section == section) out += e.key + " = " + e.value + "\n";
    }
  }
  return out;
}

void KvDocument::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_string();
}

const KvDocument::Entry* KvDocument::find(const std::string& section, const std::string& key) const {
  for (const Entry& e : entries_) {
    if (e.section == section && e.key == key) return &e;
  }
  return nullptr;
}

bool KvDocument::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::optional<std::string> KvDocument::get(const std::string& section, const std::string& key) const {
  used_.insert({section, key});
  if (const Entry* e = find(section, key)) return e->value;
  return std::nullopt;
}

void KvDocument::set(const std::string& section, const std::string& key, std::string value) {
  for (Entry& e : entries_) {
    if (e.section == section && e.key == key) {
      e.value = std::move(value);
      return;
    }
  }
  entries_.push_back({section, key, std::move(value)});
}

void KvDocument::erase(const std::string& section, const std::string& key) {
  std::erase_if(entries_, [&](const Entry& e) { return e.section == section && e.key == key; });
}

std::string KvDocument::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  return get(section, key).value_or(fallback);
}

double KvDocument::get_double(const std::string& section, const std::string& key, double fallback) const {
  const auto v = get(section, key);
  return v ? parse_double(*v, qualified(section, key)) : fallback;
}

long KvDocument::get_int(const std::string& section, const std::string& key, long fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ValidationError(qualified(section, key) + ": not an integer: '" + *v + "'");
  }
  return out;
}

bool KvDocument::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  const std::string s = lower(*v);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ValidationError(qualified(section, key) + ": not a boolean: '" + *v + "'");
}

std::vector<double> KvDocument::get_doubles(const std::string& section, const std::string& key,
                                            const std::vector<double>& fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  std::vector<double> out;
  std::string_view rest = *v;
  while (!trim(rest).empty()) {
    const auto comma = rest.find(',');
    out.push_back(parse_double(rest.substr(0, comma), qualified(section, key)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

void KvDocument::set_double(const std::string& section, const std::string& key, double value) {
  set(section, key, format_double(value));
}

void KvDocument::set_int(const std::string& section, const std::string& key, long value) {
  set(section, key, std::to_string(value));
}

void KvDocument::set_bool(const std::string& section, const std::string& key, bool value) {
  set(section, key, value ? "true" : "false");
}

void KvDocument::set_doubles(const std::string& section, const std::string& key, const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ",";
    s += format_double(values[i]);
  }
  set(section, key, s);
}

void KvDocument::mark_used(const std::string& section, const std::string& key) const {
  used_.insert({section, key});
}

void KvDocument::reject_unknown() const {
  std::string unknown;
  for (const Entry& e : entries_) {
    if (!used_.contains({e.section, e.key})) {
      if (!unknown.empty()) unknown += ", ";
      unknown += qualified(e.section, e.key);
    }
  }
  if (!unknown.empty()) throw ValidationError("unknown config keys: " + unknown);
}

int KvDocument::apply_env_overrides(const std::string& prefix) {
  int applied = 0;
  for (char** env = environ; env != nullptr && *env != nullptr; ++env) {
    std::string_view entry(*env);
    if (!entry.starts_with(prefix)) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    std::string name(entry.substr(prefix.size(), eq - prefix.size()));
    const auto sep = name.find("__");
    if (sep == std::string::npos) continue;
    std::string section = lower(name.substr(0, sep));
    if (section == "root") section.clear();
    set(section, lower(name.substr(sep + 2)), std::string(entry.substr(eq + 1)));
    ++applied;
  }
  return applied;
}

std::vector<std::string> KvDocument::sections() const {
  std::vector<std::string> out;
  for (const Entry& e : entries_) {
    if (std::find(out.begin(), out.end(), e.section) == out.end()) out.push_back(e.section);
  }
  // root keys first
  std::stable_partition(out.begin(), out.end(), [](const std::string& s) { return s.empty(); });
  return out;
}

std::vector<std::string> KvDocument::keys(const std::string& section) const {
  std::vector<std::string> out;
  for (const Entry& e : entries_) {
    if (e.section == section) out.push_back(e.key);
  }
  return out;
}

}  // namespace mimic
