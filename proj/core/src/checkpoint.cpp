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

#include "mimic/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mimic/error.hpp"

namespace mimic {

void Checkpoint::put(const std::string& name, const Tensor& t) {
  Tensor copy(t.shape, t.data);
  tensors[name] = std::move(copy);
}

void Checkpoint::put(const std::string& name, const std::vector<double>& values) {
  tensors[name] = Tensor({static_cast<int>(values.size())}, values);
}

const Tensor& Checkpoint::at(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("checkpoint (" + kind + "): missing tensor '" + name + "'");
  return it->second;
}

void Checkpoint::restore(const std::string& name, Tensor& dst) const {
  const Tensor& src = at(name);
  if (src.shape != dst.shape) {
    throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_string(src.shape) + ", model expects " +
                     shape_string(dst.shape));
  }
  dst.data = src.data;
}

void Checkpoint::restore(const std::string& name, std::vector<double>& dst) const {
  const Tensor& src = at(name);
  if (src.numel() != dst.size()) {
    throw ShapeError("checkpoint vector '" + name + "' has " + std::to_string(src.numel()) + " entries, expected " +
                     std::to_string(dst.size()));
  }
  dst.assign(src.data.begin(), src.data.end());
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ValidationError("cannot write checkpoint " + path.string());
    const std::string cfg = config.to_string();
    long lines = 0;
    for (char c : cfg) lines += c == '\n';
    out << "MIMIC-CKPT " << kVersion << "\n";
    out << "kind " << kind << "\n";
    out << "config " << lines << "\n" << cfg;
    char buf[40];
    for (const auto& [name, t] : tensors) {
      out << "tensor " << name << " " << t.rank();
      for (int e : t.shape) out << " " << e;
      out << "\n";
      for (std::size_t i = 0; i < t.numel(); ++i) {
        std::snprintf(buf, sizeof(buf), "%a", t.data[i]);
        out << (i ? " " : "") << buf;
      }
      out << "\n";
    }
    out << "end\n";
    if (!out) throw ValidationError("short write to checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("checkpoint not found: " + path.string());
  const std::string src = path.string();
  std::string line;
  long row = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError(src + ": unexpected end of checkpoint", row);
    ++row;
    return line;
  };
  int version = 0;
  if (std::sscanf(next().c_str(), "MIMIC-CKPT %d", &version) != 1) throw ParseError(src + ": not a checkpoint", 0);
  if (version != kVersion) {
    throw ParseError(src + ": checkpoint version " + std::to_string(version) + " is not supported", 0);
  }
  Checkpoint ck;
  if (next().rfind("kind ", 0) != 0) throw ParseError(src + ": missing kind", row - 1);
  ck.kind = line.substr(5);
  if (!expected_kind.empty() && ck.kind != expected_kind) {
    throw ValidationError(src + ": checkpoint holds a '" + ck.kind + "', expected '" + expected_kind + "'");
  }
  long lines = -1;
  if (std::sscanf(next().c_str(), "config %ld", &lines) != 1 || lines < 0) {
    throw ParseError(src + ": missing config header", row - 1);
  }
  std::string cfg;
  for (long i = 0; i < lines; ++i) cfg += next() + "\n";
  ck.config = KvDocument::parse(cfg, src);
  while (true) {
    next();
    if (line == "end") break;
    std::istringstream hs(line);
    std::string tag, name;
    int rank = -1;
    hs >> tag >> name >> rank;
    if (tag != "tensor" || name.empty() || rank < 0) throw ParseError(src + ": bad tensor header", row - 1);
    Shape shape(static_cast<std::size_t>(rank));
    for (int& e : shape) {
      if (!(hs >> e) || e < 0) throw ParseError(src + ": bad extents for " + name, row - 1);
    }
    const std::size_t n = shape_numel(shape);
    std::vector<double> values;
    values.reserve(n);
    const char* p = next().c_str();
    char* end = nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::strtod(p, &end);
      if (end == p) throw ParseError(src + ": tensor " + name + " has fewer than " + std::to_string(n) + " values", row - 1);
      values.push_back(v);
      p = end;
    }
    while (*p == ' ') ++p;
    if (*p != '\0') throw ParseError(src + ": tensor " + name + " has extra values", row - 1);
    ck.tensors[name] = Tensor(std::move(shape), std::move(values));
  }
  return ck;
}

void Fnv1a::add(double value) {
  unsigned char bytes[sizeof(double)];
  std::memcpy(bytes, &value, sizeof(double));
  for (unsigned char b : bytes) {
    state_ ^= b;
    state_ *= 1099511628211ull;
  }
}

void Fnv1a::add(std::span<const double> values) {
  for (double v : values) add(v);
}

}  // namespace mimic
