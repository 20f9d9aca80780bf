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

#include "mimic/motion_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "mimic/kv_config.hpp"

namespace mimic {
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// StateLayout

StateLayout::StateLayout(std::vector<LayoutSlice> slices) : slices_(std::move(slices)) {
  std::vector<LayoutSlice> sorted = slices_;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
  int cursor = 0;
  for (const LayoutSlice& s : sorted) {
    if (s.name.empty()) throw ValidationError("state layout: slice without a name");
    if (s.begin != cursor) {
      throw ValidationError("state layout: slice '" + s.name + "' starts at " + std::to_string(s.begin) +
                            ", expected " + std::to_string(cursor) + " (gap or overlap)");
    }
    if (s.end <= s.begin) throw ValidationError("state layout: slice '" + s.name + "' is empty");
    cursor = s.end;
  }
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    for (std::size_t j = i + 1; j < slices_.size(); ++j) {
      if (slices_[i].name == slices_[j].name) throw ValidationError("state layout: duplicate slice " + slices_[i].name);
    }
  }
  dim_ = cursor;
  if (dim_ < 2) throw ValidationError("state layout: dimension must be at least 2");
}

const LayoutSlice& StateLayout::slice(std::string_view name) const {
  for (const LayoutSlice& s : slices_) {
    if (s.name == name) return s;
  }
  throw ValidationError("state layout: no slice named '" + std::string(name) + "'");
}

bool StateLayout::contains(std::string_view name) const {
  return std::any_of(slices_.begin(), slices_.end(), [&](const LayoutSlice& s) { return s.name == name; });
}

StateLayout StateLayout::select(const std::vector<std::string>& names, std::vector<int>* source_columns) const {
  std::vector<LayoutSlice> out;
  std::vector<int> cols;
  int cursor = 0;
  for (const std::string& name : names) {
    const LayoutSlice& s = slice(name);
    out.push_back({s.name, cursor, cursor + s.size()});
    for (int c = s.begin; c < s.end; ++c) cols.push_back(c);
    cursor += s.size();
  }
  if (source_columns) *source_columns = std::move(cols);
  return StateLayout(std::move(out));
}

std::string StateLayout::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    if (i) s += ",";
    s += slices_[i].name + ":" + std::to_string(slices_[i].begin) + ":" + std::to_string(slices_[i].end);
  }
  return s;
}

StateLayout StateLayout::parse(std::string_view text) {
  std::vector<LayoutSlice> slices;
  std::string item;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, item, ',')) {
    const auto a = item.find(':');
    const auto b = item.rfind(':');
    if (a == std::string::npos || a == b) throw ValidationError("state layout: malformed slice '" + item + "'");
    LayoutSlice s;
    s.name = item.substr(0, a);
    s.begin = static_cast<int>(parse_double(item.substr(a + 1, b - a - 1), "layout begin"));
    s.end = static_cast<int>(parse_double(item.substr(b + 1), "layout end"));
    slices.push_back(s);
  }
  return StateLayout(std::move(slices));
}

StateLayout StateLayout::humanoid_record() {
  return StateLayout({{"base_pos", 0, 3},
                      {"base_rot", 3, 7},
                      {"base_lin_vel", 7, 10},
                      {"base_ang_vel", 10, 13},
                      {"projected_gravity", 13, 16},
                      {"joint_pos", 16, 34},
                      {"joint_vel", 34, 52}});
}

std::vector<std::string> StateLayout::humanoid_dynamics_slices() {
  return {"base_lin_vel", "base_ang_vel", "projected_gravity", "joint_pos"};
}

StateLayout StateLayout::joint_chain(int joints) {
  if (joints < 1) throw ValidationError("joint chain layout needs at least one joint");
  return StateLayout({{"joint_pos", 0, joints}, {"joint_vel", joints, 2 * joints}});
}

MotionState::MotionState(Eigen::VectorXd v, StateLayout l) : values(std::move(v)), layout(std::move(l)) {
  if (values.size() != layout.dim()) {
    throw ShapeError("motion state: " + std::to_string(values.size()) + " values for a layout of dimension " +
                     std::to_string(layout.dim()));
  }
  if (!values.allFinite()) throw ValidationError("motion state: non-finite value");
}

Eigen::VectorXd MotionState::slice(std::string_view name) const {
  const LayoutSlice& s = layout.slice(name);
  return values.segment(s.begin, s.size());
}

TrajectorySegment::TrajectorySegment(Eigen::MatrixXd s, double step) : states(std::move(s)), dt(step) {
  if (states.cols() % 2 == 0) throw ValidationError("trajectory segment: window length must be odd");
  if (!(dt > 0.0)) throw ValidationError("trajectory segment: dt must be positive");
}

// ---------------------------------------------------------------------------
// MotionDataset

MotionDataset::MotionDataset(StateLayout layout, double dt, std::vector<Motion> motions)
    : layout_(std::move(layout)), dt_(dt), motions_(std::move(motions)) {
  if (!(dt_ > 0.0)) throw ValidationError("dataset: dt must be positive");
  for (const Motion& m : motions_) {
    for (const Eigen::MatrixXd& t : m.trajectories) {
      if (t.cols() != layout_.dim()) {
        throw ShapeError("dataset: trajectory of motion '" + m.name + "' has width " + std::to_string(t.cols()) +
                         ", layout has " + std::to_string(layout_.dim()));
      }
    }
  }
  fit_normalization();
}

int MotionDataset::motion_index(std::string_view name) const {
  for (std::size_t i = 0; i < motions_.size(); ++i) {
    if (motions_[i].name == name) return static_cast<int>(i);
  }
  throw ValidationError("dataset: no motion named '" + std::string(name) + "'");
}

void MotionDataset::fit_normalization() {
  const int d = layout_.dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  double count = 0.0;
  for (const Motion& m : motions_) {
    for (const Eigen::MatrixXd& t : m.trajectories) {
      sum += t.colwise().sum().transpose();
      count += static_cast<double>(t.rows());
    }
  }
  mean_ = count > 0 ? Eigen::VectorXd(sum / count) : Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(d);
  for (const Motion& m : motions_) {
    for (const Eigen::MatrixXd& t : m.trajectories) {
      sq += (t.rowwise() - mean_.transpose()).array().square().colwise().sum().matrix().transpose();
    }
  }
  std_ = count > 0 ? Eigen::VectorXd((sq / count).array().sqrt()) : Eigen::VectorXd::Ones(d);
  for (int i = 0; i < d; ++i) {
    if (!(std_(i) > 1e-12 * std::max(1.0, std::abs(mean_(i))))) std_(i) = 1.0;
  }
}

void MotionDataset::set_normalization(Eigen::VectorXd mean, Eigen::VectorXd stddev) {
  if (mean.size() != dim() || stddev.size() != dim()) throw ShapeError("dataset: normalization size mismatch");
  if ((stddev.array() <= 0.0).any()) throw ValidationError("dataset: normalization std must be positive");
  mean_ = std::move(mean);
  std_ = std::move(stddev);
}

Eigen::MatrixXd MotionDataset::normalized_trajectory(int motion, int trajectory) const {
  const Eigen::MatrixXd& t = motions_.at(static_cast<std::size_t>(motion)).trajectories.at(static_cast<std::size_t>(trajectory));
  return ((t.rowwise() - mean_.transpose()).array().rowwise() / std_.transpose().array()).matrix();
}

Eigen::VectorXd MotionDataset::normalize(const Eigen::VectorXd& state) const {
  return ((state - mean_).array() / std_.array()).matrix();
}

Eigen::VectorXd MotionDataset::denormalize(const Eigen::VectorXd& state) const {
  return (state.array() * std_.array()).matrix() + mean_;
}

int MotionDataset::shortest_trajectory() const {
  int shortest = -1;
  for (const Motion& m : motions_) {
    for (const Eigen::MatrixXd& t : m.trajectories) {
      if (shortest < 0 || t.rows() < shortest) shortest = static_cast<int>(t.rows());
    }
  }
  return shortest;
}

void MotionDataset::require_window(int window) const {
  for (const Motion& m : motions_) {
    for (std::size_t i = 0; i < m.trajectories.size(); ++i) {
      if (m.trajectories[i].rows() < window) {
        throw TrajectoryTooShort("trajectory " + std::to_string(i) + " of motion '" + m.name + "' has " +
                                 std::to_string(m.trajectories[i].rows()) + " steps, window needs " +
                                 std::to_string(window));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// file IO

Eigen::MatrixXd read_trajectory_file(const fs::path& path, int width) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot open trajectory file " + path.string());
  std::vector<double> values;
  std::string line;
  long row = 0;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    for (char& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream ls(line);
    std::string tok;
    int count = 0;
    while (ls >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw ParseError(path.string() + ": bad number '" + tok + "'", row);
      values.push_back(v);
      ++count;
    }
    if (count != width) {
      throw ParseError(path.string() + ": row has " + std::to_string(count) + " values, layout needs " +
                           std::to_string(width),
                       row);
    }
    ++row;
  }
  Eigen::MatrixXd out(row, width);
  for (long r = 0; r < row; ++r) {
    for (int c = 0; c < width; ++c) out(r, c) = values[static_cast<std::size_t>(r * width + c)];
  }
  return out;
}

void write_trajectory_file(const fs::path& path, const Eigen::MatrixXd& rows) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (c) out << ',';
      out << format_double(rows(r, c));
    }
    out << '\n';
  }
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

MotionDataset load_dataset(const fs::path& root, const LoadOptions& options) {
  if (!fs::is_directory(root)) throw MissingArtifact("dataset directory not found: " + root.string());
  const fs::path manifest_path = root / "manifest.txt";
  KvDocument manifest;
  const bool has_manifest = fs::exists(manifest_path);
  if (has_manifest) manifest = KvDocument::load(manifest_path);

  StateLayout file_layout = options.file_layout;
  if (file_layout.dim() == 0) {
    if (!has_manifest || !manifest.has("", "layout")) {
      throw ValidationError("dataset " + root.string() + ": no layout given and no manifest layout");
    }
    file_layout = StateLayout::parse(*manifest.get("", "layout"));
  }
  const double dt = has_manifest ? manifest.get_double("", "dt", 0.02) : 0.02;

  std::vector<std::string> names;
  if (has_manifest && manifest.has("", "motions")) {
    names = split_names(*manifest.get("", "motions"));
  } else {
    for (const fs::path& p : sorted_entries(root, true)) names.push_back(p.filename().string());
  }

  std::vector<int> columns;
  StateLayout out_layout = file_layout;
  if (!options.select.empty()) out_layout = file_layout.select(options.select, &columns);

  std::vector<Motion> motions;
  for (const std::string& name : names) {
    const fs::path dir = root / name;
    if (!fs::is_directory(dir)) throw MissingArtifact("motion directory not found: " + dir.string());
    Motion m;
    m.name = name;
    m.feasible = has_manifest ? manifest.get_bool("motion." + name, "feasible", true) : true;
    if (has_manifest) manifest.mark_used("motion." + name, "trajectories");
    for (const fs::path& file : sorted_entries(dir, false)) {
      Eigen::MatrixXd rows = read_trajectory_file(file, file_layout.dim());
      if (!columns.empty()) {
        Eigen::MatrixXd picked(rows.rows(), static_cast<Eigen::Index>(columns.size()));
        for (std::size_t c = 0; c < columns.size(); ++c) picked.col(static_cast<Eigen::Index>(c)) = rows.col(columns[c]);
        rows = std::move(picked);
      }
      if (rows.rows() < options.window) {
        throw TrajectoryTooShort(file.string() + ": " + std::to_string(rows.rows()) + " steps, window needs " +
                                 std::to_string(options.window));
      }
      m.trajectories.push_back(std::move(rows));
    }
    motions.push_back(std::move(m));
  }
  return MotionDataset(out_layout, dt, std::move(motions));
}

void write_dataset(const MotionDataset& dataset, const fs::path& root) {
  fs::create_directories(root);
  KvDocument manifest;
  manifest.set("", "format", "mimic-dataset-1");
  manifest.set("", "layout", dataset.layout().to_string());
  manifest.set_int("", "d", dataset.dim());
  manifest.set_double("", "dt", dataset.dt());
  std::string names;
  for (const Motion& m : dataset.motions()) names += (names.empty() ? "" : ",") + m.name;
  manifest.set("", "motions", names);
  for (const Motion& m : dataset.motions()) {
    manifest.set_bool("motion." + m.name, "feasible", m.feasible);
    manifest.set_int("motion." + m.name, "trajectories", static_cast<long>(m.trajectories.size()));
    const fs::path dir = root / m.name;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < m.trajectories.size(); ++i) {
      char fname[32];
      std::snprintf(fname, sizeof(fname), "traj_%03zu.csv", i);
      write_trajectory_file(dir / fname, m.trajectories[i]);
    }
  }
  manifest.save(root / "manifest.txt");
}

// ---------------------------------------------------------------------------
// synthetic corpus

void SyntheticMotionSpec::validate(double dt) const {
  if (joints.empty()) throw ValidationError("synthetic motion '" + name + "': no joints");
  if (noise_std < 0.0) throw ValidationError("synthetic motion '" + name + "': negative noise_std");
  const double nyquist = 1.0 / (2.0 * dt);
  for (std::size_t j = 0; j < joints.size(); ++j) {
    for (const SinusoidTerm& t : joints[j].terms) {
      if (t.amplitude < 0.0) {
        throw ValidationError("synthetic motion '" + name + "': joint " + std::to_string(j) + " has negative amplitude");
      }
      if (t.frequency < 0.0 || t.frequency >= nyquist) {
        throw ValidationError("synthetic motion '" + name + "': joint " + std::to_string(j) + " frequency " +
                              format_double(t.frequency) + " Hz is outside [0, Nyquist = " + format_double(nyquist) +
                              " Hz)");
      }
    }
  }
}

MotionDataset generate_synthetic_dataset(const std::vector<SyntheticMotionSpec>& specs,
                                         const SyntheticOptions& options, const SimConfig& sim) {
  if (specs.empty()) throw ValidationError("synthetic dataset: no motion specs");
  if (options.trajectories < 1) throw ValidationError("synthetic dataset: need at least one trajectory per motion");
  if (options.steps < options.window) {
    throw TrajectoryTooShort("synthetic dataset: T = " + std::to_string(options.steps) + " is below the window " +
                             std::to_string(options.window));
  }
  const int joints = static_cast<int>(specs.front().joints.size());
  for (const SyntheticMotionSpec& s : specs) {
    s.validate(options.dt);
    if (static_cast<int>(s.joints.size()) != joints) throw ValidationError("synthetic dataset: joint count differs between specs");
  }
  if (joints != sim.links) {
    throw ValidationError("synthetic dataset: specs have " + std::to_string(joints) + " joints, simulator has " +
                          std::to_string(sim.links));
  }
  SimConfig probe_cfg = sim;
  probe_cfg.dt = options.dt;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::vector<Motion> motions;
  for (const SyntheticMotionSpec& spec : specs) {
    Motion m;
    m.name = spec.name;
    for (int k = 0; k < options.trajectories; ++k) {
      Eigen::MatrixXd rows(options.steps, 2 * joints);
      for (int t = 0; t < options.steps; ++t) {
        const double time = t * options.dt;
        for (int j = 0; j < joints; ++j) {
          const JointMotion& jm = spec.joints[static_cast<std::size_t>(j)];
          double q = jm.offset, qd = 0.0;
          for (const SinusoidTerm& term : jm.terms) {
            const double u = kTwoPi * (term.frequency * time + term.phase);
            q += term.amplitude * std::sin(u);
            qd += term.amplitude * kTwoPi * term.frequency * std::cos(u);
          }
          rows(t, j) = q;
          rows(t, joints + j) = qd;
        }
      }
      if (spec.noise_std > 0.0) {
        for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] += spec.noise_std * gauss(rng);
      }
      const FeasibilityReport rep = feasibility_probe(probe_cfg, rows.leftCols(joints), rows.rightCols(joints));
      m.feasible = m.feasible && rep.feasible;
      m.trajectories.push_back(std::move(rows));
    }
    motions.push_back(std::move(m));
  }
  return MotionDataset(StateLayout::joint_chain(joints), options.dt, std::move(motions));
}

std::vector<SyntheticMotionSpec> default_synthetic_specs() {
  std::vector<SyntheticMotionSpec> specs;
  auto joint = [](double offset, std::vector<SinusoidTerm> terms) { return JointMotion{offset, std::move(terms)}; };
  specs.push_back({"swing_slow",
                   {joint(0.0, {{0.45, 0.8, 0.0}}), joint(0.0, {{0.3, 0.8, 0.25}}), joint(0.0, {{0.25, 0.8, 0.5}})},
                   0.01});
  specs.push_back({"swing_fast",
                   {joint(0.0, {{0.08, 1.5, 0.0}}), joint(0.0, {{0.12, 1.5, 0.1}}), joint(0.0, {{0.18, 1.5, 0.2}})},
                   0.01});
  specs.push_back({"wave",
                   {joint(0.1, {{0.15, 1.0, 0.0}}), joint(0.0, {{0.3, 1.0, 0.15}}), joint(0.0, {{0.12, 2.0, 0.0}})},
                   0.01});
  specs.push_back({"pump",
                   {joint(-0.2, {{0.15, 1.2, 0.0}}), joint(0.5, {{0.3, 1.2, 0.3}}), joint(-0.3, {{0.3, 1.2, 0.6}})},
                   0.01});
  // joint 2 peak speed 0.8 * 2pi * 2.4 ~ 12 rad/s is above the 10 rad/s limit
  specs.push_back({"whip",
                   {joint(0.0, {{0.05, 2.4, 0.0}}), joint(0.0, {{0.1, 2.4, 0.2}}), joint(0.0, {{0.8, 2.4, 0.4}})},
                   0.01});
  // swinging the stretched chain up to horizontal needs more shoulder torque than allowed
  specs.push_back({"lift",
                   {joint(1.1, {{0.5, 0.8, 0.0}}), joint(0.1, {{0.15, 0.8, 0.25}}), joint(0.0, {{0.1, 0.8, 0.5}})},
                   0.01});
  return specs;
}

// ---------------------------------------------------------------------------
// segmentation

std::vector<int> window_starts(int steps, int window, int horizon, int stride) {
  if (stride < 1) throw ValidationError("segment stride must be >= 1");
  if (window < 1 || horizon < 0) throw ValidationError("window must be >= 1 and horizon >= 0");
  std::vector<int> out;
  for (int t = 0; t + window - 1 + horizon < steps; t += stride) out.push_back(t);
  return out;
}

std::vector<LabeledSegment> slice_segments(const MotionDataset& dataset, int window, int stride) {
  if (stride < 1) throw ValidationError("segment stride must be >= 1");
  dataset.require_window(window);
  std::vector<LabeledSegment> out;
  for (std::size_t m = 0; m < dataset.motions().size(); ++m) {
    const Motion& motion = dataset.motions()[m];
    for (std::size_t k = 0; k < motion.trajectories.size(); ++k) {
      const Eigen::MatrixXd norm = dataset.normalized_trajectory(static_cast<int>(m), static_cast<int>(k));
      for (int start : window_starts(static_cast<int>(norm.rows()), window, 0, stride)) {
        LabeledSegment s;
        s.segment = TrajectorySegment(norm.middleRows(start, window).transpose(), dataset.dt());
        s.motion = static_cast<int>(m);
        s.trajectory = static_cast<int>(k);
        s.start = start;
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

}  // namespace mimic
