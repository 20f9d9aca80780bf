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

#include "mimic/toy_sim.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "mimic/error.hpp"

namespace mimic {
namespace {

void check_size(const std::vector<double>& v, int n, const char* name) {
  if (static_cast<int>(v.size()) != n) {
    throw ValidationError(std::string("sim config: ") + name + " needs " + std::to_string(n) + " entries, got " +
                          std::to_string(v.size()));
  }
}

std::string describe_state(const SimState& s) {
  std::ostringstream os;
  os << "t=" << s.time << " q=[" << s.q.transpose() << "] qd=[" << s.qd.transpose() << "]";
  return os.str();
}

}  // namespace

void SimConfig::validate() const {
  if (links < 1) throw ValidationError("sim config: links must be >= 1");
  check_size(masses, links, "masses");
  check_size(lengths, links, "lengths");
  check_size(torque_limit, links, "torque_limit");
  check_size(velocity_limit, links, "velocity_limit");
  check_size(joint_min, links, "joint_min");
  check_size(joint_max, links, "joint_max");
  for (int i = 0; i < links; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!(masses[k] > 0.0) || !(lengths[k] > 0.0)) throw ValidationError("sim config: masses and lengths must be positive");
    if (!(torque_limit[k] > 0.0)) throw ValidationError("sim config: torque_limit must be positive");
    if (!(velocity_limit[k] > 0.0)) throw ValidationError("sim config: velocity_limit must be positive");
    if (!(joint_min[k] < joint_max[k])) throw ValidationError("sim config: joint_min must be below joint_max");
  }
  if (!(dt > 0.0)) throw ValidationError("sim config: dt must be positive");
  if (substeps < 1) throw ValidationError("sim config: substeps must be >= 1");
  if (kp < 0.0 || kd < 0.0) throw ValidationError("sim config: PD gains must be non-negative");
  if (joint_damping < 0.0) throw ValidationError("sim config: joint_damping must be non-negative");
  if (armature < 0.0) throw ValidationError("sim config: armature must be non-negative");
}

void SimConfig::write(KvDocument& doc, const std::string& section) const {
  doc.set_int(section, "links", links);
  doc.set_doubles(section, "masses", masses);
  doc.set_doubles(section, "lengths", lengths);
  doc.set_double(section, "gravity", gravity);
  doc.set_doubles(section, "torque_limit", torque_limit);
  doc.set_doubles(section, "velocity_limit", velocity_limit);
  doc.set_doubles(section, "joint_min", joint_min);
  doc.set_doubles(section, "joint_max", joint_max);
  doc.set_double(section, "dt", dt);
  doc.set_int(section, "substeps", substeps);
  doc.set_double(section, "kp", kp);
  doc.set_double(section, "kd", kd);
  doc.set_double(section, "joint_damping", joint_damping);
  doc.set_double(section, "armature", armature);
}

SimConfig SimConfig::read(const KvDocument& doc, const std::string& section) {
  SimConfig c;
  c.links = static_cast<int>(doc.get_int(section, "links", c.links));
  c.masses = doc.get_doubles(section, "masses", c.masses);
  c.lengths = doc.get_doubles(section, "lengths", c.lengths);
  c.gravity = doc.get_double(section, "gravity", c.gravity);
  c.torque_limit = doc.get_doubles(section, "torque_limit", c.torque_limit);
  c.velocity_limit = doc.get_doubles(section, "velocity_limit", c.velocity_limit);
  c.joint_min = doc.get_doubles(section, "joint_min", c.joint_min);
  c.joint_max = doc.get_doubles(section, "joint_max", c.joint_max);
  c.dt = doc.get_double(section, "dt", c.dt);
  c.substeps = static_cast<int>(doc.get_int(section, "substeps", c.substeps));
  c.kp = doc.get_double(section, "kp", c.kp);
  c.kd = doc.get_double(section, "kd", c.kd);
  c.joint_damping = doc.get_double(section, "joint_damping", c.joint_damping);
  c.armature = doc.get_double(section, "armature", c.armature);
  c.validate();
  return c;
}

SimState SimState::rest(const SimConfig& config) {
  SimState s;
  s.q = Eigen::VectorXd::Zero(config.links);
  s.qd = Eigen::VectorXd::Zero(config.links);
  return s;
}

ChainDynamics chain_dynamics(const SimConfig& config, const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
  const int n = config.links;
  Eigen::VectorXd theta(n), omega(n);
  double acc_t = 0.0, acc_w = 0.0;
  for (int j = 0; j < n; ++j) {
    acc_t += q(j);
    acc_w += qd(j);
    theta(j) = acc_t;
    omega(j) = acc_w;
  }
  ChainDynamics out;
  out.mass = config.armature * Eigen::MatrixXd::Identity(n, n);
  out.coriolis = Eigen::VectorXd::Zero(n);
  out.gravity = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd jac(2, n);
  for (int i = 0; i < n; ++i) {
    const double m = config.masses[static_cast<std::size_t>(i)];
    // Jacobian of mass i: column k sums links k..i.
    jac.setZero();
    double cx = 0.0, cy = 0.0;
    for (int k = i; k >= 0; --k) {
      const double l = config.lengths[static_cast<std::size_t>(k)];
      cx += l * std::cos(theta(k));
      cy += l * std::sin(theta(k));
      jac(0, k) = cx;
      jac(1, k) = cy;
    }
    Eigen::Vector2d jdot_qd = Eigen::Vector2d::Zero();
    for (int j = 0; j <= i; ++j) {
      const double l = config.lengths[static_cast<std::size_t>(j)];
      jdot_qd(0) -= l * std::sin(theta(j)) * omega(j) * omega(j);
      jdot_qd(1) += l * std::cos(theta(j)) * omega(j) * omega(j);
    }
    out.mass.noalias() += m * jac.transpose() * jac;
    out.coriolis.noalias() += m * jac.transpose() * jdot_qd;
    out.gravity.noalias() += m * config.gravity * jac.row(1).transpose();
  }
  return out;
}

Eigen::VectorXd inverse_dynamics(const SimConfig& config, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                 const Eigen::VectorXd& qdd) {
  const ChainDynamics dyn = chain_dynamics(config, q, qd);
  return dyn.mass * qdd + dyn.coriolis + dyn.gravity + config.joint_damping * qd;
}

double mechanical_energy(const SimConfig& config, const SimState& state) {
  const ChainDynamics dyn = chain_dynamics(config, state.q, state.qd);
  double kinetic = 0.5 * state.qd.dot(dyn.mass * state.qd);
  double potential = 0.0, theta = 0.0, y = 0.0;
  for (int i = 0; i < config.links; ++i) {
    theta += state.q(i);
    y -= config.lengths[static_cast<std::size_t>(i)] * std::cos(theta);
    potential += config.masses[static_cast<std::size_t>(i)] * config.gravity * y;
  }
  return kinetic + potential;
}

Eigen::VectorXd pd_torque(const SimConfig& config, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                          const Eigen::VectorXd& target) {
  Eigen::VectorXd tau = config.kp * (target - q) - config.kd * qd;
  for (int i = 0; i < tau.size(); ++i) {
    const double lim = config.torque_limit[static_cast<std::size_t>(i)];
    tau(i) = std::clamp(tau(i), -lim, lim);
  }
  return tau;
}

namespace {

void integrate(const SimConfig& config, SimState& s, const Eigen::VectorXd& torques, double h) {
  const int n = config.links;
  Eigen::VectorXd tau = torques;
  for (int i = 0; i < n; ++i) {
    const double lim = config.torque_limit[static_cast<std::size_t>(i)];
    tau(i) = std::clamp(tau(i), -lim, lim);
  }
  const ChainDynamics dyn = chain_dynamics(config, s.q, s.qd);
  const Eigen::VectorXd rhs = tau - dyn.coriolis - dyn.gravity - config.joint_damping * s.qd;
  const Eigen::VectorXd qdd = dyn.mass.ldlt().solve(rhs);
  s.qd += h * qdd;
  for (int i = 0; i < n; ++i) {
    const double vmax = config.velocity_limit[static_cast<std::size_t>(i)];
    s.qd(i) = std::clamp(s.qd(i), -vmax, vmax);
  }
  s.q += h * s.qd;
  for (int i = 0; i < n; ++i) {
    const double lo = config.joint_min[static_cast<std::size_t>(i)];
    const double hi = config.joint_max[static_cast<std::size_t>(i)];
    if (s.q(i) < lo) {
      s.q(i) = lo;
      s.qd(i) = 0.0;
    } else if (s.q(i) > hi) {
      s.q(i) = hi;
      s.qd(i) = 0.0;
    }
  }
  s.time += h;
  if (!s.q.allFinite() || !s.qd.allFinite()) throw SimulationFault("simulation state became non-finite: " + describe_state(s));
}

}  // namespace

SimState step(const SimConfig& config, const SimState& state, const Eigen::VectorXd& torques) {
  if (torques.size() != config.links) throw ContractError("step: torque vector size does not match link count");
  SimState s = state;
  const double h = config.dt / config.substeps;
  for (int k = 0; k < config.substeps; ++k) integrate(config, s, torques, h);
  return s;
}

SimState step_pd(const SimConfig& config, const SimState& state, const Eigen::VectorXd& target,
                 Eigen::VectorXd* applied) {
  if (target.size() != config.links) throw ContractError("step_pd: target size does not match link count");
  SimState s = state;
  const double h = config.dt / config.substeps;
  Eigen::VectorXd tau;
  for (int k = 0; k < config.substeps; ++k) {
    tau = pd_torque(config, s.q, s.qd, target);
    integrate(config, s, tau, h);
  }
  if (applied) *applied = tau;
  return s;
}

FeasibilityReport feasibility_probe(const SimConfig& config, const Eigen::MatrixXd& q, const Eigen::MatrixXd& qd) {
  const int n = config.links;
  if (q.cols() != n || qd.cols() != n || q.rows() != qd.rows()) {
    throw ShapeError("feasibility_probe: expected T x " + std::to_string(n) + " position and velocity rows");
  }
  const Eigen::Index steps = q.rows();
  FeasibilityReport report;
  if (steps == 0) return report;
  long flagged = 0;
  double excess_sum = 0.0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    Eigen::VectorXd qdd(n);
    if (steps == 1) {
      qdd.setZero();
    } else if (t == 0) {
      qdd = (qd.row(1) - qd.row(0)).transpose() / config.dt;
    } else if (t == steps - 1) {
      qdd = (qd.row(t) - qd.row(t - 1)).transpose() / config.dt;
    } else {
      qdd = (qd.row(t + 1) - qd.row(t - 1)).transpose() / (2.0 * config.dt);
    }
    const Eigen::VectorXd tau = inverse_dynamics(config, q.row(t).transpose(), qd.row(t).transpose(), qdd);
    for (int j = 0; j < n; ++j) {
      const double tr = std::abs(tau(j)) / config.torque_limit[static_cast<std::size_t>(j)];
      const double vr = std::abs(qd(t, j)) / config.velocity_limit[static_cast<std::size_t>(j)];
      report.peak_torque_ratio = std::max(report.peak_torque_ratio, tr);
      report.peak_velocity_ratio = std::max(report.peak_velocity_ratio, vr);
      bool any = false;
      if (tr > 1.0) {
        report.violations.push_back({static_cast<int>(t), j, ViolationKind::kTorque, tr - 1.0});
        excess_sum += tr - 1.0;
        any = true;
      }
      if (vr > 1.0) {
        report.violations.push_back({static_cast<int>(t), j, ViolationKind::kVelocity, vr - 1.0});
        excess_sum += vr - 1.0;
        any = true;
      }
      if (any) ++flagged;
    }
  }
  const double entries = static_cast<double>(steps) * n;
  report.feasible = report.violations.empty();
  report.violation_rate = static_cast<double>(flagged) / entries;
  report.violation_magnitude = excess_sum / entries;
  return report;
}

}  // namespace mimic
