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

#ifndef MIMIC_TOY_SIM_HPP_
#define MIMIC_TOY_SIM_HPP_

#include <Eigen/Core>
#include <string>
#include <vector>

#include "mimic/kv_config.hpp"

namespace mimic {

// Planar serial chain hanging from a fixed pivot. Link i carries a point mass
// at its distal end; joint angles are relative, measured from the downward
// vertical for the first link.
struct SimConfig {
  int links = 3;
  std::vector<double> masses{2.0, 1.5, 1.0};   // kg
  std::vector<double> lengths{0.5, 0.45, 0.4};  // m
  double gravity = 9.81;                        // m/s^2
  std::vector<double> torque_limit{60.0, 35.0, 15.0};  // N m
  std::vector<double> velocity_limit{10.0, 10.0, 10.0};  // rad/s
  std::vector<double> joint_min{-2.6, -2.6, -2.6};  // rad
  std::vector<double> joint_max{2.6, 2.6, 2.6};     // rad
  double dt = 0.02;
  int substeps = 1;
  double kp = 30.0;
  double kd = 5.0;
  double joint_damping = 0.0;  // N m s/rad, viscous
  double armature = 0.25;      // kg m^2, reflected rotor inertia per joint

  // Throws ValidationError on inconsistent sizes or non-positive limits.
  void validate() const;

  void write(KvDocument& doc, const std::string& section = "sim") const;
  static SimConfig read(const KvDocument& doc, const std::string& section = "sim");
};

struct SimState {
  Eigen::VectorXd q;   // rad
  Eigen::VectorXd qd;  // rad/s
  double time = 0.0;   // s

  static SimState rest(const SimConfig& config);
};

// Mass matrix (link masses plus armature on the diagonal) and the velocity/gravity bias of M(q) qdd + bias(q, qd) = tau.
struct ChainDynamics {
  Eigen::MatrixXd mass;
  Eigen::VectorXd coriolis;
  Eigen::VectorXd gravity;
};

ChainDynamics chain_dynamics(const SimConfig& config, const Eigen::VectorXd& q, const Eigen::VectorXd& qd);

Eigen::VectorXd inverse_dynamics(const SimConfig& config, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                                 const Eigen::VectorXd& qdd);

double mechanical_energy(const SimConfig& config, const SimState& state);

// tau = clamp(kp (target - q) - kd qd, +-torque_limit).
Eigen::VectorXd pd_torque(const SimConfig& config, const Eigen::VectorXd& q, const Eigen::VectorXd& qd,
                          const Eigen::VectorXd& target);

// Advances one control period with torques held constant. Torques are clamped
// to the limits, integration is semi-implicit Euler, velocities are clamped to
// +-velocity_limit and joints stop at their limits with zero velocity.
// Throws SimulationFault if the state becomes non-finite.
SimState step(const SimConfig& config, const SimState& state, const Eigen::VectorXd& torques);

// One control period of PD tracking; the PD law is re-evaluated every substep.
// `applied` receives the torque of the last substep.
SimState step_pd(const SimConfig& config, const SimState& state, const Eigen::VectorXd& target,
                 Eigen::VectorXd* applied = nullptr);

enum class ViolationKind { kTorque, kVelocity };

struct Violation {
  int step = 0;
  int joint = 0;
  ViolationKind kind = ViolationKind::kTorque;
  double magnitude = 0.0;  // |value| / limit - 1
};

struct FeasibilityReport {
  bool feasible = true;
  std::vector<Violation> violations;
  // Fraction of (step, joint) entries with at least one violation.
  double violation_rate = 0.0;
  // Mean over (step, joint) of the summed relative excess over both limits.
  double violation_magnitude = 0.0;
  double peak_torque_ratio = 0.0;
  double peak_velocity_ratio = 0.0;
};

// Inverse-dynamics audit of a joint-space trajectory (rows are steps spaced
// config.dt apart). Accelerations are central differences of the velocity
// rows (one-sided at the ends).
FeasibilityReport feasibility_probe(const SimConfig& config, const Eigen::MatrixXd& q, const Eigen::MatrixXd& qd);

}  // namespace mimic

#endif  // MIMIC_TOY_SIM_HPP_
