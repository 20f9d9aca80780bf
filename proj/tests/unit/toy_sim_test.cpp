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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <Eigen/Eigenvalues>
#include <random>

#include "mimic/error.hpp"
#include "mimic/toy_sim.hpp"

namespace mimic {
namespace {

SimConfig pendulum(double length, double armature) {
  SimConfig c;
  c.armature = armature;
  c.links = 1;
  c.masses = {1.0};
  c.lengths = {length};
  c.torque_limit = {100.0};
  c.velocity_limit = {100.0};
  c.joint_min = {-10.0};
  c.joint_max = {10.0};
  return c;
}

SimConfig unlimited_chain() {
  SimConfig c;
  c.torque_limit = {1e6, 1e6, 1e6};
  c.velocity_limit = {1e6, 1e6, 1e6};
  c.joint_min = {-1e6, -1e6, -1e6};
  c.joint_max = {1e6, 1e6, 1e6};
  return c;
}

TEST(PdTorque, ZeroErrorZeroTorque) {
  SimConfig c;
  const Eigen::Vector3d q(0.1, -0.2, 0.3);
  EXPECT_EQ(pd_torque(c, q, Eigen::Vector3d::Zero(), q), Eigen::Vector3d::Zero());
}

TEST(PdTorque, PaperGainArithmetic) {
  SimConfig c;
  c.torque_limit = {10.0, 10.0, 10.0};
  const Eigen::VectorXd tau = pd_torque(c, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), Eigen::Vector3d(0.1, 0, 0));
  EXPECT_NEAR(tau(0), 3.0, 1e-12);
}

TEST(PdTorque, SaturatesExactly) {
  SimConfig c;
  const Eigen::VectorXd tau =
      pd_torque(c, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), Eigen::Vector3d(100.0, -100.0, 100.0));
  EXPECT_EQ(tau(0), c.torque_limit[0]);
  EXPECT_EQ(tau(1), -c.torque_limit[1]);
  EXPECT_EQ(tau(2), c.torque_limit[2]);
}

TEST(Step, ZeroGravityEquilibrium) {
  SimConfig c;
  c.gravity = 0.0;
  SimState s = SimState::rest(c);
  s.q = Eigen::Vector3d(0.3, -0.4, 0.2);
  const SimState next = step(c, s, Eigen::Vector3d::Zero());
  EXPECT_EQ(next.q, s.q);
  EXPECT_EQ(next.qd, s.qd);
  EXPECT_DOUBLE_EQ(next.time, c.dt);
}

double measured_frequency(const SimConfig& c) {
  SimState s = SimState::rest(c);
  s.q(0) = 0.05;
  // 10 periods between the first and the 11th downward zero crossing
  std::vector<double> crossings;
  double prev = s.q(0);
  for (int t = 0; t < 5000 && crossings.size() < 11; ++t) {
    s = step(c, s, Eigen::VectorXd::Zero(1));
    const double cur = s.q(0);
    if (prev > 0.0 && cur <= 0.0) crossings.push_back(s.time - c.dt * cur / (cur - prev));
    prev = cur;
  }
  if (crossings.size() < 11) return 0.0;
  return 10.0 / (crossings.back() - crossings.front());
}

TEST(Step, SmallAnglePendulumFrequency) {
  const double length = 0.5;
  const SimConfig bare = pendulum(length, 0.0);
  const double expected = std::sqrt(bare.gravity / length) / (2.0 * std::numbers::pi);
  EXPECT_NEAR(measured_frequency(bare) / expected, 1.0, 0.05);
  // rotor inertia adds to m l^2
  const SimConfig geared = pendulum(length, 0.25);
  const double geared_expected = std::sqrt(geared.gravity * length / (length * length + 0.25)) / (2.0 * std::numbers::pi);
  EXPECT_NEAR(measured_frequency(geared) / geared_expected, 1.0, 0.05);
}

TEST(Step, PassiveEnergyDriftBelowOnePercent) {
  const SimConfig c = unlimited_chain();
  SimState s = SimState::rest(c);
  const double floor = mechanical_energy(c, s);
  s.q = Eigen::Vector3d(0.4, -0.3, 0.25);
  // secular drift: mean energy over the first and the last 100 of 1000 steps
  std::vector<double> e;
  for (int t = 0; t < 1000; ++t) {
    s = step(c, s, Eigen::Vector3d::Zero());
    e.push_back(mechanical_energy(c, s) - floor);
  }
  double head = 0.0, tail = 0.0;
  for (int t = 0; t < 100; ++t) {
    head += e[t] / 100.0;
    tail += e[900 + t] / 100.0;
  }
  EXPECT_LT(std::abs(tail - head) / head, 0.01);
}

TEST(Step, InverseDynamicsRoundTrip) {
  const SimConfig c = unlimited_chain();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    SimState s = SimState::rest(c);
    Eigen::Vector3d qdd;
    for (int j = 0; j < 3; ++j) {
      s.q(j) = u(rng);
      s.qd(j) = u(rng);
      qdd(j) = 3.0 * u(rng);
    }
    const Eigen::VectorXd tau = inverse_dynamics(c, s.q, s.qd, qdd);
    const SimState next = step(c, s, tau);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(next.qd(j), s.qd(j) + c.dt * qdd(j), 1e-10);
  }
}

TEST(Step, MassMatrixSymmetricPositiveDefinite) {
  SimConfig c;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d q(u(rng), u(rng), u(rng));
    const ChainDynamics d = chain_dynamics(c, q, Eigen::Vector3d::Zero());
    EXPECT_LT((d.mass - d.mass.transpose()).norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.mass);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Step, DeterministicBitIdentical) {
  SimConfig c;
  auto run = [&] {
    SimState s = SimState::rest(c);
    std::vector<double> trace;
    for (int t = 0; t < 300; ++t) {
      s = step_pd(c, s, Eigen::Vector3d(std::sin(0.05 * t), 0.5 * std::cos(0.07 * t), 0.3));
      trace.insert(trace.end(), s.q.data(), s.q.data() + 3);
      trace.insert(trace.end(), s.qd.data(), s.qd.data() + 3);
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(Step, AppliedTorqueAndVelocityStayWithinLimits) {
  SimConfig c;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.6, 2.6);
  SimState s = SimState::rest(c);
  for (int t = 0; t < 2000; ++t) {
    Eigen::VectorXd applied;
    const Eigen::Vector3d target(u(rng), u(rng), u(rng));
    s = step_pd(c, s, target, &applied);
    for (int j = 0; j < 3; ++j) {
      ASSERT_LE(std::abs(applied(j)), c.torque_limit[j]);
      ASSERT_LE(std::abs(s.qd(j)), c.velocity_limit[j]);
      ASSERT_GE(s.q(j), c.joint_min[j]);
      ASSERT_LE(s.q(j), c.joint_max[j]);
    }
  }
}

TEST(Step, JointLimitZeroesVelocity) {
  SimConfig c;
  c.gravity = 0.0;
  SimState s = SimState::rest(c);
  s.q(2) = c.joint_max[2] - 1e-3;
  s.qd(2) = 5.0;
  const SimState next = step(c, s, Eigen::Vector3d::Zero());
  EXPECT_EQ(next.q(2), c.joint_max[2]);
  EXPECT_EQ(next.qd(2), 0.0);
}

TEST(Step, PdTrackingSettlesOnStaticTarget) {
  SimConfig c;
  SimState s = SimState::rest(c);
  const Eigen::Vector3d target(0.3, -0.2, 0.1);
  for (int t = 0; t < 3000; ++t) s = step_pd(c, s, target);
  EXPECT_LT(s.qd.norm(), 1e-6);
  // steady-state error balances gravity through kp
  const Eigen::VectorXd g = chain_dynamics(c, s.q, Eigen::Vector3d::Zero()).gravity;
  EXPECT_LT((c.kp * (target - s.q) - g).norm(), 1e-6);
}

TEST(Step, NonFiniteStateFaults) {
  SimConfig c;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(step(c, SimState::rest(c), Eigen::Vector3d(nan, 0, 0)), SimulationFault);
}

TEST(Step, SubstepsConverge) {
  SimConfig coarse = unlimited_chain();
  SimConfig fine = coarse;
  fine.substeps = 8;
  SimState a = SimState::rest(coarse), b = a;
  a.q = b.q = Eigen::Vector3d(0.2, 0.1, -0.1);
  for (int t = 0; t < 10; ++t) {
    a = step(coarse, a, Eigen::Vector3d::Zero());
    b = step(fine, b, Eigen::Vector3d::Zero());
  }
  EXPECT_LT((a.q - b.q).norm(), 0.05);
  EXPECT_NEAR(b.time, 10 * fine.dt, 1e-12);
}

TEST(Feasibility, StaticPoseWithinGravityBudget) {
  SimConfig c;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(50, 3), qd = Eigen::MatrixXd::Zero(50, 3);
  q.col(0).setConstant(0.3);
  const FeasibilityReport r = feasibility_probe(c, q, qd);
  EXPECT_TRUE(r.feasible);
  EXPECT_EQ(r.violation_rate, 0.0);
  EXPECT_EQ(r.violation_magnitude, 0.0);
  EXPECT_GT(r.peak_torque_ratio, 0.0);
}

TEST(Feasibility, DoubleVelocityLimitFlagged) {
  SimConfig c;
  const double dt = c.dt, w = 2.0 * std::numbers::pi * 1.0;
  const double amp = 2.0 * c.velocity_limit[2] / w;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(100, 3), qd = Eigen::MatrixXd::Zero(100, 3);
  for (int t = 0; t < 100; ++t) {
    q(t, 2) = amp * std::sin(w * t * dt);
    qd(t, 2) = amp * w * std::cos(w * t * dt);
  }
  const FeasibilityReport r = feasibility_probe(c, q, qd);
  EXPECT_FALSE(r.feasible);
  bool velocity = false;
  for (const Violation& v : r.violations) velocity = velocity || (v.kind == ViolationKind::kVelocity && v.joint == 2);
  EXPECT_TRUE(velocity);
  EXPECT_NEAR(r.peak_velocity_ratio, 2.0, 1e-3);
  EXPECT_GT(r.violation_rate, 0.0);
  EXPECT_LE(r.violation_rate, 1.0);
}

TEST(Feasibility, HorizontalHoldExceedsShoulderTorque) {
  SimConfig c;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(10, 3), qd = Eigen::MatrixXd::Zero(10, 3);
  q.col(0).setConstant(std::numbers::pi / 2);
  c.torque_limit[0] = 30.0;
  // gravity torque about the shoulder: g * sum m_i * x_i
  const double needed = c.gravity * (2.0 * 0.5 + 1.5 * 0.95 + 1.0 * 1.35);
  const FeasibilityReport r = feasibility_probe(c, q, qd);
  EXPECT_FALSE(r.feasible);
  EXPECT_NEAR(r.peak_torque_ratio, needed / 30.0, 1e-9);
}

TEST(SimConfigIo, RoundTripAndValidation) {
  SimConfig c;
  c.kp = 12.5;
  c.substeps = 3;
  KvDocument doc;
  c.write(doc);
  const SimConfig back = SimConfig::read(KvDocument::parse(doc.to_string()));
  EXPECT_EQ(back.kp, 12.5);
  EXPECT_EQ(back.substeps, 3);
  EXPECT_EQ(back.masses, c.masses);
  SimConfig bad;
  bad.torque_limit = {1.0, 0.0, 1.0};
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = SimConfig{};
  bad.masses = {1.0};
  EXPECT_THROW(bad.validate(), ValidationError);
}

}  // namespace
}  // namespace mimic
