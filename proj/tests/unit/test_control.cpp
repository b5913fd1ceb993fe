#include <doctest.h>

#include <random>

#include "quadrl/control.hpp"
#include "quadrl/model.hpp"
#include "support/oracles.hpp"

using namespace quadrl;

TEST_CASE("cartesian impedance law") {
  const CartesianGains gains;
  CHECK(gains.kp == Vec3::Constant(700.0));
  CHECK(gains.kd == Vec3::Constant(12.0));

  const Vec3 p(0.01, -0.02, -0.25);
  CHECK(cartesian_pd_torques(p, p, Vec3::Zero(), Mat3::Identity(), gains).norm() == 0.0);

  const Vec3 tau = cartesian_pd_torques(Vec3(0.01, 0, 0), Vec3::Zero(), Vec3::Zero(), Mat3::Identity(), gains);
  CHECK(tau.x() == doctest::Approx(7.0).epsilon(1e-15));
  CHECK(tau.y() == 0.0);
  CHECK(tau.z() == 0.0);

  const Vec3 damp = cartesian_pd_torques(Vec3::Zero(), Vec3::Zero(), Vec3(0, 0, 1.0), Mat3::Identity(), gains);
  CHECK(damp.z() == doctest::Approx(-12.0));
}

TEST_CASE("impedance torques agree with a finite-difference jacobian transpose") {
  const RobotParams params = RobotParams::nominal();
  const CartesianGains gains;
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int i = 0; i < 200; ++i) {
    const LegJointAngles q = quadrl::testing::random_in_limits(rng, params);
    const Vec3 qd(u(rng) * 30, u(rng) * 30, u(rng) * 30);
    const Mat3 Jfd = quadrl::testing::fd_jacobian<3, 3>(
        [&](const Vec3& x) { return quadrl::testing::chain_foot_position(LegJointAngles(x), LegSide::Left, params); },
        q.vec());
    const FootState fs = leg_foot_state(q, qd, LegSide::Left, params);
    const Vec3 pd = fs.p + Vec3(u(rng), u(rng), u(rng));
    const Vec3 tau = cartesian_pd_torques(pd, fs.p, fs.v, leg_jacobian(q, LegSide::Left, params), gains);
    const Vec3 force = gains.kp.cwiseProduct(pd - fs.p) - gains.kd.cwiseProduct(Jfd * qd);
    const Vec3 ref = Jfd.transpose() * force;
    CHECK((tau - ref).norm() <= 1e-6 * ref.norm() + 1e-12);
  }
}

TEST_CASE("impedance law is linear and power-consistent") {
  const RobotParams params = RobotParams::nominal();
  const CartesianGains gains{Vec3(700, 500, 900), Vec3(12, 8, 20)};
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const LegJointAngles q = quadrl::testing::random_in_limits(rng, params);
    const Vec3 qd(u(rng) * 10, u(rng) * 10, u(rng) * 10);
    const Mat3 J = leg_jacobian(q, LegSide::Right, params);
    const Vec3 p = leg_forward_kinematics(q, LegSide::Right, params);
    const Vec3 delta(u(rng) * 0.05, u(rng) * 0.05, u(rng) * 0.05);

    const Vec3 t1 = cartesian_pd_torques(p + delta, p, Vec3::Zero(), J, gains);
    const Vec3 t2 = cartesian_pd_torques(p + 2.0 * delta, p, Vec3::Zero(), J, gains);
    CHECK((t2 - 2.0 * t1).norm() <= 1e-12 * t2.norm());

    const Vec3 v = J * qd;
    const Vec3 tau = cartesian_pd_torques(p + delta, p, v, J, gains);
    const Vec3 force = gains.kp.cwiseProduct(delta) - gains.kd.cwiseProduct(v);
    CHECK(std::abs(tau.dot(qd) - force.dot(v)) < 1e-10);
  }
}

TEST_CASE("joint PD baseline") {
  const JointGains g{50.0, 0.5};
  JointVector q = JointVector::Random();
  CHECK(joint_pd_torques(q, q, JointVector::Zero(), g).norm() == 0.0);

  JointVector target = q;
  target[4] += 0.1;
  CHECK(joint_pd_torques(target, q, JointVector::Zero(), g)[4] == doctest::Approx(5.0));

  JointVector qd = JointVector::Zero();
  qd[7] = 2.0;
  CHECK(joint_pd_torques(q, q, qd, g)[7] == doctest::Approx(-1.0));

  CHECK(g.within_study_range());
  CHECK_FALSE((JointGains{120.0, 0.5}).within_study_range());
  CHECK_THROWS_AS((JointGains{-1.0, 0.5}).validate(), ConfigError);
}
