#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>

#include "quadrl/common.hpp"

namespace quadrl {

/// Nominal link masses (kg). Each leg carries one hip, thigh, calf and foot.
struct LinkMasses {
  double base = 5.25;
  double hip = 0.6;
  double thigh = 0.9;
  double calf = 0.15;
  double foot = 0.0375;

  double total() const { return base + kNumLegs * (hip + thigh + calf + foot); }
};

/// Physical and actuator parameters of the quadruped. Angles in radians,
/// everything else SI. Degrees only appear in the key-value file format.
struct RobotParams {
  double total_mass = 12.0;
  Vec3 body_inertia{0.0168, 0.0565, 0.0647};
  Vec3 body_dims{0.361, 0.194, 0.114};
  double thigh_length = 0.2;
  double calf_length = 0.2;
  double hip_lateral_offset = 0.08;
  // Front-right hip abduction joint in the base frame; other legs mirror signs.
  double hip_x = 0.1805;
  double hip_y = 0.047;
  LinkMasses link_masses;
  // Thigh range is the robot's [-60, 240] deg expressed with thigh-forward
  // positive, hence negated and swapped.
  std::array<double, 3> joint_lower{deg_to_rad(-46.0), deg_to_rad(-240.0), deg_to_rad(-154.5)};
  std::array<double, 3> joint_upper{deg_to_rad(46.0), deg_to_rad(60.0), deg_to_rad(-52.5)};
  double max_torque = 33.5;
  double max_joint_speed = 21.0;
  double gear_ratio = 9.0;
  double foot_radius = 0.02;

  static RobotParams nominal() { return {}; }

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  /// Hip abduction joint origin for a leg, in the base frame.
  Vec3 hip_position(int leg) const;
};

RobotParams parse_robot_params(std::string_view text);
RobotParams load_robot_params(const std::filesystem::path& path);
std::string format_robot_params(const RobotParams& params);

struct LegJointAngles {
  double hip_abduction = 0.0;
  double thigh_pitch = 0.0;
  double knee_pitch = 0.0;

  LegJointAngles() = default;
  LegJointAngles(double hip, double thigh, double knee)
      : hip_abduction(hip), thigh_pitch(thigh), knee_pitch(knee) {}
  explicit LegJointAngles(const Vec3& q) : hip_abduction(q[0]), thigh_pitch(q[1]), knee_pitch(q[2]) {}

  Vec3 vec() const { return {hip_abduction, thigh_pitch, knee_pitch}; }
};

/// Foot position and velocity in the leg frame (origin at the hip abduction
/// joint, axes parallel to the base frame).
struct FootState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

// Joint conventions: hip abduction about +x, thigh pitch about -y, knee about
// +y. At q = 0 thigh and calf hang straight down (-z).
Vec3 leg_forward_kinematics(const LegJointAngles& q, LegSide side, const RobotParams& params);
Mat3 leg_jacobian(const LegJointAngles& q, LegSide side, const RobotParams& params);

/// Knee branch is the non-positive one (the only branch inside the knee
/// limits). Throws OutOfWorkspace when the target is unreachable.
LegJointAngles leg_inverse_kinematics(const Vec3& p_target, LegSide side, const RobotParams& params);

FootState leg_foot_state(const LegJointAngles& q, const Vec3& qd, LegSide side,
                         const RobotParams& params);

bool within_joint_limits(const LegJointAngles& q, const RobotParams& params);

/// Mass, center of mass and rotational inertia about the center of mass,
/// all in the link's own frame.
struct RigidBodyInertia {
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia_com = Mat3::Zero();

  /// Rotational inertia about the link frame origin.
  Mat3 inertia_about_origin() const;
  /// Combines two bodies expressed in the same frame.
  RigidBodyInertia combined(const RigidBodyInertia& other) const;
  static RigidBodyInertia point(double mass, const Vec3& at);
};

struct Payload {
  double mass = 0.0;
  Vec3 offset = Vec3::Zero();
};

/// Inertial description consumed by the dynamics: base plus per-leg
/// hip/thigh/calf links. The foot is a point mass folded into the calf.
struct RobotModel {
  RobotParams params;
  RigidBodyInertia base;
  std::array<std::array<RigidBodyInertia, 3>, kNumLegs> legs;
  Payload payload;

  static RobotModel from_params(const RobotParams& params);
  static RobotModel nominal() { return from_params(RobotParams::nominal()); }

  /// Rigidly attaches a point payload to the base.
  void attach_payload(const Payload& load);
  double total_mass() const;
};

/// Per-link inertia for a given mass under the fixed link geometry. Inertia
/// scales linearly with mass.
RigidBodyInertia hip_link_inertia(double mass, LegSide side, const RobotParams& params);
RigidBodyInertia thigh_link_inertia(double mass, const RobotParams& params);
RigidBodyInertia calf_link_inertia(double calf_mass, double foot_mass, const RobotParams& params);

}  // namespace quadrl
