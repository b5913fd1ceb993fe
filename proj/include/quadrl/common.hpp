#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace quadrl {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using JointVector = Eigen::Matrix<double, 12, 1>;

inline constexpr double kGravity = 9.81;
inline constexpr int kNumLegs = 4;
inline constexpr int kJointsPerLeg = 3;
inline constexpr int kNumJoints = kNumLegs * kJointsPerLeg;
inline constexpr double kPi = 3.14159265358979323846;

// Leg order used everywhere: front-right, front-left, rear-right, rear-left.
enum class LegId : int { FR = 0, FL = 1, RR = 2, RL = 3 };
enum class LegSide { Right, Left };

constexpr LegSide leg_side(int leg) { return (leg % 2 == 0) ? LegSide::Right : LegSide::Left; }
constexpr double side_sign(LegSide side) { return side == LegSide::Right ? -1.0 : 1.0; }
constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// Error hierarchy. Configuration and workspace errors are recoverable by the
// caller; SimulationDiverged signals a broken integration.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class OutOfWorkspace : public Error {
 public:
  using Error::Error;
};

class SimulationDiverged : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace quadrl
