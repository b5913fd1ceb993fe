#pragma once

#include "quadrl/common.hpp"

namespace quadrl {

/// Diagonal Cartesian stiffness and damping for the foot impedance law.
struct CartesianGains {
  Vec3 kp = Vec3::Constant(700.0);  // N/m
  Vec3 kd = Vec3::Constant(12.0);   // N s/m

  void validate() const {
    if ((kp.array() < 0.0).any() || (kd.array() < 0.0).any()) {
      throw ConfigError("cartesian gains must be non-negative");
    }
  }
};

struct JointGains {
  double kp = 50.0;  // N m / rad
  double kd = 0.5;   // N m s / rad

  void validate() const {
    if (kp < 0.0 || kd < 0.0) throw ConfigError("joint gains must be non-negative");
  }
  bool within_study_range() const { return kp >= 20.0 && kp <= 100.0 && kd >= 0.1 && kd <= 1.0; }
};

// tau = J^T [Kp (p_d - p) - Kd v]. The desired foot velocity is zero; no
// clamping happens here.
inline Vec3 cartesian_pd_torques(const Vec3& p_desired, const Vec3& p, const Vec3& v, const Mat3& J,
                                 const CartesianGains& gains) {
  const Vec3 force = gains.kp.cwiseProduct(p_desired - p) - gains.kd.cwiseProduct(v);
  return J.transpose() * force;
}

inline JointVector joint_pd_torques(const JointVector& q_desired, const JointVector& q, const JointVector& qd,
                                    const JointGains& gains) {
  return gains.kp * (q_desired - q) - gains.kd * qd;
}

}  // namespace quadrl
