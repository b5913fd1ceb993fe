#pragma once

// Minimal 6D spatial algebra (motion = [angular; linear], force = [moment;
// force]) for the articulated-body and Newton-Euler recursions.

#include <Eigen/Core>

#include "quadrl/common.hpp"
#include "quadrl/model.hpp"

namespace quadrl::spatial {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline Vec6 motion(const Vec3& angular, const Vec3& linear) {
  Vec6 m;
  m << angular, linear;
  return m;
}

/// Plücker transform from frame A to frame B: B's origin sits at `r` (A
/// coordinates) and `E` maps A coordinates to B coordinates.
struct Transform {
  Mat3 E = Mat3::Identity();
  Vec3 r = Vec3::Zero();

  Vec6 apply_motion(const Vec6& m) const {
    const Vec3 w = m.head<3>();
    Vec6 out;
    out.head<3>() = E * w;
    out.tail<3>() = E * (m.tail<3>() - r.cross(w));
    return out;
  }

  /// Maps a force expressed in B back to A (X^T f).
  Vec6 transpose_apply_force(const Vec6& f) const {
    Vec6 out;
    const Vec3 fa = E.transpose() * f.tail<3>();
    out.head<3>() = E.transpose() * f.head<3>() + r.cross(fa);
    out.tail<3>() = fa;
    return out;
  }

  Mat6 matrix() const {
    Mat6 X = Mat6::Zero();
    X.topLeftCorner<3, 3>() = E;
    X.bottomRightCorner<3, 3>() = E;
    X.bottomLeftCorner<3, 3>() = -E * skew(r);
    return X;
  }
};

inline Vec6 cross_motion(const Vec6& v, const Vec6& m) {
  const Vec3 w = v.head<3>();
  const Vec3 u = v.tail<3>();
  Vec6 out;
  out.head<3>() = w.cross(m.head<3>());
  out.tail<3>() = w.cross(m.tail<3>()) + u.cross(m.head<3>());
  return out;
}

inline Vec6 cross_force(const Vec6& v, const Vec6& f) {
  const Vec3 w = v.head<3>();
  const Vec3 u = v.tail<3>();
  Vec6 out;
  out.head<3>() = w.cross(f.head<3>()) + u.cross(f.tail<3>());
  out.tail<3>() = w.cross(f.tail<3>());
  return out;
}

inline Mat6 inertia_matrix(const RigidBodyInertia& b) {
  const Mat3 cx = skew(b.com);
  Mat6 I;
  I.topLeftCorner<3, 3>() = b.inertia_com + b.mass * cx * cx.transpose();
  I.topRightCorner<3, 3>() = b.mass * cx;
  I.bottomLeftCorner<3, 3>() = b.mass * cx.transpose();
  I.bottomRightCorner<3, 3>() = b.mass * Mat3::Identity();
  return I;
}

/// X^T I X: inertia expressed in B moved to A.
inline Mat6 inertia_to_parent(const Transform& X, const Mat6& I) {
  const Mat6 M = X.matrix();
  return M.transpose() * I * M;
}

/// Spatial force of a world-frame force `f_local` (already rotated into the
/// body frame) acting at body-frame point `p`.
inline Vec6 point_force(const Vec3& p, const Vec3& f_local) {
  Vec6 out;
  out.head<3>() = p.cross(f_local);
  out.tail<3>() = f_local;
  return out;
}

}  // namespace quadrl::spatial
