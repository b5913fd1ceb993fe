#include "quadrl/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "spatial.hpp"

namespace quadrl {

using spatial::Mat6;
using spatial::Transform;
using spatial::Vec6;

bool SimState::all_finite() const {
  return base_position.allFinite() && base_orientation.coeffs().allFinite() && joint_angles.allFinite() &&
         base_linear_velocity.allFinite() && base_angular_velocity.allFinite() &&
         joint_velocities.allFinite() && std::isfinite(time);
}

// ---------------------------------------------------------------------------
// Terrain

std::optional<TerrainContact> Terrain::query(const Vec3& c, double radius) const {
  std::optional<TerrainContact> best;
  auto consider = [&best](double depth, const Vec3& normal) {
    if (depth > 0.0 && (!best || depth > best->depth)) best = TerrainContact{depth, normal};
  };

  consider(radius - c.z(), Vec3::UnitZ());
  if (walls) {
    consider(radius - (wall_y - c.y()), -Vec3::UnitY());
    consider(radius - (c.y() + wall_y), Vec3::UnitY());
  }
  for (const TerrainBox& box : boxes) {
    const double cy = std::cos(box.yaw);
    const double sy = std::sin(box.yaw);
    const Vec3 d = c - box.center;
    // Sphere centre in box coordinates.
    const Vec3 local(cy * d.x() + sy * d.y(), -sy * d.x() + cy * d.y(), d.z());
    const Vec3 he = box.half_extents;
    if ((local.array().abs() > he.array() + radius).any()) continue;
    const Vec3 closest = local.cwiseMax(-he).cwiseMin(he);
    Vec3 n_local;
    double depth = 0.0;
    const Vec3 diff = local - closest;
    const double dist = diff.norm();
    if (dist > 1e-12) {
      depth = radius - dist;
      n_local = diff / dist;
    } else {
      // Centre inside the box: push out through the nearest face.
      const Vec3 gap = he - local.cwiseAbs();
      int axis = 0;
      gap.minCoeff(&axis);
      n_local = Vec3::Zero();
      n_local[axis] = local[axis] >= 0.0 ? 1.0 : -1.0;
      depth = radius + gap[axis];
    }
    const Vec3 n(cy * n_local.x() - sy * n_local.y(), sy * n_local.x() + cy * n_local.y(), n_local.z());
    consider(depth, n);
  }
  return best;
}

double Terrain::surface_height(double x, double y) const {
  double h = 0.0;
  for (const TerrainBox& box : boxes) {
    const double cy = std::cos(box.yaw);
    const double sy = std::sin(box.yaw);
    const double dx = x - box.center.x();
    const double dy = y - box.center.y();
    const double lx = cy * dx + sy * dy;
    const double ly = -sy * dx + cy * dy;
    if (std::abs(lx) <= box.half_extents.x() && std::abs(ly) <= box.half_extents.y()) {
      h = std::max(h, box.center.z() + box.half_extents.z());
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Kinematic tree: body 0 is the base, body 1 + 3 * leg + k is link k of a leg.

namespace {

constexpr int kNumBodies = 1 + kNumJoints;

constexpr int parent_of(int body) { return ((body - 1) % 3 == 0) ? 0 : body - 1; }

const Vec3& joint_axis(int k) {
  static const Vec3 axes[3] = {Vec3::UnitX(), -Vec3::UnitY(), Vec3::UnitY()};
  return axes[k];
}

Vec3 tree_offset(int leg, int k, const RobotParams& params) {
  switch (k) {
    case 0: return params.hip_position(leg);
    case 1: return {0.0, side_sign(leg_side(leg)) * params.hip_lateral_offset, 0.0};
    default: return {0.0, 0.0, -params.thigh_length};
  }
}

struct TreeState {
  std::array<Transform, kNumBodies> X;  // parent -> body
  std::array<Mat3, kNumBodies> R;       // body -> world rotation
  std::array<Vec3, kNumBodies> pos;     // body origin, world
  std::array<Vec6, kNumBodies> v;       // body velocity, body coordinates
  std::array<Vec6, kNumBodies> c;       // velocity-product acceleration
  std::array<Vec6, kNumBodies> S;
  std::array<Mat6, kNumBodies> I;
};

void compute_tree(const SimState& s, const RobotModel& model, TreeState& t) {
  const Mat3 Rb = s.base_orientation.normalized().toRotationMatrix();
  t.R[0] = Rb;
  t.pos[0] = s.base_position;
  t.X[0] = Transform{Rb.transpose(), s.base_position};
  t.v[0] = spatial::motion(Rb.transpose() * s.base_angular_velocity, Rb.transpose() * s.base_linear_velocity);
  t.c[0].setZero();
  t.S[0].setZero();
  t.I[0] = spatial::inertia_matrix(model.base);

  for (int leg = 0; leg < kNumLegs; ++leg) {
    for (int k = 0; k < 3; ++k) {
      const int i = 1 + 3 * leg + k;
      const int j = 3 * leg + k;
      const int p = parent_of(i);
      const Vec3& axis = joint_axis(k);
      const double q = s.joint_angles[j];
      const double qd = s.joint_velocities[j];
      const Mat3 Ej = Eigen::AngleAxisd(q, axis).toRotationMatrix().transpose();
      const Vec3 offset = tree_offset(leg, k, model.params);
      t.X[i] = Transform{Ej, offset};
      t.R[i] = t.R[p] * Ej.transpose();
      t.pos[i] = t.pos[p] + t.R[p] * offset;
      t.S[i] = spatial::motion(axis, Vec3::Zero());
      const Vec6 vj = t.S[i] * qd;
      t.v[i] = t.X[i].apply_motion(t.v[p]) + vj;
      t.c[i] = spatial::cross_motion(t.v[i], vj);
      t.I[i] = spatial::inertia_matrix(model.legs[leg][k]);
    }
  }
}

// Spatial external force on each body: gravity plus foot forces on calves.
void external_forces(const TreeState& t, const FootForces& foot_forces, const RobotModel& model, double gravity,
                     std::array<Vec6, kNumBodies>& f_ext) {
  const Vec3 g_world(0.0, 0.0, -gravity);
  const Vec3 foot_local(0.0, 0.0, -model.params.calf_length);
  for (int i = 0; i < kNumBodies; ++i) {
    f_ext[i] = t.I[i] * spatial::motion(Vec3::Zero(), t.R[i].transpose() * g_world);
  }
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const int calf = 1 + 3 * leg + 2;
    f_ext[calf] += spatial::point_force(foot_local, t.R[calf].transpose() * foot_forces[leg]);
  }
}

void check_finite_inputs(const SimState& s, const JointVector& tau, const FootForces& ff) {
  bool ok = s.all_finite() && tau.allFinite();
  for (const Vec3& f : ff) ok = ok && f.allFinite();
  if (!ok) throw SimulationDiverged("forward_dynamics: non-finite input");
}

}  // namespace

std::array<FootKinematics, kNumLegs> foot_kinematics(const SimState& s, const RobotModel& model) {
  std::array<FootKinematics, kNumLegs> out;
  const Mat3 R = s.base_orientation.normalized().toRotationMatrix();
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const LegSide side = leg_side(leg);
    const LegJointAngles q = s.leg_angles(leg);
    const Vec3 rel = model.params.hip_position(leg) + leg_forward_kinematics(q, side, model.params);
    const Vec3 rel_w = R * rel;
    out[leg].position = s.base_position + rel_w;
    out[leg].velocity = s.base_linear_velocity + s.base_angular_velocity.cross(rel_w) +
                        R * (leg_jacobian(q, side, model.params) * s.leg_velocities(leg));
  }
  return out;
}

namespace {

/// Articulated-body algorithm split into a configuration-dependent inertia
/// recursion (done once) and force-dependent bias/acceleration passes, so
/// that the response to extra foot forces can be evaluated cheaply.
class ArticulatedSolver {
 public:
  ArticulatedSolver(const SimState& state, const RobotModel& model, const DynamicsOptions& options)
      : model_(model), options_(options) {
    compute_tree(state, model, t_);
    for (int i = 0; i < kNumBodies; ++i) IA_[i] = t_.I[i];
    for (int i = kNumBodies - 1; i >= 1; --i) {
      const int j = i - 1;
      if (options.locked_joints.test(j)) {
        Ia_[i] = IA_[i];
      } else {
        U_[i] = IA_[i] * t_.S[i];
        D_[i] = t_.S[i].dot(U_[i]);
        Ia_[i] = IA_[i] - U_[i] * U_[i].transpose() / D_[i];
      }
      IA_[parent_of(i)] += spatial::inertia_to_parent(t_.X[i], Ia_[i]);
    }
    if (!options.fixed_base) base_ldlt_.compute(IA_[0]);
    foot_local_ = Vec3(0.0, 0.0, -model.params.calf_length);
  }

  GeneralizedAcceleration solve(const JointVector& tau, const FootForces& foot_forces) {
    std::array<Vec6, kNumBodies> f_ext;
    external_forces(t_, foot_forces, model_, options_.gravity, f_ext);
    std::array<Vec6, kNumBodies> pA;
    for (int i = 0; i < kNumBodies; ++i) {
      pA[i] = spatial::cross_force(t_.v[i], t_.I[i] * t_.v[i]) - f_ext[i];
    }
    std::array<double, kNumBodies> u{};
    for (int i = kNumBodies - 1; i >= 1; --i) {
      const int j = i - 1;
      Vec6 pa;
      if (options_.locked_joints.test(j)) {
        pa = pA[i] + IA_[i] * t_.c[i];
      } else {
        u[i] = tau[j] - t_.S[i].dot(pA[i]);
        pa = pA[i] + Ia_[i] * t_.c[i] + U_[i] * (u[i] / D_[i]);
      }
      pA[parent_of(i)] += t_.X[i].transpose_apply_force(pa);
    }
    a_[0] = options_.fixed_base ? Vec6::Zero() : Vec6(-base_ldlt_.solve(pA[0]));

    GeneralizedAcceleration out;
    for (int i = 1; i < kNumBodies; ++i) {
      const int j = i - 1;
      const Vec6 ap = t_.X[i].apply_motion(a_[parent_of(i)]) + t_.c[i];
      double qdd = 0.0;
      if (!options_.locked_joints.test(j)) qdd = (u[i] - U_[i].dot(ap)) / D_[i];
      a_[i] = ap + t_.S[i] * qdd;
      out[6 + j] = qdd;
    }
    const Mat3& R = t_.R[0];
    const Vec3 w_b = t_.v[0].head<3>();
    const Vec3 v_b = t_.v[0].tail<3>();
    out.segment<3>(0) = R * (a_[0].tail<3>() + w_b.cross(v_b));
    out.segment<3>(3) = R * a_[0].head<3>();
    if (!out.allFinite()) throw SimulationDiverged("forward_dynamics: non-finite acceleration");
    return out;
  }

  /// World-frame foot velocities from the tree pass.
  std::array<Vec3, kNumLegs> foot_velocities() const {
    std::array<Vec3, kNumLegs> out;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const int b = calf_body(leg);
      const Vec3 w = t_.v[b].head<3>();
      out[leg] = t_.R[b] * (t_.v[b].tail<3>() + w.cross(foot_local_));
    }
    return out;
  }

  /// World-frame classical foot accelerations from the last solve().
  std::array<Vec3, kNumLegs> foot_accelerations() const {
    std::array<Vec3, kNumLegs> out;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const int b = calf_body(leg);
      const Vec3 w = t_.v[b].head<3>();
      const Vec3 vp = t_.v[b].tail<3>() + w.cross(foot_local_);
      out[leg] = t_.R[b] * (a_[b].tail<3>() + a_[b].head<3>().cross(foot_local_) + w.cross(vp));
    }
    return out;
  }

  /// W(3i+r, 3j+c): world foot-i acceleration along r per unit world force
  /// along c at foot j.
  Eigen::Matrix<double, 12, 12> foot_delassus() const {
    Eigen::Matrix<double, 12, 12> W;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      for (int axis = 0; axis < 3; ++axis) {
        W.col(3 * leg + axis) = test_force_response(leg, Vec3::Unit(axis));
      }
    }
    return W;
  }

 private:
  static constexpr int calf_body(int leg) { return 1 + 3 * leg + 2; }

  // Acceleration change of all feet for a unit world force at one foot.
  Eigen::Matrix<double, 12, 1> test_force_response(int leg, const Vec3& force_world) const {
    std::array<double, kNumBodies> du{};
    const int calf = calf_body(leg);
    Vec6 dp = -spatial::point_force(foot_local_, t_.R[calf].transpose() * force_world);
    for (int i = calf; i >= 1 && i > 3 * leg; --i) {
      const int j = i - 1;
      Vec6 pa = dp;
      if (!options_.locked_joints.test(j)) {
        du[i] = -t_.S[i].dot(dp);
        pa += U_[i] * (du[i] / D_[i]);
      }
      dp = t_.X[i].transpose_apply_force(pa);
    }
    std::array<Vec6, kNumBodies> da;
    da[0] = options_.fixed_base ? Vec6::Zero() : Vec6(-base_ldlt_.solve(dp));
    Eigen::Matrix<double, 12, 1> out;
    for (int i = 1; i < kNumBodies; ++i) {
      const int j = i - 1;
      const Vec6 ap = t_.X[i].apply_motion(da[parent_of(i)]);
      double qdd = 0.0;
      if (!options_.locked_joints.test(j)) qdd = (du[i] - U_[i].dot(ap)) / D_[i];
      da[i] = ap + t_.S[i] * qdd;
    }
    for (int l = 0; l < kNumLegs; ++l) {
      const int b = calf_body(l);
      out.segment<3>(3 * l) = t_.R[b] * (da[b].tail<3>() + da[b].head<3>().cross(foot_local_));
    }
    return out;
  }

  const RobotModel& model_;
  const DynamicsOptions& options_;
  TreeState t_;
  std::array<Mat6, kNumBodies> IA_;
  std::array<Mat6, kNumBodies> Ia_;
  std::array<Vec6, kNumBodies> U_;
  std::array<double, kNumBodies> D_{};
  std::array<Vec6, kNumBodies> a_;
  Eigen::LDLT<Mat6> base_ldlt_;
  Vec3 foot_local_;
};

}  // namespace

GeneralizedAcceleration forward_dynamics(const SimState& state, const JointVector& tau,
                                         const FootForces& foot_forces, const RobotModel& model,
                                         const DynamicsOptions& options) {
  check_finite_inputs(state, tau, foot_forces);
  ArticulatedSolver solver(state, model, options);
  return solver.solve(tau, foot_forces);
}

ContactDynamics solve_contact_dynamics(const SimState& state, const JointVector& tau, const Terrain& terrain,
                                       const ContactParams& params, const RobotModel& model,
                                       const DynamicsOptions& options, double dt) {
  FootForces zero{};
  for (Vec3& f : zero) f.setZero();
  check_finite_inputs(state, tau, zero);
  ArticulatedSolver solver(state, model, options);

  ContactDynamics out;
  std::array<std::optional<TerrainContact>, kNumLegs> hits;
  const auto feet = foot_kinematics(state, model);
  bool any = false;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    out.contacts[leg].foot = leg;
    hits[leg] = terrain.query(feet[leg].position, model.params.foot_radius);
    any = any || hits[leg].has_value();
  }
  if (!any) {
    out.acceleration = solver.solve(tau, zero);
    return out;
  }

  solver.solve(tau, zero);
  const auto vel = solver.foot_velocities();
  const auto acc_free = solver.foot_accelerations();
  const Eigen::Matrix<double, 12, 12> W = solver.foot_delassus();
  const double mu = terrain.friction;

  // Local contact bases: columns n, t1, t2.
  std::array<Mat3, kNumLegs> basis;
  std::array<Vec3, kNumLegs> f_local;
  FootForces f_world = zero;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    f_local[leg].setZero();
    if (!hits[leg]) continue;
    const Vec3 n = hits[leg]->normal;
    const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 t1 = n.cross(helper).normalized();
    basis[leg].col(0) = n;
    basis[leg].col(1) = t1;
    basis[leg].col(2) = n.cross(t1);
  }

  constexpr int kSweeps = 8;
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    for (int leg = 0; leg < kNumLegs; ++leg) {
      if (!hits[leg]) continue;
      const Mat3& B = basis[leg];
      Vec3 r = vel[leg] + dt * acc_free[leg];
      for (int other = 0; other < kNumLegs; ++other) {
        if (other != leg) r += dt * W.block<3, 3>(3 * leg, 3 * other) * f_world[other];
      }
      const Mat3 A = dt * B.transpose() * W.block<3, 3>(3 * leg, 3 * leg) * B;
      const Vec3 rl = B.transpose() * r;
      Vec3 f = f_local[leg];
      for (int inner = 0; inner < 3; ++inner) {
        // Normal: f_n = max(0, k d - d_n v_n+) with v_n+ linear in f_n.
        const double vn_rest = rl[0] + A(0, 1) * f[1] + A(0, 2) * f[2];
        f[0] = std::max(0.0, (params.stiffness * hits[leg]->depth - params.damping * vn_rest) /
                                 (1.0 + params.damping * A(0, 0)));
        if (f[0] <= 0.0) {
          f[1] = f[2] = 0.0;
          break;
        }
        // Tangential: regularized Coulomb, then projection onto the cone.
        const double c = mu * f[0] / params.slip_velocity;
        const Eigen::Vector2d rt = rl.tail<2>() + A.block<2, 1>(1, 0) * f[0];
        const Eigen::Matrix2d M = Eigen::Matrix2d::Identity() + c * A.block<2, 2>(1, 1);
        Eigen::Vector2d ft = -c * M.partialPivLu().solve(rt);
        const double cap = mu * f[0];
        if (ft.norm() > cap) ft *= cap / ft.norm();
        f[1] = ft[0];
        f[2] = ft[1];
      }
      f_local[leg] = f;
      f_world[leg] = B * f;
    }
  }

  for (int leg = 0; leg < kNumLegs; ++leg) {
    if (!hits[leg]) continue;
    ContactPoint& cp = out.contacts[leg];
    cp.penetration = hits[leg]->depth;
    cp.normal = hits[leg]->normal;
    cp.normal_force = f_local[leg][0] * cp.normal;
    cp.tangential_force = f_world[leg] - cp.normal_force;
    cp.in_contact = f_local[leg][0] > params.contact_threshold;
  }
  out.acceleration = solver.solve(tau, f_world);
  return out;
}

Eigen::Matrix<double, 18, 1> inverse_dynamics(const SimState& state, const GeneralizedAcceleration& acc,
                                              const FootForces& foot_forces, const RobotModel& model,
                                              double gravity) {
  TreeState t;
  compute_tree(state, model, t);
  std::array<Vec6, kNumBodies> f_ext;
  external_forces(t, foot_forces, model, gravity, f_ext);

  const Mat3& R = t.R[0];
  const Vec3 w_b = t.v[0].head<3>();
  const Vec3 v_b = t.v[0].tail<3>();
  std::array<Vec6, kNumBodies> a;
  std::array<Vec6, kNumBodies> f;
  a[0] = spatial::motion(R.transpose() * acc.segment<3>(3), R.transpose() * acc.segment<3>(0) - w_b.cross(v_b));
  f[0] = t.I[0] * a[0] + spatial::cross_force(t.v[0], t.I[0] * t.v[0]) - f_ext[0];
  for (int i = 1; i < kNumBodies; ++i) {
    a[i] = t.X[i].apply_motion(a[parent_of(i)]) + t.S[i] * acc[5 + i] + t.c[i];
    f[i] = t.I[i] * a[i] + spatial::cross_force(t.v[i], t.I[i] * t.v[i]) - f_ext[i];
  }
  Eigen::Matrix<double, 18, 1> out;
  for (int i = kNumBodies - 1; i >= 1; --i) {
    out[5 + i] = t.S[i].dot(f[i]);
    f[parent_of(i)] += t.X[i].transpose_apply_force(f[i]);
  }
  out.segment<3>(0) = R * f[0].tail<3>();
  out.segment<3>(3) = R * f[0].head<3>();
  return out;
}

ContactSet contact_forces(const SimState& state, const Terrain& terrain, const ContactParams& params,
                          const RobotModel& model) {
  ContactSet out;
  const auto feet = foot_kinematics(state, model);
  const double mu = terrain.friction;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    ContactPoint& cp = out[leg];
    cp.foot = leg;
    const auto hit = terrain.query(feet[leg].position, model.params.foot_radius);
    if (!hit) continue;
    cp.penetration = hit->depth;
    cp.normal = hit->normal;
    const Vec3& v = feet[leg].velocity;
    const double vn = v.dot(hit->normal);
    const double fn = std::max(0.0, params.stiffness * hit->depth - params.damping * vn);
    cp.normal_force = fn * hit->normal;
    const Vec3 vt = v - vn * hit->normal;
    const double speed = vt.norm();
    if (fn > 0.0 && speed > 0.0) {
      cp.tangential_force = -(mu * fn / std::max(speed, params.slip_velocity)) * vt;
    }
    cp.in_contact = fn > params.contact_threshold;
  }
  return out;
}

double actuator_model(double cmd, double qd, const RobotParams& params) {
  if (std::abs(qd) >= params.max_joint_speed && cmd * qd > 0.0) return 0.0;
  return std::clamp(cmd, -params.max_torque, params.max_torque);
}

JointVector actuator_model(const JointVector& cmd, const JointVector& qd, const RobotParams& params) {
  JointVector out;
  for (int j = 0; j < kNumJoints; ++j) out[j] = actuator_model(cmd[j], qd[j], params);
  return out;
}

JointVector joint_limit_torques(const SimState& s, const RobotParams& params, const DynamicsOptions& options) {
  JointVector out = JointVector::Zero();
  if (!options.joint_limits) return out;
  for (int j = 0; j < kNumJoints; ++j) {
    const int k = j % 3;
    const double q = s.joint_angles[j];
    const double qd = s.joint_velocities[j];
    if (q < params.joint_lower[k]) {
      out[j] = std::max(0.0, options.limit_stiffness * (params.joint_lower[k] - q) - options.limit_damping * qd);
    } else if (q > params.joint_upper[k]) {
      out[j] = std::min(0.0, options.limit_stiffness * (params.joint_upper[k] - q) - options.limit_damping * qd);
    }
  }
  return out;
}

SimState integrate_step(const SimState& s, const GeneralizedAcceleration& acc, double dt) {
  if (!(dt > 0.0)) throw Error("integrate_step: dt must be positive");
  SimState n = s;
  n.base_linear_velocity += dt * acc.segment<3>(0);
  n.base_angular_velocity += dt * acc.segment<3>(3);
  n.joint_velocities += dt * acc.segment<12>(6);

  n.base_position += dt * n.base_linear_velocity;
  const Vec3 rot = dt * n.base_angular_velocity;
  const double angle = rot.norm();
  if (angle > 0.0) {
    n.base_orientation = Quat(Eigen::AngleAxisd(angle, rot / angle)) * n.base_orientation;
  }
  n.base_orientation.normalize();
  n.joint_angles += dt * n.joint_velocities;
  n.time += dt;
  if (!n.all_finite()) throw SimulationDiverged("integrate_step: state became non-finite");
  return n;
}

double kinetic_energy(const SimState& s, const RobotModel& model) {
  TreeState t;
  compute_tree(s, model, t);
  double e = 0.0;
  for (int i = 0; i < kNumBodies; ++i) e += 0.5 * t.v[i].dot(t.I[i] * t.v[i]);
  return e;
}

namespace {
const RigidBodyInertia& body_inertia(const RobotModel& model, int i) {
  return i == 0 ? model.base : model.legs[(i - 1) / 3][(i - 1) % 3];
}
}  // namespace

Vec3 center_of_mass(const SimState& s, const RobotModel& model) {
  TreeState t;
  compute_tree(s, model, t);
  Vec3 acc = Vec3::Zero();
  double m = 0.0;
  for (int i = 0; i < kNumBodies; ++i) {
    const RigidBodyInertia& b = body_inertia(model, i);
    acc += b.mass * (t.pos[i] + t.R[i] * b.com);
    m += b.mass;
  }
  return acc / m;
}

double potential_energy(const SimState& s, const RobotModel& model, double gravity) {
  return model.total_mass() * gravity * center_of_mass(s, model).z();
}

Vec3 linear_momentum(const SimState& s, const RobotModel& model) {
  TreeState t;
  compute_tree(s, model, t);
  Vec3 p = Vec3::Zero();
  for (int i = 0; i < kNumBodies; ++i) {
    const Vec6 h = t.I[i] * t.v[i];
    p += t.R[i] * h.tail<3>();
  }
  return p;
}

std::vector<Vec3> collision_probe_points(const SimState& s, const RobotModel& model) {
  std::vector<Vec3> pts;
  pts.reserve(kNumLegs + 8);
  const Mat3 R = s.base_orientation.normalized().toRotationMatrix();
  const RobotParams& p = model.params;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const LegJointAngles q = s.leg_angles(leg);
    const Mat3 Rx = Eigen::AngleAxisd(q.hip_abduction, Vec3::UnitX()).toRotationMatrix();
    const Vec3 knee = Vec3(p.thigh_length * std::sin(q.thigh_pitch),
                           side_sign(leg_side(leg)) * p.hip_lateral_offset,
                           -p.thigh_length * std::cos(q.thigh_pitch));
    pts.push_back(s.base_position + R * (p.hip_position(leg) + Rx * knee));
  }
  const Vec3 h = 0.5 * p.body_dims;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 local((corner & 1) ? h.x() : -h.x(), (corner & 2) ? h.y() : -h.y(), (corner & 4) ? h.z() : -h.z());
    pts.push_back(s.base_position + R * local);
  }
  return pts;
}

// ---------------------------------------------------------------------------

Simulator::Simulator(RobotModel model, Terrain terrain, ContactParams contact, DynamicsOptions options, double dt)
    : model_(std::move(model)),
      terrain_(std::move(terrain)),
      contact_(contact),
      options_(options),
      dt_(dt) {
  if (!(dt_ > 0.0)) throw Error("Simulator: dt must be positive");
}

StepRecord Simulator::step(const JointVector& commanded) {
  StepRecord rec;
  rec.commanded_torque = commanded;
  rec.applied_torque = actuator_model(commanded, state_.joint_velocities, model_.params);
  rec.limit_torque = joint_limit_torques(state_, model_.params, options_);

  const JointVector power = rec.applied_torque.cwiseProduct(state_.joint_velocities);
  rec.energy_abs = power.cwiseAbs().sum() * dt_;
  rec.energy_net = std::abs(power.sum()) * dt_;

  const ContactDynamics cd = solve_contact_dynamics(state_, rec.applied_torque + rec.limit_torque, terrain_,
                                                    contact_, model_, options_, dt_);
  rec.contacts = cd.contacts;
  SimState next = integrate_step(state_, cd.acceleration, dt_);
  if (!options_.fixed_base) {
    // Semi-implicit Euler on the generalized coordinates leaves an O(dt)
    // error in total momentum. Shift the base velocity so the momentum update
    // is exactly p+ = p + dt * (net external force).
    Vec3 force(0.0, 0.0, -options_.gravity * model_.total_mass());
    for (const ContactPoint& c : cd.contacts) force += c.force();
    const Vec3 target = linear_momentum(state_, model_) + dt_ * force;
    next.base_linear_velocity += (target - linear_momentum(next, model_)) / model_.total_mass();
  }
  state_ = next;
  return rec;
}

TrajectoryWriter::TrajectoryWriter(std::ostream& out) : out_(out) {
  out_ << "time,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz";
  for (int j = 0; j < kNumJoints; ++j) out_ << ",q" << j;
  for (int j = 0; j < kNumJoints; ++j) out_ << ",qd" << j;
  for (int j = 0; j < kNumJoints; ++j) out_ << ",tau" << j;
  for (int leg = 0; leg < kNumLegs; ++leg) out_ << ",contact" << leg;
  out_ << "\n";
}

void TrajectoryWriter::write(const SimState& s, const StepRecord& rec) {
  out_ << s.time << ',' << s.base_position.x() << ',' << s.base_position.y() << ',' << s.base_position.z() << ','
       << s.base_orientation.w() << ',' << s.base_orientation.x() << ',' << s.base_orientation.y() << ','
       << s.base_orientation.z() << ',' << s.base_linear_velocity.x() << ',' << s.base_linear_velocity.y() << ','
       << s.base_linear_velocity.z() << ',' << s.base_angular_velocity.x() << ',' << s.base_angular_velocity.y()
       << ',' << s.base_angular_velocity.z();
  for (int j = 0; j < kNumJoints; ++j) out_ << ',' << s.joint_angles[j];
  for (int j = 0; j < kNumJoints; ++j) out_ << ',' << s.joint_velocities[j];
  for (int j = 0; j < kNumJoints; ++j) out_ << ',' << rec.applied_torque[j];
  for (int leg = 0; leg < kNumLegs; ++leg) out_ << ',' << (rec.contacts[leg].in_contact ? 1 : 0);
  out_ << "\n";
}

}  // namespace quadrl
