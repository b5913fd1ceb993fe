#pragma once

#include <array>
#include <bitset>
#include <iosfwd>
#include <optional>
#include <vector>

#include "quadrl/common.hpp"
#include "quadrl/model.hpp"

namespace quadrl {

/// Floating-base state. Base velocities are expressed in the world frame;
/// joint order is FR, FL, RR, RL x (hip, thigh, knee).
struct SimState {
  Vec3 base_position = Vec3::Zero();
  Quat base_orientation = Quat::Identity();
  JointVector joint_angles = JointVector::Zero();
  Vec3 base_linear_velocity = Vec3::Zero();
  Vec3 base_angular_velocity = Vec3::Zero();
  JointVector joint_velocities = JointVector::Zero();
  double time = 0.0;

  LegJointAngles leg_angles(int leg) const { return LegJointAngles(joint_angles.segment<3>(3 * leg)); }
  Vec3 leg_velocities(int leg) const { return joint_velocities.segment<3>(3 * leg); }
  bool all_finite() const;
};

/// Static box resting on the ground plane (bottom face at z = 0).
struct TerrainBox {
  Vec3 center = Vec3::Zero();  // x, y of the footprint centre; z = height / 2
  Vec3 half_extents = Vec3::Zero();
  double yaw = 0.0;
};

struct TerrainContact {
  double depth = 0.0;  // positive when penetrating
  Vec3 normal = Vec3::UnitZ();
};

struct Terrain {
  double friction = 1.0;
  std::vector<TerrainBox> boxes;
  bool walls = false;
  double wall_y = 3.0;

  static Terrain flat(double friction = 1.0) { return Terrain{friction, {}, false, 3.0}; }

  /// Deepest penetration of a sphere into the ground, walls or boxes, if any.
  std::optional<TerrainContact> query(const Vec3& center, double radius) const;
  /// Top surface height under (x, y): 0 or the highest box covering the point.
  double surface_height(double x, double y) const;
};

struct ContactParams {
  double stiffness = 30000.0;   // N/m
  double damping = 1000.0;      // N s/m
  double slip_velocity = 0.01;  // m/s, friction regularization width
  double contact_threshold = 1.0;  // N, normal force that counts as contact
};

struct ContactPoint {
  int foot = 0;
  double penetration = 0.0;
  Vec3 normal = Vec3::UnitZ();
  Vec3 normal_force = Vec3::Zero();
  Vec3 tangential_force = Vec3::Zero();
  bool in_contact = false;

  Vec3 force() const { return normal_force + tangential_force; }
};

using ContactSet = std::array<ContactPoint, kNumLegs>;
using FootForces = std::array<Vec3, kNumLegs>;
/// Base linear (3, world), base angular (3, world), joints (12).
using GeneralizedAcceleration = Eigen::Matrix<double, 18, 1>;

struct DynamicsOptions {
  double gravity = kGravity;
  bool fixed_base = false;
  std::bitset<kNumJoints> locked_joints;  // prescribed zero acceleration
  bool joint_limits = true;
  double limit_stiffness = 500.0;  // N m / rad
  double limit_damping = 2.0;      // N m s / rad
};

struct FootKinematics {
  Vec3 position = Vec3::Zero();  // world
  Vec3 velocity = Vec3::Zero();  // world
};

std::array<FootKinematics, kNumLegs> foot_kinematics(const SimState& state, const RobotModel& model);

/// Articulated-body forward dynamics. `foot_forces` are world-frame forces
/// applied at the foot points. Throws SimulationDiverged on non-finite input.
GeneralizedAcceleration forward_dynamics(const SimState& state, const JointVector& applied_torques,
                                         const FootForces& foot_forces, const RobotModel& model,
                                         const DynamicsOptions& options = {});

/// Penalty contact: spring-damper normal force and regularized Coulomb
/// friction on each foot sphere.
ContactSet contact_forces(const SimState& state, const Terrain& terrain, const ContactParams& params,
                          const RobotModel& model);

struct ContactDynamics {
  ContactSet contacts{};
  GeneralizedAcceleration acceleration = GeneralizedAcceleration::Zero();
};

/// Contact forces and accelerations for one step of length dt. Same force
/// laws as contact_forces(), but damping and friction act on the end-of-step
/// foot velocity (linearly implicit, via the foot Delassus matrix), which
/// keeps stiff contact stable at millisecond steps.
ContactDynamics solve_contact_dynamics(const SimState& state, const JointVector& applied_torques,
                                       const Terrain& terrain, const ContactParams& params,
                                       const RobotModel& model, const DynamicsOptions& options, double dt);

double actuator_model(double commanded_torque, double joint_velocity, const RobotParams& params);
JointVector actuator_model(const JointVector& commanded, const JointVector& joint_velocities,
                           const RobotParams& params);

/// One-sided spring-damper torques that push joints back inside their limits.
JointVector joint_limit_torques(const SimState& state, const RobotParams& params, const DynamicsOptions& options);

/// Semi-implicit Euler: velocities first, then positions with the new
/// velocities; orientation through the exponential map.
SimState integrate_step(const SimState& state, const GeneralizedAcceleration& acc, double dt);

double kinetic_energy(const SimState& state, const RobotModel& model);
double potential_energy(const SimState& state, const RobotModel& model, double gravity = kGravity);
Vec3 linear_momentum(const SimState& state, const RobotModel& model);
Vec3 center_of_mass(const SimState& state, const RobotModel& model);

/// World positions of the knees and the eight base box corners; used for
/// fall detection only.
std::vector<Vec3> collision_probe_points(const SimState& state, const RobotModel& model);

/// Inverse dynamics by recursive Newton-Euler; returns the generalized force
/// (base wrench in world frame at the base origin, then joint torques) needed
/// to realize `acc`. Serves as an independent check of forward_dynamics.
Eigen::Matrix<double, 18, 1> inverse_dynamics(const SimState& state, const GeneralizedAcceleration& acc,
                                              const FootForces& foot_forces, const RobotModel& model,
                                              double gravity = kGravity);

struct StepRecord {
  JointVector commanded_torque = JointVector::Zero();
  JointVector applied_torque = JointVector::Zero();  // after actuator limits
  JointVector limit_torque = JointVector::Zero();
  ContactSet contacts{};
  /// Sum over joints of |tau_i * qdot_i| * dt, and |sum tau_i qdot_i| * dt.
  double energy_abs = 0.0;
  double energy_net = 0.0;
};

/// Single-threaded simulator owning one state.
class Simulator {
 public:
  Simulator(RobotModel model, Terrain terrain, ContactParams contact = {}, DynamicsOptions options = {},
            double dt = 1e-3);

  const SimState& state() const { return state_; }
  void set_state(const SimState& s) { state_ = s; }
  const RobotModel& model() const { return model_; }
  const Terrain& terrain() const { return terrain_; }
  const ContactParams& contact_params() const { return contact_; }
  const DynamicsOptions& options() const { return options_; }
  double dt() const { return dt_; }

  /// Advances one physics step with the given commanded joint torques.
  StepRecord step(const JointVector& commanded_torque);

 private:
  RobotModel model_;
  Terrain terrain_;
  ContactParams contact_;
  DynamicsOptions options_;
  double dt_;
  SimState state_;
};

/// CSV trajectory dump: one row per physics step.
/// Columns: time, base_pos[3], base_quat[w,x,y,z], base_linvel[3],
/// base_angvel[3], q[12], qd[12], tau[12], contact[4].
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(std::ostream& out);
  void write(const SimState& state, const StepRecord& record);

 private:
  std::ostream& out_;
};

}  // namespace quadrl
