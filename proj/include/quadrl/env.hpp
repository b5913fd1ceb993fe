#pragma once

#include <array>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "quadrl/control.hpp"
#include "quadrl/dynamics.hpp"
#include "quadrl/environment.hpp"
#include "quadrl/model.hpp"

namespace quadrl {

inline constexpr int kObservationDim = 64;
inline constexpr int kActionDim = 12;

using FootTargets = std::array<Vec3, kNumLegs>;

/// Leg-frame box the Cartesian action is mapped onto.
struct ActionBounds {
  Vec3 lower{-0.2, -0.05, -0.33};
  Vec3 upper{0.2, 0.05, -0.15};
};

/// Affine map of a in [-1, 1]^12 (components clamped first) onto per-leg
/// foot targets: p = mid + a * half_range.
FootTargets scale_action(const Eigen::Ref<const Eigen::VectorXd>& action, const ActionBounds& bounds = {});

/// Origin of the action box in the leg frame: the hip shifted outward by the
/// lateral offset, so y = 0 puts the foot under the thigh joint rather than
/// under the abduction axis.
Vec3 action_origin(int leg, const RobotParams& params);

/// Leg-frame impedance targets for an action.
FootTargets foot_targets(const Eigen::Ref<const Eigen::VectorXd>& action, const RobotParams& params,
                         const ActionBounds& bounds = {});

struct RewardWeights {
  double progress = 2.0;
  double energy = 0.008;
  double max_progress = 0.06;  // m per policy step
  double survival = 0.01;
  double fall_penalty = -10.0;

  void validate() const;
};

/// w1 * min(dx, d_max). Backward motion is not clipped from below.
double progress_reward(double forward_progress, const RewardWeights& w = {});
double step_reward(double forward_progress, double energy, bool fell, const RewardWeights& w = {});

enum class ObservationMode { Train, Eval };

struct ObservationSettings {
  double episode_duration = 10.0;  // s, time feature = duration - t
  double eval_hold_after = 8.0;    // s
  double eval_hold_value = 2.0;
  ObservationMode mode = ObservationMode::Train;
};

double time_feature(double t, const ObservationSettings& s);

/// Layout: height above the local surface (1), base quaternion w,x,y,z (4),
/// base linear and angular velocity in the base frame (3 + 3), joint angles
/// (12), joint velocities (12), leg-frame foot positions (12) and velocities
/// (12), contact flags (4), time feature (1). Not normalized.
Eigen::VectorXd build_observation(const SimState& state, const RobotModel& model, const Terrain& terrain,
                                  const ContactSet& contacts, const ObservationSettings& settings);

struct FallCriteria {
  double min_height = 0.15;            // m above the local surface
  double max_tilt = deg_to_rad(60.0);  // |roll| or |pitch|
};

/// Roll and pitch of the base (Z-Y-X Euler convention).
std::pair<double, double> roll_pitch(const Quat& q);
bool has_fallen(const SimState& state, const RobotModel& model, const Terrain& terrain,
                const FallCriteria& criteria = {});

struct RandomizationConfig {
  double mass_scale = 0.2;  // each body part scaled by U[1 - s, 1 + s]
  double friction_min = 0.5;
  double friction_max = 1.0;
  double load_probability = 0.8;
  double load_mass_min = 0.0;  // payload mass ~ U[min, max]
  double load_mass_max = 15.0;
  Vec3 load_offset_max{0.15, 0.05, 0.05};

  static constexpr double kNominalFriction = 0.75;

  /// Named ablation rows: none, mu, mu+load, mu+mass10, mu+mass20,
  /// mu+mass10+load, full (= mu+mass20+load).
  static RandomizationConfig preset(const std::string& name);
  static const std::vector<std::string>& preset_names();
  static RandomizationConfig none() { return preset("none"); }
  static RandomizationConfig full() { return preset("full"); }

  void validate() const;
};

struct RandomizedDynamics {
  RobotModel model;
  double friction = RandomizationConfig::kNominalFriction;
  bool load_attached = false;
  Payload load;
  /// base, then per leg: hip, thigh, calf, foot.
  std::array<double, 1 + 4 * kNumLegs> mass_scales{};
};

/// Per-episode draw of link masses (inertia scaled with mass), ground
/// friction and an optional rigid payload on the base. Always consumes the
/// same number of random draws, so later draws do not depend on the config.
RandomizedDynamics randomize_dynamics(const RobotParams& nominal, const RandomizationConfig& cfg,
                                      std::mt19937_64& rng);

struct RoughTerrainConfig {
  int boxes = 100;
  double max_height = 0.04;
  double max_extent = 1.0;  // full box width along its own x and y
  double x_start = 0.5;     // grid begins this far ahead of the start pose
  double length = 20.0;
  double width = 6.0;
  bool walls = true;
  double wall_y = 3.0;

  void validate() const;
};

Terrain generate_rough_terrain(std::mt19937_64& rng, const RoughTerrainConfig& cfg = {}, double friction = 1.0);

enum class TerrainMode { Flat, Rough };
enum class ActionSpace { Cartesian, Joint };
enum class JointRangeMode { Full, Restricted };

/// Per-joint target box for the joint-space baseline. Restricted ranges are
/// the joint angles reached by the Cartesian action box, found by IK over a
/// dense grid of it.
struct JointTargetRange {
  JointVector lower = JointVector::Zero();
  JointVector upper = JointVector::Zero();
};
JointTargetRange joint_target_range(JointRangeMode mode, const RobotParams& params, const ActionBounds& bounds = {});

struct EnvConfig {
  TerrainMode terrain = TerrainMode::Flat;
  RoughTerrainConfig rough;
  ActionSpace action_space = ActionSpace::Cartesian;
  JointRangeMode joint_range = JointRangeMode::Full;
  ActionBounds action_bounds;
  CartesianGains cartesian_gains;
  JointGains joint_gains;
  RandomizationConfig randomization = RandomizationConfig::full();
  RewardWeights reward;
  FallCriteria fall;
  ObservationSettings observation;
  RobotParams robot = RobotParams::nominal();
  ContactParams contact;
  double physics_dt = 1e-3;
  double control_period = 0.01;
  int horizon = 1000;         // policy steps per episode
  double settle_time = 0.1;   // s of standing before t = 0, not counted

  int substeps() const;
  void validate() const;
};

/// Held-out evaluation profile: softer contact, finer integration, a larger
/// foot and nominal masses, none of which training sees.
EnvConfig perturbed_eval_profile(EnvConfig base);

class QuadrupedEnv : public Environment {
 public:
  using PhysicsObserver = std::function<void(const SimState&, const StepRecord&)>;

  explicit QuadrupedEnv(EnvConfig cfg);

  int observation_dim() const override { return kObservationDim; }
  int action_dim() const override { return kActionDim; }
  double control_period() const override { return cfg_.control_period; }
  const Eigen::VectorXd& raw_observation() const override { return raw_; }

  Eigen::VectorXd reset(std::mt19937_64& rng) override;
  StepResult step(const Eigen::VectorXd& action) override;

  const EnvConfig& config() const { return cfg_; }
  const Simulator& simulator() const { return *sim_; }
  const RandomizedDynamics& dynamics() const { return dynamics_; }
  const ContactSet& contacts() const { return contacts_; }
  int step_index() const { return step_index_; }
  /// Seconds since the end of the settle phase.
  double episode_time() const { return sim_->state().time; }

  /// Called after every physics step (for trajectory and torque traces).
  void set_physics_observer(PhysicsObserver obs) { observer_ = std::move(obs); }

 private:
  JointVector control_torques(const FootTargets& feet, const JointVector& q_target) const;
  JointVector impedance_torques(const FootTargets& feet) const;
  void refresh_observation();

  EnvConfig cfg_;
  JointTargetRange joint_range_;
  RandomizedDynamics dynamics_;
  std::optional<Simulator> sim_;
  ContactSet contacts_{};
  Eigen::VectorXd raw_;
  int step_index_ = 0;
  bool terminal_ = true;
  PhysicsObserver observer_;
};

}  // namespace quadrl
