#include "quadrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace quadrl {

FootTargets scale_action(const Eigen::Ref<const Eigen::VectorXd>& action, const ActionBounds& bounds) {
  if (action.size() != kActionDim) throw Error("action must have 12 components");
  const Vec3 mid = 0.5 * (bounds.lower + bounds.upper);
  const Vec3 half = 0.5 * (bounds.upper - bounds.lower);
  FootTargets out;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const Vec3 a = action.segment<3>(3 * leg).cwiseMax(-1.0).cwiseMin(1.0);
    out[leg] = mid + a.cwiseProduct(half);
  }
  return out;
}

Vec3 action_origin(int leg, const RobotParams& params) {
  return Vec3(0.0, side_sign(leg_side(leg)) * params.hip_lateral_offset, 0.0);
}

FootTargets foot_targets(const Eigen::Ref<const Eigen::VectorXd>& action, const RobotParams& params,
                         const ActionBounds& bounds) {
  FootTargets feet = scale_action(action, bounds);
  for (int leg = 0; leg < kNumLegs; ++leg) feet[leg] += action_origin(leg, params);
  return feet;
}

void RewardWeights::validate() const {
  if (!(progress >= 0.0) || !(energy >= 0.0) || !(max_progress > 0.0) || !std::isfinite(survival) ||
      !(fall_penalty <= 0.0)) {
    throw ConfigError("reward weights: need progress, energy >= 0, max_progress > 0, fall_penalty <= 0");
  }
}

double progress_reward(double dx, const RewardWeights& w) { return w.progress * std::min(dx, w.max_progress); }

double step_reward(double dx, double energy, bool fell, const RewardWeights& w) {
  double r = progress_reward(dx, w) - w.energy * energy + w.survival;
  if (fell) r += w.fall_penalty;
  return r;
}

double time_feature(double t, const ObservationSettings& s) {
  if (s.mode == ObservationMode::Eval && t > s.eval_hold_after) return s.eval_hold_value;
  return s.episode_duration - t;
}

Eigen::VectorXd build_observation(const SimState& s, const RobotModel& model, const Terrain& terrain,
                                  const ContactSet& contacts, const ObservationSettings& settings) {
  Eigen::VectorXd o(kObservationDim);
  const Mat3 Rt = s.base_orientation.normalized().toRotationMatrix().transpose();
  int i = 0;
  o[i++] = s.base_position.z() - terrain.surface_height(s.base_position.x(), s.base_position.y());
  o[i++] = s.base_orientation.w();
  o[i++] = s.base_orientation.x();
  o[i++] = s.base_orientation.y();
  o[i++] = s.base_orientation.z();
  o.segment<3>(i) = Rt * s.base_linear_velocity;
  i += 3;
  o.segment<3>(i) = Rt * s.base_angular_velocity;
  i += 3;
  o.segment<12>(i) = s.joint_angles;
  i += 12;
  o.segment<12>(i) = s.joint_velocities;
  i += 12;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const FootState f = leg_foot_state(s.leg_angles(leg), s.leg_velocities(leg), leg_side(leg), model.params);
    o.segment<3>(i + 3 * leg) = f.p;
    o.segment<3>(i + 12 + 3 * leg) = f.v;
  }
  i += 24;
  for (int leg = 0; leg < kNumLegs; ++leg) o[i++] = contacts[leg].in_contact ? 1.0 : 0.0;
  o[i++] = time_feature(s.time, settings);
  return o;
}

std::pair<double, double> roll_pitch(const Quat& q) {
  const Mat3 R = q.normalized().toRotationMatrix();
  const double roll = std::atan2(R(2, 1), R(2, 2));
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  return {roll, pitch};
}

bool has_fallen(const SimState& s, const RobotModel& model, const Terrain& terrain, const FallCriteria& c) {
  const double height = s.base_position.z() - terrain.surface_height(s.base_position.x(), s.base_position.y());
  if (height < c.min_height) return true;
  const auto [roll, pitch] = roll_pitch(s.base_orientation);
  if (std::abs(roll) > c.max_tilt || std::abs(pitch) > c.max_tilt) return true;
  for (const Vec3& p : collision_probe_points(s, model)) {
    if (terrain.query(p, 0.0)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------

RandomizationConfig RandomizationConfig::preset(const std::string& name) {
  RandomizationConfig c;
  c.mass_scale = 0.0;
  c.friction_min = c.friction_max = kNominalFriction;
  c.load_probability = 0.0;
  if (name == "none") return c;
  c.friction_min = 0.5;
  c.friction_max = 1.0;
  if (name == "mu") return c;
  if (name == "mu+load") {
    c.load_probability = 0.8;
    return c;
  }
  if (name == "mu+mass10" || name == "mu+mass20") {
    c.mass_scale = name == "mu+mass10" ? 0.1 : 0.2;
    return c;
  }
  if (name == "mu+mass10+load" || name == "full") {
    c.mass_scale = name == "full" ? 0.2 : 0.1;
    c.load_probability = 0.8;
    return c;
  }
  throw ConfigError("unknown randomization preset '" + name + "'");
}

const std::vector<std::string>& RandomizationConfig::preset_names() {
  static const std::vector<std::string> names{"none", "mu", "mu+load", "mu+mass10", "mu+mass20",
                                              "mu+mass10+load", "full"};
  return names;
}

void RandomizationConfig::validate() const {
  if (!(mass_scale >= 0.0 && mass_scale < 1.0)) throw ConfigError("mass_scale must lie in [0, 1)");
  if (!(friction_min > 0.0 && friction_min <= friction_max)) throw ConfigError("need 0 < friction_min <= friction_max");
  if (!(load_probability >= 0.0 && load_probability <= 1.0)) throw ConfigError("load_probability must lie in [0, 1]");
  if (!(load_mass_min >= 0.0 && load_mass_min <= load_mass_max)) throw ConfigError("need 0 <= load_mass_min <= load_mass_max");
  if (!(load_mass_max >= 0.0) || (load_offset_max.array() < 0.0).any()) {
    throw ConfigError("load mass and offset bounds must be non-negative");
  }
}

RandomizedDynamics randomize_dynamics(const RobotParams& nominal, const RandomizationConfig& cfg,
                                      std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RandomizedDynamics out;
  for (double& s : out.mass_scales) s = 1.0 + cfg.mass_scale * sym(rng);
  out.friction = cfg.friction_min + (cfg.friction_max - cfg.friction_min) * unit(rng);
  const bool attach = unit(rng) < cfg.load_probability;
  const double load_mass = cfg.load_mass_min + (cfg.load_mass_max - cfg.load_mass_min) * unit(rng);
  Vec3 offset;
  for (int k = 0; k < 3; ++k) offset[k] = cfg.load_offset_max[k] * sym(rng);

  const LinkMasses& m = nominal.link_masses;
  out.model = RobotModel::from_params(nominal);
  out.model.base.mass *= out.mass_scales[0];
  out.model.base.inertia_com *= out.mass_scales[0];
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const double* s = &out.mass_scales[1 + 4 * leg];
    auto& links = out.model.legs[leg];
    links[0] = hip_link_inertia(m.hip * s[0], leg_side(leg), nominal);
    links[1] = thigh_link_inertia(m.thigh * s[1], nominal);
    links[2] = calf_link_inertia(m.calf * s[2], m.foot * s[3], nominal);
  }
  if (attach) {
    out.load_attached = true;
    out.load = {load_mass, offset};
    out.model.attach_payload(out.load);
  }
  return out;
}

// ---------------------------------------------------------------------------

void RoughTerrainConfig::validate() const {
  if (boxes < 0) throw ConfigError("box count must be non-negative");
  if (!(max_height > 0.0) || !(max_extent > 0.0) || !(length > 0.0) || !(width > 0.0)) {
    throw ConfigError("rough terrain dimensions must be positive");
  }
  if (walls && !(wall_y > 0.0)) throw ConfigError("wall_y must be positive");
}

Terrain generate_rough_terrain(std::mt19937_64& rng, const RoughTerrainConfig& cfg, double friction) {
  cfg.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // 1 - U[0, 1) lies in (0, 1], so no box is degenerate.
  auto half_open = [&](double hi) { return hi * (1.0 - unit(rng)); };
  Terrain t = Terrain::flat(friction);
  t.walls = cfg.walls;
  t.wall_y = cfg.wall_y;
  t.boxes.reserve(cfg.boxes);
  for (int i = 0; i < cfg.boxes; ++i) {
    TerrainBox b;
    const double h = half_open(cfg.max_height);
    const double sx = half_open(cfg.max_extent);
    const double sy = half_open(cfg.max_extent);
    b.center = Vec3(cfg.x_start + cfg.length * unit(rng), cfg.width * (unit(rng) - 0.5), 0.5 * h);
    b.half_extents = Vec3(0.5 * sx, 0.5 * sy, 0.5 * h);
    b.yaw = 2.0 * kPi * unit(rng);
    t.boxes.push_back(b);
  }
  return t;
}

JointTargetRange joint_target_range(JointRangeMode mode, const RobotParams& params, const ActionBounds& bounds) {
  JointTargetRange r;
  if (mode == JointRangeMode::Full) {
    for (int leg = 0; leg < kNumLegs; ++leg) {
      for (int k = 0; k < 3; ++k) {
        r.lower[3 * leg + k] = params.joint_lower[k];
        r.upper[3 * leg + k] = params.joint_upper[k];
      }
    }
    return r;
  }
  constexpr int n = 9;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
          const Vec3 f(i, j, k);
          const Vec3 p =
              action_origin(leg, params) + bounds.lower + (bounds.upper - bounds.lower).cwiseProduct(f / (n - 1));
          try {
            const Vec3 q = leg_inverse_kinematics(p, leg_side(leg), params).vec();
            lo = lo.cwiseMin(q);
            hi = hi.cwiseMax(q);
          } catch (const OutOfWorkspace&) {
          }
        }
      }
    }
    for (int k = 0; k < 3; ++k) {
      r.lower[3 * leg + k] = std::max(lo[k], params.joint_lower[k]);
      r.upper[3 * leg + k] = std::min(hi[k], params.joint_upper[k]);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

int EnvConfig::substeps() const { return static_cast<int>(std::lround(control_period / physics_dt)); }

void EnvConfig::validate() const {
  if (!(physics_dt > 0.0) || !(control_period > 0.0)) throw ConfigError("time steps must be positive");
  const int n = substeps();
  if (n < 1 || std::abs(n * physics_dt - control_period) > 1e-9 * control_period) {
    throw ConfigError("control_period must be an integer multiple of physics_dt");
  }
  if (horizon < 1) throw ConfigError("horizon must be at least one step");
  if (!(settle_time >= 0.0)) throw ConfigError("settle_time must be non-negative");
  if ((action_bounds.upper - action_bounds.lower).minCoeff() < 0.0) throw ConfigError("action bounds inverted");
  if (!(contact.stiffness > 0.0) || !(contact.damping >= 0.0) || !(contact.slip_velocity > 0.0)) {
    throw ConfigError("contact parameters must be positive");
  }
  cartesian_gains.validate();
  joint_gains.validate();
  randomization.validate();
  reward.validate();
  robot.validate();
  if (terrain == TerrainMode::Rough) rough.validate();
}

EnvConfig perturbed_eval_profile(EnvConfig c) {
  c.randomization = RandomizationConfig::none();
  c.contact.stiffness = 20000.0;
  c.contact.damping = 800.0;
  c.physics_dt = 5e-4;
  c.robot.foot_radius = 0.025;
  return c;
}

// ---------------------------------------------------------------------------

QuadrupedEnv::QuadrupedEnv(EnvConfig cfg) : cfg_(std::move(cfg)), raw_(kObservationDim) {
  cfg_.validate();
  joint_range_ = joint_target_range(cfg_.joint_range, cfg_.robot, cfg_.action_bounds);
  raw_.setZero();
}

JointVector QuadrupedEnv::control_torques(const FootTargets& feet, const JointVector& q_target) const {
  if (cfg_.action_space == ActionSpace::Cartesian) return impedance_torques(feet);
  const SimState& s = sim_->state();
  return joint_pd_torques(q_target, s.joint_angles, s.joint_velocities, cfg_.joint_gains);
}

JointVector QuadrupedEnv::impedance_torques(const FootTargets& feet) const {
  const SimState& s = sim_->state();
  JointVector tau;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const LegJointAngles q = s.leg_angles(leg);
    const FootState f = leg_foot_state(q, s.leg_velocities(leg), leg_side(leg), cfg_.robot);
    const Mat3 J = leg_jacobian(q, leg_side(leg), cfg_.robot);
    tau.segment<3>(3 * leg) = cartesian_pd_torques(feet[leg], f.p, f.v, J, cfg_.cartesian_gains);
  }
  return tau;
}

void QuadrupedEnv::refresh_observation() {
  raw_ = build_observation(sim_->state(), sim_->model(), sim_->terrain(), contacts_, cfg_.observation);
}

Eigen::VectorXd QuadrupedEnv::reset(std::mt19937_64& rng) {
  dynamics_ = randomize_dynamics(cfg_.robot, cfg_.randomization, rng);
  Terrain terrain = cfg_.terrain == TerrainMode::Rough ? generate_rough_terrain(rng, cfg_.rough, dynamics_.friction)
                                                       : Terrain::flat(dynamics_.friction);
  sim_.emplace(dynamics_.model, std::move(terrain), cfg_.contact, DynamicsOptions{}, cfg_.physics_dt);

  // Standing pose: feet at the centre of the action box, lowered by the
  // static sag of the vertical impedance so that settling barely moves.
  const FootTargets stand = foot_targets(Eigen::VectorXd::Zero(kActionDim), cfg_.robot, cfg_.action_bounds);
  const double sag =
      std::min(0.1, dynamics_.model.total_mass() * kGravity / (kNumLegs * cfg_.cartesian_gains.kp.z()));
  SimState s;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const Vec3 foot = stand[leg] + Vec3(0.0, 0.0, sag);
    s.joint_angles.segment<3>(3 * leg) = leg_inverse_kinematics(foot, leg_side(leg), cfg_.robot).vec();
  }
  s.base_position = Vec3(0.0, 0.0,
                         sim_->terrain().surface_height(0.0, 0.0) - stand[0].z() - sag + cfg_.robot.foot_radius - 1e-3);
  sim_->set_state(s);

  // Settle under the standing impedance targets; the clock restarts after.
  contacts_ = {};
  const int settle_steps = static_cast<int>(std::lround(cfg_.settle_time / cfg_.physics_dt));
  for (int k = 0; k < settle_steps; ++k) contacts_ = sim_->step(impedance_torques(stand)).contacts;
  SimState settled = sim_->state();
  settled.time = 0.0;
  sim_->set_state(settled);

  step_index_ = 0;
  terminal_ = false;
  refresh_observation();
  return finish_observation(raw_);
}

StepResult QuadrupedEnv::step(const Eigen::VectorXd& action) {
  if (!sim_ || terminal_) throw Error("step() on a finished episode; call reset() first");
  if (action.size() != kActionDim || !action.allFinite()) throw Error("action must be 12 finite values");

  const Eigen::VectorXd a = action.cwiseMax(-1.0).cwiseMin(1.0);
  FootTargets feet{};
  JointVector q_target = JointVector::Zero();
  if (cfg_.action_space == ActionSpace::Cartesian) {
    feet = foot_targets(a, cfg_.robot, cfg_.action_bounds);
  } else {
    const JointVector mid = 0.5 * (joint_range_.lower + joint_range_.upper);
    const JointVector half = 0.5 * (joint_range_.upper - joint_range_.lower);
    q_target = mid + a.cwiseProduct(half);
  }

  const RobotParams& p = sim_->model().params;
  StepResult out;
  StepInfo& info = out.info;
  const double x0 = sim_->state().base_position.x();
  const int n = cfg_.substeps();
  for (int k = 0; k < n; ++k) {
    const JointVector qd = sim_->state().joint_velocities;
    StepRecord rec;
    try {
      rec = sim_->step(control_torques(feet, q_target));
    } catch (const SimulationDiverged&) {
      info.diverged = true;
      break;
    }
    ++info.substeps;
    info.energy += rec.energy_abs;
    info.energy_net += rec.energy_net;
    bool airborne = true;
    for (const ContactPoint& c : rec.contacts) airborne = airborne && !c.in_contact;
    if (airborne) ++info.airborne_substeps;
    for (int j = 0; j < kNumJoints; ++j) {
      const double tau = rec.applied_torque[j];
      info.max_abs_torque = std::max(info.max_abs_torque, std::abs(tau));
      const bool accelerating = std::abs(qd[j]) >= p.max_joint_speed && rec.commanded_torque[j] * qd[j] > 0.0;
      if (std::abs(tau) > p.max_torque || (accelerating && tau != 0.0)) info.speed_rule_ok = false;
    }
    contacts_ = rec.contacts;
    if (observer_) observer_(sim_->state(), rec);
  }
  if (!info.diverged && !sim_->state().all_finite()) info.diverged = true;

  ++step_index_;
  if (info.diverged) {
    info.fell = true;
  } else {
    info.forward_progress = sim_->state().base_position.x() - x0;
    info.fell = has_fallen(sim_->state(), sim_->model(), sim_->terrain(), cfg_.fall);
    refresh_observation();
  }
  for (int leg = 0; leg < kNumLegs; ++leg) info.contacts[leg] = contacts_[leg].in_contact;
  info.timeout = !info.fell && step_index_ >= cfg_.horizon;
  out.reward = step_reward(info.forward_progress, info.energy, info.fell, cfg_.reward);
  out.done = info.fell || info.timeout;
  terminal_ = out.done;
  out.raw_observation = raw_;
  out.observation = finish_observation(raw_);
  return out;
}

}  // namespace quadrl
