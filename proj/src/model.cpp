#include "quadrl/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace quadrl {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<double> parse_numbers(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
      throw ConfigError("robot config: bad number '" + t + "' for key '" + key + "'");
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace

void RobotParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("robot params: ") + what);
  };
  require(std::isfinite(total_mass) && total_mass > 0.0, "total_mass must be positive");
  require((body_inertia.array() > 0.0).all(), "body inertia entries must be positive");
  require((body_dims.array() > 0.0).all(), "body dimensions must be positive");
  require(thigh_length > 0.0 && calf_length > 0.0, "link lengths must be positive");
  require(hip_lateral_offset >= 0.0, "hip_lateral_offset must be non-negative");
  require(link_masses.base > 0.0 && link_masses.hip > 0.0 && link_masses.thigh > 0.0 &&
              link_masses.calf > 0.0 && link_masses.foot >= 0.0,
          "link masses must be positive");
  require(std::abs(link_masses.total() - total_mass) <= 1e-9 * total_mass,
          "link masses must sum to total_mass");
  for (int j = 0; j < 3; ++j) require(joint_lower[j] < joint_upper[j], "joint limits must be ordered");
  require(max_torque > 0.0 && max_joint_speed > 0.0 && gear_ratio > 0.0, "actuator limits must be positive");
  require(foot_radius >= 0.0, "foot_radius must be non-negative");
}

Vec3 RobotParams::hip_position(int leg) const {
  const double sx = (leg < 2) ? 1.0 : -1.0;
  const double sy = side_sign(leg_side(leg));
  return {sx * hip_x, sy * hip_y, 0.0};
}

RobotParams parse_robot_params(std::string_view text) {
  RobotParams p;
  // Starting from nominal values, every key present overrides one field.
  using Setter = std::function<void(const std::vector<double>&)>;
  auto scalar = [](double& dst) {
    return Setter([&dst](const std::vector<double>& v) {
      if (v.size() != 1) throw ConfigError("robot config: expected one value");
      dst = v[0];
    });
  };
  auto vec3 = [](Vec3& dst) {
    return Setter([&dst](const std::vector<double>& v) {
      if (v.size() != 3) throw ConfigError("robot config: expected three values");
      dst = Vec3(v[0], v[1], v[2]);
    });
  };
  auto limit_deg = [&p](int joint) {
    return Setter([&p, joint](const std::vector<double>& v) {
      if (v.size() != 2) throw ConfigError("robot config: expected lower, upper");
      p.joint_lower[joint] = deg_to_rad(v[0]);
      p.joint_upper[joint] = deg_to_rad(v[1]);
    });
  };
  const std::map<std::string, Setter> setters = {
      {"total_mass", scalar(p.total_mass)},
      {"body_inertia", vec3(p.body_inertia)},
      {"body_dims", vec3(p.body_dims)},
      {"thigh_length", scalar(p.thigh_length)},
      {"calf_length", scalar(p.calf_length)},
      {"hip_lateral_offset", scalar(p.hip_lateral_offset)},
      {"hip_x", scalar(p.hip_x)},
      {"hip_y", scalar(p.hip_y)},
      {"mass_base", scalar(p.link_masses.base)},
      {"mass_hip", scalar(p.link_masses.hip)},
      {"mass_thigh", scalar(p.link_masses.thigh)},
      {"mass_calf", scalar(p.link_masses.calf)},
      {"mass_foot", scalar(p.link_masses.foot)},
      {"hip_limit_deg", limit_deg(0)},
      {"thigh_limit_deg", limit_deg(1)},
      {"knee_limit_deg", limit_deg(2)},
      {"max_torque", scalar(p.max_torque)},
      {"max_joint_speed", scalar(p.max_joint_speed)},
      {"gear_ratio", scalar(p.gear_ratio)},
      {"foot_radius", scalar(p.foot_radius)},
  };

  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("robot config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(content.substr(0, eq));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("robot config: unknown key '" + key + "'");
    it->second(parse_numbers(key, trim(content.substr(eq + 1))));
  }
  p.validate();
  return p;
}

RobotParams load_robot_params(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open robot config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_robot_params(ss.str());
}

std::string format_robot_params(const RobotParams& p) {
  std::ostringstream o;
  o.precision(17);
  o << "total_mass = " << p.total_mass << "\n"
    << "body_inertia = " << p.body_inertia.x() << ", " << p.body_inertia.y() << ", " << p.body_inertia.z() << "\n"
    << "body_dims = " << p.body_dims.x() << ", " << p.body_dims.y() << ", " << p.body_dims.z() << "\n"
    << "thigh_length = " << p.thigh_length << "\n"
    << "calf_length = " << p.calf_length << "\n"
    << "hip_lateral_offset = " << p.hip_lateral_offset << "\n"
    << "hip_x = " << p.hip_x << "\n"
    << "hip_y = " << p.hip_y << "\n"
    << "mass_base = " << p.link_masses.base << "\n"
    << "mass_hip = " << p.link_masses.hip << "\n"
    << "mass_thigh = " << p.link_masses.thigh << "\n"
    << "mass_calf = " << p.link_masses.calf << "\n"
    << "mass_foot = " << p.link_masses.foot << "\n";
  const char* names[3] = {"hip_limit_deg", "thigh_limit_deg", "knee_limit_deg"};
  for (int j = 0; j < 3; ++j) {
    o << names[j] << " = " << rad_to_deg(p.joint_lower[j]) << ", " << rad_to_deg(p.joint_upper[j]) << "\n";
  }
  o << "max_torque = " << p.max_torque << "\n"
    << "max_joint_speed = " << p.max_joint_speed << "\n"
    << "gear_ratio = " << p.gear_ratio << "\n"
    << "foot_radius = " << p.foot_radius << "\n";
  return o.str();
}

// In the abduction-rotated frame the leg is planar in x/z:
//   x' = l1 sin(q2) + l2 sin(q2 - q3),  z' = -l1 cos(q2) - l2 cos(q2 - q3),
//   y' = side * hip_lateral_offset,
// and the foot position is R_x(q1) * (x', y', z').
Vec3 leg_forward_kinematics(const LegJointAngles& q, LegSide side, const RobotParams& params) {
  const double l1 = params.thigh_length;
  const double l2 = params.calf_length;
  const double phi = q.thigh_pitch - q.knee_pitch;
  const double xp = l1 * std::sin(q.thigh_pitch) + l2 * std::sin(phi);
  const double yp = side_sign(side) * params.hip_lateral_offset;
  const double zp = -l1 * std::cos(q.thigh_pitch) - l2 * std::cos(phi);
  const double c1 = std::cos(q.hip_abduction);
  const double s1 = std::sin(q.hip_abduction);
  return {xp, c1 * yp - s1 * zp, s1 * yp + c1 * zp};
}

Mat3 leg_jacobian(const LegJointAngles& q, LegSide side, const RobotParams& params) {
  const double l1 = params.thigh_length;
  const double l2 = params.calf_length;
  const double phi = q.thigh_pitch - q.knee_pitch;
  const double c2 = std::cos(q.thigh_pitch);
  const double s2 = std::sin(q.thigh_pitch);
  const double cp = std::cos(phi);
  const double sp = std::sin(phi);
  const double yp = side_sign(side) * params.hip_lateral_offset;
  const double zp = -l1 * c2 - l2 * cp;
  const double c1 = std::cos(q.hip_abduction);
  const double s1 = std::sin(q.hip_abduction);

  const double dx_d2 = l1 * c2 + l2 * cp;
  const double dx_d3 = -l2 * cp;
  const double dz_d2 = l1 * s2 + l2 * sp;
  const double dz_d3 = -l2 * sp;

  Mat3 J;
  J << 0.0, dx_d2, dx_d3,
      -s1 * yp - c1 * zp, -s1 * dz_d2, -s1 * dz_d3,
      c1 * yp - s1 * zp, c1 * dz_d2, c1 * dz_d3;
  return J;
}

LegJointAngles leg_inverse_kinematics(const Vec3& p, LegSide side, const RobotParams& params) {
  const double l1 = params.thigh_length;
  const double l2 = params.calf_length;
  const double yp = side_sign(side) * params.hip_lateral_offset;
  constexpr double kSlack = 1e-12;

  if (!p.allFinite()) throw OutOfWorkspace("leg IK: non-finite target");
  const double r2 = p.y() * p.y() + p.z() * p.z() - yp * yp;
  if (r2 < -kSlack) throw OutOfWorkspace("leg IK: target inside the hip offset cylinder");
  const double zp = -std::sqrt(std::max(r2, 0.0));
  const double q1 = std::atan2(p.z(), p.y()) - std::atan2(zp, yp);

  const double xp = p.x();
  const double L2 = xp * xp + zp * zp;
  const double reach_max = l1 + l2;
  const double reach_min = std::abs(l1 - l2);
  const double L = std::sqrt(L2);
  if (L > reach_max * (1.0 + kSlack) || L < reach_min * (1.0 - kSlack)) {
    throw OutOfWorkspace("leg IK: target outside the reachable annulus");
  }
  const double cos_knee = std::clamp((L2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  const double q3 = -std::acos(cos_knee);
  const double a = l1 + l2 * std::cos(q3);
  const double b = l2 * std::sin(q3);
  const double q2 = std::atan2(xp, -zp) + std::atan2(b, a);
  // Wrap abduction into (-pi, pi].
  return {std::remainder(q1, 2.0 * kPi), q2, q3};
}

FootState leg_foot_state(const LegJointAngles& q, const Vec3& qd, LegSide side, const RobotParams& params) {
  return {leg_forward_kinematics(q, side, params), leg_jacobian(q, side, params) * qd};
}

bool within_joint_limits(const LegJointAngles& q, const RobotParams& params) {
  const Vec3 v = q.vec();
  for (int j = 0; j < 3; ++j) {
    if (v[j] < params.joint_lower[j] || v[j] > params.joint_upper[j]) return false;
  }
  return true;
}

Mat3 RigidBodyInertia::inertia_about_origin() const {
  return inertia_com + mass * (com.squaredNorm() * Mat3::Identity() - com * com.transpose());
}

RigidBodyInertia RigidBodyInertia::combined(const RigidBodyInertia& other) const {
  RigidBodyInertia out;
  out.mass = mass + other.mass;
  if (out.mass <= 0.0) return out;
  out.com = (mass * com + other.mass * other.com) / out.mass;
  auto shifted = [&out](const RigidBodyInertia& b) {
    const Vec3 d = b.com - out.com;
    return Mat3(b.inertia_com + b.mass * (d.squaredNorm() * Mat3::Identity() - d * d.transpose()));
  };
  out.inertia_com = shifted(*this) + shifted(other);
  return out;
}

RigidBodyInertia RigidBodyInertia::point(double mass, const Vec3& at) {
  return {mass, at, Mat3::Zero()};
}

// Link geometry: hip is a 4 cm sphere centred halfway along the lateral
// offset; thigh and calf are uniform cylinders (radius 2 cm and 1 cm).
RigidBodyInertia hip_link_inertia(double mass, LegSide side, const RobotParams& params) {
  constexpr double r = 0.04;
  RigidBodyInertia b;
  b.mass = mass;
  b.com = Vec3(0.0, 0.5 * side_sign(side) * params.hip_lateral_offset, 0.0);
  b.inertia_com = Mat3::Identity() * (0.4 * mass * r * r);
  return b;
}

namespace {
RigidBodyInertia rod(double mass, double length, double radius) {
  RigidBodyInertia b;
  b.mass = mass;
  b.com = Vec3(0.0, 0.0, -0.5 * length);
  const double transverse = mass * (length * length / 12.0 + radius * radius / 4.0);
  b.inertia_com = Vec3(transverse, transverse, 0.5 * mass * radius * radius).asDiagonal();
  return b;
}
}  // namespace

RigidBodyInertia thigh_link_inertia(double mass, const RobotParams& params) {
  return rod(mass, params.thigh_length, 0.02);
}

RigidBodyInertia calf_link_inertia(double calf_mass, double foot_mass, const RobotParams& params) {
  const RigidBodyInertia calf = rod(calf_mass, params.calf_length, 0.01);
  return calf.combined(RigidBodyInertia::point(foot_mass, Vec3(0.0, 0.0, -params.calf_length)));
}

RobotModel RobotModel::from_params(const RobotParams& params) {
  params.validate();
  RobotModel m;
  m.params = params;
  m.base.mass = params.link_masses.base;
  m.base.com = Vec3::Zero();
  m.base.inertia_com = params.body_inertia.asDiagonal();
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const LegSide side = leg_side(leg);
    m.legs[leg][0] = hip_link_inertia(params.link_masses.hip, side, params);
    m.legs[leg][1] = thigh_link_inertia(params.link_masses.thigh, params);
    m.legs[leg][2] = calf_link_inertia(params.link_masses.calf, params.link_masses.foot, params);
  }
  return m;
}

void RobotModel::attach_payload(const Payload& load) {
  if (load.mass <= 0.0) return;
  base = base.combined(RigidBodyInertia::point(load.mass, load.offset));
  payload.offset = (payload.mass * payload.offset + load.mass * load.offset) / (payload.mass + load.mass);
  payload.mass += load.mass;
}

double RobotModel::total_mass() const {
  double m = base.mass;
  for (const auto& leg : legs) {
    for (const auto& link : leg) m += link.mass;
  }
  return m;
}

}  // namespace quadrl
