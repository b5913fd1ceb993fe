#pragma once

#include <array>
#include <memory>
#include <random>

#include <Eigen/Core>

namespace quadrl {

class RunningNormalizer;

/// Per-transition diagnostics that are not part of the learning signal.
struct StepInfo {
  double forward_progress = 0.0;  // m of base x travel during the step
  double energy = 0.0;            // J, sum over joints of |tau q_dot| dt
  double energy_net = 0.0;        // J, |sum over joints of tau q_dot| dt
  bool fell = false;
  bool diverged = false;
  bool timeout = false;
  int substeps = 0;
  int airborne_substeps = 0;      // substeps with no foot in contact
  double max_abs_torque = 0.0;    // applied, N m
  bool speed_rule_ok = true;      // actuator speed-limit rule held
  std::array<bool, 4> contacts{}; // foot contact flags after the last substep
};

struct StepResult {
  Eigen::VectorXd observation;      // after normalization, if a normalizer is set
  Eigen::VectorXd raw_observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Episodic environment driven by the PPO trainer and the evaluator.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int observation_dim() const = 0;
  virtual int action_dim() const = 0;
  /// Starts a new episode; returns the (normalized) first observation.
  virtual Eigen::VectorXd reset(std::mt19937_64& rng) = 0;
  virtual StepResult step(const Eigen::VectorXd& action) = 0;
  /// Raw observation of the current state, before normalization.
  virtual const Eigen::VectorXd& raw_observation() const = 0;
  /// Policy period in seconds (for speed metrics).
  virtual double control_period() const = 0;

  /// Frozen statistics applied exactly once to every returned observation.
  void set_normalizer(std::shared_ptr<const RunningNormalizer> n) { normalizer_ = std::move(n); }
  const std::shared_ptr<const RunningNormalizer>& normalizer() const { return normalizer_; }

 protected:
  Eigen::VectorXd finish_observation(const Eigen::VectorXd& raw) const;

 private:
  std::shared_ptr<const RunningNormalizer> normalizer_;
};

}  // namespace quadrl
