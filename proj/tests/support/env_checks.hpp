#pragma once

// Environment scenario runners shared by the unit tests and the acceptance
// binary. Callers apply the tolerances.

#include <algorithm>
#include <cmath>
#include <random>

#include "quadrl/env.hpp"

namespace quadrl::testing {

struct FuzzReport {
  long steps = 0;
  long episodes = 0;
  double max_progress_reward = -1e300;
  double max_reward_identity_error = 0.0;  // |r - (w1 min(dx, d) - w2 E + s + fall)|
  double min_energy = 1e300;
  double max_abs_torque = 0.0;
  bool speed_rule_ok = true;
  bool observation_length_ok = true;
  bool finite = true;
};

/// Random actions (uniform in [-1.2, 1.2], so clamping is exercised) over
/// fully randomized episodes until `steps` transitions have run.
inline FuzzReport reward_fuzz(long steps, std::uint64_t seed, EnvConfig cfg = {}) {
  QuadrupedEnv env(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  FuzzReport rep;
  env.reset(rng);
  ++rep.episodes;
  Eigen::VectorXd a(kActionDim);
  while (rep.steps < steps) {
    for (double& x : a) x = u(rng);
    const StepResult r = env.step(a);
    ++rep.steps;
    const StepInfo& i = r.info;
    const RewardWeights& w = cfg.reward;
    rep.max_progress_reward = std::max(rep.max_progress_reward, progress_reward(i.forward_progress, w));
    const double expected = w.progress * std::min(i.forward_progress, w.max_progress) - w.energy * i.energy +
                            w.survival + (i.fell ? w.fall_penalty : 0.0);
    rep.max_reward_identity_error = std::max(rep.max_reward_identity_error, std::abs(r.reward - expected));
    rep.min_energy = std::min(rep.min_energy, i.energy);
    rep.max_abs_torque = std::max(rep.max_abs_torque, i.max_abs_torque);
    rep.speed_rule_ok = rep.speed_rule_ok && i.speed_rule_ok;
    rep.observation_length_ok = rep.observation_length_ok && r.observation.size() == kObservationDim &&
                                r.raw_observation.size() == kObservationDim;
    rep.finite = rep.finite && std::isfinite(r.reward) && r.raw_observation.allFinite();
    if (r.done) {
      env.reset(rng);
      ++rep.episodes;
    }
  }
  return rep;
}

struct TimeFeatureReport {
  int steps = 0;
  int steps_after_hold = 0;               // steps with t > 8 s
  double max_hold_error = 0.0;            // |feature - 2| once t > 8 s
  double max_early_error = 0.0;           // |feature - (10 - t)| before that
  bool observation_length_ok = true;
  bool fell = false;
};

/// Eval-mode episode of `steps` policy steps on the nominal robot standing
/// still (zero action), tracking the time feature (last observation entry).
inline TimeFeatureReport eval_time_feature(int steps = 1200) {
  EnvConfig cfg;
  cfg.randomization = RandomizationConfig::none();
  cfg.observation.mode = ObservationMode::Eval;
  cfg.horizon = steps;
  QuadrupedEnv env(cfg);
  std::mt19937_64 rng(3);
  env.reset(rng);
  TimeFeatureReport rep;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(kActionDim);
  for (int k = 0; k < steps; ++k) {
    const StepResult r = env.step(zero);
    ++rep.steps;
    rep.observation_length_ok = rep.observation_length_ok && r.raw_observation.size() == kObservationDim;
    const double t = env.episode_time();
    const double feature = r.raw_observation[kObservationDim - 1];
    if (t > 8.0) {
      ++rep.steps_after_hold;
      rep.max_hold_error = std::max(rep.max_hold_error, std::abs(feature - 2.0));
    } else {
      rep.max_early_error = std::max(rep.max_early_error, std::abs(feature - (10.0 - t)));
    }
    if (r.done) {
      rep.fell = r.info.fell;
      break;
    }
  }
  return rep;
}

}  // namespace quadrl::testing
