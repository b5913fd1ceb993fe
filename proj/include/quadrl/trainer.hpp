#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <vector>

#include "quadrl/checkpoint.hpp"
#include "quadrl/environment.hpp"
#include "quadrl/normalizer.hpp"
#include "quadrl/ppo.hpp"

namespace quadrl::ppo {

/// Builds the environment owned by one rollout worker.
using EnvFactory = std::function<std::unique_ptr<Environment>(int worker)>;

struct IterationMetrics {
  std::uint64_t iteration = 0;
  std::uint64_t total_steps = 0;
  int episodes = 0;                  // completed during this iteration
  double mean_episode_reward = 0.0;  // over the recent-episode window
  double max_episode_reward = 0.0;
  double mean_speed = 0.0;           // m/s, distance / duration per episode
  double mean_episode_length = 0.0;  // policy steps
  double airborne_fraction = 0.0;    // physics substeps with no foot in contact
  double max_abs_torque = 0.0;
  bool speed_rule_ok = true;
  LossTerms loss;                    // averaged over the update's minibatches
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const IterationMetrics& m);

/// Synchronous PPO: each iteration the workers collect horizon/workers steps
/// with a frozen copy of the policy and normalizer, then a single thread
/// runs the epochs of minibatch Adam updates. Results depend on the seed and
/// worker count only, never on thread scheduling.
class PpoTrainer {
 public:
  PpoTrainer(EnvFactory factory, PpoConfig cfg);
  ~PpoTrainer();

  IterationMetrics iterate();
  /// Iterates until at least `total_steps` transitions have been collected,
  /// calling `on_iteration` after each one. Zero steps leaves the policy as
  /// initialized.
  void train(std::uint64_t total_steps, const std::function<void(const IterationMetrics&)>& on_iteration = {});

  const Policy& policy() const { return policy_; }
  const RunningNormalizer& normalizer() const { return normalizer_; }
  const PpoConfig& config() const { return cfg_; }
  std::uint64_t iteration() const { return iteration_; }
  std::uint64_t total_steps() const { return total_steps_; }
  /// Step size used by the most recent update.
  double learning_rate() const { return adam_.lr(); }
  Checkpoint checkpoint() const;

 private:
  struct Worker;
  struct Episode {
    double reward;
    double length;
    double speed;
  };

  void collect(Worker& w, int steps, const Policy& policy, const std::shared_ptr<const RunningNormalizer>& norm);
  LossTerms update(const Batch& batch);

  PpoConfig cfg_;
  Policy policy_;
  RunningNormalizer normalizer_;
  nn::Adam adam_;
  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::deque<Episode> recent_;
  std::uint64_t iteration_ = 0;
  std::uint64_t total_steps_ = 0;
  std::uint64_t budget_ = 0;  // step budget of the running train() call, 0 outside it
};

}  // namespace quadrl::ppo
