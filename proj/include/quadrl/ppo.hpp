#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "quadrl/nn.hpp"

namespace quadrl::ppo {

struct PpoConfig {
  double lr = 1e-4;
  bool anneal_lr = true;  // linear decay to 0 over the train() step budget
  int epochs = 10;
  int minibatch = 128;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double value_coef = 1.0;
  double entropy_coef = 0.0;
  int horizon = 4096;  // transitions per iteration, summed over workers
  int workers = 8;
  double max_grad_norm = 0.0;  // 0 disables clipping
  bool normalize_advantages = true;
  double log_std_init = -1.0;  // initial std ~0.37 in [-1, 1] action units
  double log_std_min = -5.0;
  double log_std_max = 1.0;
  std::vector<int> hidden{200, 100};
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

/// Gaussian policy with a tanh-bounded mean and a state-independent log-std,
/// plus the value network. The flat parameter vector is
/// [actor | log_std | critic].
struct Policy {
  nn::Mlp actor;
  nn::Mlp critic;
  Eigen::VectorXd log_std;

  static Policy create(int obs_dim, int act_dim, const std::vector<int>& hidden, double log_std_init);
  /// Random actor/critic weights; the actor's last layer is scaled down.
  void initialize(std::mt19937_64& rng);

  int observation_dim() const { return actor.input_dim(); }
  int action_dim() const { return actor.output_dim(); }
  Eigen::Index num_params() const;
  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& theta);

  Eigen::VectorXd mean(const Eigen::VectorXd& obs) const { return actor.forward(obs); }
  double value(const Eigen::VectorXd& obs) const { return critic.forward(obs)[0]; }
};

double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, const Eigen::VectorXd& x);
double gaussian_entropy(const Eigen::VectorXd& log_std);

struct ActionSample {
  Eigen::VectorXd raw;      // Gaussian draw; what the likelihood refers to
  Eigen::VectorXd action;   // raw clamped to [-1, 1]; what the env receives
  double log_prob = 0.0;    // of `raw` under the pre-clamp Gaussian
  double value = 0.0;
};

/// Deterministic mode returns the mean with log_prob of the mean.
ActionSample policy_sample(const Policy& policy, const Eigen::VectorXd& obs, std::mt19937_64& rng,
                           bool deterministic = false);

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

/// dones[t] marks that the episode ended after transition t (no bootstrap
/// across it); `bootstrap_value` is V of the state after the last transition.
GaeResult gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, const std::vector<std::uint8_t>& dones,
              double bootstrap_value, double gamma, double lambda);

/// min(r A, clip(r, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double eps);

/// Zero mean, unit (population) standard deviation.
Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& adv);

struct Batch {
  nn::RowMatrix observations;  // N x obs_dim
  nn::RowMatrix actions;       // N x act_dim, pre-clamp samples
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  Eigen::Index size() const { return observations.rows(); }
  Batch subset(const std::vector<Eigen::Index>& rows) const;
};

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;    // -mean clipped surrogate
  double value = 0.0;     // mean squared value error (before value_coef)
  double entropy = 0.0;
  double approx_kl = 0.0; // mean(old_log_prob - new_log_prob)
  double clip_fraction = 0.0;
};

/// Loss = -mean(L_clip) + c1 * mean((V - R)^2) - c_ent * entropy. When `grad`
/// is given it receives dLoss/dtheta in Policy::flat() layout.
LossTerms ppo_loss(const Policy& policy, const Batch& batch, const PpoConfig& cfg, Eigen::VectorXd* grad = nullptr);

}  // namespace quadrl::ppo
