#include "quadrl/ppo.hpp"

#include <algorithm>
#include <cmath>

#include "quadrl/common.hpp"

namespace quadrl::ppo {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
}

void PpoConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("ppo: ") + what);
  };
  require(lr > 0.0, "lr must be positive");
  require(epochs >= 1, "epochs must be >= 1");
  require(minibatch >= 1, "minibatch must be >= 1");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0, 1]");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0, 1]");
  require(clip > 0.0, "clip must be positive");
  require(value_coef >= 0.0 && entropy_coef >= 0.0, "loss coefficients must be non-negative");
  require(horizon >= 1, "horizon must be >= 1");
  require(workers >= 1 && workers <= horizon, "workers must be in [1, horizon]");
  require(max_grad_norm >= 0.0, "max_grad_norm must be non-negative");
  require(log_std_min < log_std_max, "log_std range is empty");
  require(!hidden.empty(), "at least one hidden layer is required");
  for (int h : hidden) require(h > 0, "hidden sizes must be positive");
}

Policy Policy::create(int obs_dim, int act_dim, const std::vector<int>& hidden, double log_std_init) {
  std::vector<int> a{obs_dim};
  a.insert(a.end(), hidden.begin(), hidden.end());
  std::vector<int> c = a;
  a.push_back(act_dim);
  c.push_back(1);
  Policy p;
  p.actor = nn::Mlp(a, nn::Activation::Tanh, nn::Activation::Tanh);
  p.critic = nn::Mlp(c, nn::Activation::Tanh, nn::Activation::Identity);
  p.log_std = Eigen::VectorXd::Constant(act_dim, log_std_init);
  return p;
}

void Policy::initialize(std::mt19937_64& rng) {
  actor.initialize(rng, 0.01);
  critic.initialize(rng, 1.0);
}

Eigen::Index Policy::num_params() const { return actor.num_params() + log_std.size() + critic.num_params(); }

Eigen::VectorXd Policy::flat() const {
  Eigen::VectorXd theta(num_params());
  theta << actor.params(), log_std, critic.params();
  return theta;
}

void Policy::set_flat(const Eigen::VectorXd& theta) {
  if (theta.size() != num_params()) throw Error("Policy::set_flat: size mismatch");
  const Eigen::Index na = actor.num_params();
  const Eigen::Index ns = log_std.size();
  actor.params() = theta.head(na);
  log_std = theta.segment(na, ns);
  critic.params() = theta.tail(critic.num_params());
}

double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, const Eigen::VectorXd& x) {
  const Eigen::ArrayXd z = (x - mean).array() * (-log_std.array()).exp();
  return -0.5 * z.square().sum() - log_std.sum() - 0.5 * static_cast<double>(x.size()) * kLog2Pi;
}

double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * (1.0 + kLog2Pi);
}

ActionSample policy_sample(const Policy& policy, const Eigen::VectorXd& obs, std::mt19937_64& rng,
                           bool deterministic) {
  ActionSample s;
  const Eigen::VectorXd mu = policy.mean(obs);
  s.value = policy.value(obs);
  if (deterministic) {
    s.raw = mu;
  } else {
    std::normal_distribution<double> n(0.0, 1.0);
    s.raw.resize(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) s.raw[i] = mu[i] + std::exp(policy.log_std[i]) * n(rng);
  }
  s.log_prob = gaussian_log_prob(mu, policy.log_std, s.raw);
  s.action = s.raw.cwiseMax(-1.0).cwiseMin(1.0);
  return s;
}

GaeResult gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, const std::vector<std::uint8_t>& dones,
              double bootstrap_value, double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n) {
    throw Error("gae: sequences must have equal length");
  }
  GaeResult out;
  out.advantages.resize(n);
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[t] = next_adv;
    next_value = values[t];
  }
  out.returns = out.advantages + values;
  return out;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& adv) {
  if (adv.size() == 0) return adv;
  const double mean = adv.mean();
  const Eigen::VectorXd centered = adv.array() - mean;
  const double std = std::sqrt(centered.squaredNorm() / static_cast<double>(adv.size()));
  return centered / (std + 1e-8);
}

Batch Batch::subset(const std::vector<Eigen::Index>& rows) const {
  Batch b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  b.observations.resize(n, observations.cols());
  b.actions.resize(n, actions.cols());
  b.old_log_probs.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[i];
    b.observations.row(i) = observations.row(r);
    b.actions.row(i) = actions.row(r);
    b.old_log_probs[i] = old_log_probs[r];
    b.advantages[i] = advantages[r];
    b.returns[i] = returns[r];
  }
  return b;
}

LossTerms ppo_loss(const Policy& policy, const Batch& batch, const PpoConfig& cfg, Eigen::VectorXd* grad) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw Error("ppo_loss: empty batch");
  const Eigen::Index k = policy.action_dim();
  const double inv_n = 1.0 / static_cast<double>(n);

  nn::Mlp::Tape actor_tape;
  nn::Mlp::Tape critic_tape;
  const nn::RowMatrix mean = policy.actor.forward(batch.observations, grad ? &actor_tape : nullptr);
  const nn::RowMatrix value = policy.critic.forward(batch.observations, grad ? &critic_tape : nullptr);

  const Eigen::RowVectorXd inv_sigma = (-policy.log_std.array()).exp().matrix().transpose();
  const double log_norm = policy.log_std.sum() + 0.5 * static_cast<double>(k) * kLog2Pi;

  LossTerms out;
  nn::RowMatrix d_mean(n, k);
  Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(k);
  nn::RowMatrix d_value(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd z = (batch.actions.row(i) - mean.row(i)).cwiseProduct(inv_sigma);
    const double log_prob = -0.5 * z.squaredNorm() - log_norm;
    const double ratio = std::exp(log_prob - batch.old_log_probs[i]);
    const double adv = batch.advantages[i];
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const bool unclipped_active = ratio * adv <= clipped * adv;
    out.policy -= std::min(ratio * adv, clipped * adv) * inv_n;
    out.approx_kl += (batch.old_log_probs[i] - log_prob) * inv_n;
    if (std::abs(ratio - 1.0) > cfg.clip) out.clip_fraction += inv_n;

    const double g = unclipped_active ? -ratio * adv * inv_n : 0.0;  // dLoss/dlog_prob
    d_mean.row(i) = g * z.cwiseProduct(inv_sigma);
    d_log_std += g * (z.array().square() - 1.0).matrix().transpose();

    const double err = value(i, 0) - batch.returns[i];
    out.value += err * err * inv_n;
    d_value(i, 0) = cfg.value_coef * 2.0 * err * inv_n;
  }
  out.entropy = gaussian_entropy(policy.log_std);
  out.total = out.policy + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;
  if (!std::isfinite(out.total)) throw TrainingDiverged("ppo_loss: non-finite loss");

  if (grad) {
    grad->setZero(policy.num_params());
    const Eigen::Index na = policy.actor.num_params();
    policy.actor.backward(actor_tape, d_mean, grad->head(na));
    grad->segment(na, k) = d_log_std - Eigen::VectorXd::Constant(k, cfg.entropy_coef);
    policy.critic.backward(critic_tape, d_value, grad->tail(policy.critic.num_params()));
  }
  return out;
}

}  // namespace quadrl::ppo
