#include "quadrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <thread>

#include "quadrl/common.hpp"

namespace quadrl::ppo {

namespace {
constexpr std::size_t kEpisodeWindow = 20;

std::mt19937_64 worker_rng(std::uint64_t seed, int worker) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(worker), 0x9e3779b9u};
  return std::mt19937_64(seq);
}
}  // namespace

struct PpoTrainer::Worker {
  std::unique_ptr<Environment> env;
  std::mt19937_64 rng;
  Eigen::VectorXd raw_obs;
  double ep_reward = 0.0;
  double ep_length = 0.0;
  double ep_distance = 0.0;

  // Filled by collect().
  nn::RowMatrix obs;
  nn::RowMatrix actions;
  Eigen::VectorXd log_probs;
  Eigen::VectorXd values;
  Eigen::VectorXd rewards;
  std::vector<std::uint8_t> dones;
  double bootstrap = 0.0;
  RunningNormalizer stats;
  std::vector<Episode> finished;
  long substeps = 0;
  long airborne = 0;
  double max_abs_torque = 0.0;
  bool speed_rule_ok = true;
};

PpoTrainer::PpoTrainer(EnvFactory factory, PpoConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
  for (int i = 0; i < cfg_.workers; ++i) {
    auto w = std::make_unique<Worker>();
    w->env = factory(i);
    if (!w->env) throw ConfigError("environment factory returned null");
    w->rng = worker_rng(cfg_.seed, i);
    workers_.push_back(std::move(w));
  }
  const int obs_dim = workers_.front()->env->observation_dim();
  const int act_dim = workers_.front()->env->action_dim();
  policy_ = Policy::create(obs_dim, act_dim, cfg_.hidden, cfg_.log_std_init);
  policy_.initialize(rng_);
  normalizer_ = RunningNormalizer(obs_dim);
  adam_ = nn::Adam(policy_.num_params(), nn::AdamConfig{cfg_.lr});
  for (auto& w : workers_) {
    w->env->reset(w->rng);
    w->raw_obs = w->env->raw_observation();
  }
}

PpoTrainer::~PpoTrainer() = default;

Checkpoint PpoTrainer::checkpoint() const {
  Checkpoint ck;
  ck.policy = policy_;
  ck.normalizer = normalizer_;
  ck.iteration = iteration_;
  ck.total_steps = total_steps_;
  return ck;
}

void PpoTrainer::collect(Worker& w, int steps, const Policy& policy,
                         const std::shared_ptr<const RunningNormalizer>& norm) {
  Environment& env = *w.env;
  env.set_normalizer(norm);
  const int od = env.observation_dim();
  const int ad = env.action_dim();
  w.obs.resize(steps, od);
  w.actions.resize(steps, ad);
  w.log_probs.resize(steps);
  w.values.resize(steps);
  w.rewards.resize(steps);
  w.dones.assign(steps, 0);
  w.stats = RunningNormalizer(od, normalizer_.clip());
  w.finished.clear();
  w.substeps = w.airborne = 0;
  w.max_abs_torque = 0.0;
  w.speed_rule_ok = true;

  Eigen::VectorXd obs = norm->normalize(w.raw_obs);
  for (int t = 0; t < steps; ++t) {
    const ActionSample s = policy_sample(policy, obs, w.rng);
    StepResult r = env.step(s.action);
    w.obs.row(t) = obs.transpose();
    w.actions.row(t) = s.raw.transpose();
    w.log_probs[t] = s.log_prob;
    w.values[t] = s.value;
    w.rewards[t] = r.reward;
    w.dones[t] = r.done ? 1 : 0;
    w.stats.update(r.raw_observation);
    w.substeps += r.info.substeps;
    w.airborne += r.info.airborne_substeps;
    w.max_abs_torque = std::max(w.max_abs_torque, r.info.max_abs_torque);
    w.speed_rule_ok = w.speed_rule_ok && r.info.speed_rule_ok;
    w.ep_reward += r.reward;
    w.ep_length += 1.0;
    w.ep_distance += r.info.forward_progress;
    if (r.done) {
      w.finished.push_back({w.ep_reward, w.ep_length, w.ep_distance / (w.ep_length * env.control_period())});
      w.ep_reward = w.ep_length = w.ep_distance = 0.0;
      obs = env.reset(w.rng);
      w.stats.update(env.raw_observation());
    } else {
      obs = std::move(r.observation);
    }
  }
  w.raw_obs = env.raw_observation();
  w.bootstrap = policy.value(obs);
}

LossTerms PpoTrainer::update(const Batch& batch) {
  const Eigen::Index n = batch.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd theta = policy_.flat();
  Eigen::VectorXd grad;
  const Eigen::Index na = policy_.actor.num_params();
  const Eigen::Index ns = policy_.log_std.size();
  LossTerms mean;
  int updates = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (Eigen::Index start = 0; start < n; start += cfg_.minibatch) {
      const Eigen::Index end = std::min<Eigen::Index>(n, start + cfg_.minibatch);
      const std::vector<Eigen::Index> rows(order.begin() + start, order.begin() + end);
      const LossTerms l = ppo_loss(policy_, batch.subset(rows), cfg_, &grad);
      if (!grad.allFinite()) throw TrainingDiverged("non-finite gradient at iteration " + std::to_string(iteration_));
      if (cfg_.max_grad_norm > 0.0) {
        const double norm = grad.norm();
        if (norm > cfg_.max_grad_norm) grad *= cfg_.max_grad_norm / norm;
      }
      adam_.step(theta, grad);
      theta.segment(na, ns) = theta.segment(na, ns).cwiseMax(cfg_.log_std_min).cwiseMin(cfg_.log_std_max);
      policy_.set_flat(theta);
      mean.total += l.total;
      mean.policy += l.policy;
      mean.value += l.value;
      mean.entropy += l.entropy;
      mean.approx_kl += l.approx_kl;
      mean.clip_fraction += l.clip_fraction;
      ++updates;
    }
  }
  const double inv = 1.0 / std::max(1, updates);
  mean.total *= inv;
  mean.policy *= inv;
  mean.value *= inv;
  mean.entropy *= inv;
  mean.approx_kl *= inv;
  mean.clip_fraction *= inv;
  if (!theta.allFinite()) throw TrainingDiverged("non-finite parameters at iteration " + std::to_string(iteration_));
  return mean;
}

IterationMetrics PpoTrainer::iterate() {
  if (cfg_.anneal_lr && budget_ > 0) {
    const double left = 1.0 - static_cast<double>(total_steps_) / static_cast<double>(budget_);
    adam_.set_lr(cfg_.lr * std::clamp(left, 0.0, 1.0));
  }
  const int nw = static_cast<int>(workers_.size());
  const Policy snapshot = policy_;
  const auto norm = std::make_shared<const RunningNormalizer>(normalizer_);
  std::vector<int> steps(nw, cfg_.horizon / nw);
  for (int i = 0; i < cfg_.horizon % nw; ++i) ++steps[i];

  if (nw == 1) {
    collect(*workers_[0], steps[0], snapshot, norm);
  } else {
    std::vector<std::exception_ptr> errors(nw);
    std::vector<std::thread> threads;
    threads.reserve(nw);
    for (int i = 0; i < nw; ++i) {
      threads.emplace_back([&, i] {
        try {
          collect(*workers_[i], steps[i], snapshot, norm);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Assemble in worker order so the batch is independent of scheduling.
  Batch batch;
  const int od = policy_.observation_dim();
  const int ad = policy_.action_dim();
  batch.observations.resize(cfg_.horizon, od);
  batch.actions.resize(cfg_.horizon, ad);
  batch.old_log_probs.resize(cfg_.horizon);
  batch.advantages.resize(cfg_.horizon);
  batch.returns.resize(cfg_.horizon);
  IterationMetrics m;
  long substeps = 0;
  long airborne = 0;
  Eigen::Index row = 0;
  for (auto& wp : workers_) {
    Worker& w = *wp;
    const Eigen::Index k = w.rewards.size();
    const GaeResult g = gae(w.rewards, w.values, w.dones, w.bootstrap, cfg_.gamma, cfg_.lambda);
    batch.observations.middleRows(row, k) = w.obs;
    batch.actions.middleRows(row, k) = w.actions;
    batch.old_log_probs.segment(row, k) = w.log_probs;
    batch.advantages.segment(row, k) = g.advantages;
    batch.returns.segment(row, k) = g.returns;
    row += k;
    normalizer_.merge(w.stats);
    for (const Episode& e : w.finished) {
      recent_.push_back(e);
      if (recent_.size() > kEpisodeWindow) recent_.pop_front();
    }
    m.episodes += static_cast<int>(w.finished.size());
    substeps += w.substeps;
    airborne += w.airborne;
    m.max_abs_torque = std::max(m.max_abs_torque, w.max_abs_torque);
    m.speed_rule_ok = m.speed_rule_ok && w.speed_rule_ok;
  }
  if (cfg_.normalize_advantages) batch.advantages = normalize_advantages(batch.advantages);

  m.loss = update(batch);
  ++iteration_;
  total_steps_ += static_cast<std::uint64_t>(cfg_.horizon);
  m.iteration = iteration_;
  m.total_steps = total_steps_;
  m.airborne_fraction = substeps > 0 ? static_cast<double>(airborne) / static_cast<double>(substeps) : 0.0;
  if (!recent_.empty()) {
    m.max_episode_reward = -std::numeric_limits<double>::infinity();
    for (const Episode& e : recent_) {
      m.mean_episode_reward += e.reward;
      m.mean_episode_length += e.length;
      m.mean_speed += e.speed;
      m.max_episode_reward = std::max(m.max_episode_reward, e.reward);
    }
    const double inv = 1.0 / static_cast<double>(recent_.size());
    m.mean_episode_reward *= inv;
    m.mean_episode_length *= inv;
    m.mean_speed *= inv;
  }
  return m;
}

void PpoTrainer::train(std::uint64_t total_steps, const std::function<void(const IterationMetrics&)>& on_iteration) {
  budget_ = total_steps;
  while (total_steps_ < total_steps) {
    const IterationMetrics m = iterate();
    if (on_iteration) on_iteration(m);
  }
  budget_ = 0;
}

void write_metrics_header(std::ostream& out) {
  out << "iteration,total_steps,episodes,mean_episode_reward,max_episode_reward,mean_speed,mean_episode_length,"
         "airborne_fraction,max_abs_torque,loss_total,loss_policy,loss_value,entropy,approx_kl,clip_fraction\n";
}

void write_metrics_row(std::ostream& out, const IterationMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%llu,%llu,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                static_cast<unsigned long long>(m.iteration), static_cast<unsigned long long>(m.total_steps),
                m.episodes, m.mean_episode_reward, m.max_episode_reward, m.mean_speed, m.mean_episode_length,
                m.airborne_fraction, m.max_abs_torque, m.loss.total, m.loss.policy, m.loss.value, m.loss.entropy,
                m.loss.approx_kl, m.loss.clip_fraction);
  out << buf;
}

}  // namespace quadrl::ppo
