#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "quadrl/checkpoint.hpp"
#include "quadrl/common.hpp"
#include "quadrl/trainer.hpp"
#include "support/ppo_checks.hpp"
#include "support/toy_env.hpp"

using namespace quadrl;
using namespace quadrl::ppo;
using namespace quadrl::testing;


TEST_CASE("GAE hand examples") {
  std::vector<std::uint8_t> one{0};
  CHECK(gae(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), one, 0.0, 0.99, 0.95).advantages[0] == 1.0);
  const GaeResult g = gae(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2), {0, 0}, 0.0, 0.99, 0.95);
  CHECK(std::abs(g.advantages[0] - 1.9405) < 1e-12);
  CHECK(std::abs(g.advantages[1] - 1.0) < 1e-12);
  CHECK((g.returns - g.advantages).norm() == 0.0);
}

TEST_CASE("GAE equals the brute-force discounted sum") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::bernoulli_distribution end(0.1);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 64;
    Eigen::VectorXd r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (int t = 0; t < n; ++t) {
      r[t] = u(rng);
      v[t] = u(rng);
      d[t] = end(rng);
    }
    const double boot = u(rng);
    const double gamma = 0.9 + 0.1 * std::abs(u(rng)) / 2;
    const double lambda = std::abs(u(rng)) / 2;
    const GaeResult g = gae(r, v, d, boot, gamma, lambda);
    worst = std::max(worst, (g.advantages - brute_force_gae(r, v, d, boot, gamma, lambda)).cwiseAbs().maxCoeff());
    CHECK((g.returns - (g.advantages + v)).norm() == 0.0);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("GAE rejects ragged input") {
  CHECK_THROWS_AS(gae(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(3), {0, 0}, 0, 0.99, 0.95), Error);
}

TEST_CASE("clipped surrogate hand cases") {
  CHECK(clipped_surrogate(1.0, 0.7, 0.2) == 0.7);
  CHECK(clipped_surrogate(1.0, -2.5, 0.2) == -2.5);
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == 1.2);
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == -0.8);
}

TEST_CASE("clipped surrogate never exceeds either branch") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ratio(0.0, 3.0), adv(-5.0, 5.0), eps(0.01, 0.5);
  for (int i = 0; i < 10000; ++i) {
    const double r = ratio(rng);
    const double a = adv(rng);
    const double e = eps(rng);
    const double s = clipped_surrogate(r, a, e);
    CHECK(s <= r * a);
    CHECK(s <= std::clamp(r, 1 - e, 1 + e) * a);
  }
}

TEST_CASE("advantage normalization is invariant to positive rescaling") {
  const Eigen::VectorXd a = Eigen::VectorXd::Random(300);
  const Eigen::VectorXd n1 = normalize_advantages(a);
  const Eigen::VectorXd n2 = normalize_advantages(37.5 * a);
  CHECK(std::abs(n1.mean()) < 1e-12);
  CHECK(std::sqrt(n1.squaredNorm() / 300) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((n1 - n2).cwiseAbs().maxCoeff() < 1e-6);

  std::mt19937_64 rng(12);
  const Policy p = small_policy(rng);
  Batch b = random_batch(p, rng, 64);
  PpoConfig cfg;
  Eigen::VectorXd g1, g2;
  b.advantages = normalize_advantages(b.advantages);
  ppo_loss(p, b, cfg, &g1);
  b.advantages = normalize_advantages(1e3 * b.advantages);
  ppo_loss(p, b, cfg, &g2);
  CHECK((g1 - g2).norm() <= 1e-6 * g1.norm());
}

TEST_CASE("policy sampling conventions") {
  std::mt19937_64 rng(1);
  Policy zero = Policy::create(64, 12, {200, 100}, -0.5);
  const Eigen::VectorXd obs = Eigen::VectorXd::Random(64);
  const ActionSample d = policy_sample(zero, obs, rng, true);
  CHECK(d.action.norm() == 0.0);
  CHECK(d.value == 0.0);

  Policy p = small_policy(rng);
  const Eigen::VectorXd o = Eigen::VectorXd::Random(5);
  const ActionSample det = policy_sample(p, o, rng, true);
  CHECK((det.raw - p.mean(o)).norm() == 0.0);
  for (int i = 0; i < 200; ++i) {
    const ActionSample s = policy_sample(p, o, rng);
    CHECK(s.action.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(s.log_prob == doctest::Approx(gaussian_log_prob(p.mean(o), p.log_std, s.raw)));
    CHECK((s.action - s.raw.cwiseMax(-1.0).cwiseMin(1.0)).norm() == 0.0);
  }
}

TEST_CASE("Gaussian log-density matches the closed form") {
  Eigen::VectorXd mu(2), ls(2), x(2);
  mu << 0.1, -0.2;
  ls << -0.5, 0.3;
  x << 0.4, 0.0;
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double s = std::exp(ls[i]);
    expected += -0.5 * std::pow((x[i] - mu[i]) / s, 2) - std::log(s * std::sqrt(2 * kPi));
  }
  CHECK(gaussian_log_prob(mu, ls, x) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("ratio one makes the surrogate equal the advantage") {
  std::mt19937_64 rng(2);
  const Policy p = small_policy(rng);
  Batch b = random_batch(p, rng, 16);
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    b.old_log_probs[i] = gaussian_log_prob(p.mean(b.observations.row(i).transpose()), p.log_std,
                                           b.actions.row(i).transpose());
  }
  PpoConfig cfg;
  cfg.value_coef = 0.0;
  const LossTerms l = ppo_loss(p, b, cfg);
  CHECK(l.policy == doctest::Approx(-b.advantages.mean()).epsilon(1e-12));
  CHECK(std::abs(l.approx_kl) < 1e-12);
  CHECK(l.clip_fraction == 0.0);
}

TEST_CASE("loss gradient matches central finite differences") {
  CHECK(loss_gradient_error(3, 3) < 1e-4);
}

TEST_CASE("unclipped single-epoch update is the vanilla policy gradient") {
  std::mt19937_64 rng(8);
  const Policy p = small_policy(rng);
  Batch b = random_batch(p, rng, 24);
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    b.old_log_probs[i] = gaussian_log_prob(p.mean(b.observations.row(i).transpose()), p.log_std,
                                           b.actions.row(i).transpose());
  }
  PpoConfig cfg;
  cfg.clip = std::numeric_limits<double>::infinity();
  cfg.value_coef = 0.0;
  Eigen::VectorXd ppo_grad;
  ppo_loss(p, b, cfg, &ppo_grad);

  // -mean_i A_i grad log pi(a_i | s_i), assembled one sample at a time.
  Eigen::VectorXd vpg = Eigen::VectorXd::Zero(p.num_params());
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    Batch one = b.subset({i});
    const double a = one.advantages[0];
    one.advantages[0] = 1.0;
    Eigen::VectorXd g;  // = -grad log pi for ratio one
    ppo_loss(p, one, cfg, &g);
    vpg += a * g / static_cast<double>(b.size());
  }
  CHECK((ppo_grad - vpg).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("normalizer merge equals sequential updates") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(3.0, 2.0);
  RunningNormalizer all(4), a(4), b(4);
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd x(4);
    for (double& v : x) v = n(rng);
    all.update(x);
    (i < 300 ? a : b).update(x);
  }
  RunningNormalizer merged = a;
  merged.merge(b);
  CHECK(merged.count() == all.count());
  CHECK((merged.mean() - all.mean()).norm() < 1e-12);
  CHECK((merged.m2() - all.m2()).norm() < 1e-8);
  RunningNormalizer empty(4);
  empty.merge(all);
  CHECK((empty.mean() - all.mean()).norm() == 0.0);
}

TEST_CASE("normalizer clips and starts as identity") {
  RunningNormalizer n(2, 10.0);
  Eigen::VectorXd x(2);
  x << 0.5, -3.0;
  CHECK((n.normalize(x) - x).norm() < 1e-7);
  n.update(Eigen::Vector2d(0, 0));
  n.update(Eigen::Vector2d(2, 2));
  x << 1e6, 1.0;
  const Eigen::VectorXd z = n.normalize(x);
  CHECK(z[0] == 10.0);
  CHECK(z[1] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("checkpoint round trip is exact") {
  std::mt19937_64 rng(9);
  Checkpoint ck;
  ck.policy = Policy::create(64, 12, {200, 100}, -0.5);
  ck.policy.initialize(rng);
  ck.normalizer = RunningNormalizer(64);
  for (int i = 0; i < 10; ++i) ck.normalizer.update(Eigen::VectorXd::Random(64));
  ck.iteration = 17;
  ck.total_steps = 17 * 4096;
  std::stringstream buf;
  write_checkpoint(buf, ck);
  const std::string bytes = buf.str();
  const std::size_t expected_size = 8 + 4 + 4 + 8 + 8 + 4 + 4 * 4 + 4 + 4 * 4 + 4 * 4 + 8 + 8 + 64 * 8 * 2 + 12 * 8 +
                                    8 * static_cast<std::size_t>(ck.policy.actor.num_params() +
                                                                 ck.policy.critic.num_params()) +
                                    8;
  CHECK(bytes.size() == expected_size);
  CHECK(bytes.substr(0, 8) == "QUADRLCK");

  std::stringstream in(bytes);
  const Checkpoint back = read_checkpoint(in);
  CHECK(back.iteration == 17);
  CHECK(back.total_steps == ck.total_steps);
  CHECK(back.policy.flat() == ck.policy.flat());
  CHECK(back.normalizer.mean() == ck.normalizer.mean());
  CHECK(back.normalizer.m2() == ck.normalizer.m2());
  CHECK(back.normalizer.count() == ck.normalizer.count());
  CHECK(describe_checkpoint(back).find("64-200-100-12") != std::string::npos);
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::mt19937_64 rng(10);
  Checkpoint ck;
  ck.policy = Policy::create(5, 3, {8}, -0.5);
  ck.policy.initialize(rng);
  ck.normalizer = RunningNormalizer(5);
  std::stringstream buf;
  write_checkpoint(buf, ck);
  const std::string good = buf.str();
  auto read = [](std::string s) {
    std::stringstream in(s);
    return read_checkpoint(in);
  };
  CHECK_NOTHROW(read(good));
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(read(bad), CheckpointError);
  bad = good;
  bad[8] = 2;  // version
  CHECK_THROWS_WITH_AS(read(bad), doctest::Contains("unsupported version"), CheckpointError);
  bad = good;
  bad[good.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(read(bad), CheckpointError);
  CHECK_THROWS_AS(read(good.substr(0, good.size() - 3)), CheckpointError);
  CHECK_THROWS_AS(read(good + "x"), CheckpointError);
}

TEST_CASE("zero training steps keep the initial policy") {
  PpoConfig cfg;
  cfg.workers = 2;
  cfg.horizon = 64;
  auto factory = [](int) { return std::make_unique<testing::LqEnv>(); };
  PpoTrainer a(factory, cfg);
  PpoTrainer b(factory, cfg);
  a.train(0);
  CHECK(a.iteration() == 0);
  CHECK(a.policy().flat() == b.policy().flat());
}

TEST_CASE("training is reproducible for a fixed seed and worker count") {
  PpoConfig cfg;
  cfg.workers = 3;
  cfg.horizon = 300;
  cfg.minibatch = 50;
  cfg.epochs = 2;
  cfg.hidden = {16, 16};
  auto factory = [](int) { return std::make_unique<testing::LqEnv>(); };
  auto run = [&] {
    PpoTrainer t(factory, cfg);
    std::ostringstream out;
    t.train(900, [&](const IterationMetrics& m) { write_metrics_row(out, m); });
    return std::make_pair(out.str(), t.policy().flat());
  };
  const auto r1 = run();
  const auto r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}

TEST_CASE("learning rate decays linearly over the train() budget") {
  PpoConfig cfg;
  cfg.workers = 1;
  cfg.horizon = 100;
  cfg.minibatch = 50;
  cfg.epochs = 1;
  cfg.hidden = {8};
  auto factory = [](int) { return std::make_unique<testing::LqEnv>(); };

  PpoTrainer t(factory, cfg);
  std::vector<double> lrs;
  t.train(400, [&](const IterationMetrics&) { lrs.push_back(t.learning_rate()); });
  REQUIRE(lrs.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(lrs[k] == doctest::Approx(cfg.lr * (1.0 - 0.25 * k)).epsilon(1e-12));

  // Outside train() and with annealing off the rate stays at its base value.
  cfg.anneal_lr = false;
  PpoTrainer c(factory, cfg);
  c.train(300, [&](const IterationMetrics&) { CHECK(c.learning_rate() == cfg.lr); });
  PpoConfig annealed = cfg;
  annealed.anneal_lr = true;
  PpoTrainer d(factory, annealed);
  d.iterate();
  CHECK(d.learning_rate() == cfg.lr);
}

TEST_CASE("invalid PPO configuration is rejected") {
  PpoConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PpoConfig{};
  cfg.workers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("PPO solves a linear-quadratic task to near optimality") {
  const ppo::PpoConfig cfg = testing::lq_ppo_config();
  PpoTrainer t([](int) { return std::make_unique<testing::LqEnv>(); }, cfg);
  const double before = testing::lq_optimality(t.policy(), t.normalizer());
  t.train(200000);
  const double after = testing::lq_optimality(t.policy(), t.normalizer());
  MESSAGE("LQ optimality " << before << " -> " << after);
  CHECK(t.total_steps() <= 200000);
  CHECK(after >= 0.95);
}
