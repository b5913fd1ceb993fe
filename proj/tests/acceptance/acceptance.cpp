// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//
//   acceptance [--only 1,2,...] [--cli path/to/quadrl] [--work dir] [--reuse]
//
// Criteria 6-8 train two 2M-step policies; --reuse loads them from the work
// directory when a previous run with the identical config finished.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "quadrl/experiment.hpp"
#include "quadrl/model.hpp"
#include "quadrl/plot.hpp"
#include "support/dynamics_checks.hpp"
#include "support/env_checks.hpp"
#include "support/oracles.hpp"
#include "support/ppo_checks.hpp"

using namespace quadrl;
using namespace quadrl::experiment;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

std::string fix(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& note) {
    pass = pass && ok;
    notes.push_back(note + (ok ? "" : " [FAILED]"));
  }
  void info(const std::string& note) { notes.push_back(note); }
};

struct Options {
  std::set<int> only;
  std::string cli;
  fs::path work = "acceptance_work";
  bool reuse = false;
};

// ---------------------------------------------------------------------------
// 1. Kinematics

Outcome kinematics() {
  const auto t0 = Clock::now();
  const RobotParams p = RobotParams::nominal();
  Outcome o;
  std::mt19937_64 rng(2024);
  double jac = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const LegJointAngles q = testing::random_in_limits(rng, p);
    const LegSide side = (i % 2) ? LegSide::Left : LegSide::Right;
    const Mat3 fd = testing::fd_jacobian<3, 3>(
        [&](const Vec3& x) { return testing::chain_foot_position(LegJointAngles(x), side, p); }, q.vec());
    const Mat3 J = leg_jacobian(q, side, p);
    jac = std::max(jac, (J - fd).norm() / J.norm());
  }
  double round_trip = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const LegJointAngles q = testing::random_in_limits(rng, p);
    const LegSide side = (i % 2) ? LegSide::Left : LegSide::Right;
    const Vec3 foot = leg_forward_kinematics(q, side, p);
    const LegJointAngles back = leg_inverse_kinematics(foot, side, p);
    round_trip = std::max(round_trip, (leg_forward_kinematics(back, side, p) - foot).norm());
  }
  const double t = seconds_since(t0);
  o.check(jac < 1e-6, "jacobian vs FD rel err " + sci(jac) + " over 1000 configs (< 1e-6)");
  o.check(round_trip < 1e-9, "FK/IK round trip " + sci(round_trip) + " m over 1e4 samples (< 1e-9)");
  o.check(t < 5.0, "runtime " + fix(t, 2) + " s (< 5)");
  return o;
}

// ---------------------------------------------------------------------------
// 2. Dynamics

Outcome dynamics() {
  const auto t0 = Clock::now();
  Outcome o;
  double pend = 0.0;
  for (double q : {-2.5, -1.2, -0.4, 0.3, 0.9, 1.7, 2.8}) pend = std::max(pend, testing::pendulum_relative_error(q));
  const double drift = testing::ballistic_energy_drift(2.0, 1e-3);
  const double momentum = testing::zero_g_momentum_drift(2.0, 1e-3);
  const double t = seconds_since(t0);
  o.check(pend < 1e-6, "pendulum vs analytic rel err " + sci(pend) + " (< 1e-6)");
  o.check(drift < 0.01, "ballistic energy drift " + fix(100 * drift, 4) + "% over 2 s at dt 1e-3 (< 1%)");
  o.check(momentum < 1e-8, "zero-g momentum drift " + sci(momentum) + " (< 1e-8)");
  o.check(t < 30.0, "runtime " + fix(t, 2) + " s (< 30)");
  return o;
}

// ---------------------------------------------------------------------------
// 3 and 4 share one 100k-step fuzz run.

const testing::FuzzReport& fuzz() {
  static std::optional<testing::FuzzReport> rep;
  if (!rep) rep = testing::reward_fuzz(100000, 77);
  return *rep;
}

Outcome reward() {
  Outcome o;
  const double e1 = std::abs(step_reward(0.08, 5.0, false) - 0.09);
  const double e2 = std::abs(step_reward(0.0, 0.0, false) - 0.01);
  const double e3 = std::abs(step_reward(0.0, 0.0, true) - (0.01 - 10.0));
  o.check(std::max({e1, e2, e3}) <= 1e-12, "worked examples 0.09 / 0.01 / -9.99, max err " + sci(std::max({e1, e2, e3})));
  const testing::FuzzReport& f = fuzz();
  o.check(f.max_progress_reward <= 0.12 + 1e-15,
          "max progress reward " + fix(f.max_progress_reward, 6) + " over " + std::to_string(f.steps) +
              " steps, " + std::to_string(f.episodes) + " episodes (<= 0.12)");
  o.check(f.max_reward_identity_error <= 1e-12 && f.min_energy >= 0.0,
          "reward decomposition err " + sci(f.max_reward_identity_error) + ", min energy " + sci(f.min_energy));
  const RewardWeights w;
  const double speed = w.max_progress / EnvConfig{}.control_period;
  o.check(std::abs(speed - 6.0) < 1e-12, "d_max / control period = " + fix(speed, 12) + " m/s (= 6)");
  return o;
}

Outcome observation() {
  Outcome o;
  const testing::FuzzReport& f = fuzz();
  o.check(f.observation_length_ok && f.finite, "length 64 and finite on all " + std::to_string(f.steps) + " fuzz steps");
  const testing::TimeFeatureReport t = testing::eval_time_feature(1200);
  o.check(t.observation_length_ok && !t.fell, "eval episode of 12 s: length 64 on every step, no fall");
  o.check(t.steps_after_hold >= 399 && t.max_hold_error == 0.0,
          "time feature = 2 on all " + std::to_string(t.steps_after_hold) + " steps with t > 8 s (max err " +
              sci(t.max_hold_error) + ")");
  o.check(t.max_early_error < 1e-9, "time feature = 10 - t before 8 s (max err " + sci(t.max_early_error) + ")");
  return o;
}

// ---------------------------------------------------------------------------
// 5. PPO math

Outcome ppo_math() {
  Outcome o;
  const double gae = testing::gae_oracle_error(500, 4);
  o.check(gae < 1e-12, "GAE vs brute-force oracle " + sci(gae) + " over 500 sequences (< 1e-12)");
  const double c1 = ppo::clipped_surrogate(1.5, 1.0, 0.2);
  const double c2 = ppo::clipped_surrogate(0.5, -1.0, 0.2);
  o.check(c1 == 1.2 && c2 == -0.8, "L_clip(1.5, A=1) = " + fix(c1, 12) + ", L_clip(0.5, A=-1) = " + fix(c2, 12));
  const double grad = testing::loss_gradient_error(3, 3);
  o.check(grad < 1e-4, "loss gradient (actor, log-std, critic) vs FD rel err " + sci(grad) + " (< 1e-4)");
  return o;
}

// ---------------------------------------------------------------------------
// Trained policies for 6-8.

struct TrainedPolicy {
  Checkpoint ck;
  plot::CsvTable metrics;
  double minutes = 0.0;
  bool reused = false;
};

ExperimentConfig learning_config(const std::string& randomization) {
  ExperimentConfig c;
  c.terrain = TerrainMode::Flat;
  c.randomization = randomization;
  c.train_seed = 1;
  c.total_steps = 2'000'000;
  c.checkpoint_every = 50;
  c.output_dir = "train_" + randomization;  // recorded only; the work directory is passed separately
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainedPolicy train_or_reuse(const ExperimentConfig& cfg, const fs::path& dir, bool reuse) {
  TrainedPolicy t;
  if (reuse && fs::exists(dir / "final.qck") && fs::exists(dir / "config.json") &&
      slurp(dir / "config.json") == to_json(cfg)) {
    t.ck = load_checkpoint(dir / "final.qck");
    t.metrics = plot::read_csv_table(dir / "metrics.csv");
    t.reused = true;
    return t;
  }
  const auto t0 = Clock::now();
  std::cerr << "  training '" << cfg.randomization << "' for " << cfg.total_steps << " steps\n";
  const TrainOutputs out = run_training(cfg, dir, [&](const ppo::IterationMetrics& m) {
    if (m.iteration % 25 == 0) {
      std::cerr << "    iter " << m.iteration << " steps " << m.total_steps << " reward " << fix(m.mean_episode_reward)
                << " speed " << fix(m.mean_speed) << " (" << fix(seconds_since(t0) / 60, 1) << " min)\n";
    }
  });
  t.ck = out.final;
  t.metrics = plot::read_csv_table(out.metrics_csv);
  t.minutes = seconds_since(t0) / 60.0;
  return t;
}

class Policies {
 public:
  explicit Policies(const Options& o) : opt_(o) {}
  const TrainedPolicy& none() { return get(none_, "none"); }
  const TrainedPolicy& full() { return get(full_, "full"); }

 private:
  const TrainedPolicy& get(std::optional<TrainedPolicy>& slot, const std::string& preset) {
    if (!slot) slot = train_or_reuse(learning_config(preset), opt_.work / ("train_" + preset), opt_.reuse);
    return *slot;
  }
  const Options& opt_;
  std::optional<TrainedPolicy> none_, full_;
};

struct ActuatorLog {
  double max_torque = 0.0;
  bool speed_rule_ok = true;
  long policy_steps = 0;
  void add(double torque, bool ok, long steps) {
    max_torque = std::max(max_torque, torque);
    speed_rule_ok = speed_rule_ok && ok;
    policy_steps += steps;
  }
  void add(const EvalSummary& s) {
    for (const TrialResult& t : s.trials) add(t.max_abs_torque, t.speed_rule_ok, t.steps);
  }
};

ActuatorLog& actuator_log() {
  static ActuatorLog log;
  return log;
}

// Mean episode reward of uniformly random actions on the training env.
double random_policy_baseline(const EnvConfig& env_cfg, int episodes, std::uint64_t seed) {
  QuadrupedEnv env(env_cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd a(kActionDim);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    env.reset(rng);
    for (;;) {
      for (double& x : a) x = u(rng);
      const StepResult r = env.step(a);
      total += r.reward;
      if (r.done) break;
    }
  }
  return total / episodes;
}

struct SteadyState {
  double airborne_fraction = 0.0;  // physics steps with no foot in contact
  double speed = 0.0;
  int falls = 0;
};

// Deterministic policy on the training env; the first `skip` seconds of
// each episode (the start-up transient) are not counted.
SteadyState steady_state(const Checkpoint& ck, const EnvConfig& env_cfg, int episodes, double skip) {
  QuadrupedEnv env(env_cfg);
  env.set_normalizer(std::make_shared<const RunningNormalizer>(ck.normalizer));
  SteadyState s;
  long airborne = 0, counted = 0;
  double distance = 0.0, time = 0.0;
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(500 + e);
    Eigen::VectorXd obs = env.reset(rng);
    double x_skip = 0.0;
    for (;;) {
      const ppo::ActionSample a = ppo::policy_sample(ck.policy, obs, rng, true);
      const double t_before = env.episode_time();
      if (t_before <= skip) x_skip = env.simulator().state().base_position.x();
      const StepResult r = env.step(a.action);
      actuator_log().add(r.info.max_abs_torque, r.info.speed_rule_ok, 1);
      if (t_before >= skip - 1e-9) {
        airborne += r.info.airborne_substeps;
        counted += r.info.substeps;
      }
      obs = r.observation;
      if (r.done) {
        s.falls += r.info.fell ? 1 : 0;
        distance += env.simulator().state().base_position.x() - x_skip;
        time += std::max(0.0, env.episode_time() - skip);
        break;
      }
    }
  }
  s.airborne_fraction = counted ? static_cast<double>(airborne) / counted : 0.0;
  s.speed = time > 0 ? distance / time : 0.0;
  return s;
}

Outcome learning(Policies& policies) {
  Outcome o;
  const TrainedPolicy& tp = policies.none();
  const std::vector<double> reward = tp.metrics.column("mean_episode_reward");
  const std::vector<double> speed = tp.metrics.column("mean_speed");
  const std::vector<double> steps = tp.metrics.column("total_steps");
  const std::size_t n = reward.size();
  if (n < 20) {
    o.check(false, "training produced only " + std::to_string(n) + " iterations");
    return o;
  }
  o.info(std::string(tp.reused ? "reused" : "trained") + " policy: " + std::to_string(n) + " iterations, " +
         fix(steps.back(), 0) + " steps" + (tp.reused ? "" : ", " + fix(tp.minutes, 1) + " min"));

  const EnvConfig env = training_env_config(learning_config("none"));
  const double baseline = random_policy_baseline(env, 100, 9);
  const double target = 5.0 * std::abs(baseline);
  o.check(reward.back() >= target, "final mean episode reward " + fix(reward.back()) + " vs random-policy baseline " +
                                       fix(baseline) + " (>= 5 x |baseline| = " + fix(target) + ")");
  o.check(speed.back() >= 1.5, "final mean forward speed " + fix(speed.back()) + " m/s (>= 1.5)");

  // Trailing 5-iteration moving average over the first 20 iterations.
  bool increasing = true;
  std::string ma_text;
  double prev = -1e300;
  for (std::size_t k = 4; k < 20; ++k) {
    double m = 0.0;
    for (std::size_t j = k - 4; j <= k; ++j) m += reward[j] / 5.0;
    increasing = increasing && m > prev;
    prev = m;
    if (k == 4 || k == 19) ma_text += (ma_text.empty() ? "" : " -> ") + fix(m);
  }
  o.check(increasing, "5-iteration moving-average reward strictly increases over iterations 5-20 (" + ma_text + ")");

  // Whole run: means of ten equal blocks of iterations never decrease.
  std::vector<double> blocks;
  const std::size_t len = n / 10;
  for (int b = 0; b < 10; ++b) {
    double m = 0.0;
    for (std::size_t k = b * len; k < (b + 1) * len; ++k) m += reward[k] / static_cast<double>(len);
    blocks.push_back(m);
  }
  bool monotone = true;
  std::string block_text;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (b > 0) monotone = monotone && blocks[b] >= blocks[b - 1];
    block_text += (b ? " " : "") + fix(blocks[b], 1);
  }
  o.check(monotone, "block-mean reward non-decreasing over 10 blocks (" + block_text + ")");

  const SteadyState ss = steady_state(tp.ck, env, 5, 2.0);
  o.check(ss.airborne_fraction >= 0.10, "deterministic gait, t > 2 s: all four feet airborne " +
                                            fix(100 * ss.airborne_fraction, 1) + "% of steps (>= 10%), speed " +
                                            fix(ss.speed) + " m/s, falls " + std::to_string(ss.falls) + "/5");
  return o;
}

// ---------------------------------------------------------------------------
// 7. Randomization ablation

std::map<std::string, EvalSummary>& ablation_rows() {
  static std::map<std::string, EvalSummary> rows;
  return rows;
}

const EvalSummary& ablation_row(Policies& policies, const std::string& preset) {
  auto& rows = ablation_rows();
  const auto it = rows.find(preset);
  if (it != rows.end()) return it->second;
  const TrainedPolicy& tp = preset == "none" ? policies.none() : policies.full();
  ExperimentConfig c = learning_config(preset);
  c.trials = 10;
  c.eval_duration = 20.0;
  const EvalSummary s = evaluate_policy(tp.ck, evaluation_env_config(c), c.trials, c.eval_seed, preset);
  actuator_log().add(s);
  return rows.emplace(preset, s).first->second;
}

Outcome ablation(Policies& policies) {
  Outcome o;
  const EvalSummary& none = ablation_row(policies, "none");
  const EvalSummary& full = ablation_row(policies, "full");
  o.info("perturbed-profile eval, 10 trials x 20 s; label, mean_dist, success_rate:");
  o.info("  " + format_summary_row(none));
  o.info("  " + format_summary_row(full));
  bool protocol = true;
  for (const EvalSummary* s : {&none, &full}) {
    protocol = protocol && s->trials.size() == 10;
    for (const TrialResult& t : s->trials) protocol = protocol && (t.fell ? t.steps <= 2000 : t.steps == 2000);
  }
  o.check(protocol, "protocol: 10 trials each, 2000 policy steps unless fallen");
  o.check(full.success_rate >= none.success_rate,
          "soft ordering: success(full) " + fix(full.success_rate, 2) + " >= success(none) " + fix(none.success_rate, 2));
  return o;
}

// ---------------------------------------------------------------------------
// 8. Actuator limits over every evaluation run.

Outcome actuator_limits(Policies& policies) {
  Outcome o;
  ablation_row(policies, "none");
  ablation_row(policies, "full");
  ExperimentConfig c = learning_config("full");
  c.trials = 10;
  const SweepResult sweep =
      robustness_sweep(policies.full().ck, evaluation_env_config(c), SweepSpec{}, c.trials, c.eval_seed, 1);
  for (const EvalSummary& s : sweep.summaries) actuator_log().add(s);
  const ActuatorLog& log = actuator_log();
  o.info("evaluation runs: ablation rows, load sweep 0/5/10/15 kg x 10 trials, steady-state gait rollouts");
  o.info("load sweep of the full-randomization policy (perturbed profile):");
  for (const EvalSummary& s : sweep.summaries) o.info("  " + format_summary_row(s));
  o.check(log.max_torque <= 33.5, "max |applied torque| " + fix(log.max_torque) + " N m over " +
                                      std::to_string(log.policy_steps) + " policy steps (<= 33.5)");
  o.check(log.speed_rule_ok, "speed-limit rule held at every physics step");
  return o;
}

// ---------------------------------------------------------------------------
// 9. Determinism of CLI commands.

int run_cli(const std::string& cli, const fs::path& root, const std::string& args) {
  const std::string cmd = std::string(kOutputRootEnv) + "='" + root.string() + "' '" + cli + "' " + args +
                          " > '" + (root / "log.txt").string() + "' 2>&1";
  fs::create_directories(root);
  return std::system(cmd.c_str());
}

Outcome determinism(const Options& opt) {
  Outcome o;
  if (opt.cli.empty() || !fs::exists(opt.cli)) {
    o.check(false, "CLI binary not found (pass --cli)");
    return o;
  }
  const fs::path base = fs::absolute(opt.work / "determinism");
  fs::remove_all(base);
  bool commands_ok = true;
  for (const char* run : {"a", "b"}) {
    const fs::path root = base / run;
    const std::string ck = (root / "train/final.qck").string();
    commands_ok = commands_ok &&
                  run_cli(opt.cli, root,
                          "train --randomization full --steps 3000 --horizon 1000 --workers 3 --hidden 32 32 "
                          "--checkpoint-every 1 -o train") == 0 &&
                  run_cli(opt.cli, root, "eval --checkpoint '" + ck + "' --trials 3 --eval-duration 2 -o eval") == 0 &&
                  run_cli(opt.cli, root,
                          "sweep --checkpoint '" + ck +
                              "' --trials 2 --eval-duration 1 --loads 0 10 --frictions 0.5 1 --workers 3 -o sweep") ==
                      0 &&
                  run_cli(opt.cli, root,
                          "plot --csv '" + (root / "train/metrics.csv").string() +
                              "' -x total_steps -y mean_episode_reward --out '" + (root / "plot/reward.svg").string() +
                              "'") == 0;
  }
  o.check(commands_ok, "train, eval, sweep and plot commands succeeded twice");
  int files = 0, csvs = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(base / "a")) {
    if (!entry.is_regular_file() || entry.path().filename() == "log.txt") continue;
    const fs::path rel = fs::relative(entry.path(), base / "a");
    ++files;
    csvs += entry.path().extension() == ".csv" ? 1 : 0;
    // config.json records the input checkpoint path, which names the run root.
    std::string text = slurp(entry.path());
    const std::string root_a = (base / "a").string(), root_b = (base / "b").string();
    for (std::size_t pos = 0; (pos = text.find(root_a, pos)) != std::string::npos; pos += root_b.size()) {
      text.replace(pos, root_a.size(), root_b);
    }
    if (!fs::exists(base / "b" / rel) || text != slurp(base / "b" / rel)) {
      ++differing;
      o.info("differs: " + rel.string());
    }
  }
  o.check(csvs >= 8 && differing == 0, std::to_string(files) + " output files (" + std::to_string(csvs) +
                                           " CSV) compared byte for byte, " + std::to_string(differing) + " differ");
  return o;
}

Options parse_args(int argc, char** argv) {
  Options o;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) throw ConfigError(a + " needs a value");
      return argv[++i];
    };
    if (a == "--only") {
      std::stringstream ss(next());
      std::string item;
      while (std::getline(ss, item, ',')) o.only.insert(std::stoi(item));
    } else if (a == "--cli") {
      o.cli = next();
    } else if (a == "--work") {
      o.work = next();
    } else if (a == "--reuse") {
      o.reuse = true;
    } else {
      throw ConfigError("unknown argument " + a);
    }
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  try {
    opt = parse_args(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  fs::create_directories(opt.work);
  Policies policies(opt);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"kinematics", kinematics},
      {"dynamics", dynamics},
      {"reward", reward},
      {"observation", observation},
      {"PPO math", ppo_math},
      {"learning smoke test", [&] { return learning(policies); }},
      {"randomization ablation", [&] { return ablation(policies); }},
      {"actuator limits", [&] { return actuator_limits(policies); }},
      {"determinism", [&] { return determinism(opt); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!opt.only.empty() && !opt.only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    failed += out.pass ? 0 : 1;
    std::cout << "criterion " << id << " " << (out.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << "  ("
              << fix(seconds_since(t0), 1) << " s)\n";
    for (const std::string& n : out.notes) std::cout << "    " << n << "\n";
    std::cout.flush();
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed\n" : "all selected criteria passed\n");
  return failed ? 1 : 0;
}
