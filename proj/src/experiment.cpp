#include "quadrl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "quadrl/normalizer.hpp"
#include "quadrl/plot.hpp"
#include "quadrl/trainer.hpp"

namespace quadrl::experiment {
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string checkpoint_name(std::uint64_t iteration) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "iter_%06llu.qck", static_cast<unsigned long long>(iteration));
  return buf;
}

void check_shapes(const Checkpoint& ck) {
  if (ck.policy.observation_dim() != kObservationDim || ck.policy.action_dim() != kActionDim ||
      ck.normalizer.dim() != kObservationDim) {
    throw CheckpointError("checkpoint policy is " + std::to_string(ck.policy.observation_dim()) + " -> " +
                          std::to_string(ck.policy.action_dim()) + ", environment needs " +
                          std::to_string(kObservationDim) + " -> " + std::to_string(kActionDim));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

TrainOutputs run_training(const ExperimentConfig& cfg, const fs::path& out_dir,
                          const std::function<void(const ppo::IterationMetrics&)>& on_iteration) {
  cfg.validate();
  fs::create_directories(out_dir / "checkpoints");
  plot::write_text_file(out_dir / "config.json", to_json(cfg));

  const EnvConfig env_cfg = training_env_config(cfg);
  ppo::PpoConfig pc = cfg.ppo;
  pc.seed = cfg.train_seed;
  ppo::PpoTrainer trainer([env_cfg](int) { return std::make_unique<QuadrupedEnv>(env_cfg); }, pc);

  TrainOutputs out;
  out.metrics_csv = out_dir / "metrics.csv";
  std::ofstream metrics = open_out(out.metrics_csv);
  ppo::write_metrics_header(metrics);
  trainer.train(cfg.total_steps, [&](const ppo::IterationMetrics& m) {
    ppo::write_metrics_row(metrics, m);
    metrics.flush();
    if (cfg.checkpoint_every > 0 && m.iteration % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0) {
      const fs::path p = out_dir / "checkpoints" / checkpoint_name(m.iteration);
      save_checkpoint(p, trainer.checkpoint());
      out.checkpoints.push_back(p);
    }
    if (on_iteration) on_iteration(m);
  });
  metrics.close();

  out.final = trainer.checkpoint();
  out.final_checkpoint = out_dir / "final.qck";
  save_checkpoint(out.final_checkpoint, out.final);
  plot_training_curves(out.metrics_csv, out_dir);
  return out;
}

// ---------------------------------------------------------------------------

EvalSummary evaluate_policy(const Checkpoint& ck, const EnvConfig& env_cfg, int trials, std::uint64_t seed,
                            const std::string& label, const TraceObserver& trace, const VelocityObserver& velocity) {
  check_shapes(ck);
  if (trials < 1) throw ConfigError("trials must be at least 1");
  QuadrupedEnv env(env_cfg);
  env.set_normalizer(std::make_shared<const RunningNormalizer>(ck.normalizer));

  EvalSummary s;
  s.label = label;
  for (int k = 0; k < trials; ++k) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(k));
    if (trace) {
      env.set_physics_observer([&trace, k](const SimState& st, const StepRecord& rec) { trace(k, st, rec); });
    }
    Eigen::VectorXd obs = env.reset(rng);
    const double x0 = env.simulator().state().base_position.x();
    TrialResult t;
    t.trial = k;
    for (;;) {
      const ppo::ActionSample a = ppo::policy_sample(ck.policy, obs, rng, true);
      const StepResult r = env.step(a.action);
      ++t.steps;
      t.max_abs_torque = std::max(t.max_abs_torque, r.info.max_abs_torque);
      t.speed_rule_ok = t.speed_rule_ok && r.info.speed_rule_ok;
      if (velocity) velocity(k, env.episode_time(), env.simulator().state().base_linear_velocity);
      obs = r.observation;
      if (r.done) {
        t.fell = r.info.fell;
        break;
      }
    }
    t.distance = env.simulator().state().base_position.x() - x0;
    t.mean_speed = t.distance / (t.steps * env_cfg.control_period);
    s.trials.push_back(t);
  }
  env.set_physics_observer({});

  int successes = 0;
  for (const TrialResult& t : s.trials) {
    s.mean_distance += t.distance;
    successes += t.fell ? 0 : 1;
    s.max_abs_torque = std::max(s.max_abs_torque, t.max_abs_torque);
    s.speed_rule_ok = s.speed_rule_ok && t.speed_rule_ok;
  }
  s.mean_distance /= trials;
  s.success_rate = static_cast<double>(successes) / trials;
  return s;
}

std::string format_summary_row(const EvalSummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), ", %.3f, %.2f", s.mean_distance, s.success_rate);
  return s.label + buf;
}

void write_summary_header(std::ostream& out) { out << "label,mean_dist,success_rate\n"; }
void write_summary_row(std::ostream& out, const EvalSummary& s) { out << format_summary_row(s) << "\n"; }

void write_trials_header(std::ostream& out) {
  out << "label,trial,distance,fell,steps,mean_speed,max_abs_torque,speed_rule_ok\n";
}

void write_trial_rows(std::ostream& out, const EvalSummary& s) {
  for (const TrialResult& t : s.trials) {
    out << s.label << ',' << t.trial << ',' << fmt(t.distance) << ',' << (t.fell ? 1 : 0) << ',' << t.steps << ','
        << fmt(t.mean_speed) << ',' << fmt(t.max_abs_torque) << ',' << (t.speed_rule_ok ? 1 : 0) << "\n";
  }
}

// ---------------------------------------------------------------------------

std::vector<SweepCondition> sweep_conditions(const SweepSpec& spec, double default_dt) {
  const std::vector<double> dts = spec.dts.empty() ? std::vector<double>{default_dt} : spec.dts;
  std::vector<SweepCondition> out;
  for (double load : spec.loads) {
    for (double mu : spec.frictions) {
      for (double dt : dts) {
        SweepCondition c{"", load, mu, dt};
        c.label = "load=" + fmt(load) + "kg mu=" + fmt(mu) + " dt=" + fmt(dt);
        out.push_back(c);
      }
    }
  }
  return out;
}

EnvConfig condition_env(const EnvConfig& base, const SweepCondition& c) {
  EnvConfig e = base;
  RandomizationConfig r = RandomizationConfig::none();
  r.friction_min = r.friction_max = c.friction;
  if (c.load > 0.0) {
    r.load_probability = 1.0;
    r.load_mass_min = r.load_mass_max = c.load;
    r.load_offset_max = Vec3::Zero();
  }
  e.randomization = r;
  e.physics_dt = c.dt;
  return e;
}

SweepResult robustness_sweep(const Checkpoint& ck, const EnvConfig& base, const SweepSpec& spec, int trials,
                             std::uint64_t seed, int workers) {
  check_shapes(ck);
  SweepResult r;
  r.conditions = sweep_conditions(spec, base.physics_dt);
  const std::size_t n = r.conditions.size();
  for (const SweepCondition& c : r.conditions) condition_env(base, c).validate();
  r.summaries.resize(n);
  r.traces.resize(n);

  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      VelocityTrace& tr = r.traces[i];
      r.summaries[i] = evaluate_policy(ck, condition_env(base, r.conditions[i]), trials, seed, r.conditions[i].label,
                                       {}, [&tr](int trial, double t, const Vec3& v) {
                                         if (trial != 0) return;
                                         tr.time.push_back(t);
                                         tr.forward_velocity.push_back(v.x());
                                       });
    }
  };
  const int nt = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers))));
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  for (int k = 0; k < nt; ++k) {
    pool.emplace_back([&] {
      try {
        run();
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  return r;
}

void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "condition,load_kg,friction,dt,trial,distance,fell,steps,mean_speed,max_abs_torque,speed_rule_ok\n";
  for (std::size_t i = 0; i < r.conditions.size(); ++i) {
    const SweepCondition& c = r.conditions[i];
    for (const TrialResult& t : r.summaries[i].trials) {
      out << c.label << ',' << fmt(c.load) << ',' << fmt(c.friction) << ',' << fmt(c.dt) << ',' << t.trial << ','
          << fmt(t.distance) << ',' << (t.fell ? 1 : 0) << ',' << t.steps << ',' << fmt(t.mean_speed) << ','
          << fmt(t.max_abs_torque) << ',' << (t.speed_rule_ok ? 1 : 0) << "\n";
    }
  }
}

void write_velocity_csv(std::ostream& out, const SweepResult& r) {
  std::size_t rows = 0;
  const VelocityTrace* longest = nullptr;
  for (const VelocityTrace& t : r.traces) {
    if (t.time.size() > rows) rows = t.time.size(), longest = &t;
  }
  out << "time";
  for (const SweepCondition& c : r.conditions) out << ',' << c.label;
  out << "\n";
  for (std::size_t k = 0; k < rows; ++k) {
    out << fmt(longest->time[k]);
    for (const VelocityTrace& t : r.traces) {
      out << ',';
      if (k < t.forward_velocity.size()) out << fmt(t.forward_velocity[k]);
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

namespace {

Checkpoint load_policy(const ExperimentConfig& cfg) { return load_checkpoint(cfg.checkpoint); }

// Runs one trial with a trajectory dump and returns nothing else; the same
// seed reproduces trial 0 of the corresponding evaluation exactly.
void write_trajectory(const Checkpoint& ck, const EnvConfig& env, std::uint64_t seed, const fs::path& csv) {
  std::ofstream out = open_out(csv);
  TrajectoryWriter writer(out);
  evaluate_policy(ck, env, 1, seed, "trace",
                  [&writer](int, const SimState& s, const StepRecord& rec) { writer.write(s, rec); });
}

}  // namespace

EvalSummary run_evaluation(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const Checkpoint ck = load_policy(cfg);
  const EnvConfig env = evaluation_env_config(cfg);
  fs::create_directories(out_dir);
  plot::write_text_file(out_dir / "config.json", to_json(cfg));

  std::ofstream traj = open_out(out_dir / "trajectory.csv");
  TrajectoryWriter writer(traj);
  VelocityTrace vel;
  const EvalSummary s = evaluate_policy(
      ck, env, cfg.trials, cfg.eval_seed, cfg.row_label(),
      [&writer](int trial, const SimState& st, const StepRecord& rec) {
        if (trial == 0) writer.write(st, rec);
      },
      [&vel](int trial, double t, const Vec3& v) {
        if (trial != 0) return;
        vel.time.push_back(t);
        vel.forward_velocity.push_back(v.x());
      });
  traj.close();

  {
    std::ofstream out = open_out(out_dir / "trials.csv");
    write_trials_header(out);
    write_trial_rows(out, s);
  }
  {
    std::ofstream out = open_out(out_dir / "summary.csv");
    write_summary_header(out);
    write_summary_row(out, s);
  }
  {
    SweepResult one;
    one.conditions.push_back({cfg.row_label(), 0.0, 0.0, env.physics_dt});
    one.traces.push_back(vel);
    std::ofstream out = open_out(out_dir / "velocity.csv");
    write_velocity_csv(out, one);
  }
  plot_velocity(out_dir / "velocity.csv", out_dir / "velocity.svg");
  plot_trajectory(out_dir / "trajectory.csv", out_dir, "trial0");
  return s;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const Checkpoint ck = load_policy(cfg);
  const EnvConfig base = evaluation_env_config(cfg);
  fs::create_directories(out_dir);
  plot::write_text_file(out_dir / "config.json", to_json(cfg));

  const SweepResult r = robustness_sweep(ck, base, cfg.sweep, cfg.trials, cfg.eval_seed, cfg.ppo.workers);
  {
    std::ofstream out = open_out(out_dir / "sweep.csv");
    write_sweep_csv(out, r);
  }
  {
    std::ofstream out = open_out(out_dir / "sweep_summary.csv");
    out << "label,mean_dist,success_rate,max_abs_torque,speed_rule_ok\n";
    for (const EvalSummary& s : r.summaries) {
      out << format_summary_row(s) << ", " << fmt(s.max_abs_torque) << ", " << (s.speed_rule_ok ? 1 : 0) << "\n";
    }
  }
  {
    std::ofstream out = open_out(out_dir / "velocity.csv");
    write_velocity_csv(out, r);
  }
  plot_velocity(out_dir / "velocity.csv", out_dir / "velocity.svg");

  std::vector<std::size_t> traced{0};
  if (r.conditions.size() > 1) traced.push_back(r.conditions.size() - 1);
  for (std::size_t i : traced) {
    const std::string prefix = "condition" + std::to_string(i);
    const fs::path csv = out_dir / (prefix + "_trajectory.csv");
    write_trajectory(ck, condition_env(base, r.conditions[i]), cfg.eval_seed, csv);
    plot_trajectory(csv, out_dir, prefix);
  }
  return r;
}

void run_plot(const PlotSpec& spec) {
  if (spec.csv.empty() || spec.x.empty() || spec.y.empty() || spec.out.empty()) {
    throw ConfigError("plot needs csv, x, y and out");
  }
  const plot::CsvTable t = plot::read_csv_table(spec.csv);
  const std::vector<double> x = t.column(spec.x);
  std::vector<plot::Series> series;
  for (const std::string& y : spec.y) series.push_back({y, x, t.column(y)});
  plot::PlotOptions o;
  o.title = spec.title.empty() ? fs::path(spec.csv).filename().string() : spec.title;
  o.x_label = spec.x;
  o.y_label = spec.y.size() == 1 ? spec.y[0] : "";
  plot::write_text_file(spec.out, plot::render_line_plot(series, o));
}

void plot_training_curves(const fs::path& metrics_csv, const fs::path& out_dir) {
  const plot::CsvTable t = plot::read_csv_table(metrics_csv);
  const std::vector<double> steps = t.column("total_steps");
  auto one = [&](const std::string& col, const std::string& title, const std::string& ylabel, const fs::path& svg) {
    plot::PlotOptions o{title, "environment steps", ylabel};
    plot::write_text_file(svg, plot::render_line_plot({{col, steps, t.column(col)}}, o));
  };
  one("mean_episode_reward", "Mean episode reward", "reward", out_dir / "reward.svg");
  one("mean_speed", "Mean forward speed", "m/s", out_dir / "speed.svg");
}

void plot_trajectory(const fs::path& trajectory_csv, const fs::path& out_dir, const std::string& prefix, int leg) {
  if (leg < 0 || leg >= kNumLegs) throw ConfigError("leg index must be 0..3");
  plot::CsvTable t = plot::read_csv_table(trajectory_csv);
  // Physics-rate rows are thinned for the figure; the CSV keeps all of them.
  const std::size_t stride = std::max<std::size_t>(1, t.rows.size() / 4000);
  if (stride > 1) {
    std::vector<std::vector<double>> kept;
    for (std::size_t k = 0; k < t.rows.size(); k += stride) kept.push_back(std::move(t.rows[k]));
    t.rows = std::move(kept);
  }
  const std::vector<double> time = t.column("time");
  static const char* kJoint[] = {"abduction", "thigh", "knee"};
  static const char* kLeg[] = {"FR", "FL", "RR", "RL"};
  std::vector<plot::Series> q, tau;
  for (int j = 0; j < kJointsPerLeg; ++j) {
    const int idx = kJointsPerLeg * leg + j;
    q.push_back({kJoint[j], time, t.column("q" + std::to_string(idx))});
    tau.push_back({kJoint[j], time, t.column("tau" + std::to_string(idx))});
  }
  const std::string name = kLeg[leg];
  plot::write_text_file(out_dir / (prefix + "_joints.svg"),
                        plot::render_line_plot(q, {name + " joint angles", "time (s)", "rad"}));
  plot::write_text_file(out_dir / (prefix + "_torques.svg"),
                        plot::render_line_plot(tau, {name + " applied torques", "time (s)", "N m"}));
}

void plot_velocity(const fs::path& velocity_csv, const fs::path& svg) {
  const plot::CsvTable t = plot::read_csv_table(velocity_csv);
  const std::vector<double> time = t.column("time");
  std::vector<plot::Series> s;
  for (std::size_t c = 1; c < t.header.size(); ++c) s.push_back({t.header[c], time, t.column(t.header[c])});
  plot::write_text_file(svg, plot::render_line_plot(s, {"Forward body velocity", "time (s)", "m/s"}));
}

}  // namespace quadrl::experiment
