// Command-line front end for training, evaluation, sweeps and plotting.
//
// Exit codes: 0 success, 1 other runtime failure, 2 configuration error,
// 3 training or simulation divergence, 4 unreadable or incompatible checkpoint.

#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "quadrl/checkpoint.hpp"
#include "quadrl/experiment.hpp"

namespace {

using namespace quadrl;
using namespace quadrl::experiment;

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kDiverged = 3, kCheckpointError = 4 };

using Override = std::function<void(ExperimentConfig&)>;

// Registers a flag whose value is applied on top of the config file only when
// given on the command line.
template <class T, class Apply>
void flag(CLI::App* app, std::vector<Override>& ovs, const std::string& name, const std::string& desc, Apply apply) {
  auto value = std::make_shared<T>();
  CLI::Option* opt = app->add_option(name, *value, desc);
  ovs.push_back([opt, value, apply](ExperimentConfig& c) {
    if (opt->count() > 0) apply(c, *value);
  });
}

Vec3 to_vec3(const std::vector<double>& v, const std::string& name) {
  if (v.size() == 1) return Vec3::Constant(v[0]);
  if (v.size() == 3) return Vec3(v[0], v[1], v[2]);
  throw ConfigError(name + " takes one or three values");
}

void add_env_flags(CLI::App* a, std::vector<Override>& o) {
  flag<std::string>(a, o, "--terrain", "flat | rough", [](auto& c, auto& v) { c.terrain = parse_terrain(v); });
  flag<std::string>(a, o, "--action-space", "cartesian | joint",
                    [](auto& c, auto& v) { c.action_space = parse_action_space(v); });
  flag<std::string>(a, o, "--joint-range", "full | restricted (joint action space)",
                    [](auto& c, auto& v) { c.joint_range = parse_joint_range(v); });
  flag<std::vector<double>>(a, o, "--cartesian-kp", "impedance stiffness, N/m (1 or 3 values)",
                            [](auto& c, auto& v) { c.cartesian_gains.kp = to_vec3(v, "--cartesian-kp"); });
  flag<std::vector<double>>(a, o, "--cartesian-kd", "impedance damping, N s/m (1 or 3 values)",
                            [](auto& c, auto& v) { c.cartesian_gains.kd = to_vec3(v, "--cartesian-kd"); });
  flag<double>(a, o, "--joint-kp", "joint PD stiffness", [](auto& c, auto& v) { c.joint_gains.kp = v; });
  flag<double>(a, o, "--joint-kd", "joint PD damping", [](auto& c, auto& v) { c.joint_gains.kd = v; });
  flag<std::string>(a, o, "--randomization", "preset: none, mu, mu+load, mu+mass10, mu+mass20, mu+mass10+load, full",
                    [](auto& c, auto& v) { c.randomization = v; });
  flag<double>(a, o, "--mass-scale", "link mass range, U[1-s, 1+s]", [](auto& c, auto& v) { c.mass_scale = v; });
  flag<double>(a, o, "--friction-min", "", [](auto& c, auto& v) { c.friction_min = v; });
  flag<double>(a, o, "--friction-max", "", [](auto& c, auto& v) { c.friction_max = v; });
  flag<double>(a, o, "--load-probability", "", [](auto& c, auto& v) { c.load_probability = v; });
  flag<double>(a, o, "--load-mass-max", "kg", [](auto& c, auto& v) { c.load_mass_max = v; });
  flag<std::string>(a, o, "--robot-config", "robot parameter file", [](auto& c, auto& v) { c.robot_config = v; });
  flag<std::string>(a, o, "-o,--output", "output directory (relative paths go below $QUADRL_OUTPUT_ROOT)",
                    [](auto& c, auto& v) { c.output_dir = v; });
  flag<int>(a, o, "--workers", "rollout / sweep threads", [](auto& c, auto& v) { c.ppo.workers = v; });
}

void add_train_flags(CLI::App* a, std::vector<Override>& o) {
  flag<std::uint64_t>(a, o, "--seed", "training seed", [](auto& c, auto& v) { c.train_seed = v; });
  flag<std::uint64_t>(a, o, "--steps", "environment steps", [](auto& c, auto& v) { c.total_steps = v; });
  flag<int>(a, o, "--checkpoint-every", "iterations between checkpoints (0: final only)",
            [](auto& c, auto& v) { c.checkpoint_every = v; });
  flag<double>(a, o, "--lr", "", [](auto& c, auto& v) { c.ppo.lr = v; });
  flag<int>(a, o, "--epochs", "", [](auto& c, auto& v) { c.ppo.epochs = v; });
  flag<bool>(a, o, "--anneal-lr", "decay lr linearly to 0 over --steps (true | false)",
             [](auto& c, auto& v) { c.ppo.anneal_lr = v; });
  flag<int>(a, o, "--minibatch", "", [](auto& c, auto& v) { c.ppo.minibatch = v; });
  flag<double>(a, o, "--gamma", "", [](auto& c, auto& v) { c.ppo.gamma = v; });
  flag<double>(a, o, "--lambda", "", [](auto& c, auto& v) { c.ppo.lambda = v; });
  flag<double>(a, o, "--clip", "", [](auto& c, auto& v) { c.ppo.clip = v; });
  flag<double>(a, o, "--value-coef", "", [](auto& c, auto& v) { c.ppo.value_coef = v; });
  flag<double>(a, o, "--entropy-coef", "", [](auto& c, auto& v) { c.ppo.entropy_coef = v; });
  flag<int>(a, o, "--horizon", "transitions per iteration", [](auto& c, auto& v) { c.ppo.horizon = v; });
  flag<double>(a, o, "--max-grad-norm", "", [](auto& c, auto& v) { c.ppo.max_grad_norm = v; });
  flag<double>(a, o, "--log-std-init", "", [](auto& c, auto& v) { c.ppo.log_std_init = v; });
  flag<std::vector<int>>(a, o, "--hidden", "hidden layer widths", [](auto& c, auto& v) { c.ppo.hidden = v; });
}

void add_eval_flags(CLI::App* a, std::vector<Override>& o) {
  flag<std::string>(a, o, "--checkpoint", "policy checkpoint", [](auto& c, auto& v) { c.checkpoint = v; });
  flag<std::uint64_t>(a, o, "--eval-seed", "", [](auto& c, auto& v) { c.eval_seed = v; });
  flag<int>(a, o, "--trials", "", [](auto& c, auto& v) { c.trials = v; });
  flag<double>(a, o, "--eval-duration", "seconds per trial", [](auto& c, auto& v) { c.eval_duration = v; });
  flag<std::string>(a, o, "--eval-profile", "perturbed | training",
                    [](auto& c, auto& v) { c.eval_profile = parse_eval_profile(v); });
  flag<std::string>(a, o, "--label", "summary row label", [](auto& c, auto& v) { c.label = v; });
}

void add_sweep_flags(CLI::App* a, std::vector<Override>& o) {
  flag<std::vector<double>>(a, o, "--loads", "payload masses, kg", [](auto& c, auto& v) { c.sweep.loads = v; });
  flag<std::vector<double>>(a, o, "--frictions", "", [](auto& c, auto& v) { c.sweep.frictions = v; });
  flag<std::vector<double>>(a, o, "--dts", "physics steps, s", [](auto& c, auto& v) { c.sweep.dts = v; });
}

void add_plot_flags(CLI::App* a, std::vector<Override>& o) {
  flag<std::string>(a, o, "--csv", "input CSV", [](auto& c, auto& v) { c.plot.csv = v; });
  flag<std::string>(a, o, "-x,--x", "x column", [](auto& c, auto& v) { c.plot.x = v; });
  flag<std::vector<std::string>>(a, o, "-y,--y", "y columns", [](auto& c, auto& v) { c.plot.y = v; });
  flag<std::string>(a, o, "--out", "output SVG", [](auto& c, auto& v) { c.plot.out = v; });
  flag<std::string>(a, o, "--title", "", [](auto& c, auto& v) { c.plot.title = v; });
}

struct Command {
  CLI::App* app = nullptr;
  Mode mode = Mode::Train;
  std::vector<Override> overrides;
  std::string config_path;
  bool dump_config = false;
};

ExperimentConfig resolve(Command& cmd) {
  ExperimentConfig cfg = cmd.config_path.empty() ? ExperimentConfig{} : load_experiment_config(cmd.config_path);
  cfg.mode = cmd.mode;
  for (const Override& o : cmd.overrides) o(cfg);
  cfg.validate();
  return cfg;
}

int run(Command& cmd) {
  ExperimentConfig cfg = resolve(cmd);
  if (cmd.dump_config) {
    std::cout << to_json(cfg);
    return kOk;
  }
  if (cmd.mode == Mode::Plot) {
    run_plot(cfg.plot);
    std::cout << "wrote " << cfg.plot.out << "\n";
    return kOk;
  }
  const auto out_dir = resolve_output_dir(cfg.output_dir);
  switch (cmd.mode) {
    case Mode::Train: {
      const TrainOutputs t = run_training(cfg, out_dir, [](const ppo::IterationMetrics& m) {
        std::printf("iter %5llu  steps %9llu  reward %9.3f  speed %6.3f  len %7.1f  airborne %.3f\n",
                    static_cast<unsigned long long>(m.iteration), static_cast<unsigned long long>(m.total_steps),
                    m.mean_episode_reward, m.mean_speed, m.mean_episode_length, m.airborne_fraction);
        std::fflush(stdout);
      });
      std::cout << "final checkpoint: " << t.final_checkpoint.string() << "\n";
      break;
    }
    case Mode::Eval: {
      const EvalSummary s = run_evaluation(cfg, out_dir);
      std::cout << "label, mean_dist, success_rate\n" << format_summary_row(s) << "\n";
      break;
    }
    case Mode::Sweep: {
      const SweepResult r = run_sweep(cfg, out_dir);
      std::cout << "label, mean_dist, success_rate\n";
      for (const EvalSummary& s : r.summaries) std::cout << format_summary_row(s) << "\n";
      break;
    }
    case Mode::Plot:
      break;
  }
  std::cout << "outputs in " << out_dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadruped locomotion RL: train, evaluate, sweep and plot"};
  app.require_subcommand(1);

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& desc, Mode mode) {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, desc);
    cmd->mode = mode;
    cmd->app->add_option("-c,--config", cmd->config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    cmd->app->add_flag("--dump-config", cmd->dump_config, "print the resolved config and exit");
    commands.push_back(std::move(cmd));
    return commands.back().get();
  };

  Command* train = add("train", "train a policy with PPO", Mode::Train);
  add_env_flags(train->app, train->overrides);
  add_train_flags(train->app, train->overrides);

  Command* eval = add("eval", "evaluate a checkpoint over repeated trials", Mode::Eval);
  add_env_flags(eval->app, eval->overrides);
  add_eval_flags(eval->app, eval->overrides);

  Command* sweep = add("sweep", "evaluate a checkpoint over payload, friction and step-size conditions", Mode::Sweep);
  add_env_flags(sweep->app, sweep->overrides);
  add_eval_flags(sweep->app, sweep->overrides);
  add_sweep_flags(sweep->app, sweep->overrides);

  Command* plot = add("plot", "render CSV columns as an SVG line chart", Mode::Plot);
  add_plot_flags(plot->app, plot->overrides);

  std::string inspect_path;
  CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "print a checkpoint summary");
  inspect->add_option("checkpoint", inspect_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (inspect->parsed()) {
      std::cout << describe_checkpoint(load_checkpoint(inspect_path));
      return kOk;
    }
    for (auto& cmd : commands) {
      if (cmd->app->parsed()) return run(*cmd);
    }
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kCheckpointError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const TrainingDiverged& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const SimulationDiverged& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
