#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quadrl/checkpoint.hpp"
#include "quadrl/env.hpp"
#include "quadrl/ppo.hpp"
#include "quadrl/trainer.hpp"

namespace quadrl::experiment {

enum class Mode { Train, Eval, Sweep, Plot };
enum class EvalProfile { Perturbed, Training };

/// Cartesian product of payload masses, friction coefficients and physics
/// steps. An empty `dts` keeps the evaluation profile's step.
struct SweepSpec {
  std::vector<double> loads{0.0, 5.0, 10.0, 15.0};
  std::vector<double> frictions{RandomizationConfig::kNominalFriction};
  std::vector<double> dts;
};

struct PlotSpec {
  std::string csv;
  std::string x;
  std::vector<std::string> y;
  std::string out;
  std::string title;
};

/// Everything a run needs. Parsed from JSON with every object checked for
/// unknown keys; CLI flags override individual fields afterwards.
struct ExperimentConfig {
  Mode mode = Mode::Train;
  TerrainMode terrain = TerrainMode::Flat;
  ActionSpace action_space = ActionSpace::Cartesian;
  JointRangeMode joint_range = JointRangeMode::Full;
  CartesianGains cartesian_gains;
  JointGains joint_gains;

  std::string randomization = "full";  // preset name
  std::optional<double> mass_scale;    // overrides the preset's mass range
  std::optional<double> friction_min;
  std::optional<double> friction_max;
  std::optional<double> load_probability;
  std::optional<double> load_mass_max;

  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 1000;
  int trials = 10;
  double eval_duration = 20.0;  // s
  EvalProfile eval_profile = EvalProfile::Perturbed;
  std::string label;            // summary row label, defaults to the preset
  std::string output_dir = "run";

  std::uint64_t total_steps = 2'000'000;
  int checkpoint_every = 10;  // iterations, 0 = final only
  ppo::PpoConfig ppo;

  std::string checkpoint;    // policy for eval and sweep
  std::string robot_config;  // optional robot parameter file
  SweepSpec sweep;
  PlotSpec plot;

  /// Throws ConfigError.
  void validate() const;
  RandomizationConfig randomization_config() const;
  std::string row_label() const { return label.empty() ? randomization : label; }
};

ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Canonical JSON of every field; parses back to an equal config.
std::string to_json(const ExperimentConfig& cfg);

std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);
TerrainMode parse_terrain(const std::string& s);
ActionSpace parse_action_space(const std::string& s);
JointRangeMode parse_joint_range(const std::string& s);
EvalProfile parse_eval_profile(const std::string& s);

/// `path` when absolute, otherwise below $QUADRL_OUTPUT_ROOT (if set).
std::filesystem::path resolve_output_dir(const std::string& path);
inline constexpr const char* kOutputRootEnv = "QUADRL_OUTPUT_ROOT";

EnvConfig training_env_config(const ExperimentConfig& cfg);
/// Eval-mode observations, horizon = duration / control period, and the
/// perturbed profile unless the training profile is requested.
EnvConfig evaluation_env_config(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Training

struct TrainOutputs {
  std::filesystem::path metrics_csv;
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
  Checkpoint final;
};

/// Writes config.json, metrics.csv, checkpoints/iter_NNNNNN.qck every
/// `checkpoint_every` iterations plus final.qck, and the reward curve as
/// SVG. Throws TrainingDiverged when the update produces non-finite values.
TrainOutputs run_training(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                          const std::function<void(const ppo::IterationMetrics&)>& on_iteration = {});

// ---------------------------------------------------------------------------
// Evaluation

struct TrialResult {
  int trial = 0;
  double distance = 0.0;  // m of base x travel
  bool fell = false;
  int steps = 0;          // policy steps run
  double mean_speed = 0.0;
  double max_abs_torque = 0.0;
  bool speed_rule_ok = true;
};

struct EvalSummary {
  std::string label;
  std::vector<TrialResult> trials;
  double mean_distance = 0.0;
  double success_rate = 0.0;  // fraction of trials without a fall
  double max_abs_torque = 0.0;
  bool speed_rule_ok = true;
};

/// Per-physics-step callback: trial index, state and step record.
using TraceObserver = std::function<void(int trial, const SimState&, const StepRecord&)>;
/// Per-policy-step callback: trial index, time and world-frame base velocity.
using VelocityObserver = std::function<void(int trial, double time, const Vec3& velocity)>;

/// Runs the deterministic policy (Gaussian mean) with frozen normalizer
/// statistics. Trial k resets from seed + k, so conditions that share a seed
/// see the same draws. Throws CheckpointError when the policy shape does not
/// match the environment.
EvalSummary evaluate_policy(const Checkpoint& ck, const EnvConfig& env, int trials, std::uint64_t seed,
                            const std::string& label, const TraceObserver& trace = {},
                            const VelocityObserver& velocity = {});

/// "label, mean_dist, success_rate"
std::string format_summary_row(const EvalSummary& s);
void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const EvalSummary& s);
void write_trials_header(std::ostream& out);
void write_trial_rows(std::ostream& out, const EvalSummary& s);

// ---------------------------------------------------------------------------
// Robustness sweep

struct SweepCondition {
  std::string label;
  double load = 0.0;
  double friction = RandomizationConfig::kNominalFriction;
  double dt = 0.0;
};

std::vector<SweepCondition> sweep_conditions(const SweepSpec& spec, double default_dt);
/// The evaluation env with the payload fixed at `load` kg on the base centre
/// (none when zero), the given friction and physics step.
EnvConfig condition_env(const EnvConfig& base, const SweepCondition& c);

struct VelocityTrace {
  std::vector<double> time;
  std::vector<double> forward_velocity;
};

struct SweepResult {
  std::vector<SweepCondition> conditions;
  std::vector<EvalSummary> summaries;  // one per condition
  std::vector<VelocityTrace> traces;   // trial 0 of each condition
};

/// Conditions run on up to `workers` threads; results are placed by index so
/// the output does not depend on scheduling.
SweepResult robustness_sweep(const Checkpoint& ck, const EnvConfig& base, const SweepSpec& spec, int trials,
                             std::uint64_t seed, int workers);

/// One row per (condition, trial).
void write_sweep_csv(std::ostream& out, const SweepResult& r);
/// time column plus one forward-velocity column per condition, padded with
/// empty cells after a trial ends.
void write_velocity_csv(std::ostream& out, const SweepResult& r);

// ---------------------------------------------------------------------------
// Command drivers: each writes its CSVs and the SVGs rendered from them.

/// trials.csv, summary.csv, trajectory.csv (trial 0, one row per physics
/// step), velocity.csv and the velocity, joint-angle and torque plots.
EvalSummary run_evaluation(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
/// sweep.csv (conditions x trials rows), sweep_summary.csv, velocity.csv,
/// velocity.svg, plus trajectory traces of the first and last conditions.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
/// Renders plot.y against plot.x from plot.csv.
void run_plot(const PlotSpec& spec);

void plot_training_curves(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_dir);
/// Joint angles and applied torques of one leg against time.
void plot_trajectory(const std::filesystem::path& trajectory_csv, const std::filesystem::path& out_dir,
                     const std::string& prefix, int leg = 0);
void plot_velocity(const std::filesystem::path& velocity_csv, const std::filesystem::path& svg);

}  // namespace quadrl::experiment
