#include <cmath>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"
#include "quadrl/experiment.hpp"

namespace quadrl::experiment {
namespace {

using nlohmann::json;

// Every object in the schema is checked against its allowed keys, so a
// misspelled field fails loudly instead of silently keeping a default.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + where + (where.empty() ? "" : ".") + it.key() + "'");
  }
}

std::string path_of(const std::string& where, const char* key) {
  return where.empty() ? key : where + "." + key;
}

double as_double(const json& v, const std::string& name) {
  if (!v.is_number()) throw ConfigError(name + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(name + " must be finite");
  return d;
}

std::int64_t as_int(const json& v, const std::string& name) {
  if (!v.is_number_integer()) throw ConfigError(name + " must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t as_uint(const json& v, const std::string& name) {
  if (!v.is_number_unsigned()) throw ConfigError(name + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

int as_int32(const json& v, const std::string& name) {
  const std::int64_t i = as_int(v, name);
  if (i < -(1LL << 31) || i >= (1LL << 31)) throw ConfigError(name + " is out of range");
  return static_cast<int>(i);
}

std::string as_string(const json& v, const std::string& name) {
  if (!v.is_string()) throw ConfigError(name + " must be a string");
  return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& name) {
  if (!v.is_boolean()) throw ConfigError(name + " must be true or false");
  return v.get<bool>();
}

std::vector<double> as_doubles(const json& v, const std::string& name) {
  if (!v.is_array()) throw ConfigError(name + " must be an array of numbers");
  std::vector<double> out;
  for (const json& e : v) out.push_back(as_double(e, name));
  return out;
}

Vec3 as_vec3(const json& v, const std::string& name) {
  if (v.is_number()) return Vec3::Constant(as_double(v, name));
  const std::vector<double> d = as_doubles(v, name);
  if (d.size() != 3) throw ConfigError(name + " must be a number or three numbers");
  return Vec3(d[0], d[1], d[2]);
}

// Reads `key` from `j` if present.
template <class F>
void opt(const json& j, const char* key, const std::string& where, F&& read) {
  const auto it = j.find(key);
  if (it != j.end()) read(*it, path_of(where, key));
}

void parse_gains(const json& j, ExperimentConfig& c) {
  check_keys(j, {"cartesian_kp", "cartesian_kd", "joint_kp", "joint_kd"}, "gains");
  opt(j, "cartesian_kp", "gains", [&](const json& v, const std::string& n) { c.cartesian_gains.kp = as_vec3(v, n); });
  opt(j, "cartesian_kd", "gains", [&](const json& v, const std::string& n) { c.cartesian_gains.kd = as_vec3(v, n); });
  opt(j, "joint_kp", "gains", [&](const json& v, const std::string& n) { c.joint_gains.kp = as_double(v, n); });
  opt(j, "joint_kd", "gains", [&](const json& v, const std::string& n) { c.joint_gains.kd = as_double(v, n); });
}

void parse_randomization(const json& j, ExperimentConfig& c) {
  if (j.is_string()) {
    c.randomization = j.get<std::string>();
    return;
  }
  const std::string w = "randomization";
  check_keys(j, {"preset", "mass_scale", "friction_min", "friction_max", "load_probability", "load_mass_max"}, w);
  opt(j, "preset", w, [&](const json& v, const std::string& n) { c.randomization = as_string(v, n); });
  opt(j, "mass_scale", w, [&](const json& v, const std::string& n) { c.mass_scale = as_double(v, n); });
  opt(j, "friction_min", w, [&](const json& v, const std::string& n) { c.friction_min = as_double(v, n); });
  opt(j, "friction_max", w, [&](const json& v, const std::string& n) { c.friction_max = as_double(v, n); });
  opt(j, "load_probability", w, [&](const json& v, const std::string& n) { c.load_probability = as_double(v, n); });
  opt(j, "load_mass_max", w, [&](const json& v, const std::string& n) { c.load_mass_max = as_double(v, n); });
}

void parse_train(const json& j, ExperimentConfig& c) {
  const std::string w = "train";
  check_keys(j,
             {"total_steps", "checkpoint_every", "lr", "anneal_lr", "epochs", "minibatch", "gamma", "lambda", "clip", "value_coef",
              "entropy_coef", "horizon", "workers", "max_grad_norm", "normalize_advantages", "log_std_init", "hidden"},
             w);
  ppo::PpoConfig& p = c.ppo;
  opt(j, "total_steps", w, [&](const json& v, const std::string& n) { c.total_steps = as_uint(v, n); });
  opt(j, "checkpoint_every", w, [&](const json& v, const std::string& n) { c.checkpoint_every = as_int32(v, n); });
  opt(j, "lr", w, [&](const json& v, const std::string& n) { p.lr = as_double(v, n); });
  opt(j, "anneal_lr", w, [&](const json& v, const std::string& n) { p.anneal_lr = as_bool(v, n); });
  opt(j, "epochs", w, [&](const json& v, const std::string& n) { p.epochs = as_int32(v, n); });
  opt(j, "minibatch", w, [&](const json& v, const std::string& n) { p.minibatch = as_int32(v, n); });
  opt(j, "gamma", w, [&](const json& v, const std::string& n) { p.gamma = as_double(v, n); });
  opt(j, "lambda", w, [&](const json& v, const std::string& n) { p.lambda = as_double(v, n); });
  opt(j, "clip", w, [&](const json& v, const std::string& n) { p.clip = as_double(v, n); });
  opt(j, "value_coef", w, [&](const json& v, const std::string& n) { p.value_coef = as_double(v, n); });
  opt(j, "entropy_coef", w, [&](const json& v, const std::string& n) { p.entropy_coef = as_double(v, n); });
  opt(j, "horizon", w, [&](const json& v, const std::string& n) { p.horizon = as_int32(v, n); });
  opt(j, "workers", w, [&](const json& v, const std::string& n) { p.workers = as_int32(v, n); });
  opt(j, "max_grad_norm", w, [&](const json& v, const std::string& n) { p.max_grad_norm = as_double(v, n); });
  opt(j, "normalize_advantages", w,
      [&](const json& v, const std::string& n) { p.normalize_advantages = as_bool(v, n); });
  opt(j, "log_std_init", w, [&](const json& v, const std::string& n) { p.log_std_init = as_double(v, n); });
  opt(j, "hidden", w, [&](const json& v, const std::string& n) {
    if (!v.is_array()) throw ConfigError(n + " must be an array of layer widths");
    p.hidden.clear();
    for (const json& e : v) p.hidden.push_back(as_int32(e, n));
  });
}

void parse_sweep(const json& j, ExperimentConfig& c) {
  check_keys(j, {"loads", "frictions", "dts"}, "sweep");
  opt(j, "loads", "sweep", [&](const json& v, const std::string& n) { c.sweep.loads = as_doubles(v, n); });
  opt(j, "frictions", "sweep", [&](const json& v, const std::string& n) { c.sweep.frictions = as_doubles(v, n); });
  opt(j, "dts", "sweep", [&](const json& v, const std::string& n) { c.sweep.dts = as_doubles(v, n); });
}

void parse_plot(const json& j, ExperimentConfig& c) {
  check_keys(j, {"csv", "x", "y", "out", "title"}, "plot");
  opt(j, "csv", "plot", [&](const json& v, const std::string& n) { c.plot.csv = as_string(v, n); });
  opt(j, "x", "plot", [&](const json& v, const std::string& n) { c.plot.x = as_string(v, n); });
  opt(j, "out", "plot", [&](const json& v, const std::string& n) { c.plot.out = as_string(v, n); });
  opt(j, "title", "plot", [&](const json& v, const std::string& n) { c.plot.title = as_string(v, n); });
  opt(j, "y", "plot", [&](const json& v, const std::string& n) {
    c.plot.y.clear();
    if (v.is_string()) {
      c.plot.y.push_back(v.get<std::string>());
      return;
    }
    if (!v.is_array()) throw ConfigError(n + " must be a column name or an array of them");
    for (const json& e : v) c.plot.y.push_back(as_string(e, n));
  });
}

const char* terrain_name(TerrainMode t) { return t == TerrainMode::Flat ? "flat" : "rough"; }
const char* action_space_name(ActionSpace a) { return a == ActionSpace::Cartesian ? "cartesian" : "joint"; }
const char* joint_range_name(JointRangeMode m) { return m == JointRangeMode::Full ? "full" : "restricted"; }
const char* eval_profile_name(EvalProfile p) { return p == EvalProfile::Perturbed ? "perturbed" : "training"; }

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Train: return "train";
    case Mode::Eval: return "eval";
    case Mode::Sweep: return "sweep";
    case Mode::Plot: return "plot";
  }
  return "train";
}

Mode parse_mode(const std::string& s) {
  if (s == "train") return Mode::Train;
  if (s == "eval") return Mode::Eval;
  if (s == "sweep") return Mode::Sweep;
  if (s == "plot") return Mode::Plot;
  throw ConfigError("mode must be train, eval, sweep or plot (got '" + s + "')");
}

TerrainMode parse_terrain(const std::string& s) {
  if (s == "flat") return TerrainMode::Flat;
  if (s == "rough") return TerrainMode::Rough;
  throw ConfigError("terrain must be flat or rough (got '" + s + "')");
}

ActionSpace parse_action_space(const std::string& s) {
  if (s == "cartesian") return ActionSpace::Cartesian;
  if (s == "joint") return ActionSpace::Joint;
  throw ConfigError("action_space must be cartesian or joint (got '" + s + "')");
}

JointRangeMode parse_joint_range(const std::string& s) {
  if (s == "full") return JointRangeMode::Full;
  if (s == "restricted") return JointRangeMode::Restricted;
  throw ConfigError("joint_range must be full or restricted (got '" + s + "')");
}

EvalProfile parse_eval_profile(const std::string& s) {
  if (s == "perturbed") return EvalProfile::Perturbed;
  if (s == "training") return EvalProfile::Training;
  throw ConfigError("eval_profile must be perturbed or training (got '" + s + "')");
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"mode", "terrain", "action_space", "joint_range", "gains", "randomization", "seeds", "trials",
              "eval_duration", "eval_profile", "label", "output_dir", "train", "checkpoint", "robot_config", "sweep",
              "plot"},
             "");
  ExperimentConfig c;
  opt(j, "mode", "", [&](const json& v, const std::string& n) { c.mode = parse_mode(as_string(v, n)); });
  opt(j, "terrain", "", [&](const json& v, const std::string& n) { c.terrain = parse_terrain(as_string(v, n)); });
  opt(j, "action_space", "",
      [&](const json& v, const std::string& n) { c.action_space = parse_action_space(as_string(v, n)); });
  opt(j, "joint_range", "",
      [&](const json& v, const std::string& n) { c.joint_range = parse_joint_range(as_string(v, n)); });
  opt(j, "gains", "", [&](const json& v, const std::string&) { parse_gains(v, c); });
  opt(j, "randomization", "", [&](const json& v, const std::string&) { parse_randomization(v, c); });
  opt(j, "seeds", "", [&](const json& v, const std::string&) {
    check_keys(v, {"train", "eval"}, "seeds");
    opt(v, "train", "seeds", [&](const json& s, const std::string& n) { c.train_seed = as_uint(s, n); });
    opt(v, "eval", "seeds", [&](const json& s, const std::string& n) { c.eval_seed = as_uint(s, n); });
  });
  opt(j, "trials", "", [&](const json& v, const std::string& n) { c.trials = as_int32(v, n); });
  opt(j, "eval_duration", "", [&](const json& v, const std::string& n) { c.eval_duration = as_double(v, n); });
  opt(j, "eval_profile", "",
      [&](const json& v, const std::string& n) { c.eval_profile = parse_eval_profile(as_string(v, n)); });
  opt(j, "label", "", [&](const json& v, const std::string& n) { c.label = as_string(v, n); });
  opt(j, "output_dir", "", [&](const json& v, const std::string& n) { c.output_dir = as_string(v, n); });
  opt(j, "train", "", [&](const json& v, const std::string&) { parse_train(v, c); });
  opt(j, "checkpoint", "", [&](const json& v, const std::string& n) { c.checkpoint = as_string(v, n); });
  opt(j, "robot_config", "", [&](const json& v, const std::string& n) { c.robot_config = as_string(v, n); });
  opt(j, "sweep", "", [&](const json& v, const std::string&) { parse_sweep(v, c); });
  opt(j, "plot", "", [&](const json& v, const std::string&) { parse_plot(v, c); });
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string to_json(const ExperimentConfig& c) {
  json r = {{"preset", c.randomization}};
  if (c.mass_scale) r["mass_scale"] = *c.mass_scale;
  if (c.friction_min) r["friction_min"] = *c.friction_min;
  if (c.friction_max) r["friction_max"] = *c.friction_max;
  if (c.load_probability) r["load_probability"] = *c.load_probability;
  if (c.load_mass_max) r["load_mass_max"] = *c.load_mass_max;
  const ppo::PpoConfig& p = c.ppo;
  json j = {
      {"mode", mode_name(c.mode)},
      {"terrain", terrain_name(c.terrain)},
      {"action_space", action_space_name(c.action_space)},
      {"joint_range", joint_range_name(c.joint_range)},
      {"gains",
       {{"cartesian_kp", vec3_json(c.cartesian_gains.kp)},
        {"cartesian_kd", vec3_json(c.cartesian_gains.kd)},
        {"joint_kp", c.joint_gains.kp},
        {"joint_kd", c.joint_gains.kd}}},
      {"randomization", r},
      {"seeds", {{"train", c.train_seed}, {"eval", c.eval_seed}}},
      {"trials", c.trials},
      {"eval_duration", c.eval_duration},
      {"eval_profile", eval_profile_name(c.eval_profile)},
      {"label", c.label},
      {"output_dir", c.output_dir},
      {"train",
       {{"total_steps", c.total_steps},
        {"checkpoint_every", c.checkpoint_every},
        {"lr", p.lr},
        {"anneal_lr", p.anneal_lr},
        {"epochs", p.epochs},
        {"minibatch", p.minibatch},
        {"gamma", p.gamma},
        {"lambda", p.lambda},
        {"clip", p.clip},
        {"value_coef", p.value_coef},
        {"entropy_coef", p.entropy_coef},
        {"horizon", p.horizon},
        {"workers", p.workers},
        {"max_grad_norm", p.max_grad_norm},
        {"normalize_advantages", p.normalize_advantages},
        {"log_std_init", p.log_std_init},
        {"hidden", p.hidden}}},
      {"checkpoint", c.checkpoint},
      {"robot_config", c.robot_config},
      {"sweep", {{"loads", c.sweep.loads}, {"frictions", c.sweep.frictions}, {"dts", c.sweep.dts}}},
      {"plot", {{"csv", c.plot.csv}, {"x", c.plot.x}, {"y", c.plot.y}, {"out", c.plot.out}, {"title", c.plot.title}}},
  };
  return j.dump(2) + "\n";
}

RandomizationConfig ExperimentConfig::randomization_config() const {
  RandomizationConfig r = RandomizationConfig::preset(randomization);
  if (mass_scale) r.mass_scale = *mass_scale;
  if (friction_min) r.friction_min = *friction_min;
  if (friction_max) r.friction_max = *friction_max;
  if (load_probability) r.load_probability = *load_probability;
  if (load_mass_max) r.load_mass_max = *load_mass_max;
  return r;
}

void ExperimentConfig::validate() const {
  ppo.validate();
  randomization_config().validate();
  cartesian_gains.validate();
  joint_gains.validate();
  if (action_space == ActionSpace::Joint && !joint_gains.within_study_range()) {
    throw ConfigError("joint gains must satisfy 20 <= kp <= 100 and 0.1 <= kd <= 1");
  }
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (!(eval_duration > 0.0)) throw ConfigError("eval_duration must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  for (double m : sweep.loads) {
    if (!(m >= 0.0)) throw ConfigError("sweep loads must be non-negative");
  }
  for (double mu : sweep.frictions) {
    if (!(mu > 0.0)) throw ConfigError("sweep frictions must be positive");
  }
  for (double dt : sweep.dts) {
    if (!(dt > 0.0)) throw ConfigError("sweep dts must be positive");
  }
  if (sweep.loads.empty() || sweep.frictions.empty()) throw ConfigError("sweep needs at least one load and friction");
  if ((mode == Mode::Eval || mode == Mode::Sweep) && checkpoint.empty()) {
    throw ConfigError(mode_name(mode) + " needs a checkpoint");
  }
  if (mode == Mode::Plot && (plot.csv.empty() || plot.x.empty() || plot.y.empty() || plot.out.empty())) {
    throw ConfigError("plot needs csv, x, y and out");
  }
  // Building the env configs checks the remaining cross-field invariants.
  training_env_config(*this).validate();
  EnvConfig e = evaluation_env_config(*this);
  e.validate();
  for (double dt : sweep.dts) {
    e.physics_dt = dt;
    e.validate();
  }
}

std::filesystem::path resolve_output_dir(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  const char* root = std::getenv(kOutputRootEnv);
  if (root && *root) return std::filesystem::path(root) / p;
  return p;
}

EnvConfig training_env_config(const ExperimentConfig& c) {
  EnvConfig e;
  e.terrain = c.terrain;
  e.action_space = c.action_space;
  e.joint_range = c.joint_range;
  e.cartesian_gains = c.cartesian_gains;
  e.joint_gains = c.joint_gains;
  e.randomization = c.randomization_config();
  if (!c.robot_config.empty()) e.robot = load_robot_params(c.robot_config);
  return e;
}

EnvConfig evaluation_env_config(const ExperimentConfig& c) {
  EnvConfig e = training_env_config(c);
  if (c.eval_profile == EvalProfile::Perturbed) e = perturbed_eval_profile(e);
  e.observation.mode = ObservationMode::Eval;
  const double steps = c.eval_duration / e.control_period;
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps) {
    throw ConfigError("eval_duration must be a whole number of control periods");
  }
  e.horizon = static_cast<int>(std::lround(steps));
  return e;
}

}  // namespace quadrl::experiment
