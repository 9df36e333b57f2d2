#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "arl/disentangle.hpp"
#include "arl/loop.hpp"
#include "arl/maze.hpp"

namespace arl {

using nlohmann::json;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct EvalConfig {
  int n_per_cell = 5;           // uniform maze evaluation episodes per cell
  int trials_per_scenario = 1;  // deterministic policy: one trial suffices
  long eval_every = 0;          // episodes between snapshots; 0 = final only
  int tail_episodes = 100;      // training-tail statistics window

  void validate() const {
    if (n_per_cell < 1) throw ConfigError("eval config: n_per_cell must be >= 1");
    if (trials_per_scenario < 1)
      throw ConfigError("eval config: trials_per_scenario must be >= 1");
    if (eval_every < 0)
      throw ConfigError("eval config: eval_every must be >= 0");
    if (tail_episodes < 1)
      throw ConfigError("eval config: tail_episodes must be >= 1");
  }
};

// Everything one training run needs, resolvable to and from a JSON document.
// protagonist_horizon = 0 in the arl section means "inherit the environment's
// episode horizon"; it is resolved in finalize_run_config.
struct RunConfig {
  std::string env_kind = "maze";  // maze | disentangle2d
  std::string maze_file;          // empty = bundled layout
  MazeConfig maze;
  std::string scenario_file;  // empty = bundled scenario set
  ArmConfig arm;
  SacConfig protagonist;
  SacConfig adversary;
  ArlConfig arl;
  EvalConfig eval;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;  // episodes between checkpoints; 0 = final only
};

namespace detail {

inline void check_keys(const json& j, const std::string& section,
                       std::initializer_list<const char*> allowed) {
  if (j.is_null()) return;
  if (!j.is_object())
    throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known)
      throw ConfigError("config: unknown key '" + section + "." + item.key() +
                        "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (j.is_null() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key +
                      "': " + e.what());
  }
}

}  // namespace detail

inline json run_config_to_json(const RunConfig& rc) {
  json env;
  env["kind"] = rc.env_kind;
  if (rc.env_kind == "maze") {
    env["maze_file"] = rc.maze_file;
    env["max_speed"] = rc.maze.max_speed;
    env["step_penalty_coeff"] = rc.maze.step_penalty_coeff;
    env["goal_reward"] = rc.maze.goal_reward;
    env["horizon"] = rc.maze.horizon;
  } else {
    env["scenario_file"] = rc.scenario_file;
    env["gamma"] = rc.arm.gamma;
    env["horizon"] = rc.arm.horizon;
    env["max_joint_delta"] = rc.arm.max_joint_delta;
  }

  auto sac = [](const SacConfig& c) {
    json s;
    s["gamma"] = c.gamma;
    s["tau"] = c.tau;
    s["lr"] = c.lr;
    s["batch_size"] = c.batch_size;
    s["grad_steps_per_env_step"] = c.grad_steps_per_env_step;
    s["auto_entropy"] = c.auto_entropy;
    s["alpha"] = c.alpha;
    s["alpha_init"] = c.alpha_init;
    s["target_entropy"] = c.target_entropy;
    s["buffer_capacity"] = c.buffer_capacity;
    s["hidden"] = c.hidden;
    return s;
  };

  json arl_sec;
  arl_sec["iterations"] = rc.arl.iterations;
  arl_sec["adversary_episodes"] = rc.arl.adversary_episodes;
  arl_sec["protagonist_episodes"] = rc.arl.protagonist_episodes;
  arl_sec["adversary_horizon"] = rc.arl.adversary_horizon;
  arl_sec["protagonist_horizon"] = rc.arl.protagonist_horizon;
  arl_sec["adversary_kind"] = adversary_kind_name(rc.arl.adversary_kind);
  arl_sec["relabel_adversary_rewards"] = rc.arl.relabel_adversary_rewards;

  json eval_sec;
  eval_sec["n_per_cell"] = rc.eval.n_per_cell;
  eval_sec["trials_per_scenario"] = rc.eval.trials_per_scenario;
  eval_sec["eval_every"] = rc.eval.eval_every;
  eval_sec["tail_episodes"] = rc.eval.tail_episodes;

  json doc;
  doc["env"] = env;
  doc["sac"] = {{"protagonist", sac(rc.protagonist)}, {"adversary", sac(rc.adversary)}};
  doc["arl"] = arl_sec;
  doc["eval"] = eval_sec;
  doc["seed"] = rc.seed;
  doc["checkpoint_every"] = rc.checkpoint_every;
  return doc;
}

inline SacConfig sac_config_from_json(const json& j, const std::string& section) {
  using detail::get_or;
  detail::check_keys(j, section,
                     {"gamma", "tau", "lr", "batch_size",
                      "grad_steps_per_env_step", "auto_entropy", "alpha",
                      "alpha_init", "target_entropy", "buffer_capacity",
                      "hidden"});
  SacConfig c;
  c.gamma = get_or(j, "gamma", c.gamma);
  c.tau = get_or(j, "tau", c.tau);
  c.lr = get_or(j, "lr", c.lr);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.grad_steps_per_env_step =
      get_or(j, "grad_steps_per_env_step", c.grad_steps_per_env_step);
  c.auto_entropy = get_or(j, "auto_entropy", c.auto_entropy);
  c.alpha = get_or(j, "alpha", c.alpha);
  c.alpha_init = get_or(j, "alpha_init", c.alpha_init);
  c.target_entropy = get_or(j, "target_entropy", c.target_entropy);
  c.buffer_capacity = get_or(j, "buffer_capacity", c.buffer_capacity);
  c.hidden = get_or(j, "hidden", c.hidden);
  return c;
}

inline RunConfig run_config_from_json(const json& doc) {
  using detail::get_or;
  detail::check_keys(doc, "",
                     {"env", "sac", "arl", "eval", "seed", "method",
                      "checkpoint_every"});
  RunConfig rc;

  const json env = doc.contains("env") ? doc.at("env") : json();
  rc.env_kind = get_or<std::string>(env, "kind", "maze");
  if (rc.env_kind == "maze") {
    detail::check_keys(env, "env",
                       {"kind", "maze_file", "max_speed", "step_penalty_coeff",
                        "goal_reward", "horizon"});
    rc.maze_file = get_or<std::string>(env, "maze_file", "");
    rc.maze.max_speed = get_or(env, "max_speed", rc.maze.max_speed);
    rc.maze.step_penalty_coeff =
        get_or(env, "step_penalty_coeff", rc.maze.step_penalty_coeff);
    rc.maze.goal_reward = get_or(env, "goal_reward", rc.maze.goal_reward);
    rc.maze.horizon = get_or(env, "horizon", rc.maze.horizon);
  } else if (rc.env_kind == "disentangle2d") {
    detail::check_keys(env, "env",
                       {"kind", "scenario_file", "gamma", "horizon",
                        "max_joint_delta"});
    rc.scenario_file = get_or<std::string>(env, "scenario_file", "");
    rc.arm.gamma = get_or(env, "gamma", rc.arm.gamma);
    rc.arm.horizon = get_or(env, "horizon", rc.arm.horizon);
    rc.arm.max_joint_delta = get_or(env, "max_joint_delta", rc.arm.max_joint_delta);
  } else {
    throw ConfigError("config: env.kind must be maze or disentangle2d, got '" +
                      rc.env_kind + "'");
  }

  const json sac = doc.contains("sac") ? doc.at("sac") : json();
  detail::check_keys(sac, "sac", {"protagonist", "adversary"});
  rc.protagonist = sac_config_from_json(
      sac.is_object() && sac.contains("protagonist") ? sac.at("protagonist")
                                                     : json(),
      "sac.protagonist");
  rc.adversary = sac_config_from_json(
      sac.is_object() && sac.contains("adversary") ? sac.at("adversary")
                                                   : json(),
      "sac.adversary");

  const json arl_sec = doc.contains("arl") ? doc.at("arl") : json();
  detail::check_keys(arl_sec, "arl",
                     {"iterations", "adversary_episodes", "protagonist_episodes",
                      "adversary_horizon", "protagonist_horizon",
                      "adversary_kind", "relabel_adversary_rewards"});
  rc.arl.iterations = get_or(arl_sec, "iterations", rc.arl.iterations);
  rc.arl.adversary_episodes =
      get_or(arl_sec, "adversary_episodes", rc.arl.adversary_episodes);
  rc.arl.protagonist_episodes =
      get_or(arl_sec, "protagonist_episodes", rc.arl.protagonist_episodes);
  rc.arl.adversary_horizon =
      get_or(arl_sec, "adversary_horizon", rc.arl.adversary_horizon);
  rc.arl.protagonist_horizon = get_or(arl_sec, "protagonist_horizon", 0);
  rc.arl.relabel_adversary_rewards = get_or(
      arl_sec, "relabel_adversary_rewards", rc.arl.relabel_adversary_rewards);

  const bool has_kind =
      arl_sec.is_object() && arl_sec.contains("adversary_kind");
  if (has_kind)
    rc.arl.adversary_kind = adversary_kind_from_string(
        arl_sec.at("adversary_kind").get<std::string>());

  // "method" is a shorthand for the three baselines of the experiment grid.
  if (doc.contains("method")) {
    if (has_kind)
      throw ConfigError(
          "config: give either 'method' or 'arl.adversary_kind', not both");
    const std::string m = doc.at("method").get<std::string>();
    if (m == "sac") {
      rc.arl.adversary_kind = AdversaryKind::none;
      rc.arl.adversary_horizon = 0;
    } else if (m == "ra") {
      rc.arl.adversary_kind = AdversaryKind::random;
    } else if (m == "asac") {
      rc.arl.adversary_kind = AdversaryKind::learned;
    } else {
      throw ConfigError("config: unknown method '" + m +
                        "' (expected sac|ra|asac)");
    }
  }

  const json eval_sec = doc.contains("eval") ? doc.at("eval") : json();
  detail::check_keys(eval_sec, "eval",
                     {"n_per_cell", "trials_per_scenario", "eval_every",
                      "tail_episodes"});
  rc.eval.n_per_cell = get_or(eval_sec, "n_per_cell", rc.eval.n_per_cell);
  rc.eval.trials_per_scenario =
      get_or(eval_sec, "trials_per_scenario", rc.eval.trials_per_scenario);
  rc.eval.eval_every = get_or(eval_sec, "eval_every", rc.eval.eval_every);
  rc.eval.tail_episodes = get_or(eval_sec, "tail_episodes", rc.eval.tail_episodes);

  rc.seed = get_or<std::uint64_t>(doc, "seed", 0);
  rc.checkpoint_every = get_or(doc, "checkpoint_every", rc.checkpoint_every);
  return rc;
}

// Fills inherited values and validates every section. Call before any work.
inline void finalize_run_config(RunConfig& rc) {
  const int env_horizon =
      rc.env_kind == "maze" ? rc.maze.horizon : rc.arm.horizon;
  if (rc.arl.protagonist_horizon == 0) rc.arl.protagonist_horizon = env_horizon;
  if (rc.arl.protagonist_horizon > env_horizon)
    throw ConfigError(
        "config: arl.protagonist_horizon exceeds the environment horizon");
  if (rc.env_kind == "disentangle2d" && !(rc.arm.gamma < 1.0))
    throw ConfigError(
        "config: env.gamma must be < 1 for disentangle2d; the collision "
        "penalty is singular at 1");
  if (rc.env_kind == "disentangle2d" && !(rc.arm.gamma > 0.0))
    throw ConfigError("config: env.gamma must be positive");
  if (rc.checkpoint_every < 0)
    throw ConfigError("config: checkpoint_every must be >= 0");
  rc.arl.validate();
  rc.protagonist.validate();
  rc.adversary.validate();
  rc.eval.validate();
}

// "a.b.c=value" applied onto the JSON document; the value is parsed as JSON
// when possible (numbers, booleans, arrays) and kept as a string otherwise.
inline void apply_override(json& doc, const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + spec + "' is not of the form key=value");
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings land here
  }

  json* cur = &doc;
  size_t pos = 0;
  while (true) {
    const size_t dot = path.find('.', pos);
    const std::string part = path.substr(pos, dot - pos);
    if (part.empty())
      throw ConfigError("override '" + spec + "' has an empty path segment");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    cur = &(*cur)[part];
    pos = dot + 1;
  }
}

inline RunConfig load_run_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!config_path.empty()) {
    const std::string text = read_text_file(config_path);
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError("config: failed to parse " + config_path + ": " +
                        e.what());
    }
  }
  for (const std::string& ov : overrides) apply_override(doc, ov);
  RunConfig rc = run_config_from_json(doc);
  finalize_run_config(rc);
  return rc;
}

// Stable 64-bit digest of the resolved configuration, used to name run
// directories; nlohmann orders object keys, so dumps are canonical.
inline std::string config_hash_hex(const json& doc) {
  const std::string s = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

// ---- environment construction ----

inline MazeEnv make_maze_env(const RunConfig& rc) {
  std::string text;
  if (rc.maze_file.empty()) {
    text = kDefaultMazeText;
  } else {
    std::ifstream in(rc.maze_file, std::ios::binary);
    if (!in) throw ConfigError("maze file not found: " + rc.maze_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  return MazeEnv(parse_maze(text), rc.maze);
}

inline DisentangleEnv make_disentangle_env(const RunConfig& rc) {
  std::string text;
  if (rc.scenario_file.empty()) {
    text = kDefaultScenarioText;
  } else {
    std::ifstream in(rc.scenario_file, std::ios::binary);
    if (!in) throw ConfigError("scenario file not found: " + rc.scenario_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  return DisentangleEnv(rc.arm, default_shapes(), parse_scenarios(text));
}

}  // namespace arl
