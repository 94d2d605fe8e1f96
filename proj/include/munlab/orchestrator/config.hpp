#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "munlab/envs.hpp"
#include "munlab/errors.hpp"

namespace munlab {

enum class Method { mun, mun_nodad, mun_ns3, gc_only, mega_g, peg_g };

inline Method parse_method(std::string_view name) {
  if (name == "mun") return Method::mun;
  if (name == "mun_nodad") return Method::mun_nodad;
  if (name == "mun_ns3") return Method::mun_ns3;
  if (name == "gc_only") return Method::gc_only;
  if (name == "mega_g") return Method::mega_g;
  if (name == "peg_g") return Method::peg_g;
  throw ConfigError("method: unknown method '" + std::string(name) + "'");
}

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::mun: return "mun";
    case Method::mun_nodad: return "mun_nodad";
    case Method::mun_ns3: return "mun_ns3";
    case Method::gc_only: return "gc_only";
    case Method::mega_g: return "mega_g";
    case Method::peg_g: return "peg_g";
  }
  return "?";
}

inline bool is_mun_family(Method m) { return m == Method::mun || m == Method::mun_nodad || m == Method::mun_ns3; }
inline bool is_go_explore(Method m) { return m == Method::mega_g || m == Method::peg_g; }

struct ExperimentConfig {
  EnvId env_id = EnvId::point_maze;
  Method method = Method::mun;
  std::uint64_t seed = 0;

  // Loop length: stops at N_train iterations or once env_step_budget steps are
  // collected (0 disables the budget).
  std::size_t N_train = 1000;
  std::size_t env_step_budget = 0;

  std::size_t N_s = 2;
  std::size_t T_s = kSubgoalTimeLimit;
  std::size_t N_subgoals = 20;
  std::size_t plan_every = 10;
  std::size_t plan_batch_episodes = 10;

  std::size_t eval_every = 10;
  std::size_t eval_episodes = 20;
  std::size_t probe_size = 1000;

  std::size_t model_updates_per_episode = 100;
  std::size_t agent_updates_per_episode = 100;

  std::size_t replay_capacity = 500;

  std::size_t ensemble_size = 4;
  std::vector<std::size_t> model_hidden{128, 128};
  double model_lr = 1e-3;
  std::size_t model_batch = 256;

  std::vector<std::size_t> policy_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double action_noise_std = 0.1;

  std::vector<std::size_t> distance_hidden{64, 64};
  double distance_lr = 1e-3;
  std::size_t pairs_per_rollout = 8;
  double distance_negative_fraction = 0.0;

  std::size_t imag_horizon = 15;
  double gamma = 0.99;
  double lambda = 0.95;
  std::size_t imag_batch = 64;
  double grad_clip = 100.0;

  double kde_bandwidth_scale = 0.25;
  double reach_threshold = 0.8;
  std::size_t goal_candidates = 64;
  std::size_t potential_rollouts = 4;
  std::size_t T_go = kSubgoalTimeLimit;
  std::size_t T_explore = kSubgoalTimeLimit;
  double explorer_gamma = 0.99;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  std::string to_text() const;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range '" + v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(d)) throw ConfigError(key + ": expected a real number, got '" + v + "'");
  return d;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of layer sizes");
  for (std::size_t n : out) {
    if (n == 0) throw ConfigError(key + ": layer sizes must be positive");
  }
  return out;
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string real_text(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define MUNLAB_COUNT(name) \
  {#name, {[](ExperimentConfig& c, const std::string& v) { c.name = parse_count(#name, v); }, \
           [](const ExperimentConfig& c) { return std::to_string(c.name); }}}
#define MUNLAB_REAL(name) \
  {#name, {[](ExperimentConfig& c, const std::string& v) { c.name = parse_real(#name, v); }, \
           [](const ExperimentConfig& c) { return real_text(c.name); }}}
#define MUNLAB_SIZES(name) \
  {#name, {[](ExperimentConfig& c, const std::string& v) { c.name = parse_sizes(#name, v); }, \
           [](const ExperimentConfig& c) { return join(c.name); }}}

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"env", {[](ExperimentConfig& c, const std::string& v) {
                 try {
                   c.env_id = parse_env_id(v);
                 } catch (const ConfigError&) {
                   throw ConfigError("env: unknown environment '" + v + "'");
                 }
               },
               [](const ExperimentConfig& c) { return std::string(to_string(c.env_id)); }}},
      {"method", {[](ExperimentConfig& c, const std::string& v) { c.method = parse_method(v); },
                  [](const ExperimentConfig& c) { return std::string(to_string(c.method)); }}},
      {"seed", {[](ExperimentConfig& c, const std::string& v) { c.seed = parse_count("seed", v); },
                [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      MUNLAB_COUNT(N_train),
      MUNLAB_COUNT(env_step_budget),
      MUNLAB_COUNT(N_s),
      MUNLAB_COUNT(T_s),
      MUNLAB_COUNT(N_subgoals),
      MUNLAB_COUNT(plan_every),
      MUNLAB_COUNT(plan_batch_episodes),
      MUNLAB_COUNT(eval_every),
      MUNLAB_COUNT(eval_episodes),
      MUNLAB_COUNT(probe_size),
      MUNLAB_COUNT(model_updates_per_episode),
      MUNLAB_COUNT(agent_updates_per_episode),
      MUNLAB_COUNT(replay_capacity),
      MUNLAB_COUNT(ensemble_size),
      MUNLAB_SIZES(model_hidden),
      MUNLAB_REAL(model_lr),
      MUNLAB_COUNT(model_batch),
      MUNLAB_SIZES(policy_hidden),
      MUNLAB_SIZES(critic_hidden),
      MUNLAB_REAL(actor_lr),
      MUNLAB_REAL(critic_lr),
      MUNLAB_REAL(action_noise_std),
      MUNLAB_SIZES(distance_hidden),
      MUNLAB_REAL(distance_lr),
      MUNLAB_COUNT(pairs_per_rollout),
      MUNLAB_REAL(distance_negative_fraction),
      MUNLAB_COUNT(imag_horizon),
      MUNLAB_REAL(gamma),
      MUNLAB_REAL(lambda),
      MUNLAB_COUNT(imag_batch),
      MUNLAB_REAL(grad_clip),
      MUNLAB_REAL(kde_bandwidth_scale),
      MUNLAB_REAL(reach_threshold),
      MUNLAB_COUNT(goal_candidates),
      MUNLAB_COUNT(potential_rollouts),
      MUNLAB_COUNT(T_go),
      MUNLAB_COUNT(T_explore),
      MUNLAB_REAL(explorer_gamma),
  };
  return table;
}

#undef MUNLAB_COUNT
#undef MUNLAB_REAL
#undef MUNLAB_SIZES

}  // namespace config_detail

inline void ExperimentConfig::validate() const {
  const std::size_t horizon = env_spec(env_id).horizon;
  if (N_s < 1) throw ConfigError("N_s: must be >= 1");
  if (T_s < 1) throw ConfigError("T_s: must be >= 1");
  if (T_s * N_s > horizon) {
    throw ConfigError("T_s: T_s * N_s = " + std::to_string(T_s * N_s) + " exceeds the horizon " + std::to_string(horizon));
  }
  if (N_subgoals < N_s) throw ConfigError("N_subgoals: must be >= N_s");
  if (N_train == 0 && env_step_budget == 0) throw ConfigError("N_train: must be positive when env_step_budget is 0");
  if (plan_every == 0) throw ConfigError("plan_every: must be >= 1");
  if (plan_batch_episodes == 0) throw ConfigError("plan_batch_episodes: must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every: must be >= 1");
  if (eval_episodes == 0) throw ConfigError("eval_episodes: must be >= 1");
  if (probe_size == 0) throw ConfigError("probe_size: must be >= 1");
  if (replay_capacity == 0) throw ConfigError("replay_capacity: must be >= 1");
  if (ensemble_size == 0) throw ConfigError("ensemble_size: must be >= 1");
  if (is_go_explore(method) && ensemble_size < 2) {
    throw ConfigError("ensemble_size: the explorer needs at least 2 members");
  }
  if (model_batch == 0) throw ConfigError("model_batch: must be >= 1");
  if (imag_horizon == 0) throw ConfigError("imag_horizon: must be >= 1");
  if (imag_batch == 0) throw ConfigError("imag_batch: must be >= 1");
  if (pairs_per_rollout == 0) throw ConfigError("pairs_per_rollout: must be >= 1");
  if (goal_candidates == 0) throw ConfigError("goal_candidates: must be >= 1");
  if (potential_rollouts == 0) throw ConfigError("potential_rollouts: must be >= 1");
  if (T_go == 0 || T_go > horizon) throw ConfigError("T_go: must be in [1, horizon]");
  auto unit = [](const char* key, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(key) + ": must lie in [0, 1]");
  };
  unit("gamma", gamma);
  unit("lambda", lambda);
  unit("explorer_gamma", explorer_gamma);
  unit("distance_negative_fraction", distance_negative_fraction);
  for (auto [key, v] : {std::pair{"model_lr", model_lr}, std::pair{"actor_lr", actor_lr},
                        std::pair{"critic_lr", critic_lr}, std::pair{"distance_lr", distance_lr},
                        std::pair{"grad_clip", grad_clip}, std::pair{"kde_bandwidth_scale", kde_bandwidth_scale}}) {
    if (!(v > 0.0)) throw ConfigError(std::string(key) + ": must be positive");
  }
  if (action_noise_std < 0.0) throw ConfigError("action_noise_std: must be >= 0");
}

inline std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : config_detail::fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

// Applies `key = value` to the config. Unknown keys and malformed values raise
// ConfigError naming the key.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = config_detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(key + ": unknown configuration key");
  it->second.set(cfg, value);
}

// Flat `key = value` text; '#' starts a comment. `method = mun_ns3` sets N_s = 3
// and T_s = horizon / 3 unless those keys appear explicitly.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = config_detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(body + ": line " + std::to_string(lineno) + " is not of the form key = value");
    }
    const std::string key = config_detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = config_detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": missing key");
    if (seen.count(key)) throw ConfigError(key + ": duplicate key");
    seen[key] = value;
  }
  // env first so horizon-dependent defaults see the right environment.
  if (seen.count("env")) set_config_value(cfg, "env", seen["env"]);
  for (const auto& [key, value] : seen) {
    if (key != "env") set_config_value(cfg, key, value);
  }
  if (cfg.method == Method::mun_ns3) {
    if (!seen.count("N_s")) cfg.N_s = 3;
    if (!seen.count("T_s")) cfg.T_s = env_spec(cfg.env_id).horizon / 3;
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace munlab
