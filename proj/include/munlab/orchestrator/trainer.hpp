#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "munlab/agent.hpp"
#include "munlab/distance.hpp"
#include "munlab/dynamics.hpp"
#include "munlab/envs.hpp"
#include "munlab/errors.hpp"
#include "munlab/orchestrator/config.hpp"
#include "munlab/orchestrator/episodes.hpp"
#include "munlab/orchestrator/evaluation.hpp"
#include "munlab/orchestrator/metrics.hpp"
#include "munlab/orchestrator/serialize.hpp"
#include "munlab/replay.hpp"
#include "munlab/rng.hpp"
#include "munlab/subgoals.hpp"

namespace munlab {

inline constexpr char kCheckpointMagic[] = "MUNLAB";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace rng_streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t train = 2;
inline constexpr std::uint64_t nominal_start = 3;
inline constexpr std::uint64_t eval_base = 1u << 20;
}  // namespace rng_streams

// Resumable training loop for every method. One call to iterate() is one
// iteration of the outer loop: optional re-planning, the method's episode, one
// environment-goal episode, then the model and agent updates.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg) : cfg_(std::move(cfg)), buffer_(cfg_.replay_capacity) {
    cfg_.validate();
    const EnvSpec spec = env_spec(cfg_.env_id);
    Rng init = Rng::derive(cfg_.seed, rng_streams::init);
    model_ = make_dynamics(spec.state_dim, spec.action_dim, cfg_.ensemble_size, cfg_.model_hidden, init);
    for (const auto& m : model_.members) model_opts_.push_back(make_adam(m, cfg_.model_lr));
    policy_ = make_policy(spec, cfg_.policy_hidden, cfg_.action_noise_std, init);
    critic_ = make_value_net(spec, cfg_.critic_hidden, init);
    dnet_ = make_distance_net(obs_normalizer(spec), cfg_.distance_hidden, cfg_.imag_horizon, init);
    actor_opt_ = make_adam(policy_.net, cfg_.actor_lr);
    critic_opt_ = make_adam(critic_.net, cfg_.critic_lr);
    dnet_opt_ = make_adam(dnet_.net, cfg_.distance_lr);
    if (is_go_explore(cfg_.method)) {
      explorer_ = make_explorer(spec, cfg_.policy_hidden, cfg_.action_noise_std, init);
      explorer_actor_opt_ = make_adam(explorer_->actor.net, cfg_.actor_lr);
      explorer_critic_opt_ = make_adam(explorer_->critic.net, cfg_.critic_lr);
    }
    rng_ = Rng::derive(cfg_.seed, rng_streams::train);
  }

  const ExperimentConfig& config() const { return cfg_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const DynamicsEnsemble& model() const { return model_; }
  const GoalPolicy& policy() const { return policy_; }
  const ValueNet& critic() const { return critic_; }
  const DistanceNet& distance_net() const { return dnet_; }
  const std::optional<ExplorerPolicy>& explorer() const { return explorer_; }
  const SubgoalSet& subgoals() const { return subgoals_; }
  const std::vector<MetricsRecord>& metrics() const { return metrics_; }
  const Rng& rng() const { return rng_; }
  std::size_t iteration() const { return iteration_; }
  std::size_t env_steps() const { return env_steps_; }

  bool finished() const {
    if (cfg_.env_step_budget > 0 && env_steps_ >= cfg_.env_step_budget) return true;
    return cfg_.N_train > 0 && iteration_ >= cfg_.N_train;
  }

  void iterate() {
    if (finished()) throw ContractViolation("Trainer::iterate: training already finished");
    const std::size_t i = ++iteration_;
    const Controller pi = policy_controller(policy_, ActMode::stochastic, rng_);
    const auto env_goals = env_goal_set(cfg_.env_id);

    if (is_mun_family(cfg_.method)) {
      const bool due = !have_subgoals_ || (i - 1) % cfg_.plan_every == 0;
      if (due && !buffer_.d_egc().empty()) replan();
      const auto& pool = have_subgoals_ ? subgoals_.goals : env_goals;
      collect(run_mun_episode(cfg_.env_id, pi, pool, cfg_.N_s, cfg_.T_s, rng_));
    } else if (is_go_explore(cfg_.method) && i % 2 == 0) {
      const std::vector<double> goal = choose_go_goal();
      const ExplorerPolicy& ex = *explorer_;
      const Controller explore = [&ex, this](std::span<const double> s, std::span<const double>) {
        return act(ex.actor, s, s, ActMode::stochastic, rng_);
      };
      collect(run_go_explore_episode(cfg_.env_id, pi, explore, goal, cfg_.T_go, cfg_.T_explore, rng_));
      go_goals_.push_back(goal);
      if (go_goals_.size() > cfg_.N_subgoals) go_goals_.erase(go_goals_.begin());
    }
    collect(run_env_goal_episode(cfg_.env_id, pi, rng_));

    update_models();
    if (i % cfg_.eval_every == 0 || finished()) record_metrics();
  }

  // Runs until finished. A non-finite loss writes `abort_checkpoint` (if set) and rethrows.
  void run(const std::string& abort_checkpoint = {}) {
    while (!finished()) {
      try {
        iterate();
      } catch (const TrainingDivergence&) {
        if (!abort_checkpoint.empty()) write_file(abort_checkpoint, save());
        throw;
      } catch (const ModelDivergence&) {
        if (!abort_checkpoint.empty()) write_file(abort_checkpoint, save());
        throw;
      }
    }
  }

  Controller greedy_controller() const {
    return [this](std::span<const double> s, std::span<const double> g) {
      Rng unused;
      return act(policy_, s, g, ActMode::deterministic, unused);
    };
  }

  // Imagination goal pool for the goal-conditioned agent.
  const std::vector<std::vector<double>>& goal_pool() const {
    static const std::vector<std::vector<double>> none;
    if (is_mun_family(cfg_.method)) return have_subgoals_ ? subgoals_.goals : none;
    if (is_go_explore(cfg_.method)) return go_goals_;
    return none;
  }

  std::string save() const;
  static Trainer load(std::string_view bytes);

 private:
  Trainer() = default;

  void collect(Episode ep) {
    env_steps_ += ep.size();
    if (ep.subgoal_trace && is_mun_family(cfg_.method)) {
      for (const auto& v : *ep.subgoal_trace) {
        ++visits_;
        reached_ += v.reached ? 1 : 0;
      }
    }
    buffer_.append(std::move(ep));
  }

  void replan() {
    const auto batch = buffer_.sample_episode_batch(EpisodeSource::egc, cfg_.plan_batch_episodes, rng_);
    std::size_t transitions = 0;
    for (const auto& e : batch) transitions += e.size();
    if (transitions == 0) return;
    subgoals_ = cfg_.method == Method::mun_nodad ? fixed_interval_subgoals(batch, cfg_.N_subgoals)
                                                 : dad(batch, cfg_.N_subgoals, rng_);
    subgoals_.created_at_step = env_steps_;
    have_subgoals_ = true;
  }

  std::vector<double> nominal_start() const {
    Rng r = Rng::derive(cfg_.seed, rng_streams::nominal_start);
    return reset(cfg_.env_id, r).state;
  }

  std::vector<double> choose_go_goal() {
    std::vector<std::vector<double>> candidates;
    for (const auto& t : buffer_.sample_transitions(cfg_.goal_candidates, rng_)) candidates.push_back(eta(t.s_next));
    const std::vector<double> start = nominal_start();
    if (cfg_.method == Method::mega_g) {
      std::vector<std::vector<double>> achieved;
      for (const auto& t : buffer_.sample_transitions(4 * cfg_.goal_candidates, rng_)) achieved.push_back(eta(t.s_next));
      const KdeModel kde = make_kde(std::move(achieved), cfg_.kde_bandwidth_scale);
      return kde_min_density_goal(kde, candidates, [&](const std::vector<double>& g) {
        return distance(dnet_, start, g) <= cfg_.reach_threshold;
      });
    }
    return exploration_potential_goal(model_, policy_, explorer_->critic, candidates, cfg_.potential_rollouts, start,
                                      cfg_.imag_horizon, rng_)
        .goal;
  }

  ImaginationConfig imagination(double gamma) const {
    return ImaginationConfig{cfg_.imag_horizon, gamma, cfg_.lambda, cfg_.imag_batch, cfg_.grad_clip};
  }

  void update_models() {
    for (std::size_t u = 0; u < cfg_.model_updates_per_episode; ++u) {
      train_model_step(model_, buffer_, cfg_.model_batch, model_opts_, rng_, cfg_.grad_clip);
    }
    const auto env_goals = env_goal_set(cfg_.env_id);
    const ImaginationConfig goal_cfg = imagination(cfg_.gamma);
    const ImaginationConfig explore_cfg = imagination(cfg_.explorer_gamma);
    for (std::size_t u = 0; u < cfg_.agent_updates_per_episode; ++u) {
      const AgentDiagnostics d = train_goal_agent_step(policy_, critic_, model_, dnet_, buffer_, goal_pool(), env_goals,
                                                       goal_cfg, actor_opt_, critic_opt_, rng_);
      const auto pairs = sample_distance_pairs(d.rollouts, cfg_.pairs_per_rollout, rng_, cfg_.distance_negative_fraction);
      if (!pairs.empty()) train_distance_on_pairs(dnet_, pairs, dnet_opt_, cfg_.grad_clip);
      if (explorer_) {
        train_explorer_step(*explorer_, model_, buffer_, explore_cfg, explorer_actor_opt_, explorer_critic_opt_, rng_);
      }
    }
  }

  void record_metrics() {
    Rng eval = Rng::derive(cfg_.seed, rng_streams::eval_base + iteration_);
    const EnvSpec spec = env_spec(cfg_.env_id);
    MetricsRecord r;
    r.env_step = env_steps_;
    r.eval_success_rate = evaluate_success(greedy_controller(), cfg_.env_id, cfg_.eval_episodes, eval);
    r.one_step_err = one_step_error(model_, buffer_.sample_transitions(cfg_.probe_size, eval));
    const Episode& latest = buffer_.d_egc().back();
    r.compound_err = compound_error(model_, latest);
    r.bidirectional_fraction = directional_coverage(buffer_, spec.coverage_cell, spec.coverage_dims).bidirectional_fraction;
    r.subgoal_reach_rate = visits_ ? static_cast<double>(reached_) / static_cast<double>(visits_) : 0.0;
    visits_ = 0;
    reached_ = 0;
    metrics_.push_back(r);
  }

  ExperimentConfig cfg_;
  Rng rng_;
  DynamicsEnsemble model_;
  std::vector<AdamState> model_opts_;
  GoalPolicy policy_;
  ValueNet critic_;
  DistanceNet dnet_;
  AdamState actor_opt_, critic_opt_, dnet_opt_;
  std::optional<ExplorerPolicy> explorer_;
  AdamState explorer_actor_opt_, explorer_critic_opt_;
  ReplayBuffer buffer_;
  SubgoalSet subgoals_;
  bool have_subgoals_ = false;
  std::vector<std::vector<double>> go_goals_;
  std::size_t iteration_ = 0;
  std::size_t env_steps_ = 0;
  std::size_t visits_ = 0;
  std::size_t reached_ = 0;
  std::vector<MetricsRecord> metrics_;
};

namespace checkpoint_detail {

inline void section(io::Writer& out, const std::string& name, const io::Writer& body) {
  out.str(name);
  out.str(body.data());
}

}  // namespace checkpoint_detail

// Layout: "MUNLAB", u32 format version, u64 section count, then (name, payload)
// string pairs.
inline std::string Trainer::save() const {
  using checkpoint_detail::section;
  std::vector<std::pair<std::string, io::Writer>> parts;
  auto add = [&](const std::string& name) -> io::Writer& { return parts.emplace_back(name, io::Writer{}).second; };

  add("config").str(cfg_.to_text());
  {
    io::Writer& w = add("progress");
    w.u64(iteration_);
    w.u64(env_steps_);
    w.u64(visits_);
    w.u64(reached_);
    w.boolean(have_subgoals_);
  }
  io::put(add("rng"), rng_);
  {
    io::Writer& w = add("model");
    io::put(w, model_);
    w.u64(model_opts_.size());
    for (const auto& o : model_opts_) io::put(w, o);
  }
  {
    io::Writer& w = add("agent");
    io::put(w, policy_);
    io::put(w, actor_opt_);
    io::put(w, critic_);
    io::put(w, critic_opt_);
  }
  {
    io::Writer& w = add("distance");
    io::put(w, dnet_);
    io::put(w, dnet_opt_);
  }
  if (explorer_) {
    io::Writer& w = add("explorer");
    io::put(w, explorer_->actor);
    io::put(w, explorer_actor_opt_);
    io::put(w, explorer_->critic);
    io::put(w, explorer_critic_opt_);
  }
  io::put(add("replay"), buffer_);
  {
    io::Writer& w = add("subgoals");
    io::put(w, subgoals_);
    io::put(w, go_goals_);
  }
  {
    io::Writer& w = add("metrics");
    w.u64(metrics_.size());
    for (const auto& r : metrics_) {
      w.u64(r.env_step);
      w.f64(r.eval_success_rate);
      w.f64(r.one_step_err);
      w.f64(r.compound_err);
      w.f64(r.bidirectional_fraction);
      w.f64(r.subgoal_reach_rate);
    }
  }

  io::Writer out;
  out.bytes(std::string(kCheckpointMagic, 6));
  out.u32(kCheckpointVersion);
  out.u64(parts.size());
  for (const auto& [name, body] : parts) section(out, name, body);
  return out.data();
}

inline Trainer Trainer::load(std::string_view bytes) {
  io::Reader in(bytes);
  if (bytes.size() < 6 || in.take(6) != std::string_view(kCheckpointMagic, 6)) {
    throw FormatError("not a checkpoint: missing MUNLAB header");
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  std::map<std::string, std::string> sections;
  const std::size_t count = in.length();
  for (std::size_t k = 0; k < count; ++k) {
    std::string name = in.str();
    sections[std::move(name)] = in.str();
  }
  if (!in.at_end()) throw FormatError("checkpoint has trailing bytes");
  auto get = [&](const std::string& name) -> const std::string& {
    const auto it = sections.find(name);
    if (it == sections.end()) throw FormatError("checkpoint is missing section '" + name + "'");
    return it->second;
  };
  auto finish = [](const io::Reader& r, const std::string& name) {
    if (!r.at_end()) throw FormatError("checkpoint section '" + name + "' has trailing bytes");
  };

  Trainer t;
  {
    io::Reader r(get("config"));
    try {
      t.cfg_ = parse_config(r.str());
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint config invalid: ") + e.what());
    }
    finish(r, "config");
  }
  {
    io::Reader r(get("progress"));
    t.iteration_ = r.u64();
    t.env_steps_ = r.u64();
    t.visits_ = r.u64();
    t.reached_ = r.u64();
    t.have_subgoals_ = r.boolean();
    finish(r, "progress");
  }
  {
    io::Reader r(get("rng"));
    t.rng_ = io::get_rng(r);
    finish(r, "rng");
  }
  {
    io::Reader r(get("model"));
    t.model_ = io::get_dynamics(r);
    const std::size_t n = r.length();
    for (std::size_t k = 0; k < n; ++k) t.model_opts_.push_back(io::get_adam(r));
    finish(r, "model");
  }
  {
    io::Reader r(get("agent"));
    t.policy_ = io::get_policy(r);
    t.actor_opt_ = io::get_adam(r);
    t.critic_ = io::get_value(r);
    t.critic_opt_ = io::get_adam(r);
    finish(r, "agent");
  }
  {
    io::Reader r(get("distance"));
    t.dnet_ = io::get_distance(r);
    t.dnet_opt_ = io::get_adam(r);
    finish(r, "distance");
  }
  if (is_go_explore(t.cfg_.method)) {
    io::Reader r(get("explorer"));
    ExplorerPolicy ex;
    ex.actor = io::get_policy(r);
    t.explorer_actor_opt_ = io::get_adam(r);
    ex.critic = io::get_value(r);
    t.explorer_critic_opt_ = io::get_adam(r);
    t.explorer_ = std::move(ex);
    finish(r, "explorer");
  }
  {
    io::Reader r(get("replay"));
    t.buffer_ = io::get_replay(r);
    finish(r, "replay");
  }
  {
    io::Reader r(get("subgoals"));
    t.subgoals_ = io::get_subgoals(r);
    t.go_goals_ = io::get_rows(r);
    finish(r, "subgoals");
  }
  {
    io::Reader r(get("metrics"));
    const std::size_t n = r.length();
    for (std::size_t k = 0; k < n; ++k) {
      MetricsRecord m;
      m.env_step = r.u64();
      m.eval_success_rate = r.f64();
      m.one_step_err = r.f64();
      m.compound_err = r.f64();
      m.bidirectional_fraction = r.f64();
      m.subgoal_reach_rate = r.f64();
      t.metrics_.push_back(m);
    }
    finish(r, "metrics");
  }
  if (t.model_opts_.size() != t.model_.size()) throw FormatError("checkpoint optimizer count mismatch");
  return t;
}

inline Trainer load_checkpoint(const std::string& path) { return Trainer::load(read_file(path)); }

// Trains to completion and writes metrics.csv, metrics.json and final.ckpt into out_dir.
inline std::vector<MetricsRecord> run_training(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  Trainer t(cfg);
  try {
    t.run((dir / "abort.ckpt").string());
  } catch (const Error&) {
    write_file((dir / "metrics.csv").string(), metrics_csv(t.metrics()));
    throw;
  }
  write_file((dir / "metrics.csv").string(), metrics_csv(t.metrics()));
  write_file((dir / "metrics.json").string(), metrics_json(t.metrics()).dump(2) + "\n");
  write_file((dir / "final.ckpt").string(), t.save());
  return t.metrics();
}

}  // namespace munlab
