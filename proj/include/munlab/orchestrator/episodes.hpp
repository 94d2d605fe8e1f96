#pragma once

#include <functional>
#include <span>
#include <vector>

#include "munlab/agent.hpp"
#include "munlab/envs.hpp"
#include "munlab/errors.hpp"
#include "munlab/replay.hpp"
#include "munlab/rng.hpp"

namespace munlab {

// Maps (state, goal) to an action. Used for both trained policies and test stubs.
using Controller = std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

// Rolls one step and records the transition. The returned state has `done`
// cleared unless the horizon was reached, so the caller decides when to stop.
inline Transition rollout_step(EnvId id, EnvState& st, std::span<const double> action, const std::vector<double>& goal,
                               Rng& rng) {
  const StepResult r = step(id, st, action, GoalCommand{goal}, rng);
  Transition t{st.state, {action.begin(), action.end()}, r.next.state, goal, r.reward, r.done};
  st = r.next;
  st.done = st.step_index >= env_spec(id).horizon;
  return t;
}

// Directed exploration: N_s subgoals drawn uniformly from `subgoals`, each
// pursued until reached or T_s steps pass. Steps are concatenated into one episode.
inline Episode run_mun_episode(EnvId id, const Controller& policy, const std::vector<std::vector<double>>& subgoals,
                               std::size_t n_s, std::size_t t_s, Rng& rng) {
  if (subgoals.empty()) throw EmptySourceError("run_mun_episode: subgoal set is empty");
  Episode ep;
  ep.provenance = Provenance::dad_directed;
  ep.subgoal_trace.emplace();
  EnvState st = reset(id, rng);
  for (std::size_t k = 0; k < n_s; ++k) {
    const std::vector<double>& g = subgoals[rng.index(subgoals.size())];
    SubgoalVisit visit{g, subgoal_reached(id, st.state, g), 0};
    while (!visit.reached && visit.steps_used < t_s && !st.done) {
      const auto a = policy(st.state, g);
      ep.transitions.push_back(rollout_step(id, st, a, g, rng));
      ++visit.steps_used;
      visit.reached = subgoal_reached(id, st.state, g);
    }
    ep.subgoal_trace->push_back(std::move(visit));
  }
  if (!ep.transitions.empty()) ep.transitions.back().done = true;
  return ep;
}

// Go phase toward `goal` for up to t_go steps, then t_explore steps of the
// explorer. Stored as a directed episode with a one-entry trace.
inline Episode run_go_explore_episode(EnvId id, const Controller& goal_policy, const Controller& explorer,
                                      const std::vector<double>& goal, std::size_t t_go, std::size_t t_explore,
                                      Rng& rng) {
  Episode ep;
  ep.provenance = Provenance::dad_directed;
  EnvState st = reset(id, rng);
  SubgoalVisit visit{goal, subgoal_reached(id, st.state, goal), 0};
  while (!visit.reached && visit.steps_used < t_go && !st.done) {
    ep.transitions.push_back(rollout_step(id, st, goal_policy(st.state, goal), goal, rng));
    ++visit.steps_used;
    visit.reached = subgoal_reached(id, st.state, goal);
  }
  for (std::size_t k = 0; k < t_explore && !st.done; ++k) {
    ep.transitions.push_back(rollout_step(id, st, explorer(st.state, goal), goal, rng));
  }
  ep.subgoal_trace = std::vector<SubgoalVisit>{std::move(visit)};
  if (!ep.transitions.empty()) ep.transitions.back().done = true;
  return ep;
}

// One episode toward a goal from p_g; ends on success or at the horizon.
inline Episode run_env_goal_episode(EnvId id, const Controller& policy, Rng& rng) {
  Episode ep;
  ep.provenance = Provenance::env_goal;
  EnvState st = reset(id, rng);
  const GoalCommand g = sample_env_goal(id, rng);
  while (true) {
    auto a = policy(st.state, g.goal);
    const StepResult r = step(id, st, a, g, rng);
    ep.transitions.push_back({st.state, std::move(a), r.next.state, g.goal, r.reward, r.done});
    st = r.next;
    if (r.done) break;
  }
  return ep;
}

inline Controller policy_controller(const GoalPolicy& policy, ActMode mode, Rng& rng) {
  return [&policy, mode, &rng](std::span<const double> s, std::span<const double> g) {
    return act(policy, s, g, mode, rng);
  };
}

}  // namespace munlab
