#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "munlab/dynamics.hpp"
#include "munlab/envs.hpp"
#include "munlab/errors.hpp"
#include "munlab/orchestrator/episodes.hpp"
#include "munlab/replay.hpp"
#include "munlab/rng.hpp"

namespace munlab {

// Runs the controller from `start` toward `goal` until success or the horizon.
// A start that already satisfies the goal counts as success.
inline bool reaches_goal(EnvId id, const Controller& controller, EnvState st, const std::vector<double>& goal,
                         Rng& rng) {
  if (is_success(id, st.state, goal)) return true;
  const GoalCommand g{goal};
  while (!st.done) {
    const StepResult r = step(id, st, controller(st.state, goal), g, rng);
    if (r.reward == 1) return true;
    st = r.next;
  }
  return false;
}

// Fraction of episodes (goal from p_g, fresh reset) that reach the goal.
inline double evaluate_success(const Controller& controller, EnvId id, std::size_t n_episodes, Rng& rng) {
  if (n_episodes == 0) throw ContractViolation("evaluate_success: n_episodes must be >= 1");
  std::size_t hits = 0;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const EnvState st = reset(id, rng);
    const GoalCommand g = sample_env_goal(id, rng);
    hits += reaches_goal(id, controller, st, g.goal, rng) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(n_episodes);
}

struct NavigationMatrix {
  std::vector<std::vector<double>> cells;  // cells[i][j]: start at waypoint i, goal waypoint j
  double mean = 0.0;
  double off_diagonal_mean = 0.0;
};

inline NavigationMatrix navigation_matrix(const Controller& controller, EnvId id,
                                          const std::vector<std::vector<double>>& waypoints, std::size_t reps,
                                          Rng& rng) {
  if (waypoints.size() < 2) throw ContractViolation("navigation_matrix: at least 2 waypoints required");
  if (reps == 0) throw ContractViolation("navigation_matrix: reps must be >= 1");
  std::vector<EnvState> starts;
  for (const auto& w : waypoints) starts.push_back(inject_state(id, w));
  const std::size_t n = waypoints.size();
  NavigationMatrix m;
  m.cells.assign(n, std::vector<double>(n, 0.0));
  double total = 0.0, off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t hits = 0;
      for (std::size_t r = 0; r < reps; ++r) hits += reaches_goal(id, controller, starts[i], waypoints[j], rng) ? 1 : 0;
      m.cells[i][j] = static_cast<double>(hits) / static_cast<double>(reps);
      total += m.cells[i][j];
      if (i != j) off += m.cells[i][j];
    }
  }
  m.mean = total / static_cast<double>(n * n);
  m.off_diagonal_mean = off / static_cast<double>(n * (n - 1));
  return m;
}

// Reversed tuple (s', a', s): a' = -a where the environment is reversible by
// negation, otherwise a' = a.
inline Transition reverse_transition(EnvId id, const Transition& t) {
  Transition r = t;
  std::swap(r.s, r.s_next);
  if (env_spec(id).reversible_by_negation) {
    for (double& v : r.a) v = -v;
  }
  return r;
}

// Reversed probe. In environments reversible by negation, tuples whose reverse
// is not a real transition (a wall clipped the move) are left out.
inline std::vector<Transition> reverse_transitions(EnvId id, const std::vector<Transition>& probe) {
  const bool negate = env_spec(id).reversible_by_negation;
  std::vector<Transition> out;
  out.reserve(probe.size());
  for (const auto& t : probe) {
    if (negate && !undone_by_negation(id, t.s, t.a, t.s_next)) continue;
    out.push_back(reverse_transition(id, t));
  }
  return out;
}

// Equal share of `size` uniformly sampled tuples from each buffer.
inline std::vector<Transition> pooled_probe(const std::vector<const ReplayBuffer*>& buffers, std::size_t size,
                                            Rng& rng) {
  if (buffers.empty()) throw EmptySourceError("pooled_probe: no buffers");
  std::vector<Transition> out;
  for (std::size_t b = 0; b < buffers.size(); ++b) {
    const std::size_t share = size / buffers.size() + (b < size % buffers.size() ? 1 : 0);
    auto part = buffers[b]->sample_transitions(share, rng);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

struct ModelErrorRow {
  std::string method;
  double one_step = 0.0;
  double reversed_one_step = 0.0;
  double compound = 0.0;
};

struct ModelErrorReport {
  std::vector<ModelErrorRow> rows;
  // False when reversed tuples only swap s and s' (no action negation).
  bool reversed_negates_action = false;
  std::size_t reversed_tuples = 0;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "method,one_step_err,reversed_one_step_err,compound_err,reversed_mode,reversed_tuples\n";
    for (const auto& r : rows) {
      os << r.method << ',' << r.one_step << ',' << r.reversed_one_step << ',' << r.compound << ','
         << (reversed_negates_action ? "negated_action" : "swapped_only") << ',' << reversed_tuples << '\n';
    }
    return os.str();
  }
};

struct NamedModel {
  std::string name;
  const DynamicsEnsemble* model = nullptr;
};

// One-step error on the shared probe (and its reversal) plus mean compound
// error over the shared trajectories, per model.
inline ModelErrorReport model_error_report(EnvId id, const std::vector<NamedModel>& models,
                                           const std::vector<Transition>& probe,
                                           const std::vector<Episode>& trajectories) {
  if (probe.empty()) throw EmptySourceError("model_error_report: empty probe set");
  ModelErrorReport rep;
  rep.reversed_negates_action = env_spec(id).reversible_by_negation;
  const auto reversed = reverse_transitions(id, probe);
  rep.reversed_tuples = reversed.size();
  for (const auto& nm : models) {
    ModelErrorRow row;
    row.method = nm.name;
    row.one_step = one_step_error(*nm.model, probe);
    row.reversed_one_step = reversed.empty() ? std::nan("") : one_step_error(*nm.model, reversed);
    double c = 0.0;
    std::size_t used = 0;
    for (const auto& ep : trajectories) {
      if (ep.size() == 0) continue;
      c += compound_error(*nm.model, ep);
      ++used;
    }
    row.compound = used ? c / static_cast<double>(used) : std::nan("");
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace munlab
