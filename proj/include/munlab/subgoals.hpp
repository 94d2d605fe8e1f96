#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "munlab/agent.hpp"
#include "munlab/dynamics.hpp"
#include "munlab/envs.hpp"
#include "munlab/errors.hpp"
#include "munlab/replay.hpp"
#include "munlab/rng.hpp"

namespace munlab {

enum class SubgoalStrategy { dad, fixed_interval, kde_min_density, exploration_potential };

struct SubgoalSet {
  std::vector<std::vector<double>> goals;
  SubgoalStrategy source_strategy = SubgoalStrategy::dad;
  std::size_t created_at_step = 0;
  // Flat transition index (over the concatenated input batch) behind each goal.
  std::vector<std::size_t> source_indices;

  bool empty() const { return goals.empty(); }

  friend bool operator==(const SubgoalSet&, const SubgoalSet&) = default;
};

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Farthest point sampling. The first index is random (or `forced_first`); each
// later pick maximises the minimum distance to the picks so far, ties going to
// the lowest index. Returns min(num_samples, |points|) distinct indices.
inline std::vector<std::size_t> fps(const std::vector<std::vector<double>>& points, std::size_t num_samples, Rng& rng,
                                    std::optional<std::size_t> forced_first = std::nullopt) {
  if (points.empty()) throw EmptySourceError("fps: no points");
  if (num_samples == 0) throw ContractViolation("fps: num_samples must be >= 1");
  const std::size_t n = points.size();
  const std::size_t first = forced_first ? *forced_first : rng.index(n);
  if (first >= n) throw ContractViolation("fps: forced first index out of range");
  const std::size_t count = std::min(num_samples, n);

  std::vector<std::size_t> picked{first};
  std::vector<bool> taken(n, false);
  taken[first] = true;
  std::vector<double> min_dist(n);
  for (std::size_t i = 0; i < n; ++i) min_dist[i] = euclidean(points[i], points[first]);
  while (picked.size() < count) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || min_dist[i] > min_dist[best]) best = i;
    }
    picked.push_back(best);
    taken[best] = true;
    for (std::size_t i = 0; i < n; ++i) min_dist[i] = std::min(min_dist[i], euclidean(points[i], points[best]));
  }
  return picked;
}

namespace detail {

inline std::vector<const Transition*> flatten(const std::vector<Episode>& episodes) {
  std::vector<const Transition*> flat;
  for (const auto& e : episodes) {
    for (const auto& t : e.transitions) flat.push_back(&t);
  }
  return flat;
}

}  // namespace detail

// Distinct Action Discovery: FPS over every action in the batch, then the
// state at which each selected action was taken, mapped through eta.
inline SubgoalSet dad(const std::vector<Episode>& episodes, std::size_t n_subgoals, Rng& rng,
                      std::optional<std::size_t> forced_first = std::nullopt) {
  const auto flat = detail::flatten(episodes);
  if (flat.empty()) throw EmptySourceError("dad: episode batch has no transitions");
  std::vector<std::vector<double>> actions;
  actions.reserve(flat.size());
  for (const auto* t : flat) actions.push_back(t->a);
  SubgoalSet set;
  set.source_strategy = SubgoalStrategy::dad;
  set.source_indices = fps(actions, n_subgoals, rng, forced_first);
  for (std::size_t idx : set.source_indices) set.goals.push_back(eta(flat[idx]->s));
  return set;
}

// States at indices floor(i * (total - 1) / (n - 1)) of the concatenated batch.
inline SubgoalSet fixed_interval_subgoals(const std::vector<Episode>& episodes, std::size_t n_subgoals) {
  const auto flat = detail::flatten(episodes);
  if (flat.empty()) throw EmptySourceError("fixed_interval_subgoals: episode batch has no transitions");
  if (n_subgoals == 0) throw ContractViolation("fixed_interval_subgoals: n must be >= 1");
  SubgoalSet set;
  set.source_strategy = SubgoalStrategy::fixed_interval;
  const std::size_t total = flat.size();
  for (std::size_t i = 0; i < n_subgoals; ++i) {
    const std::size_t idx = n_subgoals == 1 ? 0 : (i * (total - 1)) / (n_subgoals - 1);
    set.source_indices.push_back(idx);
    set.goals.push_back(eta(flat[idx]->s));
  }
  return set;
}

// Gaussian KDE over achieved goals with a per-dimension bandwidth.
struct KdeModel {
  std::vector<std::vector<double>> sample_goals;
  std::vector<double> bandwidth;
};

// Bandwidth = scale * per-dimension standard deviation of the samples (floored).
inline KdeModel make_kde(std::vector<std::vector<double>> samples, double scale = 0.25, double floor = 1e-3) {
  if (samples.empty()) throw EmptySourceError("make_kde: no samples");
  const std::size_t d = samples.front().size();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < d; ++i) mean[i] += s[i];
  }
  for (double& m : mean) m /= static_cast<double>(samples.size());
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < d; ++i) var[i] += (s[i] - mean[i]) * (s[i] - mean[i]);
  }
  KdeModel kde;
  kde.bandwidth.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    kde.bandwidth[i] = std::max(scale * std::sqrt(var[i] / static_cast<double>(samples.size())), floor);
  }
  kde.sample_goals = std::move(samples);
  return kde;
}

// log p_hat(g), computed with log-sum-exp so far candidates stay comparable.
inline double kde_log_density(const KdeModel& kde, std::span<const double> g) {
  if (kde.sample_goals.empty()) throw EmptySourceError("kde: no samples");
  double log_norm = 0.0;
  for (double h : kde.bandwidth) log_norm -= std::log(h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> expo;
  expo.reserve(kde.sample_goals.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& x : kde.sample_goals) {
    double q = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double z = (g[i] - x[i]) / kde.bandwidth[i];
      q += z * z;
    }
    expo.push_back(-0.5 * q);
    peak = std::max(peak, expo.back());
  }
  double sum = 0.0;
  for (double e : expo) sum += std::exp(e - peak);
  return peak + std::log(sum / static_cast<double>(kde.sample_goals.size())) + log_norm;
}

inline double kde_density(const KdeModel& kde, std::span<const double> g) { return std::exp(kde_log_density(kde, g)); }

// Lowest-density candidate among those passing `reachable`; if none pass the
// filter is ignored. Ties go to the lowest index.
inline std::vector<double> kde_min_density_goal(const KdeModel& kde, const std::vector<std::vector<double>>& candidates,
                                                const std::function<bool(const std::vector<double>&)>& reachable = {}) {
  if (candidates.empty()) throw EmptySourceError("kde_min_density_goal: no candidates");
  std::vector<std::size_t> pool;
  if (reachable) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (reachable(candidates[i])) pool.push_back(i);
    }
  }
  if (pool.empty()) {
    for (std::size_t i = 0; i < candidates.size(); ++i) pool.push_back(i);
  }
  std::size_t best = pool.front();
  double best_density = kde_log_density(kde, candidates[best]);
  for (std::size_t k = 1; k < pool.size(); ++k) {
    const double d = kde_log_density(kde, candidates[pool[k]]);
    if (d < best_density) {
      best_density = d;
      best = pool[k];
    }
  }
  return candidates[best];
}

struct PotentialResult {
  std::vector<double> goal;
  std::size_t index = 0;
  std::vector<double> scores;
};

// Exploration potential of each candidate: mean V^E over the final states of K
// imagined rollouts of pi^G(. | ., g) from start_state. Randomness is consumed
// candidate by candidate, H noise matrices of shape (K, action_dim) each.
inline PotentialResult exploration_potential_goal(const DynamicsEnsemble& model, const GoalPolicy& policy,
                                                  const ValueNet& explorer_value,
                                                  const std::vector<std::vector<double>>& candidates, std::size_t k,
                                                  std::span<const double> start_state, std::size_t horizon, Rng& rng) {
  if (candidates.empty()) throw EmptySourceError("exploration_potential_goal: no candidates");
  if (k == 0) throw ContractViolation("exploration_potential_goal: K must be >= 1");
  const std::vector<std::vector<double>> starts(k, std::vector<double>(start_state.begin(), start_state.end()));
  PotentialResult res;
  for (const auto& g : candidates) {
    const auto rollouts = imagine(model, policy, starts, g, horizon, ActMode::stochastic, rng);
    double score = 0.0;
    for (const auto& r : rollouts) score += value(explorer_value, r.states.back(), g);
    res.scores.push_back(score / static_cast<double>(k));
  }
  for (std::size_t i = 1; i < res.scores.size(); ++i) {
    if (res.scores[i] > res.scores[res.index]) res.index = i;
  }
  res.goal = candidates[res.index];
  return res;
}

}  // namespace munlab
