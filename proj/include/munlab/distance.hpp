#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "munlab/dynamics.hpp"
#include "munlab/errors.hpp"
#include "munlab/numerics/adam.hpp"
#include "munlab/numerics/gradcheck.hpp"
#include "munlab/numerics/mlp.hpp"
#include "munlab/rng.hpp"

namespace munlab {

// Fixed affine input map shared by the state-consuming networks.
struct ObsNormalizer {
  std::vector<double> offset;
  std::vector<double> scale;

  std::size_t dim() const { return offset.size(); }
  double apply(std::size_t i, double v) const { return (v - offset[i]) / scale[i]; }

  friend bool operator==(const ObsNormalizer&, const ObsNormalizer&) = default;
};

// [norm(s) | norm(g)] rows.
inline Matrix state_goal_input(const ObsNormalizer& obs, const Matrix& states, const Matrix& goals) {
  if (states.cols() != obs.dim() || goals.cols() != obs.dim() || states.rows() != goals.rows()) {
    throw ContractViolation("state/goal input: dimension mismatch");
  }
  Matrix in(states.rows(), 2 * obs.dim());
  for (std::size_t r = 0; r < states.rows(); ++r) {
    for (std::size_t i = 0; i < obs.dim(); ++i) {
      in(r, i) = obs.apply(i, states(r, i));
      in(r, obs.dim() + i) = obs.apply(i, goals(r, i));
    }
  }
  return in;
}

// Temporal-distance regressor: (state, goal) -> normalised step count in [0, 1].
struct DistanceNet {
  MlpParams net;
  std::size_t horizon_ref = 15;
  ObsNormalizer obs;

  friend bool operator==(const DistanceNet&, const DistanceNet&) = default;
};

inline DistanceNet make_distance_net(const ObsNormalizer& obs, const std::vector<std::size_t>& hidden,
                                     std::size_t horizon_ref, Rng& rng, Activation activation = Activation::tanh) {
  std::vector<std::size_t> sizes{2 * obs.dim()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return DistanceNet{make_mlp(sizes, activation, OutputTransform::sigmoid, rng), horizon_ref, obs};
}

inline double distance(const DistanceNet& d, std::span<const double> s, std::span<const double> g) {
  const Matrix S(1, s.size(), std::vector<double>(s.begin(), s.end()));
  const Matrix G(1, g.size(), std::vector<double>(g.begin(), g.end()));
  return mlp_forward_batch(d.net, state_goal_input(d.obs, S, G)).output(0, 0);
}

// Goal-reaching reward r^G(s, g) = -D_t(s, g).
inline double reward(const DistanceNet& d, std::span<const double> s, std::span<const double> g) {
  return -distance(d, s, g);
}

// Batched distance with the cache needed for input gradients.
struct DistanceEval {
  std::vector<double> values;
  MlpCache cache;
};

inline DistanceEval distance_batch(const DistanceNet& d, const Matrix& states, const Matrix& goals) {
  DistanceEval e;
  e.cache = mlp_forward_batch(d.net, state_goal_input(d.obs, states, goals));
  e.values = e.cache.output.data();
  return e;
}

// Gradient of sum_r weight[r] * D(s_r, g_r) w.r.t. the states (goals held fixed).
inline Matrix distance_state_grad(const DistanceNet& d, const DistanceEval& eval, std::span<const double> weight) {
  Matrix dout(weight.size(), 1, std::vector<double>(weight.begin(), weight.end()));
  const MlpBackward b = mlp_backward_batch(d.net, eval.cache, dout);
  Matrix ds(weight.size(), d.obs.dim());
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t i = 0; i < ds.cols(); ++i) ds(r, i) = b.input_grad(r, i) / d.obs.scale[i];
  }
  return ds;
}

// d r^G(s, g) / d s.
inline std::vector<double> reward_state_grad(const DistanceNet& d, std::span<const double> s, std::span<const double> g) {
  const Matrix S(1, s.size(), std::vector<double>(s.begin(), s.end()));
  const Matrix G(1, g.size(), std::vector<double>(g.begin(), g.end()));
  const DistanceEval e = distance_batch(d, S, G);
  const double w = -1.0;
  return distance_state_grad(d, e, std::span<const double>(&w, 1)).data();
}

struct DistancePair {
  std::vector<double> s_from;
  std::vector<double> s_to;
  double target = 0.0;
};

// For each rollout: t uniform in [0, H], then k uniform in [0, H - t]; target k / H.
// With negative_fraction > 0, that share of the pair count is added as
// cross-rollout pairs (s_to from a different rollout) with target 1.
inline std::vector<DistancePair> sample_distance_pairs(const std::vector<ImaginedRollout>& rollouts,
                                                       std::size_t pairs_per_rollout, Rng& rng,
                                                       double negative_fraction = 0.0) {
  std::vector<DistancePair> pairs;
  std::vector<const ImaginedRollout*> usable;
  for (const auto& r : rollouts) {
    if (r.diverged || r.states.size() < 2) continue;
    usable.push_back(&r);
    const std::size_t h = r.states.size() - 1;
    for (std::size_t p = 0; p < pairs_per_rollout; ++p) {
      const std::size_t t = rng.index(h + 1);
      const std::size_t k = rng.index(h - t + 1);
      pairs.push_back({r.states[t], r.states[t + k], static_cast<double>(k) / static_cast<double>(h)});
    }
  }
  if (negative_fraction > 0.0 && usable.size() >= 2) {
    const auto negatives = static_cast<std::size_t>(negative_fraction * static_cast<double>(pairs.size()));
    for (std::size_t n = 0; n < negatives; ++n) {
      const std::size_t i = rng.index(usable.size());
      std::size_t j = rng.index(usable.size() - 1);
      if (j >= i) ++j;
      const auto& from = usable[i]->states;
      const auto& to = usable[j]->states;
      pairs.push_back({from[rng.index(from.size())], to[rng.index(to.size())], 1.0});
    }
  }
  return pairs;
}

// Mean squared error between D(s_from, s_to) and the pair targets.
inline LossEval distance_loss(const DistanceNet& d, const std::vector<DistancePair>& pairs) {
  if (pairs.empty()) throw EmptySourceError("distance_loss: no pairs");
  const std::size_t dim = d.obs.dim();
  Matrix S(pairs.size(), dim), G(pairs.size(), dim);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    std::copy(pairs[r].s_from.begin(), pairs[r].s_from.end(), S.row(r).begin());
    std::copy(pairs[r].s_to.begin(), pairs[r].s_to.end(), G.row(r).begin());
  }
  const MlpCache cache = mlp_forward_batch(d.net, state_goal_input(d.obs, S, G));
  const double n = static_cast<double>(pairs.size());
  Matrix dout(pairs.size(), 1);
  double loss = 0.0;
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    const double diff = cache.output(r, 0) - pairs[r].target;
    loss += diff * diff / n;
    dout(r, 0) = 2.0 * diff / n;
  }
  return {loss, mlp_backward_batch(d.net, cache, dout).grads};
}

inline double train_distance_on_pairs(DistanceNet& d, const std::vector<DistancePair>& pairs, AdamState& opt,
                                      double grad_clip = 100.0) {
  LossEval le = distance_loss(d, pairs);
  if (!std::isfinite(le.value)) throw TrainingDivergence("distance loss is not finite");
  clip_grad_norm(le.grads, grad_clip);
  adam_step(d.net, le.grads, opt);
  return le.value;
}

inline double train_distance_step(DistanceNet& d, const std::vector<ImaginedRollout>& rollouts,
                                  std::size_t pairs_per_rollout, AdamState& opt, Rng& rng,
                                  double negative_fraction = 0.0) {
  if (rollouts.empty()) throw EmptySourceError("train_distance_step: no rollouts");
  const auto pairs = sample_distance_pairs(rollouts, pairs_per_rollout, rng, negative_fraction);
  if (pairs.empty()) throw EmptySourceError("train_distance_step: every rollout diverged");
  return train_distance_on_pairs(d, pairs, opt);
}

}  // namespace munlab
