#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "munlab/distance.hpp"
#include "munlab/dynamics.hpp"
#include "munlab/envs.hpp"
#include "munlab/errors.hpp"
#include "munlab/numerics/adam.hpp"
#include "munlab/numerics/gradcheck.hpp"
#include "munlab/numerics/mlp.hpp"
#include "munlab/replay.hpp"
#include "munlab/rng.hpp"

namespace munlab {

enum class ActMode { stochastic, deterministic };

// Actor: (s[, g]) -> pre-squash action mean. Emitted action is
// mid + half_range * tanh(mean + noise_std * eps), so it always lies in bounds.
struct GoalPolicy {
  MlpParams net;
  double action_noise_std = 0.1;
  std::vector<ActionBounds> bounds;
  ObsNormalizer obs;
  bool goal_conditioned = true;

  std::size_t state_dim() const { return obs.dim(); }
  std::size_t action_dim() const { return bounds.size(); }

  friend bool operator==(const GoalPolicy&, const GoalPolicy&) = default;
};

// State value V(s[, g]).
struct ValueNet {
  MlpParams net;
  ObsNormalizer obs;
  bool goal_conditioned = true;

  friend bool operator==(const ValueNet&, const ValueNet&) = default;
};

using GoalCritic = ValueNet;

// Undirected explorer pi^E with its value function V^E.
struct ExplorerPolicy {
  GoalPolicy actor;
  ValueNet critic;

  friend bool operator==(const ExplorerPolicy&, const ExplorerPolicy&) = default;
};

inline ObsNormalizer obs_normalizer(const EnvSpec& spec) { return {spec.obs_offset, spec.obs_scale}; }

inline GoalPolicy make_policy(const EnvSpec& spec, const std::vector<std::size_t>& hidden, double noise_std, Rng& rng,
                              bool goal_conditioned = true) {
  std::vector<std::size_t> sizes{(goal_conditioned ? 2 : 1) * spec.state_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(spec.action_dim);
  return {make_mlp(sizes, Activation::tanh, OutputTransform::identity, rng), noise_std, spec.action_bounds,
          obs_normalizer(spec), goal_conditioned};
}

inline ValueNet make_value_net(const EnvSpec& spec, const std::vector<std::size_t>& hidden, Rng& rng,
                               bool goal_conditioned = true) {
  std::vector<std::size_t> sizes{(goal_conditioned ? 2 : 1) * spec.state_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return {make_mlp(sizes, Activation::tanh, OutputTransform::identity, rng), obs_normalizer(spec), goal_conditioned};
}

inline ExplorerPolicy make_explorer(const EnvSpec& spec, const std::vector<std::size_t>& hidden, double noise_std,
                                    Rng& rng) {
  ExplorerPolicy e;
  e.actor = make_policy(spec, hidden, noise_std, rng, false);
  e.critic = make_value_net(spec, hidden, rng, false);
  return e;
}

// Network input for a (possibly goal-conditioned) state consumer.
inline Matrix conditioned_input(const ObsNormalizer& obs, bool goal_conditioned, const Matrix& states,
                                const Matrix& goals) {
  if (goal_conditioned) return state_goal_input(obs, states, goals);
  if (states.cols() != obs.dim()) throw ContractViolation("policy input: state dimension mismatch");
  Matrix in(states.rows(), obs.dim());
  for (std::size_t r = 0; r < states.rows(); ++r) {
    for (std::size_t i = 0; i < obs.dim(); ++i) in(r, i) = obs.apply(i, states(r, i));
  }
  return in;
}

namespace detail {

inline Matrix squash_actions(const GoalPolicy& p, const Matrix& pre) {
  Matrix a(pre.rows(), pre.cols());
  for (std::size_t r = 0; r < pre.rows(); ++r) {
    for (std::size_t j = 0; j < pre.cols(); ++j) {
      const auto [lo, hi] = p.bounds[j];
      a(r, j) = 0.5 * (lo + hi) + 0.5 * (hi - lo) * std::tanh(pre(r, j));
    }
  }
  return a;
}

}  // namespace detail

inline std::vector<double> act(const GoalPolicy& policy, std::span<const double> s, std::span<const double> g, ActMode mode,
                               Rng& rng) {
  const Matrix S(1, s.size(), std::vector<double>(s.begin(), s.end()));
  const Matrix G = policy.goal_conditioned ? Matrix(1, g.size(), std::vector<double>(g.begin(), g.end())) : S;
  Matrix pre = mlp_forward_batch(policy.net, conditioned_input(policy.obs, policy.goal_conditioned, S, G)).output;
  if (mode == ActMode::stochastic) {
    for (double& v : pre.data()) v += policy.action_noise_std * rng.normal();
  }
  return detail::squash_actions(policy, pre).data();
}

inline double value(const ValueNet& v, std::span<const double> s, std::span<const double> g) {
  const Matrix S(1, s.size(), std::vector<double>(s.begin(), s.end()));
  const Matrix G = v.goal_conditioned ? Matrix(1, g.size(), std::vector<double>(g.begin(), g.end())) : S;
  return mlp_forward_batch(v.net, conditioned_input(v.obs, v.goal_conditioned, S, G)).output(0, 0);
}

// ---------------------------------------------------------------------------
// lambda-returns

// Backward recursion R_t = r_t + gamma * ((1 - lambda) v_{t+1} + lambda R_{t+1}),
// R_H = v_H. rewards has H entries, values H + 1.
inline std::vector<double> lambda_returns(std::span<const double> rewards, std::span<const double> values, double gamma,
                                          double lambda) {
  const std::size_t h = rewards.size();
  if (values.size() != h + 1) throw ContractViolation("lambda_returns: need H+1 values");
  std::vector<double> out(h);
  double next = values[h];
  for (std::size_t t = h; t-- > 0;) {
    next = rewards[t] + gamma * ((1.0 - lambda) * values[t + 1] + lambda * next);
    out[t] = next;
  }
  return out;
}

// Same quantity as an explicit mixture of n-step returns:
// (1 - lambda) sum_{n<N} lambda^{n-1} G^(n) + lambda^{N-1} G^(N), N = H - t.
inline std::vector<double> lambda_returns_explicit(std::span<const double> rewards, std::span<const double> values,
                                                   double gamma, double lambda) {
  const std::size_t h = rewards.size();
  if (values.size() != h + 1) throw ContractViolation("lambda_returns: need H+1 values");
  std::vector<double> out(h);
  for (std::size_t t = 0; t < h; ++t) {
    const std::size_t horizon = h - t;
    auto n_step = [&](std::size_t n) {
      double g = 0.0;
      double disc = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        g += disc * rewards[t + i];
        disc *= gamma;
      }
      return g + disc * values[t + n];
    };
    double total = 0.0;
    double weight = 1.0;
    for (std::size_t n = 1; n < horizon; ++n) {
      total += (1.0 - lambda) * weight * n_step(n);
      weight *= lambda;
    }
    total += weight * n_step(horizon);
    out[t] = total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable imagination

// Batched rollout through the ensemble mean with every activation kept.
struct ImaginationTrace {
  std::vector<Matrix> states;   // H + 1 entries, (B, state_dim)
  std::vector<Matrix> actions;  // H entries, (B, action_dim)
  std::vector<Matrix> squash;   // tanh outputs, (B, action_dim)
  std::vector<MlpCache> policy_caches;
  std::vector<EnsembleStep> model_steps;
  Matrix goals;
  std::vector<bool> diverged;  // per batch row

  std::size_t horizon() const { return actions.size(); }
  std::size_t batch() const { return goals.rows(); }
};

// Reparameterisation noise eps ~ N(0, 1), or zeros for deterministic rollouts.
inline std::vector<Matrix> draw_imagination_noise(std::size_t batch, std::size_t horizon, std::size_t action_dim,
                                                  ActMode mode, Rng& rng) {
  std::vector<Matrix> eps;
  for (std::size_t t = 0; t < horizon; ++t) {
    Matrix m(batch, action_dim);
    if (mode == ActMode::stochastic) {
      for (double& v : m.data()) v = rng.normal();
    }
    eps.push_back(std::move(m));
  }
  return eps;
}

inline ImaginationTrace imagine_batch(const DynamicsEnsemble& model, const GoalPolicy& policy, const Matrix& starts,
                                      const Matrix& goals, const std::vector<Matrix>& noise) {
  if (noise.empty()) throw ContractViolation("imagine: horizon must be >= 1");
  ImaginationTrace tr;
  tr.goals = goals;
  tr.diverged.assign(starts.rows(), false);
  tr.states.push_back(starts);
  for (std::size_t t = 0; t < noise.size(); ++t) {
    const Matrix& s = tr.states.back();
    MlpCache pc = mlp_forward_batch(policy.net, conditioned_input(policy.obs, policy.goal_conditioned, s, goals));
    Matrix pre = pc.output;
    for (std::size_t k = 0; k < pre.size(); ++k) pre.data()[k] += policy.action_noise_std * noise[t].data()[k];
    Matrix u(pre.rows(), pre.cols());
    for (std::size_t k = 0; k < pre.size(); ++k) u.data()[k] = std::tanh(pre.data()[k]);
    Matrix a = detail::squash_actions(policy, pre);
    EnsembleStep step = ensemble_forward(model, s, a);
    Matrix next = step.mean_next;
    for (std::size_t r = 0; r < next.rows(); ++r) {
      bool finite = true;
      for (double v : next.row(r)) finite = finite && std::isfinite(v);
      if (!finite || tr.diverged[r]) {
        // Freeze the row; it is excluded from every loss.
        tr.diverged[r] = true;
        std::copy(s.row(r).begin(), s.row(r).end(), next.row(r).begin());
      }
    }
    tr.policy_caches.push_back(std::move(pc));
    tr.squash.push_back(std::move(u));
    tr.actions.push_back(std::move(a));
    tr.model_steps.push_back(std::move(step));
    tr.states.push_back(std::move(next));
  }
  return tr;
}

inline std::vector<ImaginedRollout> to_rollouts(const ImaginationTrace& tr) {
  std::vector<ImaginedRollout> out(tr.batch());
  for (std::size_t b = 0; b < tr.batch(); ++b) {
    auto& r = out[b];
    r.horizon = tr.horizon();
    r.diverged = tr.diverged[b];
    for (std::size_t t = 0; t <= tr.horizon(); ++t) {
      r.states.emplace_back(tr.states[t].row(b).begin(), tr.states[t].row(b).end());
    }
    for (std::size_t t = 0; t < tr.horizon(); ++t) {
      r.actions.emplace_back(tr.actions[t].row(b).begin(), tr.actions[t].row(b).end());
    }
  }
  return out;
}

// Imagined rollouts of `policy` toward `goal` from each start state.
inline std::vector<ImaginedRollout> imagine(const DynamicsEnsemble& model, const GoalPolicy& policy,
                                            const std::vector<std::vector<double>>& start_states,
                                            std::span<const double> goal, std::size_t horizon, ActMode mode, Rng& rng) {
  if (horizon == 0) throw ContractViolation("imagine: horizon must be >= 1");
  if (start_states.empty()) return {};
  const Matrix starts = Matrix::from_rows(start_states);
  Matrix goals(starts.rows(), goal.size());
  for (std::size_t r = 0; r < goals.rows(); ++r) std::copy(goal.begin(), goal.end(), goals.row(r).begin());
  const auto noise = draw_imagination_noise(starts.rows(), horizon, policy.action_dim(), mode, rng);
  return to_rollouts(imagine_batch(model, policy, starts, goals, noise));
}

// ---------------------------------------------------------------------------
// Imagination actor-critic

struct ImaginationReward {
  enum class Kind { temporal_distance, disagreement, constant };
  Kind kind = Kind::temporal_distance;
  const DistanceNet* dnet = nullptr;
  double constant = 0.0;
};

// Squared error between V and fixed targets, weighted per row and normalised by
// the weight sum.
inline LossEval critic_regression_loss(const ValueNet& critic, const Matrix& states, const Matrix& goals,
                                       std::span<const double> targets, std::span<const double> weights) {
  const MlpCache cache =
      mlp_forward_batch(critic.net, conditioned_input(critic.obs, critic.goal_conditioned, states, goals));
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  LossEval le;
  Matrix dout(states.rows(), 1);
  if (wsum > 0.0) {
    for (std::size_t r = 0; r < states.rows(); ++r) {
      const double diff = cache.output(r, 0) - targets[r];
      le.value += weights[r] * diff * diff / wsum;
      dout(r, 0) = 2.0 * weights[r] * diff / wsum;
    }
  }
  le.grads = mlp_backward_batch(critic.net, cache, dout).grads;
  return le;
}

struct ActorCriticEval {
  LossEval actor;   // value = -mean lambda-return
  LossEval critic;  // regression toward detached lambda-returns
  double mean_reward = 0.0;
  double mean_return = 0.0;
  std::size_t dropped = 0;
};

namespace detail {

// Stacks rows [t0, t1) of a per-step list into one (B * (t1 - t0), cols) matrix, t-major.
inline Matrix stack_steps(const std::vector<Matrix>& steps, std::size_t t0, std::size_t t1) {
  const std::size_t b = steps[t0].rows();
  Matrix out(b * (t1 - t0), steps[t0].cols());
  for (std::size_t t = t0; t < t1; ++t) {
    for (std::size_t r = 0; r < b; ++r) {
      std::copy(steps[t].row(r).begin(), steps[t].row(r).end(), out.row((t - t0) * b + r).begin());
    }
  }
  return out;
}

inline Matrix repeat_rows(const Matrix& m, std::size_t times) {
  Matrix out(m.rows() * times, m.cols());
  for (std::size_t k = 0; k < times; ++k) {
    for (std::size_t r = 0; r < m.rows(); ++r) std::copy(m.row(r).begin(), m.row(r).end(), out.row(k * m.rows() + r).begin());
  }
  return out;
}

}  // namespace detail

// Actor objective and critic loss over one imagined batch, with the exact
// pathwise gradient of the objective through policy, dynamics, reward and critic.
inline ActorCriticEval actor_critic_eval(const GoalPolicy& policy, const ValueNet& critic, const DynamicsEnsemble& model,
                                         const ImaginationReward& reward_model, const ImaginationTrace& tr, double gamma,
                                         double lambda) {
  const std::size_t B = tr.batch();
  const std::size_t H = tr.horizon();
  const std::size_t sd = model.state_dim;
  std::size_t valid = 0;
  for (bool d : tr.diverged) valid += d ? 0 : 1;
  ActorCriticEval out;
  out.dropped = B - valid;

  // Rewards r_t for t < H.
  Matrix rewards(B, H);
  DistanceEval dist;
  std::vector<std::vector<double>> disagreement(H);
  switch (reward_model.kind) {
    case ImaginationReward::Kind::temporal_distance: {
      if (reward_model.dnet == nullptr) throw ContractViolation("temporal-distance reward needs a DistanceNet");
      dist = distance_batch(*reward_model.dnet, detail::stack_steps(tr.states, 1, H + 1), detail::repeat_rows(tr.goals, H));
      for (std::size_t t = 0; t < H; ++t) {
        for (std::size_t b = 0; b < B; ++b) rewards(b, t) = -dist.values[t * B + b];
      }
      break;
    }
    case ImaginationReward::Kind::disagreement:
      for (std::size_t t = 0; t < H; ++t) {
        disagreement[t] = ensemble_disagreement(tr.model_steps[t]);
        for (std::size_t b = 0; b < B; ++b) rewards(b, t) = disagreement[t][b];
      }
      break;
    case ImaginationReward::Kind::constant:
      rewards.fill(reward_model.constant);
      break;
  }

  // Values v_t for t <= H.
  const Matrix all_states = detail::stack_steps(tr.states, 0, H + 1);
  const Matrix all_goals = detail::repeat_rows(tr.goals, H + 1);
  const MlpCache vcache =
      mlp_forward_batch(critic.net, conditioned_input(critic.obs, critic.goal_conditioned, all_states, all_goals));

  // lambda-returns and the coefficients d(objective)/d(r_t), d(objective)/d(v_t).
  const double norm = valid == 0 ? 0.0 : 1.0 / static_cast<double>(valid * H);
  Matrix targets(B, H);
  Matrix coef_r(B, H);
  Matrix coef_v(B, H + 1);
  double objective = 0.0;
  double reward_sum = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (tr.diverged[b]) continue;
    std::vector<double> r(H), v(H + 1);
    for (std::size_t t = 0; t < H; ++t) r[t] = rewards(b, t);
    for (std::size_t t = 0; t <= H; ++t) v[t] = vcache.output(t * B + b, 0);
    const auto ret = lambda_returns(r, v, gamma, lambda);
    double g_prev = 0.0;
    for (std::size_t t = 0; t < H; ++t) {
      targets(b, t) = ret[t];
      objective += norm * ret[t];
      reward_sum += r[t];
      // dJ/dR_t accumulates the direct term and the lambda-chain from R_{t-1}.
      const double g_r = norm + gamma * lambda * g_prev;
      coef_r(b, t) = g_r;
      coef_v(b, t + 1) += gamma * (1.0 - lambda) * g_r;
      g_prev = g_r;
    }
    coef_v(b, H) += gamma * lambda * g_prev;
  }
  out.mean_return = objective;
  out.mean_reward = valid == 0 ? 0.0 : reward_sum / static_cast<double>(valid * H);

  // State gradients from the critic (value inputs) ...
  std::vector<Matrix> g_states(H + 1, Matrix(B, sd));
  {
    Matrix dout(B * (H + 1), 1);
    for (std::size_t t = 0; t <= H; ++t) {
      for (std::size_t b = 0; b < B; ++b) dout(t * B + b, 0) = coef_v(b, t);
    }
    const MlpBackward vb = mlp_backward_batch(critic.net, vcache, dout);
    for (std::size_t t = 0; t <= H; ++t) {
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < sd; ++i) g_states[t](b, i) += vb.input_grad(t * B + b, i) / critic.obs.scale[i];
      }
    }
  }
  // ... and from the temporal-distance reward on s_{t+1}.
  if (reward_model.kind == ImaginationReward::Kind::temporal_distance) {
    std::vector<double> w(B * H);
    for (std::size_t t = 0; t < H; ++t) {
      for (std::size_t b = 0; b < B; ++b) w[t * B + b] = -coef_r(b, t);
    }
    const Matrix ds = distance_state_grad(*reward_model.dnet, dist, w);
    for (std::size_t t = 0; t < H; ++t) {
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < sd; ++i) g_states[t + 1](b, i) += ds(t * B + b, i);
      }
    }
  }

  // Backward through time.
  Grads policy_grads = zero_grads(policy.net);
  for (std::size_t t = H; t-- > 0;) {
    Matrix d_mean = g_states[t + 1];
    for (std::size_t b = 0; b < B; ++b) {
      if (tr.diverged[b]) std::fill(d_mean.row(b).begin(), d_mean.row(b).end(), 0.0);
    }
    std::vector<Matrix> d_members;
    const std::vector<Matrix>* d_members_ptr = nullptr;
    if (reward_model.kind == ImaginationReward::Kind::disagreement) {
      std::vector<double> scale(B);
      for (std::size_t b = 0; b < B; ++b) scale[b] = tr.diverged[b] ? 0.0 : coef_r(b, t);
      d_members = disagreement_grad(tr.model_steps[t], scale);
      d_members_ptr = &d_members;
    }
    EnsembleInputGrad eg = ensemble_backward(model, tr.model_steps[t], d_mean, d_members_ptr);
    for (std::size_t b = 0; b < B; ++b) {
      if (!tr.diverged[b]) continue;
      // Cached activations of a diverged row may be non-finite.
      std::fill(eg.d_states.row(b).begin(), eg.d_states.row(b).end(), 0.0);
      std::fill(eg.d_actions.row(b).begin(), eg.d_actions.row(b).end(), 0.0);
    }
    add_inplace(g_states[t], eg.d_states);
    // Through the squashed action into the policy.
    Matrix d_pre(B, policy.action_dim());
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < policy.action_dim(); ++j) {
        const auto [lo, hi] = policy.bounds[j];
        const double u = tr.squash[t](b, j);
        // Ascent on the objective = descent on its negation.
        d_pre(b, j) = -eg.d_actions(b, j) * 0.5 * (hi - lo) * (1.0 - u * u);
      }
    }
    const MlpBackward pb = mlp_backward_batch(policy.net, tr.policy_caches[t], d_pre);
    accumulate(policy_grads, pb.grads);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < sd; ++i) g_states[t](b, i) -= pb.input_grad(b, i) / policy.obs.scale[i];
    }
  }
  out.actor = {-objective, std::move(policy_grads)};

  // Critic regression on s_0..s_{H-1} toward detached lambda-returns.
  {
    const Matrix states = detail::stack_steps(tr.states, 0, H);
    const Matrix goals = detail::repeat_rows(tr.goals, H);
    std::vector<double> tgt(B * H), w(B * H);
    for (std::size_t t = 0; t < H; ++t) {
      for (std::size_t b = 0; b < B; ++b) {
        tgt[t * B + b] = targets(b, t);
        w[t * B + b] = tr.diverged[b] ? 0.0 : 1.0;
      }
    }
    out.critic = critic_regression_loss(critic, states, goals, tgt, w);
  }
  return out;
}

// Actor objective as a function of the policy only (fixed noise), for gradient checks.
inline LossEval actor_objective(const GoalPolicy& policy, const ValueNet& critic, const DynamicsEnsemble& model,
                                const ImaginationReward& reward_model, const Matrix& starts, const Matrix& goals,
                                const std::vector<Matrix>& noise, double gamma, double lambda) {
  const ImaginationTrace tr = imagine_batch(model, policy, starts, goals, noise);
  return actor_critic_eval(policy, critic, model, reward_model, tr, gamma, lambda).actor;
}

struct ImaginationConfig {
  std::size_t horizon = 15;
  double gamma = 0.99;
  double lambda = 0.95;
  std::size_t batch = 64;
  double grad_clip = 100.0;
};

struct AgentDiagnostics {
  double actor_objective = 0.0;
  double critic_loss = 0.0;
  double mean_reward = 0.0;
  std::size_t dropped = 0;
  std::vector<ImaginedRollout> rollouts;
};

// One actor and one critic update from a fresh imagined batch.
inline AgentDiagnostics train_actor_critic(GoalPolicy& policy, ValueNet& critic, const DynamicsEnsemble& model,
                                           const ImaginationReward& reward_model, const Matrix& starts,
                                           const Matrix& goals, const ImaginationConfig& cfg, AdamState& actor_opt,
                                           AdamState& critic_opt, Rng& rng) {
  const auto noise = draw_imagination_noise(starts.rows(), cfg.horizon, policy.action_dim(), ActMode::stochastic, rng);
  const ImaginationTrace tr = imagine_batch(model, policy, starts, goals, noise);
  ActorCriticEval ev = actor_critic_eval(policy, critic, model, reward_model, tr, cfg.gamma, cfg.lambda);
  if (!std::isfinite(ev.actor.value) || !std::isfinite(ev.critic.value)) {
    throw TrainingDivergence("actor-critic loss is not finite");
  }
  clip_grad_norm(ev.actor.grads, cfg.grad_clip);
  clip_grad_norm(ev.critic.grads, cfg.grad_clip);
  adam_step(policy.net, ev.actor.grads, actor_opt);
  adam_step(critic.net, ev.critic.grads, critic_opt);
  AgentDiagnostics d;
  d.actor_objective = -ev.actor.value;
  d.critic_loss = ev.critic.value;
  d.mean_reward = ev.mean_reward;
  d.dropped = ev.dropped;
  d.rollouts = to_rollouts(tr);
  return d;
}

inline Matrix sample_start_states(const ReplayBuffer& buffer, std::size_t n, Rng& rng) {
  const auto batch = buffer.sample_transitions(n, rng);
  Matrix s(n, batch.front().s.size());
  for (std::size_t r = 0; r < n; ++r) std::copy(batch[r].s.begin(), batch[r].s.end(), s.row(r).begin());
  return s;
}

// Goal-conditioned update: start states from the buffer, goals drawn 50/50 from
// `subgoal_pool` and the environment goal set (all from the latter when the pool
// is empty), reward r^G = -D_t.
inline AgentDiagnostics train_goal_agent_step(GoalPolicy& policy, GoalCritic& critic, const DynamicsEnsemble& model,
                                              const DistanceNet& dnet, const ReplayBuffer& buffer,
                                              const std::vector<std::vector<double>>& subgoal_pool,
                                              const std::vector<std::vector<double>>& env_goals,
                                              const ImaginationConfig& cfg, AdamState& actor_opt,
                                              AdamState& critic_opt, Rng& rng) {
  if (buffer.empty()) throw EmptySourceError("train_goal_agent_step: replay buffer is empty");
  if (env_goals.empty()) throw EmptySourceError("train_goal_agent_step: no environment goals");
  const Matrix starts = sample_start_states(buffer, cfg.batch, rng);
  Matrix goals(cfg.batch, starts.cols());
  for (std::size_t r = 0; r < cfg.batch; ++r) {
    const bool from_pool = !subgoal_pool.empty() && rng.uniform() < 0.5;
    const auto& g = from_pool ? subgoal_pool[rng.index(subgoal_pool.size())] : env_goals[rng.index(env_goals.size())];
    std::copy(g.begin(), g.end(), goals.row(r).begin());
  }
  const ImaginationReward reward_model{ImaginationReward::Kind::temporal_distance, &dnet, 0.0};
  return train_actor_critic(policy, critic, model, reward_model, starts, goals, cfg, actor_opt, critic_opt, rng);
}

// Ensemble disagreement at (s, a), the explorer's intrinsic reward.
inline double intrinsic_reward(const DynamicsEnsemble& model, std::span<const double> s, std::span<const double> a) {
  if (model.size() < 2) throw ConfigError("intrinsic_reward: explorer requires an ensemble of at least 2 members");
  return predict(model, s, a).disagreement;
}

inline AgentDiagnostics train_explorer_step(ExplorerPolicy& explorer, const DynamicsEnsemble& model,
                                            const ReplayBuffer& buffer, const ImaginationConfig& cfg,
                                            AdamState& actor_opt, AdamState& critic_opt, Rng& rng) {
  if (model.size() < 2) throw ConfigError("train_explorer_step: explorer requires an ensemble of at least 2 members");
  if (buffer.empty()) throw EmptySourceError("train_explorer_step: replay buffer is empty");
  const Matrix starts = sample_start_states(buffer, cfg.batch, rng);
  const ImaginationReward reward_model{ImaginationReward::Kind::disagreement, nullptr, 0.0};
  return train_actor_critic(explorer.actor, explorer.critic, model, reward_model, starts, starts, cfg, actor_opt,
                            critic_opt, rng);
}

}  // namespace munlab
