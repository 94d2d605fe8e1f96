#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "munlab/errors.hpp"
#include "munlab/numerics/adam.hpp"
#include "munlab/numerics/gradcheck.hpp"
#include "munlab/numerics/mlp.hpp"
#include "munlab/replay.hpp"
#include "munlab/rng.hpp"

namespace munlab {

// Per-dimension running mean/variance (Welford).
struct RunningStats {
  std::vector<double> mean;
  std::vector<double> m2;
  double count = 0.0;

  RunningStats() = default;
  explicit RunningStats(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}

  void update(std::span<const double> x) {
    count += 1.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / count;
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  // Standard deviation with a floor; 1 before any data arrives.
  double stddev(std::size_t i, double floor = 1e-3) const {
    if (count < 2.0) return 1.0;
    return std::max(std::sqrt(m2[i] / count), floor);
  }

  friend bool operator==(const RunningStats&, const RunningStats&) = default;
};

struct DynamicsNormalizer {
  RunningStats state;
  RunningStats action;
  RunningStats delta;

  friend bool operator==(const DynamicsNormalizer&, const DynamicsNormalizer&) = default;
};

// Ensemble of deterministic MLPs, each mapping normalised (s, a) to a
// normalised state delta. Prediction = s + denormalised delta.
struct DynamicsEnsemble {
  std::vector<MlpParams> members;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  DynamicsNormalizer norm;

  std::size_t size() const { return members.size(); }

  friend bool operator==(const DynamicsEnsemble&, const DynamicsEnsemble&) = default;
};

inline DynamicsEnsemble make_dynamics(std::size_t state_dim, std::size_t action_dim, std::size_t ensemble_size,
                                      const std::vector<std::size_t>& hidden, Rng& rng) {
  if (ensemble_size == 0) throw ConfigError("ensemble size must be >= 1");
  DynamicsEnsemble m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  std::vector<std::size_t> sizes;
  sizes.push_back(state_dim + action_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(state_dim);
  for (std::size_t e = 0; e < ensemble_size; ++e) {
    m.members.push_back(make_mlp(sizes, Activation::tanh, OutputTransform::identity, rng));
  }
  m.norm.state = RunningStats(state_dim);
  m.norm.action = RunningStats(action_dim);
  m.norm.delta = RunningStats(state_dim);
  return m;
}

// Row-wise normalised [s | a] network input.
inline Matrix dynamics_input(const DynamicsEnsemble& m, const Matrix& states, const Matrix& actions) {
  if (states.cols() != m.state_dim || actions.cols() != m.action_dim || states.rows() != actions.rows()) {
    throw ContractViolation("dynamics: state/action dimension mismatch");
  }
  Matrix in(states.rows(), m.state_dim + m.action_dim);
  for (std::size_t r = 0; r < states.rows(); ++r) {
    for (std::size_t i = 0; i < m.state_dim; ++i) {
      in(r, i) = (states(r, i) - m.norm.state.mean[i]) / m.norm.state.stddev(i);
    }
    for (std::size_t j = 0; j < m.action_dim; ++j) {
      in(r, m.state_dim + j) = (actions(r, j) - m.norm.action.mean[j]) / m.norm.action.stddev(j);
    }
  }
  return in;
}

// Forward pass of every member with caches kept for backprop.
struct EnsembleStep {
  Matrix mean_next;                  // (B, state_dim)
  std::vector<Matrix> member_next;   // per member (B, state_dim)
  std::vector<MlpCache> caches;
};

inline EnsembleStep ensemble_forward(const DynamicsEnsemble& m, const Matrix& states, const Matrix& actions) {
  const Matrix in = dynamics_input(m, states, actions);
  EnsembleStep out;
  out.mean_next = Matrix(states.rows(), m.state_dim);
  const double inv_e = 1.0 / static_cast<double>(m.size());
  for (const auto& member : m.members) {
    MlpCache cache = mlp_forward_batch(member, in);
    Matrix next(states.rows(), m.state_dim);
    for (std::size_t r = 0; r < states.rows(); ++r) {
      for (std::size_t i = 0; i < m.state_dim; ++i) {
        const double delta = cache.output(r, i) * m.norm.delta.stddev(i) + m.norm.delta.mean[i];
        next(r, i) = states(r, i) + delta;
        out.mean_next(r, i) += inv_e * next(r, i);
      }
    }
    out.member_next.push_back(std::move(next));
    out.caches.push_back(std::move(cache));
  }
  return out;
}

// Mean per-dimension variance across members, one value per row.
inline std::vector<double> ensemble_disagreement(const EnsembleStep& step) {
  const std::size_t rows = step.mean_next.rows();
  const std::size_t dim = step.mean_next.cols();
  const std::size_t e = step.member_next.size();
  std::vector<double> out(rows, 0.0);
  if (e <= 1) return out;
  // Pairwise form of the variance: exactly zero when members agree.
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t a = 0; a < e; ++a) {
      for (std::size_t b = a + 1; b < e; ++b) {
        for (std::size_t i = 0; i < dim; ++i) {
          const double d = step.member_next[a](r, i) - step.member_next[b](r, i);
          sum += d * d;
        }
      }
    }
    out[r] = sum / (static_cast<double>(e * e) * static_cast<double>(dim));
  }
  return out;
}

// d(disagreement[r])/d(member_next_e[r]) scaled per row by row_scale.
inline std::vector<Matrix> disagreement_grad(const EnsembleStep& step, std::span<const double> row_scale) {
  const std::size_t rows = step.mean_next.rows();
  const std::size_t dim = step.mean_next.cols();
  const double e = static_cast<double>(step.member_next.size());
  std::vector<Matrix> out;
  for (const auto& p : step.member_next) {
    Matrix g(rows, dim);
    if (step.member_next.size() > 1) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < dim; ++i) {
          g(r, i) = row_scale[r] * 2.0 * (p(r, i) - step.mean_next(r, i)) / (e * static_cast<double>(dim));
        }
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

struct EnsembleInputGrad {
  Matrix d_states;
  Matrix d_actions;
};

// Backprop to the inputs (s, a) given upstream gradients on mean_next and,
// optionally, on each member's prediction. Model parameters are treated as fixed.
inline EnsembleInputGrad ensemble_backward(const DynamicsEnsemble& m, const EnsembleStep& step, const Matrix& d_mean,
                                           const std::vector<Matrix>* d_members = nullptr) {
  const std::size_t rows = d_mean.rows();
  EnsembleInputGrad g{d_mean, Matrix(rows, m.action_dim)};
  const double inv_e = 1.0 / static_cast<double>(m.size());
  for (std::size_t e = 0; e < m.size(); ++e) {
    Matrix d_out(rows, m.state_dim);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < m.state_dim; ++i) {
        double gd = inv_e * d_mean(r, i);
        if (d_members != nullptr) {
          gd += (*d_members)[e](r, i);
          g.d_states(r, i) += (*d_members)[e](r, i);
        }
        d_out(r, i) = gd * m.norm.delta.stddev(i);
      }
    }
    const MlpBackward b = mlp_backward_batch(m.members[e], step.caches[e], d_out);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < m.state_dim; ++i) g.d_states(r, i) += b.input_grad(r, i) / m.norm.state.stddev(i);
      for (std::size_t j = 0; j < m.action_dim; ++j) {
        g.d_actions(r, j) += b.input_grad(r, m.state_dim + j) / m.norm.action.stddev(j);
      }
    }
  }
  return g;
}

struct Prediction {
  std::vector<double> mean_next;
  double disagreement = 0.0;
};

inline Prediction predict(const DynamicsEnsemble& m, std::span<const double> s, std::span<const double> a) {
  if (s.size() != m.state_dim || a.size() != m.action_dim) throw ContractViolation("predict: dimension mismatch");
  const Matrix S(1, s.size(), std::vector<double>(s.begin(), s.end()));
  const Matrix A(1, a.size(), std::vector<double>(a.begin(), a.end()));
  const EnsembleStep step = ensemble_forward(m, S, A);
  if (!step.mean_next.all_finite()) throw ModelDivergence("predict: non-finite prediction");
  return {step.mean_next.data(), ensemble_disagreement(step)[0]};
}

// Batched mean prediction; throws ModelDivergence on non-finite output.
inline Matrix predict_batch(const DynamicsEnsemble& m, const Matrix& states, const Matrix& actions) {
  EnsembleStep step = ensemble_forward(m, states, actions);
  if (!step.mean_next.all_finite()) throw ModelDivergence("predict: non-finite prediction");
  return std::move(step.mean_next);
}

// MSE between a member's output and the normalised state delta, averaged over
// batch rows and state dimensions. Normalisation statistics are held fixed.
inline LossEval member_loss(const MlpParams& member, const DynamicsNormalizer& norm, const std::vector<Transition>& batch) {
  if (batch.empty()) throw EmptySourceError("member_loss: empty batch");
  const std::size_t sd = batch.front().s.size();
  const std::size_t ad = batch.front().a.size();
  Matrix in(batch.size(), sd + ad);
  Matrix target(batch.size(), sd);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const Transition& t = batch[r];
    for (std::size_t i = 0; i < sd; ++i) {
      in(r, i) = (t.s[i] - norm.state.mean[i]) / norm.state.stddev(i);
      target(r, i) = (t.s_next[i] - t.s[i] - norm.delta.mean[i]) / norm.delta.stddev(i);
    }
    for (std::size_t j = 0; j < ad; ++j) in(r, sd + j) = (t.a[j] - norm.action.mean[j]) / norm.action.stddev(j);
  }
  const MlpCache cache = mlp_forward_batch(member, in);
  const double scale = 1.0 / static_cast<double>(batch.size() * sd);
  Matrix d_out(batch.size(), sd);
  double loss = 0.0;
  for (std::size_t k = 0; k < d_out.size(); ++k) {
    const double diff = cache.output.data()[k] - target.data()[k];
    loss += diff * diff * scale;
    d_out.data()[k] = 2.0 * diff * scale;
  }
  return {loss, mlp_backward_batch(member, cache, d_out).grads};
}

inline void update_normalizer(DynamicsNormalizer& norm, const std::vector<Transition>& batch) {
  std::vector<double> delta;
  for (const auto& t : batch) {
    norm.state.update(t.s);
    norm.action.update(t.a);
    delta.resize(t.s.size());
    for (std::size_t i = 0; i < t.s.size(); ++i) delta[i] = t.s_next[i] - t.s[i];
    norm.delta.update(delta);
  }
}

// One optimisation step for every member, each on its own bootstrap batch.
// Returns the mean member loss.
inline double train_model_step(DynamicsEnsemble& model, const ReplayBuffer& buffer, std::size_t batch_size,
                               std::vector<AdamState>& optimizers, Rng& rng, double grad_clip = 100.0) {
  if (buffer.empty()) throw EmptySourceError("train_model_step: replay buffer is empty");
  if (optimizers.size() != model.size()) throw ContractViolation("train_model_step: one optimizer per member required");
  std::vector<std::vector<Transition>> batches;
  batches.reserve(model.size());
  for (std::size_t e = 0; e < model.size(); ++e) batches.push_back(buffer.sample_transitions(batch_size, rng));
  for (const auto& b : batches) update_normalizer(model.norm, b);
  double total = 0.0;
  for (std::size_t e = 0; e < model.size(); ++e) {
    LossEval le = member_loss(model.members[e], model.norm, batches[e]);
    if (!std::isfinite(le.value)) throw TrainingDivergence("dynamics loss is not finite");
    clip_grad_norm(le.grads, grad_clip);
    adam_step(model.members[e], le.grads, optimizers[e]);
    total += le.value;
  }
  return total / static_cast<double>(model.size());
}

struct ImaginedRollout {
  std::vector<std::vector<double>> states;   // H + 1
  std::vector<std::vector<double>> actions;  // H
  std::size_t horizon = 0;
  bool diverged = false;
};

// Mean squared one-step error ||predict(s, a).mean - s'||^2 in raw state units.
inline double one_step_error(const DynamicsEnsemble& m, const std::vector<Transition>& validation) {
  if (validation.empty()) throw EmptySourceError("one_step_error: empty validation set");
  Matrix S(validation.size(), m.state_dim);
  Matrix A(validation.size(), m.action_dim);
  for (std::size_t r = 0; r < validation.size(); ++r) {
    std::copy(validation[r].s.begin(), validation[r].s.end(), S.row(r).begin());
    std::copy(validation[r].a.begin(), validation[r].a.end(), A.row(r).begin());
  }
  const Matrix pred = predict_batch(m, S, A);
  double total = 0.0;
  for (std::size_t r = 0; r < validation.size(); ++r) {
    double sq = 0.0;
    for (std::size_t i = 0; i < m.state_dim; ++i) {
      const double d = pred(r, i) - validation[r].s_next[i];
      sq += d * d;
    }
    total += sq;
  }
  return total / static_cast<double>(validation.size());
}

// Open-loop rollout from the first state replaying the recorded actions:
// (1/h) * sum_{i=1..h} ||s_hat_i - s_i||^2.
inline double compound_error(const DynamicsEnsemble& m, const Episode& trajectory) {
  const std::size_t h = trajectory.size();
  if (h == 0) throw ContractViolation("compound_error: trajectory must have at least one step");
  std::vector<double> s_hat = trajectory.transitions.front().s;
  double total = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    const Transition& t = trajectory.transitions[i];
    s_hat = predict(m, s_hat, t.a).mean_next;
    double sq = 0.0;
    for (std::size_t k = 0; k < s_hat.size(); ++k) sq += (s_hat[k] - t.s_next[k]) * (s_hat[k] - t.s_next[k]);
    total += sq;
  }
  return total / static_cast<double>(h);
}

}  // namespace munlab
