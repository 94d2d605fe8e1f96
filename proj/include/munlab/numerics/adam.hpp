#pragma once

#include <cmath>
#include <cstdint>

#include "munlab/errors.hpp"
#include "munlab/numerics/mlp.hpp"

namespace munlab {

struct AdamState {
  Grads first_moment;
  Grads second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline AdamState make_adam(const MlpParams& params, double learning_rate, double beta1 = 0.9,
                           double beta2 = 0.999, double epsilon = 1e-8) {
  AdamState s;
  s.first_moment = zero_grads(params);
  s.second_moment = zero_grads(params);
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

// Bias-corrected Adam update. Leaves params and state untouched and throws
// TrainingDivergence if any gradient entry is non-finite.
inline void adam_step(MlpParams& params, const Grads& grads, AdamState& state) {
  if (grads.weights.size() != params.weights.size() || state.first_moment.weights.size() != params.weights.size()) {
    throw ContractViolation("adam_step: layer count mismatch");
  }
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() || grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw ContractViolation("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!all_finite(grads)) throw TrainingDivergence("adam_step: non-finite gradient");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](double* p, const double* g, double* m, double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l].data().data(), grads.weights[l].data().data(),
           state.first_moment.weights[l].data().data(), state.second_moment.weights[l].data().data(),
           params.weights[l].size());
    update(params.biases[l].data(), grads.biases[l].data(), state.first_moment.biases[l].data(),
           state.second_moment.biases[l].data(), params.biases[l].size());
  }
}

}  // namespace munlab
