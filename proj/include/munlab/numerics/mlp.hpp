#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "munlab/errors.hpp"
#include "munlab/numerics/matrix.hpp"
#include "munlab/rng.hpp"

namespace munlab {

enum class Activation { tanh, relu };
enum class OutputTransform { identity, sigmoid };

// Fully connected network. Hidden layers apply `activation`; the last layer is
// affine followed by `output_transform`.
struct MlpParams {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;              // weights[i]: (layer_sizes[i+1], layer_sizes[i])
  std::vector<std::vector<double>> biases;  // biases[i]: layer_sizes[i+1]
  Activation activation = Activation::tanh;
  OutputTransform output_transform = OutputTransform::identity;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Gradients with the same shapes as an MlpParams.
struct Grads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  friend bool operator==(const Grads&, const Grads&) = default;
};

// Activations recorded by a batched forward pass.
struct MlpCache {
  std::vector<Matrix> inputs;  // inputs[i]: input to layer i, (batch, layer_sizes[i])
  std::vector<Matrix> pre;     // pre[i]: affine output of layer i
  Matrix output;               // after output_transform
};

struct MlpBackward {
  Grads grads;
  Matrix input_grad;
};

inline void check_params(const MlpParams& p) {
  if (p.layer_sizes.size() < 2) throw ContractViolation("MlpParams: need at least input and output size");
  if (p.weights.size() != p.layer_sizes.size() - 1 || p.biases.size() != p.weights.size()) {
    throw ContractViolation("MlpParams: layer count mismatch");
  }
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    if (p.weights[i].rows() != p.layer_sizes[i + 1] || p.weights[i].cols() != p.layer_sizes[i] ||
        p.biases[i].size() != p.layer_sizes[i + 1]) {
      throw ContractViolation("MlpParams: layer " + std::to_string(i) + " has wrong shape");
    }
  }
}

// Glorot-uniform weights, zero biases.
inline MlpParams make_mlp(std::vector<std::size_t> layer_sizes, Activation activation,
                          OutputTransform output_transform, Rng& rng) {
  if (layer_sizes.size() < 2) throw ConfigError("make_mlp: need at least two layer sizes");
  MlpParams p;
  p.layer_sizes = std::move(layer_sizes);
  p.activation = activation;
  p.output_transform = output_transform;
  for (std::size_t i = 0; i + 1 < p.layer_sizes.size(); ++i) {
    const std::size_t fan_in = p.layer_sizes[i];
    const std::size_t fan_out = p.layer_sizes[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

inline Grads zero_grads(const MlpParams& p) {
  Grads g;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    g.weights.emplace_back(p.weights[i].rows(), p.weights[i].cols());
    g.biases.emplace_back(p.biases[i].size(), 0.0);
  }
  return g;
}

inline void accumulate(Grads& into, const Grads& g, double scale = 1.0) {
  if (into.weights.size() != g.weights.size()) throw ContractViolation("accumulate: layer count mismatch");
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    add_inplace(into.weights[i], g.weights[i], scale);
    if (into.biases[i].size() != g.biases[i].size()) throw ContractViolation("accumulate: bias mismatch");
    for (std::size_t j = 0; j < g.biases[i].size(); ++j) into.biases[i][j] += scale * g.biases[i][j];
  }
}

inline void scale_grads(Grads& g, double scale) {
  for (auto& w : g.weights) {
    for (double& v : w.data()) v *= scale;
  }
  for (auto& b : g.biases) {
    for (double& v : b) v *= scale;
  }
}

inline double grad_norm(const Grads& g) {
  double s = 0.0;
  for (const auto& w : g.weights) {
    for (double v : w.data()) s += v * v;
  }
  for (const auto& b : g.biases) {
    for (double v : b) s += v * v;
  }
  return std::sqrt(s);
}

// Rescales so the global L2 norm is at most max_norm. Returns the norm before clipping.
inline double clip_grad_norm(Grads& g, double max_norm) {
  const double n = grad_norm(g);
  if (max_norm > 0.0 && n > max_norm) scale_grads(g, max_norm / n);
  return n;
}

inline bool all_finite(const Grads& g) {
  for (const auto& w : g.weights) {
    if (!w.all_finite()) return false;
  }
  for (const auto& b : g.biases) {
    for (double v : b) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

inline std::size_t parameter_count(const MlpParams& p) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.weights.size(); ++i) n += p.weights[i].size() + p.biases[i].size();
  return n;
}

// Flat parameter access in layer order: weights[0], biases[0], weights[1], ...
inline double& parameter_at(MlpParams& p, std::size_t index) {
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    if (index < p.weights[i].size()) return p.weights[i].data()[index];
    index -= p.weights[i].size();
    if (index < p.biases[i].size()) return p.biases[i][index];
    index -= p.biases[i].size();
  }
  throw ContractViolation("parameter_at: index out of range");
}

inline double grad_at(const Grads& g, std::size_t index) {
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    if (index < g.weights[i].size()) return g.weights[i].data()[index];
    index -= g.weights[i].size();
    if (index < g.biases[i].size()) return g.biases[i][index];
    index -= g.biases[i].size();
  }
  throw ContractViolation("grad_at: index out of range");
}

// Redraws every parameter from N(0, stddev^2).
inline void randomize_normal(MlpParams& p, double stddev, Rng& rng) {
  for (auto& w : p.weights) {
    for (double& v : w.data()) v = rng.normal(0.0, stddev);
  }
  for (auto& b : p.biases) {
    for (double& v : b) v = rng.normal(0.0, stddev);
  }
}

namespace detail {

inline double activate(Activation a, double z) { return a == Activation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0); }

// Derivative expressed through pre-activation z and post-activation y.
inline double activate_grad(Activation a, double z, double y) {
  return a == Activation::tanh ? 1.0 - y * y : (z > 0.0 ? 1.0 : 0.0);
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// Batched forward pass: one row per example.
inline MlpCache mlp_forward_batch(const MlpParams& params, const Matrix& input) {
  if (params.layer_sizes.empty() || input.cols() != params.input_size()) {
    throw ContractViolation("mlp_forward: input width " + std::to_string(input.cols()) + " != " +
                            std::to_string(params.layer_sizes.empty() ? 0 : params.input_size()));
  }
  MlpCache cache;
  cache.inputs.reserve(params.num_layers());
  cache.pre.reserve(params.num_layers());
  Matrix current = input;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    Matrix z = matmul_nt(current, params.weights[l]);
    const auto& b = params.biases[l];
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    cache.inputs.push_back(std::move(current));
    const bool last = l + 1 == params.num_layers();
    Matrix y = z;
    if (!last) {
      for (double& v : y.data()) v = detail::activate(params.activation, v);
    } else if (params.output_transform == OutputTransform::sigmoid) {
      for (double& v : y.data()) v = detail::sigmoid(v);
    }
    cache.pre.push_back(std::move(z));
    current = std::move(y);
  }
  cache.output = std::move(current);
  return cache;
}

// Batched backward pass. Gradients are summed over the batch; output_grad holds
// d(loss)/d(output) per row.
inline MlpBackward mlp_backward_batch(const MlpParams& params, const MlpCache& cache, const Matrix& output_grad) {
  const std::size_t layers = params.num_layers();
  if (cache.pre.size() != layers || cache.inputs.size() != layers) {
    throw ContractViolation("mlp_backward: cache does not match params");
  }
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols()) {
    throw ContractViolation("mlp_backward: output_grad shape mismatch");
  }
  MlpBackward result;
  result.grads.weights.resize(layers);
  result.grads.biases.resize(layers);

  Matrix delta = output_grad;
  if (params.output_transform == OutputTransform::sigmoid) {
    const auto& y = cache.output.data();
    auto& d = delta.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0 - y[i]);
  }
  for (std::size_t l = layers; l-- > 0;) {
    result.grads.weights[l] = matmul_tn(delta, cache.inputs[l]);
    std::vector<double> db(delta.cols(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto row = delta.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
    }
    result.grads.biases[l] = std::move(db);
    Matrix upstream = matmul(delta, params.weights[l]);
    if (l > 0) {
      const auto& z = cache.pre[l - 1].data();
      const auto& y = cache.inputs[l].data();
      auto& u = upstream.data();
      for (std::size_t i = 0; i < u.size(); ++i) u[i] *= detail::activate_grad(params.activation, z[i], y[i]);
    }
    delta = std::move(upstream);
  }
  result.input_grad = std::move(delta);
  return result;
}

// Single-example forward pass.
inline std::pair<std::vector<double>, MlpCache> mlp_forward(const MlpParams& params, std::span<const double> input) {
  Matrix in(1, input.size(), std::vector<double>(input.begin(), input.end()));
  MlpCache cache = mlp_forward_batch(params, in);
  std::vector<double> out = cache.output.data();
  return {std::move(out), std::move(cache)};
}

// Single-example backward pass; returns parameter gradients and d(loss)/d(input).
inline std::pair<Grads, std::vector<double>> mlp_backward(const MlpParams& params, const MlpCache& cache,
                                                          std::span<const double> output_grad) {
  Matrix g(1, output_grad.size(), std::vector<double>(output_grad.begin(), output_grad.end()));
  MlpBackward b = mlp_backward_batch(params, cache, g);
  return {std::move(b.grads), std::move(b.input_grad.data())};
}

// Output only, no cache kept by the caller.
inline std::vector<double> mlp_eval(const MlpParams& params, std::span<const double> input) {
  return mlp_forward(params, input).first;
}

}  // namespace munlab
