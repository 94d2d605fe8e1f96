#pragma once

#include <cstdint>
#include <cstring>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "munlab/agent.hpp"
#include "munlab/distance.hpp"
#include "munlab/dynamics.hpp"
#include "munlab/errors.hpp"
#include "munlab/numerics/adam.hpp"
#include "munlab/numerics/mlp.hpp"
#include "munlab/replay.hpp"
#include "munlab/rng.hpp"
#include "munlab/subgoals.hpp"

namespace munlab::io {

// Little-endian-on-host binary encoding. Doubles are stored bit-exact.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void boolean(bool v) { u8(v ? 1 : 0); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void reals(const std::vector<double>& v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  void sizes(const std::vector<std::size_t>& v) {
    u64(v.size());
    for (std::size_t d : v) u64(d);
  }
  void bytes(const std::string& s) { buf_.append(s); }
  const std::string& data() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint64_t u64() { return raw<std::uint64_t>(); }
  std::uint32_t u32() { return raw<std::uint32_t>(); }
  double f64() { return raw<double>(); }
  bool boolean() {
    const auto v = u8();
    if (v > 1) throw FormatError("corrupt boolean");
    return v == 1;
  }
  std::string str() {
    const std::size_t n = length();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> reals() {
    const std::size_t n = length(sizeof(double));
    std::vector<double> v(n);
    for (double& d : v) d = f64();
    return v;
  }
  std::vector<std::size_t> sizes() {
    const std::size_t n = length(sizeof(std::uint64_t));
    std::vector<std::size_t> v(n);
    for (std::size_t& d : v) d = u64();
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    const auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  // Element count, sanity-checked against the remaining bytes.
  std::size_t length(std::size_t min_elem_bytes = 1) {
    const std::uint64_t n = u64();
    if (n > (data_.size() - pos_) / std::max<std::size_t>(min_elem_bytes, 1)) throw FormatError("truncated data");
    return static_cast<std::size_t>(n);
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated data");
  }
  template <class T>
  T raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void put(Writer& w, const Matrix& m) {
  w.u64(m.rows());
  w.u64(m.cols());
  for (double d : m.data()) w.f64(d);
}
inline Matrix get_matrix(Reader& r) {
  const std::size_t rows = r.u64();
  const std::size_t cols = r.u64();
  if (cols != 0 && rows > std::numeric_limits<std::size_t>::max() / cols) throw FormatError("corrupt matrix shape");
  std::vector<double> v(0);
  const std::string_view raw = r.take(rows * cols * sizeof(double));
  v.resize(rows * cols);
  if (!v.empty()) std::memcpy(v.data(), raw.data(), raw.size());
  return Matrix(rows, cols, std::move(v));
}

inline void put(Writer& w, const MlpParams& p) {
  w.sizes(p.layer_sizes);
  w.u8(static_cast<std::uint8_t>(p.activation));
  w.u8(static_cast<std::uint8_t>(p.output_transform));
  for (const auto& m : p.weights) put(w, m);
  for (const auto& b : p.biases) w.reals(b);
}
inline MlpParams get_mlp(Reader& r) {
  MlpParams p;
  p.layer_sizes = r.sizes();
  if (p.layer_sizes.size() < 2) throw FormatError("corrupt network: fewer than 2 layer sizes");
  const auto act = r.u8();
  const auto out = r.u8();
  if (act > 1 || out > 1) throw FormatError("corrupt network activation");
  p.activation = static_cast<Activation>(act);
  p.output_transform = static_cast<OutputTransform>(out);
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) p.weights.push_back(get_matrix(r));
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) p.biases.push_back(r.reals());
  try {
    check_params(p);
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("corrupt network: ") + e.what());
  }
  return p;
}

inline void put(Writer& w, const Grads& g) {
  w.u64(g.weights.size());
  for (const auto& m : g.weights) put(w, m);
  for (const auto& b : g.biases) w.reals(b);
}
inline Grads get_grads(Reader& r) {
  Grads g;
  const std::size_t n = r.length();
  for (std::size_t i = 0; i < n; ++i) g.weights.push_back(get_matrix(r));
  for (std::size_t i = 0; i < n; ++i) g.biases.push_back(r.reals());
  return g;
}

inline void put(Writer& w, const AdamState& s) {
  put(w, s.first_moment);
  put(w, s.second_moment);
  w.u64(s.step_count);
  w.f64(s.learning_rate);
  w.f64(s.beta1);
  w.f64(s.beta2);
  w.f64(s.epsilon);
}
inline AdamState get_adam(Reader& r) {
  AdamState s;
  s.first_moment = get_grads(r);
  s.second_moment = get_grads(r);
  s.step_count = r.u64();
  s.learning_rate = r.f64();
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.epsilon = r.f64();
  return s;
}

inline void put(Writer& w, const RunningStats& s) {
  w.reals(s.mean);
  w.reals(s.m2);
  w.f64(s.count);
}
inline RunningStats get_stats(Reader& r) {
  RunningStats s;
  s.mean = r.reals();
  s.m2 = r.reals();
  s.count = r.f64();
  return s;
}

inline void put(Writer& w, const DynamicsEnsemble& m) {
  w.u64(m.state_dim);
  w.u64(m.action_dim);
  put(w, m.norm.state);
  put(w, m.norm.action);
  put(w, m.norm.delta);
  w.u64(m.members.size());
  for (const auto& p : m.members) put(w, p);
}
inline DynamicsEnsemble get_dynamics(Reader& r) {
  DynamicsEnsemble m;
  m.state_dim = r.u64();
  m.action_dim = r.u64();
  m.norm.state = get_stats(r);
  m.norm.action = get_stats(r);
  m.norm.delta = get_stats(r);
  const std::size_t n = r.length();
  for (std::size_t i = 0; i < n; ++i) m.members.push_back(get_mlp(r));
  return m;
}

inline void put(Writer& w, const ObsNormalizer& o) {
  w.reals(o.offset);
  w.reals(o.scale);
}
inline ObsNormalizer get_obs(Reader& r) {
  ObsNormalizer o;
  o.offset = r.reals();
  o.scale = r.reals();
  return o;
}

inline void put(Writer& w, const GoalPolicy& p) {
  put(w, p.net);
  w.f64(p.action_noise_std);
  w.u64(p.bounds.size());
  for (const auto& b : p.bounds) {
    w.f64(b.lo);
    w.f64(b.hi);
  }
  put(w, p.obs);
  w.boolean(p.goal_conditioned);
}
inline GoalPolicy get_policy(Reader& r) {
  GoalPolicy p;
  p.net = get_mlp(r);
  p.action_noise_std = r.f64();
  const std::size_t n = r.length(16);
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = r.f64();
    const double hi = r.f64();
    p.bounds.push_back({lo, hi});
  }
  p.obs = get_obs(r);
  p.goal_conditioned = r.boolean();
  return p;
}

inline void put(Writer& w, const ValueNet& v) {
  put(w, v.net);
  put(w, v.obs);
  w.boolean(v.goal_conditioned);
}
inline ValueNet get_value(Reader& r) {
  ValueNet v;
  v.net = get_mlp(r);
  v.obs = get_obs(r);
  v.goal_conditioned = r.boolean();
  return v;
}

inline void put(Writer& w, const DistanceNet& d) {
  put(w, d.net);
  w.u64(d.horizon_ref);
  put(w, d.obs);
}
inline DistanceNet get_distance(Reader& r) {
  DistanceNet d;
  d.net = get_mlp(r);
  d.horizon_ref = r.u64();
  d.obs = get_obs(r);
  return d;
}

inline void put(Writer& w, const Transition& t) {
  w.reals(t.s);
  w.reals(t.a);
  w.reals(t.s_next);
  w.reals(t.goal);
  w.u8(static_cast<std::uint8_t>(t.reward));
  w.boolean(t.done);
}
inline Transition get_transition(Reader& r) {
  Transition t;
  t.s = r.reals();
  t.a = r.reals();
  t.s_next = r.reals();
  t.goal = r.reals();
  const auto reward = r.u8();
  if (reward > 1) throw FormatError("corrupt transition reward");
  t.reward = reward;
  t.done = r.boolean();
  return t;
}

inline void put(Writer& w, const Episode& e) {
  w.u8(static_cast<std::uint8_t>(e.provenance));
  w.u64(e.transitions.size());
  for (const auto& t : e.transitions) put(w, t);
  w.boolean(e.subgoal_trace.has_value());
  if (e.subgoal_trace) {
    w.u64(e.subgoal_trace->size());
    for (const auto& v : *e.subgoal_trace) {
      w.reals(v.subgoal);
      w.boolean(v.reached);
      w.u64(v.steps_used);
    }
  }
}
inline Episode get_episode(Reader& r) {
  Episode e;
  const auto prov = r.u8();
  if (prov > 1) throw FormatError("corrupt episode provenance");
  e.provenance = static_cast<Provenance>(prov);
  const std::size_t n = r.length();
  for (std::size_t i = 0; i < n; ++i) e.transitions.push_back(get_transition(r));
  if (r.boolean()) {
    e.subgoal_trace.emplace();
    const std::size_t k = r.length();
    for (std::size_t i = 0; i < k; ++i) {
      SubgoalVisit v;
      v.subgoal = r.reals();
      v.reached = r.boolean();
      v.steps_used = r.u64();
      e.subgoal_trace->push_back(std::move(v));
    }
  }
  try {
    validate_episode(e);
  } catch (const ContractViolation& ex) {
    throw FormatError(std::string("corrupt episode: ") + ex.what());
  }
  return e;
}

inline void put(Writer& w, const ReplayBuffer& b) {
  w.u64(b.capacity());
  for (const auto* q : {&b.d_dad(), &b.d_egc()}) {
    w.u64(q->size());
    for (const auto& e : *q) put(w, e);
  }
}
inline ReplayBuffer get_replay(Reader& r) {
  const std::size_t cap = r.u64();
  if (cap == 0) throw FormatError("corrupt replay capacity");
  ReplayBuffer b(cap);
  std::deque<Episode> parts[2];
  for (auto& q : parts) {
    const std::size_t n = r.length();
    for (std::size_t i = 0; i < n; ++i) q.push_back(get_episode(r));
  }
  b.restore(std::move(parts[0]), std::move(parts[1]));
  return b;
}

inline void put(Writer& w, const std::vector<std::vector<double>>& rows) {
  w.u64(rows.size());
  for (const auto& v : rows) w.reals(v);
}
inline std::vector<std::vector<double>> get_rows(Reader& r) {
  std::vector<std::vector<double>> rows(r.length());
  for (auto& v : rows) v = r.reals();
  return rows;
}

inline void put(Writer& w, const SubgoalSet& s) {
  put(w, s.goals);
  w.u8(static_cast<std::uint8_t>(s.source_strategy));
  w.u64(s.created_at_step);
  w.sizes(s.source_indices);
}
inline SubgoalSet get_subgoals(Reader& r) {
  SubgoalSet s;
  s.goals = get_rows(r);
  const auto strat = r.u8();
  if (strat > 3) throw FormatError("corrupt subgoal strategy");
  s.source_strategy = static_cast<SubgoalStrategy>(strat);
  s.created_at_step = r.u64();
  s.source_indices = r.sizes();
  return s;
}

inline void put(Writer& w, const Rng& rng) { w.str(rng.serialize()); }
inline Rng get_rng(Reader& r) {
  Rng rng;
  rng.deserialize(r.str());
  return rng;
}

}  // namespace munlab::io
