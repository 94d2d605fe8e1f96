#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "munlab/envs.hpp"
#include "munlab/errors.hpp"
#include "munlab/rng.hpp"

namespace munlab {

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  std::vector<double> s_next;
  std::vector<double> goal;
  int reward = 0;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

enum class Provenance { dad_directed, env_goal };

struct SubgoalVisit {
  std::vector<double> subgoal;
  bool reached = false;
  std::size_t steps_used = 0;

  friend bool operator==(const SubgoalVisit&, const SubgoalVisit&) = default;
};

struct Episode {
  std::vector<Transition> transitions;
  Provenance provenance = Provenance::env_goal;
  std::optional<std::vector<SubgoalVisit>> subgoal_trace;

  std::size_t size() const { return transitions.size(); }

  friend bool operator==(const Episode&, const Episode&) = default;
};

// Checks s_next[i] == s[i+1] and the trace/provenance pairing. Throws ContractViolation.
inline void validate_episode(const Episode& ep) {
  for (std::size_t i = 0; i + 1 < ep.transitions.size(); ++i) {
    if (ep.transitions[i].s_next != ep.transitions[i + 1].s) {
      throw ContractViolation("episode transition chain broken at step " + std::to_string(i));
    }
  }
  const bool directed = ep.provenance == Provenance::dad_directed;
  if (directed != ep.subgoal_trace.has_value()) {
    throw ContractViolation("episode subgoal_trace must be present exactly for directed episodes");
  }
}

enum class EpisodeSource { egc, dad, union_all };

// Split replay store: D_DAD (directed exploration episodes) and D_egc
// (environment-goal episodes). D is their union, materialised on demand.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 500) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("replay capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  const std::deque<Episode>& d_dad() const { return d_dad_; }
  const std::deque<Episode>& d_egc() const { return d_egc_; }
  std::size_t num_transitions() const { return total_; }
  bool empty() const { return total_ == 0; }

  void append(Episode episode) {
    validate_episode(episode);
    auto& target = episode.provenance == Provenance::dad_directed ? d_dad_ : d_egc_;
    target.push_back(std::move(episode));
    if (target.size() > capacity_) target.pop_front();
    reindex();
  }

  // Uniform with replacement over every transition in D.
  std::vector<Transition> sample_transitions(std::size_t n, Rng& rng) const {
    if (n == 0) return {};
    if (total_ == 0) throw EmptySourceError("sample_transitions: buffer has no transitions");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(transition_at(rng.index(total_)));
    return out;
  }

  // Complete episodes, uniform without replacement (with replacement when the
  // request exceeds the population).
  std::vector<Episode> sample_episode_batch(EpisodeSource source, std::size_t batch_size, Rng& rng) const {
    std::vector<const Episode*> pool;
    if (source != EpisodeSource::egc) {
      for (const auto& e : d_dad_) pool.push_back(&e);
    }
    if (source != EpisodeSource::dad) {
      for (const auto& e : d_egc_) pool.push_back(&e);
    }
    if (pool.empty()) throw EmptySourceError("sample_episode_batch: requested source is empty");
    std::vector<Episode> out;
    out.reserve(batch_size);
    if (batch_size <= pool.size()) {
      std::vector<std::size_t> idx(pool.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      // Partial Fisher-Yates.
      for (std::size_t i = 0; i < batch_size; ++i) {
        std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
        out.push_back(*pool[idx[i]]);
      }
    } else {
      for (std::size_t i = 0; i < batch_size; ++i) out.push_back(*pool[rng.index(pool.size())]);
    }
    return out;
  }

  // Flat access across D_DAD then D_egc.
  const Transition& transition_at(std::size_t flat) const {
    if (flat >= total_) throw ContractViolation("transition_at: index out of range");
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
    const std::size_t ep = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    const Episode& e = ep < d_dad_.size() ? d_dad_[ep] : d_egc_[ep - d_dad_.size()];
    return e.transitions[flat - offsets_[ep]];
  }

  // Restores contents verbatim (checkpoint loading).
  void restore(std::deque<Episode> dad, std::deque<Episode> egc) {
    d_dad_ = std::move(dad);
    d_egc_ = std::move(egc);
    reindex();
  }

 private:
  void reindex() {
    offsets_.clear();
    total_ = 0;
    for (const auto* q : {&d_dad_, &d_egc_}) {
      for (const auto& e : *q) {
        offsets_.push_back(total_);
        total_ += e.size();
      }
    }
  }

  std::size_t capacity_;
  std::deque<Episode> d_dad_;
  std::deque<Episode> d_egc_;
  std::vector<std::size_t> offsets_;  // first flat index of each episode
  std::size_t total_ = 0;
};

struct CoverageReport {
  std::size_t forward_pairs = 0;   // unordered cell pairs seen in the low-to-high direction
  std::size_t backward_pairs = 0;  // ... seen in the high-to-low direction
  std::size_t both = 0;
  std::size_t any = 0;
  double bidirectional_fraction = 0.0;
};

using CellKey = std::vector<long long>;

inline CellKey cell_key(std::span<const double> s, std::span<const std::size_t> dims, double cell_size) {
  CellKey key;
  key.reserve(dims.size());
  for (std::size_t d : dims) key.push_back(static_cast<long long>(std::floor(s[d] / cell_size)));
  return key;
}

// Discretises the chosen state coordinates into cells and counts the cell pairs
// crossed by stored transitions in each direction. Transitions that stay inside
// one cell are ignored. An empty `dims` means every coordinate.
inline CoverageReport directional_coverage(const ReplayBuffer& buffer, double cell_size,
                                           std::vector<std::size_t> dims = {}) {
  if (!(cell_size > 0.0)) throw ConfigError("directional_coverage: cell_size must be positive");
  if (buffer.empty()) throw EmptySourceError("directional_coverage: buffer is empty");
  std::set<std::pair<CellKey, CellKey>> seen;
  for (const auto* q : {&buffer.d_dad(), &buffer.d_egc()}) {
    for (const auto& ep : *q) {
      for (const auto& t : ep.transitions) {
        if (dims.empty()) {
          for (std::size_t d = 0; d < t.s.size(); ++d) dims.push_back(d);
        }
        CellKey from = cell_key(t.s, dims, cell_size);
        CellKey to = cell_key(t.s_next, dims, cell_size);
        if (from != to) seen.emplace(std::move(from), std::move(to));
      }
    }
  }
  CoverageReport r;
  for (const auto& [from, to] : seen) {
    const bool reverse_seen = seen.count({to, from}) > 0;
    if (from < to) {
      ++r.forward_pairs;
      ++r.any;
      if (reverse_seen) ++r.both;
    } else {
      ++r.backward_pairs;
      if (!reverse_seen) ++r.any;
    }
  }
  r.bidirectional_fraction = r.any == 0 ? 0.0 : static_cast<double>(r.both) / static_cast<double>(r.any);
  return r;
}

}  // namespace munlab
