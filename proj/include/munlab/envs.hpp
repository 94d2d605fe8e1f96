#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "munlab/errors.hpp"
#include "munlab/rng.hpp"

// Three small goal-conditioned worlds sharing one interface:
//   point_maze  - 2-D point mass in a 6x8-cell U-maze with an extra top-left room
//   line_walker - 1-D walker with position and velocity
//   block_world - gripper plus two blocks on a table
// Goals live in state space (eta is the identity) and success is an L2 test.
namespace munlab {

enum class EnvId { point_maze, line_walker, block_world };

inline EnvId parse_env_id(std::string_view name) {
  if (name == "point_maze") return EnvId::point_maze;
  if (name == "line_walker") return EnvId::line_walker;
  if (name == "block_world") return EnvId::block_world;
  throw ConfigError("unknown env_id '" + std::string(name) + "'");
}

inline std::string_view to_string(EnvId id) {
  switch (id) {
    case EnvId::point_maze: return "point_maze";
    case EnvId::line_walker: return "line_walker";
    case EnvId::block_world: return "block_world";
  }
  return "?";
}

struct ActionBounds {
  double lo = -1.0;
  double hi = 1.0;

  friend bool operator==(const ActionBounds&, const ActionBounds&) = default;
};

struct EnvSpec {
  EnvId id = EnvId::point_maze;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t horizon = 0;
  std::vector<ActionBounds> action_bounds;
  double success_threshold = 0.0;
  // Fixed affine map (s - offset) / scale feeding the policy, critic and distance nets.
  std::vector<double> obs_offset;
  std::vector<double> obs_scale;
  // State coordinates and cell size used by directional coverage.
  std::vector<std::size_t> coverage_dims;
  double coverage_cell = 0.5;
  // Whether (s', -a, s) is a valid transition up to noise and walls.
  bool reversible_by_negation = false;
};

struct EnvState {
  std::vector<double> state;
  std::size_t step_index = 0;
  bool done = false;
};

struct GoalCommand {
  std::vector<double> goal;
};

struct StepResult {
  EnvState next;
  int reward = 0;
  bool done = false;
};

inline constexpr std::size_t kHorizon = 150;
inline constexpr std::size_t kSubgoalTimeLimit = 75;
// Uniform transition noise as a fraction of each action dimension's range.
inline constexpr double kNoiseFraction = 0.01;

namespace maze {

inline constexpr int kRows = 6;
inline constexpr int kCols = 8;
inline constexpr double kStepScale = 0.5;
// Row 0 is the bottom row; '#' is a wall cell.
inline constexpr std::array<std::string_view, kRows> kLayout = {
    "........",  // row 0
    "........",  // row 1
    "........",  // row 2
    "#####...",  // row 3
    "........",  // row 4
    "..#.....",  // row 5
};

inline bool wall_cell(int col, int row) {
  if (col < 0 || row < 0 || col >= kCols || row >= kRows) return true;
  return kLayout[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] == '#';
}

inline int cell_of(double v) { return static_cast<int>(std::floor(v)); }

inline bool blocked(double x, double y) { return wall_cell(cell_of(x), cell_of(y)); }

// Moves one axis by delta (|delta| < 1), stopping at the face of any wall cell
// or the outer boundary.
inline double move_axis(double pos, double other, double delta, bool along_x) {
  const double target = pos + delta;
  const int from = cell_of(pos);
  const int to = cell_of(target);
  if (to == from) return target;
  const int c = along_x ? to : cell_of(other);
  const int r = along_x ? cell_of(other) : to;
  if (!wall_cell(c, r)) return target;
  // Moving up: stay just below the wall cell; moving down: sit on its upper face.
  return to > from ? std::nextafter(static_cast<double>(to), -1e9) : static_cast<double>(to + 1);
}

}  // namespace maze

namespace blocks {

inline constexpr std::size_t kNumBlocks = 2;
inline constexpr double kMoveScale = 0.05;
inline constexpr double kBlockHeight = 0.05;
inline constexpr double kTableZ = 0.025;  // block centre resting on the table
inline constexpr double kGraspRadius = 0.04;
inline constexpr double kXYLimit = 0.4;
inline constexpr double kZMax = 0.3;
inline constexpr std::array<double, 3> kHome = {0.0, 0.0, 0.2};
inline constexpr std::array<std::array<double, 3>, kNumBlocks> kSlots = {{{-0.15, 0.0, kTableZ}, {0.15, 0.0, kTableZ}}};

inline std::size_t block_offset(std::size_t k) { return 4 + 3 * k; }

}  // namespace blocks

inline EnvSpec env_spec(EnvId id) {
  EnvSpec s;
  s.id = id;
  s.horizon = kHorizon;
  switch (id) {
    case EnvId::point_maze:
      s.state_dim = 2;
      s.action_dim = 2;
      s.success_threshold = 0.15;
      s.obs_offset = {4.0, 3.0};
      s.obs_scale = {4.0, 3.0};
      s.coverage_dims = {0, 1};
      s.coverage_cell = 0.5;
      s.reversible_by_negation = true;
      break;
    case EnvId::line_walker:
      s.state_dim = 2;
      s.action_dim = 1;
      s.success_threshold = 0.5;
      s.obs_offset = {0.0, 0.0};
      s.obs_scale = {5.0, 1.0};
      s.coverage_dims = {0};
      s.coverage_cell = 0.5;
      break;
    case EnvId::block_world:
      s.state_dim = 4 + 3 * blocks::kNumBlocks;
      s.action_dim = 4;
      s.success_threshold = 0.03;
      s.obs_offset = {0.0, 0.0, 0.15, 0.5, 0.0, 0.0, 0.15, 0.0, 0.0, 0.15};
      s.obs_scale = {0.3, 0.3, 0.15, 0.5, 0.3, 0.3, 0.15, 0.3, 0.3, 0.15};
      s.coverage_dims = {4, 5, 6, 7, 8, 9};
      s.coverage_cell = 0.25;
      break;
  }
  s.action_bounds.assign(s.action_dim, ActionBounds{-1.0, 1.0});
  return s;
}

// eta: state -> achieved goal. The identity, since goals live in state space.
inline std::vector<double> eta(std::span<const double> s) { return {s.begin(), s.end()}; }

inline double l2(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum);
}

// Distance compared against success_threshold. Full-state L2, except in
// block_world where it is the worst per-block L2 and the gripper is ignored.
inline double goal_distance(EnvId id, std::span<const double> s, std::span<const double> g) {
  if (s.size() != g.size()) throw ContractViolation("goal_distance: dimension mismatch");
  if (id != EnvId::block_world) return l2(eta(s), g);
  double worst = 0.0;
  for (std::size_t k = 0; k < blocks::kNumBlocks; ++k) {
    const std::size_t o = blocks::block_offset(k);
    worst = std::max(worst, l2(s.subspan(o, 3), g.subspan(o, 3)));
  }
  return worst;
}

inline bool is_success(EnvId id, std::span<const double> s, std::span<const double> g) {
  return goal_distance(id, s, g) <= env_spec(id).success_threshold;
}

// Subgoal navigation compares the whole state (gripper included).
inline bool subgoal_reached(EnvId id, std::span<const double> s, std::span<const double> g) {
  return l2(s, g) <= env_spec(id).success_threshold;
}

inline bool is_legal(EnvId id, std::span<const double> s) {
  const EnvSpec spec = env_spec(id);
  if (s.size() != spec.state_dim) return false;
  for (double v : s) {
    if (!std::isfinite(v)) return false;
  }
  switch (id) {
    case EnvId::point_maze:
      return !maze::blocked(s[0], s[1]);
    case EnvId::line_walker:
      return std::abs(s[0]) <= 8.0 && std::abs(s[1]) <= 1.0 + 1e-9;
    case EnvId::block_world: {
      constexpr double tol = 1e-9;
      auto in_box = [&](std::size_t o) {
        return std::abs(s[o]) <= blocks::kXYLimit + tol && std::abs(s[o + 1]) <= blocks::kXYLimit + tol &&
               s[o + 2] >= blocks::kTableZ - tol && s[o + 2] <= blocks::kZMax + tol;
      };
      if (!in_box(0) || (s[3] != 0.0 && s[3] != 1.0)) return false;
      for (std::size_t k = 0; k < blocks::kNumBlocks; ++k) {
        if (!in_box(blocks::block_offset(k))) return false;
      }
      return true;
    }
  }
  return false;
}

inline EnvState reset(EnvId id, Rng& rng) {
  EnvState st;
  switch (id) {
    case EnvId::point_maze:
      st.state = {0.5 + rng.uniform(-0.05, 0.05), 0.5 + rng.uniform(-0.05, 0.05)};
      break;
    case EnvId::line_walker:
      st.state = {0.0, 0.0};
      break;
    case EnvId::block_world: {
      st.state.assign(env_spec(id).state_dim, 0.0);
      st.state[0] = blocks::kHome[0] + rng.uniform(-0.01, 0.01);
      st.state[1] = blocks::kHome[1] + rng.uniform(-0.01, 0.01);
      st.state[2] = blocks::kHome[2];
      st.state[3] = 0.0;
      for (std::size_t k = 0; k < blocks::kNumBlocks; ++k) {
        std::copy(blocks::kSlots[k].begin(), blocks::kSlots[k].end(),
                  st.state.begin() + static_cast<std::ptrdiff_t>(blocks::block_offset(k)));
      }
      break;
    }
  }
  return st;
}

// Test-only state injection (navigation matrix). Never used on training paths.
inline EnvState inject_state(EnvId id, std::span<const double> s) {
  if (!is_legal(id, s)) throw ConfigError("inject_state: state outside the legal region of " + std::string(to_string(id)));
  return EnvState{{s.begin(), s.end()}, 0, false};
}

// The evaluation goal set p_g (sampled uniformly).
inline std::vector<std::vector<double>> env_goal_set(EnvId id) {
  switch (id) {
    case EnvId::point_maze:
      return {{0.5, 4.5}, {1.5, 4.5}, {0.5, 5.5}, {1.5, 5.5}};
    case EnvId::line_walker:
      return {{3.0, 0.0}, {-3.0, 0.0}, {4.0, 0.0}, {-4.0, 0.0}, {5.0, 0.0}, {-5.0, 0.0}};
    case EnvId::block_world: {
      // Block b stacked on block a, resting at a's slot; gripper above, open.
      std::vector<std::vector<double>> goals;
      for (std::size_t a = 0; a < blocks::kNumBlocks; ++a) {
        for (std::size_t b = 0; b < blocks::kNumBlocks; ++b) {
          if (a == b) continue;
          std::vector<double> g(env_spec(id).state_dim, 0.0);
          const auto& base = blocks::kSlots[a];
          g[0] = base[0];
          g[1] = base[1];
          g[2] = blocks::kHome[2];
          g[3] = 0.0;
          for (std::size_t k = 0; k < blocks::kNumBlocks; ++k) {
            const std::size_t o = blocks::block_offset(k);
            if (k == a) {
              std::copy(base.begin(), base.end(), g.begin() + static_cast<std::ptrdiff_t>(o));
            } else if (k == b) {
              g[o] = base[0];
              g[o + 1] = base[1];
              g[o + 2] = base[2] + blocks::kBlockHeight;
            } else {
              std::copy(blocks::kSlots[k].begin(), blocks::kSlots[k].end(), g.begin() + static_cast<std::ptrdiff_t>(o));
            }
          }
          goals.push_back(std::move(g));
        }
      }
      return goals;
    }
  }
  return {};
}

inline GoalCommand sample_env_goal(EnvId id, Rng& rng) {
  auto goals = env_goal_set(id);
  return GoalCommand{std::move(goals[rng.index(goals.size())])};
}

// True when the negated action taken at s_next returns to s (up to action
// noise). Only point_maze moves qualify, and only when no wall clipped the
// move in either direction.
inline bool undone_by_negation(EnvId id, std::span<const double> s, std::span<const double> a,
                               std::span<const double> s_next) {
  if (id != EnvId::point_maze) return false;
  const double noise = maze::kStepScale * kNoiseFraction * 2.0 + 1e-9;
  double d[2];
  for (std::size_t i = 0; i < 2; ++i) {
    d[i] = maze::kStepScale * std::clamp(a[i], -1.0, 1.0);
    if (std::abs(s_next[i] - s[i] - d[i]) > noise) return false;
  }
  const double x = maze::move_axis(s_next[0], s_next[1], -d[0], true);
  const double y = maze::move_axis(s_next[1], x, -d[1], false);
  return x == s_next[0] - d[0] && y == s_next[1] - d[1];
}

// One environment step. Actions are clipped to bounds; noise is uniform in
// +-1% of each action range and is drawn for every action dimension.
inline StepResult step(EnvId id, const EnvState& st, std::span<const double> action, const GoalCommand& goal, Rng& rng) {
  const EnvSpec spec = env_spec(id);
  if (st.done || st.step_index >= spec.horizon) throw ContractViolation("step: episode already finished");
  if (action.size() != spec.action_dim) throw ContractViolation("step: action dimension mismatch");
  if (st.state.size() != spec.state_dim || goal.goal.size() != spec.state_dim) {
    throw ContractViolation("step: state/goal dimension mismatch");
  }
  std::vector<double> a(spec.action_dim);
  for (std::size_t i = 0; i < spec.action_dim; ++i) {
    const auto [lo, hi] = spec.action_bounds[i];
    const double clipped = std::clamp(std::isfinite(action[i]) ? action[i] : 0.0, lo, hi);
    a[i] = clipped + rng.uniform(-1.0, 1.0) * kNoiseFraction * (hi - lo);
  }

  std::vector<double> s = st.state;
  switch (id) {
    case EnvId::point_maze: {
      const double dx = maze::kStepScale * std::clamp(a[0], -1.0, 1.0);
      const double dy = maze::kStepScale * std::clamp(a[1], -1.0, 1.0);
      s[0] = maze::move_axis(s[0], s[1], dx, true);
      s[1] = maze::move_axis(s[1], s[0], dy, false);
      break;
    }
    case EnvId::line_walker: {
      const double v = std::clamp(0.8 * s[1] + 0.2 * a[0], -1.0, 1.0);
      const double x = s[0] + 0.5 * v;
      if (x > 8.0 || x < -8.0) {
        s[0] = std::clamp(x, -8.0, 8.0);
        s[1] = 0.0;
      } else {
        s[0] = x;
        s[1] = v;
      }
      break;
    }
    case EnvId::block_world: {
      using namespace blocks;
      const bool was_closed = s[3] == 1.0;
      // The block nearest the closed gripper (within the grasp radius) is carried.
      std::size_t carried = kNumBlocks;
      if (was_closed && action[3] > 0.0) {
        double best = kGraspRadius;
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
          const double d = l2(std::span<const double>(s).subspan(0, 3),
                              std::span<const double>(s).subspan(block_offset(k), 3));
          if (d <= best) {
            best = d;
            carried = k;
            if (d == 0.0) break;
          }
        }
      }
      std::array<double, 3> before = {s[0], s[1], s[2]};
      s[0] = std::clamp(s[0] + kMoveScale * a[0], -kXYLimit, kXYLimit);
      s[1] = std::clamp(s[1] + kMoveScale * a[1], -kXYLimit, kXYLimit);
      s[2] = std::clamp(s[2] + kMoveScale * a[2], kTableZ, kZMax);
      if (carried < kNumBlocks) {
        const std::size_t o = block_offset(carried);
        // Keep the block inside the workspace by limiting the shared displacement.
        for (std::size_t d = 0; d < 3; ++d) {
          double delta = s[d] - before[d];
          const double lo = d == 2 ? kTableZ : -kXYLimit;
          const double hi = d == 2 ? kZMax : kXYLimit;
          const double moved = std::clamp(s[o + d] + delta, lo, hi);
          delta = moved - s[o + d];
          s[d] = before[d] + delta;
          s[o + d] = moved;
        }
      }
      s[3] = action[3] > 0.0 ? 1.0 : 0.0;
      break;
    }
  }

  StepResult r;
  r.next.state = std::move(s);
  r.next.step_index = st.step_index + 1;
  r.reward = is_success(id, r.next.state, goal.goal) ? 1 : 0;
  r.done = r.reward == 1 || r.next.step_index >= spec.horizon;
  r.next.done = r.done;
  return r;
}

}  // namespace munlab
