// Acceptance checks. Usage: acceptance <id>... where id is 1-10, "all", or
// "train-maze" / "train-blocks" to (re)build the shared training runs that
// criteria 4-6 and 8 read back. Prints one PASS/FAIL line per criterion and
// exits non-zero if any failed.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "munlab/cli.hpp"
#include "stats.hpp"

using namespace munlab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigDir = MUNLAB_CONFIG_DIR;
constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

fs::path run_dir() {
  const fs::path d = fs::current_path() / "acceptance_runs";
  fs::create_directories(d);
  return d;
}

ExperimentConfig config_for(const std::string& file, Method m, std::uint64_t seed) {
  ExperimentConfig c = load_config((kConfigDir / file).string());
  c.method = m;
  if (m == Method::mun_ns3) {
    c.N_s = 3;
    c.T_s = env_spec(c.env_id).horizon / 3;
  }
  c.seed = seed;
  c.validate();
  return c;
}

fs::path ckpt_path(const std::string& tag, Method m, std::uint64_t seed) {
  return run_dir() / (tag + "_" + std::string(to_string(m)) + "_" + std::to_string(seed) + ".ckpt");
}

void train_to(const ExperimentConfig& cfg, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer t(cfg);
  t.run();
  write_file(out.string(), t.save());
  std::cout << "  trained " << out.filename().string() << ": " << t.env_steps() << " steps, "
            << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) << " s, final success "
            << fmt(t.metrics().back().eval_success_rate) << std::endl;
}

// A stored run is reused only if its config matches and it finished.
Trainer stored_run(const std::string& tag, const std::string& file, Method m, std::uint64_t seed) {
  const ExperimentConfig cfg = config_for(file, m, seed);
  const fs::path p = ckpt_path(tag, m, seed);
  if (fs::exists(p)) {
    Trainer t = load_checkpoint(p.string());
    if (t.config().to_text() == cfg.to_text() && t.finished()) return t;
  }
  train_to(cfg, p);
  return load_checkpoint(p.string());
}

// --- 1: gradient checks ---

Outcome gradients() {
  constexpr double tol = 1e-4;
  double worst[4] = {0, 0, 0, 0};
  std::size_t failed = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    const EnvSpec spec = env_spec(EnvId::point_maze);

    DynamicsEnsemble model = make_dynamics(2, 2, 3, {8, 8}, rng);
    std::vector<Transition> batch;
    for (int k = 0; k < 12; ++k) {
      const double x = rng.uniform(0, 8), y = rng.uniform(0, 6);
      batch.push_back({{x, y}, {rng.uniform(-1, 1), rng.uniform(-1, 1)}, {x + rng.uniform(-.5, .5), y + rng.uniform(-.5, .5)},
                       {0, 0}, 0, false});
    }
    update_normalizer(model.norm, batch);
    const auto dyn = finite_diff_check(model.members[0], [&](const MlpParams& p) { return member_loss(p, model.norm, batch); }, tol);

    DistanceNet dnet = make_distance_net(obs_normalizer(spec), {8, 8}, 15, rng);
    randomize_normal(dnet.net, 0.5, rng);
    std::vector<DistancePair> pairs;
    for (int k = 0; k < 12; ++k) {
      pairs.push_back({{rng.uniform(0, 8), rng.uniform(0, 6)}, {rng.uniform(0, 8), rng.uniform(0, 6)}, rng.uniform(0, 1)});
    }
    const auto dist = finite_diff_check(dnet.net, [&](const MlpParams& p) {
      DistanceNet q = dnet;
      q.net = p;
      return distance_loss(q, pairs);
    }, tol);

    ValueNet critic = make_value_net(spec, {8, 8}, rng);
    randomize_normal(critic.net, 0.5, rng);
    Matrix S(10, 2), G(10, 2);
    std::vector<double> targets, weights;
    for (std::size_t r = 0; r < 10; ++r) {
      S(r, 0) = rng.uniform(0, 8);
      S(r, 1) = rng.uniform(0, 6);
      G(r, 0) = rng.uniform(0, 8);
      G(r, 1) = rng.uniform(0, 6);
      targets.push_back(rng.uniform(-5, 0));
      weights.push_back(rng.uniform(0.1, 1));
    }
    const auto crit = finite_diff_check(critic.net, [&](const MlpParams& p) {
      ValueNet q = critic;
      q.net = p;
      return critic_regression_loss(q, S, G, targets, weights);
    }, tol);

    GoalPolicy pi = make_policy(spec, {8}, 0.3, rng);
    randomize_normal(pi.net, 0.5, rng);
    for (auto& m : model.members) randomize_normal(m, 0.3, rng);
    const auto noise = draw_imagination_noise(S.rows(), 2, 2, ActMode::stochastic, rng);
    const ImaginationReward rm{ImaginationReward::Kind::temporal_distance, &dnet, 0.0};
    const auto actor = finite_diff_check(pi.net, [&](const MlpParams& p) {
      GoalPolicy q = pi;
      q.net = p;
      return actor_objective(q, critic, model, rm, S, G, noise, 0.95, 0.95);
    }, tol);

    const GradCheckReport* reps[] = {&dyn, &dist, &crit, &actor};
    for (int k = 0; k < 4; ++k) {
      worst[k] = std::max(worst[k], reps[k]->max_rel_error);
      failed += reps[k]->passed ? 0 : 1;
    }
  }
  return {failed == 0, "max rel error dynamics " + fmt(worst[0]) + ", distance " + fmt(worst[1]) + ", critic " +
                           fmt(worst[2]) + ", actor " + fmt(worst[3]) + " (limit 1e-4, 20 seeds each)"};
}

// --- 2: FPS against a brute-force greedy reference ---

std::vector<std::size_t> brute_fps(const std::vector<std::vector<double>>& pts, std::size_t n, std::size_t first) {
  std::vector<std::size_t> out{first};
  while (out.size() < std::min(n, pts.size())) {
    std::size_t best = pts.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (std::find(out.begin(), out.end(), i) != out.end()) continue;
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t j : out) {
        double s = 0.0;
        for (std::size_t k = 0; k < pts[i].size(); ++k) s += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
        dmin = std::min(dmin, std::sqrt(s));
      }
      if (dmin > best_d) {
        best_d = dmin;
        best = i;
      }
    }
    out.push_back(best);
  }
  return out;
}

Outcome fps_oracle() {
  Rng rng(77);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(64), dim = 1 + rng.index(8);
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts) {
      for (double& v : p) v = trial % 5 == 0 ? std::round(rng.uniform(-3, 3)) : rng.normal();
    }
    const std::size_t k = 1 + rng.index(n + 4), first = rng.index(n);
    if (fps(pts, k, rng, first) != brute_fps(pts, k, first)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(200 - mismatches) + "/200 point sets match index-for-index"};
}

// --- 3: temporal distance on a chain world ---

ImaginedRollout chain(double start, std::size_t h) {
  ImaginedRollout r;
  r.horizon = h;
  for (std::size_t t = 0; t <= h; ++t) r.states.push_back({start + 0.1 * static_cast<double>(t)});
  r.actions.assign(h, {1.0});
  return r;
}

Outcome temporal_distance() {
  Rng rng(5);
  DistanceNet d = make_distance_net({{2.0}, {2.0}}, {32, 32}, 15, rng);
  AdamState opt = make_adam(d.net, 1e-3);
  // Training starts come from [0, 2.5]; held-out pairs start in the gaps between them.
  for (int step = 0; step < 1500; ++step) {
    std::vector<ImaginedRollout> rs;
    for (int k = 0; k < 16; ++k) rs.push_back(chain(0.1 * static_cast<double>(rng.index(26)), 15));
    train_distance_step(d, rs, 8, opt, rng);
  }
  std::vector<double> pred, gap;
  for (int k = 0; k < 500; ++k) {
    const double s = 0.1 * static_cast<double>(rng.index(25)) + 0.05;
    const std::size_t g = rng.index(16);
    pred.push_back(distance(d, std::vector<double>{s}, std::vector<double>{s + 0.1 * static_cast<double>(g)}));
    gap.push_back(static_cast<double>(g));
  }
  const double rho = munlab::testing::spearman(pred, gap);
  return {rho > 0.9, "Spearman rho " + fmt(rho) + " on 500 held-out pairs (need > 0.9)"};
}

// --- 4-6: point_maze comparison, shared runs ---

const std::string kMazeCfg = "point_maze_acceptance.cfg";

void train_maze() {
  for (std::uint64_t s : kSeeds) {
    for (Method m : {Method::mun, Method::gc_only}) train_to(config_for(kMazeCfg, m, s), ckpt_path("maze", m, s));
  }
}

Outcome bidirectional() {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t s : kSeeds) {
    const Trainer mun = stored_run("maze", kMazeCfg, Method::mun, s);
    const Trainer gc = stored_run("maze", kMazeCfg, Method::gc_only, s);
    const EnvSpec spec = env_spec(EnvId::point_maze);
    const double a = directional_coverage(mun.buffer(), spec.coverage_cell, spec.coverage_dims).bidirectional_fraction;
    const double b = directional_coverage(gc.buffer(), spec.coverage_cell, spec.coverage_dims).bidirectional_fraction;
    wins += a > b ? 1 : 0;
    detail += " s" + std::to_string(s) + " " + fmt(a) + "/" + fmt(b);
  }
  return {wins >= 4, "mun > gc_only in " + std::to_string(wins) + "/5 seeds (mun/gc_only:" + detail + ")"};
}

// The probe for each seed is pooled from both runs' buffers. The reversed set
// keeps only tuples whose negated action really undoes the move.
Outcome model_generalization() {
  std::size_t wins = 0, within = 0, not_worse = 0;
  std::string detail;
  for (std::uint64_t s : kSeeds) {
    const Trainer mun = stored_run("maze", kMazeCfg, Method::mun, s);
    const Trainer gc = stored_run("maze", kMazeCfg, Method::gc_only, s);
    Rng rng = Rng::derive(s, 4242);
    const auto probe = pooled_probe({&mun.buffer(), &gc.buffer()}, 1000, rng);
    std::vector<Episode> trajs;
    for (const Trainer* t : {&mun, &gc}) trajs.push_back(t->buffer().d_egc().back());
    const auto rep = model_error_report(EnvId::point_maze, {{"mun", &mun.model()}, {"gc_only", &gc.model()}}, probe, trajs);
    const ModelErrorRow& a = rep.rows[0];
    const ModelErrorRow& b = rep.rows[1];
    wins += a.reversed_one_step < b.reversed_one_step ? 1 : 0;
    within += std::max(a.one_step, b.one_step) <= 2.0 * std::min(a.one_step, b.one_step) ? 1 : 0;
    not_worse += a.one_step <= 2.0 * b.one_step ? 1 : 0;
    detail += " s" + std::to_string(s) + " rev " + fmt(a.reversed_one_step) + "/" + fmt(b.reversed_one_step) + " (" +
              std::to_string(rep.reversed_tuples) + " tuples) fwd " + fmt(a.one_step) + "/" + fmt(b.one_step);
  }
  return {wins >= 4 && within == 5,
          "reversed error lower for mun in " + std::to_string(wins) + "/5 seeds; forward errors within 2x of each other in " +
              std::to_string(within) + "/5 seeds (mun forward <= 2x gc_only in " + std::to_string(not_worse) +
              "/5) (mun/gc_only:" + detail + ")"};
}

Outcome navigation() {
  const auto wps = parse_waypoints(read_file((kConfigDir / "point_maze_waypoints.txt").string()));
  std::size_t wins = 0;
  bool diag = true;
  std::string detail;
  for (std::uint64_t s : kSeeds) {
    double off[2];
    int k = 0;
    for (Method m : {Method::mun, Method::gc_only}) {
      const Trainer t = stored_run("maze", kMazeCfg, m, s);
      Rng rng = Rng::derive(s, 777);
      const NavigationMatrix nm = navigation_matrix(t.greedy_controller(), EnvId::point_maze, wps, 10, rng);
      for (std::size_t i = 0; i < wps.size(); ++i) diag = diag && nm.cells[i][i] == 1.0;
      off[k++] = nm.off_diagonal_mean;
    }
    wins += off[0] > off[1] ? 1 : 0;
    detail += " s" + std::to_string(s) + " " + fmt(off[0]) + "/" + fmt(off[1]);
  }
  return {wins >= 4 && diag, "off-diagonal success higher for mun in " + std::to_string(wins) + "/5 seeds, diagonal 1.0: " +
                                 (diag ? "yes" : "no") + " (mun/gc_only:" + detail + ")"};
}

// --- 7: line_walker end to end ---

Outcome end_to_end() {
  ExperimentConfig cfg = config_for("line_walker_acceptance.cfg", Method::mun, 1);
  Trainer t(cfg);
  std::size_t reached_at = 0;
  while (!t.finished()) {
    t.iterate();
    if (!t.metrics().empty() && t.metrics().back().eval_success_rate >= 0.8 && t.metrics().back().env_step <= 100000) {
      reached_at = t.metrics().back().env_step;
      break;
    }
  }
  double best = 0.0;
  for (const auto& m : t.metrics()) best = std::max(best, m.eval_success_rate);
  if (reached_at) return {true, "success rate >= 0.8 at " + std::to_string(reached_at) + " env steps"};
  return {false, "best success rate " + fmt(best) + " within " + std::to_string(t.env_steps()) + " env steps"};
}

// --- 8: block_world ablation ordering ---

const std::string kBlockCfg = "block_world_acceptance.cfg";

void train_blocks() {
  for (std::uint64_t s : kSeeds) {
    for (Method m : {Method::mun, Method::mun_nodad, Method::mun_ns3}) {
      train_to(config_for(kBlockCfg, m, s), ckpt_path("blocks", m, s));
    }
  }
}

Outcome ablation() {
  std::size_t nodad = 0, ns3 = 0;
  double best = 0.0;
  std::string detail;
  for (std::uint64_t s : kSeeds) {
    double r[3];
    int k = 0;
    for (Method m : {Method::mun, Method::mun_nodad, Method::mun_ns3}) {
      r[k++] = stored_run("blocks", kBlockCfg, m, s).metrics().back().eval_success_rate;
    }
    best = std::max({best, r[0], r[1], r[2]});
    nodad += r[0] >= r[1] ? 1 : 0;
    ns3 += r[0] >= r[2] ? 1 : 0;
    detail += " s" + std::to_string(s) + " " + fmt(r[0]) + "/" + fmt(r[1]) + "/" + fmt(r[2]);
  }
  return {nodad >= 3 && ns3 >= 3, "mun >= mun_nodad in " + std::to_string(nodad) + "/5, mun >= mun_ns3 in " +
                                      std::to_string(ns3) + "/5 (mun/nodad/ns3 final success:" + detail + ")" +
                                      (best == 0.0 ? "; every run at 0 success, so the ordering is uninformative" : "")};
}

// --- 9: determinism and checkpoint continuation ---

Outcome determinism() {
  ExperimentConfig cfg = config_for("line_walker_acceptance.cfg", Method::mun, 9);
  cfg.env_step_budget = 0;
  cfg.N_train = 40;
  cfg.eval_every = 5;
  const fs::path a = run_dir() / "det_a", b = run_dir() / "det_b";
  run_training(cfg, a.string());
  run_training(cfg, b.string());
  const bool same_csv = read_file((a / "metrics.csv").string()) == read_file((b / "metrics.csv").string());

  Trainer first(cfg);
  for (int k = 0; k < 17; ++k) first.iterate();
  write_file((run_dir() / "det_mid.ckpt").string(), first.save());
  Trainer resumed = load_checkpoint((run_dir() / "det_mid.ckpt").string());
  resumed.run();
  const bool same_ckpt = resumed.save() == read_file((a / "final.ckpt").string());
  const bool same_resumed_csv = metrics_csv(resumed.metrics()) == read_file((a / "metrics.csv").string());
  return {same_csv && same_ckpt && same_resumed_csv,
          std::string("repeat run metrics.csv identical: ") + (same_csv ? "yes" : "no") +
              ", resumed-at-17 checkpoint identical: " + (same_ckpt ? "yes" : "no") +
              ", resumed metrics identical: " + (same_resumed_csv ? "yes" : "no")};
}

// --- 10: compound error against an open-loop oracle ---

Outcome compound() {
  double worst = 0.0, worst_h1 = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(500 + trial);
    const std::size_t sd = 1 + rng.index(4), ad = 1 + rng.index(3), h = 1 + rng.index(20);
    DynamicsEnsemble m = make_dynamics(sd, ad, 1 + rng.index(4), {6}, rng);
    for (auto& p : m.members) randomize_normal(p, 0.3, rng);
    Episode ep;
    std::vector<double> s(sd);
    for (double& v : s) v = rng.normal();
    for (std::size_t i = 0; i < h; ++i) {
      Transition t;
      t.s = s;
      t.a.resize(ad);
      for (double& v : t.a) v = rng.uniform(-1, 1);
      t.s_next = s;
      for (double& v : t.s_next) v += 0.1 * rng.normal();
      s = t.s_next;
      ep.transitions.push_back(std::move(t));
    }
    update_normalizer(m.norm, ep.transitions);

    // Open loop: average member outputs (delta in normalized units) by hand.
    std::vector<double> cur = ep.transitions.front().s;
    double oracle = 0.0;
    for (const auto& t : ep.transitions) {
      std::vector<double> in;
      for (std::size_t k = 0; k < sd; ++k) in.push_back((cur[k] - m.norm.state.mean[k]) / m.norm.state.stddev(k));
      for (std::size_t k = 0; k < ad; ++k) in.push_back((t.a[k] - m.norm.action.mean[k]) / m.norm.action.stddev(k));
      std::vector<double> next(sd, 0.0);
      for (const auto& member : m.members) {
        const auto out = mlp_eval(member, in);
        for (std::size_t k = 0; k < sd; ++k) {
          next[k] += (cur[k] + (out[k] * m.norm.delta.stddev(k) + m.norm.delta.mean[k])) / static_cast<double>(m.size());
        }
      }
      cur = next;
      for (std::size_t k = 0; k < sd; ++k) oracle += (cur[k] - t.s_next[k]) * (cur[k] - t.s_next[k]);
    }
    oracle /= static_cast<double>(h);
    worst = std::max(worst, std::abs(compound_error(m, ep) - oracle));

    Episode one;
    one.transitions = {ep.transitions.front()};
    worst_h1 = std::max(worst_h1, std::abs(compound_error(m, one) - one_step_error(m, one.transitions)));
  }
  return {worst <= 1e-12 && worst_h1 == 0.0,
          "max |compound - oracle| " + fmt(worst) + " over 100 pairs, h=1 vs one-step max diff " + fmt(worst_h1)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1", {"gradient checks", gradients}},
      {"2", {"fps matches brute-force reference", fps_oracle}},
      {"3", {"temporal distance ranks step gaps", temporal_distance}},
      {"4", {"point_maze bidirectional coverage mun > gc_only", bidirectional}},
      {"5", {"point_maze reversed-direction model error mun < gc_only", model_generalization}},
      {"6", {"point_maze navigation matrix mun > gc_only", navigation}},
      {"7", {"line_walker success >= 0.8 within 100k steps", end_to_end}},
      {"8", {"block_world ablation ordering", ablation}},
      {"9", {"determinism and checkpoint continuation", determinism}},
      {"10", {"compound error matches open-loop oracle", compound}},
  };
  std::vector<std::string> ids(argv + 1, argv + argc);
  if (ids.empty() || (ids.size() == 1 && ids[0] == "all")) {
    ids = {"1", "2", "3", "9", "10", "7", "train-maze", "4", "5", "6", "train-blocks", "8"};
  }
  int failures = 0;
  for (const auto& id : ids) {
    try {
      if (id == "train-maze") {
        train_maze();
        continue;
      }
      if (id == "train-blocks") {
        train_blocks();
        continue;
      }
      const auto it = criteria.find(id);
      if (it == criteria.end()) {
        std::cerr << "unknown criterion '" << id << "'\n";
        return 2;
      }
      const auto t0 = std::chrono::steady_clock::now();
      const Outcome o = it->second.second();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "criterion " << id << " (" << it->second.first << "): " << (o.pass ? "PASS" : "FAIL") << " - "
                << o.detail << " [" << fmt(secs) << " s]" << std::endl;
      failures += o.pass ? 0 : 1;
    } catch (const std::exception& e) {
      std::cout << "criterion " << id << ": FAIL - " << e.what() << std::endl;
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}
