#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "munlab/munlab.hpp"

using namespace munlab;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

std::vector<double> zero_action(std::span<const double>, std::span<const double>) { return {0.0}; }

// PD controller that settles line_walker on any goal inside the track.
std::vector<double> line_pd(std::span<const double> s, std::span<const double> g) {
  return {std::clamp(2.0 * (g[0] - s[0]) - 4.0 * s[1], -1.0, 1.0)};
}

ExperimentConfig tiny(Method m, std::uint64_t seed = 3) {
  ExperimentConfig c;
  c.env_id = EnvId::line_walker;
  c.method = m;
  c.seed = seed;
  c.N_train = 10;
  c.eval_every = 5;
  c.eval_episodes = 2;
  c.probe_size = 32;
  c.N_subgoals = 4;
  c.plan_every = 3;
  c.plan_batch_episodes = 3;
  c.model_updates_per_episode = 2;
  c.agent_updates_per_episode = 2;
  c.ensemble_size = 2;
  c.model_hidden = {8};
  c.model_batch = 16;
  c.policy_hidden = {8};
  c.critic_hidden = {8};
  c.distance_hidden = {8};
  c.imag_horizon = 4;
  c.imag_batch = 4;
  c.goal_candidates = 6;
  c.potential_rollouts = 2;
  c.T_go = 30;
  c.T_explore = 20;
  c.N_s = 2;
  c.T_s = 40;
  return c;
}

DynamicsEnsemble zero_delta_model(std::size_t sd, std::size_t ad) {
  Rng rng(0);
  DynamicsEnsemble m = make_dynamics(sd, ad, 2, {4}, rng);
  for (auto& p : m.members) {
    p.weights.back().fill(0.0);
    std::fill(p.biases.back().begin(), p.biases.back().end(), 0.0);
  }
  return m;
}

double sq(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

// --- configuration ---

TEST(Config, DefaultsAreValid) { EXPECT_NO_THROW(ExperimentConfig{}.validate()); }

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(config_error("bogus_key = 1").find("bogus_key"), std::string::npos);
  EXPECT_NE(config_error("N_s = two").find("N_s"), std::string::npos);
  EXPECT_NE(config_error("gamma = 1.5").find("gamma"), std::string::npos);
  EXPECT_NE(config_error("model_hidden = 64,0").find("model_hidden"), std::string::npos);
  EXPECT_NE(config_error("env = hopper").find("env"), std::string::npos);
  EXPECT_NE(config_error("method = dreamer").find("method"), std::string::npos);
  EXPECT_NE(config_error("seed = 1\nseed = 2").find("seed"), std::string::npos);
  EXPECT_NE(config_error("actor_lr = 0").find("actor_lr"), std::string::npos);
  EXPECT_FALSE(config_error("just words").empty());
}

TEST(Config, SubgoalBudgetMustFitHorizon) {
  EXPECT_NE(config_error("N_s = 3\nT_s = 60").find("T_s"), std::string::npos);
  EXPECT_NO_THROW(parse_config("N_s = 3\nT_s = 50"));
  EXPECT_NE(config_error("N_s = 3\nN_subgoals = 2\nT_s = 10").find("N_subgoals"), std::string::npos);
}

TEST(Config, MunNs3Defaults) {
  const auto c = parse_config("method = mun_ns3");
  EXPECT_EQ(c.N_s, 3u);
  EXPECT_EQ(c.T_s, kHorizon / 3);
  const auto explicit_ts = parse_config("method = mun_ns3\nT_s = 20");
  EXPECT_EQ(explicit_ts.T_s, 20u);
}

TEST(Config, CommentsAndWhitespace) {
  const auto c = parse_config("# header\n  env = line_walker  # trailing\n\nseed=9\n");
  EXPECT_EQ(c.env_id, EnvId::line_walker);
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, TextRoundTrip) {
  ExperimentConfig c = tiny(Method::peg_g, 17);
  c.gamma = 0.123456789012345;
  c.distance_negative_fraction = 0.25;
  const auto back = parse_config(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.gamma, c.gamma);
}

TEST(Config, ExplorerNeedsTwoMembers) {
  EXPECT_NE(config_error("method = mega_g\nensemble_size = 1").find("ensemble_size"), std::string::npos);
  EXPECT_NO_THROW(parse_config("method = mun\nensemble_size = 1"));
}

// --- episodes ---

TEST(MunEpisode, SubgoalAtStartTakesNoSteps) {
  Rng rng(1);
  const Episode ep = run_mun_episode(EnvId::line_walker, zero_action, {{0.0, 0.0}}, 3, 40, rng);
  EXPECT_EQ(ep.size(), 0u);
  ASSERT_TRUE(ep.subgoal_trace);
  ASSERT_EQ(ep.subgoal_trace->size(), 3u);
  for (const auto& v : *ep.subgoal_trace) {
    EXPECT_TRUE(v.reached);
    EXPECT_EQ(v.steps_used, 0u);
  }
}

TEST(MunEpisode, UnreachableSubgoalsUseFullBudget) {
  for (std::size_t n_s : {1u, 2u, 3u}) {
    Rng rng(n_s);
    const std::size_t t_s = kHorizon / n_s;
    const Episode ep = run_mun_episode(EnvId::line_walker, zero_action, {{7.0, 0.0}, {-7.0, 0.0}}, n_s, t_s, rng);
    EXPECT_EQ(ep.size(), n_s * t_s);
    ASSERT_EQ(ep.subgoal_trace->size(), n_s);
    for (const auto& v : *ep.subgoal_trace) {
      EXPECT_FALSE(v.reached);
      EXPECT_EQ(v.steps_used, t_s);
    }
    EXPECT_EQ(ep.provenance, Provenance::dad_directed);
    EXPECT_TRUE(ep.transitions.back().done);
    EXPECT_NO_THROW(validate_episode(ep));
  }
}

TEST(MunEpisode, ReachedSubgoalsAreRecorded) {
  Rng rng(2);
  const Episode ep = run_mun_episode(EnvId::line_walker, line_pd, {{2.0, 0.0}}, 2, 60, rng);
  ASSERT_EQ(ep.subgoal_trace->size(), 2u);
  EXPECT_TRUE((*ep.subgoal_trace)[0].reached);
  EXPECT_GT((*ep.subgoal_trace)[0].steps_used, 0u);
  // Second visit starts where the first ended, already inside the threshold.
  EXPECT_TRUE((*ep.subgoal_trace)[1].reached);
  EXPECT_EQ((*ep.subgoal_trace)[1].steps_used, 0u);
  EXPECT_EQ(ep.size(), (*ep.subgoal_trace)[0].steps_used);
  for (const auto& t : ep.transitions) EXPECT_EQ(t.goal, (std::vector<double>{2.0, 0.0}));
}

TEST(MunEpisode, EmptySubgoalSetThrows) {
  Rng rng(0);
  EXPECT_THROW(run_mun_episode(EnvId::line_walker, zero_action, {}, 2, 10, rng), EmptySourceError);
}

TEST(EnvGoalEpisode, StopsOnSuccessOrHorizon) {
  Rng rng(4);
  const Episode lazy = run_env_goal_episode(EnvId::line_walker, zero_action, rng);
  EXPECT_EQ(lazy.size(), kHorizon);
  EXPECT_EQ(lazy.provenance, Provenance::env_goal);
  EXPECT_FALSE(lazy.subgoal_trace);
  const Episode driven = run_env_goal_episode(EnvId::line_walker, line_pd, rng);
  EXPECT_LT(driven.size(), kHorizon);
  EXPECT_EQ(driven.transitions.back().reward, 1);
  EXPECT_TRUE(driven.transitions.back().done);
}

TEST(GoExploreEpisode, GoThenExplore) {
  Rng rng(5);
  const Episode ep = run_go_explore_episode(EnvId::line_walker, zero_action, zero_action, {7.0, 0.0}, 30, 20, rng);
  EXPECT_EQ(ep.size(), 50u);
  ASSERT_EQ(ep.subgoal_trace->size(), 1u);
  EXPECT_FALSE(ep.subgoal_trace->front().reached);
  EXPECT_EQ(ep.subgoal_trace->front().steps_used, 30u);
}

// --- evaluation ---

TEST(Evaluation, ScriptedControllerSucceeds) {
  Rng rng(6);
  EXPECT_DOUBLE_EQ(evaluate_success(line_pd, EnvId::line_walker, 30, rng), 1.0);
}

TEST(Evaluation, ZeroControllerFails) {
  Rng rng(7);
  EXPECT_DOUBLE_EQ(evaluate_success(zero_action, EnvId::line_walker, 30, rng), 0.0);
  EXPECT_THROW(evaluate_success(zero_action, EnvId::line_walker, 0, rng), ContractViolation);
}

TEST(NavigationMatrix, DiagonalAndShape) {
  const std::vector<std::vector<double>> wps = {{-4, 0}, {-2, 0}, {0, 0}, {2, 0}, {4, 0}};
  Rng rng(8);
  const auto lazy = navigation_matrix(zero_action, EnvId::line_walker, wps, 3, rng);
  ASSERT_EQ(lazy.cells.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    ASSERT_EQ(lazy.cells[i].size(), 5u);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(lazy.cells[i][j], i == j ? 1.0 : 0.0);
  }
  EXPECT_DOUBLE_EQ(lazy.off_diagonal_mean, 0.0);
  EXPECT_DOUBLE_EQ(lazy.mean, 5.0 / 25.0);

  const auto good = navigation_matrix(line_pd, EnvId::line_walker, wps, 3, rng);
  EXPECT_DOUBLE_EQ(good.off_diagonal_mean, 1.0);
  EXPECT_DOUBLE_EQ(good.mean, 1.0);
}

TEST(NavigationMatrix, RejectsIllegalWaypoints) {
  Rng rng(0);
  EXPECT_THROW(navigation_matrix(zero_action, EnvId::point_maze, {{0.5, 0.5}, {1.5, 3.5}}, 1, rng), ConfigError);
  EXPECT_THROW(navigation_matrix(zero_action, EnvId::line_walker, {{0.0, 0.0}}, 1, rng), ContractViolation);
}

TEST(ModelError, ReversalNegatesActionOnlyWhereReversible) {
  const Transition t{{1.0, 2.0}, {0.5, -0.25}, {1.25, 2.0}, {0, 0}, 0, false};
  const Transition maze = reverse_transition(EnvId::point_maze, t);
  EXPECT_EQ(maze.s, t.s_next);
  EXPECT_EQ(maze.s_next, t.s);
  EXPECT_EQ(maze.a, (std::vector<double>{-0.5, 0.25}));
  const Transition line{{1.0, 0.5}, {0.3}, {1.2, 0.4}, {0, 0}, 0, false};
  EXPECT_EQ(reverse_transition(EnvId::line_walker, line).a, line.a);
}

TEST(ModelError, NegationUndoesOnlyUnclippedMoves) {
  using V = std::vector<double>;
  EXPECT_TRUE(undone_by_negation(EnvId::point_maze, V{1.0, 1.0}, V{0.5, -0.4}, V{1.25, 0.8}));
  EXPECT_TRUE(undone_by_negation(EnvId::point_maze, V{1.0, 1.0}, V{0.5, -0.4}, V{1.259, 0.795}));
  // Pushed into the wall row from below: the move was clipped.
  EXPECT_FALSE(undone_by_negation(EnvId::point_maze, V{2.5, 2.9}, V{0.0, 1.0}, V{2.5, std::nextafter(3.0, 0.0)}));
  // Free forward (x then y), but undoing x first from (5.1, 3.1) hits the wall cell (4, 3).
  EXPECT_FALSE(undone_by_negation(EnvId::point_maze, V{4.8, 2.8}, V{0.6, 0.6}, V{5.1, 3.1}));
  EXPECT_FALSE(undone_by_negation(EnvId::line_walker, V{0.0, 0.0}, V{1.0}, V{0.1, 0.2}));
}

TEST(ModelError, ZeroDeltaModelOracle) {
  const auto model = zero_delta_model(2, 2);
  std::vector<Transition> probe;
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    const double x = rng.uniform(1.0, 7.0), y = rng.uniform(0.6, 2.4);
    const double ax = rng.uniform(-1, 1), ay = rng.uniform(-1, 1);
    probe.push_back({{x, y}, {ax, ay}, {x + 0.5 * ax + rng.uniform(-0.01, 0.01), y + 0.5 * ay}, {0, 0}, 0, false});
  }
  // Clipped against the wall row: kept forward, dropped from the reversed set.
  for (int k = 0; k < 5; ++k) {
    const double x = 0.5 + k;
    probe.push_back({{x, 2.8}, {0.0, 1.0}, {x, std::nextafter(3.0, 0.0)}, {0, 0}, 0, false});
  }
  double expected = 0.0, expected_rev = 0.0;
  for (const auto& t : probe) expected += sq(t.s, t.s_next);
  for (std::size_t k = 0; k < 20; ++k) expected_rev += sq(probe[k].s, probe[k].s_next);
  expected /= static_cast<double>(probe.size());
  expected_rev /= 20.0;

  Episode traj;
  traj.transitions = {probe[0], probe[1]};
  traj.transitions[1].s = probe[0].s_next;
  const double compound = (sq(probe[0].s, probe[0].s_next) + sq(probe[0].s, probe[1].s_next)) / 2.0;

  const auto rep = model_error_report(EnvId::point_maze, {{"a", &model}, {"b", &model}}, probe, {traj});
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_TRUE(rep.reversed_negates_action);
  EXPECT_EQ(rep.reversed_tuples, 20u);
  for (const auto& row : rep.rows) {
    EXPECT_NEAR(row.one_step, expected, 1e-12);
    EXPECT_NEAR(row.reversed_one_step, expected_rev, 1e-12);
    EXPECT_NEAR(row.compound, compound, 1e-12);
  }
  EXPECT_EQ(rep.rows[0].one_step, rep.rows[1].one_step);
  EXPECT_NE(rep.to_csv().find("negated_action,20"), std::string::npos);
}

TEST(ModelError, AllClippedLeavesReversedUndefined) {
  const auto model = zero_delta_model(2, 2);
  const std::vector<Transition> probe = {{{2.5, 2.8}, {0.0, 1.0}, {2.5, std::nextafter(3.0, 0.0)}, {0, 0}, 0, false}};
  const auto rep = model_error_report(EnvId::point_maze, {{"m", &model}}, probe, {});
  EXPECT_EQ(rep.reversed_tuples, 0u);
  EXPECT_TRUE(std::isnan(rep.rows[0].reversed_one_step));
  EXPECT_FALSE(std::isnan(rep.rows[0].one_step));
}

TEST(ModelError, SingleTupleAndEmptyProbe) {
  const auto model = zero_delta_model(2, 1);
  const std::vector<Transition> one = {{{0.0, 0.0}, {1.0}, {0.5, 1.0}, {0, 0}, 0, false}};
  const auto rep = model_error_report(EnvId::line_walker, {{"m", &model}}, one, {});
  EXPECT_NEAR(rep.rows[0].one_step, 1.25, 1e-12);
  EXPECT_TRUE(std::isnan(rep.rows[0].compound));
  EXPECT_FALSE(rep.reversed_negates_action);
  EXPECT_EQ(rep.reversed_tuples, 1u);
  EXPECT_NEAR(rep.rows[0].reversed_one_step, 1.25, 1e-12);
  EXPECT_THROW(model_error_report(EnvId::line_walker, {{"m", &model}}, {}, {}), EmptySourceError);
}

// --- metrics ---

TEST(Metrics, CsvRoundTripIsExact) {
  std::vector<MetricsRecord> rows = {{150, 0.25, 1e-7, 3.141592653589793, 0.5, 1.0 / 3.0}, {300, 1.0, 0, 0, 0, 0}};
  EXPECT_EQ(parse_metrics_csv(metrics_csv(rows)), rows);
  const auto j = metrics_json(rows);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["step"], 150);
  EXPECT_EQ(j[0]["subgoal_reach_rate"].get<double>(), 1.0 / 3.0);
}

TEST(Metrics, MalformedCsvIsFormatError) {
  EXPECT_THROW(parse_metrics_csv("step,x\n"), FormatError);
  EXPECT_THROW(parse_metrics_csv(std::string(kMetricsHeader) + "\n1,2,3\n"), FormatError);
  EXPECT_THROW(parse_metrics_csv(std::string(kMetricsHeader) + "\n1,a,0,0,0,0\n"), FormatError);
}

// --- training loop ---

TEST(Trainer, MunBookkeeping) {
  Trainer t(tiny(Method::mun));
  t.run();
  EXPECT_EQ(t.iteration(), 10u);
  EXPECT_EQ(t.buffer().d_dad().size(), 10u);
  EXPECT_EQ(t.buffer().d_egc().size(), 10u);
  std::size_t steps = 0;
  for (const auto* q : {&t.buffer().d_dad(), &t.buffer().d_egc()}) {
    for (const auto& e : *q) steps += e.size();
  }
  EXPECT_EQ(steps, t.env_steps());
  EXPECT_EQ(t.metrics().size(), 2u);
  EXPECT_EQ(t.metrics().back().env_step, t.env_steps());
  EXPECT_EQ(t.subgoals().goals.size(), 4u);
  EXPECT_EQ(t.subgoals().source_strategy, SubgoalStrategy::dad);
  for (const auto& e : t.buffer().d_dad()) {
    ASSERT_TRUE(e.subgoal_trace);
    EXPECT_EQ(e.subgoal_trace->size(), 2u);
    EXPECT_LE(e.size(), 2u * 40u);
  }
  EXPECT_THROW(t.iterate(), ContractViolation);
}

TEST(Trainer, NoDadUsesFixedInterval) {
  Trainer t(tiny(Method::mun_nodad));
  t.run();
  EXPECT_EQ(t.subgoals().source_strategy, SubgoalStrategy::fixed_interval);
  EXPECT_EQ(t.buffer().d_dad().size(), 10u);
}

TEST(Trainer, GcOnlyHasNoDirectedEpisodes) {
  Trainer t(tiny(Method::gc_only));
  t.run();
  EXPECT_TRUE(t.buffer().d_dad().empty());
  EXPECT_EQ(t.buffer().d_egc().size(), 10u);
  EXPECT_TRUE(t.goal_pool().empty());
  for (const auto& m : t.metrics()) EXPECT_EQ(m.subgoal_reach_rate, 0.0);
}

TEST(Trainer, GoExploreAlternates) {
  for (Method m : {Method::mega_g, Method::peg_g}) {
    Trainer t(tiny(m));
    t.run();
    EXPECT_EQ(t.buffer().d_dad().size(), 5u);
    EXPECT_EQ(t.buffer().d_egc().size(), 10u);
    EXPECT_EQ(t.goal_pool().size(), 4u);
    ASSERT_TRUE(t.explorer());
    for (const auto& e : t.buffer().d_dad()) EXPECT_LE(e.size(), 50u);
  }
}

TEST(Trainer, StepBudgetStopsTheLoop) {
  ExperimentConfig c = tiny(Method::gc_only);
  c.N_train = 0;
  c.env_step_budget = 400;
  Trainer t(c);
  t.run();
  EXPECT_GE(t.env_steps(), 400u);
  EXPECT_LT(t.env_steps(), 400u + 2 * kHorizon);
  EXPECT_FALSE(t.metrics().empty());
}

TEST(Trainer, SameSeedSameRun) {
  for (Method m : {Method::mun, Method::peg_g}) {
    Trainer a(tiny(m, 11)), b(tiny(m, 11));
    a.run();
    b.run();
    EXPECT_EQ(metrics_csv(a.metrics()), metrics_csv(b.metrics()));
    EXPECT_EQ(a.save(), b.save());
  }
  Trainer c(tiny(Method::mun, 12));
  c.run();
  Trainer a(tiny(Method::mun, 11));
  a.run();
  EXPECT_NE(a.save(), c.save());
}

TEST(Checkpoint, ResumeIsBitIdentical) {
  for (Method m : {Method::mun, Method::gc_only, Method::mega_g}) {
    Trainer whole(tiny(m, 21));
    whole.run();

    Trainer first(tiny(m, 21));
    for (int k = 0; k < 6; ++k) first.iterate();
    Trainer resumed = Trainer::load(first.save());
    EXPECT_EQ(resumed.save(), first.save());
    resumed.run();
    EXPECT_EQ(resumed.save(), whole.save()) << to_string(m);
    EXPECT_EQ(resumed.metrics(), whole.metrics());
  }
}

TEST(Checkpoint, CorruptionIsFormatError) {
  Trainer t(tiny(Method::mun));
  t.iterate();
  const std::string good = t.save();
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(Trainer::load(bad_magic), FormatError);
  EXPECT_THROW(Trainer::load(good.substr(0, good.size() / 2)), FormatError);
  EXPECT_THROW(Trainer::load(good + "extra"), FormatError);
  EXPECT_THROW(Trainer::load(""), FormatError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "munlab_orch_ckpt";
  std::filesystem::create_directories(dir);
  ExperimentConfig c = tiny(Method::mun_ns3);
  c.N_s = 3;
  c.T_s = 30;
  c.N_train = 5;
  const auto rows = run_training(c, dir.string());
  EXPECT_EQ(parse_metrics_csv(read_file((dir / "metrics.csv").string())), rows);
  const Trainer back = load_checkpoint((dir / "final.ckpt").string());
  EXPECT_EQ(back.iteration(), 5u);
  EXPECT_EQ(back.config().to_text(), c.to_text());
  EXPECT_EQ(back.metrics(), rows);
  std::filesystem::remove_all(dir);
}
