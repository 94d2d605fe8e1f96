#pragma once

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "munlab/munlab.hpp"

namespace munlab {

// Waypoint file: one goal vector per line, numbers separated by spaces or
// commas; '#' starts a comment.
inline std::vector<std::vector<double>> parse_waypoints(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw ConfigError("waypoints: malformed number '" + tok + "'");
      row.push_back(v);
    }
    if (!row.empty()) out.push_back(std::move(row));
  }
  return out;
}

inline nlohmann::json transition_json(const Transition& t) { return {{"s", t.s}, {"a", t.a}, {"s_next", t.s_next}}; }

inline Transition transition_from_json(const nlohmann::json& j) {
  Transition t;
  t.s = j.at("s").get<std::vector<double>>();
  t.a = j.at("a").get<std::vector<double>>();
  t.s_next = j.at("s_next").get<std::vector<double>>();
  return t;
}

struct ProbeSet {
  EnvId env = EnvId::point_maze;
  std::vector<Transition> transitions;
  std::vector<Episode> trajectories;
};

inline std::string probe_to_json(const ProbeSet& p) {
  nlohmann::json j;
  j["env"] = std::string(to_string(p.env));
  j["transitions"] = nlohmann::json::array();
  for (const auto& t : p.transitions) j["transitions"].push_back(transition_json(t));
  j["trajectories"] = nlohmann::json::array();
  for (const auto& e : p.trajectories) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& t : e.transitions) steps.push_back(transition_json(t));
    j["trajectories"].push_back(std::move(steps));
  }
  return j.dump() + "\n";
}

inline ProbeSet probe_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ProbeSet p;
    p.env = parse_env_id(j.at("env").get<std::string>());
    const EnvSpec spec = env_spec(p.env);
    auto checked = [&](const nlohmann::json& tj) {
      Transition t = transition_from_json(tj);
      if (t.s.size() != spec.state_dim || t.s_next.size() != spec.state_dim || t.a.size() != spec.action_dim) {
        throw FormatError("probe: tuple dimensions do not match the environment");
      }
      return t;
    };
    for (const auto& tj : j.at("transitions")) p.transitions.push_back(checked(tj));
    for (const auto& ej : j.at("trajectories")) {
      Episode e;
      for (const auto& tj : ej) e.transitions.push_back(checked(tj));
      p.trajectories.push_back(std::move(e));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("probe: ") + e.what());
  }
}

namespace cli_detail {

inline std::string method_label(const Trainer& t, const std::string& path) {
  return std::string(to_string(t.config().method)) + ":" + std::filesystem::path(path).stem().string();
}

}  // namespace cli_detail

// Exit codes: 0 success, 2 usage/configuration/format errors, 1 anything else.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"munlab: goal-conditioned model-based RL experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume_path;
  std::uint64_t seed = 0;
  auto* train = app.add_subcommand("train", "Train one configuration and write metrics and checkpoints");
  train->add_option("--config", config_path, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Seed (overrides the config)")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--resume", resume_path, "Continue from this checkpoint")->check(CLI::ExistingFile);

  std::string ckpt_path;
  std::size_t episodes = 0;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Success rate of a checkpoint's greedy policy on environment goals");
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Number of evaluation episodes")->required()->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "Evaluation seed");

  std::string waypoints_path;
  std::size_t reps = 10;
  auto* nav = app.add_subcommand("navmatrix", "Pairwise waypoint navigation success matrix");
  nav->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  nav->add_option("--waypoints", waypoints_path, "Waypoint file")->required()->check(CLI::ExistingFile);
  nav->add_option("--reps", reps, "Repetitions per pair")->check(CLI::PositiveNumber);
  nav->add_option("--seed", eval_seed, "Evaluation seed");

  std::vector<std::string> ckpts;
  std::string probe_path;
  auto* merr = app.add_subcommand("model-error", "One-step, reversed and compound model errors per checkpoint");
  merr->add_option("--checkpoints", ckpts, "Checkpoint files")->required()->check(CLI::ExistingFile);
  merr->add_option("--probe", probe_path, "Probe file (from make-probe)")->required()->check(CLI::ExistingFile);

  std::size_t probe_size = 1000, probe_traj = 10;
  std::string probe_out;
  auto* mprobe = app.add_subcommand("make-probe", "Pool a shared probe set from several checkpoints' buffers");
  mprobe->add_option("--checkpoints", ckpts, "Checkpoint files")->required()->check(CLI::ExistingFile);
  mprobe->add_option("--size", probe_size, "Number of tuples")->check(CLI::PositiveNumber);
  mprobe->add_option("--trajectories", probe_traj, "Environment-goal episodes per checkpoint for compound error");
  mprobe->add_option("--out", probe_out, "Output file")->required();
  mprobe->add_option("--seed", eval_seed, "Sampling seed");

  std::string run_dir;
  auto* exp = app.add_subcommand("export-metrics", "Print a run's metrics as JSON and write metrics.json");
  exp->add_option("--run", run_dir, "Run directory containing metrics.csv")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*train) {
      std::vector<MetricsRecord> rows;
      if (!resume_path.empty()) {
        std::filesystem::create_directories(out_dir);
        Trainer t = load_checkpoint(resume_path);
        const std::filesystem::path dir(out_dir);
        t.run((dir / "abort.ckpt").string());
        rows = t.metrics();
        write_file((dir / "metrics.csv").string(), metrics_csv(rows));
        write_file((dir / "metrics.json").string(), metrics_json(rows).dump(2) + "\n");
        write_file((dir / "final.ckpt").string(), t.save());
      } else {
        ExperimentConfig cfg = load_config(config_path);
        cfg.seed = seed;
        rows = run_training(cfg, out_dir);
      }
      out << "trained: " << rows.size() << " metric rows written to " << out_dir << "\n";
      if (!rows.empty()) out << "final success rate " << rows.back().eval_success_rate << "\n";
    } else if (*eval) {
      const Trainer t = load_checkpoint(ckpt_path);
      Rng rng = Rng::derive(eval_seed, rng_streams::eval_base - 1);
      const double rate = evaluate_success(t.greedy_controller(), t.config().env_id, episodes, rng);
      out << "success_rate " << rate << "\n";
    } else if (*nav) {
      const Trainer t = load_checkpoint(ckpt_path);
      const auto wps = parse_waypoints(read_file(waypoints_path));
      if (wps.size() < 2) throw ConfigError("waypoints: at least 2 waypoints required");
      Rng rng = Rng::derive(eval_seed, rng_streams::eval_base - 2);
      const NavigationMatrix m = navigation_matrix(t.greedy_controller(), t.config().env_id, wps, reps, rng);
      for (const auto& row : m.cells) {
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
        out << "\n";
      }
      out << "mean " << m.mean << "\noff_diagonal_mean " << m.off_diagonal_mean << "\n";
    } else if (*merr) {
      const ProbeSet probe = probe_from_json(read_file(probe_path));
      std::vector<Trainer> trainers;
      for (const auto& c : ckpts) trainers.push_back(load_checkpoint(c));
      std::vector<NamedModel> models;
      for (std::size_t k = 0; k < trainers.size(); ++k) {
        if (trainers[k].config().env_id != probe.env) throw ConfigError("model-error: checkpoint env differs from probe env");
        models.push_back({cli_detail::method_label(trainers[k], ckpts[k]), &trainers[k].model()});
      }
      out << model_error_report(probe.env, models, probe.transitions, probe.trajectories).to_csv();
    } else if (*mprobe) {
      std::vector<Trainer> trainers;
      for (const auto& c : ckpts) trainers.push_back(load_checkpoint(c));
      ProbeSet probe;
      probe.env = trainers.front().config().env_id;
      std::vector<const ReplayBuffer*> buffers;
      for (const auto& t : trainers) {
        if (t.config().env_id != probe.env) throw ConfigError("make-probe: checkpoints use different environments");
        buffers.push_back(&t.buffer());
      }
      Rng rng = Rng::derive(eval_seed, rng_streams::eval_base - 3);
      probe.transitions = pooled_probe(buffers, probe_size, rng);
      for (const auto& t : trainers) {
        const auto& egc = t.buffer().d_egc();
        for (std::size_t k = 0; k < probe_traj && k < egc.size(); ++k) probe.trajectories.push_back(egc[egc.size() - 1 - k]);
      }
      write_file(probe_out, probe_to_json(probe));
      out << "probe: " << probe.transitions.size() << " tuples, " << probe.trajectories.size() << " trajectories\n";
    } else if (*exp) {
      const std::filesystem::path dir(run_dir);
      const auto rows = parse_metrics_csv(read_file((dir / "metrics.csv").string()));
      const std::string json = metrics_json(rows).dump(2) + "\n";
      write_file((dir / "metrics.json").string(), json);
      out << json;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace munlab
