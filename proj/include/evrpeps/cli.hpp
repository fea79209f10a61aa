#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evrpeps/checkpoint.hpp"
#include "evrpeps/instance_io.hpp"
#include "evrpeps/runner.hpp"

namespace evrpeps::cli {

namespace fs = std::filesystem;

struct GenFlags {
  GenConfig cfg;

  void attach(CLI::App* cmd) {
    cmd->add_option("--n-bs", cfg.n_bs, "number of base stations");
    cmd->add_option("--n-cs", cfg.n_cs, "number of charge stations");
    cmd->add_option("--n-ev", cfg.n_ev, "number of EVs");
    cmd->add_option("--horizon", cfg.horizon_h, "time horizon in hours");
    cmd->add_option("--side", cfg.side_km, "square side length in km");
    cmd->add_option("--cs-rates", cfg.cs_rate_choices_kwh_per_h,
                    "charge-station rate choices (kWh/h)");
    cmd->add_option("--bs-tiers", cfg.bs_capacity_tiers_kwh,
                    "base-station capacity tiers (kWh)");
    cmd->add_option("--backup-hours", cfg.bs_backup_hours,
                    "station backup duration defining consumption = capacity / hours");
  }
};

inline std::vector<std::string> list_instance_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .json instances found in " + dir);
  return files;
}

inline PolicyParams require_checkpoint(const std::string& path) {
  if (path.empty())
    throw ValidationError("this solver requires --checkpoint");
  if (!fs::exists(path))
    throw ValidationError("checkpoint file does not exist: " + path);
  return load_checkpoint(path);
}

inline void write_single_metrics_csv(const std::string& id, const Metrics& m,
                                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "instance_id,dist_km,down,obj,time_s\n";
  out << id << ',' << csv_num(m.dist_km) << ',' << csv_num(m.down) << ',' << csv_num(m.obj) << ','
      << csv_num(m.wall_time_s) << '\n';
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"EVRP-EPS: emergency power supply routing — simulator, solvers, trainer"};
  app.require_subcommand(1);

  // ---- generate -----------------------------------------------------------
  auto* generate = app.add_subcommand("generate", "write synthetic instance files");
  GenFlags gen_gen;
  std::string gen_out;
  int gen_count = 1;
  std::uint64_t gen_seed = 1234;
  generate->add_option("--out", gen_out, "output directory")->required();
  generate->add_option("--count", gen_count, "number of instances");
  generate->add_option("--seed", gen_seed, "master seed");
  gen_gen.attach(generate);

  // ---- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train the policy with REINFORCE");
  GenFlags train_gen;
  TrainConfig tc;
  std::string train_out, optimizer_name = "sgd";
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--seed", tc.seed, "master seed");
  train_cmd->add_option("--epochs", tc.epochs, "training epochs");
  train_cmd->add_option("--batch", tc.batch_size, "mini-batch size");
  train_cmd->add_option("--instances-per-epoch", tc.instances_per_epoch,
                        "fresh instances generated per epoch");
  train_cmd->add_option("--lr", tc.learning_rate, "constant learning rate");
  train_cmd->add_option("--val-size", tc.validation_size, "validation instances");
  train_cmd->add_option("--significance", tc.significance,
                        "one-sided paired t-test level for baseline swaps");
  train_cmd->add_option("--optimizer", optimizer_name, "sgd | adam");
  train_cmd->add_option("--hidden", tc.policy.hidden, "encoder width H");
  train_cmd->add_option("--layers", tc.policy.layers, "encoder layers L");
  train_cmd->add_option("--heads", tc.policy.heads, "attention heads M");
  train_cmd->add_option("--threads", tc.threads, "worker threads");
  train_gen.attach(train_cmd);

  // ---- solve ---------------------------------------------------------------
  auto* solve = app.add_subcommand("solve", "solve one instance with one solver");
  std::string solve_instance, solve_solver, solve_ckpt, solve_out;
  std::uint64_t solve_seed = 1234;
  double solve_time_limit = std::numeric_limits<double>::infinity();
  bool solve_speed_floor = false;
  solve->add_option("--instance", solve_instance, "instance JSON file")->required();
  solve->add_option("--solver", solve_solver,
                    "greed | rand:S | policy:greedy | policy:sample:S")->required();
  solve->add_option("--checkpoint", solve_ckpt, "policy checkpoint file");
  solve->add_option("--out", solve_out, "output directory")->required();
  solve->add_option("--seed", solve_seed, "sampling seed");
  solve->add_option("--time-limit", solve_time_limit, "seconds before returning best-so-far");
  solve->add_flag("--discharge-floor-speed-form", solve_speed_floor,
                  "use the speed-scaled discharge floor instead of the drive-energy form");

  // ---- evaluate --------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "run a solver over an instance suite");
  GenFlags eval_gen;
  std::string eval_solver, eval_ckpt, eval_out, eval_instances;
  int eval_count = 100, eval_threads = default_thread_count();
  std::uint64_t eval_seed = 1234;
  double eval_time_limit = std::numeric_limits<double>::infinity();
  evaluate->add_option("--solver", eval_solver, "solver spec")->required();
  evaluate->add_option("--checkpoint", eval_ckpt, "policy checkpoint file");
  evaluate->add_option("--out", eval_out, "output directory")->required();
  evaluate->add_option("--instances", eval_instances, "directory of instance JSON files");
  evaluate->add_option("--count", eval_count, "instances to generate when no directory given");
  evaluate->add_option("--seed", eval_seed, "master seed");
  evaluate->add_option("--threads", eval_threads, "worker threads");
  evaluate->add_option("--time-limit", eval_time_limit, "per-instance sampling time limit");
  eval_gen.attach(evaluate);

  // ---- scale ----------------------------------------------------------------
  auto* scale = app.add_subcommand("scale", "runtime and objective across one scaling axis");
  GenFlags scale_gen;
  std::string scale_axis, scale_solver, scale_ckpt, scale_out;
  std::vector<double> scale_values;
  int scale_count = 20;
  std::uint64_t scale_seed = 0;
  scale->add_option("--axis", scale_axis, "horizon | n_bs | n_ev")->required();
  scale->add_option("--values", scale_values, "axis values")->required()->expected(-1);
  scale->add_option("--solver", scale_solver, "solver spec")->required();
  scale->add_option("--checkpoint", scale_ckpt, "policy checkpoint file");
  scale->add_option("--out", scale_out, "output directory")->required();
  scale->add_option("--count", scale_count, "instances per axis value");
  scale->add_option("--seed", scale_seed, "master seed");
  scale_gen.attach(scale);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*generate) {
      fs::create_directories(gen_out);
      for (int i = 0; i < gen_count; ++i) {
        const Instance inst = generate_instance(gen_gen.cfg, Rng::derive_seed(gen_seed, i));
        char name[32];
        std::snprintf(name, sizeof(name), "instance_%04d.json", i);
        save_instance(inst, (fs::path(gen_out) / name).string());
      }
      std::cout << "wrote " << gen_count << " instances to " << gen_out << "\n";
    } else if (*train_cmd) {
      if (optimizer_name == "sgd") tc.optimizer = OptimizerKind::Sgd;
      else if (optimizer_name == "adam") tc.optimizer = OptimizerKind::Adam;
      else throw ValidationError("unknown optimizer '" + optimizer_name + "'");
      tc.gen = train_gen.cfg;
      fs::create_directories(train_out);
      const TrainResult result = train(tc, [](const EpochStats& row) {
        std::cout << "epoch " << row.epoch << ": train_cost=" << row.train_cost_mean
                  << " val_cost=" << row.val_cost_greedy
                  << (row.baseline_swapped ? " [baseline swapped]" : "")
                  << " p=" << row.p_value << std::endl;
      });
      write_learning_curve_csv(result.curve, (fs::path(train_out) / "learning_curve.csv").string());
      save_checkpoint(result.best_policy, (fs::path(train_out) / "policy_best.ckpt").string());
      save_checkpoint(result.final_policy, (fs::path(train_out) / "policy_final.ckpt").string());
      std::cout << "best validation cost " << result.best_val_cost << " at epoch "
                << result.best_epoch << "\n";
    } else if (*solve) {
      const SolverSpec spec = SolverSpec::parse(solve_solver);
      std::optional<PolicyParams> policy;
      if (spec.needs_policy()) policy = require_checkpoint(solve_ckpt);
      const Instance inst = load_instance(solve_instance);
      SimOptions options;
      options.speed_scaled_discharge_floor = solve_speed_floor;
      Rng rng(solve_seed);
      const SolveOutcome outcome =
          solve_with(spec, policy ? &*policy : nullptr, inst, rng, solve_time_limit, options);
      fs::create_directories(solve_out);
      const std::string id = fs::path(solve_instance).stem().string();
      write_route_log(outcome.log, (fs::path(solve_out) / "route_log.json").string());
      write_single_metrics_csv(id, outcome.metrics,
                               (fs::path(solve_out) / "metrics.csv").string());
      SimOptions replay_options = options;
      replay_options.record_trajectories = true;
      Simulation replayed = replay_simulation(inst, outcome.log, replay_options);
      std::vector<std::vector<std::pair<double, double>>> bs_series, ev_series;
      for (int i = 0; i < inst.n_bs(); ++i) bs_series.push_back(replayed.bs_series(i));
      for (int k = 0; k < inst.n_evs(); ++k) ev_series.push_back(replayed.ev_series(k));
      write_battery_series_csv(bs_series, "bs", (fs::path(solve_out) / "bs_batteries.csv").string());
      write_battery_series_csv(ev_series, "ev", (fs::path(solve_out) / "ev_batteries.csv").string());
      write_downed_series_csv(outcome.log, (fs::path(solve_out) / "downed.csv").string());
      std::cout << "obj=" << outcome.metrics.obj << " dist_km=" << outcome.metrics.dist_km
                << " down=" << outcome.metrics.down << " time_s=" << outcome.metrics.wall_time_s
                << "\n";
    } else if (*evaluate) {
      const SolverSpec spec = SolverSpec::parse(eval_solver);
      std::optional<PolicyParams> policy;
      if (spec.needs_policy()) policy = require_checkpoint(eval_ckpt);
      std::vector<Instance> instances;
      std::vector<std::string> ids;
      if (!eval_instances.empty()) {
        for (const auto& file : list_instance_files(eval_instances)) {
          instances.push_back(load_instance(file));
          ids.push_back(fs::path(file).stem().string());
        }
      } else {
        for (int i = 0; i < eval_count; ++i) {
          instances.push_back(generate_instance(eval_gen.cfg, Rng::derive_seed(eval_seed, i)));
          char name[32];
          std::snprintf(name, sizeof(name), "gen_%04d", i);
          ids.push_back(name);
        }
      }
      const SuiteResult suite = evaluate_suite(spec, policy ? &*policy : nullptr, instances, ids,
                                               Rng::derive_seed(eval_seed, 777), eval_threads,
                                               eval_time_limit);
      fs::create_directories(eval_out);
      write_suite_csv(suite, (fs::path(eval_out) / "metrics.csv").string());
      write_suite_summary_csv(suite, spec.to_string(),
                              (fs::path(eval_out) / "summary.csv").string());
      std::cout << spec.to_string() << ": mean obj=" << suite.mean.obj
                << " dist_km=" << suite.mean.dist_km << " down=" << suite.mean.down
                << " (wo_evs down=" << suite.wo_evs_down_mean << ")\n";
    } else if (*scale) {
      const ScalingAxis axis = parse_axis(scale_axis);
      const SolverSpec spec = SolverSpec::parse(scale_solver);
      std::optional<PolicyParams> policy;
      if (spec.needs_policy()) policy = require_checkpoint(scale_ckpt);
      const auto table = scaling_run(scale_gen.cfg, axis, scale_values, spec,
                                     policy ? &*policy : nullptr, scale_count, scale_seed);
      fs::create_directories(scale_out);
      write_scaling_csv(table, scale_axis, spec.to_string(),
                        (fs::path(scale_out) / "scaling.csv").string());
      for (const auto& row : table)
        std::cout << scale_axis << "=" << row.axis_value << ": obj=" << row.obj_mean
                  << " time_s=" << row.time_s_mean << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("evrpeps");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace evrpeps::cli
