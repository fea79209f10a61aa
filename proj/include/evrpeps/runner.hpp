#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "evrpeps/export.hpp"
#include "evrpeps/generate.hpp"
#include "evrpeps/parallel.hpp"
#include "evrpeps/trainer.hpp"

namespace evrpeps {

struct SolverSpec {
  enum class Kind { Greed, Rand, PolicyGreedy, PolicySample };
  Kind kind = Kind::Greed;
  int samples = 1;

  bool needs_policy() const {
    return kind == Kind::PolicyGreedy || kind == Kind::PolicySample;
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::Greed: return "greed";
      case Kind::Rand: return "rand:" + std::to_string(samples);
      case Kind::PolicyGreedy: return "policy:greedy";
      case Kind::PolicySample: return "policy:sample:" + std::to_string(samples);
    }
    return "?";
  }

  /// Accepts: greed | rand:S | policy:greedy | policy:sample:S
  static SolverSpec parse(const std::string& text) {
    SolverSpec spec;
    auto starts_with = [&](const std::string& p) { return text.rfind(p, 0) == 0; };
    if (text == "greed") {
      spec.kind = Kind::Greed;
    } else if (starts_with("rand:")) {
      spec.kind = Kind::Rand;
      spec.samples = std::stoi(text.substr(5));
    } else if (text == "policy:greedy") {
      spec.kind = Kind::PolicyGreedy;
    } else if (starts_with("policy:sample:")) {
      spec.kind = Kind::PolicySample;
      spec.samples = std::stoi(text.substr(14));
    } else {
      throw ValidationError("unknown solver '" + text +
                            "' (expected greed | rand:S | policy:greedy | policy:sample:S)");
    }
    if (spec.samples < 1) throw ValidationError("solver sample count must be >= 1");
    return spec;
  }
};

struct SolveOutcome {
  RouteLog log;
  Metrics metrics;
  int samples_used = 1;
};

inline SolveOutcome greedy_decode(const PolicyParams& policy, const Instance& inst,
                                  SimOptions options = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  PolicyRollout roll = policy_rollout(policy, inst, DecodeMode::Greedy, nullptr, false, options);
  SolveOutcome out{std::move(roll.log), roll.metrics, 1};
  out.metrics.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Best of `samples` stochastic rollouts under a single rng stream; a shared
/// stream makes the best objective non-increasing in the sample count. The
/// optional time limit truncates after the current sample and keeps the
/// best-so-far.
template <typename RolloutFn>
SolveOutcome best_of_samples(int samples, double time_limit_s, RolloutFn&& one_rollout) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveOutcome best;
  best.metrics.obj = std::numeric_limits<double>::infinity();
  best.samples_used = 0;
  for (int s = 0; s < samples; ++s) {
    RolloutResult result = one_rollout();
    ++best.samples_used;
    if (result.metrics.obj < best.metrics.obj) {
      best.metrics = result.metrics;
      best.log = std::move(result.log);
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (elapsed > time_limit_s) break;
  }
  best.metrics.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

inline SolveOutcome sampling_decode(const PolicyParams& policy, const Instance& inst, int samples,
                                    Rng& rng,
                                    double time_limit_s = std::numeric_limits<double>::infinity(),
                                    SimOptions options = {}) {
  return best_of_samples(samples, time_limit_s, [&] {
    PolicyRollout roll = policy_rollout(policy, inst, DecodeMode::Sample, &rng, false, options);
    return RolloutResult{std::move(roll.log), roll.metrics, 0};
  });
}

inline SolveOutcome solve_with(const SolverSpec& spec, const PolicyParams* policy,
                               const Instance& inst, Rng& rng,
                               double time_limit_s = std::numeric_limits<double>::infinity(),
                               SimOptions options = {}) {
  if (spec.needs_policy() && policy == nullptr)
    throw ValidationError("solver '" + spec.to_string() + "' requires a checkpoint");
  switch (spec.kind) {
    case SolverSpec::Kind::Greed: {
      const auto t0 = std::chrono::steady_clock::now();
      RolloutResult result = run_rollout(
          inst, [](const Simulation& sim, int k) { return greedy_node_selector(sim, k); },
          options);
      SolveOutcome out{std::move(result.log), result.metrics, 1};
      out.metrics.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return out;
    }
    case SolverSpec::Kind::Rand:
      return best_of_samples(spec.samples, time_limit_s, [&] {
        return run_rollout(
            inst, [&](const Simulation& sim, int k) { return random_node_selector(sim, k, rng); },
            options);
      });
    case SolverSpec::Kind::PolicyGreedy:
      return greedy_decode(*policy, inst, options);
    case SolverSpec::Kind::PolicySample:
      return sampling_decode(*policy, inst, spec.samples, rng, time_limit_s, options);
  }
  throw ValidationError("unreachable solver kind");
}

/// Down metric of the no-EV reference: every station depletes untouched.
inline double without_evs_down(const Instance& inst) {
  Instance empty = inst;
  empty.evs.clear();
  Simulation sim(empty);
  sim.finalize();
  return inst.n_bs() * sim.downed_integral(inst.horizon_h);
}

struct SuiteRow {
  std::string instance_id;
  Metrics metrics;
  double wo_evs_down = 0.0;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
  Metrics mean, stddev;
  double wo_evs_down_mean = 0.0;
};

/// Runs one solver over a set of instances (parallel across instances, each
/// with its own derived rng stream) and aggregates mean and standard
/// deviation per metric.
inline SuiteResult evaluate_suite(const SolverSpec& spec, const PolicyParams* policy,
                                  const std::vector<Instance>& instances,
                                  const std::vector<std::string>& ids, std::uint64_t seed,
                                  int threads,
                                  double time_limit_s = std::numeric_limits<double>::infinity()) {
  SuiteResult suite;
  suite.rows.resize(instances.size());
  parallel_for(static_cast<int>(instances.size()), threads, [&](int i) {
    Rng rng(Rng::derive_seed(seed, i));
    const SolveOutcome outcome = solve_with(spec, policy, instances[i], rng, time_limit_s);
    suite.rows[i] = {ids[i], outcome.metrics, without_evs_down(instances[i])};
  });
  const double n = static_cast<double>(instances.size());
  for (const auto& row : suite.rows) {
    suite.mean.dist_km += row.metrics.dist_km / n;
    suite.mean.down += row.metrics.down / n;
    suite.mean.obj += row.metrics.obj / n;
    suite.mean.wall_time_s += row.metrics.wall_time_s / n;
    suite.wo_evs_down_mean += row.wo_evs_down / n;
  }
  if (instances.size() > 1) {
    for (const auto& row : suite.rows) {
      const auto sq = [](double x) { return x * x; };
      suite.stddev.dist_km += sq(row.metrics.dist_km - suite.mean.dist_km) / (n - 1);
      suite.stddev.down += sq(row.metrics.down - suite.mean.down) / (n - 1);
      suite.stddev.obj += sq(row.metrics.obj - suite.mean.obj) / (n - 1);
      suite.stddev.wall_time_s += sq(row.metrics.wall_time_s - suite.mean.wall_time_s) / (n - 1);
    }
    suite.stddev.dist_km = std::sqrt(suite.stddev.dist_km);
    suite.stddev.down = std::sqrt(suite.stddev.down);
    suite.stddev.obj = std::sqrt(suite.stddev.obj);
    suite.stddev.wall_time_s = std::sqrt(suite.stddev.wall_time_s);
  }
  return suite;
}

/// Per-instance metrics plus one trailing mean row.
inline void write_suite_csv(const SuiteResult& suite, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "instance_id,dist_km,down,obj,time_s\n";
  for (const auto& row : suite.rows)
    out << row.instance_id << ',' << csv_num(row.metrics.dist_km) << ','
        << csv_num(row.metrics.down) << ',' << csv_num(row.metrics.obj) << ','
        << csv_num(row.metrics.wall_time_s) << '\n';
  out << "mean," << csv_num(suite.mean.dist_km) << ',' << csv_num(suite.mean.down) << ','
      << csv_num(suite.mean.obj) << ',' << csv_num(suite.mean.wall_time_s) << '\n';
}

/// Table-style summary: the solver's mean +/- std row and the no-EV reference
/// row (only `down` is defined there).
inline void write_suite_summary_csv(const SuiteResult& suite, const std::string& solver_name,
                                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "label,dist_km_mean,dist_km_std,down_mean,down_std,obj_mean,obj_std,time_s_mean,"
         "time_s_std\n";
  out << solver_name << ',' << csv_num(suite.mean.dist_km) << ',' << csv_num(suite.stddev.dist_km)
      << ',' << csv_num(suite.mean.down) << ',' << csv_num(suite.stddev.down) << ','
      << csv_num(suite.mean.obj) << ',' << csv_num(suite.stddev.obj) << ','
      << csv_num(suite.mean.wall_time_s) << ',' << csv_num(suite.stddev.wall_time_s) << '\n';
  out << "wo_evs,,," << csv_num(suite.wo_evs_down_mean) << ",,,,,\n";
}

enum class ScalingAxis { Horizon, BaseStations, Evs };

inline ScalingAxis parse_axis(const std::string& name) {
  if (name == "horizon") return ScalingAxis::Horizon;
  if (name == "n_bs") return ScalingAxis::BaseStations;
  if (name == "n_ev") return ScalingAxis::Evs;
  throw ValidationError("unknown scaling axis '" + name + "' (horizon | n_bs | n_ev)");
}

struct ScalingRow {
  double axis_value = 0.0;
  double obj_mean = 0.0;
  double obj_std = 0.0;
  double time_s_mean = 0.0;  // batch-size-1 per-sample wall time
  double time_s_std = 0.0;
};

/// Evaluates one solver across the axis values. Instances along the horizon
/// axis share positions and parameters (the horizon alone moves); other axes
/// regenerate with the axis field substituted. Timing runs a single worker to
/// keep per-sample times honest.
inline std::vector<ScalingRow> scaling_run(const GenConfig& base, ScalingAxis axis,
                                           const std::vector<double>& values,
                                           const SolverSpec& spec, const PolicyParams* policy,
                                           int count, std::uint64_t seed) {
  std::vector<ScalingRow> table;
  for (const double value : values) {
    GenConfig cfg = base;
    switch (axis) {
      case ScalingAxis::Horizon: cfg.horizon_h = value; break;
      case ScalingAxis::BaseStations: cfg.n_bs = static_cast<int>(value); break;
      case ScalingAxis::Evs: cfg.n_ev = static_cast<int>(value); break;
    }
    ScalingRow row;
    row.axis_value = value;
    std::vector<double> objs(count), times(count);
    for (int i = 0; i < count; ++i) {
      const Instance inst = generate_instance(cfg, Rng::derive_seed(seed, i));
      Rng rng(Rng::derive_seed(Rng::derive_seed(seed, 12345), i));
      const auto t0 = std::chrono::steady_clock::now();
      const SolveOutcome outcome = solve_with(spec, policy, inst, rng);
      times[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      objs[i] = outcome.metrics.obj;
    }
    for (int i = 0; i < count; ++i) {
      row.obj_mean += objs[i] / count;
      row.time_s_mean += times[i] / count;
    }
    if (count > 1) {
      for (int i = 0; i < count; ++i) {
        row.obj_std += (objs[i] - row.obj_mean) * (objs[i] - row.obj_mean) / (count - 1);
        row.time_s_std += (times[i] - row.time_s_mean) * (times[i] - row.time_s_mean) / (count - 1);
      }
      row.obj_std = std::sqrt(row.obj_std);
      row.time_s_std = std::sqrt(row.time_s_std);
    }
    table.push_back(row);
  }
  return table;
}

inline void write_scaling_csv(const std::vector<ScalingRow>& table, const std::string& axis,
                              const std::string& solver, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "axis,solver,axis_value,obj_mean,obj_std,time_s_mean,time_s_std\n";
  for (const auto& row : table)
    out << axis << ',' << solver << ',' << csv_num(row.axis_value) << ',' << csv_num(row.obj_mean)
        << ',' << csv_num(row.obj_std) << ',' << csv_num(row.time_s_mean) << ','
        << csv_num(row.time_s_std) << '\n';
}

inline void write_learning_curve_csv(const std::vector<EpochStats>& curve,
                                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "epoch,train_cost_mean,val_cost_greedy,baseline_swapped,p_value\n";
  for (const auto& row : curve)
    out << row.epoch << ',' << csv_num(row.train_cost_mean) << ','
        << csv_num(row.val_cost_greedy) << ',' << (row.baseline_swapped ? 1 : 0) << ','
        << csv_num(row.p_value) << '\n';
}

}  // namespace evrpeps
