#pragma once

#include <cmath>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "evrpeps/generate.hpp"
#include "evrpeps/metrics.hpp"
#include "evrpeps/parallel.hpp"
#include "evrpeps/policy.hpp"
#include "evrpeps/rollout.hpp"

namespace evrpeps {

struct PolicyRollout {
  RouteLog log;
  Metrics metrics;
  double sum_logprob = 0.0;
  Episode episode;  // filled only when recording
};

/// One full rollout driven by the policy's node selector. `record_episode`
/// keeps the per-decision contexts needed for the gradient.
inline PolicyRollout policy_rollout(const PolicyParams& policy, const Instance& inst,
                                    DecodeMode mode, Rng* rng, bool record_episode = false,
                                    SimOptions options = {}) {
  PolicyRollout out;
  auto select = [&](const Simulation& sim, int k) {
    DecisionContext ctx = encode_features(sim, k, policy.config.features);
    const PolicyEval eval = policy_forward(policy, ctx);
    const auto [node, logp] = sample_action(eval, mode, rng);
    out.sum_logprob += logp;
    if (record_episode) {
      ctx.chosen_node = node;
      out.episode.decisions.push_back(std::move(ctx));
    }
    return node;
  };
  RolloutResult result = run_rollout(inst, select, options);
  out.log = std::move(result.log);
  out.metrics = result.metrics;
  return out;
}

// --- optimizers ----------------------------------------------------------

enum class OptimizerKind { Sgd, Adam };

/// Plain SGD by default (constant learning rate); Adam available by config.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, const PolicyParams& shape, double beta1 = 0.9,
            double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (kind_ == OptimizerKind::Adam) {
      m_ = zeros_like(shape);
      v_ = zeros_like(shape);
    }
  }

  void apply(PolicyParams& params, const PolicyParams& grads) {
    if (kind_ == OptimizerKind::Sgd) {
      add_scaled(params, grads, -lr_);
      return;
    }
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, step_);
    const double c2 = 1.0 - std::pow(beta2_, step_);
    std::vector<Matrix*> ps, ms, vs;
    std::vector<const Matrix*> gs;
    params.for_each_array([&](const std::string&, Matrix& m) { ps.push_back(&m); });
    m_.for_each_array([&](const std::string&, Matrix& m) { ms.push_back(&m); });
    v_.for_each_array([&](const std::string&, Matrix& m) { vs.push_back(&m); });
    grads.for_each_array([&](const std::string&, const Matrix& m) { gs.push_back(&m); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
      *ms[i] = beta1_ * *ms[i] + (1.0 - beta1_) * *gs[i];
      *vs[i] = beta2_ * *vs[i] + (1.0 - beta2_) * gs[i]->cwiseProduct(*gs[i]);
      ps[i]->array() -=
          lr_ * (ms[i]->array() / c1) / ((vs[i]->array() / c2).sqrt() + eps_);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  int step_ = 0;
  PolicyParams m_, v_;
};

// --- REINFORCE -----------------------------------------------------------

struct BatchStats {
  double mean_sampled_cost = 0.0;
  double mean_baseline_cost = 0.0;
  double mean_advantage = 0.0;
};

/// g = sum_b (L(pi_b) - L(pi_b^GR)) * grad log p(pi_b): sampled rollouts of
/// the training policy against greedy rollouts of the frozen baseline on the
/// same instances. Applies the update through `opt` and returns batch stats.
inline BatchStats reinforce_step(PolicyParams& policy, const PolicyParams& baseline,
                                 const std::vector<Instance>& batch, std::uint64_t step_seed,
                                 int threads, Optimizer& opt) {
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw ValidationError("reinforce_step: empty batch");
  threads = std::max(1, std::min(threads, n));

  std::vector<double> sampled_cost(n), baseline_cost(n);
  std::vector<PolicyParams> grads(threads, zeros_like(policy));
  const int chunk = (n + threads - 1) / threads;

  parallel_for(threads, threads, [&](int t) {
    const int lo = t * chunk, hi = std::min(n, lo + chunk);
    for (int i = lo; i < hi; ++i) {
      Rng rng(Rng::derive_seed(step_seed, static_cast<std::uint64_t>(i)));
      PolicyRollout sampled =
          policy_rollout(policy, batch[i], DecodeMode::Sample, &rng, /*record_episode=*/true);
      PolicyRollout greedy = policy_rollout(baseline, batch[i], DecodeMode::Greedy, nullptr);
      sampled_cost[i] = sampled.metrics.obj;
      baseline_cost[i] = greedy.metrics.obj;
      const double advantage = sampled.metrics.obj - greedy.metrics.obj;
      if (!std::isfinite(advantage)) throw SimError("reinforce_step: non-finite loss");
      if (advantage != 0.0)
        accumulate_logprob_gradient(policy, sampled.episode, advantage, grads[t]);
    }
  });

  for (int t = 1; t < threads; ++t) add_scaled(grads[0], grads[t], 1.0);
  if (!std::isfinite(max_abs(grads[0]))) throw SimError("reinforce_step: non-finite gradient");
  opt.apply(policy, grads[0]);

  BatchStats stats;
  for (int i = 0; i < n; ++i) {
    stats.mean_sampled_cost += sampled_cost[i] / n;
    stats.mean_baseline_cost += baseline_cost[i] / n;
  }
  stats.mean_advantage = stats.mean_sampled_cost - stats.mean_baseline_cost;
  return stats;
}

// --- baseline replacement --------------------------------------------------

struct TTest {
  double p_value = 1.0;
  double t_stat = 0.0;
  double mean_diff = 0.0;
  bool reject = false;
};

/// One-sided paired t-test of H0 "candidate is not better" (mean difference
/// >= 0) against "candidate costs are lower". Rejects at `significance`.
inline TTest paired_one_sided_t_test(const std::vector<double>& candidate,
                                     const std::vector<double>& incumbent, double significance) {
  const std::size_t n = candidate.size();
  if (n != incumbent.size() || n < 2)
    throw ValidationError("paired t-test needs >= 2 matched cost pairs");
  TTest result;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += (candidate[i] - incumbent[i]) / n;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = candidate[i] - incumbent[i] - mean;
    var += d * d / (n - 1);
  }
  result.mean_diff = mean;
  if (var == 0.0) {
    result.p_value = mean < 0.0 ? 0.0 : 1.0;
    result.t_stat = mean < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0;
  } else {
    result.t_stat = mean / std::sqrt(var / n);
    const boost::math::students_t dist(static_cast<double>(n - 1));
    result.p_value = boost::math::cdf(dist, result.t_stat);
  }
  result.reject = result.p_value < significance;
  return result;
}

struct BaselineUpdate {
  bool swapped = false;
  double p_value = 1.0;
  double candidate_val_cost = 0.0;
  double baseline_val_cost = 0.0;
};

inline std::vector<double> greedy_costs(const PolicyParams& policy,
                                        const std::vector<Instance>& instances, int threads) {
  std::vector<double> costs(instances.size());
  parallel_for(static_cast<int>(instances.size()), threads, [&](int i) {
    costs[i] = policy_rollout(policy, instances[i], DecodeMode::Greedy, nullptr).metrics.obj;
  });
  return costs;
}

/// Greedy-evaluates both policies on the shared validation instances and
/// replaces the baseline iff the paired t-test rejects "no improvement".
inline BaselineUpdate maybe_update_baseline(const PolicyParams& policy, PolicyParams& baseline,
                                            const std::vector<Instance>& validation,
                                            double significance, int threads) {
  BaselineUpdate update;
  const auto cand = greedy_costs(policy, validation, threads);
  const auto inc = greedy_costs(baseline, validation, threads);
  const TTest test = paired_one_sided_t_test(cand, inc, significance);
  update.p_value = test.p_value;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    update.candidate_val_cost += cand[i] / cand.size();
    update.baseline_val_cost += inc[i] / inc.size();
  }
  if (test.reject) {
    baseline = policy;
    update.swapped = true;
  }
  return update;
}

// --- full training loop ------------------------------------------------------

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  int instances_per_epoch = 12800;
  double learning_rate = 1e-4;
  double significance = 0.05;
  int validation_size = 1000;
  std::uint64_t seed = 1234;
  int threads = default_thread_count();
  OptimizerKind optimizer = OptimizerKind::Sgd;
  GenConfig gen;
  PolicyConfig policy;
};

struct EpochStats {
  int epoch = 0;
  double train_cost_mean = 0.0;  // sampled-rollout mean; 0 for the pre-training row
  double val_cost_greedy = 0.0;
  bool baseline_swapped = false;
  double p_value = 1.0;
};

struct TrainResult {
  PolicyParams final_policy;
  PolicyParams best_policy;
  double best_val_cost = 0.0;
  int best_epoch = 0;
  std::vector<EpochStats> curve;  // row 0 is the untrained policy's evaluation
};

inline std::vector<Instance> generate_instances(const GenConfig& gen, std::uint64_t stream_seed,
                                                int count) {
  std::vector<Instance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i)
    out.push_back(generate_instance(gen, Rng::derive_seed(stream_seed, i)));
  return out;
}

/// REINFORCE with the greedy-rollout baseline: fresh sampled training
/// instances every epoch, per-epoch validation with greedy decoding, baseline
/// swap by paired t-test, and best-validation checkpoint selection.
template <typename EpochCallback>
TrainResult train(const TrainConfig& config, EpochCallback&& on_epoch) {
  if (config.epochs < 1 || config.batch_size < 1 || config.instances_per_epoch < 1)
    throw ValidationError("train: sizes must be positive");
  if (config.significance <= 0.0 || config.significance >= 1.0)
    throw ValidationError("train: significance must lie in (0, 1)");
  if (config.validation_size < 2) throw ValidationError("train: validation set too small");

  Rng init_rng(Rng::derive_seed(config.seed, 0));
  PolicyParams policy = make_policy(config.policy, init_rng);
  PolicyParams baseline = policy;
  Optimizer opt(config.optimizer, config.learning_rate, policy);

  const std::vector<Instance> validation =
      generate_instances(config.gen, Rng::derive_seed(config.seed, 1), config.validation_size);

  TrainResult result;
  const auto initial_costs = greedy_costs(policy, validation, config.threads);
  double initial_val = 0.0;
  for (const double c : initial_costs) initial_val += c / initial_costs.size();
  result.curve.push_back({0, 0.0, initial_val, false, 1.0});
  result.best_policy = policy;
  result.best_val_cost = initial_val;
  result.best_epoch = 0;
  on_epoch(result.curve.back());

  const int batches = std::max(1, config.instances_per_epoch / config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t epoch_seed = Rng::derive_seed(Rng::derive_seed(config.seed, 2), epoch);
    double train_cost = 0.0;
    for (int b = 0; b < batches; ++b) {
      const std::vector<Instance> batch = generate_instances(
          config.gen, Rng::derive_seed(epoch_seed, b), config.batch_size);
      const BatchStats stats = reinforce_step(policy, baseline, batch,
                                              Rng::derive_seed(epoch_seed, 1000000 + b),
                                              config.threads, opt);
      train_cost += stats.mean_sampled_cost / batches;
    }

    const BaselineUpdate update =
        maybe_update_baseline(policy, baseline, validation, config.significance, config.threads);
    EpochStats row{epoch, train_cost, update.candidate_val_cost, update.swapped, update.p_value};
    result.curve.push_back(row);
    if (row.val_cost_greedy < result.best_val_cost) {
      result.best_val_cost = row.val_cost_greedy;
      result.best_policy = policy;
      result.best_epoch = epoch;
    }
    on_epoch(row);
  }
  result.final_policy = std::move(policy);
  return result;
}

inline TrainResult train(const TrainConfig& config) {
  return train(config, [](const EpochStats&) {});
}

}  // namespace evrpeps
