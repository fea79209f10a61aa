#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "evrpeps/checkpoint.hpp"
#include "evrpeps/generate.hpp"
#include "evrpeps/policy.hpp"
#include "evrpeps/trainer.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace evrpeps;
using evrpeps::testing::InstanceBuilder;

namespace {

PolicyConfig tiny_config() {
  PolicyConfig cfg;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  return cfg;
}

GenConfig small_gen() {
  GenConfig cfg;
  cfg.n_bs = 4;
  cfg.n_cs = 2;
  cfg.n_ev = 2;
  cfg.horizon_h = 6.0;
  return cfg;
}

/// Records one sampled episode of the given length cap.
Episode record_episode(const PolicyParams& policy, const Instance& inst, std::uint64_t seed,
                       int max_decisions) {
  Episode episode;
  Rng rng(seed);
  auto select = [&](const Simulation& sim, int k) {
    DecisionContext ctx = encode_features(sim, k, policy.config.features);
    const PolicyEval eval = policy_forward(policy, ctx);
    const auto [node, logp] = sample_action(eval, DecodeMode::Sample, &rng);
    if (static_cast<int>(episode.decisions.size()) < max_decisions) {
      ctx.chosen_node = node;
      episode.decisions.push_back(std::move(ctx));
    }
    return node;
  };
  run_rollout(inst, select);
  return episode;
}

double episode_logprob(const PolicyParams& policy, const Episode& episode) {
  double total = 0.0;
  for (const auto& ctx : episode.decisions)
    total += policy_forward(policy, ctx).log_prob(ctx.chosen_node);
  return total;
}

}  // namespace

TEST(Features, DownedStationHasZeroTimeToDown) {
  const Instance inst = InstanceBuilder().cs(0, 0).bs(10, 0, 12, 4, 0.0).ev(48).build();
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  EXPECT_DOUBLE_EQ(ctx.bs_feats(0, 5), 0.0);
  EXPECT_DOUBLE_EQ(ctx.bs_feats(0, 4), 0.0);
}

TEST(Features, DimensionsMatchTheConfiguredLayout) {
  const Instance inst = generate_instance(small_gen(), 3);
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  EXPECT_EQ(ctx.bs_feats.rows(), inst.n_bs());
  EXPECT_EQ(ctx.bs_feats.cols(), FeatureConfig::kBsDim);
  EXPECT_EQ(ctx.cs_feats.rows(), inst.n_cs());
  EXPECT_EQ(ctx.cs_feats.cols(), FeatureConfig::kCsDim);
  EXPECT_EQ(ctx.ev_feats.rows(), inst.n_evs());
  EXPECT_EQ(ctx.ev_feats.cols(), FeatureConfig::kEvDim);
  EXPECT_EQ(static_cast<int>(FeatureConfig::bs_feature_names.size()), FeatureConfig::kBsDim);
  EXPECT_EQ(static_cast<int>(FeatureConfig::cs_feature_names.size()), FeatureConfig::kCsDim);
  EXPECT_EQ(static_cast<int>(FeatureConfig::ev_feature_names.size()), FeatureConfig::kEvDim);
}

TEST(Features, FreshInstancesStayInsideTheNormalizedRange) {
  GenConfig cfg;  // default 50/12/6 shape
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Instance inst = generate_instance(cfg, seed);
    Simulation sim(inst);
    const auto ctx = encode_features(sim, 0, FeatureConfig{});
    const auto in_range = [](const Matrix& m) {
      return m.minCoeff() >= -1.0 && m.maxCoeff() <= 2.0;
    };
    ASSERT_TRUE(in_range(ctx.bs_feats)) << "seed " << seed;
    ASSERT_TRUE(in_range(ctx.cs_feats)) << "seed " << seed;
    ASSERT_TRUE(in_range(ctx.ev_feats)) << "seed " << seed;
  }
}

TEST(Encoder, PermutationEquivariance) {
  const Instance inst = generate_instance(small_gen(), 17);
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  Rng rng(5);
  PolicyConfig cfg = tiny_config();
  const PolicyParams policy = make_policy(cfg, rng);

  const EncoderOutputs base = encoder_forward(policy, ctx.bs_feats, ctx.cs_feats, ctx.ev_feats);

  // permute base stations with a fixed cycle, charge stations with a swap
  std::vector<int> bs_perm = {2, 0, 3, 1};
  std::vector<int> cs_perm = {1, 0};
  Matrix bs2(ctx.bs_feats.rows(), ctx.bs_feats.cols());
  for (int i = 0; i < 4; ++i) bs2.row(i) = ctx.bs_feats.row(bs_perm[i]);
  Matrix cs2(ctx.cs_feats.rows(), ctx.cs_feats.cols());
  for (int j = 0; j < 2; ++j) cs2.row(j) = ctx.cs_feats.row(cs_perm[j]);

  const EncoderOutputs permuted = encoder_forward(policy, bs2, cs2, ctx.ev_feats);
  for (int i = 0; i < 4; ++i)
    EXPECT_LT((permuted.nodes.row(i) - base.nodes.row(bs_perm[i])).cwiseAbs().maxCoeff(), 1e-6);
  for (int j = 0; j < 2; ++j)
    EXPECT_LT((permuted.nodes.row(4 + j) - base.nodes.row(4 + cs_perm[j])).cwiseAbs().maxCoeff(),
              1e-6);

  // EV-tower permutation behaves the same way
  Matrix ev2 = ctx.ev_feats;
  ev2.row(0) = ctx.ev_feats.row(1);
  ev2.row(1) = ctx.ev_feats.row(0);
  const EncoderOutputs swapped = encoder_forward(policy, ctx.bs_feats, ctx.cs_feats, ev2);
  EXPECT_LT((swapped.evs.row(0) - base.evs.row(1)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((swapped.evs.row(1) - base.evs.row(0)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Encoder, SingleNodeSingleEvIsFinite) {
  const Instance inst = InstanceBuilder().cs(0, 0).ev(48).build();
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  Rng rng(6);
  const PolicyParams policy = make_policy(tiny_config(), rng);
  const EncoderOutputs out = encoder_forward(policy, ctx.bs_feats, ctx.cs_feats, ctx.ev_feats);
  EXPECT_EQ(out.nodes.rows(), 1);
  EXPECT_EQ(out.evs.rows(), 1);
  EXPECT_TRUE(out.nodes.allFinite());
  EXPECT_TRUE(out.evs.allFinite());
}

TEST(Encoder, ZeroLayersReturnInitialEmbeddings) {
  const Instance inst = generate_instance(small_gen(), 8);
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  PolicyConfig cfg = tiny_config();
  cfg.layers = 0;
  Rng rng(7);
  const PolicyParams policy = make_policy(cfg, rng);
  const EncoderOutputs out = encoder_forward(policy, ctx.bs_feats, ctx.cs_feats, ctx.ev_feats);
  Matrix expected_bs = (ctx.bs_feats * policy.w_bs).rowwise() + policy.b_bs.row(0);
  EXPECT_LT((out.nodes.topRows(inst.n_bs()) - expected_bs).cwiseAbs().maxCoeff(), 1e-15);
  Matrix expected_ev = (ctx.ev_feats * policy.w_ev).rowwise() + policy.b_ev.row(0);
  EXPECT_LT((out.evs - expected_ev).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Pointer, LogitsBoundedByClipWidth) {
  const Instance inst = generate_instance(small_gen(), 11);
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  Rng rng(8);
  PolicyConfig cfg = tiny_config();
  const PolicyParams policy = make_policy(cfg, rng);
  const PolicyEval eval = policy_forward(policy, ctx);
  for (int i = 0; i < eval.logits.size(); ++i)
    if (ctx.mask[i]) EXPECT_LE(std::abs(eval.logits(i)), cfg.logit_clip);
}

TEST(Pointer, ZeroQueryGivesZeroLogitsAndUniformProbs) {
  const Instance inst = generate_instance(small_gen(), 12);
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  Rng rng(9);
  PolicyParams policy = make_policy(tiny_config(), rng);
  policy.wq_ptr.setZero();
  const PolicyEval eval = policy_forward(policy, ctx);
  const int visitable = std::accumulate(ctx.mask.begin(), ctx.mask.end(), 0);
  for (int i = 0; i < eval.logits.size(); ++i) {
    if (!ctx.mask[i]) continue;
    EXPECT_DOUBLE_EQ(eval.logits(i), 0.0);
    EXPECT_DOUBLE_EQ(eval.probs(i), 1.0 / visitable);
  }
}

TEST(Pointer, MaskedNodesHaveExactlyZeroProbability) {
  const Instance inst = generate_instance(small_gen(), 13);
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  Rng rng(10);
  const PolicyParams policy = make_policy(tiny_config(), rng);
  const PolicyEval eval = policy_forward(policy, ctx);
  double total = 0.0;
  for (int i = 0; i < eval.probs.size(); ++i) {
    if (!ctx.mask[i]) EXPECT_EQ(eval.probs(i), 0.0);
    total += eval.probs(i);
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(NodeDistribution, HandValues) {
  {
    Vector logits(5);
    logits.setConstant(0.7);
    const auto [probs, lse] = node_distribution(logits, {1, 1, 1, 1, 1});
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(probs(i), 0.2, 1e-12);
  }
  {
    Vector logits(2);
    logits << 0.0, std::log(3.0);
    const auto [probs, lse] = node_distribution(logits, {1, 1});
    EXPECT_NEAR(probs(0), 0.25, 1e-12);
    EXPECT_NEAR(probs(1), 0.75, 1e-12);
  }
  {
    Vector logits(3);
    logits << 5.0, -2.0, 1.0;
    const auto [probs, lse] = node_distribution(logits, {0, 1, 0});
    EXPECT_DOUBLE_EQ(probs(1), 1.0);
    EXPECT_DOUBLE_EQ(probs(0), 0.0);
  }
  Vector logits(2);
  logits << 1.0, 2.0;
  EXPECT_THROW(node_distribution(logits, {0, 0}), SimError);
}

TEST(SampleAction, GreedyAndDegenerate) {
  PolicyEval eval;
  eval.logits.resize(2);
  eval.logits << std::log(0.25), std::log(0.75);
  eval.logsumexp = 0.0;
  eval.probs.resize(2);
  eval.probs << 0.25, 0.75;
  eval.mask = {1, 1};
  const auto [node, logp] = sample_action(eval, DecodeMode::Greedy, nullptr);
  EXPECT_EQ(node, 1);
  EXPECT_NEAR(logp, std::log(0.75), 1e-12);

  PolicyEval sure;
  sure.logits.resize(1);
  sure.logits << 0.0;
  sure.logsumexp = 0.0;
  sure.probs.resize(1);
  sure.probs << 1.0;
  sure.mask = {1};
  const auto [n2, lp2] = sample_action(sure, DecodeMode::Greedy, nullptr);
  EXPECT_EQ(n2, 0);
  EXPECT_DOUBLE_EQ(lp2, 0.0);
}

TEST(SampleAction, EmpiricalFrequencyMatchesDistribution) {
  PolicyEval eval;
  eval.logits.resize(2);
  eval.logits << std::log(0.25), std::log(0.75);
  eval.logsumexp = 0.0;
  eval.probs.resize(2);
  eval.probs << 0.25, 0.75;
  eval.mask = {1, 1};
  Rng rng(123);
  int ones = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ones += sample_action(eval, DecodeMode::Sample, &rng).first;
  EXPECT_NEAR(ones / static_cast<double>(draws), 0.75, 0.005);
}

TEST(Gradient, MatchesCentralFiniteDifferences) {
  const Instance inst = generate_instance(small_gen(), 21);
  Rng rng(33);
  PolicyParams policy = make_policy(tiny_config(), rng);
  const Episode episode = record_episode(policy, inst, 77, 3);
  ASSERT_GE(episode.decisions.size(), 1u);

  const PolicyParams grads = logprob_gradient(policy, episode);

  const double h = 1e-4;
  std::vector<Matrix*> arrays;
  std::vector<std::string> names;
  policy.for_each_array([&](const std::string& name, Matrix& m) {
    arrays.push_back(&m);
    names.push_back(name);
  });
  std::vector<const Matrix*> grad_arrays;
  grads.for_each_array([&](const std::string&, const Matrix& m) { grad_arrays.push_back(&m); });

  for (std::size_t a = 0; a < arrays.size(); ++a) {
    Matrix fd(arrays[a]->rows(), arrays[a]->cols());
    for (Eigen::Index r = 0; r < fd.rows(); ++r) {
      for (Eigen::Index c = 0; c < fd.cols(); ++c) {
        const double saved = (*arrays[a])(r, c);
        (*arrays[a])(r, c) = saved + h;
        const double up = episode_logprob(policy, episode);
        (*arrays[a])(r, c) = saved - h;
        const double down = episode_logprob(policy, episode);
        (*arrays[a])(r, c) = saved;
        fd(r, c) = (up - down) / (2.0 * h);
      }
    }
    const double scale = std::max({fd.norm(), grad_arrays[a]->norm(), 1e-8});
    const double rel = (fd - *grad_arrays[a]).norm() / scale;
    EXPECT_LT(rel, 1e-4) << "array " << names[a];
  }
}

TEST(Gradient, SingleDecisionEpisode) {
  const Instance inst = generate_instance(small_gen(), 22);
  Rng rng(34);
  PolicyParams policy = make_policy(tiny_config(), rng);
  Episode episode = record_episode(policy, inst, 81, 1);
  ASSERT_EQ(episode.decisions.size(), 1u);
  const PolicyParams grads = logprob_gradient(policy, episode);

  // spot-check two arrays by finite differences
  const double h = 1e-4;
  for (Matrix* m : {&policy.wq_ptr, &policy.w_bs}) {
    Matrix fd(m->rows(), m->cols());
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        const double saved = (*m)(r, c);
        (*m)(r, c) = saved + h;
        const double up = episode_logprob(policy, episode);
        (*m)(r, c) = saved - h;
        const double down = episode_logprob(policy, episode);
        (*m)(r, c) = saved;
        fd(r, c) = (up - down) / (2.0 * h);
      }
    const Matrix& analytic = m == &policy.wq_ptr ? grads.wq_ptr : grads.w_bs;
    EXPECT_LT((fd - analytic).norm() / std::max({fd.norm(), analytic.norm(), 1e-8}), 1e-4);
  }
}

TEST(Gradient, ForcedDecisionsHaveZeroGradient) {
  // Single reachable node at every step: log p = 0, gradient exactly zero.
  const Instance inst =
      InstanceBuilder().cs(0, 0).cs(4, 0).cs(90, 0).bs(80, 0, 12, 4, 6).ev(1.0).build();
  Simulation sim(inst);
  Rng rng(35);
  PolicyParams policy = make_policy(tiny_config(), rng);

  DecisionContext ctx = encode_features(sim, 0, policy.config.features);
  ASSERT_EQ(std::accumulate(ctx.mask.begin(), ctx.mask.end(), 0), 1);
  const PolicyEval eval = policy_forward(policy, ctx);
  auto [node, logp] = sample_action(eval, DecodeMode::Greedy, nullptr);
  EXPECT_DOUBLE_EQ(logp, 0.0);
  ctx.chosen_node = node;
  Episode episode;
  episode.decisions.push_back(ctx);
  const PolicyParams grads = logprob_gradient(policy, episode);
  EXPECT_DOUBLE_EQ(max_abs(grads), 0.0);
}

TEST(Gradient, SumOfEpisodesEqualsSumOfGradients) {
  const Instance inst = generate_instance(small_gen(), 23);
  Rng rng(36);
  PolicyParams policy = make_policy(tiny_config(), rng);
  const Episode ep1 = record_episode(policy, inst, 101, 2);
  const Episode ep2 = record_episode(policy, inst, 102, 2);
  Episode joint;
  joint.decisions = ep1.decisions;
  joint.decisions.insert(joint.decisions.end(), ep2.decisions.begin(), ep2.decisions.end());

  PolicyParams sum = logprob_gradient(policy, ep1);
  add_scaled(sum, logprob_gradient(policy, ep2), 1.0);
  const PolicyParams whole = logprob_gradient(policy, joint);

  std::vector<const Matrix*> a, b;
  sum.for_each_array([&](const std::string&, const Matrix& m) { a.push_back(&m); });
  whole.for_each_array([&](const std::string&, const Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_LT((*a[i] - *b[i]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, DeterministicGivenParamsAndInputs) {
  const Instance inst = generate_instance(small_gen(), 24);
  Simulation sim(inst);
  const auto ctx = encode_features(sim, 0, FeatureConfig{});
  Rng rng(37);
  const PolicyParams policy = make_policy(tiny_config(), rng);
  const PolicyEval a = policy_forward(policy, ctx);
  const PolicyEval b = policy_forward(policy, ctx);
  EXPECT_EQ((a.probs - b.probs).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(38);
  PolicyConfig cfg = tiny_config();
  const PolicyParams policy = make_policy(cfg, rng);
  const auto dir = fs::temp_directory_path() / "evrpeps_policy_test";
  fs::create_directories(dir);
  const std::string path = (dir / "policy.ckpt").string();
  save_checkpoint(policy, path);
  const PolicyParams loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.config.hidden, cfg.hidden);
  EXPECT_EQ(loaded.config.layers, cfg.layers);
  EXPECT_EQ(loaded.config.heads, cfg.heads);

  // loaded values are the float32-quantized originals
  std::vector<const Matrix*> orig, back;
  policy.for_each_array([&](const std::string&, const Matrix& m) { orig.push_back(&m); });
  loaded.for_each_array([&](const std::string&, const Matrix& m) { back.push_back(&m); });
  for (std::size_t i = 0; i < orig.size(); ++i)
    for (Eigen::Index r = 0; r < orig[i]->rows(); ++r)
      for (Eigen::Index c = 0; c < orig[i]->cols(); ++c)
        ASSERT_EQ(static_cast<float>((*orig[i])(r, c)), (*back[i])(r, c));

  // save(load(x)) is byte-identical
  const std::string path2 = (dir / "policy2.ckpt").string();
  save_checkpoint(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  EXPECT_EQ(s1, s2);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto dir = fs::temp_directory_path() / "evrpeps_policy_test";
  fs::create_directories(dir);
  const std::string path = (dir / "garbage.ckpt").string();
  std::ofstream(path) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(path), SchemaError);
  EXPECT_THROW(load_checkpoint((dir / "missing.ckpt").string()), std::runtime_error);
}
