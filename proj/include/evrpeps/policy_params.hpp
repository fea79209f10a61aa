#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "evrpeps/errors.hpp"
#include "evrpeps/features.hpp"
#include "evrpeps/rng.hpp"

namespace evrpeps {

using Matrix = Eigen::MatrixXd;

struct PolicyConfig {
  int hidden = 128;        // H
  int layers = 2;          // L
  int heads = 8;           // M
  double logit_clip = 10;  // eta
  FeatureConfig features;

  int head_dim() const { return hidden / heads; }
  void validate() const {
    if (hidden <= 0 || layers < 0 || heads <= 0) throw ValidationError("bad policy shape");
    if (hidden % heads != 0) throw ValidationError("hidden must be divisible by heads");
    features.validate();
  }
};

/// One Transformer encoder layer: multi-head self-attention and a feed-forward
/// block, each followed by a residual connection and layer normalization.
struct EncoderLayerParams {
  Matrix wq, wk, wv, wo;      // H x H
  Matrix bq, bk, bv, bo;      // 1 x H
  Matrix ln1_g, ln1_b;        // 1 x H
  Matrix w1, b1;              // H x 4H, 1 x 4H
  Matrix w2, b2;              // 4H x H, 1 x H
  Matrix ln2_g, ln2_b;        // 1 x H
};

/// All trainable arrays of the two-tower pointer policy.
struct PolicyParams {
  PolicyConfig config;

  Matrix w_bs, b_bs;  // kBsDim x H, 1 x H
  Matrix w_cs, b_cs;  // kCsDim x H
  Matrix w_ev, b_ev;  // kEvDim x H
  std::vector<EncoderLayerParams> node_layers;
  std::vector<EncoderLayerParams> ev_layers;
  Matrix wq_ptr, wk_ptr;  // H x H pointer projections

  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("embed.bs.w", self.w_bs);
    fn("embed.bs.b", self.b_bs);
    fn("embed.cs.w", self.w_cs);
    fn("embed.cs.b", self.b_cs);
    fn("embed.ev.w", self.w_ev);
    fn("embed.ev.b", self.b_ev);
    auto tower = [&](auto& layers, const std::string& prefix) {
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& lp = layers[l];
        const std::string p = prefix + "." + std::to_string(l) + ".";
        fn(p + "wq", lp.wq);
        fn(p + "bq", lp.bq);
        fn(p + "wk", lp.wk);
        fn(p + "bk", lp.bk);
        fn(p + "wv", lp.wv);
        fn(p + "bv", lp.bv);
        fn(p + "wo", lp.wo);
        fn(p + "bo", lp.bo);
        fn(p + "ln1_g", lp.ln1_g);
        fn(p + "ln1_b", lp.ln1_b);
        fn(p + "w1", lp.w1);
        fn(p + "b1", lp.b1);
        fn(p + "w2", lp.w2);
        fn(p + "b2", lp.b2);
        fn(p + "ln2_g", lp.ln2_g);
        fn(p + "ln2_b", lp.ln2_b);
      }
    };
    tower(self.node_layers, "node");
    tower(self.ev_layers, "ev");
    fn("pointer.wq", self.wq_ptr);
    fn("pointer.wk", self.wk_ptr);
  }

  template <typename Fn>
  void for_each_array(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each_array(Fn&& fn) const {
    visit(*this, fn);
  }
};

namespace detail {

inline void init_uniform(Matrix& m, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

inline EncoderLayerParams make_layer(int hidden) {
  EncoderLayerParams lp;
  lp.wq.resize(hidden, hidden);
  lp.wk.resize(hidden, hidden);
  lp.wv.resize(hidden, hidden);
  lp.wo.resize(hidden, hidden);
  lp.bq.resize(1, hidden);
  lp.bk.resize(1, hidden);
  lp.bv.resize(1, hidden);
  lp.bo.resize(1, hidden);
  lp.ln1_g.resize(1, hidden);
  lp.ln1_b.resize(1, hidden);
  lp.w1.resize(hidden, 4 * hidden);
  lp.b1.resize(1, 4 * hidden);
  lp.w2.resize(4 * hidden, hidden);
  lp.b2.resize(1, hidden);
  lp.ln2_g.resize(1, hidden);
  lp.ln2_b.resize(1, hidden);
  return lp;
}

inline void init_layer(EncoderLayerParams& lp, int hidden, Rng& rng) {
  init_uniform(lp.wq, hidden, rng);
  init_uniform(lp.bq, hidden, rng);
  init_uniform(lp.wk, hidden, rng);
  init_uniform(lp.bk, hidden, rng);
  init_uniform(lp.wv, hidden, rng);
  init_uniform(lp.bv, hidden, rng);
  init_uniform(lp.wo, hidden, rng);
  init_uniform(lp.bo, hidden, rng);
  lp.ln1_g.setOnes();
  lp.ln1_b.setZero();
  init_uniform(lp.w1, hidden, rng);
  init_uniform(lp.b1, hidden, rng);
  init_uniform(lp.w2, 4 * hidden, rng);
  init_uniform(lp.b2, 4 * hidden, rng);
  lp.ln2_g.setOnes();
  lp.ln2_b.setZero();
}

}  // namespace detail

/// Allocates every array at its configured shape, values unspecified.
inline PolicyParams make_policy_shell(const PolicyConfig& config) {
  config.validate();
  const int h = config.hidden;
  PolicyParams p;
  p.config = config;
  p.w_bs.resize(FeatureConfig::kBsDim, h);
  p.b_bs.resize(1, h);
  p.w_cs.resize(FeatureConfig::kCsDim, h);
  p.b_cs.resize(1, h);
  p.w_ev.resize(FeatureConfig::kEvDim, h);
  p.b_ev.resize(1, h);
  for (int l = 0; l < config.layers; ++l) {
    p.node_layers.push_back(detail::make_layer(h));
    p.ev_layers.push_back(detail::make_layer(h));
  }
  p.wq_ptr.resize(h, h);
  p.wk_ptr.resize(h, h);
  return p;
}

/// Fresh policy with U(-1/sqrt(d), 1/sqrt(d)) projections (d = fan-in) and
/// identity layer norms.
inline PolicyParams make_policy(const PolicyConfig& config, Rng& rng) {
  PolicyParams p = make_policy_shell(config);
  const int h = config.hidden;
  detail::init_uniform(p.w_bs, FeatureConfig::kBsDim, rng);
  detail::init_uniform(p.b_bs, FeatureConfig::kBsDim, rng);
  detail::init_uniform(p.w_cs, FeatureConfig::kCsDim, rng);
  detail::init_uniform(p.b_cs, FeatureConfig::kCsDim, rng);
  detail::init_uniform(p.w_ev, FeatureConfig::kEvDim, rng);
  detail::init_uniform(p.b_ev, FeatureConfig::kEvDim, rng);
  for (int l = 0; l < config.layers; ++l) {
    detail::init_layer(p.node_layers[l], h, rng);
    detail::init_layer(p.ev_layers[l], h, rng);
  }
  detail::init_uniform(p.wq_ptr, h, rng);
  detail::init_uniform(p.wk_ptr, h, rng);
  return p;
}

/// Same shapes as `like`, every entry zero. Used for gradients and optimizer
/// state.
inline PolicyParams zeros_like(const PolicyParams& like) {
  PolicyParams z = like;
  z.for_each_array([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

/// dst += scale * src over every array.
inline void add_scaled(PolicyParams& dst, const PolicyParams& src, double scale) {
  std::vector<Matrix*> dsts;
  dst.for_each_array([&](const std::string&, Matrix& m) { dsts.push_back(&m); });
  std::vector<const Matrix*> srcs;
  src.for_each_array([&](const std::string&, const Matrix& m) { srcs.push_back(&m); });
  for (std::size_t i = 0; i < dsts.size(); ++i) *dsts[i] += scale * *srcs[i];
}

inline double max_abs(const PolicyParams& p) {
  double m = 0.0;
  p.for_each_array([&](const std::string&, const Matrix& a) {
    if (a.size() > 0) m = std::max(m, a.cwiseAbs().maxCoeff());
  });
  return m;
}

}  // namespace evrpeps
