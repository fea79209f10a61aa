#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "evrpeps/policy_params.hpp"

namespace evrpeps {

using Vector = Eigen::VectorXd;

namespace nn {

inline void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

constexpr double kLnEps = 1e-5;

/// y = gamma * (x - mean) / sqrt(var + eps) + beta, per row.
inline Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, Matrix* xhat_out,
                         Vector* inv_std_out) {
  const Eigen::Index n = x.rows(), h = x.cols();
  Matrix xhat(n, h);
  Vector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(r) = (x.row(r).array() - mean) * inv;
    inv_std(r) = inv;
  }
  Matrix y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return y;
}

/// Backward of layer_norm. Returns dx; accumulates dg, db.
inline Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& inv_std,
                                  const Matrix& g, Matrix& dg, Matrix& db) {
  dg += (dy.array() * xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * g.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
    dx.row(r) = ((dxhat.row(r).array() - m1) - xhat.row(r).array() * m2) * inv_std(r);
  }
  return dx;
}

struct LayerCache {
  Matrix x_in;
  Matrix q, k, v;
  std::vector<Matrix> attn;  // per head, rows are softmax distributions
  Matrix z;                  // concatenated head outputs, before the output projection
  Matrix ln1_xhat, x_mid, ff_pre, ln2_xhat;
  Vector ln1_inv_std, ln2_inv_std;
};

inline Matrix encoder_layer_forward(const EncoderLayerParams& p, const Matrix& x, int heads,
                                    LayerCache* cache) {
  const Eigen::Index n = x.rows(), h = x.cols();
  const Eigen::Index dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix q = (x * p.wq).rowwise() + p.bq.row(0);
  Matrix k = (x * p.wk).rowwise() + p.bk.row(0);
  Matrix v = (x * p.wv).rowwise() + p.bv.row(0);

  Matrix z(n, h);
  std::vector<Matrix> attn(heads);
  for (int head = 0; head < heads; ++head) {
    const auto qh = q.middleCols(head * dh, dh);
    const auto kh = k.middleCols(head * dh, dh);
    const auto vh = v.middleCols(head * dh, dh);
    Matrix a = qh * kh.transpose() * scale;
    softmax_rows(a);
    z.middleCols(head * dh, dh).noalias() = a * vh;
    attn[head] = std::move(a);
  }

  Matrix res1 = x + ((z * p.wo).rowwise() + p.bo.row(0));
  Matrix ln1_xhat;
  Vector ln1_inv;
  Matrix x_mid = layer_norm(res1, p.ln1_g, p.ln1_b, cache ? &ln1_xhat : nullptr,
                            cache ? &ln1_inv : nullptr);

  Matrix ff_pre = (x_mid * p.w1).rowwise() + p.b1.row(0);
  Matrix ff = (ff_pre.cwiseMax(0.0) * p.w2).rowwise() + p.b2.row(0);
  Matrix res2 = x_mid + ff;
  Matrix ln2_xhat;
  Vector ln2_inv;
  Matrix out = layer_norm(res2, p.ln2_g, p.ln2_b, cache ? &ln2_xhat : nullptr,
                          cache ? &ln2_inv : nullptr);

  if (cache) {
    cache->x_in = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->z = std::move(z);
    cache->ln1_xhat = std::move(ln1_xhat);
    cache->ln1_inv_std = std::move(ln1_inv);
    cache->x_mid = std::move(x_mid);
    cache->ff_pre = std::move(ff_pre);
    cache->ln2_xhat = std::move(ln2_xhat);
    cache->ln2_inv_std = std::move(ln2_inv);
  }
  return out;
}

/// Backward of one encoder layer. Returns dx_in; accumulates into `grads`.
inline Matrix encoder_layer_backward(const EncoderLayerParams& p, const LayerCache& c, int heads,
                                     const Matrix& dout, EncoderLayerParams& grads) {
  const Eigen::Index h = dout.cols();
  const Eigen::Index dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // ln2 -> residual (x_mid + ff)
  Matrix dres2 =
      layer_norm_backward(dout, c.ln2_xhat, c.ln2_inv_std, p.ln2_g, grads.ln2_g, grads.ln2_b);

  // feed-forward
  Matrix act = c.ff_pre.cwiseMax(0.0);
  grads.w2.noalias() += act.transpose() * dres2;
  grads.b2 += dres2.colwise().sum();
  Matrix dact = dres2 * p.w2.transpose();
  Matrix dpre = (c.ff_pre.array() > 0.0).cast<double>() * dact.array();
  grads.w1.noalias() += c.x_mid.transpose() * dpre;
  grads.b1 += dpre.colwise().sum();
  Matrix dx_mid = dres2 + dpre * p.w1.transpose();

  // ln1 -> residual (x_in + attn_out)
  Matrix dres1 =
      layer_norm_backward(dx_mid, c.ln1_xhat, c.ln1_inv_std, p.ln1_g, grads.ln1_g, grads.ln1_b);

  // output projection
  grads.wo.noalias() += c.z.transpose() * dres1;
  grads.bo += dres1.colwise().sum();
  Matrix dz = dres1 * p.wo.transpose();

  // heads
  Matrix dq = Matrix::Zero(dout.rows(), h);
  Matrix dk = Matrix::Zero(dout.rows(), h);
  Matrix dv = Matrix::Zero(dout.rows(), h);
  for (int head = 0; head < heads; ++head) {
    const auto a = c.attn[head];
    const auto qh = c.q.middleCols(head * dh, dh);
    const auto kh = c.k.middleCols(head * dh, dh);
    const auto vh = c.v.middleCols(head * dh, dh);
    const Matrix dzh = dz.middleCols(head * dh, dh);
    Matrix da = dzh * vh.transpose();
    dv.middleCols(head * dh, dh).noalias() = a.transpose() * dzh;
    // softmax rows backward
    Matrix ds = a.array() * (da.array().colwise() - (da.array() * a.array()).rowwise().sum());
    dq.middleCols(head * dh, dh).noalias() = ds * kh * scale;
    dk.middleCols(head * dh, dh).noalias() = ds.transpose() * qh * scale;
  }

  grads.wq.noalias() += c.x_in.transpose() * dq;
  grads.bq += dq.colwise().sum();
  grads.wk.noalias() += c.x_in.transpose() * dk;
  grads.bk += dk.colwise().sum();
  grads.wv.noalias() += c.x_in.transpose() * dv;
  grads.bv += dv.colwise().sum();

  Matrix dx = dres1;  // residual shortcut
  dx.noalias() += dq * p.wq.transpose();
  dx.noalias() += dk * p.wk.transpose();
  dx.noalias() += dv * p.wv.transpose();
  return dx;
}

}  // namespace nn

struct TowerCache {
  std::vector<nn::LayerCache> layers;
};

/// Stacks the tower's encoder layers over the initial embeddings.
inline Matrix tower_forward(const std::vector<EncoderLayerParams>& layers, Matrix x, int heads,
                            TowerCache* cache) {
  if (cache) cache->layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l)
    x = nn::encoder_layer_forward(layers[l], x, heads, cache ? &cache->layers[l] : nullptr);
  return x;
}

struct EncoderOutputs {
  Matrix nodes;  // N x H final node embeddings (base stations first)
  Matrix evs;    // K x H final EV embeddings
};

struct EncoderCaches {
  Matrix node_x0, ev_x0;
  TowerCache node, ev;
};

/// Initial linear embeddings followed by the two independent towers.
inline EncoderOutputs encoder_forward(const PolicyParams& p, const Matrix& bs_feats,
                                      const Matrix& cs_feats, const Matrix& ev_feats,
                                      EncoderCaches* cache = nullptr) {
  const int h = p.config.hidden;
  Matrix node0(bs_feats.rows() + cs_feats.rows(), h);
  if (bs_feats.rows() > 0)
    node0.topRows(bs_feats.rows()) = (bs_feats * p.w_bs).rowwise() + p.b_bs.row(0);
  if (cs_feats.rows() > 0)
    node0.bottomRows(cs_feats.rows()) = (cs_feats * p.w_cs).rowwise() + p.b_cs.row(0);
  Matrix ev0 = (ev_feats * p.w_ev).rowwise() + p.b_ev.row(0);
  if (cache) {
    cache->node_x0 = node0;
    cache->ev_x0 = ev0;
  }
  EncoderOutputs out;
  out.nodes = tower_forward(p.node_layers, std::move(node0), p.config.heads,
                            cache ? &cache->node : nullptr);
  out.evs =
      tower_forward(p.ev_layers, std::move(ev0), p.config.heads, cache ? &cache->ev : nullptr);
  return out;
}

/// Pointer head output for one decision: clipped compatibility logits over
/// visitable nodes, the induced distribution, and the log-normalizer.
struct PolicyEval {
  Vector logits;      // finite only where visitable
  Vector probs;       // exactly 0 where masked
  std::vector<char> mask;
  double logsumexp = 0.0;

  double log_prob(int node) const { return logits(node) - logsumexp; }
};

struct PointerCache {
  Matrix q;          // 1 x H
  Matrix keys;       // N x H
  Vector pre_tanh;   // N
  EncoderCaches enc;
  EncoderOutputs outs;
};

/// Softmax restricted to unmasked entries: masked nodes never enter the
/// normalizer, so their probability is exactly 0. Returns (probs, logsumexp).
inline std::pair<Vector, double> node_distribution(const Vector& logits,
                                                   const std::vector<char>& mask) {
  const int n = static_cast<int>(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    if (mask[i]) mx = std::max(mx, logits(i));
  if (!std::isfinite(mx)) throw SimError("node_distribution: every node is masked");
  double z = 0.0;
  for (int i = 0; i < n; ++i)
    if (mask[i]) z += std::exp(logits(i) - mx);
  const double lse = mx + std::log(z);
  Vector probs = Vector::Zero(n);
  for (int i = 0; i < n; ++i)
    if (mask[i]) probs(i) = std::exp(logits(i) - lse);
  return {std::move(probs), lse};
}

/// eta * tanh(q . k_n / sqrt(d)) for visitable n, -inf otherwise.
inline PolicyEval pointer_eval(const PolicyParams& p, const Matrix& node_embeds,
                               const Matrix& ev_embed_row, const std::vector<char>& mask,
                               PointerCache* cache = nullptr) {
  const int n = static_cast<int>(node_embeds.rows());
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.config.hidden));
  Matrix q = ev_embed_row * p.wq_ptr;              // 1 x H
  Matrix keys = node_embeds * p.wk_ptr;            // N x H
  Vector pre = (keys * q.transpose()).col(0) * scale;

  PolicyEval eval;
  eval.mask = mask;
  eval.logits.resize(n);
  for (int i = 0; i < n; ++i)
    eval.logits(i) = mask[i] ? p.config.logit_clip * std::tanh(pre(i))
                             : -std::numeric_limits<double>::infinity();
  auto [probs, lse] = node_distribution(eval.logits, mask);
  eval.probs = std::move(probs);
  eval.logsumexp = lse;

  if (cache) {
    cache->q = std::move(q);
    cache->keys = std::move(keys);
    cache->pre_tanh = std::move(pre);
  }
  return eval;
}

/// Full forward pass for one decision context.
inline PolicyEval policy_forward(const PolicyParams& p, const DecisionContext& ctx,
                                 PointerCache* cache = nullptr) {
  EncoderOutputs outs = encoder_forward(p, ctx.bs_feats, ctx.cs_feats, ctx.ev_feats,
                                        cache ? &cache->enc : nullptr);
  PolicyEval eval =
      pointer_eval(p, outs.nodes, outs.evs.row(ctx.selected_ev), ctx.mask, cache);
  if (cache) cache->outs = std::move(outs);
  return eval;
}

enum class DecodeMode { Greedy, Sample };

/// Greedy: argmax (ties to the lowest index). Sample: categorical draw.
/// Returns the node and its log-probability.
inline std::pair<int, double> sample_action(const PolicyEval& eval, DecodeMode mode, Rng* rng) {
  const int n = static_cast<int>(eval.probs.size());
  int chosen = -1;
  if (mode == DecodeMode::Greedy) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (!eval.mask[i]) continue;
      if (eval.probs(i) > best) {
        best = eval.probs(i);
        chosen = i;
      }
    }
  } else {
    const double r = rng->next_double();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!eval.mask[i]) continue;
      acc += eval.probs(i);
      if (r < acc) {
        chosen = i;
        break;
      }
    }
    if (chosen < 0) {  // r landed in the rounding tail; take the last visitable
      for (int i = n - 1; i >= 0; --i)
        if (eval.mask[i]) {
          chosen = i;
          break;
        }
    }
  }
  if (chosen < 0) throw SimError("sample_action: no visitable node");
  return {chosen, eval.log_prob(chosen)};
}

/// One recorded rollout's decision contexts, chosen nodes filled in.
struct Episode {
  std::vector<DecisionContext> decisions;
};

/// Accumulates weight * d(sum log p)/d(theta) into `grads` and returns the
/// episode's summed log-probability. Exact reverse-mode differentiation of the
/// forward graph.
inline double accumulate_logprob_gradient(const PolicyParams& p, const Episode& episode,
                                          double weight, PolicyParams& grads) {
  const int heads = p.config.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.config.hidden));
  double total_logprob = 0.0;

  for (const DecisionContext& ctx : episode.decisions) {
    PointerCache cache;
    const PolicyEval eval = policy_forward(p, ctx, &cache);
    total_logprob += eval.log_prob(ctx.chosen_node);

    const int n = static_cast<int>(eval.probs.size());
    // d logp / d logits = onehot(chosen) - probs, restricted to visitable
    Vector dlogit = -eval.probs * weight;
    dlogit(ctx.chosen_node) += weight;

    // through the tanh clip
    Vector dpre(n);
    for (int i = 0; i < n; ++i) {
      if (!ctx.mask[i]) {
        dpre(i) = 0.0;
        continue;
      }
      const double t = std::tanh(cache.pre_tanh(i));
      dpre(i) = dlogit(i) * p.config.logit_clip * (1.0 - t * t);
    }

    // pre = keys * q^T * scale
    Matrix dq = (dpre.transpose() * cache.keys) * scale;        // 1 x H
    Matrix dkeys = (dpre * cache.q) * scale;                    // N x H
    const Matrix ev_row = cache.outs.evs.row(ctx.selected_ev);
    grads.wq_ptr.noalias() += ev_row.transpose() * dq;
    grads.wk_ptr.noalias() += cache.outs.nodes.transpose() * dkeys;

    Matrix dnodes = dkeys * p.wk_ptr.transpose();
    Matrix devs = Matrix::Zero(cache.outs.evs.rows(), cache.outs.evs.cols());
    devs.row(ctx.selected_ev) = dq * p.wq_ptr.transpose();

    // towers, top layer down
    for (int l = static_cast<int>(p.node_layers.size()) - 1; l >= 0; --l)
      dnodes = nn::encoder_layer_backward(p.node_layers[l], cache.enc.node.layers[l], heads,
                                          dnodes, grads.node_layers[l]);
    for (int l = static_cast<int>(p.ev_layers.size()) - 1; l >= 0; --l)
      devs = nn::encoder_layer_backward(p.ev_layers[l], cache.enc.ev.layers[l], heads, devs,
                                        grads.ev_layers[l]);

    // initial embeddings
    const Eigen::Index nb = ctx.bs_feats.rows(), nc = ctx.cs_feats.rows();
    if (nb > 0) {
      grads.w_bs.noalias() += ctx.bs_feats.transpose() * dnodes.topRows(nb);
      grads.b_bs += dnodes.topRows(nb).colwise().sum();
    }
    if (nc > 0) {
      grads.w_cs.noalias() += ctx.cs_feats.transpose() * dnodes.bottomRows(nc);
      grads.b_cs += dnodes.bottomRows(nc).colwise().sum();
    }
    grads.w_ev.noalias() += ctx.ev_feats.transpose() * devs;
    grads.b_ev += devs.colwise().sum();
  }
  return total_logprob;
}

/// Gradient of the summed log-probability of the episode's chosen actions.
inline PolicyParams logprob_gradient(const PolicyParams& p, const Episode& episode) {
  PolicyParams grads = zeros_like(p);
  accumulate_logprob_gradient(p, episode, 1.0, grads);
  return grads;
}

}  // namespace evrpeps
