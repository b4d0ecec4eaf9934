#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "pcac/nn.hpp"
#include "pcac/sampling.hpp"
#include "pcac/types.hpp"

// Neighborhood attention operators. Point neighborhoods are stored flattened:
// an n-group, k-neighbor batch is an (n*k)-row matrix whose row i*k+j is
// neighbor j of group i. All backward functions accumulate into Tensor::g and
// never differentiate with respect to point positions (geometry is fixed).

namespace pcac {

namespace detail {

inline void check_groups(Index rows, Index k, const char* who) {
  if (k < 1) throw PreconditionError(std::string(who) + ": group size must be positive");
  if (rows % k != 0)
    throw PreconditionError(std::string(who) + ": row count not a multiple of group size");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scaled dot-product self-attention inside each k-row group.

template <typename Scalar>
struct SelfAttentionParams {
  Tensor<Scalar> wq, bq;  // 3 -> width
  Tensor<Scalar> wk, bk;  // 3 -> width
  Tensor<Scalar> wv;      // 3 -> width; bias-free so zero inputs map to zero

  Index width() const { return wq.v.cols(); }
  void resize(Index width) {
    wq.resize(3, width);
    bq.resize(1, width);
    wk.resize(3, width);
    bk.resize(1, width);
    wv.resize(3, width);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + ".wq", wq);
    f(p + ".bq", bq);
    f(p + ".wk", wk);
    f(p + ".bk", bk);
    f(p + ".wv", wv);
  }
};

template <typename Scalar>
struct SelfAttentionCache {
  MatX<Scalar> q, k, v;
  MatX<Scalar> attn;  // row block i holds the k×k weight matrix of group i
};

/// x: (n*k)×3 relative positions. Returns (n*k)×width refined features.
template <typename Scalar>
MatX<Scalar> self_attention_forward(const MatX<Scalar>& x, Index k,
                                    const SelfAttentionParams<Scalar>& p,
                                    SelfAttentionCache<Scalar>* cache = nullptr) {
  detail::check_groups(x.rows(), k, "self_attention_forward");
  const Index n = x.rows() / k;
  const Index d = p.width();
  MatX<Scalar> q = affine(x, p.wq, p.bq);
  MatX<Scalar> kk = affine(x, p.wk, p.bk);
  MatX<Scalar> v = x * p.wv.v;
  MatX<Scalar> attn(x.rows(), k);
  MatX<Scalar> out(x.rows(), d);
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  for (Index i = 0; i < n; ++i) {
    auto ag = attn.middleRows(i * k, k);
    ag.noalias() = q.middleRows(i * k, k) * kk.middleRows(i * k, k).transpose();
    ag *= inv_sqrt_d;
    for (Index r = 0; r < k; ++r) {
      auto row = ag.row(r);
      row = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    out.middleRows(i * k, k).noalias() = ag * v.middleRows(i * k, k);
  }
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(kk);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
  }
  return out;
}

template <typename Scalar>
void self_attention_backward(const MatX<Scalar>& d_out, const MatX<Scalar>& x, Index k,
                             SelfAttentionParams<Scalar>& p,
                             const SelfAttentionCache<Scalar>& c) {
  const Index n = x.rows() / k;
  const Index d = p.width();
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  MatX<Scalar> dq(x.rows(), d), dk(x.rows(), d), dv(x.rows(), d);
  MatX<Scalar> da(k, k), dz(k, k);
  for (Index i = 0; i < n; ++i) {
    auto a = c.attn.middleRows(i * k, k);
    auto go = d_out.middleRows(i * k, k);
    da.noalias() = go * c.v.middleRows(i * k, k).transpose();
    dv.middleRows(i * k, k).noalias() = a.transpose() * go;
    for (Index r = 0; r < k; ++r) {
      const Scalar dot = da.row(r).cwiseProduct(a.row(r)).sum();
      dz.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
    }
    dq.middleRows(i * k, k).noalias() = dz * c.k.middleRows(i * k, k) * inv_sqrt_d;
    dk.middleRows(i * k, k).noalias() = dz.transpose() * c.q.middleRows(i * k, k) * inv_sqrt_d;
  }
  affine_backward(dq, x, p.wq, &p.bq);
  affine_backward(dk, x, p.wk, &p.bk);
  p.wv.g.noalias() += x.transpose() * dv;
}

// ---------------------------------------------------------------------------
// Two-layer ReLU MLP.

template <typename Scalar>
struct MlpParams {
  Tensor<Scalar> w1, b1, w2, b2;

  void resize(Index in, Index hidden, Index out) {
    w1.resize(in, hidden);
    b1.resize(1, hidden);
    w2.resize(hidden, out);
    b2.resize(1, out);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + ".w1", w1);
    f(p + ".b1", b1);
    f(p + ".w2", w2);
    f(p + ".b2", b2);
  }
};

template <typename Scalar>
struct MlpCache {
  MatX<Scalar> z1;  // pre-activation of the hidden layer
};

template <typename Scalar>
MatX<Scalar> mlp_forward(const MatX<Scalar>& x, const MlpParams<Scalar>& p,
                         MlpCache<Scalar>* cache = nullptr) {
  MatX<Scalar> z1 = affine(x, p.w1, p.b1);
  MatX<Scalar> y = affine(z1.cwiseMax(Scalar(0)), p.w2, p.b2);
  if (cache) cache->z1 = std::move(z1);
  return y;
}

template <typename Scalar>
MatX<Scalar> mlp_backward(const MatX<Scalar>& d_out, const MatX<Scalar>& x,
                          MlpParams<Scalar>& p, const MlpCache<Scalar>& c) {
  MatX<Scalar> dh = affine_backward(d_out, c.z1.cwiseMax(Scalar(0)).eval(), p.w2, &p.b2);
  MatX<Scalar> dz1 =
      dh.cwiseProduct((c.z1.array() > Scalar(0)).template cast<Scalar>().matrix());
  return affine_backward(dz1, x, p.w1, &p.b1);
}

// ---------------------------------------------------------------------------
// Positional modulation: turns each neighborhood's relative positions into a
// multiplicative scale and an additive bias per (neighbor, channel). Each of
// the two maps is its own self-attention stage followed by an MLP.

template <typename Scalar>
struct PositionEmbedParams {
  SelfAttentionParams<Scalar> attn_scale, attn_bias;
  MlpParams<Scalar> mlp_scale, mlp_bias;

  void resize(Index width, Index channels) {
    attn_scale.resize(width);
    attn_bias.resize(width);
    mlp_scale.resize(width, width, channels);
    mlp_bias.resize(width, width, channels);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) {
    attn_scale.visit(p + ".attn_scale", f);
    mlp_scale.visit(p + ".mlp_scale", f);
    attn_bias.visit(p + ".attn_bias", f);
    mlp_bias.visit(p + ".mlp_bias", f);
  }
};

template <typename Scalar>
struct PositionEmbedCache {
  SelfAttentionCache<Scalar> a_scale, a_bias;
  MlpCache<Scalar> m_scale, m_bias;
  MatX<Scalar> y_scale, y_bias;  // attention outputs, the MLP inputs
};

template <typename Scalar>
void position_embed_forward(const MatX<Scalar>& x, Index k, const PositionEmbedParams<Scalar>& p,
                            MatX<Scalar>& scale, MatX<Scalar>& bias,
                            PositionEmbedCache<Scalar>* cache = nullptr) {
  MatX<Scalar> ys = self_attention_forward(x, k, p.attn_scale, cache ? &cache->a_scale : nullptr);
  MatX<Scalar> yb = self_attention_forward(x, k, p.attn_bias, cache ? &cache->a_bias : nullptr);
  scale = mlp_forward(ys, p.mlp_scale, cache ? &cache->m_scale : nullptr);
  bias = mlp_forward(yb, p.mlp_bias, cache ? &cache->m_bias : nullptr);
  if (cache) {
    cache->y_scale = std::move(ys);
    cache->y_bias = std::move(yb);
  }
}

template <typename Scalar>
void position_embed_backward(const MatX<Scalar>& d_scale, const MatX<Scalar>& d_bias,
                             const MatX<Scalar>& x, Index k, PositionEmbedParams<Scalar>& p,
                             const PositionEmbedCache<Scalar>& c) {
  MatX<Scalar> dys = mlp_backward(d_scale, c.y_scale, p.mlp_scale, c.m_scale);
  MatX<Scalar> dyb = mlp_backward(d_bias, c.y_bias, p.mlp_bias, c.m_bias);
  self_attention_backward(dys, x, k, p.attn_scale, c.a_scale);
  self_attention_backward(dyb, x, k, p.attn_bias, c.a_bias);
}

// ---------------------------------------------------------------------------
// Cross attention: features of the k neighbors of each point are mixed into
// one output row per point. The attention weight is computed per channel
// (softmax runs over the k neighbors of each group, separately per channel),
// gated by the positional scale/bias.

template <typename Scalar>
struct CrossAttentionParams {
  Tensor<Scalar> wq, bq;  // query from the relative position: 3 -> channels
  Tensor<Scalar> wk, bk;  // key from the neighbor feature: in_channels -> channels
  Tensor<Scalar> wv;      // value map; bias-free so padded zero rows stay zero
  PositionEmbedParams<Scalar> pos;
  Tensor<Scalar> wo, bo;  // output projection: channels -> channels

  Index channels() const { return wq.v.cols(); }
  Index in_channels() const { return wk.v.rows(); }
  void resize(Index in_channels, Index channels, Index width) {
    wq.resize(3, channels);
    bq.resize(1, channels);
    wk.resize(in_channels, channels);
    bk.resize(1, channels);
    wv.resize(in_channels, channels);
    pos.resize(width, channels);
    wo.resize(channels, channels);
    bo.resize(1, channels);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + ".wq", wq);
    f(p + ".bq", bq);
    f(p + ".wk", wk);
    f(p + ".bk", bk);
    f(p + ".wv", wv);
    pos.visit(p + ".pos", f);
    f(p + ".wo", wo);
    f(p + ".bo", bo);
  }
};

template <typename Scalar>
struct CrossAttentionCache {
  PositionEmbedCache<Scalar> pos;
  MatX<Scalar> pm, pb;   // positional scale / bias
  MatX<Scalar> diff;     // key minus query, before gating
  MatX<Scalar> vf;       // projected neighbor values
  MatX<Scalar> scores;   // attention weights; every k-segment of a column sums to 1
  MatX<Scalar> agg;      // pooled features entering the output projection
};

/// In-place softmax over every k-row segment of each column.
template <typename Scalar>
void softmax_over_groups(MatX<Scalar>& m, Index k) {
  detail::check_groups(m.rows(), k, "softmax_over_groups");
  const Index n = m.rows() / k;
  for (Index c = 0; c < m.cols(); ++c)
    for (Index i = 0; i < n; ++i) {
      auto seg = m.col(c).segment(i * k, k);
      seg = (seg.array() - seg.maxCoeff()).exp();
      seg /= seg.sum();
    }
}

/// f_nbr: (n*k)×in_channels gathered neighbor features; x: (n*k)×3 relative
/// positions. Returns n×channels mixed features.
template <typename Scalar>
MatX<Scalar> cross_attention_forward(const MatX<Scalar>& f_nbr, const MatX<Scalar>& x, Index k,
                                     const CrossAttentionParams<Scalar>& p,
                                     CrossAttentionCache<Scalar>* cache = nullptr) {
  detail::check_groups(f_nbr.rows(), k, "cross_attention_forward");
  if (f_nbr.rows() != x.rows())
    throw PreconditionError("cross_attention_forward: feature/position row mismatch");
  if (f_nbr.cols() != p.in_channels())
    throw PreconditionError("cross_attention_forward: feature width mismatch");
  const Index n = f_nbr.rows() / k;
  const Index ch = p.channels();

  MatX<Scalar> pm, pb;
  position_embed_forward(x, k, p.pos, pm, pb, cache ? &cache->pos : nullptr);
  MatX<Scalar> diff = affine(f_nbr, p.wk, p.bk) - affine(x, p.wq, p.bq);
  MatX<Scalar> vf = f_nbr * p.wv.v;
  MatX<Scalar> scores = diff.cwiseProduct(pm) + pb;
  softmax_over_groups(scores, k);
  MatX<Scalar> mixed = (vf + pb).cwiseProduct(scores);
  MatX<Scalar> agg(n, ch);
  for (Index i = 0; i < n; ++i) agg.row(i) = mixed.middleRows(i * k, k).colwise().sum();
  MatX<Scalar> out = affine(agg, p.wo, p.bo);
  if (cache) {
    cache->pm = std::move(pm);
    cache->pb = std::move(pb);
    cache->diff = std::move(diff);
    cache->vf = std::move(vf);
    cache->scores = std::move(scores);
    cache->agg = std::move(agg);
  }
  return out;
}

/// Returns dL/d f_nbr; parameter gradients accumulate into p.
template <typename Scalar>
MatX<Scalar> cross_attention_backward(const MatX<Scalar>& d_out, const MatX<Scalar>& f_nbr,
                                      const MatX<Scalar>& x, Index k,
                                      CrossAttentionParams<Scalar>& p,
                                      const CrossAttentionCache<Scalar>& c) {
  const Index n = f_nbr.rows() / k;
  MatX<Scalar> d_agg = affine_backward(d_out, c.agg, p.wo, &p.bo);
  // pooling broadcast: every row of a group receives the group's gradient
  MatX<Scalar> d_mixed(f_nbr.rows(), c.agg.cols());
  for (Index i = 0; i < n; ++i) d_mixed.middleRows(i * k, k) = d_agg.row(i).replicate(k, 1);

  MatX<Scalar> d_vf = d_mixed.cwiseProduct(c.scores);
  MatX<Scalar> d_pb = d_vf;
  MatX<Scalar> d_scores = d_mixed.cwiseProduct(c.vf + c.pb);
  // softmax segments: d_pre = s ∘ (d_s − <d_s, s>)
  MatX<Scalar> d_pre(d_scores.rows(), d_scores.cols());
  for (Index col = 0; col < d_scores.cols(); ++col)
    for (Index i = 0; i < n; ++i) {
      auto s = c.scores.col(col).segment(i * k, k);
      auto ds = d_scores.col(col).segment(i * k, k);
      const Scalar dot = ds.cwiseProduct(s).sum();
      d_pre.col(col).segment(i * k, k) = (s.array() * (ds.array() - dot)).matrix();
    }
  MatX<Scalar> d_kf = d_pre.cwiseProduct(c.pm);
  MatX<Scalar> d_pm = d_pre.cwiseProduct(c.diff);
  d_pb += d_pre;

  MatX<Scalar> d_fnbr = affine_backward(d_kf, f_nbr, p.wk, &p.bk);
  d_fnbr.noalias() += d_vf * p.wv.v.transpose();
  p.wv.g.noalias() += f_nbr.transpose() * d_vf;
  affine_backward(MatX<Scalar>(-d_kf), x, p.wq, &p.bq);  // query path; dx discarded
  position_embed_backward(d_pm, d_pb, x, k, p.pos, c.pos);
  return d_fnbr;
}

// ---------------------------------------------------------------------------
// Full layer: gather neighbor features by index, run cross attention.

template <typename Scalar>
struct AttentionLayerCache {
  MatX<Scalar> f_nbr;
  CrossAttentionCache<Scalar> attn;
};

template <typename Scalar>
MatX<Scalar> attention_layer_forward(const MatX<Scalar>& features, const IndexMat& nbh,
                                     const MatX<Scalar>& rel_pos,
                                     const CrossAttentionParams<Scalar>& p,
                                     AttentionLayerCache<Scalar>* cache = nullptr) {
  MatX<Scalar> f_nbr = group(features, nbh);
  MatX<Scalar> out = cross_attention_forward(f_nbr, rel_pos, nbh.cols(), p,
                                             cache ? &cache->attn : nullptr);
  if (cache) cache->f_nbr = std::move(f_nbr);
  return out;
}

/// Returns dL/d features (n_in rows). n_in must equal the feature row count
/// that was passed to the forward call.
template <typename Scalar>
MatX<Scalar> attention_layer_backward(const MatX<Scalar>& d_out, const IndexMat& nbh,
                                      const MatX<Scalar>& rel_pos, Index n_in,
                                      CrossAttentionParams<Scalar>& p,
                                      const AttentionLayerCache<Scalar>& c) {
  MatX<Scalar> d_fnbr =
      cross_attention_backward(d_out, c.f_nbr, rel_pos, nbh.cols(), p, c.attn);
  MatX<Scalar> d_features = MatX<Scalar>::Zero(n_in, d_fnbr.cols());
  scatter_add(d_fnbr, nbh, d_features);
  return d_features;
}

/// Self-contained variant: derives both the neighbor indices and the relative
/// positions from a k-NN of `positions` against itself.
template <typename Scalar>
MatX<Scalar> attention_layer(const Mat3<double>& positions, const MatX<Scalar>& features,
                             Index k, const CrossAttentionParams<Scalar>& p) {
  if (positions.rows() != features.rows())
    throw PreconditionError("attention layer: positions/features row count mismatch");
  const Neighborhood<double> nbh = knn<double>(positions, positions, k);
  const MatX<Scalar> rel = nbh.rel_pos.template cast<Scalar>();
  return attention_layer_forward(features, nbh.indices, rel, p);
}

}  // namespace pcac
