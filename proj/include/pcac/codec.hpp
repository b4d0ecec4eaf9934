#pragma once

#include <string>
#include <vector>

#include "pcac/attention.hpp"
#include "pcac/nn.hpp"
#include "pcac/pointcloud.hpp"
#include "pcac/sampling.hpp"
#include "pcac/types.hpp"

namespace pcac {

constexpr Index kDefaultPatchSize = 2048;

/// Architecture knobs. The attention width of the positional stages equals
/// `channels`. Patch size must be divisible by sample_ratio^num_scales.
struct CodecConfig {
  Index num_scales = 2;        // downsampling blocks in the encoder
  Index sample_ratio = 4;      // point count shrink factor per block
  Index layers_per_block = 2;  // attention layers per block
  Index channels = 256;        // feature width
  Index k_neighbors = 16;      // neighborhood size
  Index latent_channels = 16;  // transmitted feature width
};

inline Index pow_index(Index base, Index exp) {
  Index r = 1;
  for (Index i = 0; i < exp; ++i) r *= base;
  return r;
}

inline void validate(const CodecConfig& cfg, Index patch_size = kDefaultPatchSize) {
  if (cfg.num_scales < 1 || cfg.sample_ratio < 2 || cfg.layers_per_block < 1 ||
      cfg.channels < 1 || cfg.k_neighbors < 1 || cfg.latent_channels < 1)
    throw PreconditionError("codec config fields must be positive (sample_ratio >= 2)");
  const Index shrink = pow_index(cfg.sample_ratio, cfg.num_scales);
  if (patch_size % shrink != 0)
    throw PreconditionError("patch size " + std::to_string(patch_size) +
                            " not divisible by sample_ratio^num_scales = " +
                            std::to_string(shrink));
  if (cfg.k_neighbors > patch_size / shrink)
    throw PreconditionError("k_neighbors exceeds the coarsest level size");
}

// ---------------------------------------------------------------------------
// Geometry side: both ends derive the same multiscale structure from the
// transmitted positions, so no sampling information is ever signaled.

/// levels[0] is the input; levels[s+1] keeps rows select[s] of levels[s],
/// chosen by farthest point sampling.
template <typename Scalar>
struct ScalePyramid {
  std::vector<Mat3<Scalar>> levels;
  std::vector<IndexVec> select;

  Index num_scales() const { return static_cast<Index>(select.size()); }
};

template <typename Scalar>
ScalePyramid<Scalar> build_pyramid(const Mat3<Scalar>& positions, Index num_scales,
                                   Index sample_ratio) {
  if (num_scales < 1 || sample_ratio < 2)
    throw PreconditionError("build_pyramid: need num_scales >= 1 and sample_ratio >= 2");
  if (positions.rows() % pow_index(sample_ratio, num_scales) != 0)
    throw PreconditionError("build_pyramid: point count not divisible by ratio^scales");
  ScalePyramid<Scalar> pyr;
  pyr.levels.push_back(positions);
  for (Index s = 0; s < num_scales; ++s) {
    const Mat3<Scalar>& cur = pyr.levels.back();
    IndexVec sel = fps(cur, cur.rows() / sample_ratio);
    Mat3<Scalar> next(static_cast<Index>(sel.size()), 3);
    for (size_t j = 0; j < sel.size(); ++j) next.row(static_cast<Index>(j)) = cur.row(sel[j]);
    pyr.select.push_back(std::move(sel));
    pyr.levels.push_back(std::move(next));
  }
  return pyr;
}

/// Precomputed per-patch geometry: the pyramid plus, for levels 0..S-1, the
/// in-level k-NN indices and relative positions cast to the compute scalar.
/// Built once per patch and shared by the encoder, the decoder, and every
/// training step.
template <typename Scalar>
struct GeometryContext {
  ScalePyramid<double> pyramid;
  std::vector<IndexMat> nbh;        // per level, N_s x k
  std::vector<MatX<Scalar>> rel_pos;  // per level, (N_s*k) x 3
};

template <typename Scalar>
GeometryContext<Scalar> make_geometry_context(const Mat3<double>& positions,
                                              const CodecConfig& cfg) {
  validate(cfg, positions.rows());
  GeometryContext<Scalar> ctx;
  ctx.pyramid = build_pyramid(positions, cfg.num_scales, cfg.sample_ratio);
  for (Index s = 0; s < cfg.num_scales; ++s) {
    const Mat3<double>& lvl = ctx.pyramid.levels[static_cast<size_t>(s)];
    Neighborhood<double> nb = knn(lvl, lvl, cfg.k_neighbors);
    ctx.nbh.push_back(std::move(nb.indices));
    ctx.rel_pos.push_back(nb.rel_pos.template cast<Scalar>());
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Model.

template <typename Scalar>
struct Model {
  CodecConfig cfg;
  Tensor<Scalar> lift_w, lift_b;          // colors (3) -> channels
  std::vector<CrossAttentionParams<Scalar>> enc_layers;  // num_scales * layers_per_block
  Tensor<Scalar> enc_head_w, enc_head_b;  // channels -> latent_channels
  Tensor<Scalar> dec_lift_w, dec_lift_b;  // latent_channels -> channels
  std::vector<CrossAttentionParams<Scalar>> dec_layers;  // in application order
  Tensor<Scalar> dec_head_w, dec_head_b;  // channels -> colors (3)

  template <typename F>
  void visit(F&& f) {
    f("lift.w", lift_w);
    f("lift.b", lift_b);
    for (size_t i = 0; i < enc_layers.size(); ++i)
      enc_layers[i].visit("enc" + std::to_string(i), f);
    f("enc_head.w", enc_head_w);
    f("enc_head.b", enc_head_b);
    f("dec_lift.w", dec_lift_w);
    f("dec_lift.b", dec_lift_b);
    for (size_t i = 0; i < dec_layers.size(); ++i)
      dec_layers[i].visit("dec" + std::to_string(i), f);
    f("dec_head.w", dec_head_w);
    f("dec_head.b", dec_head_b);
  }

  Index param_count() {
    Index n = 0;
    visit([&n](const std::string&, Tensor<Scalar>& t) { n += t.size(); });
    return n;
  }

  void zero_grads() {
    visit([](const std::string&, Tensor<Scalar>& t) { t.zero_grad(); });
  }
};

/// Allocates all tensors at their configured shapes, zero-valued.
template <typename Scalar>
Model<Scalar> make_model(const CodecConfig& cfg) {
  validate(cfg);
  Model<Scalar> m;
  m.cfg = cfg;
  const Index c = cfg.channels;
  m.lift_w.resize(3, c);
  m.lift_b.resize(1, c);
  const Index n_layers = cfg.num_scales * cfg.layers_per_block;
  m.enc_layers.resize(static_cast<size_t>(n_layers));
  m.dec_layers.resize(static_cast<size_t>(n_layers));
  for (auto& l : m.enc_layers) l.resize(c, c, c);
  for (auto& l : m.dec_layers) l.resize(c, c, c);
  m.enc_head_w.resize(c, cfg.latent_channels);
  m.enc_head_b.resize(1, cfg.latent_channels);
  m.dec_lift_w.resize(cfg.latent_channels, c);
  m.dec_lift_b.resize(1, c);
  m.dec_head_w.resize(c, 3);
  m.dec_head_b.resize(1, 3);
  return m;
}

/// Deterministic init: weights uniform in ±sqrt(3/fan_in) drawn in visit
/// order from one generator, biases zero. Different seeds give different
/// parameters. The final layer of every positional bias head starts at zero:
/// that bias is added to the mixed values, so a random start sprays
/// geometry-dependent noise over every reconstruction, and training recovers
/// far faster when the value path begins as pure neighbor interpolation.
template <typename Scalar>
void model_init(Model<Scalar>& m, uint64_t seed) {
  Rng rng(mix64(seed ^ 0x6d6f64656c696e69ull));
  m.visit([&rng](const std::string& name, Tensor<Scalar>& t) {
    if (is_bias_name(name)) return;
    init_weight(t, rng);
    if (name.ends_with("pos.mlp_bias.w2")) t.v.setZero();
  });
}

// ---------------------------------------------------------------------------
// Zero-padding upsampler: coarse row j lands on dense row select[j]; every
// other dense row is exactly zero. Coincidence is decided by pyramid index
// identity, never by comparing coordinates.

template <typename Scalar>
MatX<Scalar> zero_pad(const MatX<Scalar>& coarse, const IndexVec& select, Index dense_rows) {
  if (static_cast<size_t>(coarse.rows()) != select.size())
    throw PreconditionError("zero_pad: coarse rows do not match the selection map");
  MatX<Scalar> dense = MatX<Scalar>::Zero(dense_rows, coarse.cols());
  for (size_t j = 0; j < select.size(); ++j) {
    if (select[j] < 0 || select[j] >= dense_rows)
      throw PreconditionError("zero_pad: selection index out of range");
    dense.row(select[j]) = coarse.row(static_cast<Index>(j));
  }
  return dense;
}

// ---------------------------------------------------------------------------
// Analysis transform: lift colors, refine with attention, shrink to the
// coarsest level, project to the latent width.

template <typename Scalar>
struct EncodeCache {
  MatX<Scalar> colors;                                // lift input
  std::vector<AttentionLayerCache<Scalar>> layers;    // num_scales * layers_per_block
  MatX<Scalar> head_in;                               // coarse features entering the head
};

template <typename Scalar>
MatX<Scalar> encode_features(const Model<Scalar>& m, const GeometryContext<Scalar>& ctx,
                             const MatX<Scalar>& colors, EncodeCache<Scalar>* cache = nullptr) {
  if (colors.rows() != ctx.pyramid.levels[0].rows() || colors.cols() != 3)
    throw PreconditionError("encode_features: colors do not match the geometry");
  const Index l_per = m.cfg.layers_per_block;
  if (cache) {
    cache->colors = colors;
    cache->layers.resize(static_cast<size_t>(m.cfg.num_scales * l_per));
  }
  MatX<Scalar> f = affine(colors, m.lift_w, m.lift_b);
  for (Index s = 0; s < m.cfg.num_scales; ++s) {
    for (Index l = 0; l < l_per; ++l) {
      const size_t li = static_cast<size_t>(s * l_per + l);
      f = attention_layer_forward(f, ctx.nbh[static_cast<size_t>(s)],
                                  ctx.rel_pos[static_cast<size_t>(s)], m.enc_layers[li],
                                  cache ? &cache->layers[li] : nullptr);
    }
    const IndexVec& sel = ctx.pyramid.select[static_cast<size_t>(s)];
    MatX<Scalar> coarse(static_cast<Index>(sel.size()), f.cols());
    for (size_t j = 0; j < sel.size(); ++j) coarse.row(static_cast<Index>(j)) = f.row(sel[j]);
    f = std::move(coarse);
  }
  if (cache) cache->head_in = f;
  return affine(f, m.enc_head_w, m.enc_head_b);
}

/// Accumulates parameter gradients for encode_features. The gradient with
/// respect to the input colors is not needed anywhere and is dropped.
template <typename Scalar>
void encode_backward(Model<Scalar>& m, const GeometryContext<Scalar>& ctx,
                     const MatX<Scalar>& d_latent, const EncodeCache<Scalar>& cache) {
  const Index l_per = m.cfg.layers_per_block;
  MatX<Scalar> df = affine_backward(d_latent, cache.head_in, m.enc_head_w, &m.enc_head_b);
  for (Index s = m.cfg.num_scales - 1; s >= 0; --s) {
    const IndexVec& sel = ctx.pyramid.select[static_cast<size_t>(s)];
    const Index dense_rows = ctx.pyramid.levels[static_cast<size_t>(s)].rows();
    df = zero_pad(df, sel, dense_rows);  // adjoint of row selection
    for (Index l = l_per - 1; l >= 0; --l) {
      const size_t li = static_cast<size_t>(s * l_per + l);
      df = attention_layer_backward(df, ctx.nbh[static_cast<size_t>(s)],
                                    ctx.rel_pos[static_cast<size_t>(s)], dense_rows,
                                    m.enc_layers[li], cache.layers[li]);
    }
  }
  affine_backward(df, cache.colors, m.lift_w, &m.lift_b);
}

// ---------------------------------------------------------------------------
// Synthesis transform: lift the latent, upsample scale by scale with zero
// padding plus attention, project to colors. Stage t of the loop moves from
// level num_scales-t down to level num_scales-t-1; dec_layers are stored in
// application order, stage t uses layers [t*L, (t+1)*L).

template <typename Scalar>
struct DecodeCache {
  MatX<Scalar> latent;                              // dec lift input
  std::vector<MatX<Scalar>> stage_in;               // per stage: coarse rows fed to zero_pad
  std::vector<MatX<Scalar>> padded;                 // per stage: zero-padded pre-attention rows
  std::vector<AttentionLayerCache<Scalar>> layers;
  MatX<Scalar> head_in;
};

template <typename Scalar>
MatX<Scalar> decode_features(const Model<Scalar>& m, const GeometryContext<Scalar>& ctx,
                             const MatX<Scalar>& latent, DecodeCache<Scalar>* cache = nullptr) {
  const size_t coarsest = static_cast<size_t>(m.cfg.num_scales);
  if (latent.rows() != ctx.pyramid.levels[coarsest].rows() ||
      latent.cols() != m.cfg.latent_channels)
    throw PreconditionError("decode_features: latent does not match the geometry");
  const Index l_per = m.cfg.layers_per_block;
  if (cache) {
    cache->latent = latent;
    cache->stage_in.resize(static_cast<size_t>(m.cfg.num_scales));
    cache->padded.resize(static_cast<size_t>(m.cfg.num_scales));
    cache->layers.resize(static_cast<size_t>(m.cfg.num_scales * l_per));
  }
  MatX<Scalar> f = affine(latent, m.dec_lift_w, m.dec_lift_b);
  for (Index t = 0; t < m.cfg.num_scales; ++t) {
    const Index s = m.cfg.num_scales - 1 - t;  // dense level this stage produces
    const IndexVec& sel = ctx.pyramid.select[static_cast<size_t>(s)];
    const Index dense_rows = ctx.pyramid.levels[static_cast<size_t>(s)].rows();
    if (cache) cache->stage_in[static_cast<size_t>(t)] = f;
    f = zero_pad(f, sel, dense_rows);
    if (cache) cache->padded[static_cast<size_t>(t)] = f;
    for (Index l = 0; l < l_per; ++l) {
      const size_t li = static_cast<size_t>(t * l_per + l);
      f = attention_layer_forward(f, ctx.nbh[static_cast<size_t>(s)],
                                  ctx.rel_pos[static_cast<size_t>(s)], m.dec_layers[li],
                                  cache ? &cache->layers[li] : nullptr);
    }
  }
  if (cache) cache->head_in = f;
  return affine(f, m.dec_head_w, m.dec_head_b);
}

/// Accumulates parameter gradients and returns the gradient with respect to
/// the latent input.
template <typename Scalar>
MatX<Scalar> decode_backward(Model<Scalar>& m, const GeometryContext<Scalar>& ctx,
                             const MatX<Scalar>& d_colors, const DecodeCache<Scalar>& cache) {
  const Index l_per = m.cfg.layers_per_block;
  MatX<Scalar> df = affine_backward(d_colors, cache.head_in, m.dec_head_w, &m.dec_head_b);
  for (Index t = m.cfg.num_scales - 1; t >= 0; --t) {
    const Index s = m.cfg.num_scales - 1 - t;
    const IndexVec& sel = ctx.pyramid.select[static_cast<size_t>(s)];
    const Index dense_rows = ctx.pyramid.levels[static_cast<size_t>(s)].rows();
    for (Index l = l_per - 1; l >= 0; --l) {
      const size_t li = static_cast<size_t>(t * l_per + l);
      df = attention_layer_backward(df, ctx.nbh[static_cast<size_t>(s)],
                                    ctx.rel_pos[static_cast<size_t>(s)], dense_rows,
                                    m.dec_layers[li], cache.layers[li]);
    }
    // adjoint of zero_pad: keep the rows that came from the coarse level
    MatX<Scalar> d_coarse(static_cast<Index>(sel.size()), df.cols());
    for (size_t j = 0; j < sel.size(); ++j)
      d_coarse.row(static_cast<Index>(j)) = df.row(sel[j]);
    df = std::move(d_coarse);
  }
  return affine_backward(df, cache.latent, m.dec_lift_w, &m.dec_lift_b);
}

// ---------------------------------------------------------------------------
// Patch-level convenience wrappers (build the geometry context internally).

/// Analysis of one patch: YUV colors to continuous latent features.
template <typename Scalar>
MatX<Scalar> encode(const Patch& patch, const Model<Scalar>& m) {
  GeometryContext<Scalar> ctx = make_geometry_context<Scalar>(patch.positions, m.cfg);
  const MatX<Scalar> colors = patch.colors.template cast<Scalar>();
  return encode_features(m, ctx, colors);
}

/// Synthesis of one patch: latent rows back to YUV colors, clipped to [0,1].
template <typename Scalar>
MatX<Scalar> decode(const MatX<Scalar>& latent, const Mat3<double>& positions,
                    const Model<Scalar>& m) {
  GeometryContext<Scalar> ctx = make_geometry_context<Scalar>(positions, m.cfg);
  MatX<Scalar> rec = decode_features(m, ctx, latent);
  return rec.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

}  // namespace pcac
