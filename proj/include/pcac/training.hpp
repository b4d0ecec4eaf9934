#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Geometry>

#include "pcac/codec.hpp"
#include "pcac/entropy.hpp"
#include "pcac/pointcloud.hpp"
#include "pcac/rng.hpp"

namespace pcac {

// ---------------------------------------------------------------------------
// Synthetic data: smooth parametric surfaces carrying piecewise-smooth
// procedural textures, standing in for photographic texture mapped onto mesh
// samplings. Deterministic per (seed, index); colors are stored in YUV, the
// codec's working space.

namespace detail {

// value-noise lattice: hash of the integer cell, bilinearly blended with a
// smoothstep fade
inline double lattice_hash(int64_t ix, int64_t iy, uint64_t salt) {
  const uint64_t h = mix64(static_cast<uint64_t>(ix) * 0x9e3779b97f4a7c15ull ^
                           static_cast<uint64_t>(iy) * 0xc2b2ae3d27d4eb4full ^ salt);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double value_noise(double x, double y, uint64_t salt) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
  double tx = x - fx, ty = y - fy;
  tx = tx * tx * (3.0 - 2.0 * tx);
  ty = ty * ty * (3.0 - 2.0 * ty);
  const double v00 = lattice_hash(ix, iy, salt), v10 = lattice_hash(ix + 1, iy, salt);
  const double v01 = lattice_hash(ix, iy + 1, salt), v11 = lattice_hash(ix + 1, iy + 1, salt);
  return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

inline double fbm(double x, double y, uint64_t salt) {
  double acc = 0.0, amp = 0.5, freq = 1.0, norm = 0.0;
  for (int o = 0; o < 4; ++o) {
    acc += amp * value_noise(x * freq, y * freq, salt + static_cast<uint64_t>(o));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return acc / norm;  // in [0,1]
}

inline RowVec3<double> random_unit(Rng& rng) {
  for (;;) {
    RowVec3<double> v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double n = v.norm();
    if (n > 0.1 && n <= 1.0) return v / n;
  }
}

inline double signed_pow(double c, double e) {
  return (c < 0 ? -1.0 : 1.0) * std::pow(std::abs(c), e);
}

}  // namespace detail

/// Procedurally generated normalized patches (positions in the closed unit
/// ball, colors in YUV). Geometry cycles through spheres, tori,
/// superquadrics, and noisy planes; textures through value-noise fields,
/// linear gradients, and stripes.
inline std::vector<Patch> synth_dataset(Index n_patches, uint64_t seed,
                                        Index points_per_patch = kDefaultPatchSize) {
  if (n_patches < 1) throw PreconditionError("synth_dataset: need at least one patch");
  if (points_per_patch < 8) throw PreconditionError("synth_dataset: patch too small");
  std::vector<Patch> out;
  out.reserve(static_cast<size_t>(n_patches));
  for (Index pi = 0; pi < n_patches; ++pi) {
    Rng rng(mix64(seed ^ mix64(0x7061746368ull + static_cast<uint64_t>(pi))));
    const uint64_t shape = rng.below(4);
    const Index n = points_per_patch;
    Mat3<double> pos(n, 3);
    if (shape == 0) {  // ellipsoid
      const double sx = rng.uniform(0.6, 1.0), sy = rng.uniform(0.6, 1.0),
                   sz = rng.uniform(0.6, 1.0);
      for (Index i = 0; i < n; ++i) {
        const double z = rng.uniform(-1, 1), phi = rng.uniform(0, 2 * M_PI);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        pos.row(i) << sx * r * std::cos(phi), sy * r * std::sin(phi), sz * z;
      }
    } else if (shape == 1) {  // torus
      const double rr = 0.7, rm = rng.uniform(0.15, 0.35);
      for (Index i = 0; i < n; ++i) {
        const double u = rng.uniform(0, 2 * M_PI), v = rng.uniform(0, 2 * M_PI);
        pos.row(i) << (rr + rm * std::cos(v)) * std::cos(u),
            (rr + rm * std::cos(v)) * std::sin(u), rm * std::sin(v);
      }
    } else if (shape == 2) {  // superquadric
      const double e1 = rng.uniform(0.5, 1.5), e2 = rng.uniform(0.5, 1.5);
      const double sx = rng.uniform(0.5, 1.0), sy = rng.uniform(0.5, 1.0),
                   sz = rng.uniform(0.5, 1.0);
      for (Index i = 0; i < n; ++i) {
        const double u = rng.uniform(-M_PI / 2, M_PI / 2), v = rng.uniform(-M_PI, M_PI);
        const double cu = detail::signed_pow(std::cos(u), e1);
        pos.row(i) << sx * cu * detail::signed_pow(std::cos(v), e2),
            sy * cu * detail::signed_pow(std::sin(v), e2),
            sz * detail::signed_pow(std::sin(u), e1);
      }
    } else {  // undulating plane
      const double amp = rng.uniform(0.1, 0.3), freq = rng.uniform(1.0, 3.0);
      const uint64_t salt = rng.bits();
      for (Index i = 0; i < n; ++i) {
        const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
        pos.row(i) << x, y, amp * (2.0 * detail::fbm(x * freq, y * freq, salt) - 1.0);
      }
    }
    // random rotation from three axis angles
    const double a = rng.uniform(0, 2 * M_PI), b = rng.uniform(0, 2 * M_PI),
                 g = rng.uniform(0, 2 * M_PI);
    Eigen::Matrix3d rot;
    rot = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(b, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(g, Eigen::Vector3d::UnitX());
    pos = pos * rot.transpose();
    pos.rowwise() -= pos.colwise().mean().eval();
    const double max_norm = pos.rowwise().norm().maxCoeff();
    if (max_norm > 0) pos /= max_norm;

    // two-color texture blend; endpoints forced apart so textures stay
    // non-constant
    RowVec3<double> color_a(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                            rng.uniform(0.1, 0.9));
    RowVec3<double> color_b(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                            rng.uniform(0.1, 0.9));
    if ((color_a - color_b).cwiseAbs().maxCoeff() < 0.25)
      color_b = RowVec3<double>::Ones() - color_a;
    const uint64_t texture = rng.below(3);
    const RowVec3<double> e1 = detail::random_unit(rng);
    RowVec3<double> e2 = detail::random_unit(rng);
    e2 -= e2.dot(e1) * e1;
    if (e2.norm() < 1e-6) e2 = RowVec3<double>(e1[1], e1[2], e1[0]);
    e2.normalize();
    const double tex_freq = rng.uniform(1.0, 4.0);
    const double phase = rng.uniform(0, 2 * M_PI);
    const uint64_t salt = rng.bits();
    Mat3<double> rgb(n, 3);
    for (Index i = 0; i < n; ++i) {
      const RowVec3<double> p = pos.row(i);
      double t;
      if (texture == 0) {
        t = 0.5 + 2.2 * (detail::fbm(p.dot(e1) * tex_freq + 7.3, p.dot(e2) * tex_freq - 2.1,
                                     salt) -
                         0.5);
      } else if (texture == 1) {
        t = 0.5 * (p.dot(e1) + 1.0);
      } else {
        t = 0.5 + 0.5 * std::sin(2 * M_PI * tex_freq * p.dot(e1) + phase);
      }
      t = std::min(1.0, std::max(0.0, t));
      rgb.row(i) = color_a + t * (color_b - color_a);
    }
    Patch patch;
    patch.positions = std::move(pos);
    patch.colors = rgb_to_yuv<double>(rgb);
    patch.parent_indices.resize(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) patch.parent_indices[static_cast<size_t>(i)] = i;
    out.push_back(std::move(patch));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss and optimizer.

struct TrainConfig {
  double lambda = 1e-4;
  Index steps = 1;
  double lr = 5e-4;
  double lr_final = 0;  // > 0 enables cosine decay from lr down to this value
  Index batch = 8;
  uint64_t seed = 0;
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.lambda > 0)) throw PreconditionError("train config: lambda must be positive");
  if (cfg.steps < 1) throw PreconditionError("train config: steps must be >= 1");
  if (cfg.batch < 1) throw PreconditionError("train config: batch must be >= 1");
  if (!(cfg.lr > 0)) throw PreconditionError("train config: lr must be positive");
  if (cfg.lr_final < 0 || cfg.lr_final > cfg.lr)
    throw PreconditionError("train config: lr_final must lie in [0, lr]");
}

/// Cosine-decayed learning rate for `step` of `steps`; constant when
/// lr_final is 0 (decay disabled).
inline double scheduled_lr(const TrainConfig& cfg, Index step) {
  if (cfg.lr_final <= 0 || cfg.steps < 2) return cfg.lr;
  const double u = static_cast<double>(step) / static_cast<double>(cfg.steps - 1);
  return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(M_PI * u));
}

/// Rate-distortion objective: squared reconstruction error summed over points
/// and channels, plus lambda times the estimated rate. The rate enters as
/// total bits of the coding unit (not bits per point) so the two terms share
/// the per-unit summation convention and the lambda ladder spreads operating
/// points.
inline double rd_loss(const MatX<double>& pred, const MatX<double>& target, double rate_bits,
                      double lambda) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw PreconditionError("rd_loss: shape mismatch");
  return (pred - target).squaredNorm() + lambda * rate_bits;
}

template <typename Scalar>
std::vector<Tensor<Scalar>*> collect_params(Model<Scalar>& model, EntropyModel<Scalar>& em) {
  std::vector<Tensor<Scalar>*> out;
  auto grab = [&out](const std::string&, Tensor<Scalar>& t) { out.push_back(&t); };
  model.visit(grab);
  em.visit(grab);
  return out;
}

template <typename Scalar>
class Adam {
 public:
  Adam(const std::vector<Tensor<Scalar>*>& params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor<Scalar>* p : params) {
      m_.push_back(MatX<Scalar>::Zero(p->rows(), p->cols()));
      v_.push_back(MatX<Scalar>::Zero(p->rows(), p->cols()));
    }
  }

  void set_lr(double lr) { lr_ = lr; }

  /// One update from the accumulated grads, scaled by grad_scale (1/batch
  /// for a batch mean). Does not clear the grads.
  void step(const std::vector<Tensor<Scalar>*>& params, double grad_scale) {
    if (params.size() != m_.size()) throw PreconditionError("adam: parameter set changed");
    ++t_;
    const Scalar bc1 = Scalar(1) - static_cast<Scalar>(std::pow(beta1_, t_));
    const Scalar bc2 = Scalar(1) - static_cast<Scalar>(std::pow(beta2_, t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<Scalar>& p = *params[i];
      const MatX<Scalar> g = p.g * static_cast<Scalar>(grad_scale);
      m_[i] = static_cast<Scalar>(beta1_) * m_[i] + (Scalar(1) - static_cast<Scalar>(beta1_)) * g;
      v_[i] = static_cast<Scalar>(beta2_) * v_[i] +
              (Scalar(1) - static_cast<Scalar>(beta2_)) * g.cwiseProduct(g);
      p.v -= (static_cast<Scalar>(lr_) * (m_[i] / bc1).array() /
              ((v_[i] / bc2).array().sqrt() + static_cast<Scalar>(eps_)))
                 .matrix();
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<MatX<Scalar>> m_, v_;
};

// ---------------------------------------------------------------------------
// One training sample: encode, add quantization noise, estimate rate, decode
// (unclipped), accumulate all gradients.

struct StepStats {
  double loss = 0, distortion = 0, rate_bits = 0;
};

template <typename Scalar>
StepStats forward_backward_patch(Model<Scalar>& model, EntropyModel<Scalar>& em,
                                 const Patch& patch, const GeometryContext<Scalar>& ctx,
                                 double lambda, Rng& noise_rng) {
  const MatX<Scalar> target = patch.colors.template cast<Scalar>();
  EncodeCache<Scalar> ec;
  const MatX<Scalar> latent = encode_features(model, ctx, target, &ec);
  const MatX<Scalar> noisy = quantize(latent, QuantizeMode::kNoise, &noise_rng);

  MatX<Scalar> d_latent;
  const double rate_bits = rate_backward(noisy, em, lambda, d_latent);

  DecodeCache<Scalar> dc;
  const MatX<Scalar> pred = decode_features(model, ctx, noisy, &dc);
  const MatX<Scalar> diff = pred - target;
  const double distortion = static_cast<double>(diff.squaredNorm());

  d_latent += decode_backward(model, ctx, MatX<Scalar>(Scalar(2) * diff), dc);
  encode_backward(model, ctx, d_latent, ec);

  StepStats s;
  s.distortion = distortion;
  s.rate_bits = rate_bits;
  s.loss = distortion + lambda * rate_bits;
  return s;
}

// ---------------------------------------------------------------------------
// Training loop.

struct TrainLogRow {
  Index step = 0;
  double loss = 0, distortion = 0, est_bpp = 0;
};

/// Joint optimization of the codec and the prior. Deterministic given
/// cfg.seed. Aborts with a diagnostic if the loss turns non-finite.
template <typename Scalar>
std::vector<TrainLogRow> train(Model<Scalar>& model, EntropyModel<Scalar>& em,
                               const std::vector<Patch>& dataset, const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) throw PreconditionError("train: empty dataset");
  if (em.channels != model.cfg.latent_channels)
    throw PreconditionError("train: entropy channels must match latent channels");

  std::vector<GeometryContext<Scalar>> ctxs;
  ctxs.reserve(dataset.size());
  for (const Patch& p : dataset)
    ctxs.push_back(make_geometry_context<Scalar>(p.positions, model.cfg));

  std::vector<Tensor<Scalar>*> params = collect_params(model, em);
  Adam<Scalar> adam(params, cfg.lr);
  Rng pick(mix64(cfg.seed ^ 0x7069636b62617463ull));
  Rng noise(mix64(cfg.seed ^ 0x6e6f697365726e67ull));

  std::vector<TrainLogRow> log;
  log.reserve(static_cast<size_t>(cfg.steps));
  for (Index step = 0; step < cfg.steps; ++step) {
    adam.set_lr(scheduled_lr(cfg, step));
    for (Tensor<Scalar>* p : params) p->zero_grad();
    double loss = 0, dist = 0, rate = 0, points = 0;
    for (Index b = 0; b < cfg.batch; ++b) {
      const size_t di = static_cast<size_t>(pick.below(dataset.size()));
      const StepStats s =
          forward_backward_patch(model, em, dataset[di], ctxs[di], cfg.lambda, noise);
      loss += s.loss;
      dist += s.distortion;
      rate += s.rate_bits;
      points += static_cast<double>(dataset[di].size());
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.batch);
    if (!std::isfinite(loss))
      throw std::runtime_error("training diverged (non-finite loss) at step " +
                               std::to_string(step) + "; lambda=" + std::to_string(cfg.lambda) +
                               " lr=" + std::to_string(cfg.lr));
    adam.step(params, inv_b);
    log.push_back({step, loss * inv_b, dist * inv_b, rate / points});
  }
  return log;
}

/// Training-log CSV (step, loss, distortion, est_bpp).
inline void write_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << "step,loss,distortion,est_bpp\n";
  char buf[160];
  for (const TrainLogRow& r : log) {
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step),
                  r.loss, r.distortion, r.est_bpp);
    os << buf;
  }
}

}  // namespace pcac
