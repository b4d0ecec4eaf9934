#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pcac/detmath.hpp"
#include "pcac/nn.hpp"
#include "pcac/rng.hpp"
#include "pcac/types.hpp"

// Learned per-channel prior over quantized latent values. Each channel owns a
// small monotone CDF network (widths 1-3-3-1). Weights stay positive through
// an exp reparameterization and gates stay in (-1,1) through tanh, so the CDF
// is monotone in its input and tends to 0/1 at the tails by construction.
//
// CDF evaluation always runs in double through the deterministic math
// routines: the symbol tables the range coder uses are rebuilt independently
// on the encode and decode side and must agree bit for bit.

namespace pcac {

constexpr double kMinProbability = 1e-9;
constexpr uint32_t kFreqTotal = 1u << 16;  // frequency precision of the range coder

template <typename Scalar>
struct EntropyModel {
  Index channels = 0;
  Index alphabet_max = 127;  // values in [-A, A] code via the table, others escape
  // per-channel rows; h* are pre-exp weights, a* are pre-tanh gates
  Tensor<Scalar> h1, b1, a1;  // ch x 3
  Tensor<Scalar> h2, b2, a2;  // h2: ch x 9 (3x3 row-major per channel), b2/a2: ch x 3
  Tensor<Scalar> h3, b3;      // h3: ch x 3, b3: ch x 1

  void resize(Index ch) {
    channels = ch;
    h1.resize(ch, 3);
    b1.resize(ch, 3);
    a1.resize(ch, 3);
    h2.resize(ch, 9);
    b2.resize(ch, 3);
    a2.resize(ch, 3);
    h3.resize(ch, 3);
    b3.resize(ch, 1);
  }
  template <typename F>
  void visit(F&& f) {
    f("em.h1", h1);
    f("em.b1", b1);
    f("em.a1", a1);
    f("em.h2", h2);
    f("em.b2", b2);
    f("em.a2", a2);
    f("em.h3", h3);
    f("em.b3", b3);
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

/// Deterministic init. The three first-stage units start offset so they cover
/// different input regions; initial mass near zero is a few bits per symbol.
template <typename Scalar>
EntropyModel<Scalar> make_entropy_model(Index channels, uint64_t seed) {
  if (channels < 1) throw PreconditionError("entropy model needs at least one channel");
  EntropyModel<Scalar> em;
  em.resize(channels);
  Rng rng(mix64(seed ^ 0x656e74726f707931ull));
  const double log_half = std::log(0.5), log_third = std::log(1.0 / 3.0);
  for (Index ch = 0; ch < channels; ++ch) {
    for (int j = 0; j < 3; ++j) {
      em.h1.v(ch, j) = static_cast<Scalar>(log_half + rng.uniform(-0.05, 0.05));
      em.b1.v(ch, j) = static_cast<Scalar>(2.0 * (j - 1) + rng.uniform(-0.1, 0.1));
      em.a1.v(ch, j) = static_cast<Scalar>(rng.uniform(-0.01, 0.01));
      em.b2.v(ch, j) = static_cast<Scalar>(rng.uniform(-0.1, 0.1));
      em.a2.v(ch, j) = static_cast<Scalar>(rng.uniform(-0.01, 0.01));
      em.h3.v(ch, j) = static_cast<Scalar>(log_third + rng.uniform(-0.05, 0.05));
    }
    for (int j = 0; j < 9; ++j)
      em.h2.v(ch, j) = static_cast<Scalar>(log_third + rng.uniform(-0.05, 0.05));
    em.b3.v(ch, 0) = Scalar(0);
  }
  return em;
}

namespace detail {

struct CdfChannel {
  double h1[3], b1[3], a1[3];
  double h2[9], b2[3], a2[3];
  double h3[3], b3;
};

/// `as_float32` rounds every parameter through float before use; coding
/// tables are defined on the float32 values a checkpoint stores, so both ends
/// of the channel derive identical tables no matter which scalar they load
/// the model at.
template <typename Scalar>
CdfChannel load_channel(const EntropyModel<Scalar>& em, Index ch, bool as_float32) {
  CdfChannel c;
  auto cast = [as_float32](Scalar v) {
    return as_float32 ? static_cast<double>(static_cast<float>(v)) : static_cast<double>(v);
  };
  for (int j = 0; j < 3; ++j) {
    c.h1[j] = cast(em.h1.v(ch, j));
    c.b1[j] = cast(em.b1.v(ch, j));
    c.a1[j] = cast(em.a1.v(ch, j));
    c.b2[j] = cast(em.b2.v(ch, j));
    c.a2[j] = cast(em.a2.v(ch, j));
    c.h3[j] = cast(em.h3.v(ch, j));
  }
  for (int j = 0; j < 9; ++j) c.h2[j] = cast(em.h2.v(ch, j));
  c.b3 = cast(em.b3.v(ch, 0));
  return c;
}

struct CdfGrad {
  double dx = 0;
  double dh1[3] = {}, db1[3] = {}, da1[3] = {};
  double dh2[9] = {}, db2[3] = {}, da2[3] = {};
  double dh3[3] = {}, db3 = 0;
};

inline double cdf_channel(const CdfChannel& p, double x, CdfGrad* grad = nullptr) {
  double e1[3], v[3], ta1[3], tv[3], u[3];
  for (int j = 0; j < 3; ++j) {
    e1[j] = det_exp(p.h1[j]);
    v[j] = e1[j] * x + p.b1[j];
    ta1[j] = det_tanh(p.a1[j]);
    tv[j] = det_tanh(v[j]);
    u[j] = v[j] + ta1[j] * tv[j];
  }
  double e2[9], w[3], ta2[3], tw[3], t[3];
  for (int i = 0; i < 3; ++i) {
    double acc = p.b2[i];
    for (int j = 0; j < 3; ++j) {
      e2[3 * i + j] = det_exp(p.h2[3 * i + j]);
      acc += e2[3 * i + j] * u[j];
    }
    w[i] = acc;
    ta2[i] = det_tanh(p.a2[i]);
    tw[i] = det_tanh(w[i]);
    t[i] = w[i] + ta2[i] * tw[i];
  }
  double e3[3], z = p.b3;
  for (int i = 0; i < 3; ++i) {
    e3[i] = det_exp(p.h3[i]);
    z += e3[i] * t[i];
  }
  const double c = det_sigmoid(z);
  if (grad) {
    const double gz = c * (1.0 - c);
    grad->db3 = gz;
    double gu[3] = {0, 0, 0};
    for (int i = 0; i < 3; ++i) {
      grad->dh3[i] = gz * t[i] * e3[i];
      const double gt = gz * e3[i];
      const double gw = gt * (1.0 + ta2[i] * (1.0 - tw[i] * tw[i]));
      grad->da2[i] = gt * tw[i] * (1.0 - ta2[i] * ta2[i]);
      grad->db2[i] = gw;
      for (int j = 0; j < 3; ++j) {
        grad->dh2[3 * i + j] = gw * u[j] * e2[3 * i + j];
        gu[j] += gw * e2[3 * i + j];
      }
    }
    grad->dx = 0;
    for (int j = 0; j < 3; ++j) {
      const double gv = gu[j] * (1.0 + ta1[j] * (1.0 - tv[j] * tv[j]));
      grad->da1[j] = gu[j] * tv[j] * (1.0 - ta1[j] * ta1[j]);
      grad->db1[j] = gv;
      grad->dh1[j] = gv * x * e1[j];
      grad->dx += gv * e1[j];
    }
  }
  return c;
}

}  // namespace detail

/// CDF of one channel at x (training-precision parameters, deterministic path).
template <typename Scalar>
double entropy_cdf(const EntropyModel<Scalar>& em, Index channel, double x) {
  if (channel < 0 || channel >= em.channels)
    throw PreconditionError("entropy_cdf: channel out of range");
  return detail::cdf_channel(detail::load_channel(em, channel, false), x);
}

// ---------------------------------------------------------------------------
// Quantization.

enum class QuantizeMode { kNoise, kRound };

/// Training uses additive uniform noise in (-1/2, 1/2) as the differentiable
/// stand-in for rounding; evaluation rounds half away from zero.
template <typename Scalar>
MatX<Scalar> quantize(const MatX<Scalar>& f, QuantizeMode mode, Rng* rng = nullptr) {
  MatX<Scalar> out(f.rows(), f.cols());
  if (mode == QuantizeMode::kNoise) {
    if (!rng) throw PreconditionError("quantize: noise mode needs a generator");
    for (Index c = 0; c < f.cols(); ++c)
      for (Index r = 0; r < f.rows(); ++r)
        out(r, c) = f(r, c) + static_cast<Scalar>(rng->uniform() - 0.5);
  } else {
    for (Index c = 0; c < f.cols(); ++c)
      for (Index r = 0; r < f.rows(); ++r) out(r, c) = std::round(f(r, c));
  }
  return out;
}

/// Rounded latents as int32 symbols for the coder.
template <typename Scalar>
MatXi to_symbols(const MatX<Scalar>& q) {
  MatXi s(q.rows(), q.cols());
  for (Index c = 0; c < q.cols(); ++c)
    for (Index r = 0; r < q.rows(); ++r)
      s(r, c) = static_cast<int32_t>(std::lround(static_cast<double>(q(r, c))));
  return s;
}

// ---------------------------------------------------------------------------
// Rate.

/// Estimated code length in bits of quantized values q (columns = channels):
/// sum of -log2 of the mass each value's unit interval carries, with the
/// probability floored at kMinProbability.
template <typename Scalar>
double rate_estimate(const MatX<Scalar>& q, const EntropyModel<Scalar>& em) {
  if (q.cols() != em.channels)
    throw PreconditionError("rate_estimate: column count must equal entropy channels");
  double bits = 0;
  for (Index ch = 0; ch < q.cols(); ++ch) {
    const detail::CdfChannel cp = detail::load_channel(em, ch, false);
    for (Index r = 0; r < q.rows(); ++r) {
      const double x = static_cast<double>(q(r, ch));
      const double p = detail::cdf_channel(cp, x + 0.5) - detail::cdf_channel(cp, x - 0.5);
      bits -= std::log2(std::max(p, kMinProbability));
    }
  }
  return bits;
}

/// rate_estimate plus gradients: accumulates weight * d(bits)/d(theta) into
/// the model grads and writes weight * d(bits)/dq into d_q (same shape as q).
template <typename Scalar>
double rate_backward(const MatX<Scalar>& q, EntropyModel<Scalar>& em, double weight,
                     MatX<Scalar>& d_q) {
  if (q.cols() != em.channels)
    throw PreconditionError("rate_backward: column count must equal entropy channels");
  d_q.setZero(q.rows(), q.cols());
  const double inv_ln2 = 1.0 / std::log(2.0);
  double bits = 0;
  for (Index ch = 0; ch < q.cols(); ++ch) {
    const detail::CdfChannel cp = detail::load_channel(em, ch, false);
    for (Index r = 0; r < q.rows(); ++r) {
      const double x = static_cast<double>(q(r, ch));
      detail::CdfGrad hi, lo;
      const double p =
          detail::cdf_channel(cp, x + 0.5, &hi) - detail::cdf_channel(cp, x - 0.5, &lo);
      if (p <= kMinProbability) {  // floored region: flat, no gradient
        bits -= std::log2(kMinProbability);
        continue;
      }
      bits -= std::log2(p);
      const double f = -weight * inv_ln2 / p;
      d_q(r, ch) = static_cast<Scalar>(f * (hi.dx - lo.dx));
      for (int j = 0; j < 3; ++j) {
        em.h1.g(ch, j) += static_cast<Scalar>(f * (hi.dh1[j] - lo.dh1[j]));
        em.b1.g(ch, j) += static_cast<Scalar>(f * (hi.db1[j] - lo.db1[j]));
        em.a1.g(ch, j) += static_cast<Scalar>(f * (hi.da1[j] - lo.da1[j]));
        em.b2.g(ch, j) += static_cast<Scalar>(f * (hi.db2[j] - lo.db2[j]));
        em.a2.g(ch, j) += static_cast<Scalar>(f * (hi.da2[j] - lo.da2[j]));
        em.h3.g(ch, j) += static_cast<Scalar>(f * (hi.dh3[j] - lo.dh3[j]));
      }
      for (int j = 0; j < 9; ++j)
        em.h2.g(ch, j) += static_cast<Scalar>(f * (hi.dh2[j] - lo.dh2[j]));
      em.b3.g(ch, 0) += static_cast<Scalar>(f * (hi.db3 - lo.db3));
    }
  }
  return bits;
}

// ---------------------------------------------------------------------------
// Symbol tables for the range coder. Every in-alphabet symbol and the escape
// get a frequency of at least 1; frequencies sum to exactly kFreqTotal.
// Built from float32-rounded parameters so encoder and decoder agree
// regardless of the scalar type they hold the model in.

struct CodingTables {
  Index alphabet_max = 0;
  std::vector<std::vector<uint32_t>> freq;  // per channel, 2A+2 entries (last = escape)
  std::vector<std::vector<uint32_t>> cum;   // per channel, prefix sums, 2A+3 entries

  Index symbols() const { return 2 * alphabet_max + 2; }
  Index escape_index() const { return 2 * alphabet_max + 1; }
};

template <typename Scalar>
CodingTables build_coding_tables(const EntropyModel<Scalar>& em) {
  CodingTables t;
  t.alphabet_max = em.alphabet_max;
  const Index n_sym = t.symbols();
  t.freq.resize(static_cast<size_t>(em.channels));
  t.cum.resize(static_cast<size_t>(em.channels));
  std::vector<double> mass(static_cast<size_t>(n_sym));
  for (Index ch = 0; ch < em.channels; ++ch) {
    const detail::CdfChannel cp = detail::load_channel(em, ch, true);
    double prev = detail::cdf_channel(cp, -static_cast<double>(em.alphabet_max) - 0.5);
    double total = 0;
    for (Index n = -em.alphabet_max; n <= em.alphabet_max; ++n) {
      const double cur = detail::cdf_channel(cp, static_cast<double>(n) + 0.5);
      const double p = std::max(0.0, cur - prev);
      mass[static_cast<size_t>(n + em.alphabet_max)] = p;
      total += p;
      prev = cur;
    }
    mass[static_cast<size_t>(n_sym - 1)] = std::max(0.0, 1.0 - total);  // escape tail
    total += mass[static_cast<size_t>(n_sym - 1)];
    if (total <= 0) {
      for (auto& m : mass) m = 1.0;
      total = static_cast<double>(n_sym);
    }

    // largest-remainder quantization with a baseline of 1 per symbol
    const double scale = static_cast<double>(kFreqTotal - static_cast<uint32_t>(n_sym));
    std::vector<uint32_t>& freq = t.freq[static_cast<size_t>(ch)];
    freq.assign(static_cast<size_t>(n_sym), 1);
    std::vector<std::pair<double, Index>> remainder(static_cast<size_t>(n_sym));
    uint32_t assigned = static_cast<uint32_t>(n_sym);
    for (Index i = 0; i < n_sym; ++i) {
      const double share = mass[static_cast<size_t>(i)] / total * scale;
      const double fl = std::floor(share);
      freq[static_cast<size_t>(i)] += static_cast<uint32_t>(fl);
      assigned += static_cast<uint32_t>(fl);
      remainder[static_cast<size_t>(i)] = {share - fl, i};
    }
    std::sort(remainder.begin(), remainder.end(),
              [](const std::pair<double, Index>& a, const std::pair<double, Index>& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
              });
    for (uint32_t d = 0; d < kFreqTotal - assigned; ++d)
      ++freq[static_cast<size_t>(remainder[d].second)];

    std::vector<uint32_t>& cum = t.cum[static_cast<size_t>(ch)];
    cum.assign(static_cast<size_t>(n_sym) + 1, 0);
    for (Index i = 0; i < n_sym; ++i)
      cum[static_cast<size_t>(i) + 1] = cum[static_cast<size_t>(i)] + freq[static_cast<size_t>(i)];
  }
  return t;
}

}  // namespace pcac
