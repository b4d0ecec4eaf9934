// Acceptance gate. Runs the numbered end-to-end checks and prints exactly one
// line per criterion: "[PASS] criterion N — ..." or "[FAIL] criterion N — ...".
// Exit code is the number of failures. Optional argv selects criteria.
//
// The attention checks compare against naive scalar-loop re-implementations
// written directly from the layer definitions, kept free of Eigen expression
// shortcuts so they cannot share bugs with the library code.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "pcac/bitstream.hpp"
#include "pcac/checkpoint.hpp"
#include "pcac/codec.hpp"
#include "pcac/coding.hpp"
#include "pcac/entropy.hpp"
#include "pcac/evalmetrics.hpp"
#include "pcac/pipeline.hpp"
#include "pcac/ply.hpp"
#include "pcac/pointcloud.hpp"
#include "pcac/rng.hpp"
#include "pcac/training.hpp"

using namespace pcac;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Naive oracles.

MatX<double> oracle_affine(const MatX<double>& x, const Tensor<double>& w,
                           const Tensor<double>* b) {
  MatX<double> y(x.rows(), w.v.cols());
  for (Index r = 0; r < x.rows(); ++r)
    for (Index c = 0; c < w.v.cols(); ++c) {
      double acc = b ? b->v(0, c) : 0.0;
      for (Index m = 0; m < x.cols(); ++m) acc += x(r, m) * w.v(m, c);
      y(r, c) = acc;
    }
  return y;
}

void oracle_softmax_inplace(std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double sum = 0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

MatX<double> oracle_self_attention(const MatX<double>& x, Index k,
                                   const SelfAttentionParams<double>& p) {
  const Index n = x.rows() / k;
  const Index d = p.width();
  const MatX<double> q = oracle_affine(x, p.wq, &p.bq);
  const MatX<double> kk = oracle_affine(x, p.wk, &p.bk);
  const MatX<double> v = oracle_affine(x, p.wv, nullptr);
  MatX<double> out = MatX<double>::Zero(x.rows(), d);
  for (Index i = 0; i < n; ++i)
    for (Index r = 0; r < k; ++r) {
      std::vector<double> z(static_cast<size_t>(k), 0.0);
      for (Index j = 0; j < k; ++j) {
        double dot = 0;
        for (Index c = 0; c < d; ++c) dot += q(i * k + r, c) * kk(i * k + j, c);
        z[static_cast<size_t>(j)] = dot / std::sqrt(static_cast<double>(d));
      }
      oracle_softmax_inplace(z);
      for (Index j = 0; j < k; ++j)
        for (Index c = 0; c < d; ++c)
          out(i * k + r, c) += z[static_cast<size_t>(j)] * v(i * k + j, c);
    }
  return out;
}

MatX<double> oracle_mlp(const MatX<double>& x, const MlpParams<double>& p) {
  MatX<double> h = oracle_affine(x, p.w1, &p.b1);
  for (Index r = 0; r < h.rows(); ++r)
    for (Index c = 0; c < h.cols(); ++c) h(r, c) = std::max(0.0, h(r, c));
  return oracle_affine(h, p.w2, &p.b2);
}

void oracle_position_embed(const MatX<double>& x, Index k, const PositionEmbedParams<double>& p,
                           MatX<double>& scale, MatX<double>& bias) {
  scale = oracle_mlp(oracle_self_attention(x, k, p.attn_scale), p.mlp_scale);
  bias = oracle_mlp(oracle_self_attention(x, k, p.attn_bias), p.mlp_bias);
}

MatX<double> oracle_cross_attention(const MatX<double>& f_nbr, const MatX<double>& x, Index k,
                                    const CrossAttentionParams<double>& p) {
  const Index n = f_nbr.rows() / k;
  const Index ch = p.channels();
  MatX<double> pm, pb;
  oracle_position_embed(x, k, p.pos, pm, pb);
  const MatX<double> key = oracle_affine(f_nbr, p.wk, &p.bk);
  const MatX<double> query = oracle_affine(x, p.wq, &p.bq);
  const MatX<double> vf = oracle_affine(f_nbr, p.wv, nullptr);
  MatX<double> agg = MatX<double>::Zero(n, ch);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < ch; ++c) {
      std::vector<double> z(static_cast<size_t>(k), 0.0);
      for (Index j = 0; j < k; ++j)
        z[static_cast<size_t>(j)] =
            (key(i * k + j, c) - query(i * k + j, c)) * pm(i * k + j, c) + pb(i * k + j, c);
      oracle_softmax_inplace(z);
      for (Index j = 0; j < k; ++j)
        agg(i, c) += (vf(i * k + j, c) + pb(i * k + j, c)) * z[static_cast<size_t>(j)];
    }
  return oracle_affine(agg, p.wo, &p.bo);
}

// ---------------------------------------------------------------------------
// Shared helpers.

MatX<double> random_mat(Index rows, Index cols, Rng& rng, double lo = -1, double hi = 1) {
  MatX<double> m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(lo, hi);
  return m;
}

template <typename P>
void randomize_params(P& p, Rng& rng) {
  p.visit("p", [&rng](const std::string&, Tensor<double>& t) {
    for (Index c = 0; c < t.cols(); ++c)
      for (Index r = 0; r < t.rows(); ++r) t.v(r, c) = rng.uniform(-0.8, 0.8);
  });
}

double max_abs_diff(const MatX<double>& a, const MatX<double>& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

struct GradCheck {
  double worst = 0.0;
  std::string where;

  void account(const std::string& name, double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > worst) {
      worst = rel;
      where = name;
    }
  }
};

// Central differences over every parameter tensor reachable via visit() plus,
// optionally, an input matrix. `forward` must be a pure function of the
// current parameter/input values.
template <typename Forward, typename Backward, typename Visit>
GradCheck gradcheck(Forward forward, Backward backward, Visit visit_all, MatX<double>* input,
                    const MatX<double>* d_input_analytic, const MatX<double>& loss_w) {
  const double h = 1e-4;
  auto loss = [&] { return forward().cwiseProduct(loss_w).sum(); };
  std::vector<std::pair<std::string, Tensor<double>*>> params;
  visit_all([&params](const std::string& n, Tensor<double>& t) { params.emplace_back(n, &t); });
  for (auto& [name, t] : params) t->zero_grad();
  backward();  // fills Tensor::g with d(loss)/d(param)
  GradCheck gc;
  for (auto& [name, t] : params)
    for (Index c = 0; c < t->cols(); ++c)
      for (Index r = 0; r < t->rows(); ++r) {
        const double keep = t->v(r, c);
        t->v(r, c) = keep + h;
        const double up = loss();
        t->v(r, c) = keep - h;
        const double dn = loss();
        t->v(r, c) = keep;
        gc.account(name, t->g(r, c), (up - dn) / (2 * h));
      }
  if (input && d_input_analytic)
    for (Index c = 0; c < input->cols(); ++c)
      for (Index r = 0; r < input->rows(); ++r) {
        const double keep = (*input)(r, c);
        (*input)(r, c) = keep + h;
        const double up = loss();
        (*input)(r, c) = keep - h;
        const double dn = loss();
        (*input)(r, c) = keep;
        gc.account("input", (*d_input_analytic)(r, c), (up - dn) / (2 * h));
      }
  return gc;
}

// ---------------------------------------------------------------------------
// Criterion 1: entropy coding round-trips losslessly; damaged streams fail
// cleanly instead of crashing.

bool criterion1(std::string& detail) {
  Rng rng(0xC1);
  int trips = 0;
  const int kTrips = 10000;
  int escapes_seen = 0;
  for (int model_i = 0; trips < kTrips; ++model_i) {
    EntropyModel<double> em = make_entropy_model<double>(1 + Index(rng.below(4)),
                                                         0xE0 + static_cast<uint64_t>(model_i));
    em.alphabet_max = 7 + static_cast<Index>(rng.below(40));
    const CodingTables tables = build_coding_tables(em);
    for (int m = 0; m < 100 && trips < kTrips; ++m, ++trips) {
      const Index rows = static_cast<Index>(rng.below(65));
      MatXi sym(rows, em.channels);
      const uint64_t mode = rng.below(4);
      for (Index c = 0; c < sym.cols(); ++c)
        for (Index r = 0; r < rows; ++r) {
          const Index a = em.alphabet_max;
          if (mode == 0) {
            sym(r, c) = static_cast<int32_t>(rng.below(2 * static_cast<uint64_t>(a) + 1)) -
                        static_cast<int32_t>(a);
          } else if (mode == 1) {  // peaked near zero
            sym(r, c) = static_cast<int32_t>(rng.below(5)) - 2;
          } else if (mode == 2) {  // wide: escapes guaranteed to appear
            sym(r, c) = static_cast<int32_t>(rng.below(6 * static_cast<uint64_t>(a))) -
                        3 * static_cast<int32_t>(a);
          } else {  // hostile extremes
            const uint64_t pick = rng.below(4);
            sym(r, c) = pick == 0   ? std::numeric_limits<int32_t>::min()
                        : pick == 1 ? std::numeric_limits<int32_t>::max()
                        : pick == 2 ? static_cast<int32_t>(a) + 1
                                    : -static_cast<int32_t>(a) - 1;
          }
          if (sym(r, c) > a || sym(r, c) < -a) ++escapes_seen;
        }
      const std::vector<uint8_t> payload = ac_encode(sym, tables);
      const MatXi back = ac_decode(payload, rows, sym.cols(), tables);
      if (back != sym) {
        detail = "round-trip mismatch at trip " + std::to_string(trips);
        return false;
      }
    }
  }
  if (escapes_seen < 1000) {
    detail = "escape path barely exercised (" + std::to_string(escapes_seen) + " symbols)";
    return false;
  }
  // fuzz: truncations and byte flips must throw FormatError, never crash
  EntropyModel<double> em = make_entropy_model<double>(2, 0xF00D);
  em.alphabet_max = 31;
  const CodingTables tables = build_coding_tables(em);
  int rejected = 0, accepted = 0;
  for (int f = 0; f < 400; ++f) {
    const Index rows = 1 + static_cast<Index>(rng.below(40));
    MatXi sym(rows, 2);
    for (Index c = 0; c < 2; ++c)
      for (Index r = 0; r < rows; ++r)
        sym(r, c) = static_cast<int32_t>(rng.below(200)) - 100;
    std::vector<uint8_t> payload = ac_encode(sym, tables);
    if (rng.below(2) == 0 && !payload.empty()) {
      payload.resize(rng.below(payload.size() + 1));  // truncate
    } else if (!payload.empty()) {
      payload[rng.below(payload.size())] ^= static_cast<uint8_t>(1 + rng.below(255));
    }
    try {
      const MatXi back = ac_decode(payload, rows, 2, tables);
      ++accepted;  // only possible if the damage cancelled out
      if (back != sym && payload == ac_encode(sym, tables)) {
        detail = "intact payload failed to round-trip during fuzzing";
        return false;
      }
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  detail = std::to_string(kTrips) + " round-trips, " + std::to_string(escapes_seen) +
           " escape symbols, fuzz rejected/accepted " + std::to_string(rejected) + "/" +
           std::to_string(accepted);
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 2: the continuous rate estimate predicts real coded size.

bool criterion2(std::string& detail) {
  Rng rng(0xC2);
  EntropyModel<double> em = make_entropy_model<double>(3, 0xBEEF);
  const CodingTables tables = build_coding_tables(em);
  const Index rows = 4000;  // 12000 symbols
  MatXi sym(rows, em.channels);
  for (Index c = 0; c < em.channels; ++c) {
    const std::vector<uint32_t>& cum = tables.cum[static_cast<size_t>(c)];
    for (Index r = 0; r < rows; ++r) {
      const uint32_t draw = static_cast<uint32_t>(rng.below(kFreqTotal));
      Index s = 0;
      while (cum[static_cast<size_t>(s) + 1] <= draw) ++s;
      if (s == tables.escape_index())
        sym(r, c) = static_cast<int32_t>(em.alphabet_max) + 1 +
                    static_cast<int32_t>(rng.below(1000));
      else
        sym(r, c) = static_cast<int32_t>(s) - static_cast<int32_t>(em.alphabet_max);
    }
  }
  const double est = rate_estimate(MatX<double>(sym.cast<double>()), em);
  const double actual = 8.0 * static_cast<double>(ac_encode(sym, tables).size());
  const double slack = 0.02 * est + 512.0;
  detail = "estimate " + fmt("%.0f", est) + " bits vs actual " + fmt("%.0f", actual) +
           " bits on " + std::to_string(rows * em.channels) + " symbols (slack " +
           fmt("%.0f", slack) + ")";
  return std::abs(actual - est) <= slack;
}

// ---------------------------------------------------------------------------
// Criterion 3: attention operators match the oracles; analytic gradients
// match central differences.

bool criterion3(std::string& detail) {
  double worst_fwd = 0, worst_grad = 0;
  std::string worst_where;
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(mix64(0xC3 ^ seed));
    const Index n = 5, k = 4, in_ch = 5, ch = 6, width = 3;

    // self attention vs oracle
    SelfAttentionParams<double> sp;
    sp.resize(width);
    randomize_params(sp, rng);
    MatX<double> x = random_mat(n * k, 3, rng);
    const MatX<double> sa = self_attention_forward(x, k, sp);
    worst_fwd = std::max(worst_fwd, max_abs_diff(sa, oracle_self_attention(x, k, sp)));

    // cross attention vs oracle
    CrossAttentionParams<double> cp;
    cp.resize(in_ch, ch, width);
    randomize_params(cp, rng);
    MatX<double> f_nbr = random_mat(n * k, in_ch, rng);
    const MatX<double> ca = cross_attention_forward(f_nbr, x, k, cp);
    worst_fwd = std::max(worst_fwd, max_abs_diff(ca, oracle_cross_attention(f_nbr, x, k, cp)));

    // attention weights of every neighborhood sum to one
    CrossAttentionCache<double> cc;
    cross_attention_forward(f_nbr, x, k, cp, &cc);
    for (Index c = 0; c < ch; ++c)
      for (Index i = 0; i < n; ++i) {
        const double sum = cc.scores.col(c).segment(i * k, k).sum();
        if (std::abs(sum - 1.0) > 1e-6) {
          detail = "attention weights sum to " + fmt("%.9f", sum);
          return false;
        }
      }

    // gradcheck: self attention parameters
    {
      const MatX<double> w = random_mat(n * k, width, rng);
      SelfAttentionCache<double> cache;
      self_attention_forward(x, k, sp, &cache);
      GradCheck gc = gradcheck(
          [&] { return self_attention_forward(x, k, sp); },
          [&] { self_attention_backward(w, x, k, sp, cache); },
          [&](auto&& f) { sp.visit("self", f); }, nullptr, nullptr, w);
      if (gc.worst > worst_grad) {
        worst_grad = gc.worst;
        worst_where = gc.where;
      }
    }

    // gradcheck: cross attention parameters and input features
    {
      const MatX<double> w = random_mat(n, ch, rng);
      CrossAttentionCache<double> cache;
      cross_attention_forward(f_nbr, x, k, cp, &cache);
      MatX<double> d_fnbr;
      GradCheck gc = gradcheck(
          [&] { return cross_attention_forward(f_nbr, x, k, cp); },
          [&] { d_fnbr = cross_attention_backward(w, f_nbr, x, k, cp, cache); },
          [&](auto&& f) { cp.visit("cross", f); }, &f_nbr, &d_fnbr, w);
      if (gc.worst > worst_grad) {
        worst_grad = gc.worst;
        worst_where = gc.where;
      }
    }
  }
  detail = "forward max |diff| " + fmt("%.3g", worst_fwd) + ", gradcheck worst rel err " +
           fmt("%.3g", worst_grad) + (worst_where.empty() ? "" : " (" + worst_where + ")");
  return worst_fwd < 1e-6 && worst_grad < 1e-4;
}

// ---------------------------------------------------------------------------
// Criterion 4: upsampling inserts exactly the right number of zero rows and
// carries the coarse rows through bit-exactly.

bool criterion4(std::string& detail) {
  CodecConfig cfg;
  cfg.channels = 8;
  cfg.k_neighbors = 6;
  cfg.latent_channels = 3;
  Model<double> model = make_model<double>(cfg);
  model_init(model, 4);
  const std::vector<Patch> data = synth_dataset(1, 0xC4, 512);
  const GeometryContext<double> ctx = make_geometry_context<double>(data[0].positions, cfg);

  Rng rng(0xC4C4);
  MatX<double> latent =
      random_mat(ctx.pyramid.levels.back().rows(), cfg.latent_channels, rng, -3, 3);
  DecodeCache<double> dc;
  decode_features(model, ctx, latent, &dc);

  for (Index t = 0; t < cfg.num_scales; ++t) {
    const Index s = cfg.num_scales - 1 - t;
    const IndexVec& sel = ctx.pyramid.select[static_cast<size_t>(s)];
    const MatX<double>& coarse = dc.stage_in[static_cast<size_t>(t)];
    const MatX<double>& padded = dc.padded[static_cast<size_t>(t)];
    const Index dense = ctx.pyramid.levels[static_cast<size_t>(s)].rows();
    if (padded.rows() != dense) {
      detail = "stage " + std::to_string(t) + ": padded rows " + std::to_string(padded.rows());
      return false;
    }
    std::set<Index> retained(sel.begin(), sel.end());
    for (size_t j = 0; j < sel.size(); ++j) {
      if (std::memcmp(padded.row(sel[j]).eval().data(), coarse.row(Index(j)).eval().data(),
                      sizeof(double) * static_cast<size_t>(padded.cols())) != 0) {
        detail = "stage " + std::to_string(t) + ": retained row " + std::to_string(j) +
                 " not bit-exact";
        return false;
      }
    }
    Index zero_rows = 0;
    for (Index r = 0; r < dense; ++r) {
      if (retained.count(r)) continue;
      bool all_zero = true;
      for (Index c = 0; c < padded.cols(); ++c)
        if (padded(r, c) != 0.0) all_zero = false;
      if (!all_zero) {
        detail = "stage " + std::to_string(t) + ": inserted row " + std::to_string(r) +
                 " is not the zero vector";
        return false;
      }
      ++zero_rows;
    }
    const Index expect = dense - coarse.rows();
    if (zero_rows != expect) {
      detail = "stage " + std::to_string(t) + ": " + std::to_string(zero_rows) +
               " zero rows, expected " + std::to_string(expect);
      return false;
    }
  }
  detail = "every stage inserts |dense|-|coarse| zero rows and retains coarse rows bit-exactly";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 5: reconstructions are invariant (to 1e-5) under input row
// permutation, matched point-by-point through the coordinates.

bool criterion5(std::string& detail) {
  CodecConfig cfg;
  cfg.channels = 8;
  cfg.k_neighbors = 6;
  cfg.latent_channels = 3;
  Model<double> model = make_model<double>(cfg);
  model_init(model, 5);
  const Patch patch = synth_dataset(1, 0xC5, 2048)[0];
  const Index n = patch.size();

  auto run = [&](const Patch& p) {
    const MatX<double> latent = encode(p, model);
    const MatX<double> q = quantize(latent, QuantizeMode::kRound);
    return decode(q, p.positions, model);
  };
  const MatX<double> rec = run(patch);

  Rng rng(0x5EED);
  std::vector<Index> perm(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[rng.below(static_cast<uint64_t>(i) + 1)]);
  Patch shuffled = patch;
  for (Index i = 0; i < n; ++i) {
    shuffled.positions.row(perm[static_cast<size_t>(i)]) = patch.positions.row(i);
    shuffled.colors.row(perm[static_cast<size_t>(i)]) = patch.colors.row(i);
  }
  const MatX<double> rec_shuffled = run(shuffled);

  double worst = 0;
  for (Index i = 0; i < n; ++i)
    worst = std::max(worst, (rec_shuffled.row(perm[static_cast<size_t>(i)]) - rec.row(i))
                                .cwiseAbs()
                                .maxCoeff());
  detail = "max per-point |diff| " + fmt("%.3g", worst) + " across " + std::to_string(n) +
           " permuted points";
  return worst < 1e-5;
}

// ---------------------------------------------------------------------------
// Criterion 6: file-level determinism and geometry losslessness.

bool criterion6(std::string& detail) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pcac_acceptance_c6";
  fs::create_directories(dir);

  // build a cloud from synthetic patches (generic positions, non-trivial colors)
  const std::vector<Patch> parts = synth_dataset(3, 0xC6, 512);
  PointCloud pc;
  pc.positions.resize(3 * 512, 3);
  pc.colors.resize(3 * 512, 3);
  for (Index p = 0; p < 3; ++p) {
    pc.positions.middleRows(p * 512, 512) =
        parts[static_cast<size_t>(p)].positions * 0.3 +
        MatX<double>::Constant(512, 3, 0.35 * static_cast<double>(p));
    pc.colors.middleRows(p * 512, 512) =
        yuv_to_rgb<double>(parts[static_cast<size_t>(p)].colors);
  }
  pc.space = ColorSpace::kRgb;
  const std::string src = (dir / "src.ply").string();
  write_ply(pc, src);
  const PointCloud geometry = read_ply(src);

  CodecConfig cfg;
  cfg.channels = 8;
  cfg.k_neighbors = 6;
  cfg.latent_channels = 3;
  Model<float> model = make_model<float>(cfg);
  model_init(model, 6);
  EntropyModel<float> em = make_entropy_model<float>(cfg.latent_channels, 6);

  auto run = [&](int jobs) {
    const Bitstream bs = compress_cloud(geometry, model, em, 256, 0, jobs);
    const std::vector<uint8_t> packed = pack_bitstream(bs);
    const PointCloud rec = decompress_cloud(unpack_bitstream(packed), geometry, model, em, jobs);
    return std::make_pair(packed, rec);
  };
  const auto [packed1, rec1] = run(1);
  const auto [packed2, rec2] = run(3);

  if (packed1 != packed2) {
    detail = "bitstream differs between jobs=1 and jobs=3";
    return false;
  }
  if (rec1.positions != geometry.positions) {
    detail = "decoded positions differ from the geometry";
    return false;
  }
  if (rec1.colors != rec2.colors) {
    detail = "decoded colors differ between runs";
    return false;
  }
  // file round trip: positions in the written reconstruction match the source
  // file byte-for-byte
  const std::string rec_path = (dir / "rec.ply").string();
  write_ply(rec1, rec_path);
  const PointCloud back = read_ply(rec_path);
  if (back.positions != geometry.positions) {
    detail = "positions damaged by the PLY round trip";
    return false;
  }
  detail = "stream " + std::to_string(packed1.size()) +
           " bytes; two runs and two thread counts bit-identical; positions lossless";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 7: scaled-down rate-distortion ladder. Trains one model per
// lambda on synthetic patches and checks the operating points against a
// per-patch mean-color baseline.

struct LadderPoint {
  double lambda = 0, bpp = 0, psnr_y = 0;
};

bool criterion7(std::string& detail) {
  CodecConfig cfg;
  cfg.channels = 16;
  cfg.k_neighbors = 6;
  cfg.latent_channels = 3;

  const Index kTrainPatches = 512, kEvalPatches = 24, kPoints = 2048;
  const uint64_t kSeed = 714;
  const std::vector<double> lambdas = {8e-5, 1e-4, 3e-4, 6e-4};

  const std::vector<Patch> train_set =
      synth_dataset(kTrainPatches, mix64(kSeed ^ 0x11), kPoints);
  const std::vector<Patch> eval_set =
      synth_dataset(kEvalPatches, mix64(kSeed ^ 0x22), kPoints);

  std::vector<GeometryContext<float>> eval_ctx;
  eval_ctx.reserve(eval_set.size());
  for (const Patch& p : eval_set) eval_ctx.push_back(make_geometry_context<float>(p.positions, cfg));

  // baseline: predict each patch's mean color at (near) zero rate
  VecX<double> base_rec(kEvalPatches * kPoints), ref_y(kEvalPatches * kPoints);
  for (Index p = 0; p < kEvalPatches; ++p) {
    const auto& colors = eval_set[static_cast<size_t>(p)].colors;
    base_rec.segment(p * kPoints, kPoints).setConstant(colors.col(0).mean());
    ref_y.segment(p * kPoints, kPoints) = colors.col(0);
  }
  const double baseline_psnr = psnr(base_rec, ref_y);

  std::vector<LadderPoint> ladder;
  for (const double lambda : lambdas) {
    Model<float> model = make_model<float>(cfg);
    model_init(model, kSeed);
    EntropyModel<float> em = make_entropy_model<float>(cfg.latent_channels, kSeed);
    TrainConfig tc;
    tc.lambda = lambda;
    tc.steps = 5000;
    tc.lr_final = 2e-5;
    tc.batch = 2;
    tc.seed = kSeed;
    const std::vector<TrainLogRow> log = train(model, em, train_set, tc);

    const CodingTables tables = build_coding_tables(em);
    double bits = 0;
    VecX<double> rec_y(kEvalPatches * kPoints);
    for (Index p = 0; p < kEvalPatches; ++p) {
      const Patch& patch = eval_set[static_cast<size_t>(p)];
      const GeometryContext<float>& ctx = eval_ctx[static_cast<size_t>(p)];
      const MatX<float> colors = patch.colors.cast<float>();
      const MatXi sym = to_symbols(quantize(encode_features(model, ctx, colors),
                                            QuantizeMode::kRound));
      bits += 8.0 * static_cast<double>(ac_encode(sym, tables).size());
      const MatX<float> latent = sym.cast<float>();
      const MatX<float> rec =
          decode_features(model, ctx, latent).cwiseMax(0.0f).cwiseMin(1.0f);
      rec_y.segment(p * kPoints, kPoints) = rec.col(0).cast<double>();
    }
    LadderPoint pt;
    pt.lambda = lambda;
    pt.bpp = bits / static_cast<double>(kEvalPatches * kPoints);
    pt.psnr_y = psnr(rec_y, ref_y);
    ladder.push_back(pt);
    std::fprintf(stderr, "  lambda %.0e: final loss %.4g, bpp %.4f, psnr_y %.2f\n", lambda,
                 log.back().loss, pt.bpp, pt.psnr_y);
  }

  std::string pts = "baseline " + fmt("%.2f", baseline_psnr) + " dB;";
  for (const LadderPoint& p : ladder)
    pts += " (" + fmt("%.3f", p.bpp) + " bpp, " + fmt("%.2f", p.psnr_y) + " dB)";

  for (size_t i = 1; i < ladder.size(); ++i)
    if (ladder[i].bpp > ladder[i - 1].bpp + 1e-9) {
      detail = "rate not monotone in lambda: " + pts;
      return false;
    }
  for (const LadderPoint& p : ladder)
    if (p.psnr_y < baseline_psnr + 3.0) {
      detail = "operating point too close to the mean-color baseline: " + pts;
      return false;
    }

  RDCurve trained;
  trained.label = "trained";
  for (auto it = ladder.rbegin(); it != ladder.rend(); ++it)
    if (trained.points.empty() || it->bpp > trained.points.back().bpp + 1e-12)
      trained.points.push_back({it->bpp, it->psnr_y, it->psnr_y});
  if (trained.points.size() < 2) {
    detail = "operating points collapsed onto one rate: " + pts;
    return false;
  }
  RDCurve base;
  base.label = "baseline";
  base.points.push_back({trained.points.front().bpp, baseline_psnr, baseline_psnr});
  base.points.push_back({trained.points.back().bpp, baseline_psnr, baseline_psnr});
  const BDResult bd = bd_metrics(base, trained);
  if (!(bd.bd_psnr_db > 0)) {
    detail = "BD-PSNR vs baseline not positive (" + fmt("%.3f", bd.bd_psnr_db) + " dB): " + pts;
    return false;
  }
  detail = pts + "; BD-PSNR vs baseline +" + fmt("%.2f", bd.bd_psnr_db) + " dB";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 8: BD metric sanity on constructed curves.

bool criterion8(std::string& detail) {
  RDCurve a;
  a.label = "a";
  a.points = {{0.5, 30, 30}, {1.0, 33, 33}, {2.0, 36, 36}, {4.0, 39, 39}};
  const BDResult self = bd_metrics(a, a);
  if (std::abs(self.bd_br_percent) > 1e-6 || std::abs(self.bd_psnr_db) > 1e-6) {
    detail = "curve against itself gave (" + fmt("%.3g", self.bd_br_percent) + "%, " +
             fmt("%.3g", self.bd_psnr_db) + " dB)";
    return false;
  }
  RDCurve up = a;
  for (RDPoint& p : up.points) {
    p.psnr_y += 1.0;
    p.psnr_yuv += 1.0;
  }
  const BDResult gain = bd_metrics(a, up);
  if (std::abs(gain.bd_psnr_db - 1.0) > 1e-6) {
    detail = "+1 dB shift measured as " + fmt("%.9f", gain.bd_psnr_db) + " dB";
    return false;
  }
  RDCurve doubled = a;
  for (RDPoint& p : doubled.points) p.bpp *= 2.0;
  const BDResult cost = bd_metrics(a, doubled);
  if (std::abs(cost.bd_br_percent - 100.0) > 0.1) {
    detail = "doubled rate measured as " + fmt("%.6f", cost.bd_br_percent) + "%";
    return false;
  }
  detail = "self (0%, 0 dB); +1 dB shift " + fmt("%.6f", gain.bd_psnr_db) +
           " dB; doubled rate " + fmt("%.4f", cost.bd_br_percent) + "%";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 9: shipped defaults.

bool criterion9(std::string& detail) {
  const CodecConfig cfg;
  const bool ok = cfg.num_scales == 2 && cfg.sample_ratio == 4 && cfg.layers_per_block == 2 &&
                  cfg.channels == 256 && kDefaultPatchSize == 2048;
  detail = "scales " + std::to_string(cfg.num_scales) + ", ratio " +
           std::to_string(cfg.sample_ratio) + ", layers/stage " +
           std::to_string(cfg.layers_per_block) + ", width " + std::to_string(cfg.channels) +
           ", patch " + std::to_string(kDefaultPatchSize);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  struct Entry {
    int num;
    const char* title;
    bool (*fn)(std::string&);
  };
  const Entry entries[] = {
      {1, "entropy coding losslessness", criterion1},
      {2, "rate-estimate fidelity", criterion2},
      {3, "attention oracles and gradients", criterion3},
      {4, "zero-padded upsampling contract", criterion4},
      {5, "permutation invariance", criterion5},
      {6, "codec determinism and lossless geometry", criterion6},
      {7, "rate-distortion ladder vs mean-color baseline", criterion7},
      {8, "BD metric oracle", criterion8},
      {9, "default configuration", criterion9},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    if (!wanted.empty() && !wanted.count(e.num)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = e.fn(detail);
    } catch (const std::exception& ex) {
      detail = std::string("exception: ") + ex.what();
    }
    std::printf("[%s] criterion %d — %s: %s\n", ok ? "PASS" : "FAIL", e.num, e.title,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
