#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "pcac/bitstream.hpp"
#include "pcac/checkpoint.hpp"
#include "pcac/codec.hpp"
#include "pcac/coding.hpp"
#include "pcac/entropy.hpp"
#include "pcac/evalmetrics.hpp"
#include "pcac/pointcloud.hpp"

namespace pcac {

namespace detail {

/// Runs fn(i) for i in [0,n) across `jobs` threads. Work items must be
/// independent; the first exception wins and is rethrown on the caller.
inline void parallel_for(Index n, int jobs, const std::function<void(Index)>& fn) {
  if (jobs < 1) jobs = 1;
  if (jobs == 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = static_cast<int>(std::min<Index>(jobs, n));
  pool.reserve(static_cast<size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline uint32_t owned_rows(const Patch& patch) {
  uint32_t n = 0;
  for (const Index parent : patch.parent_indices)
    if (parent >= 0) ++n;
  return n;
}

}  // namespace detail

/// Compresses the attributes of a whole cloud against its own geometry.
/// Patches are processed independently (optionally in parallel); the result
/// does not depend on `jobs`.
template <typename Scalar>
Bitstream compress_cloud(const PointCloud& pc, Model<Scalar>& model, EntropyModel<Scalar>& em,
                         Index patch_size = kDefaultPatchSize, uint64_t patch_seed = 0,
                         int jobs = 1) {
  validate(pc);
  if (em.channels != model.cfg.latent_channels)
    throw PreconditionError("compress: entropy channels must match latent channels");
  PointCloud work = pc;
  if (pc.space == ColorSpace::kRgb) {
    work.colors = rgb_to_yuv<double>(pc.colors);
    work.space = ColorSpace::kYuv;
  }
  const std::vector<Patch> patches = make_patches(work, patch_size, patch_seed);
  const CodingTables tables = build_coding_tables(em);

  Bitstream bs;
  bs.config_hash = config_hash(model, em);
  bs.n_points = static_cast<uint64_t>(pc.size());
  bs.patch_seed = patch_seed;
  bs.patch_size = static_cast<uint32_t>(patch_size);
  bs.patches.resize(patches.size());

  detail::parallel_for(static_cast<Index>(patches.size()), jobs, [&](Index i) {
    const Patch& patch = patches[static_cast<size_t>(i)];
    const MatX<Scalar> latent = encode(patch, model);
    const MatXi symbols = to_symbols(quantize(latent, QuantizeMode::kRound));
    PatchRecord& rec = bs.patches[static_cast<size_t>(i)];
    rec.owned_points = detail::owned_rows(patch);
    rec.latent_rows = static_cast<uint32_t>(symbols.rows());
    rec.payload = ac_encode(symbols, tables);
  });
  return bs;
}

/// Inverse of compress_cloud. `geometry` must be the cloud the stream was
/// produced from (its colors are ignored); the output carries those positions
/// unchanged and decoded YUV colors.
template <typename Scalar>
PointCloud decompress_cloud(const Bitstream& bs, const PointCloud& geometry,
                            Model<Scalar>& model, EntropyModel<Scalar>& em, int jobs = 1) {
  if (em.channels != model.cfg.latent_channels)
    throw PreconditionError("decompress: entropy channels must match latent channels");
  if (bs.config_hash != config_hash(model, em))
    throw FormatError("model/stream mismatch: stream was produced by a different model");
  if (bs.n_points != static_cast<uint64_t>(geometry.size()))
    throw FormatError("geometry does not match stream (point count differs)");

  PointCloud shell;
  shell.positions = geometry.positions;
  shell.colors = Mat3<double>::Zero(geometry.size(), 3);
  shell.space = ColorSpace::kYuv;
  const std::vector<Patch> patches =
      make_patches(shell, static_cast<Index>(bs.patch_size), bs.patch_seed);
  if (patches.size() != bs.patches.size())
    throw FormatError("geometry does not match stream (patch count differs)");
  const CodingTables tables = build_coding_tables(em);

  std::vector<Mat3<double>> decoded(patches.size());
  detail::parallel_for(static_cast<Index>(patches.size()), jobs, [&](Index i) {
    const Patch& patch = patches[static_cast<size_t>(i)];
    const PatchRecord& rec = bs.patches[static_cast<size_t>(i)];
    if (detail::owned_rows(patch) != rec.owned_points)
      throw FormatError("geometry does not match stream (patch layout differs)");
    const MatXi symbols = ac_decode(rec.payload, static_cast<Index>(rec.latent_rows),
                                    model.cfg.latent_channels, tables);
    const MatX<Scalar> latent = symbols.cast<Scalar>();
    decoded[static_cast<size_t>(i)] =
        decode(latent, patch.positions, model).template cast<double>();
  });

  PointCloud out;
  out.positions = geometry.positions;
  out.colors = merge_patches(patches, decoded, geometry.size());
  out.space = ColorSpace::kYuv;
  return out;
}

/// Compress + decompress in memory and measure one rate-distortion operating
/// point against the original colors.
template <typename Scalar>
RDPoint evaluate_model(const PointCloud& pc, Model<Scalar>& model, EntropyModel<Scalar>& em,
                       Index patch_size = kDefaultPatchSize, int jobs = 1) {
  const Bitstream bs = compress_cloud(pc, model, em, patch_size, 0, jobs);
  const PointCloud rec = decompress_cloud(bs, pc, model, em, jobs);
  const MatX<double> ref_yuv =
      pc.space == ColorSpace::kRgb ? MatX<double>(rgb_to_yuv<double>(pc.colors)) : MatX<double>(pc.colors);
  RDPoint pt;
  pt.bpp = bpp(bs);
  pt.psnr_y = psnr(VecX<double>(rec.colors.col(0)), VecX<double>(ref_yuv.col(0)));
  pt.psnr_yuv = psnr_yuv(MatX<double>(rec.colors), ref_yuv);
  return pt;
}

}  // namespace pcac
