#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pcac/sampling.hpp"
#include "pcac/types.hpp"

namespace pcac {

enum class ColorSpace { kRgb, kYuv };

/// Positions with per-point colors in [0,1]. Colors are 8-bit at the file
/// boundary and real-valued everywhere else.
struct PointCloud {
  Mat3<double> positions;
  Mat3<double> colors;
  ColorSpace space = ColorSpace::kRgb;

  Index size() const { return positions.rows(); }
};

inline void validate(const PointCloud& pc) {
  if (pc.positions.rows() < 1) throw PreconditionError("point cloud is empty");
  if (pc.positions.rows() != pc.colors.rows())
    throw PreconditionError("positions and colors row counts differ");
  if (!pc.positions.allFinite()) throw PreconditionError("positions contain non-finite values");
  if (pc.colors.minCoeff() < -1e-6 || pc.colors.maxCoeff() > 1.0 + 1e-6)
    throw PreconditionError("colors outside [0,1]");
}

/// Fixed-size normalized coding unit cut from a parent cloud. parent_indices
/// maps rows back to parent rows; -1 marks spillover/duplicate filler rows
/// that merge_patches discards.
struct Patch {
  Mat3<double> positions;   // normalized: centroid at origin, max norm 1
  Mat3<double> colors;
  IndexVec parent_indices;  // one entry per row
  RowVec3<double> centroid = RowVec3<double>::Zero();
  double scale = 1.0;

  Index size() const { return positions.rows(); }

  Mat3<double> denormalize() const {
    return (positions * scale).rowwise() + centroid;
  }
};

/// One operating point of a rate-distortion curve.
struct RDPoint {
  double bpp = 0.0;
  double psnr_y = 0.0;
  double psnr_yuv = 0.0;
};

// BT.709 full-range analysis pair. Chroma is offset to land in [0,1].
template <typename Scalar>
MatX<Scalar> rgb_to_yuv(const MatX<Scalar>& rgb) {
  MatX<Scalar> out(rgb.rows(), 3);
  for (Index i = 0; i < rgb.rows(); ++i) {
    const Scalar r = rgb(i, 0), g = rgb(i, 1), b = rgb(i, 2);
    const Scalar y = Scalar(0.2126) * r + Scalar(0.7152) * g + Scalar(0.0722) * b;
    out(i, 0) = y;
    out(i, 1) = (b - y) / Scalar(1.8556) + Scalar(0.5);
    out(i, 2) = (r - y) / Scalar(1.5748) + Scalar(0.5);
  }
  return out.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

template <typename Scalar>
MatX<Scalar> yuv_to_rgb(const MatX<Scalar>& yuv) {
  MatX<Scalar> out(yuv.rows(), 3);
  for (Index i = 0; i < yuv.rows(); ++i) {
    const Scalar y = yuv(i, 0);
    const Scalar b = (yuv(i, 1) - Scalar(0.5)) * Scalar(1.8556) + y;
    const Scalar r = (yuv(i, 2) - Scalar(0.5)) * Scalar(1.5748) + y;
    const Scalar g = (y - Scalar(0.2126) * r - Scalar(0.0722) * b) / Scalar(0.7152);
    out(i, 0) = r;
    out(i, 1) = g;
    out(i, 2) = b;
  }
  return out.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

namespace detail {

inline Index nearest_center_with_room(const RowVec3<double>& p, const Mat3<double>& centers,
                                      const std::vector<Index>& load, Index capacity) {
  Index best = -1;
  double best_d = 0.0;
  for (Index c = 0; c < centers.rows(); ++c) {
    if (load[static_cast<size_t>(c)] >= capacity) continue;
    const double d = (centers.row(c) - p).squaredNorm();
    if (best < 0 || d < best_d || (d == best_d && c < best)) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

}  // namespace detail

/// Cut a cloud into ceil(N / patch_size) patches of exactly patch_size rows.
/// Centers come from deterministic FPS; each point is owned by its nearest
/// center, subject to a patch capacity of patch_size (points claim seats in
/// ascending order of distance to their nearest center). Patches are topped
/// up with the nearest unowned cloud points, then with cyclic duplicates of
/// their own rows; both kinds of filler carry parent_index -1. Every patch is
/// normalized to the closed unit ball.
///
/// `seed` is reserved for future randomized patching modes and is recorded by
/// callers that need to reproduce the patching; the current algorithm is
/// fully deterministic and does not consume it.
inline std::vector<Patch> make_patches(const PointCloud& pc, Index patch_size = 2048,
                                       std::uint64_t seed = 0) {
  (void)seed;
  validate(pc);
  const Index n = pc.size();
  const Index m = (n + patch_size - 1) / patch_size;

  const IndexVec center_rows = fps<double>(pc.positions, m);
  Mat3<double> centers(m, 3);
  for (Index c = 0; c < m; ++c) centers.row(c) = pc.positions.row(center_rows[static_cast<size_t>(c)]);

  // Claim order: points nearest their own center first. Capacity forces a
  // point to its next-nearest center with room, so ownership stays a
  // partition even when a center attracts more than patch_size points.
  std::vector<std::pair<double, Index>> order(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    double dmin = (centers.row(0) - pc.positions.row(i)).squaredNorm();
    for (Index c = 1; c < m; ++c)
      dmin = std::min(dmin, (centers.row(c) - pc.positions.row(i)).squaredNorm());
    order[static_cast<size_t>(i)] = {dmin, i};
  }
  std::sort(order.begin(), order.end());

  std::vector<IndexVec> owned(static_cast<size_t>(m));
  std::vector<Index> load(static_cast<size_t>(m), 0);
  std::vector<Index> owner(static_cast<size_t>(n), -1);
  for (const auto& [dist, i] : order) {
    const Index c = detail::nearest_center_with_room(pc.positions.row(i), centers, load, patch_size);
    owned[static_cast<size_t>(c)].push_back(i);
    owner[static_cast<size_t>(i)] = c;
    ++load[static_cast<size_t>(c)];
  }

  std::vector<Patch> patches(static_cast<size_t>(m));
  std::vector<std::pair<double, Index>> spill;
  for (Index c = 0; c < m; ++c) {
    Patch& patch = patches[static_cast<size_t>(c)];
    IndexVec rows = owned[static_cast<size_t>(c)];
    const Index num_owned = static_cast<Index>(rows.size());

    // Nearest unowned cloud points provide context up to patch_size.
    if (num_owned < patch_size && n > num_owned) {
      spill.clear();
      for (Index i = 0; i < n; ++i)
        if (owner[static_cast<size_t>(i)] != c)
          spill.emplace_back((pc.positions.row(i) - centers.row(c)).squaredNorm(), i);
      const Index want = std::min<Index>(patch_size - num_owned, static_cast<Index>(spill.size()));
      std::partial_sort(spill.begin(), spill.begin() + want, spill.end());
      for (Index j = 0; j < want; ++j) rows.push_back(spill[static_cast<size_t>(j)].second);
    }

    const Index real_rows = static_cast<Index>(rows.size());
    patch.positions.resize(patch_size, 3);
    patch.colors.resize(patch_size, 3);
    patch.parent_indices.assign(static_cast<size_t>(patch_size), -1);
    for (Index r = 0; r < patch_size; ++r) {
      const Index src = rows[static_cast<size_t>(r % real_rows)];  // cyclic duplicates past the end
      patch.positions.row(r) = pc.positions.row(src);
      patch.colors.row(r) = pc.colors.row(src);
      if (r < num_owned) patch.parent_indices[static_cast<size_t>(r)] = src;
    }

    patch.centroid = patch.positions.colwise().mean();
    patch.positions.rowwise() -= patch.centroid;
    patch.scale = std::sqrt(patch.positions.rowwise().squaredNorm().maxCoeff());
    if (patch.scale > 0.0)
      patch.positions /= patch.scale;
    else
      patch.scale = 1.0;  // degenerate single-location patch
  }
  return patches;
}

/// Scatter decoded per-patch colors back onto the parent cloud. Filler rows
/// are dropped; every parent row must be covered by exactly one non-filler
/// patch row.
inline Mat3<double> merge_patches(const std::vector<Patch>& patches,
                                  const std::vector<Mat3<double>>& decoded_colors, Index n) {
  if (patches.size() != decoded_colors.size())
    throw PreconditionError("merge_patches: patch/color list size mismatch");
  Mat3<double> out(n, 3);
  std::vector<bool> covered(static_cast<size_t>(n), false);
  for (size_t p = 0; p < patches.size(); ++p) {
    const Patch& patch = patches[p];
    const Mat3<double>& colors = decoded_colors[p];
    if (colors.rows() != patch.size())
      throw PreconditionError("merge_patches: decoded color rows do not match patch size");
    for (Index r = 0; r < patch.size(); ++r) {
      const Index parent = patch.parent_indices[static_cast<size_t>(r)];
      if (parent < 0) continue;
      if (parent >= n) throw PreconditionError("merge_patches: parent index out of range");
      if (covered[static_cast<size_t>(parent)])
        throw PreconditionError("merge_patches: parent index covered twice");
      covered[static_cast<size_t>(parent)] = true;
      out.row(parent) = colors.row(r);
    }
  }
  for (Index i = 0; i < n; ++i)
    if (!covered[static_cast<size_t>(i)]) throw PreconditionError("patch cover incomplete");
  return out;
}

}  // namespace pcac
