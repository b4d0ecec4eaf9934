#pragma once

#include <algorithm>
#include <numeric>

#include "pcac/types.hpp"

namespace pcac {

/// KNN result for a query set against a reference set. Row i of `indices`
/// lists the k nearest reference rows of query i, sorted by ascending
/// squared distance (ties by ascending index). `rel_pos` stores the K x 3
/// block of reference-minus-query offsets for query i at rows [i*k, (i+1)*k).
template <typename Scalar>
struct Neighborhood {
  IndexMat indices;       // N x K
  Mat3<Scalar> rel_pos;   // (N*K) x 3

  Index num_queries() const { return indices.rows(); }
  Index k() const { return indices.cols(); }
};

namespace detail {

// Strict-weak ordering used by fps: prefer larger distance, then
// lexicographically smaller coordinates, then smaller index.
template <typename Scalar>
bool fps_better(Scalar dist_a, const RowVec3<Scalar>& pa, Index ia, Scalar dist_b,
                const RowVec3<Scalar>& pb, Index ib) {
  if (dist_a != dist_b) return dist_a > dist_b;
  for (int c = 0; c < 3; ++c)
    if (pa[c] != pb[c]) return pa[c] < pb[c];
  return ia < ib;
}

}  // namespace detail

/// Greedy farthest point sampling in selection order. The first pick is the
/// point farthest from the centroid; every later pick maximizes the minimum
/// distance to the points already selected. Ties break on lexicographic
/// coordinates, then index, so the result depends only on the point multiset.
template <typename Scalar>
IndexVec fps(const Mat3<Scalar>& positions, Index m) {
  const Index n = positions.rows();
  if (m < 1 || m > n)
    throw PreconditionError("fps: m must satisfy 1 <= m <= N, got m=" + std::to_string(m) +
                            " N=" + std::to_string(n));

  const RowVec3<Scalar> centroid = positions.colwise().mean();
  VecX<Scalar> min_dist = (positions.rowwise() - centroid).rowwise().squaredNorm();

  IndexVec picked;
  picked.reserve(static_cast<size_t>(m));

  for (Index step = 0; step < m; ++step) {
    Index best = -1;
    for (Index i = 0; i < n; ++i) {
      if (min_dist[i] < Scalar(0)) continue;  // already selected
      if (best < 0 || detail::fps_better<Scalar>(min_dist[i], positions.row(i), i,
                                                 min_dist[best], positions.row(best), best)) {
        best = i;
      }
    }
    picked.push_back(best);
    min_dist[best] = Scalar(-1);
    for (Index i = 0; i < n; ++i) {
      if (min_dist[i] < Scalar(0)) continue;
      const Scalar d = (positions.row(i) - positions.row(best)).squaredNorm();
      // the centroid score only seeds the first pick; it must not cap later steps
      if (step == 0 || d < min_dist[i]) min_dist[i] = d;
    }
  }
  return picked;
}

/// Exact k-nearest-neighbor search by squared Euclidean distance.
template <typename Scalar>
Neighborhood<Scalar> knn(const Mat3<Scalar>& queries, const Mat3<Scalar>& refs, Index k) {
  const Index nq = queries.rows();
  const Index nr = refs.rows();
  if (k < 1 || k > nr)
    throw PreconditionError("knn: k must satisfy 1 <= k <= R, got k=" + std::to_string(k) +
                            " R=" + std::to_string(nr));

  Neighborhood<Scalar> out;
  out.indices.resize(nq, k);
  out.rel_pos.resize(nq * k, 3);

  std::vector<std::pair<Scalar, Index>> cand(static_cast<size_t>(nr));
  const auto by_dist_then_index = [](const std::pair<Scalar, Index>& a,
                                     const std::pair<Scalar, Index>& b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  };

  for (Index i = 0; i < nq; ++i) {
    const RowVec3<Scalar> q = queries.row(i);
    for (Index j = 0; j < nr; ++j) cand[j] = {(refs.row(j) - q).squaredNorm(), j};
    std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end(), by_dist_then_index);
    std::sort(cand.begin(), cand.begin() + k, by_dist_then_index);
    for (Index j = 0; j < k; ++j) {
      out.indices(i, j) = cand[j].second;
      out.rel_pos.row(i * k + j) = refs.row(cand[j].second) - q;
    }
  }
  return out;
}

/// Nearest reference row for every query row.
template <typename Scalar>
IndexVec nearest(const Mat3<Scalar>& queries, const Mat3<Scalar>& refs) {
  if (refs.rows() < 1) throw PreconditionError("nearest: reference set is empty");
  const Neighborhood<Scalar> nbh = knn<Scalar>(queries, refs, 1);
  IndexVec out(static_cast<size_t>(queries.rows()));
  for (Index i = 0; i < queries.rows(); ++i) out[i] = nbh.indices(i, 0);
  return out;
}

/// Gather feature rows by a neighborhood index table: row i*K+j of the output
/// is features.row(indices(i, j)).
template <typename Scalar>
MatX<Scalar> group(const MatX<Scalar>& features, const IndexMat& indices) {
  const Index n = indices.rows();
  const Index k = indices.cols();
  MatX<Scalar> out(n * k, features.cols());
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) {
      const Index r = indices(i, j);
      if (r < 0 || r >= features.rows())
        throw PreconditionError("group: index out of range: " + std::to_string(r));
      out.row(i * k + j) = features.row(r);
    }
  }
  return out;
}

/// Adjoint of group: scatter-add gradient rows back onto the feature rows.
template <typename Scalar>
void scatter_add(const MatX<Scalar>& grouped_grad, const IndexMat& indices,
                 MatX<Scalar>& features_grad) {
  const Index n = indices.rows();
  const Index k = indices.cols();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j) features_grad.row(indices(i, j)) += grouped_grad.row(i * k + j);
}

}  // namespace pcac
