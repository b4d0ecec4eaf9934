#pragma once

#include <cmath>
#include <string>

#include "pcac/rng.hpp"
#include "pcac/types.hpp"

namespace pcac {

/// A learnable dense array: value plus accumulated gradient of the same shape.
/// Biases are stored as 1-row tensors.
template <typename Scalar>
struct Tensor {
  MatX<Scalar> v, g;

  void resize(Index rows, Index cols) {
    v.setZero(rows, cols);
    g.setZero(rows, cols);
  }
  Index rows() const { return v.rows(); }
  Index cols() const { return v.cols(); }
  Index size() const { return v.size(); }
  void zero_grad() { g.setZero(); }
};

/// y = x·w + b with b broadcast over rows.
template <typename Scalar, typename Derived>
MatX<Scalar> affine(const Eigen::MatrixBase<Derived>& x, const Tensor<Scalar>& w,
                    const Tensor<Scalar>& b) {
  return (x * w.v).rowwise() + b.v.row(0);
}

/// Accumulates parameter gradients for y = x·w (+ b) and returns dL/dx.
/// Pass b = nullptr for bias-free maps.
template <typename Scalar, typename Derived>
MatX<Scalar> affine_backward(const MatX<Scalar>& d_out, const Eigen::MatrixBase<Derived>& x,
                             Tensor<Scalar>& w, Tensor<Scalar>* b) {
  w.g.noalias() += x.transpose() * d_out;
  if (b) b->g.row(0) += d_out.colwise().sum();
  return d_out * w.v.transpose();
}

/// Fills a weight tensor with uniform values in ±sqrt(3/fan_in); fan_in is
/// the input dimension (row count) of the x·w layout.
template <typename Scalar>
void init_weight(Tensor<Scalar>& w, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(w.v.rows()));
  for (Index c = 0; c < w.v.cols(); ++c)
    for (Index r = 0; r < w.v.rows(); ++r)
      w.v(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
}

/// Leaf naming convention: the last path component starts with 'w' for
/// weights and 'b' for biases, so initializers can tell them apart.
inline bool is_bias_name(const std::string& name) {
  const size_t dot = name.find_last_of('.');
  const size_t leaf = (dot == std::string::npos) ? 0 : dot + 1;
  return leaf < name.size() && name[leaf] == 'b';
}

}  // namespace pcac
