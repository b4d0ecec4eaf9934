#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcac {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVec3 = Eigen::Matrix<Scalar, 1, 3>;

using Index = Eigen::Index;
using IndexVec = std::vector<Index>;
using IndexMat = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;
using MatXi = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Thrown when an operation's input violates its stated preconditions.
class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown on malformed or inconsistent external data (files, streams).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pcac
