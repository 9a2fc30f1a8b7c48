#pragma once

#include <Eigen/Dense>

namespace colpro {

/// Scalar type used throughout the library. Double everywhere: the numeric
/// acceptance gates (finite-difference agreement, bit-identical replays) need
/// the headroom and nothing here is speed-critical enough to trade it away.
using Real = double;

/// Dense row-major matrix, templated on scalar so tests can instantiate
/// reference computations at other precisions.
template <typename Scalar>
using DenseMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = DenseMatrix<Real>;
using RowVec = DenseVector<Real>;
using Index = Eigen::Index;

}  // namespace colpro
