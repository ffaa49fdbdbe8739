// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

namespace apf {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix34 = Eigen::Matrix<Scalar, 3, 4>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using ArrayXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using ArrayXXb = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Color transform that maps homogeneous RGB [r,g,b,1] to itself.
template <typename Scalar>
Matrix34<Scalar> identity_transform() {
  Matrix34<Scalar> m = Matrix34<Scalar>::Zero();
  m(0, 0) = Scalar(1);
  m(1, 1) = Scalar(1);
  m(2, 2) = Scalar(1);
  return m;
}

}  // namespace apf
