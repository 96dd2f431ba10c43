#pragma once

#include <Eigen/Dense>

#include <string>

namespace ldnn {

// Dense row-major 2-D array. Scalars are 1x1, row vectors 1xN. Flat storage
// (data()) is row-major, so product(shape) == size() always holds.
template <typename Scalar>
using TensorT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Tensor = TensorT<double>;
using Vector = Eigen::VectorXd;

template <typename Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& t) {
  return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

inline Tensor scalar_tensor(double v) {
  Tensor t(1, 1);
  t(0, 0) = v;
  return t;
}

}  // namespace ldnn
