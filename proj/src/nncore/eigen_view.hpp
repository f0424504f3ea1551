#pragma once

#include <Eigen/Dense>

#include "msp/nncore/tensor.hpp"

namespace msp::nn::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline ConstMatrixMap view(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline MatrixMap view(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline ConstMatrixMap view(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline MatrixMap view(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace msp::nn::detail
