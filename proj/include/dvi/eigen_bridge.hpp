#pragma once

#include <Eigen/Dense>

#include "dvi/tensor.hpp"

namespace dvi {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const MatrixRM> as_matrix(const Tensor& t) {
  return {t.data(), t.rows(), t.cols()};
}

inline Eigen::Map<MatrixRM> as_matrix(Tensor& t) {
  return {t.data(), t.rows(), t.cols()};
}

inline Eigen::Map<const Eigen::VectorXd> as_vector(const Tensor& t) {
  return {t.data(), t.size()};
}

inline Eigen::Map<Eigen::VectorXd> as_vector(Tensor& t) {
  return {t.data(), t.size()};
}

inline Tensor from_matrix(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  as_matrix(t) = m;
  return t;
}

inline Tensor from_vector(const Eigen::VectorXd& v) {
  Tensor t({static_cast<int>(v.size())});
  as_vector(t) = v;
  return t;
}

}  // namespace dvi
