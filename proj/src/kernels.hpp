#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace glab::kernels {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

// C (m x n) (+)= op(A) * op(B) where op(A) is m x k and op(B) is k x n.
// Row-major storage; trans_a / trans_b select A^T / B^T.
inline void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                 bool trans_a, bool trans_b, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto K = static_cast<Eigen::Index>(k);
  const auto N = static_cast<Eigen::Index>(n);
  RowMap C(c, M, N);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) {
    C.noalias() += ConstRowMap(a, M, K) * ConstRowMap(b, K, N);
  } else if (!trans_a && trans_b) {
    C.noalias() += ConstRowMap(a, M, K) * ConstRowMap(b, N, K).transpose();
  } else if (trans_a && !trans_b) {
    C.noalias() += ConstRowMap(a, K, M).transpose() * ConstRowMap(b, K, N);
  } else {
    C.noalias() += ConstRowMap(a, K, M).transpose() * ConstRowMap(b, N, K).transpose();
  }
}

}  // namespace glab::kernels
