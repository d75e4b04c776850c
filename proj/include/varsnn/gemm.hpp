#pragma once

// Matrix-multiply kernels for the tape ops. Everything above this file is
// hand-built; the inner product itself is delegated to Eigen, which is the
// only place Eigen appears in the project. All matrices are dense row-major.

#define EIGEN_DONT_PARALLELIZE 1
#include <Eigen/Core>

namespace varsnn::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// C[m x n] = (or +=) A[m x k] * B[k x n]
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  CMapMat<T> A(a, m, k);
  CMapMat<T> B(b, k, n);
  MapMat<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B;
  } else {
    C.noalias() = A * B;
  }
}

// C[m x n] = (or +=) A^T * B, with A stored as [k x m]
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  CMapMat<T> A(a, k, m);
  CMapMat<T> B(b, k, n);
  MapMat<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B;
  }
}

// C[m x n] = (or +=) A * B^T, with B stored as [n x k]
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  CMapMat<T> A(a, m, k);
  CMapMat<T> B(b, n, k);
  MapMat<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() = A * B.transpose();
  }
}

}  // namespace varsnn::detail
