#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace spectral_inform {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigen-decomposition of a real symmetric matrix, eigenvalues in
/// non-increasing order. `vectors` is empty when not requested; otherwise
/// column k pairs with values(k).
struct SymmetricEigensystem {
  Vector values;
  Matrix vectors;
};

/// Symmetric eigen-decomposition (Householder tridiagonalization and implicit
/// QL, all in Eigen so the arithmetic does not depend on a BLAS picked at run
/// time). Only the lower triangle of `a` is read.
inline SymmetricEigensystem symmetric_eigen(const Matrix& a, bool want_vectors = true) {
  if (a.rows() != a.cols()) throw InputError("symmetric_eigen: matrix is not square");
  SymmetricEigensystem out;
  if (a.rows() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("symmetric eigen-decomposition did not converge");
  out.values = es.eigenvalues().reverse();
  if (want_vectors) out.vectors = es.eigenvectors().rowwise().reverse();
  return out;
}

/// Singular values (non-increasing) and, on request, left singular vectors of
/// an n x m matrix, computed from the smaller Gram matrix. Accurate for the
/// O(1) singular values this library inspects; the relative accuracy of tiny
/// singular values is lost, which no caller relies on.
struct GramSvd {
  Vector values;  // min(n, m) singular values
  Matrix left;    // n x min(n,m) left singular vectors (empty unless requested)
  Matrix right;   // m x min(n,m) right singular vectors (empty unless requested)
};

inline GramSvd gram_svd(const Matrix& x, bool want_left = false, bool want_right = false) {
  const bool wide = x.rows() <= x.cols();
  const Eigen::Index k = std::min(x.rows(), x.cols());
  Matrix gram = Matrix::Zero(k, k);
  if (wide)
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x);
  else
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  const bool need_vectors = want_left || want_right;
  SymmetricEigensystem es = symmetric_eigen(gram, need_vectors);
  GramSvd out;
  out.values = es.values.cwiseMax(0.0).cwiseSqrt();
  if (!need_vectors) return out;
  // es.vectors are singular vectors on the short side; recover the other side
  // as x^T u / sigma (or x v / sigma).
  const Matrix& short_side = es.vectors;
  auto other_side = [&](const Matrix& base, bool transpose) {
    Matrix o = transpose ? Matrix(x.transpose() * base) : Matrix(x * base);
    for (Eigen::Index i = 0; i < k; ++i) {
      const double s = out.values(i);
      if (s > 0.0)
        o.col(i) /= s;
      else
        o.col(i).setZero();
    }
    return o;
  };
  if (wide) {
    if (want_left) out.left = short_side;
    if (want_right) out.right = other_side(short_side, true);
  } else {
    if (want_right) out.right = short_side;
    if (want_left) out.left = other_side(short_side, false);
  }
  return out;
}

/// Thin SVD with full accuracy (Eigen's divide-and-conquer); for the small
/// matrices of the exact finite-n checks.
struct ThinSvd {
  Vector values;
  Matrix left;
  Matrix right;
};

inline ThinSvd accurate_svd(const Matrix& x) {
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.singularValues(), svd.matrixU(), svd.matrixV()};
}

/// The symmetric dilation [[0, X], [X^T, 0]]; its non-negative eigenvalues are
/// the singular values of X (plus |n - m| zeros).
inline Matrix symmetric_dilation(const Matrix& x) {
  const Eigen::Index n = x.rows(), m = x.cols();
  Matrix d = Matrix::Zero(n + m, n + m);
  d.topRightCorner(n, m) = x;
  d.bottomLeftCorner(m, n) = x.transpose();
  return d;
}

/// Modified Gram-Schmidt (two passes) on the columns of `v`, in place.
inline void orthonormalize_columns(Matrix& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i) v.col(j) -= v.col(i).dot(v.col(j)) * v.col(i);
    const double norm = v.col(j).norm();
    if (!(norm > 0.0)) throw InputError("orthonormalize_columns: rank-deficient input");
    v.col(j) /= norm;
  }
}

}  // namespace spectral_inform
