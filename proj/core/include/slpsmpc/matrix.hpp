#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace slpsmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Kronecker product A ⊗ B.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Column-stacking vectorization.
inline Vector vec(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

inline Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw std::invalid_argument("unvec: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

/// Checks vec(A·B·C) = (Cᵀ ⊗ A)·vec(B) by direct evaluation of both sides.
bool kron_vec_identity_check(const Matrix& a, const Matrix& b, const Matrix& c,
                             double tol = 1e-10);

/// Dimension of the symmetric vectorization of an n×n matrix.
constexpr Eigen::Index svec_dim(Eigen::Index n) { return n * (n + 1) / 2; }

/// Scaled symmetric vectorization: off-diagonals carry √2 so that
/// svec(X)ᵀ·svec(Y) = tr(X·Y). Lower triangle, column-major.
Vector svec(const Matrix& x);
Matrix smat(const Vector& v);

}  // namespace slpsmpc
