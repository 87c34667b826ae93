#include "slpsmpc/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace slpsmpc {

bool kron_vec_identity_check(const Matrix& a, const Matrix& b, const Matrix& c, double tol) {
  if (a.cols() != b.rows() || b.cols() != c.rows())
    throw std::invalid_argument("kron_vec_identity_check: dimensions not conformable");
  const Vector lhs = vec(a * b * c);
  const Vector rhs = kron(c.transpose(), a) * vec(b);
  return (lhs - rhs).norm() <= tol * (1.0 + lhs.norm());
}

Vector svec(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Vector v(svec_dim(n));
  const double s2 = std::sqrt(2.0);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    v[k++] = x(j, j);
    for (Eigen::Index i = j + 1; i < n; ++i) v[k++] = s2 * 0.5 * (x(i, j) + x(j, i));
  }
  return v;
}

Matrix smat(const Vector& v) {
  // Solve n(n+1)/2 = len for n.
  const Eigen::Index len = v.size();
  const Eigen::Index n = static_cast<Eigen::Index>((std::sqrt(8.0 * double(len) + 1.0) - 1.0) / 2.0 + 0.5);
  if (svec_dim(n) != len) throw std::invalid_argument("smat: invalid length");
  Matrix x(n, n);
  const double inv_s2 = 1.0 / std::sqrt(2.0);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    x(j, j) = v[k++];
    for (Eigen::Index i = j + 1; i < n; ++i) {
      x(i, j) = x(j, i) = inv_s2 * v[k++];
    }
  }
  return x;
}

double spectral_radius(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix psd_sqrt(const Matrix& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("psd_sqrt: matrix must be square");
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + s.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("psd_sqrt: matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  const Vector& ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-9) throw std::invalid_argument("psd_sqrt: matrix is not PSD");
  Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

bool is_symmetric_psd(const Matrix& s, double tol) {
  if (s.rows() != s.cols()) return false;
  const double scale = 1.0 + s.cwiseAbs().maxCoeff();
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& w, LyapunovForm form) {
  if (a.rows() != a.cols() || w.rows() != w.cols() || a.rows() != w.rows())
    throw std::invalid_argument("solve_discrete_lyapunov: dimension mismatch");
  if (spectral_radius(a) >= 1.0 - 1e-9)
    throw std::runtime_error("solve_discrete_lyapunov: matrix is not Schur stable");

  // Both conventions reduce to X = M·X·Mᵀ + W.
  const Matrix m = (form == LyapunovForm::Covariance) ? a : Matrix(a.transpose());
  const Eigen::Index n = a.rows();
  Matrix x;
  if (n <= 30) {
    const Matrix lhs = Matrix::Identity(n * n, n * n) - kron(m, m);
    const Vector rhs = vec(w);
    x = unvec(lhs.partialPivLu().solve(rhs), n, n);
  } else {
    x = w;
    Matrix term = w;
    for (int it = 0; it < 100000; ++it) {
      term = m * term * m.transpose();
      x += term;
      if (term.cwiseAbs().maxCoeff() <= 1e-16 * (1.0 + x.cwiseAbs().maxCoeff())) break;
    }
  }
  return 0.5 * (x + x.transpose());
}

const Matrix& CovarianceSequence::at(int i) const {
  if (i < 0) throw std::out_of_range("CovarianceSequence::at: negative index");
  if (i < static_cast<int>(sigma_x.size())) return sigma_x[static_cast<size_t>(i)];
  return sigma_x_inf;
}

void CovarianceSequence::extend_to(int imax, const Matrix& a_k, const Matrix& sigma_w) {
  while (static_cast<int>(sigma_x.size()) <= imax) {
    const Matrix& prev = sigma_x.back();
    Matrix next = a_k * prev * a_k.transpose() + sigma_w;
    sigma_x.push_back(0.5 * (next + next.transpose()));
  }
}

CovarianceSequence tail_covariance_sequence(const Matrix& a_k, const Matrix& sigma_w,
                                            int imax) {
  if (imax < 0) throw std::invalid_argument("tail_covariance_sequence: imax must be >= 0");
  CovarianceSequence seq;
  seq.sigma_x.push_back(Matrix::Zero(a_k.rows(), a_k.cols()));
  seq.extend_to(imax, a_k, sigma_w);
  seq.sigma_x_inf = solve_discrete_lyapunov(a_k, sigma_w, LyapunovForm::Covariance);
  return seq;
}

namespace {

bool pbh_full_rank(const Eigen::MatrixXcd& pencil, Eigen::Index n) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil);
  const auto& sv = svd.singularValues();
  if (sv.size() < n) return false;
  return sv(n - 1) > 1e-10 * (1.0 + sv(0));
}

}  // namespace

bool is_stabilizable(const Matrix& a, const Matrix& b, double eig_threshold) {
  const Eigen::Index n = a.rows();
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::complex<double> lam = es.eigenvalues()(k);
    if (std::abs(lam) < eig_threshold) continue;
    Eigen::MatrixXcd pencil(n, n + b.cols());
    pencil << (a.cast<std::complex<double>>() - lam * Eigen::MatrixXcd::Identity(n, n)),
        b.cast<std::complex<double>>();
    if (!pbh_full_rank(pencil, n)) return false;
  }
  return true;
}

bool is_observable(const Matrix& c, const Matrix& a) {
  const Eigen::Index n = a.rows();
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::complex<double> lam = es.eigenvalues()(k);
    Eigen::MatrixXcd pencil(n + c.rows(), n);
    pencil << (a.cast<std::complex<double>>() - lam * Eigen::MatrixXcd::Identity(n, n)),
        c.cast<std::complex<double>>();
    if (!pbh_full_rank(pencil, n)) return false;
  }
  return true;
}

}  // namespace slpsmpc
