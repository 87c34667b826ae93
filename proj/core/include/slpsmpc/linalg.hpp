#pragma once

#include <vector>

#include "slpsmpc/matrix.hpp"

namespace slpsmpc {

/// Sequence Σˣ_0..Σˣ_imax of tail state covariances together with the
/// stationary limit Σˣ_∞ (Σˣ_{i+1} = A_K Σˣ_i A_Kᵀ + Σʷ, Σˣ_0 = 0).
struct CovarianceSequence {
  std::vector<Matrix> sigma_x;
  Matrix sigma_x_inf;

  const Matrix& at(int i) const;  // saturates at the stored horizon
  void extend_to(int imax, const Matrix& a_k, const Matrix& sigma_w);
};

double spectral_radius(const Matrix& a);

/// Symmetric PSD square root via eigendecomposition. Throws if the smallest
/// eigenvalue is below -1e-9.
Matrix psd_sqrt(const Matrix& s);

/// Checks symmetry within tol and positive semidefiniteness (smallest
/// eigenvalue ≥ -tol·scale).
bool is_symmetric_psd(const Matrix& s, double tol = 1e-10);

enum class LyapunovForm {
  Covariance,  // X = A·X·Aᵀ + W   (stationary covariance)
  Cost,        // X = Aᵀ·X·A + W   (quadratic cost-to-go)
};

/// Solves the discrete Lyapunov equation in the requested transpose
/// convention. Requires ρ(A) < 1 - 1e-9; direct vectorized solve for
/// n ≤ 30, fixed-point iteration above.
Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& w,
                               LyapunovForm form = LyapunovForm::Covariance);

CovarianceSequence tail_covariance_sequence(const Matrix& a_k, const Matrix& sigma_w,
                                            int imax);

/// PBH stabilizability test for the pair (A, B).
bool is_stabilizable(const Matrix& a, const Matrix& b, double eig_threshold = 1.0 - 1e-9);

/// PBH observability test for the pair (C, A).
bool is_observable(const Matrix& c, const Matrix& a);

}  // namespace slpsmpc
