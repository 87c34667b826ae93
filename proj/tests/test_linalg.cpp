#include <doctest.h>

#include <random>

#include "slpsmpc/linalg.hpp"

using namespace slpsmpc;

namespace {

Matrix hvac_a() {
  Matrix a(3, 3);
  a << 0.8511, 0.0541, 0.0707, 0.1293, 0.8635, 0.0055, 0.0989, 0.0032, 0.7541;
  return a;
}

Matrix hvac_sigma_w() {
  Matrix e(3, 3);
  e << 22.2170, 1.7912, 42.2123, 1.5376, 0.6944, 2.9214, 103.1813, 0.1032, 196.0444;
  e *= 1e-3;
  return e.transpose() * e;
}

Matrix random_spd(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> dist;
  Matrix x(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) x(i, j) = dist(gen);
  return x.transpose() * x + 0.1 * Matrix::Identity(n, n);
}

}  // namespace

TEST_CASE("psd_sqrt on identity and diagonal") {
  CHECK((psd_sqrt(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)).norm() < 1e-14);
  Matrix d = Vector::Zero(2).asDiagonal();
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const Matrix r = psd_sqrt(d);
  CHECK(r(0, 0) == doctest::Approx(2.0));
  CHECK(r(1, 1) == doctest::Approx(3.0));
  CHECK(std::abs(r(0, 1)) < 1e-14);
}

TEST_CASE("psd_sqrt squares back on random Gram matrices") {
  for (unsigned seed : {1u, 2u, 3u}) {
    const Matrix s = random_spd(5, seed);
    const Matrix m = psd_sqrt(s);
    CHECK((m - m.transpose()).norm() < 1e-12);
    CHECK((m * m - s).norm() <= 1e-8 * (1.0 + s.norm()));
  }
}

TEST_CASE("psd_sqrt rejects indefinite input") {
  Matrix s(2, 2);
  s << 1.0, 0.0, 0.0, -1e-6;
  CHECK_THROWS(psd_sqrt(s));
}

TEST_CASE("discrete Lyapunov closed forms") {
  // A = 0: one recursion step.
  const Matrix w = random_spd(3, 7);
  CHECK((solve_discrete_lyapunov(Matrix::Zero(3, 3), w) - w).norm() < 1e-12);
  // scalar: X = W / (1 - a²)
  Matrix a(1, 1), ws(1, 1);
  a << 0.5;
  ws << 1.0;
  CHECK(solve_discrete_lyapunov(a, ws)(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  // cost convention: aᵀXa + w = X
  Matrix a2(2, 2);
  a2 << 0.3, 0.2, 0.0, 0.4;
  const Matrix w2 = random_spd(2, 8);
  const Matrix xc = solve_discrete_lyapunov(a2, w2, LyapunovForm::Cost);
  CHECK((a2.transpose() * xc * a2 + w2 - xc).norm() <= 1e-9 * (1.0 + w2.norm()));
}

TEST_CASE("discrete Lyapunov rejects unstable maps") {
  Matrix a(2, 2);
  a << 1.0, 0.0, 0.0, 0.5;
  CHECK_THROWS(solve_discrete_lyapunov(a, Matrix::Identity(2, 2)));
}

TEST_CASE("HVAC stationary covariance matches fixed-point iteration") {
  const Matrix a = hvac_a();
  const Matrix sw = hvac_sigma_w();
  const Matrix x = solve_discrete_lyapunov(a, sw, LyapunovForm::Covariance);
  // Independent oracle: iterate Σ ← AΣAᵀ + Σʷ to convergence.
  Matrix sig = Matrix::Zero(3, 3);
  for (int it = 0; it < 20000; ++it) sig = a * sig * a.transpose() + sw;
  CHECK((x - sig).norm() <= 1e-9 * (1.0 + sig.norm()));
  CHECK((a * x * a.transpose() + sw - x).norm() <= 1e-9 * (1.0 + sw.norm()));
}

TEST_CASE("tail covariance sequence recursion and limits") {
  const Matrix a = hvac_a();
  const Matrix sw = hvac_sigma_w();
  const auto seq = tail_covariance_sequence(a, sw, 12);
  CHECK(seq.sigma_x[0].norm() == 0.0);
  CHECK((seq.sigma_x[1] - sw).norm() < 1e-15);
  for (int i = 0; i + 1 <= 12; ++i) {
    const Matrix want = a * seq.sigma_x[static_cast<size_t>(i)] * a.transpose() + sw;
    CHECK((seq.sigma_x[static_cast<size_t>(i + 1)] - want).norm() < 1e-14);
  }
  // PSD ordering chain Σˣ_i ⪯ Σˣ_{i+1} ⪯ Σˣ_∞.
  for (int i = 0; i + 1 <= 12; ++i) {
    const Matrix diff = seq.sigma_x[static_cast<size_t>(i + 1)] - seq.sigma_x[static_cast<size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    const Matrix gap = seq.sigma_x_inf - seq.sigma_x[static_cast<size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Matrix> es2(gap, Eigen::EigenvaluesOnly);
    CHECK(es2.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("nilpotent loop: sequence saturates at the disturbance covariance") {
  const Matrix sw = hvac_sigma_w();
  const auto seq = tail_covariance_sequence(Matrix::Zero(3, 3), sw, 5);
  for (int i = 1; i <= 5; ++i) CHECK((seq.at(i) - sw).norm() < 1e-15);
  CHECK((seq.sigma_x_inf - sw).norm() < 1e-12);
}

TEST_CASE("kron/vec identity") {
  CHECK(kron_vec_identity_check(Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                Matrix::Identity(2, 2)));
  std::mt19937 gen(11);
  std::normal_distribution<double> dist;
  Matrix a(2, 3), b(3, 2), c(2, 2);
  for (auto* m : {&a}) for (int i = 0; i < m->size(); ++i) m->data()[i] = dist(gen);
  for (auto* m : {&b}) for (int i = 0; i < m->size(); ++i) m->data()[i] = dist(gen);
  for (auto* m : {&c}) for (int i = 0; i < m->size(); ++i) m->data()[i] = dist(gen);
  CHECK(kron_vec_identity_check(a, b, c, 1e-12));
  Matrix sa(1, 1), sb(1, 1), sc(1, 1);
  sa << 2.0; sb << -3.0; sc << 0.5;
  CHECK(kron_vec_identity_check(sa, sb, sc));
  CHECK_THROWS(kron_vec_identity_check(a, c, b));
}

TEST_CASE("svec/smat round trip preserves inner products") {
  const Matrix x = random_spd(4, 21);
  const Matrix y = random_spd(4, 22);
  CHECK((smat(svec(x)) - x).norm() < 1e-14);
  CHECK(svec(x).dot(svec(y)) == doctest::Approx((x * y).trace()).epsilon(1e-12));
}

TEST_CASE("PBH stabilizability and observability") {
  const Matrix a = hvac_a();
  Matrix b(3, 1);
  b << 0.35, 0.03, 0.02;
  CHECK(is_stabilizable(a, b));
  Matrix c(1, 3);
  c << -1.0, 0.0, 0.0;
  CHECK(is_observable(c, a));
  // Unstable and uncontrollable in the unstable mode.
  Matrix au(2, 2);
  au << 2.0, 0.0, 0.0, 0.5;
  Matrix bu(2, 1);
  bu << 0.0, 1.0;
  CHECK_FALSE(is_stabilizable(au, bu));
  bu << 1.0, 0.0;
  CHECK(is_stabilizable(au, bu));
}

TEST_CASE("spectral radius") {
  Matrix a(2, 2);
  a << 0.0, 1.0, -0.25, 0.0;
  CHECK(spectral_radius(a) == doctest::Approx(0.5).epsilon(1e-12));
}
