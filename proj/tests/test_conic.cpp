#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "slpsmpc/conic.hpp"

using namespace slpsmpc;

namespace {

LinearTerm term(std::vector<int> idx, std::vector<double> coef, double constant = 0.0) {
  return LinearTerm(std::move(idx), std::move(coef), constant);
}

}  // namespace

TEST_CASE("minimize x subject to x >= 1") {
  ConicProgram prog(1);
  prog.add_objective_linear(0, 1.0);
  prog.add_inequality(term({0}, {-1.0}), -1.0);  // -x <= -1
  prog.seal();
  const auto rep = solve(prog);
  REQUIRE(rep.optimal());
  CHECK(rep.x[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(rep.objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("Euclidean norm epigraph with pinned coordinates") {
  ConicProgram prog;
  const int x = prog.add_variables("x", 2);
  const int t = prog.add_variables("t", 1);
  prog.add_objective_linear(t, 1.0);
  prog.add_equality(term({x}, {1.0}), 3.0);
  prog.add_equality(term({x + 1}, {1.0}), 4.0);
  prog.add_soc(term({t}, {1.0}), {term({x}, {1.0}), term({x + 1}, {1.0})});
  prog.seal();
  const auto rep = solve(prog);
  REQUIRE(rep.optimal());
  CHECK(rep.x[t] == doctest::Approx(5.0).epsilon(1e-7));
  CHECK(rep.x[x] == doctest::Approx(3.0));
  CHECK(rep.x[x + 1] == doctest::Approx(4.0));
}

TEST_CASE("2x2 PSD completion: minimize x with [x 1; 1 x] PSD") {
  ConicProgram prog(1);
  prog.add_objective_linear(0, 1.0);
  Matrix constant(2, 2), coeff(2, 2);
  constant << 0.0, 1.0, 1.0, 0.0;
  coeff << 1.0, 0.0, 0.0, 1.0;
  prog.add_psd(constant, {0}, {coeff});
  prog.seal();
  const auto rep = solve(prog);
  REQUIRE(rep.optimal());
  CHECK(rep.x[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("largest eigenvalue via PSD epigraph") {
  Matrix m(3, 3);
  m << 2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();

  ConicProgram prog(1);
  prog.add_objective_linear(0, 1.0);
  prog.add_psd(-m, {0}, {Matrix::Identity(3, 3)});  // t·I - M ⪰ 0
  prog.seal();
  const auto rep = solve(prog);
  REQUIRE(rep.optimal());
  CHECK(rep.x[0] == doctest::Approx(lmax).epsilon(1e-6));
}

TEST_CASE("projection onto the second-order cone") {
  // min ½‖u − (0,2)‖² with u ∈ Q²; the projection is (1,1).
  ConicProgram prog(2);
  prog.add_objective_factor_row(term({0}, {1.0}));
  prog.add_objective_factor_row(term({1}, {1.0}));
  prog.add_objective_linear(1, -2.0);
  prog.add_objective_constant(2.0);
  prog.add_soc(term({0}, {1.0}), {term({1}, {1.0})});
  prog.seal();
  const auto rep = solve(prog);
  REQUIRE(rep.optimal());
  CHECK(rep.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.x[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.objective == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("equality-constrained QP closed form") {
  // min ½‖x − a‖² s.t. Σx = 1  ⇒  x = a + (1 − Σa)/n.
  const int n = 4;
  Vector a(n);
  a << 0.3, -1.2, 2.0, 0.5;
  ConicProgram prog(n);
  for (int i = 0; i < n; ++i) {
    prog.add_objective_factor_row(term({i}, {1.0}));
    prog.add_objective_linear(i, -a[i]);
  }
  prog.add_equality(term({0, 1, 2, 3}, {1.0, 1.0, 1.0, 1.0}), 1.0);
  prog.seal();
  const auto rep = solve(prog);
  REQUIRE(rep.optimal());
  const double shift = (1.0 - a.sum()) / n;
  for (int i = 0; i < n; ++i) CHECK(rep.x[i] == doctest::Approx(a[i] + shift).epsilon(1e-8));
}

TEST_CASE("check_feasible accepts returned optima and boundary points") {
  ConicProgram prog;
  const int x = prog.add_variables("x", 2);
  const int t = prog.add_variables("t", 1);
  prog.add_objective_linear(t, 1.0);
  prog.add_equality(term({x}, {1.0}), 3.0);
  prog.add_equality(term({x + 1}, {1.0}), 4.0);
  prog.add_soc(term({t}, {1.0}), {term({x}, {1.0}), term({x + 1}, {1.0})});
  prog.seal();
  const auto rep = solve(prog);
  REQUIRE(rep.optimal());
  CHECK(prog.check_feasible(rep.x, 1e-7));

  // SOC boundary is feasible.
  Vector boundary(3);
  boundary << 3.0, 4.0, 5.0;
  CHECK(prog.check_feasible(boundary, 1e-12));

  // Violated equality.
  Vector bad = boundary;
  bad[0] = 4.0;
  CHECK_FALSE(prog.check_feasible(bad, 1e-6));
  std::string why;
  prog.check_feasible(bad, 1e-6, &why);
  CHECK(why.find("equality") != std::string::npos);
}

TEST_CASE("row scaling leaves status and argmin unchanged") {
  auto build = [&](double sc) {
    ConicProgram prog(2);
    prog.add_objective_linear(0, 1.0);
    prog.add_objective_linear(1, 2.0);
    prog.add_inequality(term({0, 1}, {-sc, -sc}), -2.0 * sc);  // x+y >= 2
    prog.add_inequality(term({0}, {-sc}), 0.0);                // x >= 0
    prog.add_inequality(term({1}, {-sc}), 0.0);                // y >= 0
    prog.seal();
    return solve(prog);
  };
  const auto base = build(1.0);
  REQUIRE(base.optimal());
  for (double sc : {1e-3, 1.0, 1e3}) {
    const auto rep = build(sc);
    REQUIRE(rep.optimal());
    CHECK((rep.x - base.x).norm() <= 1e-7 * (1.0 + base.x.norm()));
  }
}

TEST_CASE("solve is deterministic") {
  ConicProgram prog(2);
  prog.add_objective_factor_row(term({0, 1}, {1.0, 0.3}));
  prog.add_objective_linear(0, -1.0);
  prog.add_inequality(term({0}, {1.0}), 2.0);
  prog.add_inequality(term({1}, {-1.0}), 0.0);
  prog.add_soc(term({0}, {1.0}, 1.0), {term({1}, {1.0})});
  prog.seal();
  const auto r1 = solve(prog);
  const auto r2 = solve(prog);
  REQUIRE(r1.optimal());
  CHECK(r1.status == r2.status);
  CHECK(r1.objective == r2.objective);  // bitwise
  CHECK((r1.x - r2.x).norm() == 0.0);
}

TEST_CASE("native quadratic objective matches epigraph reformulation") {
  std::mt19937 gen(5);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 5; ++trial) {
    ConicProgram prog(3);
    for (int r = 0; r < 3; ++r) {
      std::vector<double> c{dist(gen), dist(gen), dist(gen)};
      prog.add_objective_factor_row(term({0, 1, 2}, c));
    }
    for (int v = 0; v < 3; ++v) prog.add_objective_linear(v, dist(gen));
    prog.add_inequality(term({0, 1, 2}, {1.0, 1.0, 1.0}), 1.5);
    prog.add_inequality(term({0}, {-1.0}), 0.5);
    prog.add_soc(term({2}, {1.0}, 2.0), {term({0}, {1.0}), term({1}, {1.0})});
    prog.seal();
    const auto native = solve(prog);
    REQUIRE(native.optimal());

    const ConicProgram epi = reformulate_quadratic_to_epigraph(prog);
    const auto reform = solve(epi);
    REQUIRE(reform.optimal());
    CHECK(reform.objective == doctest::Approx(native.objective).epsilon(1e-6));
    // argmin agreement is weaker than objective agreement when the random
    // Hessian is nearly singular along a feasible direction
    CHECK((reform.x.head(3) - native.x).norm() <= 1e-4 * (1.0 + native.x.norm()));
  }
}

TEST_CASE("infeasible linear program is certified") {
  ConicProgram prog(1);
  prog.add_objective_linear(0, 1.0);
  prog.add_inequality(term({0}, {-1.0}), -1.0);  // x >= 1
  prog.add_inequality(term({0}, {1.0}), 0.0);    // x <= 0
  prog.seal();
  const auto rep = solve(prog);
  CHECK(rep.status == SolveStatus::Infeasible);
}

TEST_CASE("contradictory pinned variables are caught in presolve") {
  ConicProgram prog(1);
  prog.add_equality(term({0}, {1.0}), 1.0);
  prog.add_equality(term({0}, {1.0}), 2.0);
  prog.add_inequality(term({0}, {1.0}), 10.0);
  prog.seal();
  const auto rep = solve(prog);
  CHECK(rep.status == SolveStatus::Infeasible);
}

TEST_CASE("random feasible SOCPs solve to tolerance") {
  std::mt19937 gen(99);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6;
    ConicProgram prog(n);
    Vector x0(n);
    for (int i = 0; i < n; ++i) x0[i] = dist(gen);
    for (int i = 0; i < n; ++i) prog.add_objective_linear(i, dist(gen));
    // Ball around x0 keeps the problem bounded and feasible.
    std::vector<LinearTerm> rows;
    for (int i = 0; i < n; ++i) rows.push_back(term({i}, {1.0}, -x0[i]));
    prog.add_soc(term({}, {}, 3.0), rows);
    prog.add_equality(term({0, 1}, {1.0, -1.0}), x0[0] - x0[1]);
    prog.add_inequality(term({2}, {1.0}), x0[2] + 1.0);
    prog.seal();
    const auto rep = solve(prog);
    REQUIRE(rep.optimal());
    CHECK(prog.check_feasible(rep.x, 1e-6));
    CHECK(rep.duality_gap <= 1e-6);
  }
}

TEST_CASE("CBF dump writes a parseable layout") {
  ConicProgram prog(2);
  prog.add_objective_factor_row(term({0}, {1.0}));
  prog.add_objective_linear(1, 1.0);
  prog.add_equality(term({0, 1}, {1.0, 1.0}), 1.0);
  prog.add_soc(term({0}, {1.0}, 1.0), {term({1}, {2.0})});
  Matrix c2(2, 2);
  c2 << 1.0, 0.0, 0.0, 1.0;
  prog.add_psd(c2, {0}, {c2});
  prog.seal();
  const std::string path = "/tmp/slpsmpc_test_dump.cbf";
  prog.write_cbf(path);
  std::ifstream f(path);
  REQUIRE(f.good());
  std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(all.find("VER") != std::string::npos);
  CHECK(all.find("PSDCON") != std::string::npos);
  CHECK(all.find("OBJACOORD") != std::string::npos);
}
