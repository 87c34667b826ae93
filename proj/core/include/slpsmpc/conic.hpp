#pragma once

#include <string>
#include <vector>

#include "slpsmpc/matrix.hpp"

namespace slpsmpc {

/// Sparse affine functional a·x + constant over named support indices.
struct LinearTerm {
  std::vector<int> idx;
  std::vector<double> coef;
  double constant = 0.0;

  LinearTerm() = default;
  LinearTerm(std::vector<int> i, std::vector<double> c, double k = 0.0)
      : idx(std::move(i)), coef(std::move(c)), constant(k) {}

  double eval(const Vector& x) const;
};

enum class ConeKind { NonNeg, Soc, Psd };

enum class SolveStatus { Optimal, Infeasible, NumericalFailure };

struct SolverSettings {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iterations = 100;
  bool verbose = false;
};

struct SolveReport {
  SolveStatus status = SolveStatus::NumericalFailure;
  Vector x;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double duality_gap = 0.0;
  std::string message;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

/// Solver-agnostic conic program:
///   minimize   ½‖F·x‖² + c·x
///   subject to A·x = b,
///              nonnegative rows, second-order cone blocks, PSD blocks.
///
/// Immutable once sealed; one solver context per concurrent solve.
class ConicProgram {
 public:
  explicit ConicProgram(int initial_vars = 0);

  int add_variables(const std::string& name, int count);
  int num_vars() const { return num_vars_; }
  const std::string& var_name(int idx) const;

  void add_objective_linear(int var, double coef);
  /// One row of the objective factor F (contributes ½(row·x)² to the cost).
  void add_objective_factor_row(const LinearTerm& row);
  void add_objective_constant(double c) { obj_constant_ += c; }

  void add_equality(const LinearTerm& lhs, double rhs);
  /// lhs·x ≤ rhs
  void add_inequality(const LinearTerm& lhs, double rhs);
  /// ‖s(x)‖ ≤ t(x)
  void add_soc(const LinearTerm& t, const std::vector<LinearTerm>& s);
  /// constant + Σ coeff[k]·x_{vars[k]} ⪰ 0 (all matrices symmetric)
  void add_psd(const Matrix& constant, const std::vector<int>& vars,
               const std::vector<Matrix>& coeff);

  void seal();
  bool sealed() const { return sealed_; }

  double objective_value(const Vector& x) const;

  /// Membership / equality check at a candidate point (boundary feasible).
  bool check_feasible(const Vector& point, double tol = 1e-6,
                      std::string* first_violation = nullptr) const;

  /// Text dump in a CBF-style conic benchmark layout (quadratic objective
  /// written in epigraph form) for cross-checking with external solvers.
  void write_cbf(const std::string& path) const;

  struct ConeBlock {
    ConeKind kind = ConeKind::NonNeg;
    int dim = 0;       // rows in cone space (svec dim for PSD)
    int mat_dim = 0;   // PSD matrix size, 0 otherwise
    std::vector<int> support;
    Matrix g;  // dim × |support|, cone vector is h - g·x_support
    Vector h;
  };

  // Compiled views used by the solver and the tests.
  const std::vector<ConeBlock>& cone_blocks() const { return cones_; }
  const std::vector<LinearTerm>& equalities() const { return eq_rows_; }
  const Vector& equality_rhs() const { return eq_rhs_; }
  const Vector& objective_linear() const { return obj_linear_; }
  const std::vector<LinearTerm>& objective_factor() const { return obj_factor_; }
  double objective_constant() const { return obj_constant_; }

 private:
  void require_unsealed() const;
  void validate_term(const LinearTerm& t) const;

  int num_vars_ = 0;
  bool sealed_ = false;
  std::vector<std::string> var_names_;
  Vector obj_linear_;
  std::vector<LinearTerm> obj_factor_;
  double obj_constant_ = 0.0;
  std::vector<LinearTerm> eq_rows_;
  Vector eq_rhs_;
  std::vector<ConeBlock> cones_;
  std::vector<LinearTerm> pending_obj_linear_;
};

/// Interior-point solve (Nesterov-Todd scaled predictor-corrector).
/// Deterministic for identical inputs and settings.
SolveReport solve(const ConicProgram& prog, const SolverSettings& settings = {});

/// Rewrites the quadratic objective into an epigraph second-order cone and a
/// linear objective; used to cross-check the native quadratic path.
ConicProgram reformulate_quadratic_to_epigraph(const ConicProgram& prog);

}  // namespace slpsmpc
