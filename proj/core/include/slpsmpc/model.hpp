#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "slpsmpc/matrix.hpp"

namespace slpsmpc {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// x⁺ = A·x + B·u + w, w ~ N(0, Σʷ).
struct LinearGaussianSystem {
  Matrix a;
  Matrix b;
  Matrix sigma_w;

  int n() const { return static_cast<int>(a.rows()); }
  int m() const { return static_cast<int>(b.cols()); }

  void validate() const;
};

/// Half-space chance constraints Pr[G_j x + H_j u ≤ b_j] ≥ pʲ with the
/// G = L·C, H = L·D decomposition.
struct ConstraintSpec {
  Matrix g;
  Matrix h;
  Vector b;
  Vector p;
  Matrix l;
  Matrix c_mat;
  Matrix d_mat;
  Vector p_tilde;  // p̃ʲ = χ²(2pʲ − 1)

  int c() const { return static_cast<int>(g.rows()); }
  int d() const { return static_cast<int>(l.cols()); }

  /// Fills L = I, C = G, D = H when the decomposition is absent and computes
  /// p_tilde from p.
  void finalize_defaults();
  void validate(int n, int m) const;
};

struct StageCost {
  Matrix q_mat;  // Q
  Matrix r_mat;  // R
  Vector q_vec;  // q
  Vector r_vec;  // r

  void validate(int n, int m) const;
};

/// ‖x‖²_Q + qᵀx + ‖u‖²_R + rᵀu
double stage_cost_eval(const StageCost& cost, const Vector& x, const Vector& u);

struct SimulationBlock {
  int rollouts = 5000;
  int steps = 10;
  uint64_t seed = 1;
  int workers = 0;  // 0: hardware concurrency
};

struct SolverBlock {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iterations = 100;
  double check_tol = 1e-6;
};

struct TerminalBlock {
  std::optional<Matrix> k_override;
  double eps = 1e-6;   // margin factor: ε_j = eps·b_j
  int mu_hat = -1;     // -1: use the designed μ
  int nu_max = 200;
  int mu_max = 200;
};

struct ScenarioConfig {
  std::string name;
  LinearGaussianSystem system;
  ConstraintSpec constraints;
  StageCost cost;
  int horizon = 1;
  Vector x0;
  SimulationBlock simulation;
  SolverBlock solver;
  TerminalBlock terminal;
  std::vector<std::string> warnings;

  void validate();

  /// Copy with every probability level replaced (used by the p-sweep).
  ScenarioConfig with_probability(double p) const;

  bool operator==(const ScenarioConfig& other) const;
};

}  // namespace slpsmpc
