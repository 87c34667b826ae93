#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "slpsmpc/conic.hpp"

namespace slpsmpc {

namespace {

using Block = ConicProgram::ConeBlock;

constexpr double kReg = 1e-10;  // static KKT regularization

// ---------------------------------------------------------------------------
// Presolved problem in the solver's standard form:
//   min ½xᵀPx + cᵀx  s.t.  A·x = b,  s = h - G·x ∈ K.
// Variables fixed by singleton equality rows are substituted out and restored
// after the solve.
// ---------------------------------------------------------------------------
struct Compiled {
  int n = 0;    // free variables
  int neq = 0;  // remaining equality rows
  Matrix p;     // n×n
  Vector c;
  Matrix aeq;   // neq×n
  Vector beq;
  std::vector<Block> blocks;  // over free-variable indices
  int cone_dim = 0;
  int degree = 0;

  // mapping back to the original space
  int n_orig = 0;
  std::vector<int> free_to_orig;
  std::vector<double> fixed_value;  // size n_orig, NaN when free
  bool infeasible = false;
  std::string message;

  Vector restore(const Vector& xfree) const {
    Vector x(n_orig);
    for (int v = 0; v < n_orig; ++v) x[v] = fixed_value[static_cast<size_t>(v)];
    for (int k = 0; k < n; ++k) x[free_to_orig[static_cast<size_t>(k)]] = xfree[k];
    return x;
  }
};

Compiled compile(const ConicProgram& prog) {
  Compiled out;
  out.n_orig = prog.num_vars();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.fixed_value.assign(static_cast<size_t>(out.n_orig), nan);

  // Pass 1: resolve singleton equality rows (one unfixed variable) until
  // fixpoint; these come from variable pinning in the MPC programs.
  const auto& rows = prog.equalities();
  const auto& rhs = prog.equality_rhs();
  std::vector<bool> row_done(rows.size(), false);
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t r = 0; r < rows.size(); ++r) {
      if (row_done[r]) continue;
      double resid = rhs[static_cast<Eigen::Index>(r)];
      int last_var = -1;
      double last_coef = 0.0;
      int unfixed = 0;
      for (size_t k = 0; k < rows[r].idx.size(); ++k) {
        const int v = rows[r].idx[k];
        const double cf = rows[r].coef[k];
        if (cf == 0.0) continue;
        if (std::isnan(out.fixed_value[static_cast<size_t>(v)])) {
          ++unfixed;
          last_var = v;
          last_coef = cf;
        } else {
          resid -= cf * out.fixed_value[static_cast<size_t>(v)];
        }
      }
      if (unfixed == 0) {
        row_done[r] = true;
        if (std::abs(resid) > 1e-9 * (1.0 + std::abs(rhs[static_cast<Eigen::Index>(r)]))) {
          out.infeasible = true;
          out.message = "presolve: contradictory equality row " + std::to_string(r);
          return out;
        }
        changed = true;
      } else if (unfixed == 1) {
        out.fixed_value[static_cast<size_t>(last_var)] = resid / last_coef;
        row_done[r] = true;
        changed = true;
      }
    }
  }

  for (int v = 0; v < out.n_orig; ++v)
    if (std::isnan(out.fixed_value[static_cast<size_t>(v)])) out.free_to_orig.push_back(v);
  out.n = static_cast<int>(out.free_to_orig.size());
  std::vector<int> orig_to_free(static_cast<size_t>(out.n_orig), -1);
  for (int k = 0; k < out.n; ++k) orig_to_free[static_cast<size_t>(out.free_to_orig[static_cast<size_t>(k)])] = k;

  // Objective: P = FᵀF and c over free vars; fixed vars fold into c.
  out.p = Matrix::Zero(out.n, out.n);
  out.c = Vector::Zero(out.n);
  for (int v = 0; v < out.n_orig; ++v) {
    const double cf = prog.objective_linear()[v];
    if (cf == 0.0) continue;
    const int fv = orig_to_free[static_cast<size_t>(v)];
    if (fv >= 0) out.c[fv] += cf;
  }
  for (const auto& row : prog.objective_factor()) {
    // row·x = rf·xfree + const_part
    Vector rf = Vector::Zero(out.n);
    double k0 = 0.0;
    for (size_t k = 0; k < row.idx.size(); ++k) {
      const int v = row.idx[k];
      const int fv = orig_to_free[static_cast<size_t>(v)];
      if (fv >= 0)
        rf[fv] += row.coef[k];
      else
        k0 += row.coef[k] * out.fixed_value[static_cast<size_t>(v)];
    }
    out.p.selfadjointView<Eigen::Lower>().rankUpdate(rf, 1.0);
    out.c += k0 * rf;
  }
  out.p.triangularView<Eigen::Upper>() = out.p.transpose();

  // Remaining equality rows.
  std::vector<std::pair<Vector, double>> eq;
  for (size_t r = 0; r < rows.size(); ++r) {
    if (row_done[r]) continue;
    Vector a = Vector::Zero(out.n);
    double b = rhs[static_cast<Eigen::Index>(r)];
    for (size_t k = 0; k < rows[r].idx.size(); ++k) {
      const int v = rows[r].idx[k];
      const int fv = orig_to_free[static_cast<size_t>(v)];
      if (fv >= 0)
        a[fv] += rows[r].coef[k];
      else
        b -= rows[r].coef[k] * out.fixed_value[static_cast<size_t>(v)];
    }
    eq.emplace_back(std::move(a), b);
  }
  out.neq = static_cast<int>(eq.size());
  out.aeq.resize(out.neq, out.n);
  out.beq.resize(out.neq);
  for (int r = 0; r < out.neq; ++r) {
    out.aeq.row(r) = eq[static_cast<size_t>(r)].first.transpose();
    out.beq[r] = eq[static_cast<size_t>(r)].second;
  }

  // Cone blocks over free variables; fully fixed blocks reduce to membership
  // checks.
  for (const auto& blk : prog.cone_blocks()) {
    Block nb;
    nb.kind = blk.kind;
    nb.dim = blk.dim;
    nb.mat_dim = blk.mat_dim;
    nb.h = blk.h;
    std::vector<int> kept_cols;
    for (size_t k = 0; k < blk.support.size(); ++k) {
      const int v = blk.support[k];
      const int fv = orig_to_free[static_cast<size_t>(v)];
      if (fv >= 0) {
        kept_cols.push_back(static_cast<int>(k));
        nb.support.push_back(fv);
      } else {
        // s = h − G·x: folding a fixed coordinate moves g·value into h.
        nb.h -= blk.g.col(static_cast<Eigen::Index>(k)) * out.fixed_value[static_cast<size_t>(v)];
      }
    }
    if (kept_cols.empty()) {
      // Constant block: verify membership now.
      bool ok = true;
      if (nb.kind == ConeKind::NonNeg) ok = nb.h.minCoeff() >= -1e-9;
      if (nb.kind == ConeKind::Soc) ok = nb.h[0] >= nb.h.tail(nb.h.size() - 1).norm() - 1e-9;
      if (nb.kind == ConeKind::Psd) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(smat(nb.h), Eigen::EigenvaluesOnly);
        ok = es.eigenvalues().minCoeff() >= -1e-9 * (1.0 + nb.h.cwiseAbs().maxCoeff());
      }
      if (!ok) {
        out.infeasible = true;
        out.message = "presolve: constant cone block violated";
        return out;
      }
      continue;
    }
    nb.g.resize(nb.dim, static_cast<Eigen::Index>(kept_cols.size()));
    for (size_t k = 0; k < kept_cols.size(); ++k)
      nb.g.col(static_cast<Eigen::Index>(k)) = blk.g.col(kept_cols[k]);
    out.cone_dim += nb.dim;
    out.degree += (nb.kind == ConeKind::NonNeg) ? nb.dim
                  : (nb.kind == ConeKind::Soc)  ? 1
                                                : nb.mat_dim;
    out.blocks.push_back(std::move(nb));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scalings
// ---------------------------------------------------------------------------
struct Scaling {
  // NonNeg
  Vector d;  // W = diag(d)
  // Soc
  double eta = 0.0;
  Vector wbar;
  // Psd
  Matrix r, rinv;
  // all cones
  Vector lambda;
};

void soc_apply(const Vector& wbar, double eta, const Eigen::Ref<const Vector>& u, Vector& out) {
  const double w0 = wbar[0];
  const auto w1 = wbar.tail(wbar.size() - 1);
  const double dot = w1.dot(u.tail(u.size() - 1));
  out.resize(u.size());
  out[0] = eta * (w0 * u[0] + dot);
  out.tail(u.size() - 1) = eta * (u.tail(u.size() - 1) + (dot / (1.0 + w0) + u[0]) * w1);
}

void soc_apply_inv(const Vector& wbar, double eta, const Eigen::Ref<const Vector>& u, Vector& out) {
  const double w0 = wbar[0];
  const auto w1 = wbar.tail(wbar.size() - 1);
  const double dot = w1.dot(u.tail(u.size() - 1));
  out.resize(u.size());
  out[0] = (w0 * u[0] - dot) / eta;
  out.tail(u.size() - 1) = (u.tail(u.size() - 1) + (dot / (1.0 + w0) - u[0]) * w1) / eta;
}

// λ + α·d ∈ K boundary step for one cone in scaled space.
double step_to_boundary(ConeKind kind, const Vector& lambda, const Vector& dir) {
  const double inf = std::numeric_limits<double>::infinity();
  switch (kind) {
    case ConeKind::NonNeg: {
      double amax = inf;
      for (Eigen::Index i = 0; i < lambda.size(); ++i)
        if (dir[i] < 0.0) amax = std::min(amax, -lambda[i] / dir[i]);
      return amax;
    }
    case ConeKind::Soc: {
      // q(α) = J(λ) + 2α(λ₀d₀ - λ₁ᵀd₁) + α²J(d) ≥ 0 and λ₀ + αd₀ ≥ 0
      const double jl = lambda[0] * lambda[0] - lambda.tail(lambda.size() - 1).squaredNorm();
      const double jd = dir[0] * dir[0] - dir.tail(dir.size() - 1).squaredNorm();
      const double cross = lambda[0] * dir[0] - lambda.tail(lambda.size() - 1).dot(dir.tail(dir.size() - 1));
      double amax = inf;
      if (dir[0] < 0.0) amax = -lambda[0] / dir[0];
      // smallest positive root of jd·α² + 2·cross·α + jl = 0
      const double disc = cross * cross - jd * jl;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        double r1 = inf, r2 = inf;
        if (jd != 0.0) {
          const double q = -(cross + (cross >= 0 ? sq : -sq));
          r1 = q / jd;
          r2 = (q != 0.0) ? jl / q : inf;
        } else if (cross != 0.0) {
          r1 = -jl / (2.0 * cross);
        }
        if (r1 > 1e-300 && r1 < amax) amax = std::min(amax, r1);
        if (r2 > 1e-300 && r2 < amax) amax = std::min(amax, r2);
      }
      return amax;
    }
    case ConeKind::Psd: {
      const Matrix lam = smat(lambda);
      const Matrix dm = smat(dir);
      // λ is diagonal at the NT point but keep it general for robustness.
      Eigen::SelfAdjointEigenSolver<Matrix> el(lam);
      Vector ev = el.eigenvalues().cwiseMax(1e-300);
      const Matrix lam_isqrt =
          el.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * el.eigenvectors().transpose();
      Eigen::SelfAdjointEigenSolver<Matrix> em(lam_isqrt * dm * lam_isqrt, Eigen::EigenvaluesOnly);
      const double mn = em.eigenvalues().minCoeff();
      if (mn >= 0.0) return inf;
      return -1.0 / mn;
    }
  }
  return inf;
}

struct ScalingSet {
  std::vector<Scaling> per_block;
  Vector lambda_all;  // concatenated scaled points

  void identity(const Compiled& cp) {
    per_block.assign(cp.blocks.size(), Scaling{});
    lambda_all.resize(cp.cone_dim);
    int off = 0;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      auto& sc = per_block[b];
      if (blk.kind == ConeKind::NonNeg) {
        sc.d = Vector::Ones(blk.dim);
        sc.lambda = Vector::Ones(blk.dim);
      } else if (blk.kind == ConeKind::Soc) {
        sc.eta = 1.0;
        sc.wbar = Vector::Zero(blk.dim);
        sc.wbar[0] = 1.0;
        sc.lambda = Vector::Zero(blk.dim);
        sc.lambda[0] = 1.0;
      } else {
        sc.r = Matrix::Identity(blk.mat_dim, blk.mat_dim);
        sc.rinv = sc.r;
        sc.lambda = svec(Matrix::Identity(blk.mat_dim, blk.mat_dim));
      }
      lambda_all.segment(off, blk.dim) = sc.lambda;
      off += blk.dim;
    }
  }

  // Compute NT scalings from interior (s, z); returns false when a point has
  // drifted out of the cone interior numerically.
  bool update(const Compiled& cp, const Vector& s, const Vector& z) {
    int off = 0;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      auto& sc = per_block[b];
      const auto sb = s.segment(off, blk.dim);
      const auto zb = z.segment(off, blk.dim);
      if (blk.kind == ConeKind::NonNeg) {
        if (sb.minCoeff() <= 0.0 || zb.minCoeff() <= 0.0) return false;
        sc.d = (sb.array() / zb.array()).sqrt().matrix();
        sc.lambda = (sb.array() * zb.array()).sqrt().matrix();
      } else if (blk.kind == ConeKind::Soc) {
        const double js = sb[0] * sb[0] - sb.tail(blk.dim - 1).squaredNorm();
        const double jz = zb[0] * zb[0] - zb.tail(blk.dim - 1).squaredNorm();
        if (js <= 0.0 || jz <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0) return false;
        const double sn = std::sqrt(js), zn = std::sqrt(jz);
        const Vector sbar = sb / sn, zbar = zb / zn;
        // γ² = (1 + s̄ᵀz̄)/2 makes w̄ = (s̄ + Jz̄)/(2γ) unit-hyperbolic with W²z = s.
        const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
        sc.eta = std::sqrt(sn / zn);
        sc.wbar.resize(blk.dim);
        sc.wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
        sc.wbar.tail(blk.dim - 1) =
            (sbar.tail(blk.dim - 1) - zbar.tail(blk.dim - 1)) / (2.0 * gamma);
        soc_apply(sc.wbar, sc.eta, zb, sc.lambda);
      } else {
        const Matrix sm = smat(sb), zm = smat(zb);
        Eigen::LLT<Matrix> ls(sm), lz(zm);
        if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
        const Matrix lsm = ls.matrixL();
        const Matrix lzm = lz.matrixL();
        Eigen::JacobiSVD<Matrix> svd(lzm.transpose() * lsm,
                                     Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vector sig = svd.singularValues();
        if (sig.minCoeff() <= 0.0) return false;
        const Vector isq = sig.cwiseSqrt().cwiseInverse();
        sc.r = lsm * svd.matrixV() * isq.asDiagonal();
        sc.rinv = isq.asDiagonal() * svd.matrixU().transpose() * lzm.transpose();
        sc.lambda = svec(Matrix(sig.asDiagonal()));
      }
      lambda_all.segment(off, blk.dim) = sc.lambda;
      off += blk.dim;
    }
    return true;
  }

  // out = W⁻ᵀ·u  (per cone)
  void apply_winv_t(const Compiled& cp, const Vector& u, Vector& out) const {
    out.resize(u.size());
    int off = 0;
    Vector tmp;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      const auto& sc = per_block[b];
      const auto ub = u.segment(off, blk.dim);
      if (blk.kind == ConeKind::NonNeg) {
        out.segment(off, blk.dim) = ub.cwiseQuotient(sc.d);
      } else if (blk.kind == ConeKind::Soc) {
        soc_apply_inv(sc.wbar, sc.eta, ub, tmp);
        out.segment(off, blk.dim) = tmp;
      } else {
        out.segment(off, blk.dim) = svec(sc.rinv * smat(ub) * sc.rinv.transpose());
      }
      off += blk.dim;
    }
  }

  // out = W·u
  void apply_w(const Compiled& cp, const Vector& u, Vector& out) const {
    out.resize(u.size());
    int off = 0;
    Vector tmp;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      const auto& sc = per_block[b];
      const auto ub = u.segment(off, blk.dim);
      if (blk.kind == ConeKind::NonNeg) {
        out.segment(off, blk.dim) = ub.cwiseProduct(sc.d);
      } else if (blk.kind == ConeKind::Soc) {
        soc_apply(sc.wbar, sc.eta, ub, tmp);
        out.segment(off, blk.dim) = tmp;
      } else {
        out.segment(off, blk.dim) = svec(sc.r.transpose() * smat(ub) * sc.r);
      }
      off += blk.dim;
    }
  }

  // out = Wᵀ·u
  void apply_w_t(const Compiled& cp, const Vector& u, Vector& out) const {
    out.resize(u.size());
    int off = 0;
    Vector tmp;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      const auto& sc = per_block[b];
      const auto ub = u.segment(off, blk.dim);
      if (blk.kind == ConeKind::NonNeg) {
        out.segment(off, blk.dim) = ub.cwiseProduct(sc.d);
      } else if (blk.kind == ConeKind::Soc) {
        soc_apply(sc.wbar, sc.eta, ub, tmp);  // symmetric
        out.segment(off, blk.dim) = tmp;
      } else {
        out.segment(off, blk.dim) = svec(sc.r * smat(ub) * sc.r.transpose());
      }
      off += blk.dim;
    }
  }
};

// Jordan product u∘v and inverse λ∘x = u per cone.
void jordan_prod(const Compiled& cp, const Vector& u, const Vector& v, Vector& out) {
  out.resize(u.size());
  int off = 0;
  for (const auto& blk : cp.blocks) {
    const auto ub = u.segment(off, blk.dim);
    const auto vb = v.segment(off, blk.dim);
    if (blk.kind == ConeKind::NonNeg) {
      out.segment(off, blk.dim) = ub.cwiseProduct(vb);
    } else if (blk.kind == ConeKind::Soc) {
      out[off] = ub.dot(vb);
      out.segment(off + 1, blk.dim - 1) =
          ub[0] * vb.tail(blk.dim - 1) + vb[0] * ub.tail(blk.dim - 1);
    } else {
      const Matrix um = smat(ub), vm = smat(vb);
      out.segment(off, blk.dim) = svec(0.5 * (um * vm + vm * um));
    }
    off += blk.dim;
  }
}

void jordan_div(const Compiled& cp, const Vector& lambda, const Vector& u, Vector& out) {
  out.resize(u.size());
  int off = 0;
  for (const auto& blk : cp.blocks) {
    const auto lb = lambda.segment(off, blk.dim);
    const auto ub = u.segment(off, blk.dim);
    if (blk.kind == ConeKind::NonNeg) {
      out.segment(off, blk.dim) = ub.cwiseQuotient(lb);
    } else if (blk.kind == ConeKind::Soc) {
      const double a = lb[0];
      const auto bvec = lb.tail(blk.dim - 1);
      const double den = a * a - bvec.squaredNorm();
      const double d0 = (a * ub[0] - bvec.dot(ub.tail(blk.dim - 1))) / den;
      out[off] = d0;
      out.segment(off + 1, blk.dim - 1) = (ub.tail(blk.dim - 1) - d0 * bvec) / a;
    } else {
      // Solve ½(ΛX + XΛ) = U with Λ = smat(λ) via its eigenbasis.
      const Matrix lm = smat(lb);
      const Matrix um = smat(ub);
      Eigen::SelfAdjointEigenSolver<Matrix> el(lm);
      const Matrix q = el.eigenvectors();
      const Vector ev = el.eigenvalues();
      Matrix ut = q.transpose() * um * q;
      for (Eigen::Index i = 0; i < ev.size(); ++i)
        for (Eigen::Index j = 0; j < ev.size(); ++j) ut(i, j) /= 0.5 * (ev[i] + ev[j]);
      out.segment(off, blk.dim) = svec(q * ut * q.transpose());
    }
    off += blk.dim;
  }
}

void cone_identity(const Compiled& cp, Vector& e) {
  e = Vector::Zero(cp.cone_dim);
  int off = 0;
  for (const auto& blk : cp.blocks) {
    if (blk.kind == ConeKind::NonNeg)
      e.segment(off, blk.dim).setOnes();
    else if (blk.kind == ConeKind::Soc)
      e[off] = 1.0;
    else
      e.segment(off, blk.dim) = svec(Matrix::Identity(blk.mat_dim, blk.mat_dim));
    off += blk.dim;
  }
}

double min_step_to_boundary(const Compiled& cp, const Vector& lambda, const Vector& dir) {
  double amax = std::numeric_limits<double>::infinity();
  int off = 0;
  for (const auto& blk : cp.blocks) {
    amax = std::min(amax, step_to_boundary(blk.kind, lambda.segment(off, blk.dim),
                                           dir.segment(off, blk.dim)));
    off += blk.dim;
  }
  return amax;
}

// Distance of a point to cone interiority, max over blocks: the amount that
// must be added along the cone identity to reach the interior.
double interior_deficit(const Compiled& cp, const Vector& u) {
  double worst = -std::numeric_limits<double>::infinity();
  int off = 0;
  for (const auto& blk : cp.blocks) {
    const auto ub = u.segment(off, blk.dim);
    double def;
    if (blk.kind == ConeKind::NonNeg)
      def = -ub.minCoeff();
    else if (blk.kind == ConeKind::Soc)
      def = ub.tail(blk.dim - 1).norm() - ub[0];
    else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(smat(ub), Eigen::EigenvaluesOnly);
      def = -es.eigenvalues().minCoeff();
    }
    worst = std::max(worst, def);
    off += blk.dim;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// KKT: [P + GᵀW⁻¹W⁻ᵀG  Aᵀ; A  0] with static regularization and iterative
// refinement against the unregularized matrix.
// ---------------------------------------------------------------------------
struct KktSolver {
  const Compiled& cp;
  Matrix kkt;       // regularized, factored
  Matrix kkt0;      // unregularized copy for refinement
  Eigen::LDLT<Matrix> ldlt;
  std::vector<Matrix> scaled_g;  // per block W⁻ᵀG

  explicit KktSolver(const Compiled& c) : cp(c) {
    const int dim = cp.n + cp.neq;
    kkt.resize(dim, dim);
    kkt0.resize(dim, dim);
    scaled_g.resize(cp.blocks.size());
  }

  bool factor(const ScalingSet& w) {
    const int n = cp.n;
    kkt0.setZero();
    kkt0.topLeftCorner(n, n) = cp.p;
    if (cp.neq > 0) {
      kkt0.bottomLeftCorner(cp.neq, n) = cp.aeq;
      kkt0.topRightCorner(n, cp.neq) = cp.aeq.transpose();
    }
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      const auto& sc = w.per_block[b];
      Matrix& sg = scaled_g[b];
      sg.resize(blk.dim, blk.g.cols());
      if (blk.kind == ConeKind::NonNeg) {
        sg = sc.d.cwiseInverse().asDiagonal() * blk.g;
      } else if (blk.kind == ConeKind::Soc) {
        Vector tmp;
        for (Eigen::Index cidx = 0; cidx < blk.g.cols(); ++cidx) {
          soc_apply_inv(sc.wbar, sc.eta, blk.g.col(cidx), tmp);
          sg.col(cidx) = tmp;
        }
      } else {
        for (Eigen::Index cidx = 0; cidx < blk.g.cols(); ++cidx)
          sg.col(cidx) = svec(sc.rinv * smat(blk.g.col(cidx)) * sc.rinv.transpose());
      }
      const Matrix gram = sg.transpose() * sg;
      for (size_t i = 0; i < blk.support.size(); ++i)
        for (size_t j = 0; j < blk.support.size(); ++j)
          kkt0(blk.support[i], blk.support[j]) += gram(static_cast<Eigen::Index>(i),
                                                       static_cast<Eigen::Index>(j));
    }
    kkt = kkt0;
    const double scale = 1.0 + kkt0.topLeftCorner(n, n).cwiseAbs().maxCoeff();
    kkt.topLeftCorner(n, n).diagonal().array() += kReg * scale;
    kkt.bottomRightCorner(cp.neq, cp.neq).diagonal().array() -= kReg * scale;
    ldlt.compute(kkt);
    return ldlt.info() == Eigen::Success;
  }

  // One pass of the reduced (eliminated) solve.
  void solve_reduced(const ScalingSet& w, const Vector& bx, const Vector& by, const Vector& bz,
                     Vector& dx, Vector& dy, Vector& dz) const {
    Vector rhs(cp.n + cp.neq);
    Vector bz_scaled;
    w.apply_winv_t(cp, bz, bz_scaled);
    rhs.head(cp.n) = bx;
    int off = 0;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      const Vector contrib = scaled_g[b].transpose() * bz_scaled.segment(off, blk.dim);
      for (size_t k = 0; k < blk.support.size(); ++k)
        rhs[blk.support[k]] += contrib[static_cast<Eigen::Index>(k)];
      off += blk.dim;
    }
    if (cp.neq > 0) rhs.tail(cp.neq) = by;

    Vector sol = ldlt.solve(rhs);
    for (int refine = 0; refine < 3; ++refine) {
      Vector resid = rhs - kkt0.selfadjointView<Eigen::Lower>() * sol;
      // kkt0 is stored full; selfadjointView keeps the product symmetric.
      if (resid.norm() <= 1e-14 * (1.0 + rhs.norm())) break;
      sol += ldlt.solve(resid);
    }
    dx = sol.head(cp.n);
    dy = cp.neq > 0 ? Vector(sol.tail(cp.neq)) : Vector(0);

    // dz = W⁻¹W⁻ᵀ(G dx − bz)
    Vector gx(cp.cone_dim);
    off = 0;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      Vector xs(blk.support.size());
      for (size_t k = 0; k < blk.support.size(); ++k) xs[static_cast<Eigen::Index>(k)] = dx[blk.support[k]];
      gx.segment(off, blk.dim) = blk.g * xs;
      off += blk.dim;
    }
    Vector t1, t2;
    w.apply_winv_t(cp, gx - bz, t1);
    dz.resize(cp.cone_dim);
    off = 0;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      const auto& sc = w.per_block[b];
      const auto ub = t1.segment(off, blk.dim);
      if (blk.kind == ConeKind::NonNeg) {
        dz.segment(off, blk.dim) = ub.cwiseQuotient(sc.d);
      } else if (blk.kind == ConeKind::Soc) {
        soc_apply_inv(sc.wbar, sc.eta, ub, t2);
        dz.segment(off, blk.dim) = t2;
      } else {
        dz.segment(off, blk.dim) = svec(sc.rinv.transpose() * smat(ub) * sc.rinv);
      }
      off += blk.dim;
    }
  }

  // u = WᵀW·v per block.
  void apply_wtw(const ScalingSet& w, const Vector& v, Vector& out) const {
    out.resize(cp.cone_dim);
    int off = 0;
    Vector t1;
    for (size_t b = 0; b < cp.blocks.size(); ++b) {
      const auto& blk = cp.blocks[b];
      const auto& sc = w.per_block[b];
      const auto vb = v.segment(off, blk.dim);
      if (blk.kind == ConeKind::NonNeg) {
        out.segment(off, blk.dim) = vb.cwiseProduct(sc.d).cwiseProduct(sc.d);
      } else if (blk.kind == ConeKind::Soc) {
        soc_apply(sc.wbar, sc.eta, vb, t1);
        Vector t2;
        soc_apply(sc.wbar, sc.eta, t1, t2);
        out.segment(off, blk.dim) = t2;
      } else {
        const Matrix rr = sc.r * sc.r.transpose();
        out.segment(off, blk.dim) = svec(rr * smat(vb) * rr);
      }
      off += blk.dim;
    }
  }

  // Solve the full 3×3 KKT system with refinement of all three residual rows;
  // the reduced elimination alone loses dual accuracy once the scaling is
  // ill-conditioned near convergence.
  void solve(const ScalingSet& w, const Vector& bx, const Vector& by, const Vector& bz,
             Vector& dx, Vector& dy, Vector& dz) const {
    solve_reduced(w, bx, by, bz, dx, dy, dz);
    Vector cx, cy, cz;
    for (int refine = 0; refine < 2; ++refine) {
      Vector r1 = bx - cp.p.selfadjointView<Eigen::Lower>() * dx;
      if (cp.neq > 0) r1 -= cp.aeq.transpose() * dy;
      Vector gtdz;
      mul_gt_local(dz, gtdz);
      r1 -= gtdz;
      Vector r2 = cp.neq > 0 ? Vector(by - cp.aeq * dx) : Vector(0);
      Vector gdx;
      mul_g_local(dx, gdx);
      Vector wtwdz;
      apply_wtw(w, dz, wtwdz);
      Vector r3 = bz - gdx + wtwdz;
      const double rn = r1.norm() + r2.norm() + r3.norm();
      if (rn <= 1e-13 * (1.0 + bx.norm() + by.norm() + bz.norm())) break;
      solve_reduced(w, r1, r2, r3, cx, cy, cz);
      dx += cx;
      if (cp.neq > 0) dy += cy;
      dz += cz;
    }
  }

  void mul_g_local(const Vector& x, Vector& out) const {
    out.resize(cp.cone_dim);
    int off = 0;
    for (const auto& blk : cp.blocks) {
      Vector xs(blk.support.size());
      for (size_t k = 0; k < blk.support.size(); ++k) xs[static_cast<Eigen::Index>(k)] = x[blk.support[k]];
      out.segment(off, blk.dim) = blk.g * xs;
      off += blk.dim;
    }
  }

  void mul_gt_local(const Vector& z, Vector& out) const {
    out = Vector::Zero(cp.n);
    int off = 0;
    for (const auto& blk : cp.blocks) {
      const Vector contrib = blk.g.transpose() * z.segment(off, blk.dim);
      for (size_t k = 0; k < blk.support.size(); ++k) out[blk.support[k]] += contrib[static_cast<Eigen::Index>(k)];
      off += blk.dim;
    }
  }
};

void mul_g(const Compiled& cp, const Vector& x, Vector& out) {
  out.resize(cp.cone_dim);
  int off = 0;
  for (const auto& blk : cp.blocks) {
    Vector xs(blk.support.size());
    for (size_t k = 0; k < blk.support.size(); ++k) xs[static_cast<Eigen::Index>(k)] = x[blk.support[k]];
    out.segment(off, blk.dim) = blk.g * xs;
    off += blk.dim;
  }
}

void mul_gt(const Compiled& cp, const Vector& z, Vector& out) {
  out = Vector::Zero(cp.n);
  int off = 0;
  for (const auto& blk : cp.blocks) {
    const Vector contrib = blk.g.transpose() * z.segment(off, blk.dim);
    for (size_t k = 0; k < blk.support.size(); ++k) out[blk.support[k]] += contrib[static_cast<Eigen::Index>(k)];
    off += blk.dim;
  }
}

Vector concat_h(const Compiled& cp) {
  Vector h(cp.cone_dim);
  int off = 0;
  for (const auto& blk : cp.blocks) {
    h.segment(off, blk.dim) = blk.h;
    off += blk.dim;
  }
  return h;
}

SolveReport finish(const ConicProgram& prog, const Compiled& cp, SolveStatus status,
                   const Vector& xfree, int iters, double pres, double dres, double gap,
                   const std::string& msg) {
  SolveReport rep;
  rep.status = status;
  rep.iterations = iters;
  rep.primal_residual = pres;
  rep.dual_residual = dres;
  rep.duality_gap = gap;
  rep.message = msg;
  if (xfree.size() == cp.n) {
    rep.x = cp.restore(xfree);
    rep.objective = prog.objective_value(rep.x);
  }
  return rep;
}

}  // namespace

SolveReport solve(const ConicProgram& prog, const SolverSettings& settings) {
  if (!prog.sealed()) throw std::logic_error("solve: program must be sealed");
  const Compiled cp = compile(prog);
  if (cp.infeasible)
    return finish(prog, cp, SolveStatus::Infeasible, Vector(), 0, 0, 0, 0, cp.message);

  // Pure equality-constrained QP: one Newton solve.
  if (cp.blocks.empty()) {
    const int dim = cp.n + cp.neq;
    Matrix kkt = Matrix::Zero(dim, dim);
    kkt.topLeftCorner(cp.n, cp.n) = cp.p;
    if (cp.neq > 0) {
      kkt.bottomLeftCorner(cp.neq, cp.n) = cp.aeq;
      kkt.topRightCorner(cp.n, cp.neq) = cp.aeq.transpose();
    }
    kkt.topLeftCorner(cp.n, cp.n).diagonal().array() += kReg;
    kkt.bottomRightCorner(cp.neq, cp.neq).diagonal().array() -= kReg;
    Vector rhs(dim);
    rhs.head(cp.n) = -cp.c;
    if (cp.neq > 0) rhs.tail(cp.neq) = cp.beq;
    Eigen::LDLT<Matrix> ldlt(kkt);
    if (ldlt.info() != Eigen::Success)
      return finish(prog, cp, SolveStatus::NumericalFailure, Vector(), 0, 0, 0, 0,
                    "KKT factorization failed");
    const Vector sol = ldlt.solve(rhs);
    const Vector x = sol.head(cp.n);
    const double pres = cp.neq > 0 ? (cp.aeq * x - cp.beq).norm() / (1.0 + cp.beq.norm()) : 0.0;
    if (pres > 1e-6)
      return finish(prog, cp, SolveStatus::Infeasible, x, 1, pres, 0, 0,
                    "inconsistent equality constraints");
    return finish(prog, cp, SolveStatus::Optimal, x, 1, pres, 0, 0, "");
  }

  const Vector h = concat_h(cp);
  ScalingSet w;
  w.identity(cp);
  KktSolver kkt(cp);

  // Initial point (scaling = identity): primal-dual least-squares guess, then
  // shift s and z into the cone interior.
  if (!kkt.factor(w))
    return finish(prog, cp, SolveStatus::NumericalFailure, Vector(), 0, 0, 0, 0,
                  "initial KKT factorization failed");
  Vector x, y, z, s;
  kkt.solve(w, -cp.c, cp.beq, h, x, y, z);
  s = -z;
  Vector e;
  cone_identity(cp, e);
  {
    const double ds = interior_deficit(cp, s);
    if (ds >= 0.0) s += (1.0 + ds) * e;
    const double dz = interior_deficit(cp, z);
    if (dz >= 0.0) z += (1.0 + dz) * e;
  }

  const double c_norm = std::max(1.0, cp.c.norm());
  const double b_norm = std::max(1.0, cp.beq.size() > 0 ? cp.beq.norm() : 0.0);
  const double h_norm = std::max(1.0, h.norm());

  Vector gx, gtz, dx_a, dy_a, dz_a, ds_a, dx, dy, dz, ds;
  Vector lam_ds, lam_dz, rhs_s, tmp;

  // Track the best iterate seen; ill-conditioned final factorizations can
  // degrade residuals after the gap has already converged.
  double best_score = std::numeric_limits<double>::infinity();
  Vector best_x;
  double best_pres = 0.0, best_dres = 0.0, best_gap = 0.0;
  int tiny_steps = 0;

  auto best_or = [&](SolveStatus fallback, int iters, double pres, double dres, double gap,
                     const std::string& msg) {
    if (best_score <= settings.feas_tol)
      return finish(prog, cp, SolveStatus::Optimal, best_x, iters, best_pres, best_dres,
                    best_gap, "");
    return finish(prog, cp, fallback, best_x.size() ? best_x : Vector(), iters, pres, dres,
                  gap, msg);
  };

  int it = 0;
  for (; it < settings.max_iterations; ++it) {
    // Residuals.
    mul_g(cp, x, gx);
    mul_gt(cp, z, gtz);
    Vector resx = cp.p.selfadjointView<Eigen::Lower>() * x + cp.c + gtz;
    if (cp.neq > 0) resx += cp.aeq.transpose() * y;
    Vector resy = cp.neq > 0 ? Vector(cp.aeq * x - cp.beq) : Vector(0);
    Vector resz = gx + s - h;

    const double gap = s.dot(z);
    const double pcost = 0.5 * x.dot(cp.p.selfadjointView<Eigen::Lower>() * x) + cp.c.dot(x);
    const double relgap = std::abs(gap) / std::max(1.0, std::abs(pcost));
    const double pres = std::max(cp.neq > 0 ? resy.norm() / b_norm : 0.0, resz.norm() / h_norm);
    const double dres = resx.norm() / c_norm;

    if (settings.verbose)
      printf("it %2d pres %9.2e dres %9.2e gap %9.2e\n", it, pres, dres, gap);

    if (pres <= settings.feas_tol && dres <= settings.feas_tol &&
        (gap <= settings.gap_tol || relgap <= settings.gap_tol))
      return finish(prog, cp, SolveStatus::Optimal, x, it, pres, dres, gap, "");

    const double score = std::max({pres, dres, std::min(std::abs(gap), relgap)});
    if (score < best_score) {
      best_score = score;
      best_x = x;
      best_pres = pres;
      best_dres = dres;
      best_gap = gap;
    }

    // Primal infeasibility certificate: Aᵀy + Gᵀz ≈ 0, z ∈ K*, hᵀz + bᵀy < 0.
    {
      const double kappa = h.dot(z) + (cp.neq > 0 ? cp.beq.dot(y) : 0.0);
      if (kappa < 0.0) {
        Vector cert = gtz;
        if (cp.neq > 0) cert += cp.aeq.transpose() * y;
        const double znorm = std::max(1.0, z.norm() + (cp.neq > 0 ? y.norm() : 0.0));
        if (cert.norm() / znorm <= 1e-10 * std::max(1.0, -kappa / znorm) ||
            cert.norm() <= 1e-8 * (-kappa)) {
          return finish(prog, cp, SolveStatus::Infeasible, Vector(), it, pres, dres, gap,
                        "primal infeasibility certificate found");
        }
      }
    }

    if (!w.update(cp, s, z))
      return best_or(SolveStatus::NumericalFailure, it, pres, dres, gap,
                     "iterate left the cone interior");
    if (!kkt.factor(w))
      return best_or(SolveStatus::NumericalFailure, it, pres, dres, gap,
                     "KKT factorization failed");

    const double mu = gap / cp.degree;

    // Affine direction: rhs_s = -λ∘λ, so bz = -resz + Wᵀλ = -resz + s.
    kkt.solve(w, -resx, Vector(-resy), Vector(-resz + s), dx_a, dy_a, dz_a);
    {
      Vector gdx;
      mul_g(cp, dx_a, gdx);
      ds_a = -resz - gdx;
    }

    w.apply_winv_t(cp, ds_a, lam_ds);
    w.apply_w(cp, dz_a, lam_dz);
    const double alpha_aff =
        std::min({1.0, min_step_to_boundary(cp, w.lambda_all, lam_ds),
                  min_step_to_boundary(cp, w.lambda_all, lam_dz)});
    const double mu_aff =
        (w.lambda_all + alpha_aff * lam_ds).dot(w.lambda_all + alpha_aff * lam_dz) / cp.degree;
    double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
    sigma = std::min(1.0, sigma);

    // Combined direction: rhs_s = -λ∘λ - dS∘dZ + σμe.
    jordan_prod(cp, w.lambda_all, w.lambda_all, rhs_s);
    jordan_prod(cp, lam_ds, lam_dz, tmp);
    rhs_s = -rhs_s - tmp + sigma * mu * e;
    jordan_div(cp, w.lambda_all, rhs_s, tmp);
    Vector wt_tmp;
    w.apply_w_t(cp, tmp, wt_tmp);
    kkt.solve(w, -resx, Vector(-resy), Vector(-resz - wt_tmp), dx, dy, dz);
    {
      Vector gdx;
      mul_g(cp, dx, gdx);
      ds = -resz - gdx;
    }

    w.apply_winv_t(cp, ds, lam_ds);
    w.apply_w(cp, dz, lam_dz);
    double alpha = std::min({1.0, 0.99 * min_step_to_boundary(cp, w.lambda_all, lam_ds),
                             0.99 * min_step_to_boundary(cp, w.lambda_all, lam_dz)});
    if (alpha < 1e-10) {
      if (++tiny_steps >= 3)
        return best_or(SolveStatus::NumericalFailure, it, pres, dres, gap,
                       "no progress (vanishing step sizes)");
    } else {
      tiny_steps = 0;
    }

    x += alpha * dx;
    if (cp.neq > 0) y += alpha * dy;
    s += alpha * ds;
    z += alpha * dz;
  }

  return best_or(SolveStatus::NumericalFailure, it, 0, 0, 0,
                 "maximum iterations reached without convergence");
}

}  // namespace slpsmpc
