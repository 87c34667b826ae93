#include "slpsmpc/conic.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace slpsmpc {

double LinearTerm::eval(const Vector& x) const {
  double acc = constant;
  for (size_t k = 0; k < idx.size(); ++k) acc += coef[k] * x[idx[k]];
  return acc;
}

ConicProgram::ConicProgram(int initial_vars) {
  if (initial_vars > 0) add_variables("x", initial_vars);
}

int ConicProgram::add_variables(const std::string& name, int count) {
  require_unsealed();
  if (count <= 0) throw std::invalid_argument("add_variables: count must be positive");
  const int base = num_vars_;
  for (int k = 0; k < count; ++k)
    var_names_.push_back(count == 1 ? name : name + "[" + std::to_string(k) + "]");
  num_vars_ += count;
  return base;
}

const std::string& ConicProgram::var_name(int idx) const {
  return var_names_.at(static_cast<size_t>(idx));
}

void ConicProgram::require_unsealed() const {
  if (sealed_) throw std::logic_error("ConicProgram: modified after seal()");
}

void ConicProgram::validate_term(const LinearTerm& t) const {
  if (t.idx.size() != t.coef.size())
    throw std::invalid_argument("LinearTerm: index/coefficient size mismatch");
  for (int v : t.idx)
    if (v < 0 || v >= num_vars_) throw std::invalid_argument("LinearTerm: variable out of range");
}

void ConicProgram::add_objective_linear(int var, double coef) {
  require_unsealed();
  pending_obj_linear_.push_back(LinearTerm({var}, {coef}));
  validate_term(pending_obj_linear_.back());
}

void ConicProgram::add_objective_factor_row(const LinearTerm& row) {
  require_unsealed();
  validate_term(row);
  if (row.constant != 0.0)
    throw std::invalid_argument("objective factor row must not carry a constant");
  obj_factor_.push_back(row);
}

void ConicProgram::add_equality(const LinearTerm& lhs, double rhs) {
  require_unsealed();
  validate_term(lhs);
  LinearTerm row = lhs;
  double r = rhs - row.constant;
  row.constant = 0.0;
  eq_rows_.push_back(std::move(row));
  Vector b(eq_rows_.size());
  b.head(eq_rhs_.size()) = eq_rhs_;
  b[b.size() - 1] = r;
  eq_rhs_ = std::move(b);
}

namespace {

// Collect the sorted unique support of a family of terms.
std::vector<int> merged_support(const std::vector<const LinearTerm*>& terms) {
  std::vector<int> sup;
  for (const auto* t : terms) sup.insert(sup.end(), t->idx.begin(), t->idx.end());
  std::sort(sup.begin(), sup.end());
  sup.erase(std::unique(sup.begin(), sup.end()), sup.end());
  return sup;
}

Vector fill_row(const LinearTerm& t, const std::vector<int>& sup) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(sup.size()));
  for (size_t k = 0; k < t.idx.size(); ++k) {
    const auto pos = std::lower_bound(sup.begin(), sup.end(), t.idx[k]) - sup.begin();
    out[pos] += t.coef[k];
  }
  return out;
}

}  // namespace

void ConicProgram::add_inequality(const LinearTerm& lhs, double rhs) {
  require_unsealed();
  validate_term(lhs);
  ConeBlock block;
  block.kind = ConeKind::NonNeg;
  block.dim = 1;
  block.support = merged_support({&lhs});
  block.g.resize(1, static_cast<Eigen::Index>(block.support.size()));
  block.g.row(0) = fill_row(lhs, block.support).transpose();
  block.h = Vector::Constant(1, rhs - lhs.constant);
  cones_.push_back(std::move(block));
}

void ConicProgram::add_soc(const LinearTerm& t, const std::vector<LinearTerm>& s) {
  require_unsealed();
  validate_term(t);
  for (const auto& row : s) validate_term(row);
  ConeBlock block;
  block.kind = ConeKind::Soc;
  block.dim = 1 + static_cast<int>(s.size());
  std::vector<const LinearTerm*> all{&t};
  for (const auto& row : s) all.push_back(&row);
  block.support = merged_support(all);
  block.g.resize(block.dim, static_cast<Eigen::Index>(block.support.size()));
  block.h.resize(block.dim);
  // cone vector is h - g·x = (t(x), s(x)); g carries the negated coefficients
  block.g.row(0) = -fill_row(t, block.support).transpose();
  block.h[0] = t.constant;
  for (size_t r = 0; r < s.size(); ++r) {
    block.g.row(static_cast<Eigen::Index>(r + 1)) = -fill_row(s[r], block.support).transpose();
    block.h[static_cast<Eigen::Index>(r + 1)] = s[r].constant;
  }
  cones_.push_back(std::move(block));
}

void ConicProgram::add_psd(const Matrix& constant, const std::vector<int>& vars,
                           const std::vector<Matrix>& coeff) {
  require_unsealed();
  if (vars.size() != coeff.size())
    throw std::invalid_argument("add_psd: vars/coeff size mismatch");
  const Eigen::Index d = constant.rows();
  if (constant.cols() != d) throw std::invalid_argument("add_psd: constant must be square");
  for (const auto& m : coeff)
    if (m.rows() != d || m.cols() != d)
      throw std::invalid_argument("add_psd: coefficient dimension mismatch");
  for (int v : vars)
    if (v < 0 || v >= num_vars_) throw std::invalid_argument("add_psd: variable out of range");

  // Coalesce duplicate variables.
  std::map<int, Matrix> by_var;
  for (size_t k = 0; k < vars.size(); ++k) {
    auto it = by_var.find(vars[k]);
    if (it == by_var.end())
      by_var.emplace(vars[k], coeff[k]);
    else
      it->second += coeff[k];
  }

  ConeBlock block;
  block.kind = ConeKind::Psd;
  block.mat_dim = static_cast<int>(d);
  block.dim = static_cast<int>(svec_dim(d));
  block.h = svec(0.5 * (constant + constant.transpose()));
  block.support.reserve(by_var.size());
  block.g.resize(block.dim, static_cast<Eigen::Index>(by_var.size()));
  Eigen::Index col = 0;
  for (const auto& [v, m] : by_var) {
    block.support.push_back(v);
    block.g.col(col++) = -svec(0.5 * (m + m.transpose()));
  }
  cones_.push_back(std::move(block));
}

void ConicProgram::seal() {
  require_unsealed();
  obj_linear_ = Vector::Zero(num_vars_);
  for (const auto& t : pending_obj_linear_)
    for (size_t k = 0; k < t.idx.size(); ++k) obj_linear_[t.idx[k]] += t.coef[k];
  pending_obj_linear_.clear();
  sealed_ = true;
}

double ConicProgram::objective_value(const Vector& x) const {
  if (!sealed_) throw std::logic_error("objective_value: program not sealed");
  double quad = 0.0;
  for (const auto& row : obj_factor_) {
    const double v = row.eval(x);
    quad += v * v;
  }
  return 0.5 * quad + obj_linear_.dot(x) + obj_constant_;
}

bool ConicProgram::check_feasible(const Vector& point, double tol,
                                  std::string* first_violation) const {
  if (point.size() != num_vars_) throw std::invalid_argument("check_feasible: dimension mismatch");
  for (size_t r = 0; r < eq_rows_.size(); ++r) {
    const double resid = eq_rows_[r].eval(point) - eq_rhs_[static_cast<Eigen::Index>(r)];
    if (std::abs(resid) > tol * (1.0 + std::abs(eq_rhs_[static_cast<Eigen::Index>(r)]))) {
      if (first_violation)
        *first_violation = "equality row " + std::to_string(r) + " residual " + std::to_string(resid);
      return false;
    }
  }
  for (size_t b = 0; b < cones_.size(); ++b) {
    const auto& blk = cones_[b];
    Vector xs(blk.support.size());
    for (size_t k = 0; k < blk.support.size(); ++k) xs[static_cast<Eigen::Index>(k)] = point[blk.support[k]];
    const Vector s = blk.h - blk.g * xs;
    switch (blk.kind) {
      case ConeKind::NonNeg:
        if (s.minCoeff() < -tol * (1.0 + blk.h.cwiseAbs().maxCoeff())) {
          if (first_violation) *first_violation = "nonnegative row in block " + std::to_string(b);
          return false;
        }
        break;
      case ConeKind::Soc: {
        const double t = s[0];
        const double nrm = s.tail(s.size() - 1).norm();
        if (t < nrm - tol * (1.0 + std::abs(t) + nrm)) {
          if (first_violation) *first_violation = "second-order cone block " + std::to_string(b);
          return false;
        }
        break;
      }
      case ConeKind::Psd: {
        const Matrix m = smat(s);
        Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -tol * (1.0 + m.cwiseAbs().maxCoeff())) {
          if (first_violation) *first_violation = "PSD block " + std::to_string(b);
          return false;
        }
        break;
      }
    }
  }
  return true;
}

ConicProgram reformulate_quadratic_to_epigraph(const ConicProgram& prog) {
  if (!prog.sealed()) throw std::logic_error("reformulate: program not sealed");
  ConicProgram out;
  out.add_variables("x", prog.num_vars());
  for (size_t r = 0; r < prog.equalities().size(); ++r)
    out.add_equality(prog.equalities()[r], prog.equality_rhs()[static_cast<Eigen::Index>(r)]);
  for (const auto& blk : prog.cone_blocks()) {
    // Re-emit the compiled block verbatim.
    if (blk.kind == ConeKind::NonNeg) {
      LinearTerm row;
      for (size_t k = 0; k < blk.support.size(); ++k) {
        row.idx.push_back(blk.support[k]);
        row.coef.push_back(blk.g(0, static_cast<Eigen::Index>(k)));
      }
      out.add_inequality(row, blk.h[0]);
    } else if (blk.kind == ConeKind::Soc) {
      std::vector<LinearTerm> rows(static_cast<size_t>(blk.dim));
      for (int r = 0; r < blk.dim; ++r) {
        rows[static_cast<size_t>(r)].constant = blk.h[r];
        for (size_t k = 0; k < blk.support.size(); ++k) {
          rows[static_cast<size_t>(r)].idx.push_back(blk.support[k]);
          rows[static_cast<size_t>(r)].coef.push_back(-blk.g(r, static_cast<Eigen::Index>(k)));
        }
      }
      out.add_soc(rows[0], {rows.begin() + 1, rows.end()});
    } else {
      const Matrix constant = smat(blk.h);
      std::vector<Matrix> coeff;
      for (size_t k = 0; k < blk.support.size(); ++k)
        coeff.push_back(-smat(blk.g.col(static_cast<Eigen::Index>(k))));
      out.add_psd(constant, blk.support, coeff);
    }
  }
  for (int v = 0; v < prog.num_vars(); ++v)
    if (prog.objective_linear()[v] != 0.0) out.add_objective_linear(v, prog.objective_linear()[v]);
  out.add_objective_constant(prog.objective_constant());
  if (!prog.objective_factor().empty()) {
    const int t = out.add_variables("qobj_epi", 1);
    out.add_objective_linear(t, 1.0);
    // ½‖Fx‖² ≤ t  ⟺  ‖[Fx; t - ½]‖ ≤ t + ½
    LinearTerm head({t}, {1.0}, 0.5);
    std::vector<LinearTerm> tail = prog.objective_factor();
    tail.push_back(LinearTerm({t}, {1.0}, -0.5));
    out.add_soc(head, tail);
  }
  out.seal();
  return out;
}

void ConicProgram::write_cbf(const std::string& path) const {
  const ConicProgram epi =
      obj_factor_.empty() ? ConicProgram(*this) : reformulate_quadratic_to_epigraph(*this);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_cbf: cannot open " + path);
  f << "VER\n3\n\n";
  f << "OBJSENSE\nMIN\n\n";
  f << "VAR\n" << epi.num_vars_ << " 1\nF " << epi.num_vars_ << "\n\n";
  f.precision(17);

  // Scalar map rows: equalities (L=), then cone blocks in order.
  int n_map = static_cast<int>(epi.eq_rows_.size());
  std::vector<const ConeBlock*> scalar_blocks, psd_blocks;
  for (const auto& blk : epi.cones_) {
    if (blk.kind == ConeKind::Psd)
      psd_blocks.push_back(&blk);
    else {
      scalar_blocks.push_back(&blk);
      n_map += blk.dim;
    }
  }
  f << "CON\n" << n_map << " " << (1 + scalar_blocks.size()) << "\n";
  f << "L= " << epi.eq_rows_.size() << "\n";
  for (const auto* blk : scalar_blocks)
    f << (blk->kind == ConeKind::NonNeg ? "L+ " : "Q ") << blk->dim << "\n";
  f << "\n";
  if (!psd_blocks.empty()) {
    f << "PSDCON\n" << psd_blocks.size() << "\n";
    for (const auto* blk : psd_blocks) f << blk->mat_dim << "\n";
    f << "\n";
  }

  std::vector<std::string> acoord, bcoord;
  int row_base = 0;
  auto note = [&](int row, int var, double v) {
    if (v != 0.0) acoord.push_back(std::to_string(row) + " " + std::to_string(var) + " " + std::to_string(v));
  };
  auto noteb = [&](int row, double v) {
    if (v != 0.0) bcoord.push_back(std::to_string(row) + " " + std::to_string(v));
  };
  for (size_t r = 0; r < epi.eq_rows_.size(); ++r) {
    const auto& t = epi.eq_rows_[r];
    for (size_t k = 0; k < t.idx.size(); ++k) note(row_base + static_cast<int>(r), t.idx[k], t.coef[k]);
    noteb(row_base + static_cast<int>(r), -epi.eq_rhs_[static_cast<Eigen::Index>(r)]);
  }
  row_base += static_cast<int>(epi.eq_rows_.size());
  for (const auto* blk : scalar_blocks) {
    // cone vector h - g·x must lie in the cone: emit rows -g·x + h.
    for (int r = 0; r < blk->dim; ++r) {
      for (size_t k = 0; k < blk->support.size(); ++k)
        note(row_base + r, blk->support[k], -blk->g(r, static_cast<Eigen::Index>(k)));
      noteb(row_base + r, blk->h[r]);
    }
    row_base += blk->dim;
  }

  f << "OBJACOORD\n";
  int n_obj = 0;
  for (int v = 0; v < epi.num_vars_; ++v)
    if (epi.obj_linear_[v] != 0.0) ++n_obj;
  f << n_obj << "\n";
  for (int v = 0; v < epi.num_vars_; ++v)
    if (epi.obj_linear_[v] != 0.0) f << v << " " << epi.obj_linear_[v] << "\n";
  f << "\n";

  f << "ACOORD\n" << acoord.size() << "\n";
  for (const auto& s : acoord) f << s << "\n";
  f << "\nBCOORD\n" << bcoord.size() << "\n";
  for (const auto& s : bcoord) f << s << "\n";

  if (!psd_blocks.empty()) {
    std::vector<std::string> hcoord, dcoord;
    for (size_t pb = 0; pb < psd_blocks.size(); ++pb) {
      const auto* blk = psd_blocks[pb];
      const int d = blk->mat_dim;
      for (size_t k = 0; k < blk->support.size(); ++k) {
        const Matrix m = -smat(blk->g.col(static_cast<Eigen::Index>(k)));
        for (int i = 0; i < d; ++i)
          for (int j = 0; j <= i; ++j)
            if (m(i, j) != 0.0)
              hcoord.push_back(std::to_string(pb) + " " + std::to_string(blk->support[k]) + " " +
                               std::to_string(i) + " " + std::to_string(j) + " " +
                               std::to_string(m(i, j)));
      }
      const Matrix m0 = smat(blk->h);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j)
          if (m0(i, j) != 0.0)
            dcoord.push_back(std::to_string(pb) + " " + std::to_string(i) + " " +
                             std::to_string(j) + " " + std::to_string(m0(i, j)));
    }
    f << "\nHCOORD\n" << hcoord.size() << "\n";
    for (const auto& s : hcoord) f << s << "\n";
    f << "\nDCOORD\n" << dcoord.size() << "\n";
    for (const auto& s : dcoord) f << s << "\n";
  }
  f << "\n";
}

}  // namespace slpsmpc
