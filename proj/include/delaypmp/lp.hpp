#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "delaypmp/errors.hpp"
#include "delaypmp/timegrid.hpp"

namespace delaypmp {

/// minimize c.x subject to A_ub x <= b_ub, A_eq x = b_eq, x >= 0.
struct LinearProgram {
  Vec c;
  Mat A_ub;
  Vec b_ub;
  Mat A_eq;
  Vec b_eq;
};

struct LpResult {
  enum class Status { Optimal, Infeasible, Unbounded };
  Status status = Status::Infeasible;
  Vec x;
  double objective = 0.0;
  Index pivots = 0;
};

namespace detail {

/// Dense simplex tableau with Bland's anti-cycling rule.
class Tableau {
 public:
  Tableau(Mat t, std::vector<Index> basis, double tol) : t_(std::move(t)), basis_(std::move(basis)), tol_(tol) {}

  Index rows() const { return t_.rows() - 1; }
  Index cols() const { return t_.cols() - 1; }
  Mat& data() { return t_; }
  std::vector<Index>& basis() { return basis_; }
  Index pivots() const { return pivots_; }

  /// Minimizes the objective row over columns allowed[j]; returns false if unbounded.
  bool optimize(const std::vector<bool>& allowed) {
    Index m = rows();
    Index limit = 50 * (m + cols()) + 1000;
    while (true) {
      Index enter = -1;
      for (Index j = 0; j < cols(); ++j) {
        if (allowed[j] && t_(m, j) < -tol_) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < m; ++i) {
        double a = t_(i, enter);
        if (a > tol_) {
          double ratio = t_(i, cols()) / a;
          if (ratio < best - 1e-14 || (std::abs(ratio - best) <= 1e-14 && basis_[i] < basis_[leave])) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
      if (pivots_ > limit) throw NumericError("simplex did not terminate (degenerate program)");
    }
  }

  void pivot(Index r, Index c) {
    t_.row(r) /= t_(r, c);
    for (Index i = 0; i < t_.rows(); ++i) {
      if (i != r && t_(i, c) != 0.0) t_.row(i) -= t_(i, c) * t_.row(r);
    }
    basis_[r] = c;
    ++pivots_;
  }

 private:
  Mat t_;
  std::vector<Index> basis_;
  double tol_;
  Index pivots_ = 0;
};

}  // namespace detail

/// Two-phase dense simplex. Small and exact enough for multiplier programs
/// with a few variables and up to a few thousand rows.
inline LpResult solve_lp(const LinearProgram& lp, double tol = 1e-11) {
  Index nv = lp.c.size();
  Index mu = lp.A_ub.rows();
  Index me = lp.A_eq.rows();
  Index m = mu + me;
  if ((mu && lp.A_ub.cols() != nv) || (me && lp.A_eq.cols() != nv)) throw DomainError("LP shape mismatch");
  // Columns: x (nv), slacks (mu), artificials (m), rhs.
  Index ns = mu;
  Index na = m;
  Index ncol = nv + ns + na;
  Mat t = Mat::Zero(m + 1, ncol + 1);
  for (Index i = 0; i < mu; ++i) {
    double sgn = lp.b_ub(i) < 0 ? -1.0 : 1.0;
    t.row(i).head(nv) = sgn * lp.A_ub.row(i);
    t(i, nv + i) = sgn;
    t(i, ncol) = sgn * lp.b_ub(i);
  }
  for (Index i = 0; i < me; ++i) {
    double sgn = lp.b_eq(i) < 0 ? -1.0 : 1.0;
    t.row(mu + i).head(nv) = sgn * lp.A_eq.row(i);
    t(mu + i, ncol) = sgn * lp.b_eq(i);
  }
  std::vector<Index> basis(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    t(i, nv + ns + i) = 1.0;
    basis[i] = nv + ns + i;
  }
  // Phase 1 objective: sum of artificials, expressed in non-basic columns.
  for (Index i = 0; i < m; ++i) t.row(m) -= t.row(i);
  for (Index i = 0; i < m; ++i) t(m, nv + ns + i) = 0.0;
  detail::Tableau tab(std::move(t), std::move(basis), tol);
  std::vector<bool> all(static_cast<std::size_t>(ncol), true);
  tab.optimize(all);
  LpResult res;
  Mat& T = tab.data();
  double scale = 1.0 + (m ? T.col(ncol).head(m).cwiseAbs().maxCoeff() : 0.0);
  if (-T(m, ncol) > 1e-9 * scale) {
    res.status = LpResult::Status::Infeasible;
    res.pivots = tab.pivots();
    return res;
  }
  // Drive remaining artificials out of the basis where possible.
  for (Index i = 0; i < m; ++i) {
    if (tab.basis()[i] >= nv + ns) {
      for (Index j = 0; j < nv + ns; ++j) {
        if (std::abs(T(i, j)) > 1e-9) {
          tab.pivot(i, j);
          break;
        }
      }
    }
  }
  // Phase 2 objective.
  T.row(m).setZero();
  T.row(m).head(nv) = lp.c.transpose();
  for (Index i = 0; i < m; ++i) {
    Index b = tab.basis()[i];
    if (b < nv && lp.c(b) != 0.0) T.row(m) -= lp.c(b) * T.row(i);
  }
  std::vector<bool> allowed(static_cast<std::size_t>(ncol), true);
  for (Index j = nv + ns; j < ncol; ++j) allowed[j] = false;
  if (!tab.optimize(allowed)) {
    res.status = LpResult::Status::Unbounded;
    res.pivots = tab.pivots();
    return res;
  }
  res.status = LpResult::Status::Optimal;
  res.x = Vec::Zero(nv);
  for (Index i = 0; i < m; ++i) {
    if (tab.basis()[i] < nv) res.x(tab.basis()[i]) = T(i, ncol);
  }
  res.objective = lp.c.dot(res.x);
  res.pivots = tab.pivots();
  return res;
}

}  // namespace delaypmp
