#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "delaypmp/lp.hpp"
#include "delaypmp/needle.hpp"
#include "delaypmp/problem.hpp"
#include "delaypmp/resolvent.hpp"

namespace delaypmp {

/// Finite-sample multiplier program.
///
/// Row i of `rows` is w_i = (Dg^j(xbar(T)) X(T, t_i) Delta f_i)_j; a
/// multiplier vector must satisfy lambda . w_i <= 0 for all rows.
struct MultiplierProgram {
  Mat gradients;
  Vec activity;
  Index n_ineq = 0;
  Index n_eq = 0;
  std::vector<Vec> rows;
  std::vector<std::pair<double, Vec>> samples;
  double feasibility_tol = 1e-8;

  Index size() const { return gradients.rows(); }

  /// Inequality constraints with g^j > tol carry no multiplier.
  bool inactive(Index j) const { return j >= 1 && j <= n_ineq && activity(j) > feasibility_tol; }
};

inline MultiplierProgram make_program(const ControlledProblem& prob, const Vec& x_terminal, double tol = 1e-8) {
  MultiplierProgram prog;
  prog.gradients = terminal_gradients(prob, x_terminal);
  prog.activity = terminal_values(prob, x_terminal);
  prog.n_ineq = prob.n_ineq;
  prog.n_eq = prob.n_eq;
  prog.feasibility_tol = tol;
  if (prog.size() != 1 + prob.n_ineq + prob.n_eq) throw ConfigError("terminal function count must be 1 + n_i + n_e");
  return prog;
}

/// Appends one row per (t, v) sample. The feasible set can only shrink.
inline MultiplierProgram enrich_samples(const MultiplierProgram& prog, const std::vector<std::pair<double, Vec>>& batch,
                                        const ControlledProblem& prob, const Trajectory& xbar, const PiecewiseFn& ubar,
                                        const FundamentalMatrix& X) {
  MultiplierProgram out = prog;
  const Mesh& mesh = xbar.mesh();
  for (const auto& [t, v] : batch) {
    Index j = mesh.index_of(t, "sample time");
    Vec d = X.terminal(j) * delta_f(prob, xbar, ubar, j, v);
    Vec w = prog.gradients * d;
    if (!w.allFinite()) throw NumericError("non-finite multiplier sample row at t=" + format_number(t));
    out.rows.push_back(w);
    out.samples.emplace_back(t, v);
  }
  return out;
}

/// Product of every stride-th node in [0, T) with the control samples.
inline std::vector<std::pair<double, Vec>> sample_batch(const Mesh& mesh, Index stride, const std::vector<Vec>& controls) {
  std::vector<std::pair<double, Vec>> batch;
  if (stride < 1) throw ConfigError("sample stride must be positive");
  for (Index j = 0; j < mesh.steps(); j += stride) {
    for (const Vec& v : controls) batch.emplace_back(mesh.time(j), v);
  }
  return batch;
}

struct MultiplierResiduals {
  double norm = 0.0;      // | sum |lambda_j| - 1 |
  double sign = 0.0;      // max(0, -lambda_j), j <= n_i
  double slack = 0.0;     // max |lambda_j g^j|, j = 1..n_i
  double samples = 0.0;   // max(0, lambda . w_i)
  double max() const { return std::max({norm, sign, slack, samples}); }
};

inline MultiplierResiduals verify_multipliers(const MultiplierProgram& prog, const Vec& lambda) {
  MultiplierResiduals r;
  r.norm = std::abs(lambda.lpNorm<1>() - 1.0);
  for (Index j = 0; j <= prog.n_ineq; ++j) r.sign = std::max(r.sign, -lambda(j));
  for (Index j = 1; j <= prog.n_ineq; ++j) r.slack = std::max(r.slack, std::abs(lambda(j) * prog.activity(j)));
  for (const Vec& w : prog.rows) r.samples = std::max(r.samples, lambda.dot(w));
  return r;
}

struct MultiplierResult {
  bool feasible = false;
  Vec lambda;
  MultiplierResiduals residuals;
  std::string message;
};

namespace detail {

inline bool lex_less(const Vec& a, const Vec& b, double tol) {
  for (Index j = 0; j < a.size(); ++j) {
    if (a(j) < b(j) - tol) return true;
    if (a(j) > b(j) + tol) return false;
  }
  return false;
}

/// Solves an LP whose inequality rows far outnumber its variables by
/// constraint generation: start from no rows, add the most violated rows,
/// repeat. A relaxation that is infeasible proves the full program is.
inline LpResult solve_lp_generated(const LinearProgram& full, double tol = 1e-12) {
  Index mrows = full.A_ub.rows();
  std::vector<Index> active;
  std::vector<bool> in(static_cast<std::size_t>(mrows), false);
  while (true) {
    LinearProgram sub;
    sub.c = full.c;
    sub.A_eq = full.A_eq;
    sub.b_eq = full.b_eq;
    sub.A_ub.resize(static_cast<Index>(active.size()), full.c.size());
    sub.b_ub.resize(static_cast<Index>(active.size()));
    for (std::size_t i = 0; i < active.size(); ++i) {
      sub.A_ub.row(static_cast<Index>(i)) = full.A_ub.row(active[i]);
      sub.b_ub(static_cast<Index>(i)) = full.b_ub(active[i]);
    }
    LpResult res = solve_lp(sub);
    if (res.status != LpResult::Status::Optimal) return res;
    std::vector<std::pair<double, Index>> viol;
    for (Index i = 0; i < mrows; ++i) {
      if (in[i]) continue;
      double v = full.A_ub.row(i).dot(res.x) - full.b_ub(i);
      if (v > tol) viol.emplace_back(-v, i);
    }
    if (viol.empty()) return res;
    std::sort(viol.begin(), viol.end());
    for (std::size_t q = 0; q < std::min<std::size_t>(viol.size(), 8); ++q) {
      active.push_back(viol[q].second);
      in[viol[q].second] = true;
    }
  }
}

}  // namespace detail

/// Lexicographically smallest lambda with ||lambda||_1 = 1, lambda_j >= 0
/// for j <= n_i, zero on inactive inequalities, and lambda . w_i <= 0.
///
/// Each sign pattern of the equality multipliers is an orthant in which
/// |lambda| is linear; the lexicographic minimum is found there by a
/// sequence of LPs, and the best orthant wins.
inline MultiplierResult solve_multipliers(const MultiplierProgram& prog) {
  Index m = prog.size();
  if (m == 0) throw ConfigError("multiplier program without terminal functions");
  std::vector<Index> free_vars;
  for (Index j = 0; j < m; ++j) {
    if (!prog.inactive(j)) free_vars.push_back(j);
  }
  Index nv = static_cast<Index>(free_vars.size());
  // Drop zero rows and exact duplicates; they do not change the feasible set.
  std::vector<Vec> rows;
  std::set<std::vector<double>> seen;
  for (const Vec& w : prog.rows) {
    Vec r(nv);
    for (Index k = 0; k < nv; ++k) r(k) = w(free_vars[k]);
    double sc = r.lpNorm<Eigen::Infinity>();
    if (sc == 0.0) continue;
    r /= sc;
    if (seen.insert(std::vector<double>(r.data(), r.data() + nv)).second) rows.push_back(r);
  }
  Index n_eq_free = 0;
  for (Index k = 0; k < nv; ++k) n_eq_free += free_vars[k] > prog.n_ineq ? 1 : 0;

  MultiplierResult best;
  for (Index pattern = 0; pattern < (Index(1) << n_eq_free); ++pattern) {
    Vec sgn = Vec::Ones(nv);
    Index e = 0;
    for (Index k = 0; k < nv; ++k) {
      if (free_vars[k] > prog.n_ineq) {
        if (pattern & (Index(1) << e)) sgn(k) = -1.0;
        ++e;
      }
    }
    // Variables mu >= 0 with lambda_k = sgn_k mu_k.
    LinearProgram lp;
    lp.A_ub.resize(static_cast<Index>(rows.size()), nv);
    lp.b_ub = Vec::Zero(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) lp.A_ub.row(static_cast<Index>(i)) = rows[i].cwiseProduct(sgn).transpose();
    lp.A_eq = Mat::Ones(1, nv);
    lp.b_eq = Vec::Ones(1);
    Vec mu;
    bool ok = true;
    for (Index k = 0; k < nv; ++k) {
      lp.c = Vec::Zero(nv);
      lp.c(k) = sgn(k);
      LpResult res = detail::solve_lp_generated(lp);
      if (res.status != LpResult::Status::Optimal) {
        ok = false;
        break;
      }
      mu = res.x;
      // Fix this coordinate before minimizing the next one.
      Mat A(lp.A_eq.rows() + 1, nv);
      A << lp.A_eq, Mat::Zero(1, nv);
      A(A.rows() - 1, k) = 1.0;
      Vec b(lp.b_eq.size() + 1);
      b << lp.b_eq, mu(k);
      lp.A_eq = A;
      lp.b_eq = b;
    }
    if (!ok) continue;
    Vec lambda = Vec::Zero(m);
    for (Index k = 0; k < nv; ++k) lambda(free_vars[k]) = sgn(k) * mu(k);
    if (!best.feasible || detail::lex_less(lambda, best.lambda, 1e-12)) {
      best.feasible = true;
      best.lambda = lambda;
    }
  }
  if (!best.feasible) {
    best.message = "no multiplier on this sample set: candidate (xbar, ubar) fails the multiplier rule up to discretization";
    return best;
  }
  best.residuals = verify_multipliers(prog, best.lambda);
  if (best.residuals.max() > 1e-6) {
    throw NumericError("multiplier LP returned a point violating its constraints by " +
                       format_number(best.residuals.max()));
  }
  best.message = "feasible";
  return best;
}

}  // namespace delaypmp
