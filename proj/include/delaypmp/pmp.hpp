#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "delaypmp/fde.hpp"
#include "delaypmp/kernel.hpp"
#include "delaypmp/lp.hpp"
#include "delaypmp/problem.hpp"
#include "delaypmp/resolvent.hpp"

namespace delaypmp {

enum class Verdict { Pass, Fail, NotApplicable };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Pass:
      return "pass";
    case Verdict::Fail:
      return "fail";
    case Verdict::NotApplicable:
      return "n/a";
  }
  return "?";
}

struct ConditionResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::Pass;
};

struct QcResult {
  bool holds = true;
  double residual = 0.0;  // largest normalized nonzero c found (0 when QC holds)
  Vec certificate;        // nonzero c with sum c_j Dg^j = 0, scaled to max |c_j| = 1
};

struct PmpOptions {
  double feasibility_tol = 1e-8;
  std::optional<double> residual_tol;  // default 10 h
  std::optional<double> window;        // A1 window, default min(r, T)/10
  std::optional<Index> mp_grid;        // resampling of a box control set
  Index mp_stride = 1;                 // node stride of the maximum-condition scan
};

struct PmpCertificate {
  Vec lambda;
  PiecewiseFn p;
  std::vector<ConditionResult> conditions;
  QcResult qc;
  Index mp_samples = 0;
  double ae_literal = 0.0;       // constancy residual without the eta(., 0) normalization
  double truncation_gap = 0.0;   // |int over [t,T] - int over [t, t+r]| for the eta term
  std::vector<double> c_values;  // c(t) at every node

  const ConditionResult& get(const std::string& name) const {
    for (const auto& c : conditions) {
      if (c.name == name) return c;
    }
    throw DomainError("unknown condition " + name);
  }

  bool all_pass() const {
    return std::none_of(conditions.begin(), conditions.end(), [](const ConditionResult& c) { return c.verdict == Verdict::Fail; });
  }
};

/// p(t) = sum_j lambda_j Dg^j(xbar(T)) X(T, t), stored as a column per node.
inline PiecewiseFn build_p(const Vec& lambda, const Mat& gradients, const FundamentalMatrix& X) {
  if (lambda.size() != gradients.rows()) throw DomainError("multiplier count does not match the terminal gradients");
  if (gradients.cols() != X.dim()) throw DomainError("gradient dimension does not match X");
  const Mesh& mesh = X.mesh();
  Eigen::RowVectorXd pT = lambda.transpose() * gradients;
  PiecewiseFn p(mesh, 0, mesh.steps(), X.dim(), Smoothness::PC0);
  for (Index j = 0; j <= mesh.steps(); ++j) p.set_right(j, (pT * X.terminal(j)).transpose());
  return p;
}

/// Decides whether a nonzero c exists with c_j >= 0 (j <= n_i),
/// c_j = 0 on inactive inequalities, and sum_j c_j Dg^j = 0.
inline QcResult check_qc(const Vec& g_values, const Mat& gradients, Index n_i, Index n_e, double tol = 1e-8) {
  Index m = gradients.rows();
  Index n = gradients.cols();
  if (g_values.size() != m || m != 1 + n_i + n_e) throw DomainError("QC input size mismatch");
  std::vector<Index> act;
  for (Index j = 0; j < m; ++j) {
    bool inactive = j >= 1 && j <= n_i && g_values(j) > tol;
    if (!inactive) act.push_back(j);
  }
  Index nv = static_cast<Index>(act.size());
  std::vector<Index> eq;
  for (Index k = 0; k < nv; ++k) {
    if (act[k] > n_i) eq.push_back(k);
  }
  QcResult out;
  for (Index pattern = 0; pattern < (Index(1) << eq.size()); ++pattern) {
    Vec sgn = Vec::Ones(nv);
    for (std::size_t e = 0; e < eq.size(); ++e) {
      if (pattern & (Index(1) << e)) sgn(eq[e]) = -1.0;
    }
    // maximize sum mu subject to sum sgn_k mu_k Dg^{act_k} = 0, sum mu <= 1, mu >= 0.
    LinearProgram lp;
    lp.c = -Vec::Ones(nv);
    lp.A_eq.resize(n, nv);
    for (Index k = 0; k < nv; ++k) lp.A_eq.col(k) = sgn(k) * gradients.row(act[k]).transpose();
    lp.b_eq = Vec::Zero(n);
    lp.A_ub = Mat::Ones(1, nv);
    lp.b_ub = Vec::Ones(1);
    LpResult res = solve_lp(lp);
    if (res.status == LpResult::Status::Optimal && -res.objective > 1e-9) {
      Vec c = Vec::Zero(m);
      for (Index k = 0; k < nv; ++k) c(act[k]) = sgn(k) * res.x(k);
      double mx = c.lpNorm<Eigen::Infinity>();
      out.holds = false;
      out.certificate = c / mx;
      out.residual = std::max(out.residual, -res.objective);
    }
  }
  if (out.holds) out.certificate = Vec::Zero(m);
  return out;
}

namespace detail {

/// eta^1(alpha, t - alpha) one-sided in alpha, with d = alpha - t in steps.
inline Mat eta_shifted(const DelayKernel& K, Index alpha, Side side, Index d, Limit lim) {
  Index n = K.dim();
  Index R = K.mesh().delay_steps();
  Mat out = Mat::Zero(n, n);
  bool above = lim == Limit::Above;
  if (d > R || (above && d >= R)) return out;
  for (Index k = 0; k < K.num_atoms(); ++k) {
    Index m = K.atom_lag(k);
    if (above ? d < m : d <= m) out += K.coeff(k, alpha, side);
  }
  if (K.has_density()) out += K.density_integral(alpha, side, R) - K.density_integral(alpha, side, d);
  return out;
}

inline Mat eta_zero(const DelayKernel& K, Index alpha, Side side) {
  Index n = K.dim();
  Mat out = Mat::Zero(n, n);
  for (Index k = 0; k < K.num_atoms(); ++k) out += K.coeff(k, alpha, side);
  if (K.has_density()) out += K.density_integral(alpha, side, K.mesh().delay_steps());
  return out;
}

}  // namespace detail

/// Evaluates the conclusions of the maximum principle for a candidate
/// process and multiplier vector.
///
/// AE is checked in constancy form with
///   c(t) = p(t) + int_t^{min(t+r,T)} p(a) eta(a, t-a) da - int_t^T p(a) eta(a, 0) da,
/// which must equal p(T).
inline PmpCertificate check_conditions(const ControlledProblem& prob, const Trajectory& xbar, const DelayKernel& K,
                                       const Vec& lambda, const PiecewiseFn& p, const PmpOptions& opt = {}) {
  const Mesh& mesh = xbar.mesh();
  Index M = mesh.steps();
  Index R = mesh.delay_steps();
  double h = mesh.step();
  double tol = opt.feasibility_tol;
  double rtol = opt.residual_tol.value_or(10.0 * h);
  Index ni = prob.n_ineq;
  Index m = 1 + prob.n_ineq + prob.n_eq;
  if (!prob.f) throw ConfigError("problem has no vector field");
  if (static_cast<Index>(prob.terminal.size()) != m) throw ConfigError("missing terminal gradients");
  if (lambda.size() != m) throw DomainError("multiplier vector has length " + std::to_string(lambda.size()));
  Vec xT = xbar.terminal();
  Vec g = terminal_values(prob, xT);
  Mat G = terminal_gradients(prob, xT);
  for (Index j = 1; j <= ni; ++j) {
    if (g(j) < -tol) throw DomainError("infeasible reference process: g^" + std::to_string(j) + " = " + format_number(g(j)));
  }
  for (Index j = ni + 1; j < m; ++j) {
    if (std::abs(g(j)) > tol) throw DomainError("infeasible reference process: g^" + std::to_string(j) + " = " + format_number(g(j)));
  }

  PmpCertificate cert;
  cert.lambda = lambda;
  cert.p = p;
  auto add = [&](const std::string& name, double res, double t, bool pass) {
    cert.conditions.push_back({name, res, t, pass ? Verdict::Pass : Verdict::Fail});
  };

  double l1 = lambda.lpNorm<1>();
  add("NN", std::abs(1.0 - l1), tol, l1 > tol);

  double si = 0.0;
  for (Index j = 0; j <= ni; ++j) si = std::max(si, -lambda(j));
  add("Si", si, tol, si <= tol);

  double sl = 0.0;
  for (Index j = 1; j <= ni; ++j) sl = std::max(sl, std::abs(lambda(j) * g(j)));
  add("Sl", sl, rtol, sl <= rtol);

  // AE in constancy form.
  auto row = [&](Index j) -> Eigen::RowVectorXd { return p.value(j, Side::Right).transpose(); };
  auto rowL = [&](Index j) -> Eigen::RowVectorXd { return p.value(j, Side::Left).transpose(); };
  Index n = prob.n;
  std::vector<Eigen::RowVectorXd> tail(static_cast<std::size_t>(M + 1), Eigen::RowVectorXd::Zero(n));
  for (Index c = M - 1; c >= 0; --c) {
    tail[c] = tail[c + 1] + 0.5 * h * (row(c) * detail::eta_zero(K, c, Side::Right) + rowL(c + 1) * detail::eta_zero(K, c + 1, Side::Left));
  }
  double ae = 0.0, ae_lit = 0.0, gap = 0.0;
  cert.c_values.assign(static_cast<std::size_t>(M + 1), 0.0);
  Eigen::RowVectorXd pT = row(M);
  std::vector<Eigen::RowVectorXd> cvals(static_cast<std::size_t>(M + 1));
  Eigen::RowVectorXd lit_T;
  for (Index j = 0; j <= M; ++j) {
    Eigen::RowVectorXd trunc = Eigen::RowVectorXd::Zero(n);
    Index stop = std::min(j + R, M);
    for (Index c = j; c < stop; ++c) {
      trunc += 0.5 * h * (row(c) * detail::eta_shifted(K, c, Side::Right, c - j, Limit::Above) +
                          rowL(c + 1) * detail::eta_shifted(K, c + 1, Side::Left, c + 1 - j, Limit::Below));
    }
    Eigen::RowVectorXd full = trunc;
    for (Index c = stop; c < M; ++c) {
      full += 0.5 * h * (row(c) * detail::eta_shifted(K, c, Side::Right, c - j, Limit::Above) +
                         rowL(c + 1) * detail::eta_shifted(K, c + 1, Side::Left, c + 1 - j, Limit::Below));
    }
    gap = std::max(gap, (full - trunc).cwiseAbs().maxCoeff());
    Eigen::RowVectorXd lit = row(j) + trunc;
    cvals[j] = lit - tail[j];
    if (j == M) lit_T = lit;
  }
  for (Index j = 0; j <= M; ++j) {
    ae = std::max(ae, (cvals[j] - pT).cwiseAbs().maxCoeff());
    cert.c_values[j] = cvals[j].size() ? cvals[j](0) : 0.0;
  }
  for (Index j = 0; j <= M; ++j) {
    Eigen::RowVectorXd trunc = cvals[j] + tail[j];
    ae_lit = std::max(ae_lit, (trunc - lit_T).cwiseAbs().maxCoeff());
  }
  cert.ae_literal = ae_lit;
  cert.truncation_gap = gap;
  add("AE", ae, rtol, ae <= rtol);

  Eigen::RowVectorXd target = lambda.transpose() * G;
  double tr = (pT - target).cwiseAbs().maxCoeff();
  add("T", tr, rtol, tr <= rtol);

  // Maximum condition on the control sample set.
  std::vector<Vec> us = prob.controls.samples(opt.mp_grid);
  cert.mp_samples = static_cast<Index>(us.size());
  double mp = 0.0;
  for (Index j = 0; j <= M; j += std::max<Index>(1, opt.mp_stride)) {
    NodeView view(xbar.x, j);
    double t = mesh.time(j);
    Vec fbar = prob.f(t, view, xbar.u.value(j, Side::Right));
    for (const Vec& u : us) {
      double gain = row(j).dot(prob.f(t, view, u) - fbar);
      mp = std::max(mp, gain);
    }
  }
  add("MP", mp, rtol, mp <= rtol);

  cert.qc = check_qc(g, G, prob.n_ineq, prob.n_eq, tol);
  add("QC", cert.qc.residual, tol, cert.qc.holds);

  // A1: p does not vanish on the final window; A2: no r-window where p vanishes.
  double eps = opt.window.value_or(R > 0 ? std::min(mesh.delay(), mesh.horizon()) / 10.0 : mesh.horizon() / 10.0);
  Index w = std::max<Index>(1, static_cast<Index>(std::floor(eps / h + 1e-9)));
  double a1 = std::numeric_limits<double>::infinity();
  for (Index j = std::max<Index>(0, M - w + 1); j <= M; ++j) a1 = std::min(a1, norm(p.value(j, Side::Right)));
  std::vector<double> pn(static_cast<std::size_t>(M + 1));
  for (Index j = 0; j <= M; ++j) pn[j] = norm(p.value(j, Side::Right));
  // Sliding-window maximum over [t, min(t + r, T)].
  double a2 = std::numeric_limits<double>::infinity();
  std::deque<Index> dq;
  Index hi = -1;
  for (Index j = 0; j <= M; ++j) {
    Index want = std::min(j + R, M);
    while (hi < want) {
      ++hi;
      while (!dq.empty() && pn[dq.back()] <= pn[hi]) dq.pop_back();
      dq.push_back(hi);
    }
    while (dq.front() < j) dq.pop_front();
    a2 = std::min(a2, pn[dq.front()]);
  }
  Verdict qcv = cert.qc.holds ? Verdict::Pass : Verdict::NotApplicable;
  auto gated = [&](const std::string& name, double v) {
    bool pass = v > tol;
    cert.conditions.push_back({name, v, tol, qcv == Verdict::NotApplicable ? Verdict::NotApplicable : (pass ? Verdict::Pass : Verdict::Fail)});
  };
  gated("A1", a1);
  gated("A2", a2);
  return cert;
}

}  // namespace delaypmp
