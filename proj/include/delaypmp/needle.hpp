#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "delaypmp/fde.hpp"
#include "delaypmp/kernel.hpp"
#include "delaypmp/resolvent.hpp"

namespace delaypmp {

struct Needle {
  double t = 0.0;
  Vec v;
};

/// Needle times and values with one width per needle.
struct NeedleSpec {
  std::vector<Needle> needles;
  std::vector<double> widths;
};

/// Node interval [begin, end) on which the control is replaced by v.
struct NeedleInterval {
  Index time = 0;
  Index begin = 0;
  Index end = 0;
  Vec v;
};

/// Resolves offsets and checks alignment and disjointness.
///
/// A needle starts after the widths of earlier needles that share its time,
/// so equal-time needles are stacked back to back starting at t_i. Needles
/// are visited in time order; ties keep their order in the spec.
inline std::vector<NeedleInterval> needle_intervals(const NeedleSpec& spec, const Mesh& mesh) {
  if (spec.widths.size() != spec.needles.size()) throw ConfigError("needle spec needs one width per needle");
  std::vector<Index> node;
  for (const Needle& nd : spec.needles) node.push_back(mesh.index_of(nd.t, "needle time"));
  std::vector<std::size_t> order(spec.needles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return node[a] < node[b]; });
  std::vector<NeedleInterval> out;
  Index prev_time = std::numeric_limits<Index>::min();
  Index offset = 0;
  for (std::size_t i : order) {
    const Needle& nd = spec.needles[i];
    double a = spec.widths[i];
    if (a < 0.0) throw DomainError("needle width must be non-negative");
    Index ti = node[i];
    if (ti < 0 || ti >= mesh.steps()) throw DomainError("needle time " + format_number(nd.t) + " outside [0,T)");
    Index ai = mesh.index_of(a, "needle width");
    if (ti != prev_time) offset = 0;
    NeedleInterval iv{ti, ti + offset, ti + offset + ai, nd.v};
    if (iv.end > mesh.steps()) throw DomainError("needle interval at t=" + format_number(nd.t) + " exceeds T");
    offset += ai;
    prev_time = ti;
    out.push_back(iv);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = i + 1; j < out.size(); ++j) {
      const auto& a = out[i];
      const auto& b = out[j];
      if (a.begin < a.end && b.begin < b.end && a.begin < b.end && b.begin < a.end) {
        throw DomainError("needle intervals overlap at t=" + format_number(mesh.time(std::max(a.begin, b.begin))));
      }
    }
  }
  return out;
}

/// u(t, S, a): v_i on each needle interval, ubar elsewhere; right-continuous.
inline PiecewiseFn perturb_control(const PiecewiseFn& ubar, const NeedleSpec& spec) {
  const Mesh& mesh = ubar.mesh();
  std::vector<NeedleInterval> ivs = needle_intervals(spec, mesh);
  PiecewiseFn u = ubar;
  std::vector<Index> extra;
  for (const NeedleInterval& iv : ivs) {
    if (iv.begin == iv.end) continue;
    Vec before = ubar.value(iv.begin, Side::Left);
    Vec after = ubar.value(iv.end, Side::Right);
    for (Index j = iv.begin; j < iv.end; ++j) u.set(j, iv.v);
    u.set(iv.end, after);
    if (iv.begin > 0 && iv.begin > ubar.first()) u.set_left(iv.begin, before);
    u.set_left(iv.end, iv.v);
    extra.push_back(iv.begin);
    extra.push_back(iv.end);
  }
  if (extra.empty()) return ubar;
  // Restore jumps of ubar inside untouched regions; set() above cleared only needle nodes.
  for (Index j : ubar.discontinuities()) {
    bool touched = false;
    for (const NeedleInterval& iv : ivs) touched = touched || (j >= iv.begin && j <= iv.end && iv.begin < iv.end);
    if (!touched) u.set_left(j, ubar.value(j, Side::Left));
  }
  // Drop left values that coincide with the right value.
  PiecewiseFn clean(u.mesh().with_breakpoints(extra), u.first(), u.last(), u.dim(), Smoothness::PC0);
  for (Index j = u.first(); j <= u.last(); ++j) {
    clean.set_right(j, u.right(j));
    if (u.has_jump(j) && (u.value(j, Side::Left) - Vec(u.right(j))).lpNorm<Eigen::Infinity>() > 0.0) {
      clean.set_left(j, u.value(j, Side::Left));
    }
  }
  return clean;
}

/// f(t_j, xbar_{t_j}, v) - f(t_j, xbar_{t_j}, ubar(t_j)).
inline Vec delta_f(const ControlledProblem& prob, const Trajectory& xbar, const PiecewiseFn& ubar, Index j, const Vec& v) {
  NodeView view(xbar.x, j);
  double t = xbar.mesh().time(j);
  return prob.f(t, view, v) - prob.f(t, view, ubar.value(j, Side::Right));
}

/// d_i = X(T, t_i) Delta f_i for every needle in the spec.
inline std::vector<Vec> linearized_sensitivity(const ControlledProblem& prob, const Trajectory& xbar,
                                               const PiecewiseFn& ubar, const NeedleSpec& spec,
                                               const FundamentalMatrix& X) {
  const Mesh& mesh = xbar.mesh();
  std::vector<Vec> out;
  for (const Needle& nd : spec.needles) {
    Index j = mesh.index_of(nd.t, "needle time");
    out.push_back(X.terminal(j) * delta_f(prob, xbar, ubar, j, nd.v));
  }
  return out;
}

struct FdTable {
  std::vector<double> eps;
  std::vector<std::vector<double>> errors;  // errors[e][i]
  std::vector<double> slopes;               // NaN where the errors vanish
  std::vector<bool> exact;

  /// Worst slope over needles whose errors do not vanish.
  double min_slope() const {
    double s = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < slopes.size(); ++i) {
      if (!exact[i]) s = std::min(s, slopes[i]);
    }
    return s;
  }
  bool all_exact() const { return std::all_of(exact.begin(), exact.end(), [](bool b) { return b; }); }
};

/// Least-squares slope of log(err) against log(eps).
inline double loglog_slope(const std::vector<double>& eps, const std::vector<double>& err) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double k = 0;
  for (std::size_t e = 0; e < eps.size(); ++e) {
    if (!(err[e] > 0.0)) continue;
    double x = std::log(eps[e]), y = std::log(err[e]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    k += 1;
  }
  if (k < 2) return std::numeric_limits<double>::quiet_NaN();
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

/// || (x(T, S, eps e_i) - xbar(T)) / eps - d_i || over an eps ladder, per needle.
inline FdTable finite_difference_check(const ControlledProblem& prob, const Trajectory& xbar, const PiecewiseFn& ubar,
                                       const NeedleSpec& spec, const std::vector<double>& ladder,
                                       const FundamentalMatrix& X) {
  const Mesh& mesh = xbar.mesh();
  for (double e : ladder) {
    if (e < mesh.step() * (1.0 - 1e-9)) throw AlignmentError("needle width " + format_number(e) + " is below the step h");
    mesh.index_of(e, "needle width");
  }
  std::vector<Vec> d = linearized_sensitivity(prob, xbar, ubar, spec, X);
  FdTable tab;
  tab.eps = ladder;
  tab.errors.assign(ladder.size(), std::vector<double>(spec.needles.size(), 0.0));
  Vec xT = xbar.terminal();
  for (std::size_t e = 0; e < ladder.size(); ++e) {
    for (std::size_t i = 0; i < spec.needles.size(); ++i) {
      NeedleSpec one{{spec.needles[i]}, {ladder[e]}};
      Trajectory xe = solve(prob, perturb_control(ubar, one));
      Vec q = (xe.terminal() - xT) / ladder[e] - d[i];
      tab.errors[e][i] = norm(q);
    }
  }
  double scale = 1.0;
  for (const Vec& di : d) scale = std::max(scale, norm(di));
  for (std::size_t i = 0; i < spec.needles.size(); ++i) {
    std::vector<double> col;
    bool exact = true;
    for (std::size_t e = 0; e < ladder.size(); ++e) {
      col.push_back(tab.errors[e][i]);
      exact = exact && tab.errors[e][i] <= 1e-12 * scale;
    }
    tab.exact.push_back(exact);
    tab.slopes.push_back(exact ? std::numeric_limits<double>::quiet_NaN() : loglog_slope(ladder, col));
  }
  return tab;
}

struct L1Table {
  std::vector<double> a_norm;
  std::vector<double> integral;
  std::vector<double> ratio;
  double limit = 0.0;     // sum_i a_i ||Xi_i|| / ||a||_1 for the base widths
  double c2 = 0.0;        // max ratio over the grid
  double spread = 0.0;    // (max - min) / max of the ratios
  double limit_gap = 0.0; // |ratio at the smallest a - limit| / limit
};

/// int_0^T || f(t, xbar_t, u(t,S,a)) - f(t, xbar_t, ubar(t)) || dt for a = scale * widths.
inline double l1_deviation(const ControlledProblem& prob, const Trajectory& xbar, const PiecewiseFn& ubar,
                           const NeedleSpec& spec) {
  const Mesh& mesh = xbar.mesh();
  PiecewiseFn u = perturb_control(ubar, spec);
  double h = mesh.step();
  double acc = 0.0;
  auto dev = [&](Index j, Side side) {
    NodeView view(xbar.x, j);
    double t = mesh.time(j);
    return norm(Vec(prob.f(t, view, u.value(j, side)) - prob.f(t, view, ubar.value(j, side))));
  };
  for (Index j = 0; j < mesh.steps(); ++j) acc += 0.5 * h * (dev(j, Side::Right) + dev(j + 1, Side::Left));
  return acc;
}

/// Ratio of the L1 control-deviation integral to ||a||_1 over a grid of
/// scalings of the given needle widths.
inline L1Table l1_bound_check(const ControlledProblem& prob, const Trajectory& xbar, const PiecewiseFn& ubar,
                              const NeedleSpec& spec, const std::vector<double>& scales) {
  L1Table tab;
  const Mesh& mesh = xbar.mesh();
  double base = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < spec.needles.size(); ++i) {
    Index j = mesh.index_of(spec.needles[i].t, "needle time");
    base += spec.widths[i];
    weighted += spec.widths[i] * norm(delta_f(prob, xbar, ubar, j, spec.needles[i].v));
  }
  tab.limit = base > 0.0 ? weighted / base : 0.0;
  double smallest = std::numeric_limits<double>::infinity();
  double ratio_small = 0.0;
  for (double s : scales) {
    NeedleSpec sp = spec;
    double an = 0.0;
    for (double& w : sp.widths) {
      w *= s;
      an += w;
    }
    double integral = l1_deviation(prob, xbar, ubar, sp);
    tab.a_norm.push_back(an);
    tab.integral.push_back(integral);
    double r = an > 0.0 ? integral / an : 0.0;
    tab.ratio.push_back(r);
    if (an > 0.0 && an < smallest) {
      smallest = an;
      ratio_small = r;
    }
  }
  if (!tab.ratio.empty()) {
    double mx = *std::max_element(tab.ratio.begin(), tab.ratio.end());
    double mn = *std::min_element(tab.ratio.begin(), tab.ratio.end());
    tab.c2 = mx;
    tab.spread = mx > 0.0 ? (mx - mn) / mx : 0.0;
  }
  tab.limit_gap = tab.limit > 0.0 ? std::abs(ratio_small - tab.limit) / tab.limit : std::abs(ratio_small);
  return tab;
}

}  // namespace delaypmp
