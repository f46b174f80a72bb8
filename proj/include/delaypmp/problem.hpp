#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "delaypmp/timegrid.hpp"

namespace delaypmp {

/// Read access to a state segment x_t at one evaluation time.
///
/// lag(m) is x(t - m h) for m in [0, R]; at(theta) accepts any theta in
/// [-r, 0] and interpolates between stored values.
class SegmentView {
 public:
  virtual ~SegmentView() = default;
  virtual Vec lag(Index m) const = 0;
  virtual Vec at(double theta) const = 0;
  virtual Index delay_steps() const = 0;
  virtual double step() const = 0;
};

/// SegmentView over a HistorySegment.
class HistoryView final : public SegmentView {
 public:
  explicit HistoryView(const HistorySegment& seg) : seg_(&seg) {}
  Vec lag(Index m) const override { return seg_->lag(m); }
  Vec at(double theta) const override { return seg_->at(theta); }
  Index delay_steps() const override { return seg_->delay_steps(); }
  double step() const override { return seg_->step(); }

 private:
  const HistorySegment* seg_;
};

/// Derivative of f in the segment argument: atoms plus a density.
///
/// The linear map is  psi -> sum_k A_k psi(-r_k) + int_{-r}^0 C(theta) psi(theta) dtheta.
struct LinearPart {
  std::vector<std::pair<double, Mat>> atoms;
  std::function<Mat(double theta)> density;
};

struct HistoryFunction {
  std::function<Vec(double)> value;
  std::function<Vec(double)> derivative;
};

/// Admissible control values: a finite list, or a box sampled on a grid.
struct ControlSet {
  std::vector<Vec> values;
  bool is_box = false;
  Vec lower;
  Vec upper;
  Index grid = 0;

  static ControlSet finite(std::vector<Vec> vals) {
    ControlSet u;
    u.values = std::move(vals);
    return u;
  }

  static ControlSet box(Vec lo, Vec hi, Index grid) {
    ControlSet u;
    u.is_box = true;
    u.lower = std::move(lo);
    u.upper = std::move(hi);
    u.grid = grid;
    u.values = u.grid_values(grid);
    return u;
  }

  /// Tensor grid with k points per coordinate.
  std::vector<Vec> grid_values(Index k) const {
    Index d = lower.size();
    if (k < 1) throw ConfigError("control grid count must be at least 1");
    std::vector<Vec> out;
    if (d == 0) return {Vec(0)};
    std::vector<Index> idx(d, 0);
    while (true) {
      Vec v(d);
      for (Index i = 0; i < d; ++i) {
        double s = k == 1 ? 0.5 : static_cast<double>(idx[i]) / static_cast<double>(k - 1);
        v(i) = lower(i) + s * (upper(i) - lower(i));
      }
      out.push_back(v);
      Index i = 0;
      while (i < d && ++idx[i] == k) idx[i++] = 0;
      if (i == d) break;
    }
    return out;
  }

  /// Sample set used for the maximum-condition check.
  std::vector<Vec> samples(std::optional<Index> grid_override = std::nullopt) const {
    if (is_box && grid_override) return grid_values(*grid_override);
    return values;
  }

  bool contains(const Vec& v, double tol = 1e-12) const {
    if (is_box) {
      if (v.size() != lower.size()) return false;
      for (Index i = 0; i < v.size(); ++i) {
        if (v(i) < lower(i) - tol || v(i) > upper(i) + tol) return false;
      }
      return true;
    }
    for (const Vec& w : values) {
      if (w.size() == v.size() && (w.size() == 0 || (w - v).lpNorm<Eigen::Infinity>() <= tol)) return true;
    }
    return false;
  }
};

/// Terminal function g^j with its gradient.
struct TerminalFunction {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
};

/// A right-continuous piecewise-constant control table: value from time `from` on.
using ControlTable = std::vector<std::pair<double, Vec>>;

/// Mayer problem: maximize g^0(x(T)) subject to x' = f(t, x_t, u), x_0 = phi,
/// g^j(x(T)) >= 0 for j = 1..n_i and g^j(x(T)) = 0 for j = n_i+1..n_i+n_e.
struct ControlledProblem {
  std::string name;
  Index n = 1;
  Index d = 0;
  double horizon = 1.0;
  double delay = 0.0;
  double step = 1e-3;
  std::function<Vec(double, const SegmentView&, const Vec&)> f;
  std::function<LinearPart(double, const SegmentView&, const Vec&)> d2f;
  HistoryFunction phi;
  ControlSet controls;
  std::vector<TerminalFunction> terminal;
  Index n_ineq = 0;
  Index n_eq = 0;
  std::vector<double> breakpoints;
  ControlTable reference;
  std::optional<Vec> default_lambda;
  std::string ground_truth;

  Mesh mesh() const { return Mesh::uniform(horizon, delay, step).with_breakpoint_times(breakpoints); }

  ControlledProblem with_step(double h) const {
    ControlledProblem p = *this;
    p.step = h;
    p.mesh();
    return p;
  }
};

/// Time passed to f and D2f for one-sided evaluations at a node: left
/// limits are taken just before the node so piecewise coefficients pick
/// the preceding piece.
inline double eval_time(double t, Side side, double h) { return side == Side::Left ? t - 1e-6 * h : t; }

/// Builds the right-continuous control for a piecewise-constant table.
inline PiecewiseFn control_from_table(const Mesh& mesh, Index d, const ControlTable& table) {
  if (table.empty()) throw ConfigError("control table is empty");
  std::vector<std::pair<Index, Vec>> pieces;
  for (const auto& [t, v] : table) {
    if (v.size() != d) throw ConfigError("control value has dimension " + std::to_string(v.size()) + ", expected " + std::to_string(d));
    Index j = mesh.index_of(t, "control breakpoint");
    if (!pieces.empty() && j <= pieces.back().first) throw ConfigError("control table times must increase");
    pieces.emplace_back(j, v);
  }
  if (pieces.front().first != 0) throw ConfigError("control table must start at t=0");
  PiecewiseFn u(mesh, 0, mesh.steps(), d, Smoothness::PC0);
  std::size_t p = 0;
  for (Index j = 0; j <= mesh.steps(); ++j) {
    while (p + 1 < pieces.size() && pieces[p + 1].first <= j) ++p;
    u.set_right(j, pieces[p].second);
  }
  for (std::size_t q = 1; q < pieces.size(); ++q) {
    Index j = pieces[q].first;
    if (j <= mesh.steps() && (pieces[q].second - pieces[q - 1].second).size() > 0 &&
        (pieces[q].second - pieces[q - 1].second).lpNorm<Eigen::Infinity>() > 0.0) {
      u.set_left(j, pieces[q - 1].second);
    }
  }
  return u;
}

inline PiecewiseFn constant_control(const Mesh& mesh, const Vec& v) {
  return PiecewiseFn::constant(mesh, 0, mesh.steps(), v, Smoothness::PC0);
}

inline PiecewiseFn reference_control(const ControlledProblem& prob, const Mesh& mesh) {
  if (prob.reference.empty()) return constant_control(mesh, Vec::Zero(prob.d));
  return control_from_table(mesh, prob.d, prob.reference);
}

/// Checks that a control lives on the problem mesh and takes values in U.
inline void check_control(const ControlledProblem& prob, const Mesh& mesh, const PiecewiseFn& u) {
  if (!u.mesh().same_grid(mesh)) throw AlignmentError("control mesh does not match the problem mesh");
  if (u.first() > 0 || u.last() < mesh.steps()) throw DomainError("control does not cover [0,T]");
  if (u.dim() != prob.d) throw ConfigError("control dimension mismatch");
  for (Index j = 0; j <= mesh.steps(); ++j) {
    for (Side s : {Side::Right, Side::Left}) {
      Vec v = u.value(j, s);
      if (!v.allFinite()) throw NumericError("non-finite control value at t=" + format_number(mesh.time(j)));
      if (!prob.controls.contains(v, 1e-9)) {
        throw DomainError("control value at t=" + format_number(mesh.time(j)) + " is not in U");
      }
    }
  }
}

/// Terminal values g^j(x) for all j.
inline Vec terminal_values(const ControlledProblem& prob, const Vec& x) {
  Vec g(static_cast<Index>(prob.terminal.size()));
  for (std::size_t j = 0; j < prob.terminal.size(); ++j) g(static_cast<Index>(j)) = prob.terminal[j].value(x);
  return g;
}

/// Terminal gradients Dg^j(x) stacked as rows.
inline Mat terminal_gradients(const ControlledProblem& prob, const Vec& x) {
  Mat G(static_cast<Index>(prob.terminal.size()), prob.n);
  for (std::size_t j = 0; j < prob.terminal.size(); ++j) {
    Vec gr = prob.terminal[j].gradient(x);
    if (gr.size() != prob.n) throw ConfigError("terminal gradient " + std::to_string(j) + " has wrong dimension");
    G.row(static_cast<Index>(j)) = gr.transpose();
  }
  return G;
}

}  // namespace delaypmp
