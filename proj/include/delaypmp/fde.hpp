#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "delaypmp/kernel.hpp"
#include "delaypmp/problem.hpp"
#include "delaypmp/timegrid.hpp"

namespace delaypmp {

/// State on [sigma - r, T] together with the control that produced it.
struct Trajectory {
  PiecewiseFn x;
  PiecewiseFn u;
  Index start = 0;

  const Mesh& mesh() const { return x.mesh(); }
  Vec terminal() const { return x.right(x.last()); }
  Vec at(Index j) const { return x.right(j); }
};

namespace detail {

/// Node values and one-sided derivatives produced by the midpoint march.
struct MarchState {
  double h = 1.0;
  Index start = 0;
  Index end = 0;
  Mat x;
  Mat dR;
  std::map<Index, Vec> dL;
  std::function<Vec(Index)> hist_node;
  std::function<Vec(Index)> hist_mid;
  std::function<Vec(double)> hist_at;

  Vec node(Index j) const { return j >= start ? Vec(x.col(j - start)) : hist_node(j); }

  Vec left_derivative(Index j) const {
    auto it = dL.find(j);
    return it != dL.end() ? it->second : Vec(dR.col(j - start));
  }

  /// Value at the middle of cell [c, c+1].
  Vec mid(Index c) const {
    if (c < start) return hist_mid(c);
    return hermite_mid(x.col(c - start), x.col(c + 1 - start), dR.col(c - start), left_derivative(c + 1), h);
  }

  /// Value at time tau among already computed nodes (tau <= t_limit).
  Vec at_time(double tau) const {
    double q = tau / h;
    double qr = std::round(q);
    if (std::abs(q - qr) <= 1e-12 * std::max(1.0, std::abs(qr))) return node(static_cast<Index>(qr));
    auto c = static_cast<Index>(std::floor(q));
    if (c < start) {
      if (hist_at) return hist_at(tau);
      double s = q - static_cast<double>(c);
      return (1.0 - s) * node(c) + s * node(c + 1);
    }
    double s = q - static_cast<double>(c);
    return hermite(x.col(c - start), x.col(c + 1 - start), dR.col(c - start), left_derivative(c + 1), h, s);
  }
};

struct NodeSeg {
  const MarchState* st;
  Index j;
  Vec lag(Index m) const { return st->node(j - m); }
};

struct MidSeg {
  const MarchState* st;
  Index j;
  const Vec* head;
  Vec lag(Index m) const { return m == 0 ? *head : st->mid(j - m); }
};

/// SegmentView adapter for user vector fields.
template <class Seg>
class MarchView final : public SegmentView {
 public:
  MarchView(const Seg& seg, double time, Index delay_steps, bool half)
      : seg_(seg), t_(time), R_(delay_steps), half_(half) {}

  Vec lag(Index m) const override { return seg_.lag(m); }

  Vec at(double theta) const override {
    double h = seg_.st->h;
    double q = -theta / h;
    double qr = std::round(q);
    if (q < -1e-9 || q > static_cast<double>(R_) + 1e-9) {
      throw DomainError("segment queried at theta=" + format_number(theta) + " outside [-r,0]");
    }
    if (std::abs(q - qr) <= 1e-12 * std::max(1.0, qr)) return seg_.lag(static_cast<Index>(qr));
    double tau = t_ + theta;
    if (half_ && q < 0.5) {
      // Between the last node and the stage head.
      Index j = seg_.j;
      double s = (tau - static_cast<double>(j) * h) / (0.5 * h);
      return (1.0 - s) * seg_.st->node(j) + s * seg_.lag(0);
    }
    return seg_.st->at_time(tau);
  }

  Index delay_steps() const override { return R_; }
  double step() const override { return seg_.st->h; }

 private:
  const Seg& seg_;
  double t_;
  Index R_;
  bool half_;
};

/// Explicit midpoint march from node start to node end.
///
/// rhs(j, half, side, seg) evaluates the vector field at node j (or at
/// the midpoint of cell j when half is set). Nodes in jumps get a separate
/// left-derivative evaluation so that Hermite midpoints stay one-sided.
template <class Rhs>
void march(MarchState& st, const Rhs& rhs, const std::vector<Index>& jumps) {
  Index count = st.end - st.start + 1;
  Index n = st.x.rows();
  st.dR.resize(n, count);
  double h = st.h;
  auto is_jump = [&](Index j) { return std::binary_search(jumps.begin(), jumps.end(), j); };
  auto finite = [&](const Vec& v, Index j) {
    if (!v.allFinite()) throw NumericError("non-finite vector field value at node " + std::to_string(j));
  };
  for (Index j = st.start; j <= st.end; ++j) {
    Vec k1 = rhs(j, false, Side::Right, NodeSeg{&st, j});
    finite(k1, j);
    st.dR.col(j - st.start) = k1;
    if (j > st.start && is_jump(j)) {
      Vec kl = rhs(j, false, Side::Left, NodeSeg{&st, j});
      finite(kl, j);
      st.dL[j] = kl;
    }
    if (j == st.end) break;
    Vec head = st.x.col(j - st.start) + 0.5 * h * k1;
    Vec k2 = rhs(j, true, Side::Right, MidSeg{&st, j, &head});
    finite(k2, j);
    st.x.col(j + 1 - st.start) = st.x.col(j - st.start) + h * k2;
  }
}

/// Packs a march result plus history into a continuous PiecewiseFn.
inline PiecewiseFn assemble(const Mesh& mesh, const MarchState& st, const std::function<Vec(Index)>& hist_deriv) {
  Index R = mesh.delay_steps();
  Index n = st.x.rows();
  Index first = st.start - R;
  PiecewiseFn x(mesh, first, st.end, n, Smoothness::PC1);
  Mat dright(n, st.end - first + 1);
  std::map<Index, Vec> dleft;
  for (Index j = first; j < st.start; ++j) {
    x.set_right(j, st.hist_node(j));
    dright.col(j - first) = hist_deriv(j);
  }
  for (Index j = st.start; j <= st.end; ++j) {
    x.set_right(j, st.x.col(j - st.start));
    dright.col(j - first) = st.dR.col(j - st.start);
  }
  for (const auto& [j, v] : st.dL) dleft[j] = v;
  if (R > 0 || first < st.start) dleft[st.start] = hist_deriv(st.start);
  x.set_derivatives(std::move(dright), std::move(dleft));
  return x;
}

inline std::vector<Index> merged(std::vector<Index> a, const std::vector<Index>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

inline Vec numeric_derivative(const std::function<Vec(double)>& fn, double t, double h) {
  double e = 1e-3 * h;
  return (fn(t + e) - fn(t - e)) / (2 * e);
}

}  // namespace detail

/// Integrates x' = f(t, x_t, u(t)), x_0 = phi on [0, T].
inline Trajectory solve(const ControlledProblem& prob, const PiecewiseFn& u) {
  Mesh mesh = prob.mesh();
  check_control(prob, mesh, u);
  if (!prob.f) throw ConfigError("problem '" + prob.name + "' has no vector field");
  double h = mesh.step();
  Index R = mesh.delay_steps();
  auto phi = prob.phi.value;
  auto dphi = prob.phi.derivative ? prob.phi.derivative
                                  : std::function<Vec(double)>([phi, h](double t) { return detail::numeric_derivative(phi, t, h); });
  detail::MarchState st;
  st.h = h;
  st.start = 0;
  st.end = mesh.steps();
  st.x = Mat::Zero(prob.n, st.end + 1);
  st.x.col(0) = phi(0.0);
  st.hist_node = [&](Index j) { return phi(mesh.time(j)); };
  st.hist_mid = [&](Index c) { return phi((static_cast<double>(c) + 0.5) * h); };
  st.hist_at = [&](double tau) { return phi(tau); };
  if (st.x.col(0).size() != prob.n) throw ConfigError("history dimension mismatch");

  auto rhs = [&](Index j, bool half, Side side, const auto& seg) -> Vec {
    double t = half ? (static_cast<double>(j) + 0.5) * h : eval_time(mesh.time(j), side, h);
    Vec uv = half ? Vec(0.5 * (Vec(u.right(j)) + u.value(j + 1, Side::Left))) : u.value(j, side);
    detail::MarchView view(seg, t, R, half);
    return prob.f(t, view, uv);
  };
  std::vector<Index> jumps = detail::merged(u.discontinuities(), mesh.breakpoints());
  detail::march(st, rhs, jumps);
  Trajectory out;
  out.x = detail::assemble(mesh, st, [&](Index j) { return dphi(mesh.time(j)); });
  out.u = u;
  out.start = 0;
  return out;
}

inline Trajectory solve(const ControlledProblem& prob) { return solve(prob, reference_control(prob, prob.mesh())); }

namespace detail {

/// Core of solve_linear: forcing(j, half, side) is added to L(t) x_t.
template <class Forcing>
Trajectory solve_linear_core(const DelayKernel& K, Index sigma, const HistorySegment& phi, const Forcing& forcing,
                             const std::vector<Index>& forcing_jumps, bool zero_history = false) {
  const Mesh& mesh = K.mesh();
  double h = mesh.step();
  Index R = mesh.delay_steps();
  Index n = K.dim();
  if (sigma < 0 || sigma > mesh.steps()) throw AlignmentError("initial time index outside [0,T]");
  if (!zero_history && (phi.delay_steps() != R || phi.dim() != n)) throw DomainError("history segment shape mismatch");
  MarchState st;
  st.h = h;
  st.start = sigma;
  st.end = mesh.steps();
  st.x = Mat::Zero(n, st.end - sigma + 1);
  if (zero_history) {
    st.hist_node = [n](Index) { return Vec(Vec::Zero(n)); };
    st.hist_mid = st.hist_node;
  } else {
    st.x.col(0) = phi.lag(0);
    st.hist_node = [&phi, sigma](Index j) { return Vec(phi.lag(sigma - j)); };
    st.hist_mid = [&phi, sigma, h](Index c) { return phi.at((static_cast<double>(c - sigma) + 0.5) * h); };
    st.hist_at = [&phi, sigma, h](double tau) { return phi.at(tau - static_cast<double>(sigma) * h); };
  }
  auto rhs = [&](Index j, bool half, Side side, const auto& seg) -> Vec {
    Vec v = K.apply(j, half, side, seg);
    forcing(v, j, half, side);
    return v;
  };
  march(st, rhs, merged(K.breakpoints(), forcing_jumps));
  Trajectory out;
  std::function<Vec(Index)> hd;
  if (zero_history) {
    hd = [n](Index) { return Vec(Vec::Zero(n)); };
  } else {
    // History slopes: stored derivatives when present, else finite differences.
    hd = [&phi, sigma, h, R](Index j) {
      double theta = static_cast<double>(j - sigma) * h;
      if (R == 0) return Vec(Vec::Zero(phi.dim()));
      double e = std::min(1e-4 * h, 1e-7);
      double lo = std::max(theta - e, -static_cast<double>(R) * h);
      double hi = std::min(theta + e, 0.0);
      return Vec((phi.at(hi) - phi.at(lo)) / (hi - lo));
    };
  }
  out.x = assemble(mesh, st, hd);
  out.start = sigma;
  return out;
}

}  // namespace detail

/// Solves x' = L(t) x_t + g(t) on [sigma, T] with x_sigma = phi.
/// A forcing with zero columns means g = 0.
inline Trajectory solve_linear(const DelayKernel& K, Index sigma, const HistorySegment& phi,
                               const PiecewiseFn& forcing = PiecewiseFn()) {
  bool has_forcing = forcing.dim() > 0 && forcing.right_values().cols() > 0;
  if (has_forcing && (forcing.first() > sigma || forcing.last() < K.mesh().steps())) {
    throw DomainError("forcing does not cover [sigma, T]");
  }
  if (has_forcing && forcing.dim() != K.dim()) throw DomainError("forcing dimension mismatch");
  auto add = [&](Vec& v, Index j, bool half, Side side) {
    if (!has_forcing) return;
    if (half) {
      v += 0.5 * (Vec(forcing.right(j)) + forcing.value(j + 1, Side::Left));
    } else {
      v += forcing.value(j, side);
    }
  };
  return detail::solve_linear_core(K, sigma, phi, add, has_forcing ? forcing.discontinuities() : std::vector<Index>{});
}

inline Trajectory solve_linear(const DelayKernel& K, double sigma, const HistorySegment& phi,
                               const PiecewiseFn& forcing = PiecewiseFn()) {
  return solve_linear(K, K.mesh().index_of(sigma, "initial time"), phi, forcing);
}

struct PicardResult {
  Trajectory trajectory;
  std::vector<double> increments;
  Index iterations = 0;
};

/// Fixed-point iteration x^m(t) = phi(0) + int_0^t f(s, x^{m-1}_s, u(s)) ds
/// with node-based trapezoid quadrature. Counts map applications until
/// the sup distance between successive iterates drops below tol.
inline PicardResult picard_solve(const ControlledProblem& prob, const PiecewiseFn& u, Index m_max, double tol,
                                 const std::optional<PiecewiseFn>& seed = std::nullopt) {
  Mesh mesh = prob.mesh();
  check_control(prob, mesh, u);
  Index M = mesh.steps();
  Index R = mesh.delay_steps();
  double h = mesh.step();
  Vec x0 = prob.phi.value(0.0);
  PiecewiseFn x(mesh, -R, M, prob.n, Smoothness::PC1);
  for (Index j = -R; j <= 0; ++j) x.set_right(j, prob.phi.value(mesh.time(j)));
  if (seed) {
    for (Index j = 1; j <= M; ++j) x.set_right(j, seed->right(j));
  } else {
    for (Index j = 1; j <= M; ++j) x.set_right(j, x0);
  }
  PicardResult res;
  Mat fr(prob.n, M + 1), fl(prob.n, M + 1);
  for (Index m = 1; m <= m_max; ++m) {
    for (Index j = 0; j <= M; ++j) {
      NodeView view(x, j);
      fr.col(j) = prob.f(mesh.time(j), view, u.value(j, Side::Right));
      fl.col(j) = u.has_jump(j) ? prob.f(mesh.time(j), view, u.value(j, Side::Left)) : Vec(fr.col(j));
      if (!fr.col(j).allFinite() || !fl.col(j).allFinite()) throw NumericError("non-finite vector field in Picard iteration");
    }
    PiecewiseFn next = x;
    Vec acc = x0;
    double inc = 0.0;
    for (Index j = 1; j <= M; ++j) {
      acc += 0.5 * h * (fr.col(j - 1) + fl.col(j));
      next.set_right(j, acc);
      inc = std::max(inc, norm(Vec(acc - x.right(j))));
    }
    x = std::move(next);
    res.increments.push_back(inc);
    res.iterations = m;
    if (inc < tol) {
      res.trajectory.x = std::move(x);
      res.trajectory.u = u;
      return res;
    }
  }
  throw ConvergenceError("Picard iteration did not reach tol=" + format_number(tol) + " within " +
                         std::to_string(m_max) + " iterations (last increment " +
                         format_number(res.increments.back()) + ")");
}

}  // namespace delaypmp
