#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "delaypmp/fde.hpp"
#include "delaypmp/kernel.hpp"
#include "delaypmp/timegrid.hpp"

namespace delaypmp {

/// k(alpha, s) = eta(alpha, s - alpha) with the eta^1 extension, at nodes.
inline Mat kernel_k(const DelayKernel& K, Index alpha, Index s, Side side = Side::Right) {
  return eta_eval(K, alpha, K.mesh().time(s - alpha), side);
}

inline Mat kernel_k(const DelayKernel& K, double alpha, double s) {
  const Mesh& m = K.mesh();
  return kernel_k(K, m.index_of(alpha, "alpha"), m.index_of(s, "s"));
}

/// One-sided limit in the lag d = alpha - s (in steps) used by the
/// normalized kernel: Above is d + 0, Below is d - 0, Value is d itself.
enum class Limit { Above, Below, Value };

inline bool atom_excluded(Index d, Index m, Limit lim) {
  switch (lim) {
    case Limit::Above:
      return d >= m;
    case Limit::Below:
      return d > m;
    case Limit::Value:
      return m > 0 ? d >= m : d > 0;
  }
  return false;
}

/// kappa(alpha, s) = eta^1(alpha, s - alpha) - eta(alpha, 0): the kernel
/// normalized to vanish at theta = 0. This is the kernel of the resolvent,
/// adjoint and constancy identities.
inline Mat normalized_kernel(const DelayKernel& K, Index alpha, Side alpha_side, Index d, Limit lim) {
  Index n = K.dim();
  Mat out = Mat::Zero(n, n);
  if (d < 0) return out;
  for (Index k = 0; k < K.num_atoms(); ++k) {
    if (atom_excluded(d, K.atom_lag(k), lim)) out -= K.coeff(k, alpha, alpha_side);
  }
  if (K.has_density()) out -= K.density_integral(alpha, alpha_side, std::min(d, K.mesh().delay_steps()));
  return out;
}

namespace detail {

/// One row t_i of the resolvent equation
///
///   R(t, s) = kappa(t, s) - int_s^t R(t, alpha) kappa(alpha, s) dalpha,
///
/// solved for s = i-1 down to 0 by the product trapezoid rule. Q holds the
/// integral term, Rp and Rm the one-sided values R(t, s+) and R(t, s-).
/// Block s of each matrix is columns [n s, n s + n).
struct ResolventRow {
  Mat Q;
  Mat Rp;
  Mat Rm;
};

inline void solve_resolvent_row(const DelayKernel& K, Index i, Side side, ResolventRow& row) {
  Index n = K.dim();
  double h = K.mesh().step();
  Index R = K.mesh().delay_steps();
  Index na = K.num_atoms();
  row.Q.setZero(n, n * (i + 1));
  row.Rp.setZero(n, n * (i + 1));
  row.Rm.setZero(n, n * (i + 1));
  auto blk = [n](Mat& m, Index s) { return m.block(0, n * s, n, n); };
  blk(row.Rm, i) = normalized_kernel(K, i, side, 0, Limit::Above);
  std::vector<Mat> suf(static_cast<std::size_t>(na), Mat::Zero(n, n * (i + 1)));
  Mat I = Mat::Identity(n, n);
  Mat Qe(n, n), A0(n, n), kb(n, n);
  for (Index s = i - 1; s >= 0; --s) {
    Qe.setZero();
    A0.setZero();
    for (Index k = 0; k < na; ++k) {
      Index m = K.atom_lag(k);
      if (m > 0) {
        if (s + m <= i - 1) Qe -= suf[k].block(0, n * (s + m), n, n);
      } else {
        Qe -= suf[k].block(0, n * (s + 1), n, n) + 0.5 * h * blk(row.Rm, s + 1) * K.coeff(k, s + 1, Side::Left);
        A0 += K.coeff(k, s, Side::Right);
      }
    }
    if (K.has_density()) {
      for (Index c = s; c < i; ++c) {
        Qe -= 0.5 * h *
              (blk(row.Rp, c) * K.density_integral(c, Side::Right, std::min(c - s, R)) +
               blk(row.Rm, c + 1) * K.density_integral(c + 1, Side::Left, std::min(c + 1 - s, R)));
      }
    }
    kb = normalized_kernel(K, i, side, i - s, Limit::Below);
    Mat q;
    if (A0.isZero(0.0)) {
      q = Qe;
    } else {
      Mat D = I - 0.5 * h * A0;
      Eigen::PartialPivLU<Mat> lu(D);
      double growth = norm(Mat(lu.inverse()));
      if (!std::isfinite(growth) || growth > 1e8) {
        throw NumericError("ill-conditioned diagonal factor in the resolvent equation at node " + std::to_string(s));
      }
      q = (Qe - 0.5 * h * kb * A0) * lu.inverse();
    }
    blk(row.Q, s) = q;
    blk(row.Rp, s) = kb - q;
    blk(row.Rm, s) = normalized_kernel(K, i, side, i - s, Limit::Above) - q;
    for (Index k = 0; k < na; ++k) {
      Mat e = 0.5 * h * (blk(row.Rp, s) * K.coeff(k, s, Side::Right) + blk(row.Rm, s + 1) * K.coeff(k, s + 1, Side::Left));
      suf[k].block(0, n * s, n, n) = suf[k].block(0, n * (s + 1), n, n) + e;
    }
  }
}

}  // namespace detail

/// Resolvent kernel on the node pairs s <= t, rows computed with right
/// limits in t.
class ResolventKernel {
 public:
  ResolventKernel() = default;
  ResolventKernel(Mesh mesh, Index dim) : mesh_(std::move(mesh)), n_(dim) {}

  const Mesh& mesh() const { return mesh_; }
  Index dim() const { return n_; }

  /// R(t_i, s) at node s: the value of the normalized kernel minus the integral.
  Mat value(Index i, Index s) const { return kappa_value(i, s) - rows_.at(i).Q.block(0, n_ * s, n_, n_); }
  Mat plus(Index i, Index s) const { return rows_.at(i).Rp.block(0, n_ * s, n_, n_); }
  Mat minus(Index i, Index s) const { return rows_.at(i).Rm.block(0, n_ * s, n_, n_); }
  Mat integral(Index i, Index s) const { return rows_.at(i).Q.block(0, n_ * s, n_, n_); }

  void set_row(Index i, detail::ResolventRow row, const DelayKernel& K) {
    rows_[i] = std::move(row);
    Mat kv(n_, n_ * (i + 1));
    for (Index s = 0; s <= i; ++s) kv.block(0, n_ * s, n_, n_) = normalized_kernel(K, i, Side::Right, i - s, Limit::Value);
    kappa_[i] = std::move(kv);
  }

 private:
  Mat kappa_value(Index i, Index s) const { return kappa_.at(i).block(0, n_ * s, n_, n_); }

  Mesh mesh_;
  Index n_ = 1;
  std::map<Index, detail::ResolventRow> rows_;
  std::map<Index, Mat> kappa_;
};

/// Solves the resolvent equation on every row of the mesh.
inline ResolventKernel solve_resolvent(const DelayKernel& K) {
  ResolventKernel out(K.mesh(), K.dim());
  for (Index i = 0; i <= K.mesh().steps(); ++i) {
    detail::ResolventRow row;
    detail::solve_resolvent_row(K, i, Side::Right, row);
    out.set_row(i, std::move(row), K);
  }
  return out;
}

/// X(t, s) on requested rows (fixed t) and columns (fixed s).
///
/// X(., s) is the solution of the homogeneous linear equation that is
/// zero before s and equals I at s. For s >= t the stored value is I.
class FundamentalMatrix {
 public:
  enum class Route { Volterra, Direct };

  struct Request {
    std::vector<Index> rows;
    std::vector<Index> cols;
    bool dense = false;
  };

  FundamentalMatrix() = default;
  FundamentalMatrix(Mesh mesh, Index dim, Route route) : mesh_(std::move(mesh)), n_(dim), route_(route) {}

  const Mesh& mesh() const { return mesh_; }
  Index dim() const { return n_; }
  Route route() const { return route_; }

  bool has(Index t, Index s) const { return s >= t || rows_.count(t) || cols_.count(s); }

  Mat operator()(Index t, Index s) const {
    if (t < 0 || s < 0 || t > mesh_.steps() || s > mesh_.steps()) throw DomainError("X queried outside [0,T]^2");
    if (s >= t) return Mat::Identity(n_, n_);
    auto r = rows_.find(t);
    if (r != rows_.end()) return r->second.block(0, n_ * s, n_, n_);
    auto c = cols_.find(s);
    if (c != cols_.end()) return c->second.block(0, n_ * (t - s), n_, n_);
    throw DomainError("X(t,s) not stored for t=" + format_number(mesh_.time(t)) + ", s=" + format_number(mesh_.time(s)));
  }

  Mat at(double t, double s) const { return (*this)(mesh_.index_of(t, "t"), mesh_.index_of(s, "s")); }

  /// Stored row t as blocks X(t, 0) .. X(t, t), or null.
  const Mat* row_storage(Index t) const {
    auto r = rows_.find(t);
    return r == rows_.end() ? nullptr : &r->second;
  }

  /// X(T, s).
  Mat terminal(Index s) const { return (*this)(mesh_.steps(), s); }

  std::vector<Index> stored_rows() const {
    std::vector<Index> r;
    for (const auto& [t, m] : rows_) r.push_back(t);
    return r;
  }
  std::vector<Index> stored_cols() const {
    std::vector<Index> c;
    for (const auto& [s, m] : cols_) c.push_back(s);
    return c;
  }
  bool is_dense() const { return static_cast<Index>(rows_.size()) == mesh_.steps() + 1; }

  /// Largest entry magnitude over stored values.
  double max_entry() const {
    double v = 1.0;
    for (const auto& [t, m] : rows_) v = std::max(v, m.cwiseAbs().maxCoeff());
    for (const auto& [s, m] : cols_) v = std::max(v, m.cwiseAbs().maxCoeff());
    return v;
  }

  // Storage hooks used by the constructors below.
  void reserve_row(Index t) { rows_[t] = Mat::Identity(n_, n_).replicate(1, t + 1); }
  void reserve_col(Index s) { cols_[s] = Mat::Identity(n_, n_).replicate(1, mesh_.steps() - s + 1); }
  bool wants_row(Index t) const { return rows_.count(t) != 0; }
  bool wants_col(Index s) const { return cols_.count(s) != 0; }
  void store(Index t, Index s, const Mat& x) {
    auto r = rows_.find(t);
    if (r != rows_.end()) r->second.block(0, n_ * s, n_, n_) = x;
    auto c = cols_.find(s);
    if (c != cols_.end()) c->second.block(0, n_ * (t - s), n_, n_) = x;
  }

 private:
  Mesh mesh_;
  Index n_ = 1;
  Route route_ = Route::Direct;
  std::map<Index, Mat> rows_;
  std::map<Index, Mat> cols_;
};

namespace detail {

inline FundamentalMatrix prepare(const DelayKernel& K, FundamentalMatrix::Route route,
                                 const FundamentalMatrix::Request& req) {
  FundamentalMatrix X(K.mesh(), K.dim(), route);
  Index M = K.mesh().steps();
  if (req.dense) {
    for (Index t = 0; t <= M; ++t) X.reserve_row(t);
  } else {
    for (Index t : req.rows) {
      if (t < 0 || t > M) throw DomainError("requested X row outside [0,T]");
      X.reserve_row(t);
    }
  }
  for (Index s : req.cols) {
    if (s < 0 || s > M) throw DomainError("requested X column outside [0,T]");
    X.reserve_col(s);
  }
  return X;
}

/// Volterra route: rows of the resolvent, then X(t,s) = I - int_s^t R(alpha, s) dalpha.
inline void fill_volterra(const DelayKernel& K, FundamentalMatrix& X) {
  Index n = K.dim();
  Index M = K.mesh().steps();
  double h = K.mesh().step();
  Mat prev = Mat::Identity(n, n);  // row i-1: X(i-1, s) for s <= i-1
  ResolventRow rowR, rowL, prevR;
  for (Index i = 0; i <= M; ++i) {
    solve_resolvent_row(K, i, Side::Right, rowR);
    const ResolventRow* left = &rowR;
    if (K.is_breakpoint(i)) {
      solve_resolvent_row(K, i, Side::Left, rowL);
      left = &rowL;
    }
    if (i > 0) {
      Mat cur(n, n * (i + 1));
      for (Index s = 0; s < i; ++s) {
        Mat ra = normalized_kernel(K, i - 1, Side::Right, i - 1 - s, Limit::Above) - prevR.Q.block(0, n * s, n, n);
        Mat rb = normalized_kernel(K, i, Side::Left, i - s, Limit::Below) - left->Q.block(0, n * s, n, n);
        cur.block(0, n * s, n, n) = prev.block(0, n * s, n, n) - 0.5 * h * (ra + rb);
        X.store(i, s, cur.block(0, n * s, n, n));
      }
      cur.block(0, n * i, n, n).setIdentity();
      prev = std::move(cur);
    }
    prevR = rowR;
  }
}

/// Direct route: X(., s) = 1(. >= s) I + W with W' = L W_t - kappa(t, s), W = 0 up to s.
inline void fill_direct(const DelayKernel& K, FundamentalMatrix& X, const std::vector<Index>& columns) {
  Index n = K.dim();
  Index M = K.mesh().steps();
  HistorySegment none;
  for (Index s : columns) {
    std::vector<Index> jumps;
    for (Index k = 0; k < K.num_atoms(); ++k) {
      if (s + K.atom_lag(k) <= M) jumps.push_back(s + K.atom_lag(k));
    }
    if (K.has_density()) {
      for (Index q = 1; q <= K.mesh().delay_steps() && s + q <= M; ++q) jumps.push_back(s + q);
    }
    std::sort(jumps.begin(), jumps.end());
    jumps.erase(std::unique(jumps.begin(), jumps.end()), jumps.end());
    Mat block(n, n * (M - s + 1));
    for (Index c = 0; c < n; ++c) {
      auto forcing = [&](Vec& v, Index j, bool half, Side side) {
        if (half) {
          v -= 0.5 * (normalized_kernel(K, j, Side::Right, j - s, Limit::Above).col(c) +
                      normalized_kernel(K, j + 1, Side::Left, j + 1 - s, Limit::Below).col(c));
        } else {
          v -= normalized_kernel(K, j, side, j - s, side == Side::Right ? Limit::Above : Limit::Below).col(c);
        }
      };
      Trajectory w = solve_linear_core(K, s, none, forcing, jumps, true);
      for (Index t = s; t <= M; ++t) block.col(n * (t - s) + c) = w.x.right(t);
    }
    for (Index t = s; t <= M; ++t) {
      Mat x = block.block(0, n * (t - s), n, n) + Mat::Identity(n, n);
      if (t > s) X.store(t, s, x);
    }
  }
}

}  // namespace detail

/// Builds X by the chosen route on the requested rows and columns. With no
/// request the terminal row X(T, .) is stored.
inline FundamentalMatrix fundamental(const DelayKernel& K, FundamentalMatrix::Route route,
                                     FundamentalMatrix::Request req = {}) {
  if (!req.dense && req.rows.empty() && req.cols.empty()) req.rows.push_back(K.mesh().steps());
  FundamentalMatrix X = detail::prepare(K, route, req);
  Index M = K.mesh().steps();
  if (route == FundamentalMatrix::Route::Volterra) {
    detail::fill_volterra(K, X);
  } else {
    std::vector<Index> cols;
    bool any_rows = req.dense || !req.rows.empty();
    if (any_rows) {
      for (Index s = 0; s < M; ++s) cols.push_back(s);
    } else {
      cols = req.cols;
    }
    detail::fill_direct(K, X, cols);
  }
  return X;
}

inline FundamentalMatrix fundamental_dense(const DelayKernel& K, FundamentalMatrix::Route route) {
  FundamentalMatrix::Request req;
  req.dense = true;
  return fundamental(K, route, req);
}

/// Largest node-pair distance between two fundamental matrices over pairs
/// stored in both.
inline double max_distance(const FundamentalMatrix& A, const FundamentalMatrix& B) {
  Index M = A.mesh().steps();
  double d = 0.0;
  for (Index t = 0; t <= M; ++t) {
    for (Index s = 0; s <= M; ++s) {
      if (A.has(t, s) && B.has(t, s)) d = std::max(d, (A(t, s) - B(t, s)).cwiseAbs().maxCoeff());
    }
  }
  return d;
}

namespace detail {

inline void require_rows(const FundamentalMatrix& X, Index from, Index to) {
  for (Index t = from; t <= to; ++t) {
    if (!X.has(t, 0) && t > 0) throw DomainError("fundamental matrix lacks row t=" + format_number(X.mesh().time(t)));
  }
}

}  // namespace detail

/// Z(t, sigma, phi) = int_sigma^t X(t, xi) w(xi) dxi with
/// w(xi) = int_{-r}^{sigma - xi} d_2 eta(xi, theta) phi(xi - sigma + theta).
///
/// An atom at lag r_k contributes A_k(xi) phi(xi - sigma - r_k) for
/// xi < sigma + r_k; an atom at lag 0 never contributes.
inline PiecewiseFn var_const_Z(const FundamentalMatrix& X, const DelayKernel& K, Index sigma, const HistorySegment& phi) {
  const Mesh& mesh = K.mesh();
  Index M = mesh.steps();
  Index R = mesh.delay_steps();
  Index n = K.dim();
  double h = mesh.step();
  detail::require_rows(X, sigma + 1, M);
  // w at the right end of cell c (node c, right limit) and the left end of cell c (node c+1, left limit).
  auto w = [&](Index node, Side side, Index cell) {
    Vec out = Vec::Zero(n);
    for (Index k = 0; k < K.num_atoms(); ++k) {
      Index m = K.atom_lag(k);
      if (cell < sigma + m) out += K.coeff(k, node, side) * phi.lag(sigma + m - node);
    }
    if (K.has_density()) {
      Index lo = node - sigma;  // density covers lags q in [lo, R]
      for (Index q = std::max<Index>(lo, 0); q <= R; ++q) {
        double wt = (q == lo || q == R) ? 0.5 * h : h;
        if (lo == R) wt = 0.0;
        out += wt * K.density(node, side, q) * phi.lag(q - lo);
      }
    }
    return out;
  };
  std::vector<Vec> wp(static_cast<std::size_t>(M + 1)), wm(static_cast<std::size_t>(M + 1));
  for (Index c = sigma; c < M; ++c) {
    wp[c] = w(c, Side::Right, c);
    wm[c] = w(c + 1, Side::Left, c);
  }
  PiecewiseFn Z(mesh, sigma, M, n, Smoothness::PC1);
  for (Index t = sigma + 1; t <= M; ++t) {
    Vec acc = Vec::Zero(n);
    if (const Mat* row = X.row_storage(t)) {
      for (Index c = sigma; c < t; ++c) acc += row->middleCols(n * c, n) * wp[c] + row->middleCols(n * (c + 1), n) * wm[c];
    } else {
      for (Index c = sigma; c < t; ++c) acc += X(t, c) * wp[c] + X(t, c + 1) * wm[c];
    }
    Z.set_right(t, Vec(0.5 * h * acc));
  }
  return Z;
}

/// U(t) = X(t, sigma) phi(0) + Z(t) for t >= sigma and phi(t - sigma) before.
inline PiecewiseFn var_const_U(const FundamentalMatrix& X, const DelayKernel& K, Index sigma, const HistorySegment& phi) {
  const Mesh& mesh = K.mesh();
  Index M = mesh.steps();
  Index R = mesh.delay_steps();
  PiecewiseFn Z = var_const_Z(X, K, sigma, phi);
  PiecewiseFn U(mesh, sigma - R, M, K.dim(), Smoothness::PC1);
  for (Index j = sigma - R; j <= sigma; ++j) U.set_right(j, phi.lag(sigma - j));
  for (Index t = sigma + 1; t <= M; ++t) U.set_right(t, X(t, sigma) * phi.lag(0) + Vec(Z.right(t)));
  return U;
}

/// V(t) = U(t) + int_sigma^t X(t, alpha) g(alpha) dalpha.
inline PiecewiseFn var_const_V(const FundamentalMatrix& X, const DelayKernel& K, Index sigma, const HistorySegment& phi,
                               const PiecewiseFn& forcing) {
  PiecewiseFn V = var_const_U(X, K, sigma, phi);
  if (forcing.dim() == 0) return V;
  double h = K.mesh().step();
  Index n = K.dim();
  Index M = K.mesh().steps();
  std::vector<Vec> gp(static_cast<std::size_t>(M + 1)), gm(static_cast<std::size_t>(M + 1));
  for (Index c = sigma; c < M; ++c) {
    gp[c] = forcing.right(c);
    gm[c] = forcing.value(c + 1, Side::Left);
  }
  for (Index t = sigma + 1; t <= M; ++t) {
    Vec acc = Vec::Zero(n);
    if (const Mat* row = X.row_storage(t)) {
      for (Index c = sigma; c < t; ++c) acc += row->middleCols(n * c, n) * gp[c] + row->middleCols(n * (c + 1), n) * gm[c];
    } else {
      for (Index c = sigma; c < t; ++c) acc += X(t, c) * gp[c] + X(t, c + 1) * gm[c];
    }
    V.set_right(t, Vec(V.right(t)) + 0.5 * h * acc);
  }
  return V;
}

/// max over stored rows t and s <= t of
/// || X(t,s) - I + int_s^t X(t, alpha) kappa(alpha, s) dalpha ||.
inline double adjoint_identity_residual(const FundamentalMatrix& X, const DelayKernel& K) {
  const Mesh& mesh = K.mesh();
  Index M = mesh.steps();
  Index R = mesh.delay_steps();
  Index n = K.dim();
  double h = mesh.step();
  Mat I = Mat::Identity(n, n);
  double worst = 0.0;
  std::vector<Index> rows = X.stored_rows();
  if (rows.empty()) throw DomainError("adjoint residual needs stored rows of X");
  for (Index t : rows) {
    // f_k(c) = h/2 [X(t,c) A_k(c+) + X(t,c+1) A_k(c+1 -)]; suffix sums over c.
    std::vector<Mat> suf(static_cast<std::size_t>(K.num_atoms()), Mat::Zero(n, n * (t + 1)));
    for (Index k = 0; k < K.num_atoms(); ++k) {
      for (Index c = t - 1; c >= 0; --c) {
        Mat f = 0.5 * h * (X(t, c) * K.coeff(k, c, Side::Right) + X(t, c + 1) * K.coeff(k, c + 1, Side::Left));
        suf[k].block(0, n * c, n, n) = suf[k].block(0, n * (c + 1), n, n) + f;
      }
    }
    for (Index s = 0; s <= t; ++s) {
      Mat integral = Mat::Zero(n, n);
      for (Index k = 0; k < K.num_atoms(); ++k) {
        Index c0 = s + K.atom_lag(k);
        if (c0 <= t - 1) integral -= suf[k].block(0, n * c0, n, n);
      }
      if (K.has_density()) {
        for (Index c = s; c < t; ++c) {
          integral -= 0.5 * h *
                      (X(t, c) * K.density_integral(c, Side::Right, std::min(c - s, R)) +
                       X(t, c + 1) * K.density_integral(c + 1, Side::Left, std::min(c + 1 - s, R)));
        }
      }
      worst = std::max(worst, norm(Mat(X(t, s) - I + integral)));
    }
  }
  return worst;
}

}  // namespace delaypmp
