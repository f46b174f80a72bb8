#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "delaypmp/problem.hpp"
#include "delaypmp/timegrid.hpp"

namespace delaypmp {

/// Structured linear delay operator
///
///   L(t) psi = sum_k A_k(t) psi(-r_k) + int_{-r}^0 C(t, theta) psi(theta) dtheta
///
/// with grid-aligned lags r_k = m_k h. Coefficients are sampled at every
/// node; nodes in N_L additionally carry left limits.
class DelayKernel {
 public:
  struct Atom {
    Index lag = 0;
    std::vector<Mat> right;
    std::map<Index, Mat> left;
  };

  DelayKernel() = default;
  DelayKernel(Mesh mesh, Index dim) : mesh_(std::move(mesh)), n_(dim) {}

  static DelayKernel zero(const Mesh& mesh, Index dim) { return DelayKernel(mesh, dim); }

  const Mesh& mesh() const { return mesh_; }
  Index dim() const { return n_; }
  Index num_atoms() const { return static_cast<Index>(atoms_.size()); }
  Index atom_lag(Index k) const { return atoms_[k].lag; }
  bool has_density() const { return !density_.empty(); }
  const std::vector<Index>& breakpoints() const { return breakpoints_; }
  bool is_breakpoint(Index j) const { return std::binary_search(breakpoints_.begin(), breakpoints_.end(), j); }

  /// Adds coeff(j, side) at lag m, summing into an existing atom with the same lag.
  void add_atom(Index lag, const std::function<Mat(Index, Side)>& coeff) {
    if (lag < 0 || lag > mesh_.delay_steps()) throw DomainError("atom lag " + std::to_string(lag) + " outside [0, r/h]");
    Atom* a = find_or_create(lag);
    for (Index j = 0; j <= mesh_.steps(); ++j) a->right[j] += coeff(j, Side::Right);
    for (Index j : breakpoints_) a->left[j] = a->left.count(j) ? Mat(a->left[j] + coeff(j, Side::Left)) : Mat(a->right[j] - coeff(j, Side::Right) + coeff(j, Side::Left));
  }

  void add_constant_atom(Index lag, const Mat& A) {
    add_atom(lag, [&](Index, Side) { return A; });
  }

  /// Installs C(t_j, -m h) for all nodes j and lags m.
  void set_density(const std::function<Mat(Index j, Side side, Index m)>& C) {
    Index R = mesh_.delay_steps();
    Index M = mesh_.steps();
    density_.assign(M + 1, Mat());
    cumulative_.assign(M + 1, Mat());
    density_left_.clear();
    cumulative_left_.clear();
    auto fill = [&](Index j, Side side, Mat& dens, Mat& cum) {
      dens.resize(n_, n_ * (R + 1));
      cum.resize(n_, n_ * (R + 1));
      for (Index m = 0; m <= R; ++m) dens.block(0, n_ * m, n_, n_) = C(j, side, m);
      cum.block(0, 0, n_, n_).setZero();
      for (Index q = 1; q <= R; ++q) {
        cum.block(0, n_ * q, n_, n_) = cum.block(0, n_ * (q - 1), n_, n_) +
                                       0.5 * mesh_.step() * (dens.block(0, n_ * (q - 1), n_, n_) + dens.block(0, n_ * q, n_, n_));
      }
    };
    for (Index j = 0; j <= M; ++j) fill(j, Side::Right, density_[j], cumulative_[j]);
    for (Index j : breakpoints_) fill(j, Side::Left, density_left_[j], cumulative_left_[j]);
  }

  /// Registers nodes of N_L. Must precede add_atom / set_density for left limits to be sampled.
  void add_breakpoints(const std::vector<Index>& nodes) {
    for (Index j : nodes) {
      if (j < 0 || j > mesh_.steps()) throw DomainError("kernel breakpoint outside [0,T]");
      breakpoints_.push_back(j);
    }
    std::sort(breakpoints_.begin(), breakpoints_.end());
    breakpoints_.erase(std::unique(breakpoints_.begin(), breakpoints_.end()), breakpoints_.end());
  }

  const Mat& coeff(Index k, Index j, Side side = Side::Right) const {
    const Atom& a = atoms_[k];
    if (side == Side::Left && !a.left.empty()) {
      auto it = a.left.find(j);
      if (it != a.left.end()) return it->second;
    }
    return a.right[j];
  }

  /// Coefficient at the cell midpoint (j + 1/2) h.
  Mat coeff_mid(Index k, Index j) const { return 0.5 * (coeff(k, j, Side::Right) + coeff(k, j + 1, Side::Left)); }

  /// C(t_j, -m h).
  auto density(Index j, Side side, Index m) const { return density_row(j, side).block(0, n_ * m, n_, n_); }

  Mat density_mid(Index j, Index m) const { return 0.5 * (density(j, Side::Right, m) + density(j + 1, Side::Left, m)); }

  /// int_{-q h}^0 C(t_j, theta) dtheta by the trapezoid rule.
  auto density_integral(Index j, Side side, Index q) const {
    const Mat& cum = (side == Side::Left && cumulative_left_.count(j)) ? cumulative_left_.at(j) : cumulative_[j];
    return cum.block(0, n_ * q, n_, n_);
  }

  /// Applies L at node j (or at the midpoint of cell j when half is set)
  /// to a segment accessor with lag(m) = psi(-m h).
  template <class Seg>
  Vec apply(Index j, bool half, Side side, const Seg& seg) const {
    Vec out = Vec::Zero(n_);
    for (Index k = 0; k < num_atoms(); ++k) {
      if (half) {
        out.noalias() += coeff_mid(k, j) * seg.lag(atoms_[k].lag);
      } else {
        out.noalias() += coeff(k, j, side) * seg.lag(atoms_[k].lag);
      }
    }
    if (has_density()) {
      Index R = mesh_.delay_steps();
      double h = mesh_.step();
      for (Index m = 0; m <= R; ++m) {
        double w = (m == 0 || m == R) ? 0.5 * h : h;
        if (half) {
          out.noalias() += w * density_mid(j, m) * seg.lag(m);
        } else {
          out.noalias() += w * density(j, side, m) * seg.lag(m);
        }
      }
    }
    return out;
  }

 private:
  const Mat& density_row(Index j, Side side) const {
    if (side == Side::Left) {
      auto it = density_left_.find(j);
      if (it != density_left_.end()) return it->second;
    }
    return density_[j];
  }

  Atom* find_or_create(Index lag) {
    for (Atom& a : atoms_) {
      if (a.lag == lag) return &a;
    }
    Atom a;
    a.lag = lag;
    a.right.assign(mesh_.steps() + 1, Mat::Zero(n_, n_));
    atoms_.push_back(std::move(a));
    std::sort(atoms_.begin(), atoms_.end(), [](const Atom& x, const Atom& y) { return x.lag < y.lag; });
    for (Atom& b : atoms_) {
      if (b.lag == lag) return &b;
    }
    return nullptr;
  }

  Mesh mesh_;
  Index n_ = 1;
  std::vector<Atom> atoms_;
  std::vector<Mat> density_;
  std::vector<Mat> cumulative_;
  std::map<Index, Mat> density_left_;
  std::map<Index, Mat> cumulative_left_;
  std::vector<Index> breakpoints_;
};

namespace detail {

struct HistoryLag {
  const HistorySegment* seg;
  auto lag(Index m) const { return seg->lag(m); }
};

}  // namespace detail

/// L(t_j) phi for a sampled segment; right limits of coefficients by default.
inline Vec apply_L(const DelayKernel& K, Index j, const HistorySegment& phi, Side side = Side::Right) {
  if (phi.delay_steps() != K.mesh().delay_steps()) throw DomainError("segment length does not match the kernel delay");
  return K.apply(j, false, side, detail::HistoryLag{&phi});
}

/// eta(t_j, theta): atoms with -r_k < theta plus the density integral over
/// [-r, theta]. Zero for theta <= -r, eta(t_j, 0) for theta >= 0. An atom at
/// lag 0 is counted at theta = 0.
inline Mat eta_eval(const DelayKernel& K, Index j, double theta, Side side = Side::Right) {
  const Mesh& mesh = K.mesh();
  Index R = mesh.delay_steps();
  Index n = K.dim();
  double h = mesh.step();
  Mat out = Mat::Zero(n, n);
  double q = -theta / h;  // theta measured in lags
  constexpr double eps = 1e-9;
  if (theta >= 0.0 || q <= eps) {
    for (Index k = 0; k < K.num_atoms(); ++k) out += K.coeff(k, j, side);
    if (K.has_density()) out += K.density_integral(j, side, R);
    return out;
  }
  if (q >= static_cast<double>(R) - eps) return out;
  for (Index k = 0; k < K.num_atoms(); ++k) {
    if (q < static_cast<double>(K.atom_lag(k)) - eps) out += K.coeff(k, j, side);
  }
  if (K.has_density()) {
    auto lo = static_cast<Index>(std::floor(q + eps));
    double frac = q - static_cast<double>(lo);
    Mat tail = K.density_integral(j, side, lo);
    if (frac > eps && lo < R) {
      // Trapezoid on the partial cell with C interpolated linearly in theta.
      Mat c0 = K.density(j, side, lo), c1 = K.density(j, side, lo + 1);
      Mat cq = (1.0 - frac) * c0 + frac * c1;
      tail += 0.5 * frac * h * (c0 + cq);
    }
    out += K.density_integral(j, side, R) - tail;
  }
  return out;
}

/// Total variation of eta(t_j, .): sum of atom norms plus int ||C||.
inline double bv_norm(const DelayKernel& K, Index j, Side side = Side::Right) {
  double v = 0.0;
  for (Index k = 0; k < K.num_atoms(); ++k) v += norm(K.coeff(k, j, side));
  if (K.has_density()) {
    Index R = K.mesh().delay_steps();
    double h = K.mesh().step();
    for (Index m = 0; m <= R; ++m) v += ((m == 0 || m == R) ? 0.5 * h : h) * norm(Mat(K.density(j, side, m)));
  }
  return v;
}

/// max_t bv_norm, the Gronwall rate of the linear equation.
inline double bv_bound(const DelayKernel& K) {
  double v = 0.0;
  for (Index j = 0; j <= K.mesh().steps(); ++j) {
    v = std::max(v, bv_norm(K, j, Side::Right));
    if (K.is_breakpoint(j)) v = std::max(v, bv_norm(K, j, Side::Left));
  }
  return v;
}

/// SegmentView at node j of a function defined on [-r, T].
class NodeView final : public SegmentView {
 public:
  NodeView(const PiecewiseFn& x, Index j) : x_(&x), j_(j) {}
  Vec lag(Index m) const override { return x_->right(j_ - m); }
  Vec at(double theta) const override { return x_->eval(x_->mesh().time(j_) + theta); }
  Index delay_steps() const override { return x_->mesh().delay_steps(); }
  double step() const override { return x_->mesh().step(); }

 private:
  const PiecewiseFn* x_;
  Index j_;
};

/// Samples D_2 f(t, xbar_t, ubar(t)) along a reference process.
///
/// N_L is the union of the control's discontinuities and the problem's
/// declared breakpoints.
inline DelayKernel linearize(const ControlledProblem& prob, const PiecewiseFn& xbar, const PiecewiseFn& ubar) {
  Mesh mesh = prob.mesh();
  if (!xbar.mesh().same_grid(mesh) || !ubar.mesh().same_grid(mesh)) {
    throw AlignmentError("trajectory/control mesh does not match the problem mesh");
  }
  if (!prob.d2f) throw ConfigError("problem '" + prob.name + "' provides no segment derivative");
  Index M = mesh.steps();
  Index R = mesh.delay_steps();
  std::vector<Index> nl = mesh.breakpoints();
  for (Index j : ubar.discontinuities()) nl.push_back(j);
  DelayKernel K(mesh, prob.n);
  K.add_breakpoints(nl);

  struct Sample {
    std::map<Index, Mat> atoms;
    Mat density;
  };
  auto sample = [&](Index j, Side side) {
    NodeView view(xbar, j);
    LinearPart lp = prob.d2f(eval_time(mesh.time(j), side, mesh.step()), view, ubar.value(j, side));
    Sample s;
    for (const auto& [tau, A] : lp.atoms) {
      Index m = mesh.index_of(tau, "atom delay");
      if (m < 0 || m > R) throw DomainError("atom delay " + format_number(tau) + " outside [0,r]");
      auto it = s.atoms.find(m);
      if (it == s.atoms.end()) {
        s.atoms.emplace(m, A);
      } else {
        it->second += A;
      }
    }
    if (lp.density) {
      s.density.resize(prob.n, prob.n * (R + 1));
      for (Index m = 0; m <= R; ++m) s.density.block(0, prob.n * m, prob.n, prob.n) = lp.density(-mesh.time(m));
    }
    return s;
  };

  std::vector<Sample> right(M + 1);
  std::map<Index, Sample> left;
  std::vector<Index> lags;
  bool dens = false;
  for (Index j = 0; j <= M; ++j) {
    right[j] = sample(j, Side::Right);
    if (K.is_breakpoint(j)) left[j] = sample(j, Side::Left);
  }
  auto collect = [&](const Sample& s) {
    for (const auto& [m, A] : s.atoms) lags.push_back(m);
    dens = dens || s.density.size() > 0;
  };
  for (const auto& s : right) collect(s);
  for (const auto& [j, s] : left) collect(s);
  std::sort(lags.begin(), lags.end());
  lags.erase(std::unique(lags.begin(), lags.end()), lags.end());

  auto pick = [&](Index j, Side side) -> const Sample& {
    if (side == Side::Left) {
      auto it = left.find(j);
      if (it != left.end()) return it->second;
    }
    return right[j];
  };
  for (Index m : lags) {
    K.add_atom(m, [&](Index j, Side side) {
      const Sample& s = pick(j, side);
      auto it = s.atoms.find(m);
      return it == s.atoms.end() ? Mat(Mat::Zero(prob.n, prob.n)) : it->second;
    });
  }
  if (dens) {
    K.set_density([&](Index j, Side side, Index m) {
      const Sample& s = pick(j, side);
      if (s.density.size() == 0) return Mat(Mat::Zero(prob.n, prob.n));
      return Mat(s.density.block(0, prob.n * m, prob.n, prob.n));
    });
  }
  return K;
}

}  // namespace delaypmp
