#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "delaypmp/errors.hpp"

namespace delaypmp {

using Index = std::ptrdiff_t;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Which one-sided value to take at a node.
enum class Side { Left, Right };

enum class Smoothness { C0, PC0, PC1 };

/// Max-abs norm on R^n.
inline double norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

/// Norm induced by the max-abs vector norm (max absolute row sum).
inline double norm(const Mat& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

/// Uniform grid on [0, T] whose step divides the delay.
///
/// Node j sits at time j*h. Negative indices address the history
/// interval [-r, 0]. Breakpoints are stored as sorted node indices.
class Mesh {
 public:
  Mesh() = default;

  static Mesh uniform(double horizon, double delay, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("step h must be positive, got " + format_number(step));
    if (!(horizon > 0.0)) throw ConfigError("horizon T must be positive, got " + format_number(horizon));
    if (delay < 0.0) throw ConfigError("delay r must be non-negative, got " + format_number(delay));
    Mesh m;
    m.h_ = step;
    m.steps_ = snap(horizon, step, "horizon T");
    if (delay > 0.0) {
      double q = delay / step;
      double qr = std::round(q);
      if (std::abs(q - qr) > 1e-9 * std::max(1.0, qr) || qr < 1.0) {
        throw AlignmentError("delay r=" + format_number(delay) + " is not a multiple of step h=" +
                             format_number(step) + " (r/h not integer)");
      }
      m.delay_steps_ = static_cast<Index>(qr);
    }
    return m;
  }

  double step() const { return h_; }
  Index steps() const { return steps_; }
  Index delay_steps() const { return delay_steps_; }
  double horizon() const { return static_cast<double>(steps_) * h_; }
  double delay() const { return static_cast<double>(delay_steps_) * h_; }
  double time(Index j) const { return static_cast<double>(j) * h_; }

  /// Node index of time t; throws AlignmentError when t is off the grid.
  Index index_of(double t, const std::string& what = "time") const { return snap(t, h_, what); }

  bool is_node(double t) const {
    double q = t / h_;
    return std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::abs(q));
  }

  const std::vector<Index>& breakpoints() const { return breakpoints_; }

  bool is_breakpoint(Index j) const { return std::binary_search(breakpoints_.begin(), breakpoints_.end(), j); }

  Mesh with_breakpoints(const std::vector<Index>& extra) const {
    Mesh m = *this;
    for (Index j : extra) {
      if (j < 0 || j > steps_) throw DomainError("breakpoint index " + std::to_string(j) + " outside [0,T]");
      m.breakpoints_.push_back(j);
    }
    std::sort(m.breakpoints_.begin(), m.breakpoints_.end());
    m.breakpoints_.erase(std::unique(m.breakpoints_.begin(), m.breakpoints_.end()), m.breakpoints_.end());
    return m;
  }

  Mesh with_breakpoint_times(const std::vector<double>& times) const {
    std::vector<Index> idx;
    for (double t : times) idx.push_back(index_of(t, "breakpoint"));
    return with_breakpoints(idx);
  }

  bool same_grid(const Mesh& o) const {
    return h_ == o.h_ && steps_ == o.steps_ && delay_steps_ == o.delay_steps_;
  }

 private:
  static Index snap(double t, double h, const std::string& what) {
    double q = t / h;
    double qr = std::round(q);
    if (!std::isfinite(q) || std::abs(q - qr) > 1e-9 * std::max(1.0, std::abs(qr))) {
      throw AlignmentError(what + " " + format_number(t) + " is not a multiple of step h=" + format_number(h));
    }
    return static_cast<Index>(qr);
  }

  double h_ = 1.0;
  Index steps_ = 0;
  Index delay_steps_ = 0;
  std::vector<Index> breakpoints_;
};

/// Cubic Hermite value at the midpoint of a cell of width h.
inline Vec hermite_mid(const Vec& x0, const Vec& x1, const Vec& d0, const Vec& d1, double h) {
  return 0.5 * (x0 + x1) + (h / 8.0) * (d0 - d1);
}

/// Cubic Hermite value at fraction s in [0,1] of a cell of width h.
inline Vec hermite(const Vec& x0, const Vec& x1, const Vec& d0, const Vec& d1, double h, double s) {
  double s2 = s * s, s3 = s2 * s;
  double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  return h00 * x0 + h10 * h * d0 + h01 * x1 + h11 * h * d1;
}

/// Vector-valued function sampled on the nodes first..last of a mesh.
///
/// Right values are stored at every node. Nodes in the discontinuity set
/// also carry a left value. Optional one-sided derivatives enable cubic
/// Hermite evaluation between nodes; without them evaluation is linear.
class PiecewiseFn {
 public:
  PiecewiseFn() = default;

  PiecewiseFn(Mesh mesh, Index first, Index last, Index dim, Smoothness tag = Smoothness::PC0)
      : mesh_(std::move(mesh)), first_(first), last_(last), tag_(tag), right_(Mat::Zero(dim, last - first + 1)) {
    if (last < first) throw DomainError("empty node range");
  }

  static PiecewiseFn constant(const Mesh& mesh, Index first, Index last, const Vec& value,
                              Smoothness tag = Smoothness::PC0) {
    PiecewiseFn f(mesh, first, last, value.size(), tag);
    f.right_.colwise() = value;
    return f;
  }

  static PiecewiseFn from_function(const Mesh& mesh, Index first, Index last, Index dim,
                                   const std::function<Vec(double)>& fn, Smoothness tag = Smoothness::PC0) {
    PiecewiseFn f(mesh, first, last, dim, tag);
    for (Index j = first; j <= last; ++j) f.right_.col(j - first) = fn(mesh.time(j));
    return f;
  }

  const Mesh& mesh() const { return mesh_; }
  Index first() const { return first_; }
  Index last() const { return last_; }
  Index dim() const { return right_.rows(); }
  Smoothness smoothness() const { return tag_; }
  bool contains(Index j) const { return j >= first_ && j <= last_; }

  auto right(Index j) const { return right_.col(check(j) - first_); }

  Vec value(Index j, Side side = Side::Right) const {
    check(j);
    if (side == Side::Left) {
      auto it = left_.find(j);
      if (it != left_.end()) return it->second;
    }
    return right_.col(j - first_);
  }

  /// Sets the value on both sides of node j, dropping any recorded jump.
  void set(Index j, const Vec& v) {
    right_.col(check(j) - first_) = v;
    left_.erase(j);
  }

  void set_right(Index j, const Vec& v) { right_.col(check(j) - first_) = v; }

  /// Records a left value at node j that differs from the right value.
  void set_left(Index j, const Vec& v) {
    check(j);
    if (tag_ != Smoothness::PC0) throw DomainError("jump at node " + std::to_string(j) + " in a continuous function");
    left_[j] = v;
  }

  bool has_jump(Index j) const { return left_.count(j) != 0; }

  std::vector<Index> discontinuities() const {
    std::vector<Index> out;
    for (const auto& [j, v] : left_) out.push_back(j);
    return out;
  }

  /// Installs one-sided derivatives: dright has one column per node,
  /// dleft lists nodes where the left derivative differs.
  void set_derivatives(Mat dright, std::map<Index, Vec> dleft) {
    if (dright.cols() != right_.cols() || dright.rows() != right_.rows()) throw DomainError("derivative shape mismatch");
    dright_ = std::move(dright);
    dleft_ = std::move(dleft);
  }

  bool has_derivatives() const { return dright_.cols() > 0; }

  Vec derivative(Index j, Side side = Side::Right) const {
    check(j);
    if (!has_derivatives()) throw DomainError("function carries no derivative data");
    if (side == Side::Left) {
      auto it = dleft_.find(j);
      if (it != dleft_.end()) return it->second;
    }
    return dright_.col(j - first_);
  }

  /// Value at (j + 1/2) h, inside the cell [j, j+1].
  Vec midpoint(Index j) const {
    if (has_derivatives()) {
      return hermite_mid(right_.col(j - first_), value(j + 1, Side::Left), derivative(j, Side::Right),
                         derivative(j + 1, Side::Left), mesh_.step());
    }
    return 0.5 * (Vec(right_.col(check(j) - first_)) + value(j + 1, Side::Left));
  }

  /// Evaluates at an arbitrary time within the node range.
  Vec eval(double t, Side side = Side::Right) const {
    double h = mesh_.step();
    double q = t / h;
    double qr = std::round(q);
    if (std::abs(q - qr) <= 1e-12 * std::max(1.0, std::abs(qr))) return value(static_cast<Index>(qr), side);
    auto c = static_cast<Index>(std::floor(q));
    if (c < first_ || c + 1 > last_) throw DomainError("evaluation at t=" + format_number(t) + " outside range");
    double s = q - static_cast<double>(c);
    Vec x0 = right_.col(c - first_);
    Vec x1 = value(c + 1, Side::Left);
    if (has_derivatives()) return hermite(x0, x1, derivative(c, Side::Right), derivative(c + 1, Side::Left), h, s);
    return (1.0 - s) * x0 + s * x1;
  }

  const Mat& right_values() const { return right_; }

 private:
  Index check(Index j) const {
    if (j < first_ || j > last_) {
      throw DomainError("node " + std::to_string(j) + " outside [" + std::to_string(first_) + "," +
                        std::to_string(last_) + "]");
    }
    return j;
  }

  Mesh mesh_;
  Index first_ = 0;
  Index last_ = 0;
  Smoothness tag_ = Smoothness::PC0;
  Mat right_;
  std::map<Index, Vec> left_;
  Mat dright_;
  std::map<Index, Vec> dleft_;
};

/// Samples of a continuous function on [-r, 0] at the delayed nodes.
///
/// Column m holds the value at theta = -m h. Between samples the segment
/// is cubic Hermite, using stored one-sided derivatives when present and
/// finite-difference slopes otherwise. Declared kink lags fall back to
/// linear interpolation on their adjacent cells.
class HistorySegment {
 public:
  HistorySegment() = default;

  HistorySegment(Mat samples, double step) : samples_(std::move(samples)), h_(step) {}

  static HistorySegment constant(const Vec& value, Index delay_steps, double step) {
    Mat s(value.size(), delay_steps + 1);
    s.colwise() = value;
    HistorySegment seg(std::move(s), step);
    seg.dright_ = Mat::Zero(value.size(), delay_steps + 1);
    seg.dleft_ = seg.dright_;
    return seg;
  }

  /// Samples fn (and its derivative, if given) at the delayed nodes.
  static HistorySegment from_function(Index dim, Index delay_steps, double step, const std::function<Vec(double)>& fn,
                                      const std::function<Vec(double)>& dfn = {}) {
    Mat s(dim, delay_steps + 1);
    for (Index m = 0; m <= delay_steps; ++m) s.col(m) = fn(-static_cast<double>(m) * step);
    HistorySegment seg(std::move(s), step);
    if (dfn) {
      seg.dright_.resize(dim, delay_steps + 1);
      for (Index m = 0; m <= delay_steps; ++m) seg.dright_.col(m) = dfn(-static_cast<double>(m) * step);
      seg.dleft_ = seg.dright_;
    }
    return seg;
  }

  Index dim() const { return samples_.rows(); }
  Index delay_steps() const { return samples_.cols() - 1; }
  double step() const { return h_; }
  auto lag(Index m) const { return samples_.col(m); }
  const Mat& samples() const { return samples_; }

  void set_derivatives(Mat dright, Mat dleft) {
    dright_ = std::move(dright);
    dleft_ = std::move(dleft);
  }
  void set_kinks(std::vector<Index> lags) {
    kinks_ = std::move(lags);
    std::sort(kinks_.begin(), kinks_.end());
  }
  bool has_derivatives() const { return dright_.cols() > 0; }

  /// Value at theta in [-r, 0].
  Vec at(double theta) const {
    Index R = delay_steps();
    double q = -theta / h_;
    if (q < -1e-9 || q > static_cast<double>(R) + 1e-9) {
      throw DomainError("segment queried at theta=" + format_number(theta) + " outside [-r,0]");
    }
    double qr = std::round(q);
    if (std::abs(q - qr) <= 1e-12 * std::max(1.0, qr)) return samples_.col(static_cast<Index>(qr));
    // Cell between lags m+1 (older, theta0) and m (newer, theta1).
    auto m = static_cast<Index>(std::floor(q));
    double s = 1.0 - (q - static_cast<double>(m));
    Vec x0 = samples_.col(m + 1), x1 = samples_.col(m);
    if (has_derivatives()) return hermite(x0, x1, dright_.col(m + 1), dleft_.col(m), h_, s);
    if (is_kink(m) || is_kink(m + 1) || R < 2) return (1.0 - s) * x0 + s * x1;
    return hermite(x0, x1, slope(m + 1), slope(m), h_, s);
  }

  /// Value at the middle of the cell between lags m+1 and m.
  Vec mid(Index m) const { return at(-(static_cast<double>(m) + 0.5) * h_); }

 private:
  bool is_kink(Index m) const { return std::binary_search(kinks_.begin(), kinks_.end(), m); }

  Vec slope(Index m) const {
    Index R = delay_steps();
    // d/dtheta, theta increasing means lag decreasing.
    if (m == 0) return (samples_.col(0) - samples_.col(1)) / h_;
    if (m == R) return (samples_.col(R - 1) - samples_.col(R)) / h_;
    return (samples_.col(m - 1) - samples_.col(m + 1)) / (2 * h_);
  }

  Mat samples_;
  double h_ = 1.0;
  Mat dright_;
  Mat dleft_;
  std::vector<Index> kinks_;
};

/// The segment theta -> x(t_j + theta) on the delayed nodes.
inline HistorySegment segment(const PiecewiseFn& x, Index j) {
  const Mesh& mesh = x.mesh();
  Index R = mesh.delay_steps();
  if (j < 0 || j > mesh.steps()) throw AlignmentError("segment time index " + std::to_string(j) + " is not in [0,T]");
  if (j - R < x.first() || j > x.last()) {
    throw DomainError("function undefined on [t-r, t] for t=" + format_number(mesh.time(j)));
  }
  Mat s(x.dim(), R + 1);
  for (Index m = 0; m <= R; ++m) s.col(m) = x.right(j - m);
  HistorySegment seg(std::move(s), mesh.step());
  if (x.has_derivatives()) {
    Mat dr(x.dim(), R + 1), dl(x.dim(), R + 1);
    for (Index m = 0; m <= R; ++m) {
      dr.col(m) = x.derivative(j - m, Side::Right);
      dl.col(m) = x.derivative(j - m, Side::Left);
    }
    seg.set_derivatives(std::move(dr), std::move(dl));
  }
  return seg;
}

inline HistorySegment segment(const PiecewiseFn& x, double t) { return segment(x, x.mesh().index_of(t, "segment time")); }

/// Largest norm over all stored one-sided node values.
inline double sup_norm(const PiecewiseFn& x) {
  double best = 0.0;
  for (Index j = x.first(); j <= x.last(); ++j) {
    best = std::max(best, norm(Vec(x.right(j))));
    if (x.has_jump(j)) best = std::max(best, norm(x.value(j, Side::Left)));
  }
  return best;
}

/// Variation of the piecewise-linear interpolant plus all node jumps.
inline double total_variation(const PiecewiseFn& g) {
  double v = 0.0;
  for (Index j = g.first(); j < g.last(); ++j) v += norm(Vec(g.value(j + 1, Side::Left) - g.value(j, Side::Right)));
  for (Index j = g.first() + 1; j <= g.last(); ++j) {
    if (g.has_jump(j)) v += norm(Vec(g.value(j, Side::Right) - g.value(j, Side::Left)));
  }
  return v;
}

/// Composite trapezoid over nodes [a, b] using one-sided values at jumps.
inline Vec quad(const PiecewiseFn& f, Index a, Index b) {
  if (a > b) throw DomainError("quad bounds reversed");
  if (a < f.first() || b > f.last()) throw DomainError("quad bounds outside the function's range");
  double h = f.mesh().step();
  Vec acc = Vec::Zero(f.dim());
  for (Index j = a; j < b; ++j) acc += 0.5 * h * (Vec(f.right(j)) + f.value(j + 1, Side::Left));
  return acc;
}

inline Vec quad(const PiecewiseFn& f, double a, double b) {
  return quad(f, f.mesh().index_of(a, "quad lower bound"), f.mesh().index_of(b, "quad upper bound"));
}

}  // namespace delaypmp
