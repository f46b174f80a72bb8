#include <catch_amalgamated.hpp>

#include <cmath>

#include "delaypmp/problems.hpp"
#include "delaypmp/resolvent.hpp"

using namespace delaypmp;
using Catch::Matchers::WithinAbs;
using Route = FundamentalMatrix::Route;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Mat m1(double a) { return Mat::Constant(1, 1, a); }

DelayKernel benchmark_kernel(double h, double T = 2.0) {
  Mesh m = Mesh::uniform(T, 1.0, h);
  DelayKernel K(m, 1);
  K.add_constant_atom(m.delay_steps(), m1(-1.0));
  return K;
}

/// Two-dimensional kernel with a lag-0 atom, a delayed atom, a jump in t
/// and a density.
DelayKernel mixed_kernel(double h) {
  Mesh m = Mesh::uniform(1.0, 0.25, h).with_breakpoint_times({0.5});
  DelayKernel K(m, 2);
  K.add_breakpoints(m.breakpoints());
  Mat rot(2, 2);
  rot << 0.0, 1.0, -1.0, 0.0;
  K.add_constant_atom(0, rot);
  Index half = m.index_of(0.5);
  K.add_atom(m.delay_steps(), [&](Index j, Side side) {
    bool late = j > half || (j == half && side == Side::Right);
    return Mat((late ? -0.6 : -0.2) * Mat::Identity(2, 2));
  });
  K.set_density([&](Index j, Side, Index q) {
    Mat C(2, 2);
    C << 0.3, 0.1 * m.time(j), 0.0, 0.5 - m.time(q);
    return C;
  });
  return K;
}

}  // namespace

TEST_CASE("kernel k values", "[resolvent]") {
  Mesh m = Mesh::uniform(2.0, 1.0, 0.1);
  REQUIRE(norm(kernel_k(DelayKernel::zero(m, 1), 0.5, 0.2)) == 0.0);
  DelayKernel K = benchmark_kernel(0.1);
  REQUIRE(kernel_k(K, 0.2, 0.1)(0, 0) == -1.0);
  REQUIRE(kernel_k(K, 1.5, 0.2)(0, 0) == 0.0);
  // k(t, t) is eta(t, 0).
  REQUIRE(kernel_k(K, 0.7, 0.7)(0, 0) == eta_eval(K, 7, 0.0)(0, 0));
}

TEST_CASE("normalized kernel of the benchmark atom", "[resolvent]") {
  DelayKernel K = benchmark_kernel(0.1);
  // kappa vanishes for lags inside (0, r) and equals -A beyond r.
  REQUIRE(normalized_kernel(K, 15, Side::Right, 5, Limit::Value)(0, 0) == 0.0);
  REQUIRE(normalized_kernel(K, 15, Side::Right, 10, Limit::Value)(0, 0) == 1.0);
  REQUIRE(normalized_kernel(K, 15, Side::Right, 10, Limit::Below)(0, 0) == 0.0);
  REQUIRE(normalized_kernel(K, 15, Side::Right, 12, Limit::Below)(0, 0) == 1.0);
  REQUIRE(normalized_kernel(K, 15, Side::Right, 0, Limit::Value)(0, 0) == 0.0);
}

TEST_CASE("resolvent of the zero kernel", "[resolvent]") {
  DelayKernel K = DelayKernel::zero(Mesh::uniform(1.0, 0.5, 0.05), 2);
  ResolventKernel R = solve_resolvent(K);
  for (Index i = 0; i <= 20; ++i) {
    for (Index s = 0; s <= i; ++s) REQUIRE(norm(R.value(i, s)) == 0.0);
  }
  FundamentalMatrix X = fundamental_dense(K, Route::Volterra);
  REQUIRE(norm(Mat(X(20, 3) - Mat::Identity(2, 2))) == 0.0);
}

TEST_CASE("resolvent of the benchmark atom in closed form", "[resolvent]") {
  // kappa(a, s) = 1 for a - s > 1 and 0 otherwise, so the correction
  // integral has empty support while t - s < 2: R = 0 below lag 1 and
  // R = 1 between lags 1 and 2.
  DelayKernel K = benchmark_kernel(0.01);
  ResolventKernel R = solve_resolvent(K);
  for (Index i : {50, 120, 200}) {
    for (Index s = 0; s <= i; ++s) {
      Index d = i - s;
      if (d < 100) REQUIRE(std::abs(R.value(i, s)(0, 0)) <= 1e-12);
      if (d > 100 && d < 200) REQUIRE_THAT(R.value(i, s)(0, 0), WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("resolvent matches a dense fixed-point iteration", "[resolvent]") {
  // Density-only kernel C(t, theta) = (1 + t) cos(theta); then
  // kappa(a, s) = (1 + a) sin(max(s - a, -r)), evaluated in closed form.
  double h = 0.01, r = 0.5, T = 1.0;
  Mesh m = Mesh::uniform(T, r, h);
  DelayKernel K(m, 1);
  K.set_density([&](Index j, Side, Index q) { return m1((1.0 + m.time(j)) * std::cos(-m.time(q))); });
  ResolventKernel R = solve_resolvent(K);

  auto kappa = [&](double a, double s) { return a < s ? 0.0 : (1.0 + a) * std::sin(std::max(s - a, -r)); };
  Index M = m.steps();
  int sub = 4;  // oracle grid is 4x finer
  int N = static_cast<int>(M) * sub;
  double g = h / sub;
  std::vector<double> row(N + 1, 0.0), next(N + 1);
  double t = T;
  for (int it = 0; it < 200; ++it) {
    double change = 0.0;
    for (int s = 0; s <= N; ++s) {
      double acc = 0.0;
      for (int a = s; a < N; ++a) acc += 0.5 * g * (row[a] * kappa(a * g, s * g) + row[a + 1] * kappa((a + 1) * g, s * g));
      next[s] = kappa(t, s * g) - acc;
      change = std::max(change, std::abs(next[s] - row[s]));
    }
    row.swap(next);
    if (change < 1e-14) break;
  }
  for (Index s = 0; s <= M; ++s) REQUIRE_THAT(R.value(M, s)(0, 0), WithinAbs(row[s * sub], 1e-4));
}

TEST_CASE("fundamental matrix of the benchmark", "[resolvent]") {
  DelayKernel K = benchmark_kernel(1e-3);
  for (Route route : {Route::Direct, Route::Volterra}) {
    FundamentalMatrix::Request req;
    req.cols = {0, 1000};
    req.rows = {2000};
    FundamentalMatrix X = fundamental(K, route, req);
    // X(., 0) is 1 until the delay acts, then 2 - t.
    REQUIRE_THAT(X(500, 0)(0, 0), WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(X(1000, 0)(0, 0), WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(X(1500, 0)(0, 0), WithinAbs(0.5, 1e-6));
    REQUIRE_THAT(X(2000, 0)(0, 0), WithinAbs(0.0, 1e-6));
    REQUIRE_THAT(X(2000, 1000)(0, 0), WithinAbs(1.0, 1e-12));
    REQUIRE(X(300, 700)(0, 0) == 1.0);
    REQUIRE(X(2000, 2000)(0, 0) == 1.0);
  }
}

TEST_CASE("routes agree on a mixed kernel", "[resolvent]") {
  DelayKernel K = mixed_kernel(5e-3);
  FundamentalMatrix Xd = fundamental_dense(K, Route::Direct);
  FundamentalMatrix Xv = fundamental_dense(K, Route::Volterra);
  REQUIRE(max_distance(Xd, Xv) <= 1e-4);
  Index M = K.mesh().steps();
  Mat I = Mat::Identity(2, 2);
  for (Index t = 0; t <= M; t += 17) {
    for (Index s = t; s <= M; s += 13) REQUIRE(norm(Mat(Xd(t, s) - I)) == 0.0);
  }
  // Columns are continuous in t, and bounded by the Gronwall rate.
  double lambda = bv_bound(K);
  double jump = 0.0;
  for (Index s : {0, 40, 150}) {
    for (Index t = s; t < M; ++t) jump = std::max(jump, norm(Mat(Xd(t + 1, s) - Xd(t, s))));
  }
  REQUIRE(jump <= 2.0 * lambda * std::exp(lambda * K.mesh().horizon()) * K.mesh().step());
  REQUIRE(Xd.max_entry() <= std::exp(lambda * K.mesh().horizon()));
}

TEST_CASE("variation of constants on the benchmark", "[resolvent]") {
  DelayKernel K = benchmark_kernel(1e-3);
  FundamentalMatrix X = fundamental_dense(K, Route::Direct);
  HistorySegment one = HistorySegment::constant(v1(1.0), 1000, 1e-3);
  PiecewiseFn Z = var_const_Z(X, K, 0, one);
  REQUIRE_THAT(Z.right(1000)(0), WithinAbs(-1.0, 1e-6));
  PiecewiseFn U = var_const_U(X, K, 0, one);
  REQUIRE(U.right(0)(0) == 1.0);
  REQUIRE_THAT(U.right(1000)(0), WithinAbs(0.0, 1e-6));
  REQUIRE_THAT(U.right(2000)(0), WithinAbs(-0.5, 1e-5));
  Trajectory sl = solve_linear(K, Index(0), one);
  for (Index t = 0; t <= 2000; t += 50) REQUIRE_THAT(U.right(t)(0), WithinAbs(sl.at(t)(0), 1e-5));

  SECTION("forcing") {
    PiecewiseFn g = PiecewiseFn::constant(K.mesh(), 0, 2000, v1(1.0));
    PiecewiseFn V = var_const_V(X, K, 0, one, g);
    Trajectory sv = solve_linear(K, Index(0), one, g);
    REQUIRE_THAT(V.right(2000)(0), WithinAbs(sv.terminal()(0), 1e-5));
    PiecewiseFn V0 = var_const_V(X, K, 0, one, PiecewiseFn());
    REQUIRE(V0.right(2000)(0) == U.right(2000)(0));
  }
  SECTION("start at sigma") {
    PiecewiseFn Us = var_const_U(X, K, 700, one);
    REQUIRE(Us.right(700)(0) == 1.0);
    Trajectory s2 = solve_linear(K, Index(700), one);
    REQUIRE_THAT(Us.right(2000)(0), WithinAbs(s2.terminal()(0), 1e-5));
  }
}

TEST_CASE("variation of constants trivial cases", "[resolvent]") {
  Mesh m = Mesh::uniform(1.0, 0.5, 0.01);
  DelayKernel K = DelayKernel::zero(m, 1);
  FundamentalMatrix X = fundamental_dense(K, Route::Direct);
  HistorySegment phi = HistorySegment::from_function(1, 50, 0.01, [](double t) { return v1(3.0 + t); });
  REQUIRE(norm(Vec(var_const_Z(X, K, 20, phi).right(100))) == 0.0);
  REQUIRE(var_const_U(X, K, 20, phi).right(100)(0) == 3.0);
  HistorySegment zero = HistorySegment::constant(v1(0.0), 50, 0.01);
  PiecewiseFn c = PiecewiseFn::constant(m, 0, 100, v1(2.0));
  REQUIRE_THAT(var_const_V(X, K, 20, zero, c).right(100)(0), WithinAbs(2.0 * 0.8, 1e-13));
}

TEST_CASE("variation of constants on a mixed kernel", "[resolvent]") {
  DelayKernel K = mixed_kernel(5e-3);
  FundamentalMatrix X = fundamental_dense(K, Route::Direct);
  Index R = K.mesh().delay_steps();
  HistorySegment phi = HistorySegment::from_function(2, R, 5e-3, [](double t) {
    Vec v(2);
    v << std::cos(4 * t), 1.0 + t;
    return v;
  });
  PiecewiseFn g = PiecewiseFn::from_function(K.mesh(), 0, K.mesh().steps(), 2, [](double t) {
    Vec v(2);
    v << t, -1.0;
    return v;
  });
  for (Index sigma : {Index(0), Index(60)}) {
    PiecewiseFn U = var_const_U(X, K, sigma, phi);
    PiecewiseFn V = var_const_V(X, K, sigma, phi, g);
    Trajectory su = solve_linear(K, sigma, phi);
    Trajectory sv = solve_linear(K, sigma, phi, g);
    double du = 0.0, dv = 0.0;
    for (Index t = sigma; t <= K.mesh().steps(); ++t) {
      du = std::max(du, norm(Vec(U.right(t) - su.at(t))));
      dv = std::max(dv, norm(Vec(V.right(t) - sv.at(t))));
    }
    REQUIRE(du <= 1e-4);
    REQUIRE(dv <= 1e-4);
  }
}

TEST_CASE("adjoint identity", "[resolvent]") {
  SECTION("zero kernel") {
    DelayKernel K = DelayKernel::zero(Mesh::uniform(1.0, 0.5, 0.05), 1);
    REQUIRE(adjoint_identity_residual(fundamental_dense(K, Route::Direct), K) == 0.0);
  }
  SECTION("benchmark") {
    DelayKernel K = benchmark_kernel(1e-3);
    FundamentalMatrix::Request req;
    req.rows = {500, 1500, 2000};
    REQUIRE(adjoint_identity_residual(fundamental(K, Route::Direct, req), K) <= 1e-4);
  }
  SECTION("mixed kernel") {
    DelayKernel K = mixed_kernel(5e-3);
    REQUIRE(adjoint_identity_residual(fundamental_dense(K, Route::Volterra), K) <= 1e-4);
  }
}
