#include <catch_amalgamated.hpp>

#include <cmath>

#include "delaypmp/timegrid.hpp"

using namespace delaypmp;
using Catch::Matchers::WithinAbs;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

}  // namespace

TEST_CASE("mesh rejects a delay that is not a multiple of the step", "[timegrid]") {
  REQUIRE_NOTHROW(Mesh::uniform(1.0, 0.3, 0.02));
  REQUIRE_THROWS_AS(Mesh::uniform(1.0, 0.3, 0.04), AlignmentError);
  try {
    Mesh::uniform(1.0, 0.3, 0.04);
  } catch (const AlignmentError& e) {
    REQUIRE(std::string(e.what()).find("r/h not integer") != std::string::npos);
  }
}

TEST_CASE("mesh nodes and breakpoints", "[timegrid]") {
  Mesh m = Mesh::uniform(2.0, 1.0, 1e-3);
  REQUIRE(m.steps() == 2000);
  REQUIRE(m.delay_steps() == 1000);
  REQUIRE(m.time(0) == 0.0);
  REQUIRE(m.index_of(1.5) == 1500);
  REQUIRE_THROWS_AS(m.index_of(0.00025), AlignmentError);
  REQUIRE_THROWS_AS(m.with_breakpoint_times({0.1234}), AlignmentError);
  Mesh b = m.with_breakpoint_times({0.5, 0.25, 0.5});
  REQUIRE(b.breakpoints() == std::vector<Index>{250, 500});
  REQUIRE(b.is_breakpoint(250));
  REQUIRE_FALSE(b.is_breakpoint(251));
  REQUIRE(b.same_grid(m));
  REQUIRE_FALSE(m.same_grid(Mesh::uniform(2.0, 1.0, 2e-3)));
}

TEST_CASE("zero delay mesh", "[timegrid]") {
  Mesh m = Mesh::uniform(1.0, 0.0, 0.1);
  REQUIRE(m.delay_steps() == 0);
  REQUIRE(m.steps() == 10);
}

TEST_CASE("piecewise function keeps left values only at jumps", "[timegrid]") {
  Mesh m = Mesh::uniform(1.0, 0.5, 0.25);
  PiecewiseFn u = PiecewiseFn::constant(m, 0, 4, v1(1.0));
  u.set_right(2, v1(-2.0));
  u.set_right(3, v1(-2.0));
  u.set_right(4, v1(-2.0));
  u.set_left(2, v1(1.0));
  REQUIRE(u.value(2, Side::Left)(0) == 1.0);
  REQUIRE(u.value(2, Side::Right)(0) == -2.0);
  REQUIRE(u.value(3, Side::Left)(0) == -2.0);
  REQUIRE(u.discontinuities() == std::vector<Index>{2});
  u.set(2, v1(5.0));
  REQUIRE_FALSE(u.has_jump(2));

  PiecewiseFn c(m, 0, 4, 1, Smoothness::C0);
  REQUIRE_THROWS_AS(c.set_left(1, v1(0.0)), DomainError);
  REQUIRE_THROWS_AS(u.value(7), DomainError);
}

TEST_CASE("hermite evaluation reproduces cubics", "[timegrid]") {
  auto f = [](double t) { return t * t * t - 2 * t; };
  auto df = [](double t) { return 3 * t * t - 2; };
  double h = 0.1, t0 = 0.3;
  Vec x0 = v1(f(t0)), x1 = v1(f(t0 + h)), d0 = v1(df(t0)), d1 = v1(df(t0 + h));
  REQUIRE_THAT(hermite_mid(x0, x1, d0, d1, h)(0), WithinAbs(f(t0 + h / 2), 1e-14));
  REQUIRE_THAT(hermite(x0, x1, d0, d1, h, 0.3)(0), WithinAbs(f(t0 + 0.03), 1e-14));
}

TEST_CASE("segment extraction", "[timegrid]") {
  Mesh m = Mesh::uniform(2.0, 1.0, 0.125);
  SECTION("constant function") {
    PiecewiseFn x = PiecewiseFn::constant(m, -8, 16, v1(1.0), Smoothness::C0);
    HistorySegment s = segment(x, 0.5);
    for (Index k = 0; k <= 8; ++k) REQUIRE(s.lag(k)(0) == 1.0);
  }
  SECTION("affine shift") {
    PiecewiseFn x = PiecewiseFn::from_function(m, -8, 16, 1, [](double t) { return v1(t); }, Smoothness::C0);
    HistorySegment s = segment(x, 1.0);
    for (Index k = 0; k <= 8; ++k) {
      double theta = -0.125 * static_cast<double>(k);
      REQUIRE_THAT(s.lag(k)(0), WithinAbs(theta + 1.0, 1e-15));
      if (k > 0) REQUIRE_THAT(s.at(theta + 0.0625)(0), WithinAbs(theta + 1.0625, 1e-14));
    }
  }
  SECTION("method-of-steps state at t = 1") {
    // x(t) = 1 - t on [0,1] for x' = -x(t-1) with unit history.
    PiecewiseFn x = PiecewiseFn::from_function(m, -8, 8, 1, [](double t) { return v1(t <= 0 ? 1.0 : 1.0 - t); }, Smoothness::C0);
    HistorySegment s = segment(x, 1.0);
    for (Index k = 0; k <= 8; ++k) {
      double theta = -0.125 * static_cast<double>(k);
      REQUIRE_THAT(s.lag(k)(0), WithinAbs(1.0 - (1.0 + theta), 1e-15));
    }
  }
  SECTION("segment reaching before the stored range") {
    PiecewiseFn x = PiecewiseFn::constant(m, 0, 16, v1(1.0), Smoothness::C0);
    REQUIRE_THROWS_AS(segment(x, 0.5), DomainError);
  }
}

TEST_CASE("sup norm", "[timegrid]") {
  Mesh m = Mesh::uniform(1.0, 0.0, 0.125);
  REQUIRE(sup_norm(PiecewiseFn::constant(m, 0, 8, v1(3.0))) == 3.0);
  PiecewiseFn step = PiecewiseFn::constant(m, 0, 8, v1(1.0));
  for (Index j = 4; j <= 8; ++j) step.set_right(j, v1(-2.0));
  step.set_left(4, v1(1.0));
  REQUIRE(sup_norm(step) == 2.0);
  REQUIRE(sup_norm(PiecewiseFn::from_function(m, 0, 8, 1, [](double t) { return v1(1.0 - t); })) == 1.0);
}

TEST_CASE("total variation", "[timegrid]") {
  Mesh m = Mesh::uniform(1.0, 1.0, 0.125);
  REQUIRE(total_variation(PiecewiseFn::constant(m, -8, 0, v1(4.0))) == 0.0);

  PiecewiseFn jump = PiecewiseFn::constant(m, -8, 0, v1(0.0));
  for (Index j = -4; j <= 0; ++j) jump.set_right(j, v1(-1.5));
  jump.set_left(-4, v1(0.0));
  REQUIRE(total_variation(jump) == 1.5);

  // theta on [-1,0] plus a jump of 2 at -1/2; oracle: refine a partition
  // of [-1,0] and sum |g(b) - g(a)|, which converges from below.
  PiecewiseFn g = PiecewiseFn::from_function(m, -8, 0, 1, [](double t) { return v1(t < -0.5 ? t : t + 2.0); });
  g.set_left(-4, v1(-0.5));
  auto exact = [](double t) { return t < -0.5 ? t : t + 2.0; };
  double brute = 0.0;
  int parts = 4096;
  for (int k = 0; k < parts; ++k) {
    double a = -1.0 + static_cast<double>(k) / parts, b = -1.0 + static_cast<double>(k + 1) / parts;
    brute += std::abs(exact(b) - exact(a));
  }
  REQUIRE_THAT(brute, WithinAbs(3.0, 1e-12));
  REQUIRE_THAT(total_variation(g), WithinAbs(brute, 1e-12));
}

TEST_CASE("trapezoid quadrature", "[timegrid]") {
  Mesh coarse = Mesh::uniform(1.0, 0.0, 0.125);
  REQUIRE(quad(PiecewiseFn::constant(coarse, 0, 8, v1(1.0)), 0.0, 1.0)(0) == 1.0);
  REQUIRE(quad(PiecewiseFn::from_function(coarse, 0, 8, 1, [](double t) { return v1(t); }), 0.0, 1.0)(0) == 0.5);
  Mesh fine = Mesh::uniform(1.0, 0.0, 1e-3);
  double q = quad(PiecewiseFn::from_function(fine, 0, 1000, 1, [](double t) { return v1(t * t); }), 0.0, 1.0)(0);
  REQUIRE_THAT(q, WithinAbs(1.0 / 3.0, 1e-6));
}

TEST_CASE("norm conventions", "[timegrid]") {
  Vec v(3);
  v << 1.0, -4.0, 2.0;
  REQUIRE(norm(v) == 4.0);
  Mat A(2, 2);
  A << 1.0, -2.0, 0.5, 0.25;
  REQUIRE(norm(A) == 3.0);
  REQUIRE(norm(Vec(0)) == 0.0);
}
