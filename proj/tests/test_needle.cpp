#include <catch_amalgamated.hpp>

#include <cmath>

#include "delaypmp/needle.hpp"
#include "delaypmp/problems.hpp"

using namespace delaypmp;
using Catch::Matchers::WithinAbs;
using Route = FundamentalMatrix::Route;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

bool same_values(const PiecewiseFn& a, const PiecewiseFn& b) {
  if (a.first() != b.first() || a.last() != b.last()) return false;
  for (Index j = a.first(); j <= a.last(); ++j) {
    for (Side s : {Side::Left, Side::Right}) {
      if (!(a.value(j, s).array() == b.value(j, s).array()).all()) return false;
    }
  }
  return true;
}

struct Reference {
  ControlledProblem prob;
  PiecewiseFn u;
  Trajectory tr;
  FundamentalMatrix X;
};

Reference reference(const std::string& name) {
  ControlledProblem prob = load_problem(name);
  PiecewiseFn u = reference_control(prob, prob.mesh());
  Trajectory tr = solve(prob, u);
  DelayKernel K = linearize(prob, tr.x, u);
  FundamentalMatrix::Request req;
  req.rows = {prob.mesh().steps()};
  return {prob, u, tr, fundamental(K, Route::Direct, req)};
}

std::vector<double> ladder(double h) {
  std::vector<double> out;
  for (int k = 0; k <= 5; ++k) out.push_back(h * std::ldexp(1.0, k));
  return out;
}

}  // namespace

TEST_CASE("zero widths leave the control unchanged", "[needle]") {
  Mesh m = Mesh::uniform(1.0, 0.5, 0.01);
  PiecewiseFn u = control_from_table(m, 1, {{0.0, v1(1.0)}, {0.3, v1(-1.0)}});
  NeedleSpec spec{{{0.2, v1(0.0)}, {0.3, v1(0.5)}}, {0.0, 0.0}};
  PiecewiseFn p = perturb_control(u, spec);
  REQUIRE(same_values(p, u));
  REQUIRE(p.discontinuities() == u.discontinuities());
}

TEST_CASE("single needle interval", "[needle]") {
  Mesh m = Mesh::uniform(1.0, 0.5, 0.01);
  PiecewiseFn u = constant_control(m, v1(1.0));
  PiecewiseFn p = perturb_control(u, {{{0.5, v1(-1.0)}}, {0.1}});
  for (Index j = 0; j <= 100; ++j) {
    double expect = (j >= 50 && j < 60) ? -1.0 : 1.0;
    REQUIRE(p.right(j)(0) == expect);
  }
  REQUIRE(p.value(50, Side::Left)(0) == 1.0);
  REQUIRE(p.value(60, Side::Left)(0) == -1.0);
  REQUIRE(p.discontinuities() == std::vector<Index>{50, 60});
}

TEST_CASE("equal-time needles are stacked", "[needle]") {
  Mesh m = Mesh::uniform(1.0, 0.5, 0.01);
  NeedleSpec spec{{{0.5, v1(-1.0)}, {0.5, v1(0.5)}}, {0.1, 0.1}};
  std::vector<NeedleInterval> ivs = needle_intervals(spec, m);
  REQUIRE(ivs.size() == 2);
  REQUIRE(ivs[0].begin == 50);
  REQUIRE(ivs[0].end == 60);
  REQUIRE(ivs[1].begin == 60);
  REQUIRE(ivs[1].end == 70);
  PiecewiseFn p = perturb_control(constant_control(m, v1(1.0)), spec);
  REQUIRE(p.right(55)(0) == -1.0);
  REQUIRE(p.right(65)(0) == 0.5);
  REQUIRE(p.right(70)(0) == 1.0);
}

TEST_CASE("needle spec errors", "[needle]") {
  Mesh m = Mesh::uniform(1.0, 0.5, 0.01);
  PiecewiseFn u = constant_control(m, v1(1.0));
  REQUIRE_THROWS_AS(perturb_control(u, {{{0.5, v1(0.0)}, {0.55, v1(0.0)}}, {0.1, 0.1}}), DomainError);
  REQUIRE_THROWS_AS(perturb_control(u, {{{0.95, v1(0.0)}}, {0.1}}), DomainError);
  REQUIRE_THROWS_AS(perturb_control(u, {{{0.5, v1(0.0)}}, {0.015}}), AlignmentError);
  REQUIRE_THROWS_AS(perturb_control(u, {{{0.5, v1(0.0)}}, {}}), ConfigError);
  REQUIRE_THROWS_AS(perturb_control(u, {{{1.0, v1(0.0)}}, {0.0}}), DomainError);
}

TEST_CASE("needle order is irrelevant at distinct times", "[needle]") {
  Mesh m = Mesh::uniform(1.0, 0.5, 0.01);
  PiecewiseFn u = control_from_table(m, 1, {{0.0, v1(1.0)}, {0.45, v1(-1.0)}});
  NeedleSpec a{{{0.1, v1(0.0)}, {0.4, v1(0.25)}, {0.7, v1(0.5)}}, {0.05, 0.1, 0.02}};
  NeedleSpec b{{{0.7, v1(0.5)}, {0.1, v1(0.0)}, {0.4, v1(0.25)}}, {0.02, 0.05, 0.1}};
  REQUIRE(same_values(perturb_control(u, a), perturb_control(u, b)));
}

TEST_CASE("sensitivity of the pure integrator", "[needle]") {
  Reference ref = reference("pure_integrator");
  NeedleSpec spec{{{0.25, v1(-1.0)}, {0.5, v1(1.0)}}, {0.0, 0.0}};
  std::vector<Vec> d = linearized_sensitivity(ref.prob, ref.tr, ref.u, spec, ref.X);
  REQUIRE(d[0](0) == -2.0);
  REQUIRE(d[1](0) == 0.0);
  FdTable tab = finite_difference_check(ref.prob, ref.tr, ref.u, spec, ladder(ref.prob.step), ref.X);
  REQUIRE(tab.all_exact());
  for (const auto& row : tab.errors) {
    for (double e : row) REQUIRE(e == 0.0);
  }
  REQUIRE(std::isnan(tab.slopes[0]));
}

TEST_CASE("finite differences on delay feedback", "[needle]") {
  Reference ref = reference("scalar_delay_feedback");
  NeedleSpec spec{{{0.25, v1(-1.0)}}, {0.0}};
  std::vector<Vec> d = linearized_sensitivity(ref.prob, ref.tr, ref.u, spec, ref.X);
  // X(2, s) = 2 - s on [0, 1] and Delta f = -2.
  REQUIRE_THAT(d[0](0), WithinAbs(-3.5, 1e-6));
  FdTable tab = finite_difference_check(ref.prob, ref.tr, ref.u, spec, ladder(ref.prob.step), ref.X);
  REQUIRE_FALSE(tab.exact[0]);
  REQUIRE(tab.min_slope() >= 0.9);
  for (std::size_t e = 1; e < tab.eps.size(); ++e) REQUIRE(tab.errors[e][0] > tab.errors[e - 1][0]);
  // The remainder is eps times the slope of X(T, .): exactly eps here.
  REQUIRE_THAT(tab.errors[3][0], WithinAbs(tab.eps[3], 1e-6));

  SECTION("widths below the step") {
    REQUIRE_THROWS_AS(finite_difference_check(ref.prob, ref.tr, ref.u, spec, {0.5 * ref.prob.step}, ref.X),
                      AlignmentError);
  }
  SECTION("needle at the reference value") {
    NeedleSpec same{{{0.25, v1(1.0)}}, {0.0}};
    FdTable t = finite_difference_check(ref.prob, ref.tr, ref.u, same, ladder(ref.prob.step), ref.X);
    REQUIRE(t.all_exact());
    REQUIRE(linearized_sensitivity(ref.prob, ref.tr, ref.u, same, ref.X)[0](0) == 0.0);
  }
}

TEST_CASE("first-order superposition", "[needle]") {
  Reference ref = reference("scalar_delay_feedback");
  NeedleSpec spec{{{0.25, v1(-1.0)}, {0.75, v1(0.0)}, {1.5, v1(-0.5)}}, {0.004, 0.008, 0.002}};
  std::vector<Vec> d = linearized_sensitivity(ref.prob, ref.tr, ref.u, spec, ref.X);
  Vec predicted = Vec::Zero(1);
  for (std::size_t i = 0; i < d.size(); ++i) predicted += spec.widths[i] * d[i];
  Vec joint = solve(ref.prob, perturb_control(ref.u, spec)).terminal() - ref.tr.terminal();
  Vec sum = Vec::Zero(1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    NeedleSpec one{{spec.needles[i]}, {spec.widths[i]}};
    sum += solve(ref.prob, perturb_control(ref.u, one)).terminal() - ref.tr.terminal();
  }
  // The problem is linear, so single needles superpose to rounding.
  REQUIRE_THAT(joint(0), WithinAbs(sum(0), 1e-12));
  // The linear prediction misses by O(|a|^2).
  REQUIRE_THAT(joint(0), WithinAbs(predicted(0), 1e-4));
}

TEST_CASE("L1 deviation of needle controls", "[needle]") {
  SECTION("f = u") {
    Reference ref = reference("pure_integrator");
    double h = ref.prob.step;
    NeedleSpec spec{{{0.25, v1(-1.0)}}, {64 * h}};
    REQUIRE(l1_deviation(ref.prob, ref.tr, ref.u, spec) == 2.0 * 64 * h);
    REQUIRE(l1_deviation(ref.prob, ref.tr, ref.u, {{{0.25, v1(-1.0)}}, {0.0}}) == 0.0);
  }
  SECTION("integrand vanishes off the needle intervals") {
    Reference ref = reference("two_dim_rotation_with_delay");
    double h = ref.prob.step;
    NeedleSpec spec{{{0.2, v1(-1.0)}, {0.9, v1(0.2)}}, {20 * h, 50 * h}};
    double total = l1_deviation(ref.prob, ref.tr, ref.u, spec);
    // Independent sum over each interval with the perturbed values.
    double parts = 0.0;
    for (std::size_t i = 0; i < spec.needles.size(); ++i) {
      Index b = ref.prob.mesh().index_of(spec.needles[i].t);
      Index a = ref.prob.mesh().index_of(spec.widths[i]);
      for (Index j = b; j < b + a; ++j) parts += h * norm(delta_f(ref.prob, ref.tr, ref.u, j, spec.needles[i].v));
    }
    REQUIRE_THAT(total, WithinAbs(parts, 1e-14));
  }
  SECTION("ratio table") {
    Reference ref = reference("scalar_delay_feedback");
    NeedleSpec spec{{{0.25, v1(-1.0)}, {1.25, v1(0.0)}}, {0.002, 0.001}};
    L1Table tab = l1_bound_check(ref.prob, ref.tr, ref.u, spec, {1, 2, 4, 8});
    REQUIRE(tab.ratio.size() == 4);
    // |Delta f| is 2 and 1: the weighted limit is (2 * 2 + 1) / 3.
    REQUIRE_THAT(tab.limit, WithinAbs(5.0 / 3.0, 1e-15));
    for (double r : tab.ratio) REQUIRE_THAT(r, WithinAbs(5.0 / 3.0, 1e-12));
    REQUIRE(tab.spread <= 1e-12);
  }
}
