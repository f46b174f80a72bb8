// Walks the scalar_delay_feedback instance through the full pipeline:
// solve, linearize, fundamental matrix, adjoint, and the PMP checks.
#include <cstdio>

#include "delaypmp/delaypmp.hpp"

using namespace delaypmp;

int main() {
  ControlledProblem prob = load_problem("scalar_delay_feedback");
  Mesh mesh = prob.mesh();
  PiecewiseFn u = reference_control(prob, mesh);
  Trajectory tr = solve(prob, u);
  std::printf("x(1) = %.10f  x(2) = %.10f\n", tr.at(mesh.index_of(1.0))(0), tr.terminal()(0));

  DelayKernel K = linearize(prob, tr.x, u);
  FundamentalMatrix X = fundamental(K, FundamentalMatrix::Route::Direct);
  for (double t : {0.0, 0.5, 1.0, 1.5}) std::printf("X(T, %.2f) = %.6f\n", t, X.at(mesh.horizon(), t)(0, 0));

  Vec lambda = *prob.default_lambda;
  PiecewiseFn p = build_p(lambda, terminal_gradients(prob, tr.terminal()), X);
  PmpCertificate cert = check_conditions(prob, tr, K, lambda, p);
  for (const ConditionResult& c : cert.conditions) {
    std::printf("%-3s residual %.3e  %s\n", c.name.c_str(), c.residual, verdict_name(c.verdict));
  }
  return cert.all_pass() ? 0 : 1;
}
