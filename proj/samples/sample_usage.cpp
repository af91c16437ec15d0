// Solve -div(alpha grad u) = f on a 2x2 patch grid with non-matching meshes
// and compare the IETI-DP solution with a direct solve of the same system.

#include <cmath>
#include <cstdio>

#include "dgieti/dgieti.hpp"

using namespace dgieti;

int main() {
  // 2x2 unit squares, degree 3, two uniform refinements, patches 1 and 2 refined once more
  const std::vector<int> extra{0, 1, 1, 0};
  MultiPatch mp = multipatch_rectangle(2, 2, 3, 2, extra);
  Discretization disc(std::move(mp), CoefficientField({1.0, 100.0, 100.0, 1.0}));

  ProblemData data;
  data.f = [](const Point2& x) { return std::sin(x[0]) + x[1]; };
  data.g_D = [](const Point2& x) { return x[1] * x[1]; };

  IetiConfig cfg;
  cfg.alg = Algorithm::C;
  cfg.scaling = ScalingKind::coefficient;
  cfg.tol = 1e-10;
  const IetiSystem sys(disc, data, cfg);
  const IetiSolution sol = sys.solve();
  const auto& r = sol.report;

  std::printf("dofs %d  H/h %.1f  iterations %d  kappa %.4f  converged %s\n", r.dofs, r.H_over_h, r.iterations, r.kappa,
              r.converged ? "yes" : "no");
  std::printf("max difference to direct solve %.3e\n", ieti_vs_direct(disc, data, sol));
  return r.converged ? 0 : 1;
}
