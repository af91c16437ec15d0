#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "dgieti/discretize.hpp"

using namespace dgieti;

namespace {

Discretization two_squares(int p, int r, double delta = 0.0, std::vector<int> extra = {}) {
  DiscretizationConfig cfg;
  cfg.delta = delta;
  return Discretization(multipatch_rectangle(2, 1, p, r, extra), CoefficientField::constant(2, 1.0), cfg);
}

// 1D stiffness/mass matrices of a knot vector by fine composite Gauss rules
// and single-function evaluation, independent of the tensor assembly path.
std::pair<DenseMatrix, DenseMatrix> univariate_matrices(const KnotVector& kv) {
  const int n = kv.size();
  DenseMatrix K = DenseMatrix::Zero(n, n), M = DenseMatrix::Zero(n, n);
  const auto bps = kv.breakpoints();
  for (std::size_t c = 0; c + 1 < bps.size(); ++c) {
    const auto q = gauss_legendre(8, bps[c], bps[c + 1]);
    for (std::size_t g = 0; g < q.points.size(); ++g) {
      Vector v(n), d(n);
      for (int i = 0; i < n; ++i) {
        v[i] = eval_basis_function(kv, i, q.points[g]);
        const auto bd = eval_basis_derivs(kv, q.points[g], 1);
        const int j = i - bd.first;
        d[i] = (j >= 0 && j <= kv.degree()) ? bd.ders[1][j] : 0.0;
      }
      K += q.weights[g] * d * d.transpose();
      M += q.weights[g] * v * v.transpose();
    }
  }
  return {K, M};
}

}  // namespace

TEST(Quadrature, GaussLegendreExactness) {
  for (int n = 1; n <= 8; ++n) {
    const auto q = gauss_legendre(n);
    for (int deg = 0; deg <= 2 * n - 1; ++deg) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += q.weights[i] * std::pow(q.points[i], deg);
      const double exact = deg % 2 == 1 ? 0.0 : 2.0 / (deg + 1);
      EXPECT_NEAR(s, exact, 1e-14) << "n=" << n << " deg=" << deg;
    }
  }
  const auto q = gauss_legendre(3, 2.0, 5.0);
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += q.weights[i] * q.points[i] * q.points[i];
  EXPECT_NEAR(s, (125.0 - 8.0) / 3.0, 1e-12);
}

TEST(Discretize, HarmonicAverage) {
  EXPECT_DOUBLE_EQ(harmonic_average(0.25, 0.25), 0.25);
  EXPECT_DOUBLE_EQ(harmonic_average(1.0, 1.0 / 3.0), 0.5);
  EXPECT_LT(harmonic_average(1.0, 1e9), 2.0);
  EXPECT_THROW(harmonic_average(0.0, 1.0), std::invalid_argument);
}

TEST(ExtendedSpace, LayersAndPartition) {
  const auto disc = two_squares(2, 0);
  const auto& e0 = disc.spaces[0];
  ASSERT_EQ(e0.layers.size(), 1u);
  EXPECT_EQ(e0.n_own, 9);
  EXPECT_EQ(e0.layers[0].dofs, (std::vector<int>{0, 3, 6}));  // west side of patch 1
  EXPECT_EQ(e0.size(), 12);
  // west side of patch 0 is Dirichlet: 3 own dofs, and no copy touches it
  EXPECT_EQ(std::count(e0.dirichlet.begin(), e0.dirichlet.end(), true), 3);
  EXPECT_EQ(e0.boundary, (std::vector<int>{2, 5, 8, 9, 10, 11}));
  EXPECT_EQ(e0.interior, (std::vector<int>{1, 4, 7}));
  const auto& e1 = disc.spaces[1];
  EXPECT_EQ(e1.boundary, (std::vector<int>{0, 3, 6, 9, 10, 11}));
  EXPECT_EQ(e1.interior.size(), 6u);
  EXPECT_EQ(e1.origin[10], (std::array<int, 2>{0, 5}));
  EXPECT_EQ(e1.layer_index(0, 8), 11);
  EXPECT_EQ(e1.layer_index(0, 4), -1);
}

TEST(ExtendedSpace, CopiesOfDirichletDofsAreDirichlet) {
  // 1 x 2 stack: the interface touches the Dirichlet side at its west end
  const Discretization disc(multipatch_rectangle(1, 2, 2, 1), CoefficientField::constant(2, 1.0));
  const auto& e0 = disc.spaces[0];
  const auto& L = e0.layers[0];
  EXPECT_TRUE(e0.dirichlet[L.offset]);
  EXPECT_FALSE(e0.dirichlet[L.offset + 1]);
  for (int i : e0.boundary) EXPECT_FALSE(e0.dirichlet[i]);
}

TEST(ExtendedSpace, IsolatedPatchHasNoLayers) {
  const Discretization disc(multipatch_rectangle(1, 1, 3, 1), CoefficientField::constant(1, 2.0));
  EXPECT_TRUE(disc.spaces[0].layers.empty());
  EXPECT_TRUE(disc.spaces[0].boundary.empty());
  EXPECT_EQ(disc.spaces[0].size(), 25);
}

TEST(Assembly, SymmetricAndConstantsInKernel) {
  for (int p : {1, 2, 3}) {
    const Discretization disc(multipatch_rectangle(2, 2, p, 1, std::vector<int>{0, 1, 1, 0}),
                              CoefficientField(std::vector<double>{1.0, 10.0, 0.1, 3.0}));
    for (int k = 0; k < 4; ++k) {
      const SparseMatrix K = assemble_patch_operator(disc, k);
      EXPECT_LE(symmetry_defect(K), 1e-12);
      const Vector ones = Vector::Ones(K.rows());
      EXPECT_LE((K * ones).cwiseAbs().maxCoeff(), 1e-11 * max_abs(K));
    }
  }
}

TEST(Assembly, VolumeTermMatchesTensorProductOracle) {
  const auto disc = two_squares(2, 1);
  const auto parts = assemble_patch_matrices(disc, 1);
  const auto& basis = disc.mp.patches[1].basis;
  const auto [K0, M0] = univariate_matrices(basis.direction(0));
  const auto [K1, M1] = univariate_matrices(basis.direction(1));
  const int n = basis.size();
  const DenseMatrix A = DenseMatrix(parts.volume).topLeftCorner(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto a = basis.multi_index(i), b = basis.multi_index(j);
      const double want = K0(a[0], b[0]) * M1(a[1], b[1]) + M0(a[0], b[0]) * K1(a[1], b[1]);
      EXPECT_NEAR(A(i, j), want, 1e-12);
    }
  // no volume coupling into the layer
  EXPECT_EQ(DenseMatrix(parts.volume).rightCols(parts.volume.cols() - n).norm(), 0.0);
}

TEST(Assembly, PenaltyIsLinearInDelta) {
  const auto d1 = two_squares(1, 0, 5.0);
  const auto d2 = two_squares(1, 0, 10.0);
  const auto m1 = assemble_patch_matrices(d1, 0);
  const SparseMatrix diff = assemble_patch_operator(d2, 0) - assemble_patch_operator(d1, 0);
  EXPECT_LE(max_abs(SparseMatrix(diff - m1.penalty)), 1e-14);
}

TEST(Assembly, SingleCellPenaltyBlockIsScaledEdgeMass) {
  const double delta = 7.0;
  const auto disc = two_squares(1, 0, delta);
  const auto P = DenseMatrix(assemble_patch_matrices(disc, 0).penalty);
  const double hkl = std::numbers::sqrt2;  // both cells are unit squares
  const double c = delta / (2.0 * hkl);
  // own trace dofs on the east side: 1 (bottom), 3 (top); copies: 4 (bottom), 5 (top)
  const double m[2][2] = {{1.0 / 3, 1.0 / 6}, {1.0 / 6, 1.0 / 3}};
  const int own[2] = {1, 3}, cp[2] = {4, 5};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      EXPECT_NEAR(P(own[a], own[b]), c * m[a][b], 1e-14);
      EXPECT_NEAR(P(cp[a], cp[b]), c * m[a][b], 1e-14);
      EXPECT_NEAR(P(own[a], cp[b]), -c * m[a][b], 1e-14);
    }
  EXPECT_EQ(P(0, 0), 0.0);
  EXPECT_EQ(P(2, 2), 0.0);
}

TEST(Assembly, ConsistencyTermVanishesForLinearFunctionAcrossInterface) {
  // u = x is continuous: s(u, v) = alpha/2 * int du/dn (v_l - v_k); with v = u the jump is zero
  const auto disc = two_squares(2, 1);
  const auto parts = assemble_patch_matrices(disc, 0);
  const auto& ext = disc.spaces[0];
  Vector u(ext.size());
  const auto gu = greville_points(disc.mp.patches[0].basis.direction(0));
  const auto& b0 = disc.mp.patches[0].basis;
  for (int i = 0; i < ext.n_own; ++i) u[i] = gu[b0.multi_index(i)[0]];
  for (int i = ext.n_own; i < ext.size(); ++i) u[i] = 1.0;  // x on the interface
  EXPECT_NEAR(u.dot(parts.penalty * u), 0.0, 1e-13);
  EXPECT_NEAR(u.dot(parts.consistency * u), 0.0, 1e-13);
  EXPECT_NEAR(u.dot(parts.volume * u), 1.0, 1e-12);  // int |grad x|^2 over the unit square
}

TEST(Assembly, DgNormHasOnlyConstantsInKernel) {
  const auto disc = two_squares(2, 1);
  for (int k = 0; k < 2; ++k) {
    const auto parts = assemble_patch_matrices(disc, k);
    const DenseMatrix D = parts.dg_norm();
    EXPECT_LE((DenseMatrix(parts.volume) + 2.0 * DenseMatrix(parts.penalty) - D).norm(), 0.0);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(D);
    EXPECT_NEAR(es.eigenvalues()[0], 0.0, 1e-10);
    EXPECT_GT(es.eigenvalues()[1], 1e-6);
    EXPECT_LE((D * Vector::Ones(D.rows())).norm(), 1e-11);
  }
}

TEST(Assembly, DegenerateGeometryReported) {
  MultiPatch mp = multipatch_rectangle(1, 1, 2, 0);
  // collapse the control net onto a line
  for (auto& c : mp.patches[0].control_points) c[1] = 0.0;
  const Discretization disc(mp, CoefficientField::constant(1, 1.0));
  try {
    assemble_patch_operator(disc, 0);
    FAIL() << "expected a geometry error";
  } catch (const GeometryError& e) {
    EXPECT_NE(std::string(e.what()).find("patch 0"), std::string::npos);
  }
}

TEST(Rhs, ZeroDataAndUnitSource) {
  const auto disc = two_squares(3, 1);
  ProblemData zero;
  EXPECT_EQ(assemble_patch_rhs(disc, 0, zero).norm(), 0.0);
  ProblemData one;
  one.f = [](const Point2&) { return 1.0; };
  const Vector f = assemble_patch_rhs(disc, 1, one);
  EXPECT_NEAR(f.head(disc.spaces[1].n_own).sum(), 1.0, 1e-13);
  EXPECT_EQ(f.tail(f.size() - disc.spaces[1].n_own).norm(), 0.0);
}

TEST(Rhs, LinearSourceOnSingleCell) {
  const Discretization disc(multipatch_rectangle(1, 1, 1, 0), CoefficientField::constant(1, 1.0));
  ProblemData d;
  d.f = [](const Point2& x) { return x[0]; };
  const Vector f = assemble_patch_rhs(disc, 0, d);
  EXPECT_NEAR(f[0], 1.0 / 12, 1e-15);
  EXPECT_NEAR(f[1], 1.0 / 6, 1e-15);
  EXPECT_NEAR(f[2], 1.0 / 12, 1e-15);
  EXPECT_NEAR(f[3], 1.0 / 6, 1e-15);
}

TEST(Rhs, NeumannDataIntegratedOnTaggedSides) {
  const Discretization disc(multipatch_rectangle(1, 1, 2, 1), CoefficientField::constant(1, 1.0));
  ProblemData d;
  // g_N = n_x: +1 on the east side, -1 on the west (Dirichlet, ignored), 0 on south/north
  d.g_N = [](int, const Point2&, const Point2& n) { return n[0]; };
  const Vector f = assemble_patch_rhs(disc, 0, d);
  EXPECT_NEAR(f.sum(), 1.0, 1e-14);
  const auto east = side_dofs(disc.mp.patches[0].basis, Side::east);
  double s = 0.0;
  for (int i : east) s += f[i];
  EXPECT_NEAR(s, 1.0, 1e-14);
}

TEST(Dirichlet, LiftInterpolatesBoundaryData) {
  const Discretization disc(multipatch_rectangle(1, 2, 2, 2), CoefficientField::constant(2, 1.0));
  const auto zero = dirichlet_lift(disc, 0, [](const Point2&) { return 0.0; });
  EXPECT_EQ(zero.norm(), 0.0);
  const auto c = dirichlet_lift(disc, 0, [](const Point2&) { return 2.5; });
  for (int i = 0; i < disc.spaces[0].size(); ++i) EXPECT_DOUBLE_EQ(c[i], disc.spaces[0].dirichlet[i] ? 2.5 : 0.0);
  // patch 1 sits on [0,1]x[1,2]: g = y on its west side gives 1 + Greville abscissae
  const auto y = dirichlet_lift_own(disc.mp, 1, [](const Point2& x) { return x[1]; });
  const auto g = greville_points(disc.mp.patches[1].basis.direction(1));
  const auto west = side_dofs(disc.mp.patches[1].basis, Side::west);
  for (std::size_t i = 0; i < west.size(); ++i) EXPECT_NEAR(y[west[i]], 1.0 + g[i], 1e-13);
}

TEST(Dirichlet, ReducedSystemOrderAndHomogenization) {
  const auto disc = two_squares(2, 1);
  const SparseMatrix K = assemble_patch_operator(disc, 0);
  ProblemData d;
  d.g_D = [](const Point2&) { return 1.0; };
  const Vector lift = dirichlet_lift(disc, 0, d.g_D);
  const auto sys = reduce_local_system(disc.spaces[0], K, assemble_patch_rhs(disc, 0, d), lift);
  EXPECT_EQ(sys.n_interior, static_cast<int>(disc.spaces[0].interior.size()));
  EXPECT_EQ(static_cast<int>(sys.dofs.size()), disc.spaces[0].size() - 4);
  // a constant lift with constant free values has zero residual: K * 1 = 0
  const Vector r = sys.K * Vector::Ones(sys.K.rows()) - sys.f;
  EXPECT_LE(r.norm(), 1e-11);
}
