#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "dgieti/discretize.hpp"
#include "dgieti/ieti.hpp"
#include "dgieti/linalg.hpp"

namespace dgieti {

/// Global numbering of the coupled extended system: every free own dof gets one
/// id, copies share the id of their original, Dirichlet locations get -1.
struct GlobalNumbering {
  int n = 0;
  std::vector<std::vector<int>> ids;  // per patch, per extended index
};

inline GlobalNumbering global_numbering(const Discretization& disc) {
  GlobalNumbering num;
  const int N = disc.patch_count();
  std::vector<std::vector<int>> own(N);
  for (int k = 0; k < N; ++k) {
    const auto& ext = disc.spaces[k];
    own[k].assign(ext.n_own, -1);
    for (int i = 0; i < ext.n_own; ++i)
      if (!ext.dirichlet[i]) own[k][i] = num.n++;
  }
  num.ids.resize(N);
  for (int k = 0; k < N; ++k) {
    const auto& ext = disc.spaces[k];
    num.ids[k].assign(ext.size(), -1);
    for (int i = 0; i < ext.size(); ++i) {
      const auto [q, j] = ext.origin[i];
      const int id = own[q][j];
      if ((id < 0) != static_cast<bool>(ext.dirichlet[i]))
        throw std::logic_error("global_numbering: copy and original disagree on the Dirichlet flag");
      num.ids[k][i] = id;
    }
  }
  return num;
}

/// Sum of A_k M_k A_k^T over patches for extended-size matrices M_k,
/// restricted to free dofs.
inline SparseMatrix assemble_global_matrix(const GlobalNumbering& num, const std::vector<SparseMatrix>& mats) {
  std::vector<Triplet> t;
  for (std::size_t k = 0; k < mats.size(); ++k) {
    const auto& ids = num.ids[k];
    for (int r = 0; r < mats[k].outerSize(); ++r) {
      if (ids[r] < 0) continue;
      for (SparseMatrix::InnerIterator it(mats[k], r); it; ++it)
        if (ids[it.col()] >= 0) t.emplace_back(ids[r], ids[it.col()], it.value());
    }
  }
  return from_triplets(num.n, num.n, t);
}

/// K-hat_e u = f-hat_e with Dirichlet values eliminated.
struct GlobalSystem {
  GlobalNumbering numbering;
  SparseMatrix K;
  Vector f;
  std::vector<Vector> lift;  // per patch, extended size
};

inline GlobalSystem assemble_global_extended(const Discretization& disc, const ProblemData& data) {
  GlobalSystem g;
  g.numbering = global_numbering(disc);
  const int N = disc.patch_count();
  std::vector<SparseMatrix> Ke(N);
  g.f = Vector::Zero(g.numbering.n);
  for (int k = 0; k < N; ++k) {
    Ke[k] = assemble_patch_operator(disc, k);
    g.lift.push_back(dirichlet_lift(disc, k, data.g_D));
    const Vector r = assemble_patch_rhs(disc, k, data) - Ke[k] * g.lift[k];
    const auto& ids = g.numbering.ids[k];
    for (int i = 0; i < r.size(); ++i)
      if (ids[i] >= 0) g.f[ids[i]] += r[i];
  }
  g.K = assemble_global_matrix(g.numbering, Ke);
  return g;
}

inline Vector direct_reference_solve(const SparseMatrix& K, const Vector& f) {
  return Factorization(K, FactorKind::spd, "global extended system").solve(f);
}

/// Per-patch extended coefficient vectors of a global free-dof vector.
inline std::vector<Vector> distribute(const GlobalSystem& g, const Vector& u) {
  std::vector<Vector> out;
  for (std::size_t k = 0; k < g.lift.size(); ++k) {
    Vector e = g.lift[k];
    const auto& ids = g.numbering.ids[k];
    for (int i = 0; i < e.size(); ++i)
      if (ids[i] >= 0) e[i] = u[ids[i]];
    out.push_back(e);
  }
  return out;
}

/// Global free-dof vector from per-patch own coefficients.
inline Vector gather_own(const Discretization& disc, const GlobalNumbering& num, const std::vector<Vector>& own) {
  Vector u = Vector::Zero(num.n);
  for (int k = 0; k < disc.patch_count(); ++k)
    for (int i = 0; i < disc.spaces[k].n_own; ++i)
      if (num.ids[k][i] >= 0) u[num.ids[k][i]] = own[k][i];
  return u;
}

/// max |u(own) - u(copy)| over all jump rows for per-patch extended vectors.
inline double jump_defect(const Discretization& disc, const std::vector<Vector>& extended) {
  double m = 0.0;
  for (const auto& r : build_jump_rows(disc))
    m = std::max(m, std::abs(extended[r.own.patch][r.own.ext] - extended[r.copy.patch][r.copy.ext]));
  return m;
}

/// Coefficients of the tensor Greville interpolant of u on patch k.
inline Vector interpolate_function(const Patch& P, const std::function<double(const Point2&)>& u) {
  const KnotVector& ku = P.basis.direction(0);
  const KnotVector& kv = P.basis.direction(1);
  const auto gu = greville_points(ku), gv = greville_points(kv);
  auto collocation = [](const KnotVector& kv, const std::vector<double>& g) {
    DenseMatrix A = DenseMatrix::Zero(kv.size(), kv.size());
    for (int i = 0; i < kv.size(); ++i) {
      const auto b = eval_basis(kv, g[i]);
      for (int a = 0; a <= kv.degree(); ++a) A(i, b.first + a) = b.values[a];
    }
    return A;
  };
  DenseMatrix V(ku.size(), kv.size());
  for (int j = 0; j < kv.size(); ++j)
    for (int i = 0; i < ku.size(); ++i) V(i, j) = u(map_point(P, {gu[i], gv[j]}).x);
  // V = Cu X Cv^T
  const DenseMatrix Cu = collocation(ku, gu), Cv = collocation(kv, gv);
  const DenseMatrix Y = Cu.partialPivLu().solve(V);
  const DenseMatrix X = Cv.partialPivLu().solve(DenseMatrix(Y.transpose())).transpose();
  Vector c(P.basis.size());
  for (int j = 0; j < kv.size(); ++j)
    for (int i = 0; i < ku.size(); ++i) c[P.basis.index(i, j)] = X(i, j);
  return c;
}

// ---------------------------------------------------------------------------
// harmonic extensions

struct HarmonicReport {
  int samples = 0;
  int violations = 0;        // samples with d(Hu) > d(H_e u) beyond roundoff
  double max_ratio = 0.0;    // max d(H_e u) / d(H u)
  double min_ratio = 0.0;
  double max_energy = 0.0;   // largest d(H_e u) seen
};

/// Compares the a_e-harmonic extension H_e and the volume-harmonic extension H
/// of random B_e data in the d^(k) energy.
inline HarmonicReport check_harmonic_equivalence(const Discretization& disc, int k, int samples, unsigned seed) {
  const ExtendedSpace& ext = disc.spaces[k];
  const PatchMatrices M = assemble_patch_matrices(disc, k);
  const auto dofs = ext.free_dofs();
  const int nI = static_cast<int>(ext.interior.size());
  const int nB = static_cast<int>(ext.boundary.size());
  const SparseMatrix K = submatrix(M.operator_matrix(), dofs, dofs);
  const SparseMatrix A = submatrix(M.volume, dofs, dofs);
  const SparseMatrix D = submatrix(M.dg_norm(), dofs, dofs);
  std::vector<int> I(nI), B(nB);
  std::iota(I.begin(), I.end(), 0);
  std::iota(B.begin(), B.end(), nI);
  const Factorization KII(submatrix(K, I, I), FactorKind::spd, "K_II");
  const Factorization AII(submatrix(A, I, I), FactorKind::spd, "volume block A_II");
  const SparseMatrix KIB = submatrix(K, I, B), AIB = submatrix(A, I, B);

  HarmonicReport rep;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss;
  for (int s = 0; s < samples; ++s) {
    Vector uB(nB);
    for (int i = 0; i < nB; ++i) uB[i] = gauss(rng);
    Vector he(nI + nB), h(nI + nB);
    he << KII.solve(Vector(-(KIB * uB))), uB;
    h << AII.solve(Vector(-(AIB * uB))), uB;
    const double de = he.dot(D * he), dh = h.dot(D * h);
    ++rep.samples;
    if (dh > de * (1.0 + 1e-12) + 1e-14) ++rep.violations;
    if (dh > 0.0) {
      rep.max_ratio = std::max(rep.max_ratio, de / dh);
      rep.min_ratio = std::min(rep.min_ratio, de / dh);
    }
    rep.max_energy = std::max(rep.max_energy, de);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// manufactured solutions and convergence

struct ManufacturedSolution {
  std::function<double(const Point2&)> u;
  std::function<Point2(const Point2&)> grad;
  std::function<double(const Point2&)> laplacian;
};

/// sin(pi x) sin(pi y)
inline ManufacturedSolution sine_solution() {
  constexpr double pi = std::numbers::pi;
  return {[](const Point2& x) { return std::sin(pi * x[0]) * std::sin(pi * x[1]); },
          [](const Point2& x) {
            return Point2{pi * std::cos(pi * x[0]) * std::sin(pi * x[1]), pi * std::sin(pi * x[0]) * std::cos(pi * x[1])};
          },
          [](const Point2& x) { return -2.0 * pi * pi * std::sin(pi * x[0]) * std::sin(pi * x[1]); }};
}

/// Data for -div(alpha grad u) = f with u on Dirichlet sides and alpha du/dn on
/// Neumann sides; alpha is per patch.
inline ProblemData manufactured_data(const ManufacturedSolution& s, const CoefficientField& alpha) {
  for (double a : alpha.alpha)
    if (a != alpha[0]) throw std::invalid_argument("manufactured_data: the source assumes one coefficient on all patches");
  const double a = alpha[0];
  ProblemData d;
  d.f = [s, a](const Point2& x) { return -a * s.laplacian(x); };
  d.g_D = s.u;
  d.g_N = [s, alpha](int k, const Point2& x, const Point2& n) {
    const Point2 g = s.grad(x);
    return alpha[k] * (g[0] * n[0] + g[1] * n[1]);
  };
  return d;
}

/// ||u - u_h||_dG for per-patch extended coefficients of u_h. For a continuous
/// exact solution the interface jumps of the error are those of u_h.
inline double dg_error(const Discretization& disc, const std::vector<Vector>& extended, const ManufacturedSolution& s) {
  double e2 = 0.0;
  for (int k = 0; k < disc.patch_count(); ++k) {
    const Patch& P = disc.mp.patches[k];
    const int nq = disc.quadrature_points(k) + 1;
    const Vector& c = extended[k];
    double vol = 0.0;
    for (const auto& cell : P.basis.cells()) {
      const auto q0 = gauss_legendre(nq, cell.lo[0], cell.hi[0]);
      const auto q1 = gauss_legendre(nq, cell.lo[1], cell.hi[1]);
      for (int j = 0; j < nq; ++j)
        for (int i = 0; i < nq; ++i) {
          const Point2 xi{q0.points[i], q1.points[j]};
          const auto ev = tensor_active(P.basis, xi);
          const auto m = map_point(P, xi);
          Point2 gh{0.0, 0.0};
          for (std::size_t a = 0; a < ev.indices.size(); ++a) {
            const auto g = physical_gradient(m.jac, ev.gradients[a]);
            gh[0] += c[ev.indices[a]] * g[0];
            gh[1] += c[ev.indices[a]] * g[1];
          }
          const Point2 ge = s.grad(m.x);
          const double dx = ge[0] - gh[0], dy = ge[1] - gh[1];
          vol += q0.weights[i] * q1.weights[j] * std::abs(det(m.jac)) * (dx * dx + dy * dy);
        }
    }
    e2 += disc.alpha[k] * vol;
    // 2 p^(k)(u_h, u_h), integrated pointwise to avoid cancellation in c^T P c
    const ExtendedSpace& ext = disc.spaces[k];
    detail::TraceEval own, nb;
    for (const Layer& L : ext.layers) {
      const double pen = disc.delta() * disc.alpha[k] / disc.h_interface(k, L.neighbor);
      const auto bps = interface_breakpoints(disc, ext, L);
      for (std::size_t t = 0; t + 1 < bps.size(); ++t) {
        const auto q = gauss_legendre(nq, bps[t], bps[t + 1]);
        for (int g = 0; g < nq; ++g) {
          Point2 x, nrm;
          double ds = 0.0;
          interface_traces(disc, ext, L, q.points[g], own, nb, x, nrm, ds);
          double jump = 0.0;
          for (std::size_t a = 0; a < nb.index.size(); ++a) jump += c[nb.index[a]] * nb.value[a];
          for (std::size_t a = 0; a < own.index.size(); ++a) jump -= c[own.index[a]] * own.value[a];
          e2 += pen * q.weights[g] * ds * jump * jump;
        }
      }
    }
  }
  return std::sqrt(std::max(e2, 0.0));
}

struct ConvergenceRow {
  int level = 0;
  double h = 0.0;
  int dofs = 0;
  double error = 0.0;
  double order = 0.0;  // log2(e_{L-1}/e_L); 0 on the first level
};

/// Direct-solve dG errors on a sequence of meshes produced by `mesh(level)`.
inline std::vector<ConvergenceRow> convergence_study(const std::function<MultiPatch(int)>& mesh,
                                                     const ManufacturedSolution& s, double alpha,
                                                     const std::vector<int>& levels, DiscretizationConfig cfg = {}) {
  std::vector<ConvergenceRow> rows;
  for (int L : levels) {
    MultiPatch mp = mesh(L);
    const int N = mp.size();
    const Discretization disc(std::move(mp), CoefficientField::constant(N, alpha), cfg);
    const ProblemData data = manufactured_data(s, disc.alpha);
    const GlobalSystem g = assemble_global_extended(disc, data);
    const Vector u = direct_reference_solve(g.K, g.f);
    ConvergenceRow row;
    row.level = L;
    row.h = *std::max_element(disc.h.begin(), disc.h.end());
    row.dofs = g.numbering.n;
    row.error = dg_error(disc, distribute(g, u), s);
    if (!rows.empty() && row.error > 0.0) row.order = std::log2(rows.back().error / row.error);
    rows.push_back(row);
  }
  return rows;
}

/// Largest relative difference between an IETI solution and the direct solve.
inline double ieti_vs_direct(const Discretization& disc, const ProblemData& data, const IetiSolution& sol) {
  const GlobalSystem g = assemble_global_extended(disc, data);
  const Vector ref = direct_reference_solve(g.K, g.f);
  const Vector u = gather_own(disc, g.numbering, sol.own);
  const double nr = ref.norm();
  return nr > 0.0 ? (u - ref).norm() / nr : u.norm();
}

}  // namespace dgieti
