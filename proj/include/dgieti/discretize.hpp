#pragma once

// Patch-local dG-IgA spaces with neighbor-trace layers, quadrature, SIP
// assembly and Dirichlet lifting.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgieti/bspline.hpp"
#include "dgieti/geometry.hpp"
#include "dgieti/linalg.hpp"

namespace dgieti {

struct QuadratureRule {
  std::vector<double> points;   // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule (Newton iteration on P_n).
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one point");
  QuadratureRule q;
  q.points.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute the derivative at the converged node
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    q.points[i] = -x;
    q.points[n - 1 - i] = x;
    q.weights[i] = q.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  if (n % 2 == 1) q.points[n / 2] = 0.0;
  return q;
}

/// Rule mapped to [a, b].
inline QuadratureRule gauss_legendre(int n, double a, double b) {
  QuadratureRule q = gauss_legendre(n);
  for (int i = 0; i < n; ++i) {
    q.points[i] = 0.5 * (a + b) + 0.5 * (b - a) * q.points[i];
    q.weights[i] *= 0.5 * (b - a);
  }
  return q;
}

inline double harmonic_average(double hk, double hl) {
  if (!(hk > 0.0) || !(hl > 0.0)) throw std::invalid_argument("harmonic_average: mesh sizes must be positive");
  return 2.0 * hk * hl / (hk + hl);
}

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physical gradients from parametric ones: grad = J^{-T} grad_hat.
inline std::array<double, 2> physical_gradient(const Mat2& J, const std::array<double, 2>& g) {
  const double d = det(J);
  return {(J[1][1] * g[0] - J[1][0] * g[1]) / d, (-J[0][1] * g[0] + J[0][0] * g[1]) / d};
}

/// Unit outward normal of side s at a point with Jacobian J.
inline Point2 outward_normal(const Mat2& J, Side s) {
  const int d = normal_direction(s);
  std::array<double, 2> e{0.0, 0.0};
  e[d] = outward_sign(s);
  // grad xi_d points toward increasing xi_d whatever the orientation of the map
  const auto n = physical_gradient(J, e);
  const double len = std::hypot(n[0], n[1]);
  return {n[0] / len, n[1] / len};
}

/// Length element |dx/dt| along side s.
inline double side_length_element(const Mat2& J, Side s) {
  const int t = tangent_direction(s);
  return std::hypot(J[0][t], J[1][t]);
}

// ---------------------------------------------------------------------------

/// Per-patch constant diffusion coefficients.
struct CoefficientField {
  std::vector<double> alpha;

  CoefficientField() = default;
  explicit CoefficientField(std::vector<double> a) : alpha(std::move(a)) {
    for (double v : alpha)
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("CoefficientField: coefficients must be positive");
  }
  static CoefficientField constant(int patches, double v) { return CoefficientField(std::vector<double>(patches, v)); }
  double operator[](int k) const { return alpha[k]; }
};

struct DiscretizationConfig {
  double delta = 0.0;  // 0 selects 2(p+1)(p+2)
  int extra_quadrature = 0;

  double penalty(int p) const {
    if (delta < 0.0) throw std::invalid_argument("DiscretizationConfig: penalty must be positive");
    return delta > 0.0 ? delta : 2.0 * (p + 1) * (p + 2);
  }
};

/// Copies of the neighbor dofs whose traces are nonzero on one interface.
struct Layer {
  int neighbor = 0;
  int interface = 0;
  Side own_side = Side::west, neighbor_side = Side::west;
  bool reversed = false;
  std::vector<int> dofs;  // neighbor flat indices, neighbor tangential order
  int offset = 0;         // extended index of dofs[0]
};

/// Extended space of patch k: own dofs [0, n_own) followed by the layers.
struct ExtendedSpace {
  int patch = 0;
  int n_own = 0;
  std::vector<Layer> layers;
  std::vector<bool> dirichlet;  // per extended index
  std::vector<int> interior;    // I: free own dofs with zero trace on all interfaces
  std::vector<int> boundary;    // B_e: free own interface dofs, then free layer dofs
  /// owner patch and owner flat index of every extended dof
  std::vector<std::array<int, 2>> origin;

  int size() const { return static_cast<int>(origin.size()); }
  /// Free dofs in local system order: interior first, then B_e.
  std::vector<int> free_dofs() const {
    std::vector<int> out = interior;
    out.insert(out.end(), boundary.begin(), boundary.end());
    return out;
  }
  /// Extended index of neighbor dof `flat` in the layer for interface `iface`, or -1.
  int layer_index(int iface, int flat) const {
    for (const auto& L : layers)
      if (L.interface == iface) {
        const auto it = std::find(L.dofs.begin(), L.dofs.end(), flat);
        return it == L.dofs.end() ? -1 : L.offset + static_cast<int>(it - L.dofs.begin());
      }
    return -1;
  }
};

/// Own dofs of patch k with nonzero trace on a Dirichlet side.
inline std::vector<bool> dirichlet_own_dofs(const MultiPatch& mp, int k) {
  std::vector<bool> out(mp.patches[k].basis.size(), false);
  for (Side s : all_sides)
    if (mp.topology.is_dirichlet(k, s))
      for (int i : side_dofs(mp.patches[k].basis, s)) out[i] = true;
  return out;
}

inline ExtendedSpace build_extended_space(const MultiPatch& mp, int k) {
  ExtendedSpace ext;
  ext.patch = k;
  const Patch& P = mp.patches[k];
  ext.n_own = P.basis.size();
  for (int i = 0; i < ext.n_own; ++i) ext.origin.push_back({k, i});
  const auto own_dir = dirichlet_own_dofs(mp, k);
  ext.dirichlet.assign(own_dir.begin(), own_dir.end());

  struct Entry {
    int neighbor, iface;
  };
  std::vector<Entry> order;
  for (int f : mp.topology.interfaces_of(k)) {
    const auto& F = mp.topology.interfaces[f];
    order.push_back({F.k == k ? F.l : F.k, f});
  }
  std::sort(order.begin(), order.end(),
            [](const Entry& a, const Entry& b) { return a.neighbor != b.neighbor ? a.neighbor < b.neighbor : a.iface < b.iface; });

  std::vector<bool> on_interface(ext.n_own, false);
  for (const auto& e : order) {
    const auto& F = mp.topology.interfaces[e.iface];
    Layer L;
    L.neighbor = e.neighbor;
    L.interface = e.iface;
    L.own_side = F.k == k ? F.side_k : F.side_l;
    L.neighbor_side = F.k == k ? F.side_l : F.side_k;
    L.reversed = F.reversed;
    L.dofs = side_dofs(mp.patches[e.neighbor].basis, L.neighbor_side);
    L.offset = ext.size();
    const auto nb_dir = dirichlet_own_dofs(mp, e.neighbor);
    for (int j : L.dofs) {
      ext.origin.push_back({e.neighbor, j});
      ext.dirichlet.push_back(nb_dir[j]);
    }
    for (int i : side_dofs(P.basis, L.own_side)) on_interface[i] = true;
    ext.layers.push_back(std::move(L));
  }
  for (int i = 0; i < ext.n_own; ++i) {
    if (ext.dirichlet[i]) continue;
    (on_interface[i] ? ext.boundary : ext.interior).push_back(i);
  }
  for (int i = ext.n_own; i < ext.size(); ++i)
    if (!ext.dirichlet[i]) ext.boundary.push_back(i);
  return ext;
}

/// Source f, Dirichlet data g_D and Neumann data g_N(patch, x, outward normal).
struct ProblemData {
  std::function<double(const Point2&)> f = [](const Point2&) { return 0.0; };
  std::function<double(const Point2&)> g_D = [](const Point2&) { return 0.0; };
  std::function<double(int, const Point2&, const Point2&)> g_N = [](int, const Point2&, const Point2&) { return 0.0; };
};

/// Whole multipatch discretization: geometry, coefficients, penalty, spaces.
struct Discretization {
  MultiPatch mp;
  CoefficientField alpha;
  DiscretizationConfig config;
  std::vector<double> h;  // h^(k)
  std::vector<double> H;  // H^(k)
  std::vector<ExtendedSpace> spaces;

  Discretization(MultiPatch m, CoefficientField a, DiscretizationConfig c = {})
      : mp(std::move(m)), alpha(std::move(a)), config(c) {
    if (static_cast<int>(alpha.alpha.size()) != mp.size())
      throw std::invalid_argument("Discretization: one coefficient per patch required");
    for (int k = 0; k < mp.size(); ++k) {
      h.push_back(mesh_size(mp.patches[k]));
      H.push_back(patch_diameter(mp.patches[k]));
      spaces.push_back(build_extended_space(mp, k));
    }
  }

  int patch_count() const { return mp.size(); }
  int max_degree() const {
    int p = 1;
    for (const auto& P : mp.patches) p = std::max({p, P.basis.direction(0).degree(), P.basis.direction(1).degree()});
    return p;
  }
  double delta() const { return config.penalty(max_degree()); }
  double h_interface(int k, int l) const { return harmonic_average(h[k], h[l]); }
  int quadrature_points(int k) const {
    const auto& b = mp.patches[k].basis;
    return std::max(b.direction(0).degree(), b.direction(1).degree()) + 1 + config.extra_quadrature;
  }
  /// max over patches of H^(k)/h^(k)
  double H_over_h() const {
    double r = 0.0;
    for (int k = 0; k < patch_count(); ++k) r = std::max(r, H[k] / h[k]);
    return r;
  }
  /// Number of own (non-duplicated) free dofs over all patches.
  int global_free_dofs() const {
    int n = 0;
    for (const auto& s : spaces)
      for (int i = 0; i < s.n_own; ++i) n += !s.dirichlet[i];
    return n;
  }
};

namespace detail {

/// Univariate basis values/derivatives at the Gauss points of every span.
struct SpanTable {
  std::vector<double> x, w;           // parameter points and weights per span
  std::vector<int> first;             // first active function per point
  std::vector<std::vector<double>> v, d;  // values and derivatives per point
};

inline SpanTable tabulate(const KnotVector& kv, double a, double b, int nq) {
  SpanTable t;
  const auto q = gauss_legendre(nq, a, b);
  for (int i = 0; i < nq; ++i) {
    const auto bd = eval_basis_derivs(kv, q.points[i], 1);
    t.x.push_back(q.points[i]);
    t.w.push_back(q.weights[i]);
    t.first.push_back(bd.first);
    t.v.push_back(bd.ders[0]);
    t.d.push_back(bd.ders[1]);
  }
  return t;
}

struct TraceEval {
  std::vector<int> index;     // extended indices
  std::vector<double> value;
  std::vector<double> dn;     // normal derivative (own side only)
};

}  // namespace detail

/// The three bilinear forms of a_e^(k) plus the dG-norm, over extended dofs.
struct PatchMatrices {
  SparseMatrix volume;       // a^(k)
  SparseMatrix consistency;  // s^(k)
  SparseMatrix penalty;      // p^(k)

  SparseMatrix operator_matrix() const { return volume + consistency + penalty; }
  /// d^(k) = a^(k) + 2 p^(k): summed over patches this is ||.||_dG^2.
  SparseMatrix dg_norm() const { return volume + 2.0 * penalty; }
};

/// Own-side and neighbor-side traces at parameter t of interface layer L.
inline void interface_traces(const Discretization& disc, const ExtendedSpace& ext, const Layer& L, double t,
                             detail::TraceEval& own, detail::TraceEval& nb, Point2& x, Point2& n, double& ds) {
  const int k = ext.patch;
  const Patch& P = disc.mp.patches[k];
  const Point2 xi = side_point(L.own_side, t);
  const auto ev = tensor_active(P.basis, xi);
  MappedPoint m{{0, 0}, {{{0, 0}, {0, 0}}}};
  for (std::size_t a = 0; a < ev.indices.size(); ++a) {
    const Point2& C = P.control_points[ev.indices[a]];
    for (int r = 0; r < 2; ++r) {
      m.x[r] += C[r] * ev.values[a];
      m.jac[r][0] += C[r] * ev.gradients[a][0];
      m.jac[r][1] += C[r] * ev.gradients[a][1];
    }
  }
  if (!(std::abs(det(m.jac)) > 0.0)) {
    std::ostringstream os;
    os << "degenerate Jacobian on patch " << k << " at parameter (" << xi[0] << ", " << xi[1] << ")";
    throw GeometryError(os.str());
  }
  x = m.x;
  n = outward_normal(m.jac, L.own_side);
  ds = side_length_element(m.jac, L.own_side);
  own.index.clear(), own.value.clear(), own.dn.clear();
  for (std::size_t a = 0; a < ev.indices.size(); ++a) {
    const auto g = physical_gradient(m.jac, ev.gradients[a]);
    own.index.push_back(ev.indices[a]);
    own.value.push_back(ev.values[a]);
    own.dn.push_back(g[0] * n[0] + g[1] * n[1]);
  }
  const Patch& Q = disc.mp.patches[L.neighbor];
  const double tl = L.reversed ? 1.0 - t : t;
  const Point2 xl = side_point(L.neighbor_side, tl);
  const auto bu = eval_basis(Q.basis.direction(0), xl[0]);
  const auto bv = eval_basis(Q.basis.direction(1), xl[1]);
  nb.index.clear(), nb.value.clear(), nb.dn.clear();
  for (std::size_t b = 0; b < bv.values.size(); ++b)
    for (std::size_t a = 0; a < bu.values.size(); ++a) {
      const double v = bu.values[a] * bv.values[b];
      if (v == 0.0) continue;
      const int flat = Q.basis.index(bu.first + static_cast<int>(a), bv.first + static_cast<int>(b));
      const auto it = std::find(L.dofs.begin(), L.dofs.end(), flat);
      if (it == L.dofs.end()) throw std::logic_error("interface_traces: neighbor function outside the layer");
      nb.index.push_back(L.offset + static_cast<int>(it - L.dofs.begin()));
      nb.value.push_back(v);
    }
}

/// Sub-segments of an interface in k's tangential parameter: union of both
/// sides' breakpoints.
inline std::vector<double> interface_breakpoints(const Discretization& disc, const ExtendedSpace& ext, const Layer& L) {
  std::vector<double> b = disc.mp.patches[ext.patch].basis.direction(tangent_direction(L.own_side)).breakpoints();
  for (double t : disc.mp.patches[L.neighbor].basis.direction(tangent_direction(L.neighbor_side)).breakpoints())
    b.push_back(L.reversed ? 1.0 - t : t);
  std::sort(b.begin(), b.end());
  std::vector<double> out;
  for (double t : b)
    if (out.empty() || t - out.back() > 1e-14) out.push_back(t);
  out.back() = 1.0;
  return out;
}

inline PatchMatrices assemble_patch_matrices(const Discretization& disc, int k) {
  const ExtendedSpace& ext = disc.spaces[k];
  const Patch& P = disc.mp.patches[k];
  const double a_k = disc.alpha[k];
  const int nq = disc.quadrature_points(k);
  const int n = ext.size();
  std::vector<Triplet> tv, ts, tp;

  // volume term
  const auto b0 = P.basis.direction(0).breakpoints();
  const auto b1 = P.basis.direction(1).breakpoints();
  std::vector<detail::SpanTable> t0, t1;
  for (std::size_t i = 0; i + 1 < b0.size(); ++i) t0.push_back(detail::tabulate(P.basis.direction(0), b0[i], b0[i + 1], nq));
  for (std::size_t j = 0; j + 1 < b1.size(); ++j) t1.push_back(detail::tabulate(P.basis.direction(1), b1[j], b1[j + 1], nq));
  const int p0 = P.basis.direction(0).degree(), p1 = P.basis.direction(1).degree();
  const int nloc = (p0 + 1) * (p1 + 1);
  std::vector<int> idx(nloc);
  std::vector<std::array<double, 2>> grad(nloc), pgrad(nloc);
  std::vector<double> local(nloc * nloc);
  for (const auto& T1 : t1)
    for (const auto& T0 : t0) {
      std::fill(local.begin(), local.end(), 0.0);
      for (int qj = 0; qj < nq; ++qj)
        for (int qi = 0; qi < nq; ++qi) {
          int c = 0;
          Mat2 J{{{0, 0}, {0, 0}}};
          for (int b = 0; b <= p1; ++b)
            for (int a = 0; a <= p0; ++a, ++c) {
              idx[c] = P.basis.index(T0.first[qi] + a, T1.first[qj] + b);
              grad[c] = {T0.d[qi][a] * T1.v[qj][b], T0.v[qi][a] * T1.d[qj][b]};
              const Point2& C = P.control_points[idx[c]];
              for (int r = 0; r < 2; ++r) {
                J[r][0] += C[r] * grad[c][0];
                J[r][1] += C[r] * grad[c][1];
              }
            }
          const double dJ = det(J);
          const double scale = std::abs(J[0][0]) + std::abs(J[0][1]) + std::abs(J[1][0]) + std::abs(J[1][1]);
          if (!(std::abs(dJ) > 1e-14 * scale * scale)) {
            std::ostringstream os;
            os << "degenerate Jacobian on patch " << k << " at parameter (" << T0.x[qi] << ", " << T1.x[qj] << ")";
            throw GeometryError(os.str());
          }
          const double w = T0.w[qi] * T1.w[qj] * std::abs(dJ) * a_k;
          for (int c2 = 0; c2 < nloc; ++c2) pgrad[c2] = physical_gradient(J, grad[c2]);
          for (int r = 0; r < nloc; ++r)
            for (int s = 0; s < nloc; ++s)
              local[r * nloc + s] += w * (pgrad[r][0] * pgrad[s][0] + pgrad[r][1] * pgrad[s][1]);
        }
      for (int r = 0; r < nloc; ++r)
        for (int s = 0; s < nloc; ++s) tv.emplace_back(idx[r], idx[s], local[r * nloc + s]);
    }

  // interface terms
  detail::TraceEval own, nb;
  for (const Layer& L : ext.layers) {
    const double pen = disc.delta() * a_k / (2.0 * disc.h_interface(k, L.neighbor));
    const auto bps = interface_breakpoints(disc, ext, L);
    for (std::size_t s = 0; s + 1 < bps.size(); ++s) {
      const auto q = gauss_legendre(nq, bps[s], bps[s + 1]);
      for (int g = 0; g < nq; ++g) {
        Point2 x, nrm;
        double ds = 0.0;
        interface_traces(disc, ext, L, q.points[g], own, nb, x, nrm, ds);
        const double w = q.weights[g] * ds;
        // jump (u_l - u_k): +values on the layer, -values on own
        std::vector<int> ji = nb.index;
        std::vector<double> jv = nb.value;
        for (std::size_t a = 0; a < own.index.size(); ++a) {
          ji.push_back(own.index[a]);
          jv.push_back(-own.value[a]);
        }
        for (std::size_t r = 0; r < ji.size(); ++r)
          for (std::size_t c = 0; c < ji.size(); ++c) tp.emplace_back(ji[r], ji[c], w * pen * jv[r] * jv[c]);
        // alpha/2 (dn u_k (v_l - v_k) + dn v_k (u_l - u_k))
        for (std::size_t a = 0; a < own.index.size(); ++a)
          for (std::size_t c = 0; c < ji.size(); ++c) {
            const double v = w * 0.5 * a_k * own.dn[a] * jv[c];
            ts.emplace_back(ji[c], own.index[a], v);
            ts.emplace_back(own.index[a], ji[c], v);
          }
      }
    }
  }
  return {from_triplets(n, n, tv), from_triplets(n, n, ts), from_triplets(n, n, tp)};
}

inline SparseMatrix assemble_patch_operator(const Discretization& disc, int k) {
  return assemble_patch_matrices(disc, k).operator_matrix();
}

inline SparseMatrix assemble_dg_norm(const Discretization& disc, int k) {
  return assemble_patch_matrices(disc, k).dg_norm();
}

/// f_e^(k): volume source on own dofs plus Neumann contributions; layer
/// entries stay zero.
inline Vector assemble_patch_rhs(const Discretization& disc, int k, const ProblemData& data) {
  const ExtendedSpace& ext = disc.spaces[k];
  const Patch& P = disc.mp.patches[k];
  const int nq = disc.quadrature_points(k);
  Vector f = Vector::Zero(ext.size());
  for (const auto& cell : P.basis.cells()) {
    const auto q0 = gauss_legendre(nq, cell.lo[0], cell.hi[0]);
    const auto q1 = gauss_legendre(nq, cell.lo[1], cell.hi[1]);
    for (int j = 0; j < nq; ++j)
      for (int i = 0; i < nq; ++i) {
        const Point2 xi{q0.points[i], q1.points[j]};
        const auto ev = tensor_active(P.basis, xi);
        const auto m = map_point(P, xi);
        const double w = q0.weights[i] * q1.weights[j] * std::abs(det(m.jac)) * data.f(m.x);
        if (w == 0.0) continue;
        for (std::size_t a = 0; a < ev.indices.size(); ++a) f[ev.indices[a]] += w * ev.values[a];
      }
  }
  for (Side s : all_sides) {
    const auto* b = disc.mp.topology.boundary_side(k, s);
    if (b == nullptr || b->tag != BoundaryTag::neumann) continue;
    const auto bps = P.basis.direction(tangent_direction(s)).breakpoints();
    for (std::size_t c = 0; c + 1 < bps.size(); ++c) {
      const auto q = gauss_legendre(nq, bps[c], bps[c + 1]);
      for (int g = 0; g < nq; ++g) {
        const Point2 xi = side_point(s, q.points[g]);
        const auto ev = tensor_active(P.basis, xi);
        const auto m = map_point(P, xi);
        const double w = q.weights[g] * side_length_element(m.jac, s) * data.g_N(k, m.x, outward_normal(m.jac, s));
        if (w == 0.0) continue;
        for (std::size_t a = 0; a < ev.indices.size(); ++a) f[ev.indices[a]] += w * ev.values[a];
      }
    }
  }
  return f;
}

/// Coefficients of the own dofs of patch k on Dirichlet sides, from Greville
/// interpolation of g_D along each side (zero elsewhere).
inline Vector dirichlet_lift_own(const MultiPatch& mp, int k, const std::function<double(const Point2&)>& g_D) {
  const Patch& P = mp.patches[k];
  Vector lift = Vector::Zero(P.basis.size());
  for (Side s : all_sides) {
    if (!mp.topology.is_dirichlet(k, s)) continue;
    const KnotVector& kv = P.basis.direction(tangent_direction(s));
    const auto g = greville_points(kv);
    const int n = kv.size();
    DenseMatrix A = DenseMatrix::Zero(n, n);
    Vector rhs(n);
    for (int i = 0; i < n; ++i) {
      const auto b = eval_basis(kv, g[i]);
      for (int a = 0; a <= kv.degree(); ++a) A(i, b.first + a) = b.values[a];
      rhs[i] = g_D(map_point(P, side_point(s, g[i])).x);
    }
    const Vector c = A.partialPivLu().solve(rhs);
    const auto dofs = side_dofs(P.basis, s);
    for (int i = 0; i < n; ++i) lift[dofs[i]] = c[i];
  }
  return lift;
}

/// Lift over extended dofs: own Dirichlet values plus copies of the neighbors'.
inline Vector dirichlet_lift(const Discretization& disc, int k, const std::function<double(const Point2&)>& g_D) {
  const ExtendedSpace& ext = disc.spaces[k];
  Vector lift = Vector::Zero(ext.size());
  std::vector<Vector> own(disc.patch_count());
  own[k] = dirichlet_lift_own(disc.mp, k, g_D);
  for (const auto& L : ext.layers)
    if (own[L.neighbor].size() == 0) own[L.neighbor] = dirichlet_lift_own(disc.mp, L.neighbor, g_D);
  for (int i = 0; i < ext.size(); ++i) {
    if (!ext.dirichlet[i]) continue;
    lift[i] = own[ext.origin[i][0]][ext.origin[i][1]];
  }
  return lift;
}

/// Dirichlet-reduced local system in [I, B_e] order.
struct LocalSystem {
  SparseMatrix K;           // free x free
  Vector f;                 // homogenized right side
  std::vector<int> dofs;    // extended index of each local row
  int n_interior = 0;
  Vector lift;              // extended-size Dirichlet lift
  int n_boundary() const { return static_cast<int>(dofs.size()) - n_interior; }
};

inline SparseMatrix submatrix(const SparseMatrix& A, const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<int> cmap(A.cols(), -1);
  for (std::size_t j = 0; j < cols.size(); ++j) cmap[cols[j]] = static_cast<int>(j);
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (SparseMatrix::InnerIterator it(A, rows[i]); it; ++it)
      if (cmap[it.col()] >= 0) t.emplace_back(static_cast<int>(i), cmap[it.col()], it.value());
  return from_triplets(static_cast<int>(rows.size()), static_cast<int>(cols.size()), t);
}

inline LocalSystem reduce_local_system(const ExtendedSpace& ext, const SparseMatrix& Ke, const Vector& fe, const Vector& lift) {
  LocalSystem sys;
  sys.dofs = ext.free_dofs();
  sys.n_interior = static_cast<int>(ext.interior.size());
  sys.K = submatrix(Ke, sys.dofs, sys.dofs);
  const Vector r = fe - Ke * lift;
  sys.f.resize(sys.dofs.size());
  for (std::size_t i = 0; i < sys.dofs.size(); ++i) sys.f[i] = r[sys.dofs[i]];
  sys.lift = lift;
  return sys;
}

}  // namespace dgieti
