#pragma once

// Patch geometry maps, multipatch generators and interface/vertex topology.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dgieti/bspline.hpp"

namespace dgieti {

using Point2 = std::array<double, 2>;
/// jac[r][c] = d x_r / d xi_c
using Mat2 = std::array<std::array<double, 2>, 2>;

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

inline double det(const Mat2& m) { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }

/// Tensor B-spline basis plus one control point per basis function.
struct Patch {
  TensorBasis basis;
  std::vector<Point2> control_points;

  Patch() = default;
  Patch(TensorBasis b, std::vector<Point2> cps) : basis(std::move(b)), control_points(std::move(cps)) {
    if (static_cast<int>(control_points.size()) != basis.size())
      throw std::invalid_argument("Patch: control net size does not match the basis");
  }
};

struct MappedPoint {
  Point2 x;
  Mat2 jac;
};

inline MappedPoint map_point(const Patch& patch, Point2 xi) {
  const auto ev = tensor_active(patch.basis, xi);
  MappedPoint out{{0.0, 0.0}, {{{0.0, 0.0}, {0.0, 0.0}}}};
  for (std::size_t a = 0; a < ev.indices.size(); ++a) {
    const Point2& P = patch.control_points[ev.indices[a]];
    for (int r = 0; r < 2; ++r) {
      out.x[r] += P[r] * ev.values[a];
      out.jac[r][0] += P[r] * ev.gradients[a][0];
      out.jac[r][1] += P[r] * ev.gradients[a][1];
    }
  }
  return out;
}

/// Patch over the given knot vectors whose map is the bilinear interpolant of
/// `corners` (lower-left, lower-right, upper-left, upper-right). Greville
/// control points reproduce the bilinear map exactly.
inline Patch bilinear_patch(const std::array<Point2, 4>& corners, KnotVector u, KnotVector v) {
  // Jacobian determinant of a bilinear map is affine along each direction, so
  // checking it at the corners covers the whole square.
  const auto jac_at = [&](double s, double t) {
    Mat2 J;
    for (int r = 0; r < 2; ++r) {
      J[r][0] = (1 - t) * (corners[1][r] - corners[0][r]) + t * (corners[3][r] - corners[2][r]);
      J[r][1] = (1 - s) * (corners[2][r] - corners[0][r]) + s * (corners[3][r] - corners[1][r]);
    }
    return det(J);
  };
  const std::array<double, 4> dets{jac_at(0, 0), jac_at(1, 0), jac_at(0, 1), jac_at(1, 1)};
  double scale = 0.0;
  for (const auto& c : corners) scale = std::max({scale, std::abs(c[0]), std::abs(c[1])});
  scale = std::max(scale, 1.0);
  const bool positive = std::all_of(dets.begin(), dets.end(), [&](double d) { return d > 1e-12 * scale * scale; });
  const bool negative = std::all_of(dets.begin(), dets.end(), [&](double d) { return d < -1e-12 * scale * scale; });
  if (!positive && !negative)
    throw std::invalid_argument("bilinear_patch: degenerate or non-convex quadrilateral");

  const auto gu = greville_points(u);
  const auto gv = greville_points(v);
  TensorBasis basis(std::move(u), std::move(v));
  std::vector<Point2> cps(basis.size());
  for (int j = 0; j < basis.size(1); ++j)
    for (int i = 0; i < basis.size(0); ++i) {
      const double s = gu[i], t = gv[j];
      Point2& P = cps[basis.index(i, j)];
      for (int r = 0; r < 2; ++r)
        P[r] = (1 - s) * (1 - t) * corners[0][r] + s * (1 - t) * corners[1][r] +
               (1 - s) * t * corners[2][r] + s * t * corners[3][r];
    }
  return Patch(std::move(basis), std::move(cps));
}

inline Patch bilinear_patch(const std::array<Point2, 4>& corners, int p, int refinements) {
  const KnotVector kv = refine_uniform(make_knot_vector(p, {}, 1), refinements);
  return bilinear_patch(corners, kv, kv);
}

/// Re-expresses a patch on finer knot vectors by knot insertion; the map is unchanged.
inline Patch refine_patch(const Patch& patch, const KnotVector& u, const KnotVector& v) {
  const auto Tu = refinement_matrix(patch.basis.direction(0), u);
  const auto Tv = refinement_matrix(patch.basis.direction(1), v);
  TensorBasis fine(u, v);
  const int n0 = patch.basis.size(0), n1 = patch.basis.size(1);
  std::vector<Point2> tmp(static_cast<std::size_t>(u.size()) * n1, Point2{0.0, 0.0});
  for (int j = 0; j < n1; ++j)
    for (int i = 0; i < u.size(); ++i)
      for (int c = 0; c < n0; ++c) {
        const double w = Tu[i][c];
        if (w == 0.0) continue;
        for (int r = 0; r < 2; ++r) tmp[i + u.size() * j][r] += w * patch.control_points[patch.basis.index(c, j)][r];
      }
  std::vector<Point2> cps(fine.size(), Point2{0.0, 0.0});
  for (int j = 0; j < v.size(); ++j)
    for (int c = 0; c < n1; ++c) {
      const double w = Tv[j][c];
      if (w == 0.0) continue;
      for (int i = 0; i < u.size(); ++i)
        for (int r = 0; r < 2; ++r) cps[fine.index(i, j)][r] += w * tmp[i + u.size() * c][r];
    }
  return Patch(std::move(fine), std::move(cps));
}

inline Patch refine_patch(const Patch& patch, int times) {
  return refine_patch(patch, refine_uniform(patch.basis.direction(0), times),
                      refine_uniform(patch.basis.direction(1), times));
}

/// Patch whose control points interpolate `map` at the tensor Greville points.
inline Patch interpolate_patch(const std::function<Point2(Point2)>& map, KnotVector u, KnotVector v) {
  const auto collocation = [](const KnotVector& kv) {
    const auto g = greville_points(kv);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(kv.size(), kv.size());
    for (int i = 0; i < kv.size(); ++i) {
      const auto b = eval_basis(kv, g[i]);
      for (int a = 0; a <= kv.degree(); ++a) A(i, b.first + a) = b.values[a];
    }
    return A;
  };
  const Eigen::MatrixXd Au = collocation(u), Av = collocation(v);
  const auto gu = greville_points(u), gv = greville_points(v);
  TensorBasis basis(std::move(u), std::move(v));
  std::vector<Point2> cps(basis.size());
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu_u(Au), lu_v(Av);
  for (int r = 0; r < 2; ++r) {
    Eigen::MatrixXd X(gu.size(), gv.size());
    for (std::size_t i = 0; i < gu.size(); ++i)
      for (std::size_t j = 0; j < gv.size(); ++j) X(i, j) = map({gu[i], gv[j]})[r];
    // X = Au * P * Av^T
    const Eigen::MatrixXd Y = lu_u.solve(X);
    const Eigen::MatrixXd P = lu_v.solve(Y.transpose()).transpose();
    for (int j = 0; j < basis.size(1); ++j)
      for (int i = 0; i < basis.size(0); ++i) cps[basis.index(i, j)][r] = P(i, j);
  }
  return Patch(std::move(basis), std::move(cps));
}

// ---------------------------------------------------------------------------
// Sides and topology

enum class Side { west = 0, east = 1, south = 2, north = 3 };
enum class BoundaryTag { dirichlet, neumann };

inline constexpr std::array<Side, 4> all_sides{Side::west, Side::east, Side::south, Side::north};

inline const char* side_name(Side s) {
  switch (s) {
    case Side::west: return "west";
    case Side::east: return "east";
    case Side::south: return "south";
    case Side::north: return "north";
  }
  return "?";
}

inline Side parse_side(const std::string& s) {
  if (s == "west") return Side::west;
  if (s == "east") return Side::east;
  if (s == "south") return Side::south;
  if (s == "north") return Side::north;
  throw std::invalid_argument("unknown side '" + s + "'");
}

/// Parameter direction normal to the side (0 for west/east).
inline int normal_direction(Side s) { return (s == Side::west || s == Side::east) ? 0 : 1; }
inline int tangent_direction(Side s) { return 1 - normal_direction(s); }
/// +1 if the outward normal points toward increasing parameter.
inline int outward_sign(Side s) { return (s == Side::east || s == Side::north) ? 1 : -1; }

/// Parameter point on side s at tangential coordinate t.
inline Point2 side_point(Side s, double t) {
  switch (s) {
    case Side::west: return {0.0, t};
    case Side::east: return {1.0, t};
    case Side::south: return {t, 0.0};
    case Side::north: return {t, 1.0};
  }
  return {0.0, 0.0};
}

/// Flat indices of the basis functions with nonzero trace on side s, in
/// tangential order.
inline std::vector<int> side_dofs(const TensorBasis& basis, Side s) {
  std::vector<int> out;
  const int nt = basis.size(tangent_direction(s));
  const int fixed = outward_sign(s) > 0 ? basis.size(normal_direction(s)) - 1 : 0;
  for (int t = 0; t < nt; ++t)
    out.push_back(normal_direction(s) == 0 ? basis.index(fixed, t) : basis.index(t, fixed));
  return out;
}

inline Point2 patch_corner(const Patch& patch, double s, double t) { return map_point(patch, {s, t}).x; }

inline std::array<Point2, 2> side_endpoints(const Patch& patch, Side s) {
  return {map_point(patch, side_point(s, 0.0)).x, map_point(patch, side_point(s, 1.0)).x};
}

/// Shared edge F^(kl) = F^(lk) between patch k and patch l.
struct Interface {
  int k = 0, l = 0;
  Side side_k = Side::west, side_l = Side::west;
  bool reversed = false;  // tangential parameters run in opposite directions

  /// Tangential parameter on l's side for tangential parameter t on k's side.
  double map_to_l(double t) const { return reversed ? 1.0 - t : t; }
};

struct BoundarySide {
  int patch = 0;
  Side side = Side::west;
  BoundaryTag tag = BoundaryTag::neumann;
};

/// Vertex entry of V_e^(k): geometric position and the patch whose side it bounds.
struct VertexEntry {
  Point2 point;
  int owner = 0;
};

struct MultiPatchTopology {
  std::vector<Interface> interfaces;
  std::vector<BoundarySide> boundary;
  std::vector<std::vector<int>> neighbors;          // I_F^(k), ascending
  std::vector<std::vector<Point2>> vertices;        // V^(k)
  std::vector<std::vector<VertexEntry>> extended_vertices;  // V_e^(k)

  int patch_count() const { return static_cast<int>(neighbors.size()); }

  std::vector<int> interfaces_of(int k) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(interfaces.size()); ++i)
      if (interfaces[i].k == k || interfaces[i].l == k) out.push_back(i);
    return out;
  }

  const BoundarySide* boundary_side(int patch, Side s) const {
    for (const auto& b : boundary)
      if (b.patch == patch && b.side == s) return &b;
    return nullptr;
  }

  bool is_dirichlet(int patch, Side s) const {
    const auto* b = boundary_side(patch, s);
    return b != nullptr && b->tag == BoundaryTag::dirichlet;
  }
};

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double curve_distance(const Patch& patch, Side s, const Point2& x) {
  // coarse sampling followed by golden-section refinement of the nearest bracket
  constexpr int samples = 256;
  const auto dist = [&](double t) { return distance(map_point(patch, side_point(s, t)).x, x); };
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= samples; ++i) {
    const double d = dist(static_cast<double>(i) / samples);
    if (d < best_d) best_d = d, best = i;
  }
  double a = std::max(0, best - 1) / static_cast<double>(samples);
  double b = std::min(samples, best + 1) / static_cast<double>(samples);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 60; ++it) {
    const double c = b - gr * (b - a), d = a + gr * (b - a);
    if (dist(c) < dist(d))
      b = d;
    else
      a = c;
  }
  return std::min(best_d, dist(0.5 * (a + b)));
}

inline double domain_diameter(std::span<const Patch> patches) {
  double lo0 = std::numeric_limits<double>::infinity(), lo1 = lo0, hi0 = -lo0, hi1 = -lo0;
  for (const auto& p : patches)
    for (const auto& c : p.control_points) {
      lo0 = std::min(lo0, c[0]), hi0 = std::max(hi0, c[0]);
      lo1 = std::min(lo1, c[1]), hi1 = std::max(hi1, c[1]);
    }
  return std::hypot(hi0 - lo0, hi1 - lo1);
}

}  // namespace detail

/// Detects interfaces between geometrically matching patch sides, tags the
/// remaining sides (Neumann unless listed in `dirichlet_sides`) and builds the
/// vertex sets. A negative tol selects 1e-10 times the domain diameter.
inline MultiPatchTopology build_topology(std::span<const Patch> patches, double tol = -1.0,
                                         std::span<const BoundarySide> tagged = {}) {
  const int N = static_cast<int>(patches.size());
  if (tol < 0.0) tol = 1e-10 * std::max(detail::domain_diameter(patches), 1e-300);
  MultiPatchTopology topo;
  topo.neighbors.resize(N);
  topo.vertices.resize(N);
  topo.extended_vertices.resize(N);

  std::vector<std::array<std::array<Point2, 2>, 4>> ends(N);
  for (int k = 0; k < N; ++k)
    for (Side s : all_sides) ends[k][static_cast<int>(s)] = side_endpoints(patches[k], s);

  std::vector<std::array<int, 4>> partner(N, {-1, -1, -1, -1});
  for (int k = 0; k < N; ++k)
    for (Side sk : all_sides)
      for (int l = k; l < N; ++l)
        for (Side sl : all_sides) {
          if (l == k && static_cast<int>(sl) <= static_cast<int>(sk)) continue;
          const auto& A = ends[k][static_cast<int>(sk)];
          const auto& B = ends[l][static_cast<int>(sl)];
          const bool same = distance(A[0], B[0]) <= tol && distance(A[1], B[1]) <= tol;
          const bool rev = distance(A[0], B[1]) <= tol && distance(A[1], B[0]) <= tol;
          if (same || rev) {
            // endpoints coincide: the whole side must coincide parametrically
            for (int i = 1; i < 16; ++i) {
              const double t = i / 16.0;
              const Point2 xa = map_point(patches[k], side_point(sk, t)).x;
              const Point2 xb = map_point(patches[l], side_point(sl, rev ? 1.0 - t : t)).x;
              if (distance(xa, xb) > 1e3 * tol) {
                std::ostringstream os;
                os << "build_topology: sides " << k << ":" << side_name(sk) << " and " << l << ":"
                   << side_name(sl) << " share endpoints but do not match";
                throw TopologyError(os.str());
              }
            }
            if (partner[k][static_cast<int>(sk)] >= 0 || partner[l][static_cast<int>(sl)] >= 0) {
              std::ostringstream os;
              os << "build_topology: ambiguous matching for side " << k << ":" << side_name(sk);
              throw TopologyError(os.str());
            }
            partner[k][static_cast<int>(sk)] = static_cast<int>(topo.interfaces.size());
            partner[l][static_cast<int>(sl)] = static_cast<int>(topo.interfaces.size());
            topo.interfaces.push_back({k, l, sk, sl, rev && !same});
            continue;
          }
          // partial overlap: an endpoint of one side lying strictly inside the other
          const auto inside = [&](const Patch& P, Side s, const std::array<Point2, 2>& e, const Point2& x) {
            if (distance(x, e[0]) <= tol || distance(x, e[1]) <= tol) return false;
            return detail::curve_distance(P, s, x) <= 1e3 * tol;
          };
          const bool overlap = inside(patches[l], sl, B, A[0]) || inside(patches[l], sl, B, A[1]) ||
                               inside(patches[k], sk, A, B[0]) || inside(patches[k], sk, A, B[1]);
          if (overlap) {
            // a corner of one patch lying inside another patch's side is a hanging vertex
            std::ostringstream os;
            os << "build_topology: partial overlap between sides " << k << ":" << side_name(sk) << " and " << l
               << ":" << side_name(sl) << " (non-conforming patch layout)";
            throw TopologyError(os.str());
          }
        }

  // boundary tags
  for (int k = 0; k < N; ++k)
    for (Side s : all_sides) {
      if (partner[k][static_cast<int>(s)] >= 0) continue;
      topo.boundary.push_back({k, s, BoundaryTag::neumann});
    }
  for (const auto& t : tagged) {
    if (t.patch < 0 || t.patch >= N) throw TopologyError("build_topology: boundary tag refers to unknown patch");
    if (partner[t.patch][static_cast<int>(t.side)] >= 0) {
      std::ostringstream os;
      os << "build_topology: side " << t.patch << ":" << side_name(t.side) << " is an interface, cannot tag it";
      throw TopologyError(os.str());
    }
    for (auto& b : topo.boundary)
      if (b.patch == t.patch && b.side == t.side) b.tag = t.tag;
  }

  // neighbors and vertex sets
  const auto add_unique = [&](std::vector<Point2>& set, const Point2& x) {
    for (const auto& y : set)
      if (distance(x, y) <= tol) return;
    set.push_back(x);
  };
  for (const auto& f : topo.interfaces) {
    topo.neighbors[f.k].push_back(f.l);
    topo.neighbors[f.l].push_back(f.k);
    const auto ek = ends[f.k][static_cast<int>(f.side_k)];
    const auto el = ends[f.l][static_cast<int>(f.side_l)];
    for (const auto& x : ek) add_unique(topo.vertices[f.k], x);
    for (const auto& x : el) add_unique(topo.vertices[f.l], x);
  }
  for (int k = 0; k < N; ++k) {
    auto& nb = topo.neighbors[k];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  const auto add_entry = [&](std::vector<VertexEntry>& set, const Point2& x, int owner) {
    for (const auto& y : set)
      if (y.owner == owner && distance(x, y.point) <= tol) return;
    set.push_back({x, owner});
  };
  for (int k = 0; k < N; ++k) {
    for (const auto& x : topo.vertices[k]) add_entry(topo.extended_vertices[k], x, k);
    for (const auto& f : topo.interfaces) {
      if (f.k != k && f.l != k) continue;
      const int l = f.k == k ? f.l : f.k;
      const Side sl = f.k == k ? f.side_l : f.side_k;
      for (const auto& x : ends[l][static_cast<int>(sl)]) add_entry(topo.extended_vertices[k], x, l);
    }
  }
  return topo;
}

/// Patches plus their topology.
struct MultiPatch {
  std::vector<Patch> patches;
  MultiPatchTopology topology;

  int size() const { return static_cast<int>(patches.size()); }
};

/// Physical diameter H^(k): maximum distance between mapped corners.
inline double patch_diameter(const Patch& patch) {
  const std::array<Point2, 4> c{patch_corner(patch, 0, 0), patch_corner(patch, 1, 0), patch_corner(patch, 0, 1),
                                patch_corner(patch, 1, 1)};
  double d = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) d = std::max(d, distance(c[i], c[j]));
  return d;
}

/// Mesh size h^(k): maximum physical cell diameter (distance between mapped cell corners).
inline double mesh_size(const Patch& patch) {
  double h = 0.0;
  for (const auto& cell : patch.basis.cells()) {
    const std::array<Point2, 4> c{map_point(patch, {cell.lo[0], cell.lo[1]}).x, map_point(patch, {cell.hi[0], cell.lo[1]}).x,
                                  map_point(patch, {cell.lo[0], cell.hi[1]}).x, map_point(patch, {cell.hi[0], cell.hi[1]}).x};
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) h = std::max(h, distance(c[i], c[j]));
  }
  return h;
}

/// Knot vector of the coarse grid level: 2^refinements uniform spans, interior
/// breakpoints repeated `interior_multiplicity` times.
inline KnotVector grid_knot_vector(int p, int refinements, int interior_multiplicity) {
  return uniform_knot_vector(p, 1 << refinements, interior_multiplicity);
}

/// nx*ny unit squares tiling [0,nx]x[0,ny]; patch (i,j) has index i + nx*j and is
/// refined `base_refinements + extra[k]` times. The west side of the domain is
/// Dirichlet, all other outer sides Neumann. Breakpoints of the base level carry
/// `interior_multiplicity`; extra refinements insert simple knots.
inline MultiPatch multipatch_rectangle(int nx, int ny, int p, int base_refinements,
                                       std::span<const int> extra_refinements = {},
                                       int interior_multiplicity = 1) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("multipatch_rectangle: need nx, ny >= 1");
  if (!extra_refinements.empty() && static_cast<int>(extra_refinements.size()) != nx * ny)
    throw std::invalid_argument("multipatch_rectangle: extra refinements must have nx*ny entries");
  if (base_refinements < 0) throw std::invalid_argument("multipatch_rectangle: negative refinement");
  MultiPatch mp;
  const KnotVector base = grid_knot_vector(p, base_refinements, interior_multiplicity);
  std::vector<BoundarySide> tags;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int k = i + nx * j;
      const int extra = extra_refinements.empty() ? 0 : extra_refinements[k];
      if (extra < 0) throw std::invalid_argument("multipatch_rectangle: negative extra refinement");
      const KnotVector kv = refine_uniform(base, extra);
      const double x0 = i, y0 = j;
      mp.patches.push_back(
          bilinear_patch({Point2{x0, y0}, Point2{x0 + 1, y0}, Point2{x0, y0 + 1}, Point2{x0 + 1, y0 + 1}}, kv, kv));
      if (i == 0) tags.push_back({k, Side::west, BoundaryTag::dirichlet});
    }
  mp.topology = build_topology(mp.patches, -1.0, tags);
  return mp;
}

/// Quarter annulus r in [r_in, r_out], theta in [0, pi/2], split into nx radial
/// by ny angular patches. Each patch is a degree-p Greville interpolant of the
/// polar map on a single span, refined by knot insertion so that neighboring
/// traces stay identical. The inner arc (west sides of the first radial column)
/// is Dirichlet.
inline MultiPatch quarter_annulus(int nx, int ny, int p, int base_refinements,
                                  std::span<const int> extra_refinements = {},
                                  int interior_multiplicity = 1, double r_in = 1.0, double r_out = 2.0) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("quarter_annulus: need nx, ny >= 1");
  if (!extra_refinements.empty() && static_cast<int>(extra_refinements.size()) != nx * ny)
    throw std::invalid_argument("quarter_annulus: extra refinements must have nx*ny entries");
  MultiPatch mp;
  const KnotVector single = make_knot_vector(p, {}, 1);
  const KnotVector base = grid_knot_vector(p, base_refinements, interior_multiplicity);
  std::vector<BoundarySide> tags;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int k = i + nx * j;
      const double ra = r_in + (r_out - r_in) * i / nx, rb = r_in + (r_out - r_in) * (i + 1) / nx;
      const double ta = 0.5 * std::numbers::pi * j / ny, tb = 0.5 * std::numbers::pi * (j + 1) / ny;
      const auto polar = [=](Point2 xi) {
        const double r = ra + (rb - ra) * xi[0], t = ta + (tb - ta) * xi[1];
        return Point2{r * std::cos(t), r * std::sin(t)};
      };
      const Patch coarse = interpolate_patch(polar, single, single);
      const int extra = extra_refinements.empty() ? 0 : extra_refinements[k];
      const KnotVector kv = refine_uniform(base, extra);
      mp.patches.push_back(refine_patch(coarse, kv, kv));
      if (i == 0) tags.push_back({k, Side::west, BoundaryTag::dirichlet});
    }
  mp.topology = build_topology(mp.patches, -1.0, tags);
  return mp;
}

}  // namespace dgieti
