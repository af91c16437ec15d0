#pragma once

// dG-IETI-DP: jump operator on the extended spaces, primal constraints,
// energy-minimizing coarse basis, scaled Dirichlet preconditioner and solve.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgieti/discretize.hpp"
#include "dgieti/linalg.hpp"

namespace dgieti {

enum class Algorithm { A, C };
enum class ScalingKind { multiplicity, coefficient, stiffness };

inline const char* to_string(Algorithm a) { return a == Algorithm::A ? "A" : "C"; }
inline const char* to_string(ScalingKind s) {
  switch (s) {
    case ScalingKind::multiplicity: return "multiplicity";
    case ScalingKind::coefficient: return "coefficient";
    case ScalingKind::stiffness: return "stiffness";
  }
  return "?";
}

class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Storage location of a dof: patch and extended index inside that patch.
struct DofRef {
  int patch = 0;
  int ext = 0;
  bool operator==(const DofRef&) const = default;
  auto operator<=>(const DofRef&) const = default;
};

/// One continuity constraint u(own) - u(copy) = 0.
struct JumpRow {
  int interface = 0;
  DofRef own, copy;
  bool vertex_tied = false;  // both locations belong to one primal vertex
};

/// Rows of B in the fixed order: interfaces by (k, l), B_e(k,l) before
/// B_e(l,k), tangential order inside each family. Dirichlet pairs are skipped.
inline std::vector<JumpRow> build_jump_rows(const Discretization& disc) {
  const auto& topo = disc.mp.topology;
  std::vector<int> order(topo.interfaces.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& A = topo.interfaces[a];
    const auto& B = topo.interfaces[b];
    return std::pair(A.k, A.l) < std::pair(B.k, B.l);
  });
  std::vector<JumpRow> rows;
  for (int f : order) {
    const auto& F = topo.interfaces[f];
    for (int pass = 0; pass < 2; ++pass) {
      const int a = pass == 0 ? F.k : F.l, b = pass == 0 ? F.l : F.k;
      const Side sa = pass == 0 ? F.side_k : F.side_l;
      const auto& ea = disc.spaces[a];
      const auto& eb = disc.spaces[b];
      for (int i : side_dofs(disc.mp.patches[a].basis, sa)) {
        if (ea.dirichlet[i]) continue;
        const int c = eb.layer_index(f, i);
        if (c < 0 || eb.dirichlet[c]) throw std::logic_error("build_jump_rows: trace dof without a free copy");
        rows.push_back({f, {a, i}, {b, c}, false});
      }
    }
  }
  return rows;
}

/// A primal variable and the functional realizing it on each participating patch.
struct PrimalVariable {
  enum class Kind { vertex, average } kind = Kind::vertex;
  std::string label;
  /// per participating patch: weights on extended dofs
  std::vector<std::pair<int, std::vector<std::pair<int, double>>>> parts;
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a), b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Vertex primals (alg A and C) and interface averages (alg C).
///
/// A vertex primal ties the dof interpolating an interface endpoint to all its
/// copies; cross points therefore yield one variable per patch corner dof
/// shared by all patches holding a copy. Dirichlet dofs are never primal.
inline std::vector<PrimalVariable> select_primal(const Discretization& disc, Algorithm alg) {
  const auto& topo = disc.mp.topology;
  std::vector<int> base(disc.patch_count() + 1, 0);
  for (int k = 0; k < disc.patch_count(); ++k) base[k + 1] = base[k] + disc.spaces[k].size();
  detail::UnionFind uf(base.back());
  std::vector<bool> is_vertex(base.back(), false);
  for (int f = 0; f < static_cast<int>(topo.interfaces.size()); ++f) {
    const auto& F = topo.interfaces[f];
    for (int pass = 0; pass < 2; ++pass) {
      const int a = pass == 0 ? F.k : F.l, b = pass == 0 ? F.l : F.k;
      const Side sa = pass == 0 ? F.side_k : F.side_l;
      const auto tr = side_dofs(disc.mp.patches[a].basis, sa);
      for (int i : {tr.front(), tr.back()}) {
        if (disc.spaces[a].dirichlet[i]) continue;
        const int c = disc.spaces[b].layer_index(f, i);
        is_vertex[base[a] + i] = is_vertex[base[b] + c] = true;
        uf.unite(base[a] + i, base[b] + c);
      }
    }
  }
  std::map<int, std::vector<DofRef>> comps;
  for (int k = 0; k < disc.patch_count(); ++k)
    for (int e = 0; e < disc.spaces[k].size(); ++e)
      if (is_vertex[base[k] + e]) comps[uf.find(base[k] + e)].push_back({k, e});

  std::vector<PrimalVariable> out;
  for (const auto& [root, members] : comps) {
    PrimalVariable v;
    v.kind = PrimalVariable::Kind::vertex;
    const auto& o = disc.spaces[members.front().patch].origin[members.front().ext];
    const Point2 x = map_point(disc.mp.patches[o[0]], [&] {
      const auto mi = disc.mp.patches[o[0]].basis.multi_index(o[1]);
      return Point2{mi[0] == 0 ? 0.0 : 1.0, mi[1] == 0 ? 0.0 : 1.0};
    }()).x;
    std::ostringstream os;
    os << "vertex(" << x[0] << "," << x[1] << ") of patch " << o[0];
    v.label = os.str();
    for (const auto& m : members) v.parts.push_back({m.patch, {{m.ext, 1.0}}});
    out.push_back(std::move(v));
  }
  if (alg == Algorithm::C) {
    for (int f = 0; f < static_cast<int>(topo.interfaces.size()); ++f) {
      const auto& F = topo.interfaces[f];
      for (int pass = 0; pass < 2; ++pass) {
        const int a = pass == 0 ? F.k : F.l, b = pass == 0 ? F.l : F.k;
        const Side sa = pass == 0 ? F.side_k : F.side_l;
        const Patch& P = disc.mp.patches[a];
        const KnotVector& kv = P.basis.direction(tangent_direction(sa));
        const auto tr = side_dofs(P.basis, sa);
        // weights: integral of each trace function over the physical edge, normalized
        std::vector<double> w(tr.size(), 0.0);
        double length = 0.0;
        const auto bps = kv.breakpoints();
        for (std::size_t c = 0; c + 1 < bps.size(); ++c) {
          const auto q = gauss_legendre(kv.degree() + 2, bps[c], bps[c + 1]);
          for (std::size_t g = 0; g < q.points.size(); ++g) {
            const auto m = map_point(P, side_point(sa, q.points[g]));
            const double ds = q.weights[g] * side_length_element(m.jac, sa);
            length += ds;
            const auto bv = eval_basis(kv, q.points[g]);
            for (int j = 0; j <= kv.degree(); ++j) w[bv.first + j] += ds * bv.values[j];
          }
        }
        PrimalVariable v;
        v.kind = PrimalVariable::Kind::average;
        std::ostringstream os;
        os << "average(interface " << F.k << "-" << F.l << ", trace of patch " << a << ")";
        v.label = os.str();
        std::vector<std::pair<int, double>> wa, wb;
        for (std::size_t j = 0; j < tr.size(); ++j) {
          if (disc.spaces[a].dirichlet[tr[j]]) continue;
          wa.push_back({tr[j], w[j] / length});
          wb.push_back({disc.spaces[b].layer_index(f, tr[j]), w[j] / length});
        }
        if (wa.empty()) continue;
        v.parts.push_back({a, wa});
        v.parts.push_back({b, wb});
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

/// delta-dagger weights of a jump row: (weight of the own entry, weight of the copy entry).
/// The own entry of the scaled row is multiplied by the copy side's delta-dagger.
struct RowScaling {
  double own = 0.5, copy = 0.5;  // delta-dagger of the own / copy location
};

struct SolveReport {
  int iterations = 0;
  bool converged = false;
  double kappa = 1.0;
  double lambda_min = 1.0, lambda_max = 1.0;
  double reduction = 0.0;
  double setup_seconds = 0.0;
  double factorization_seconds = 0.0;
  double coarse_seconds = 0.0;
  double solve_seconds = 0.0;
  int dofs = 0;
  int multipliers = 0;
  int primal = 0;
  double H_over_h = 0.0;
  std::vector<double> h;
  double continuity_defect = 0.0;  // max |B u| / max |u|
};

struct IetiConfig {
  Algorithm alg = Algorithm::C;
  ScalingKind scaling = ScalingKind::multiplicity;
  double tol = 1e-6;
  int max_it = 1000;
  /// Allowed max|B u| / max|u| after the solve; 0 selects max(1e-8, 10 tol).
  double continuity_tol = 0.0;
};

struct IetiSolution {
  std::vector<Vector> own;  // per patch: coefficients of all own dofs (Dirichlet values included)
  std::vector<Vector> extended;  // per patch: extended coefficients (own + layer copies)
  Vector lambda;
  SolveReport report;
};

class IetiSystem {
 public:
  struct PatchData {
    LocalSystem sys;
    SparseMatrix K_II, K_IB, K_BI, K_BB;
    Vector f_I, f_B, g;
    Factorization K_II_fact;
    Factorization saddle;  // [[K, C_B^T], [C_B, 0]]
    DenseMatrix C;         // primal functionals on B_e dofs
    std::vector<int> primal_ids;
    DenseMatrix Phi;       // B_e part of the primal basis
    DenseMatrix S_Phi;     // S_e Phi
    SparseMatrix B, B_D;   // dual rows x B_e
    SparseMatrix B_full;   // all jump rows x B_e
    std::vector<int> b_index;  // extended index -> B_e position, -1 otherwise
    int nI() const { return sys.n_interior; }
    int nB() const { return sys.n_boundary(); }
  };

  IetiSystem(const Discretization& disc, const ProblemData& data, IetiConfig cfg = {})
      : disc_(&disc), cfg_(cfg) {
    if (!(cfg.tol > 0.0 && cfg.tol < 1.0)) throw std::invalid_argument("IetiSystem: tol must lie in (0,1)");
    const auto t0 = std::chrono::steady_clock::now();
    const int N = disc.patch_count();
    patches_.resize(N);
    std::vector<SparseMatrix> Ke(N);
    for (int k = 0; k < N; ++k) {
      auto& P = patches_[k];
      const auto& ext = disc.spaces[k];
      Ke[k] = assemble_patch_operator(disc, k);
      const Vector fe = assemble_patch_rhs(disc, k, data);
      const Vector lift = dirichlet_lift(disc, k, data.g_D);
      P.sys = reduce_local_system(ext, Ke[k], fe, lift);
      const int nI = P.nI(), nB = P.nB();
      std::vector<int> I(nI), B(nB);
      std::iota(I.begin(), I.end(), 0);
      std::iota(B.begin(), B.end(), nI);
      P.K_II = submatrix(P.sys.K, I, I);
      P.K_IB = submatrix(P.sys.K, I, B);
      P.K_BI = submatrix(P.sys.K, B, I);
      P.K_BB = submatrix(P.sys.K, B, B);
      P.f_I = P.sys.f.head(nI);
      P.f_B = P.sys.f.tail(nB);
      P.b_index.assign(ext.size(), -1);
      for (int j = 0; j < nB; ++j) P.b_index[P.sys.dofs[nI + j]] = j;
    }
    const auto t1 = std::chrono::steady_clock::now();

    // jump rows, primal variables, dual rows
    rows_ = build_jump_rows(disc);
    primal_ = select_primal(disc, cfg.alg);
    {
      std::map<DofRef, int> vertex_of;
      for (int j = 0; j < static_cast<int>(primal_.size()); ++j)
        if (primal_[j].kind == PrimalVariable::Kind::vertex)
          for (const auto& [k, w] : primal_[j].parts) vertex_of[{k, w.front().first}] = j;
      for (auto& r : rows_) {
        const auto a = vertex_of.find(r.own), b = vertex_of.find(r.copy);
        r.vertex_tied = a != vertex_of.end() && b != vertex_of.end() && a->second == b->second;
      }
    }
    for (int r = 0; r < static_cast<int>(rows_.size()); ++r)
      if (!rows_[r].vertex_tied) dual_rows_.push_back(r);
    scaling_ = compute_scaling(Ke);

    // per-patch constraint matrices, rank check
    for (int k = 0; k < N; ++k) {
      auto& P = patches_[k];
      std::vector<std::pair<int, std::vector<std::pair<int, double>>>> rows;
      for (int j = 0; j < static_cast<int>(primal_.size()); ++j)
        for (const auto& [q, w] : primal_[j].parts)
          if (q == k) rows.push_back({j, w});
      P.C = DenseMatrix::Zero(static_cast<int>(rows.size()), P.nB());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        P.primal_ids.push_back(rows[r].first);
        for (const auto& [e, v] : rows[r].second) {
          const int b = P.b_index[e];
          if (b < 0) throw std::logic_error("IetiSystem: primal functional on a non-B_e dof");
          P.C(static_cast<int>(r), b) += v;
        }
      }
      check_rank(k);
    }

    // jump operators per patch
    const int nd = static_cast<int>(dual_rows_.size());
    std::vector<std::vector<Triplet>> tB(N), tBD(N), tBF(N);
    for (int r = 0; r < static_cast<int>(rows_.size()); ++r) {
      const auto& row = rows_[r];
      const int bo = patches_[row.own.patch].b_index[row.own.ext];
      const int bc = patches_[row.copy.patch].b_index[row.copy.ext];
      tBF[row.own.patch].emplace_back(r, bo, 1.0);
      tBF[row.copy.patch].emplace_back(r, bc, -1.0);
    }
    for (int d = 0; d < nd; ++d) {
      const auto& row = rows_[dual_rows_[d]];
      const auto& s = scaling_[dual_rows_[d]];
      const int bo = patches_[row.own.patch].b_index[row.own.ext];
      const int bc = patches_[row.copy.patch].b_index[row.copy.ext];
      tB[row.own.patch].emplace_back(d, bo, 1.0);
      tB[row.copy.patch].emplace_back(d, bc, -1.0);
      tBD[row.own.patch].emplace_back(d, bo, s.copy);
      tBD[row.copy.patch].emplace_back(d, bc, -s.own);
    }
    for (int k = 0; k < N; ++k) {
      auto& P = patches_[k];
      P.B = from_triplets(nd, P.nB(), tB[k]);
      P.B_D = from_triplets(nd, P.nB(), tBD[k]);
      P.B_full = from_triplets(static_cast<int>(rows_.size()), P.nB(), tBF[k]);
    }

    // local factorizations
    for (int k = 0; k < N; ++k) {
      auto& P = patches_[k];
      P.K_II_fact = Factorization(P.K_II, FactorKind::spd, "K_II of patch " + std::to_string(k));
      const int n = P.nI() + P.nB(), nc = static_cast<int>(P.C.rows());
      std::vector<Triplet> t;
      for (int r = 0; r < P.sys.K.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(P.sys.K, r); it; ++it) t.emplace_back(r, static_cast<int>(it.col()), it.value());
      for (int c = 0; c < nc; ++c)
        for (int b = 0; b < P.nB(); ++b)
          if (P.C(c, b) != 0.0) {
            t.emplace_back(n + c, P.nI() + b, P.C(c, b));
            t.emplace_back(P.nI() + b, n + c, P.C(c, b));
          }
      try {
        P.saddle = Factorization(from_triplets(n + nc, n + nc, t), FactorKind::indefinite,
                                 "constrained saddle system of patch " + std::to_string(k));
      } catch (const FactorizationError& e) {
        throw KernelError(std::string(e.what()) + ": the primal set (algorithm " + to_string(cfg.alg) +
                          ") does not control the kernel of this patch");
      }
      P.g = P.f_B - P.K_BI * P.K_II_fact.solve(P.f_I);
    }
    const auto t2 = std::chrono::steady_clock::now();

    // primal basis and coarse matrix
    const int np = static_cast<int>(primal_.size());
    DenseMatrix Spp = DenseMatrix::Zero(np, np);
    for (int k = 0; k < N; ++k) {
      auto& P = patches_[k];
      const int nc = static_cast<int>(P.C.rows()), n = P.nI() + P.nB();
      DenseMatrix rhs = DenseMatrix::Zero(n + nc, nc);
      for (int c = 0; c < nc; ++c) rhs(n + c, c) = 1.0;
      const DenseMatrix X = P.saddle.solve_columns(rhs);
      P.Phi = X.middleRows(P.nI(), P.nB());
      P.S_Phi = P.K_BB * P.Phi + P.K_BI * X.topRows(P.nI());
      const DenseMatrix local = P.Phi.transpose() * P.S_Phi;
      for (int a = 0; a < nc; ++a)
        for (int b = 0; b < nc; ++b) Spp(P.primal_ids[a], P.primal_ids[b]) += local(a, b);
    }
    Spp = 0.5 * (Spp + Spp.transpose());
    S_PP_ = Spp;
    {
      std::vector<Triplet> t;
      for (int a = 0; a < np; ++a)
        for (int b = 0; b < np; ++b)
          if (Spp(a, b) != 0.0) t.emplace_back(a, b, Spp(a, b));
      try {
        S_PP_fact_ = Factorization(from_triplets(np, np, t), FactorKind::spd, "coarse matrix S_PiPi");
      } catch (const FactorizationError&) {
        throw KernelError(std::string("coarse matrix is not positive definite: the primal set (algorithm ") +
                          to_string(cfg.alg) + ") does not control the kernel; try algorithm C");
      }
    }
    const auto t3 = std::chrono::steady_clock::now();
    setup_seconds_ = std::chrono::duration<double>(t1 - t0).count();
    factorization_seconds_ = std::chrono::duration<double>(t2 - t1).count();
    coarse_seconds_ = std::chrono::duration<double>(t3 - t2).count();
  }

  int patch_count() const { return static_cast<int>(patches_.size()); }
  int multipliers() const { return static_cast<int>(dual_rows_.size()); }
  int primal_count() const { return static_cast<int>(primal_.size()); }
  const std::vector<JumpRow>& jump_rows() const { return rows_; }
  const std::vector<int>& dual_rows() const { return dual_rows_; }
  const std::vector<PrimalVariable>& primal() const { return primal_; }
  const std::vector<RowScaling>& scaling() const { return scaling_; }
  const PatchData& patch(int k) const { return patches_[k]; }
  const DenseMatrix& coarse_matrix() const { return S_PP_; }
  const Discretization& discretization() const { return *disc_; }
  const IetiConfig& config() const { return cfg_; }

  /// S-tilde^{-1} applied to per-patch B_e vectors.
  std::vector<Vector> apply_S_tilde_inverse(const std::vector<Vector>& f) const {
    const int N = patch_count();
    Vector fP = Vector::Zero(primal_count());
    for (int k = 0; k < N; ++k) {
      const auto& P = patches_[k];
      const Vector loc = P.Phi.transpose() * f[k];
      for (int c = 0; c < loc.size(); ++c) fP[P.primal_ids[c]] += loc[c];
    }
    const Vector wP = S_PP_fact_.solve(fP);
    std::vector<Vector> w(N);
    for (int k = 0; k < N; ++k) {
      const auto& P = patches_[k];
      const int n = P.nI() + P.nB(), nc = static_cast<int>(P.C.rows());
      Vector rhs = Vector::Zero(n + nc);
      rhs.segment(P.nI(), P.nB()) = f[k];
      const Vector x = P.saddle.solve(rhs);
      Vector loc(nc);
      for (int c = 0; c < nc; ++c) loc[c] = wP[P.primal_ids[c]];
      w[k] = x.segment(P.nI(), P.nB()) + P.Phi * loc;
    }
    return w;
  }

  std::vector<Vector> apply_Bt(const Vector& lambda) const {
    std::vector<Vector> out(patch_count());
    for (int k = 0; k < patch_count(); ++k) out[k] = patches_[k].B.transpose() * lambda;
    return out;
  }

  Vector apply_B(const std::vector<Vector>& u) const {
    Vector out = Vector::Zero(multipliers());
    for (int k = 0; k < patch_count(); ++k) out += patches_[k].B * u[k];
    return out;
  }

  /// F = B S-tilde^{-1} B^T
  Vector apply_F(const Vector& lambda) const { return apply_B(apply_S_tilde_inverse(apply_Bt(lambda))); }

  /// S_e^(k) v through one interior solve
  Vector apply_S(int k, const Vector& v) const {
    const auto& P = patches_[k];
    const Vector x = P.K_II_fact.solve(Vector(-(P.K_IB * v)));
    return P.K_BB * v + P.K_BI * x;
  }

  /// M_sD^{-1} = B_D S_e B_D^T
  Vector apply_MsD(const Vector& lambda) const {
    Vector out = Vector::Zero(multipliers());
    for (int k = 0; k < patch_count(); ++k) {
      const auto& P = patches_[k];
      const Vector w = P.B_D.transpose() * lambda;
      out += P.B_D * apply_S(k, w);
    }
    return out;
  }

  /// d = B S-tilde^{-1} g
  Vector rhs() const {
    std::vector<Vector> g(patch_count());
    for (int k = 0; k < patch_count(); ++k) g[k] = patches_[k].g;
    return apply_B(apply_S_tilde_inverse(g));
  }

  /// Own and extended coefficients from B_e values (interior recovered by back-substitution).
  void reconstruct(const std::vector<Vector>& uB, IetiSolution& sol) const {
    const int N = patch_count();
    sol.own.assign(N, Vector());
    sol.extended.assign(N, Vector());
    for (int k = 0; k < N; ++k) {
      const auto& P = patches_[k];
      const auto& ext = disc_->spaces[k];
      const Vector uI = P.K_II_fact.solve(Vector(P.f_I - P.K_IB * uB[k]));
      Vector e = P.sys.lift;
      for (int i = 0; i < P.nI(); ++i) e[P.sys.dofs[i]] = uI[i];
      for (int j = 0; j < P.nB(); ++j) e[P.sys.dofs[P.nI() + j]] = uB[k][j];
      sol.extended[k] = e;
      sol.own[k] = e.head(ext.n_own);
    }
  }

  IetiSolution solve() const {
    const auto t0 = std::chrono::steady_clock::now();
    IetiSolution sol;
    std::vector<Vector> g0(patch_count());
    for (int k = 0; k < patch_count(); ++k) g0[k] = patches_[k].g;
    const auto w0 = apply_S_tilde_inverse(g0);
    Vector d = apply_B(w0);
    // d at roundoff level of S-tilde^{-1} g: the W-tilde solution is already
    // continuous and lambda = 0; iterating would only amplify noise
    double wmax = 0.0;
    for (const auto& w : w0)
      if (w.size() > 0) wmax = std::max(wmax, w.cwiseAbs().maxCoeff());
    if (d.size() > 0 && d.cwiseAbs().maxCoeff() <= 1e-12 * wmax) d.setZero();
    const auto res = pcg([this](const Vector& x) { return apply_F(x); },
                         [this](const Vector& x) { return apply_MsD(x); }, d, cfg_.tol, cfg_.max_it);
    sol.lambda = res.x;
    std::vector<Vector> g(patch_count());
    const auto Btl = apply_Bt(res.x);
    for (int k = 0; k < patch_count(); ++k) g[k] = patches_[k].g - Btl[k];
    const auto uB = apply_S_tilde_inverse(g);
    reconstruct(uB, sol);
    const auto t1 = std::chrono::steady_clock::now();

    auto& rep = sol.report;
    rep.iterations = res.iterations;
    rep.converged = res.converged;
    rep.kappa = res.kappa;
    rep.lambda_min = res.lambda_min;
    rep.lambda_max = res.lambda_max;
    rep.reduction = res.reduction();
    rep.setup_seconds = setup_seconds_;
    rep.factorization_seconds = factorization_seconds_;
    rep.coarse_seconds = coarse_seconds_;
    rep.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
    rep.dofs = disc_->global_free_dofs();
    rep.multipliers = multipliers();
    rep.primal = primal_count();
    rep.H_over_h = disc_->H_over_h();
    rep.h = disc_->h;

    // the final iterate must be continuous across all interfaces up to the solver tolerance
    double umax = 0.0, jump = 0.0;
    Vector Bu = Vector::Zero(static_cast<int>(rows_.size()));
    for (int k = 0; k < patch_count(); ++k) {
      Bu += patches_[k].B_full * uB[k];
      umax = std::max(umax, sol.extended[k].cwiseAbs().maxCoeff());
    }
    if (Bu.size() > 0) jump = Bu.cwiseAbs().maxCoeff();
    rep.continuity_defect = umax > 0.0 ? jump / umax : jump;
    const double allowed = cfg_.continuity_tol > 0.0 ? cfg_.continuity_tol : std::max(1e-8, 10.0 * cfg_.tol);
    if (rep.converged && rep.continuity_defect > allowed) {
      std::ostringstream os;
      os << "solution is not continuous on the interfaces: max|Bu|/max|u| = " << rep.continuity_defect
         << " exceeds " << allowed;
      throw SolveError(os.str());
    }
    return sol;
  }

 private:
  std::vector<RowScaling> compute_scaling(const std::vector<SparseMatrix>& Ke) const {
    std::vector<RowScaling> out;
    for (const auto& r : rows_) {
      double ro = 1.0, rc = 1.0;
      switch (cfg_.scaling) {
        case ScalingKind::multiplicity: break;
        case ScalingKind::coefficient:
          ro = disc_->alpha[r.own.patch];
          rc = disc_->alpha[r.copy.patch];
          break;
        case ScalingKind::stiffness:
          ro = Ke[r.own.patch].coeff(r.own.ext, r.own.ext);
          rc = Ke[r.copy.patch].coeff(r.copy.ext, r.copy.ext);
          if (!(ro > 0.0) || !(rc > 0.0)) throw std::runtime_error("stiffness scaling: zero diagonal entry");
          break;
      }
      out.push_back({ro / (ro + rc), rc / (ro + rc)});
    }
    return out;
  }

  void check_rank(int k) const {
    const auto& P = patches_[k];
    const int nc = static_cast<int>(P.C.rows());
    if (nc == 0) return;
    Eigen::ColPivHouseholderQR<DenseMatrix> qr(P.C.transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() == nc) return;
    // report the functionals that depend on earlier ones
    std::ostringstream os;
    os << "primal functionals on patch " << k << " are linearly dependent:";
    for (int r = 1; r < nc; ++r) {
      Eigen::ColPivHouseholderQR<DenseMatrix> sub(P.C.topRows(r + 1).transpose());
      sub.setThreshold(1e-10);
      Eigen::ColPivHouseholderQR<DenseMatrix> prev(P.C.topRows(r).transpose());
      prev.setThreshold(1e-10);
      if (sub.rank() == prev.rank()) os << " [" << primal_[P.primal_ids[r]].label << "]";
    }
    throw KernelError(os.str());
  }

  const Discretization* disc_;
  IetiConfig cfg_;
  std::vector<PatchData> patches_;
  std::vector<JumpRow> rows_;
  std::vector<int> dual_rows_;
  std::vector<PrimalVariable> primal_;
  std::vector<RowScaling> scaling_;
  DenseMatrix S_PP_;
  Factorization S_PP_fact_;
  double setup_seconds_ = 0.0, factorization_seconds_ = 0.0, coarse_seconds_ = 0.0;
};

}  // namespace dgieti
