#pragma once

// Univariate and tensor-product B-spline bases on the parameter domain [0,1].

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgieti {

/// Open knot vector on [0,1] together with its degree.
///
/// The first and last knot are repeated exactly degree+1 times and interior
/// knots have multiplicity at most degree, so every basis function is at least
/// C^0 inside (0,1).
class KnotVector {
 public:
  KnotVector() = default;

  KnotVector(int degree, std::vector<double> knots)
      : degree_(degree), knots_(std::move(knots)) {
    validate();
  }

  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Number of basis functions n = m - p - 1.
  int size() const { return static_cast<int>(knots_.size()) - degree_ - 1; }

  /// Distinct knot values, including 0 and 1.
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (double k : knots_)
      if (out.empty() || k > out.back()) out.push_back(k);
    return out;
  }

  int multiplicity(double value) const {
    return static_cast<int>(std::count(knots_.begin(), knots_.end(), value));
  }

  /// Span index s with knots[s] <= xi < knots[s+1]; xi == 1 maps to the last
  /// nonempty span.
  int find_span(double xi) const {
    const int n = size();
    if (xi >= knots_[n]) return n - 1;
    if (xi <= knots_[degree_]) return degree_;
    const auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + n + 1, xi);
    return static_cast<int>(it - knots_.begin()) - 1;
  }

  /// Parameter interval [lo, hi] of the support of basis function i.
  std::array<double, 2> support(int i) const {
    return {knots_[i], knots_[i + degree_ + 1]};
  }

  bool operator==(const KnotVector& other) const = default;

 private:
  void validate() const {
    const int p = degree_;
    const int m = static_cast<int>(knots_.size());
    if (p < 1) throw std::invalid_argument("KnotVector: degree must be >= 1");
    if (m < 2 * (p + 1))
      throw std::invalid_argument("KnotVector: need at least 2(p+1) knots");
    for (int i = 0; i + 1 < m; ++i)
      if (knots_[i + 1] < knots_[i])
        throw std::invalid_argument("KnotVector: knots must be non-decreasing");
    if (knots_.front() != 0.0 || knots_.back() != 1.0)
      throw std::invalid_argument("KnotVector: parameter domain must be [0,1]");
    if (multiplicity(0.0) != p + 1 || multiplicity(1.0) != p + 1)
      throw std::invalid_argument("KnotVector: end knots must be repeated exactly p+1 times");
    for (double b : breakpoints())
      if (b > 0.0 && b < 1.0 && multiplicity(b) > p)
        throw std::invalid_argument("KnotVector: interior multiplicity exceeds degree at " +
                                    std::to_string(b));
  }

  int degree_ = 0;
  std::vector<double> knots_;
};

/// Open knot vector with each interior breakpoint repeated
/// `interior_multiplicity` times, giving a C^{p-mult} basis at the breakpoints.
inline KnotVector make_knot_vector(int p, std::span<const double> breakpoints,
                                   int interior_multiplicity) {
  if (p < 1) throw std::invalid_argument("make_knot_vector: degree must be >= 1");
  if (interior_multiplicity < 1 || interior_multiplicity > p)
    throw std::invalid_argument("make_knot_vector: interior multiplicity must lie in [1, p]");
  std::vector<double> knots(p + 1, 0.0);
  double prev = 0.0;
  for (double b : breakpoints) {
    if (!(b > 0.0 && b < 1.0))
      throw std::invalid_argument("make_knot_vector: breakpoints must lie inside (0,1)");
    if (b <= prev)
      throw std::invalid_argument("make_knot_vector: breakpoints must be strictly increasing");
    knots.insert(knots.end(), interior_multiplicity, b);
    prev = b;
  }
  knots.insert(knots.end(), p + 1, 1.0);
  return KnotVector(p, std::move(knots));
}

/// Uniform open knot vector with `cells` equal spans.
inline KnotVector uniform_knot_vector(int p, int cells, int interior_multiplicity = 1) {
  std::vector<double> bps;
  for (int i = 1; i < cells; ++i) bps.push_back(static_cast<double>(i) / cells);
  return make_knot_vector(p, bps, interior_multiplicity);
}

struct BasisValues {
  int first = 0;  // index of the first possibly-nonzero basis function
  std::vector<double> values;
};

/// Values and derivatives; ders[k][j] is the k-th derivative of N_{first+j}.
struct BasisDerivs {
  int first = 0;
  std::vector<std::vector<double>> ders;
};

/// Values and derivatives up to `order` of the p+1 nonzero basis functions at xi
/// (Cox-de Boor triangle with inverted knot differences).
inline BasisDerivs eval_basis_derivs(const KnotVector& kv, double xi, int order) {
  const int p = kv.degree();
  if (order < 0 || order > p)
    throw std::invalid_argument("eval_basis_derivs: derivative order must lie in [0, p]");
  if (!(xi >= 0.0 && xi <= 1.0))
    throw std::invalid_argument("eval_basis_derivs: parameter outside [0,1]");
  const auto& U = kv.knots();
  const int span = kv.find_span(xi);

  std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
  std::vector<double> left(p + 1), right(p + 1);
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = xi - U[span + 1 - j];
    right[j] = U[span + j] - xi;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];  // lower triangle: knot differences
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }

  BasisDerivs out;
  out.first = span - p;
  out.ders.assign(order + 1, std::vector<double>(p + 1, 0.0));
  for (int j = 0; j <= p; ++j) out.ders[0][j] = ndu[j][p];

  std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= order; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      out.ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  int factor = p;
  for (int k = 1; k <= order; ++k) {
    for (double& v : out.ders[k]) v *= factor;
    factor *= (p - k);
  }
  return out;
}

inline BasisValues eval_basis(const KnotVector& kv, double xi) {
  auto d = eval_basis_derivs(kv, xi, 0);
  return {d.first, std::move(d.ders[0])};
}

/// Value of the single basis function i at xi (zero outside its support).
inline double eval_basis_function(const KnotVector& kv, int i, double xi) {
  const auto b = eval_basis(kv, xi);
  const int j = i - b.first;
  return (j >= 0 && j <= kv.degree()) ? b.values[j] : 0.0;
}

/// Inserts the midpoint of every nonempty span, `times` times.
inline KnotVector refine_uniform(const KnotVector& kv, int times) {
  if (times < 0) throw std::invalid_argument("refine_uniform: times must be >= 0");
  KnotVector out = kv;
  for (int t = 0; t < times; ++t) {
    const auto bps = out.breakpoints();
    std::vector<double> knots = out.knots();
    for (std::size_t i = 0; i + 1 < bps.size(); ++i) knots.push_back(0.5 * (bps[i] + bps[i + 1]));
    std::sort(knots.begin(), knots.end());
    out = KnotVector(out.degree(), std::move(knots));
  }
  return out;
}

/// Greville abscissae: mean of knots i+1 .. i+p.
inline std::vector<double> greville_points(const KnotVector& kv) {
  const int p = kv.degree();
  const auto& U = kv.knots();
  std::vector<double> g(kv.size());
  for (int i = 0; i < kv.size(); ++i) {
    double s = 0.0;
    for (int j = 1; j <= p; ++j) s += U[i + j];
    g[i] = s / p;
  }
  return g;
}

/// Knot-insertion (Boehm) matrix T with fine_coeffs = T * coarse_coeffs, for a
/// fine knot vector containing the coarse one. T is stored row-major, n_fine x n_coarse.
inline std::vector<std::vector<double>> refinement_matrix(const KnotVector& coarse,
                                                          const KnotVector& fine) {
  const int p = coarse.degree();
  if (fine.degree() != p) throw std::invalid_argument("refinement_matrix: degree mismatch");
  std::vector<double> extra;
  {
    const auto& c = coarse.knots();
    const auto& f = fine.knots();
    std::size_t i = 0;
    for (double k : f) {
      if (i < c.size() && c[i] == k)
        ++i;
      else
        extra.push_back(k);
    }
    if (i != c.size())
      throw std::invalid_argument("refinement_matrix: fine knot vector does not contain the coarse one");
  }
  // Start from the identity and insert one knot at a time.
  std::vector<double> U = coarse.knots();
  int n = coarse.size();
  std::vector<std::vector<double>> T(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) T[i][i] = 1.0;
  for (double x : extra) {
    const int s = KnotVector(p, U).find_span(x);
    std::vector<std::vector<double>> Tn(n + 1, std::vector<double>(coarse.size(), 0.0));
    for (int i = 0; i <= n; ++i) {
      if (i <= s - p) {
        Tn[i] = T[i];
      } else if (i > s) {
        Tn[i] = T[i - 1];
      } else {
        const double a = (x - U[i]) / (U[i + p] - U[i]);
        for (int c = 0; c < coarse.size(); ++c) Tn[i][c] = a * T[i][c] + (1.0 - a) * T[i - 1][c];
      }
    }
    U.insert(std::upper_bound(U.begin(), U.end(), x), x);
    T = std::move(Tn);
    ++n;
  }
  return T;
}

/// Tensor-product basis over two knot vectors. Multi-index (i1, i2) maps to the
/// flat index i1 + n1 * i2.
class TensorBasis {
 public:
  TensorBasis() = default;
  TensorBasis(KnotVector u, KnotVector v) : dirs_{std::move(u), std::move(v)} {}

  const KnotVector& direction(int d) const { return dirs_[d]; }
  int size(int d) const { return dirs_[d].size(); }
  int size() const { return dirs_[0].size() * dirs_[1].size(); }
  int index(int i1, int i2) const { return i1 + dirs_[0].size() * i2; }
  std::array<int, 2> multi_index(int i) const { return {i % dirs_[0].size(), i / dirs_[0].size()}; }

  struct Cell {
    std::array<double, 2> lo, hi;
  };

  /// Cartesian product of the nonempty knot spans.
  std::vector<Cell> cells() const {
    const auto b0 = dirs_[0].breakpoints();
    const auto b1 = dirs_[1].breakpoints();
    std::vector<Cell> out;
    out.reserve((b0.size() - 1) * (b1.size() - 1));
    for (std::size_t j = 0; j + 1 < b1.size(); ++j)
      for (std::size_t i = 0; i + 1 < b0.size(); ++i)
        out.push_back({{b0[i], b1[j]}, {b0[i + 1], b1[j + 1]}});
    return out;
  }

 private:
  std::array<KnotVector, 2> dirs_;
};

struct TensorEval {
  std::vector<int> indices;
  std::vector<double> values;
  std::vector<std::array<double, 2>> gradients;  // parametric gradients
};

inline TensorEval tensor_active(const TensorBasis& basis, std::array<double, 2> xi) {
  const auto bu = eval_basis_derivs(basis.direction(0), xi[0], 1);
  const auto bv = eval_basis_derivs(basis.direction(1), xi[1], 1);
  const int pu = basis.direction(0).degree(), pv = basis.direction(1).degree();
  TensorEval out;
  const std::size_t count = static_cast<std::size_t>((pu + 1) * (pv + 1));
  out.indices.reserve(count);
  out.values.reserve(count);
  out.gradients.reserve(count);
  for (int b = 0; b <= pv; ++b)
    for (int a = 0; a <= pu; ++a) {
      out.indices.push_back(basis.index(bu.first + a, bv.first + b));
      out.values.push_back(bu.ders[0][a] * bv.ders[0][b]);
      out.gradients.push_back({bu.ders[1][a] * bv.ders[0][b], bu.ders[0][a] * bv.ders[1][b]});
    }
  return out;
}

}  // namespace dgieti
