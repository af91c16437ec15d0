#pragma once

// Sparse storage, direct factorizations, PCG with Lanczos condition estimates
// and small dense eigenvalue oracles.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/SparseExtra>

namespace dgieti {

/// Compressed sparse row storage.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using Triplet = Eigen::Triplet<double>;
using Operator = std::function<Vector(const Vector&)>;

class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double max_abs(const SparseMatrix& A) {
  double m = 0.0;
  for (int r = 0; r < A.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(A, r); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

/// max |A - A^T| relative to max |A| (0 for the zero matrix).
inline double symmetry_defect(const SparseMatrix& A) {
  const double m = max_abs(A);
  if (m == 0.0) return 0.0;
  const SparseMatrix At = A.transpose();
  return max_abs(SparseMatrix(A - At)) / m;
}

inline SparseMatrix from_triplets(int rows, int cols, const std::vector<Triplet>& t) {
  SparseMatrix A(rows, cols);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

enum class FactorKind { spd, indefinite };

/// Direct factorization with fill-reducing ordering: sparse Cholesky for SPD
/// matrices, sparse LU for symmetric indefinite ones.
class Factorization {
 public:
  Factorization() = default;

  Factorization(const SparseMatrix& A, FactorKind kind, const std::string& label = "matrix") : kind_(kind) {
    if (A.rows() != A.cols()) throw FactorizationError(label + ": matrix is not square");
    n_ = static_cast<int>(A.rows());
    if (symmetry_defect(A) > 1e-12) {
      std::ostringstream os;
      os << label << ": matrix is not symmetric (relative defect " << symmetry_defect(A) << ")";
      throw FactorizationError(os.str());
    }
    if (n_ == 0) return;
    const Eigen::SparseMatrix<double> Ac = A;
    if (kind == FactorKind::spd) {
      llt_ = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
      llt_->compute(Ac);
      if (llt_->info() != Eigen::Success)
        throw FactorizationError(label + ": Cholesky factorization failed, matrix is not positive definite");
    } else {
      lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      lu_->compute(Ac);
      if (lu_->info() != Eigen::Success)
        throw FactorizationError(label + ": LU numeric factorization failed (" + lu_->lastErrorMessage() + ")");
    }
  }

  int size() const { return n_; }
  FactorKind kind() const { return kind_; }

  Vector solve(const Vector& b) const {
    if (b.size() != n_) throw std::invalid_argument("Factorization::solve: size mismatch");
    if (n_ == 0) return Vector();
    return kind_ == FactorKind::spd ? Vector(llt_->solve(b)) : Vector(lu_->solve(b));
  }

  DenseMatrix solve_columns(const DenseMatrix& B) const {
    if (B.rows() != n_) throw std::invalid_argument("Factorization::solve: size mismatch");
    if (n_ == 0) return DenseMatrix(0, B.cols());
    return kind_ == FactorKind::spd ? DenseMatrix(llt_->solve(B)) : DenseMatrix(lu_->solve(B));
  }

 private:
  FactorKind kind_ = FactorKind::spd;
  int n_ = 0;
  // shared so that a built factorization can be copied cheaply; solves are const
  std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> llt_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

class IndefiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PcgResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
  /// sqrt(r.z) after each iteration, starting with the initial value
  std::vector<double> residuals;
  double lambda_min = 1.0, lambda_max = 1.0;
  double kappa = 1.0;
  double reduction() const { return residuals.empty() || residuals.front() == 0.0 ? 0.0 : residuals.back() / residuals.front(); }
};

/// Extreme eigenvalues of the Lanczos tridiagonal assembled from CG step sizes.
inline std::pair<double, double> lanczos_extremes(const std::vector<double>& alpha, const std::vector<double>& beta) {
  const int m = static_cast<int>(alpha.size());
  if (m == 0) return {1.0, 1.0};
  Vector diag(m), off(std::max(m - 1, 0));
  for (int j = 0; j < m; ++j) {
    diag[j] = 1.0 / alpha[j] + (j > 0 ? beta[j - 1] / alpha[j - 1] : 0.0);
    if (j + 1 < m) off[j] = std::sqrt(beta[j]) / alpha[j];
  }
  if (m == 1) return {diag[0], diag[0]};
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es;
  es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

/// Preconditioned CG from a zero initial guess. Stops when sqrt(r.Mr) has been
/// reduced by `tol` relative to its initial value.
inline PcgResult pcg(const Operator& apply_A, const Operator& apply_M, const Vector& b, double tol, int max_it) {
  PcgResult out;
  out.x = Vector::Zero(b.size());
  Vector r = b;
  Vector z = apply_M(r);
  double rz = r.dot(z);
  if (rz < 0.0) throw IndefiniteError("pcg: preconditioner is not positive definite");
  const double r0 = std::sqrt(rz);
  out.residuals.push_back(r0);
  if (r0 == 0.0) {
    out.converged = true;
    return out;
  }
  Vector p = z;
  std::vector<double> alphas, betas;
  for (int it = 1; it <= max_it; ++it) {
    const Vector q = apply_A(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0)) {
      std::ostringstream os;
      os << "pcg: non-positive curvature p.Ap = " << pq << " at iteration " << it;
      throw IndefiniteError(os.str());
    }
    const double alpha = rz / pq;
    out.x += alpha * p;
    r -= alpha * q;
    z = apply_M(r);
    const double rz_new = r.dot(z);
    if (rz_new < 0.0) throw IndefiniteError("pcg: preconditioner is not positive definite");
    const double beta = rz_new / rz;
    alphas.push_back(alpha);
    betas.push_back(beta);
    out.iterations = it;
    out.residuals.push_back(std::sqrt(rz_new));
    if (std::sqrt(rz_new) <= tol * r0) {
      out.converged = true;
      break;
    }
    p = z + beta * p;
    rz = rz_new;
  }
  const auto [lo, hi] = lanczos_extremes(alphas, betas);
  out.lambda_min = lo;
  out.lambda_max = hi;
  out.kappa = hi / lo;
  return out;
}

inline constexpr int dense_oracle_max_dim = 2000;

inline DenseMatrix materialize(const Operator& op, int dim) {
  if (dim > dense_oracle_max_dim) throw std::invalid_argument("materialize: dimension too large for a dense oracle");
  DenseMatrix A(dim, dim);
  Vector e = Vector::Zero(dim);
  for (int j = 0; j < dim; ++j) {
    e[j] = 1.0;
    A.col(j) = op(e);
    e[j] = 0.0;
  }
  return A;
}

struct EigenRange {
  double lambda_min = 0.0, lambda_max = 0.0;
  int skipped = 0;  // eigenvalues treated as null space
  double kappa() const { return lambda_max / lambda_min; }
};

/// Extreme eigenvalues of a symmetric dense matrix (symmetrized first).
/// Eigenvalues with |lambda| <= null_tol * max|lambda| are skipped.
inline EigenRange dense_extreme_eigs(const DenseMatrix& A, double null_tol = 0.0) {
  if (A.rows() != A.cols()) throw std::invalid_argument("dense_extreme_eigs: matrix must be square");
  if (A.rows() > dense_oracle_max_dim) throw std::invalid_argument("dense_extreme_eigs: dimension too large");
  if (A.rows() == 0) throw std::invalid_argument("dense_extreme_eigs: empty matrix");
  const DenseMatrix S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(S, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  EigenRange out;
  bool any = false;
  for (int i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) <= null_tol * top) {
      ++out.skipped;
      continue;
    }
    if (!any) out.lambda_min = out.lambda_max = ev[i];
    out.lambda_min = std::min(out.lambda_min, ev[i]);
    out.lambda_max = std::max(out.lambda_max, ev[i]);
    any = true;
  }
  if (!any) throw std::invalid_argument("dense_extreme_eigs: all eigenvalues are below the null threshold");
  return out;
}

inline EigenRange dense_extreme_eigs(const Operator& op, int dim, double null_tol = 0.0) {
  if (dim > dense_oracle_max_dim) throw std::invalid_argument("dense_extreme_eigs: dimension too large");
  return dense_extreme_eigs(materialize(op, dim), null_tol);
}

/// Extreme nonzero eigenvalues of M*A for symmetric positive semidefinite A and
/// M, computed as the spectrum of M^{1/2} A M^{1/2}. The preconditioned
/// spectrum is well scaled even when A and M individually span many orders of
/// magnitude, so null_tol (relative to the largest eigenvalue) separates true
/// null directions reliably.
inline EigenRange dense_preconditioned_eigs(const DenseMatrix& A, const DenseMatrix& M, double null_tol = 1e-10) {
  if (A.rows() > dense_oracle_max_dim) throw std::invalid_argument("dense_preconditioned_eigs: dimension too large");
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (M + M.transpose()));
  const Vector& d = es.eigenvalues();
  Vector root(d.size());
  for (int i = 0; i < d.size(); ++i) root[i] = d[i] > 0.0 ? std::sqrt(d[i]) : 0.0;
  const DenseMatrix half = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  return dense_extreme_eigs(DenseMatrix(half * (0.5 * (A + A.transpose())) * half), null_tol);
}

inline void write_matrix_market(const SparseMatrix& A, const std::string& path) {
  const Eigen::SparseMatrix<double> Ac = A;
  if (!Eigen::saveMarket(Ac, path)) throw std::runtime_error("write_matrix_market: cannot write " + path);
}

inline SparseMatrix read_matrix_market(const std::string& path) {
  Eigen::SparseMatrix<double> Ac;
  if (!Eigen::loadMarket(Ac, path)) throw std::runtime_error("read_matrix_market: cannot read " + path);
  SparseMatrix A = Ac;
  A.makeCompressed();
  return A;
}

}  // namespace dgieti
