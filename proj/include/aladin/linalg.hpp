#pragma once

// Dense symmetric indefinite factorization P'AP = L D L' with Bunch-Kaufman
// partial pivoting (1x1 and 2x2 pivots). Used for every KKT system in the
// library: the interior-point Newton systems and the coordination QP.
// The matrix is first equilibrated symmetrically (Ruiz), which leaves the
// inertia unchanged and makes the zero-pivot test scale independent.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace aladin {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};

class SymmetricIndefiniteLDLT {
 public:
  SymmetricIndefiniteLDLT() = default;
  explicit SymmetricIndefiniteLDLT(const Matrix& a) { factorize(a); }

  /// Factorizes the lower triangle of `a` (the upper triangle is ignored).
  void factorize(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("LDLT: matrix must be square");
    const Eigen::Index n = a.rows();
    n_ = n;
    Matrix w = a.selfadjointView<Eigen::Lower>();
    dscale_ = Vector::Ones(n);
    for (int sweep = 0; sweep < 10 && n > 0; ++sweep) {
      const Vector r = w.cwiseAbs().rowwise().maxCoeff();
      bool done = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (r[i] > 0 && std::abs(r[i] - 1.0) > 1e-2) done = false;
      }
      if (done) break;
      Vector f(n);
      for (Eigen::Index i = 0; i < n; ++i) f[i] = r[i] > 0 ? 1.0 / std::sqrt(r[i]) : 1.0;
      w = f.asDiagonal() * w * f.asDiagonal();
      dscale_ = dscale_.cwiseProduct(f);
    }
    perm_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) perm_[i] = i;
    block_size_.assign(n, 0);
    L_ = Matrix::Identity(n, n);
    D_ = Matrix::Zero(n, n);
    scale_ = n > 0 ? w.cwiseAbs().maxCoeff() : 0.0;
    const double zero_tol = std::max(scale_, 1.0) * std::numeric_limits<double>::epsilon() * (n + 1) * 10;
    const double alpha = (1.0 + std::sqrt(17.0)) / 8.0;
    inertia_ = {};

    Eigen::Index k = 0;
    while (k < n) {
      double colmax = 0.0;
      Eigen::Index r = k;
      for (Eigen::Index i = k + 1; i < n; ++i) {
        if (std::abs(w(i, k)) > colmax) {
          colmax = std::abs(w(i, k));
          r = i;
        }
      }
      const double akk = std::abs(w(k, k));
      int size = 1;
      Eigen::Index swap_with = k;
      if (std::max(akk, colmax) <= zero_tol) {
        size = 1;  // zero column: record a zero pivot
      } else if (akk >= alpha * colmax) {
        size = 1;
      } else {
        double rowmax = 0.0;
        for (Eigen::Index i = k; i < n; ++i)
          if (i != r) rowmax = std::max(rowmax, std::abs(w(i, r)));
        if (akk * rowmax >= alpha * colmax * colmax) {
          size = 1;
        } else if (std::abs(w(r, r)) >= alpha * rowmax) {
          size = 1;
          swap_with = r;
        } else {
          size = 2;
          swap_with = r;
        }
      }
      const Eigen::Index target = (size == 1) ? k : k + 1;
      if (swap_with != target) symmetric_swap(w, target, swap_with, k);

      if (size == 1) {
        const double d = w(k, k);
        D_(k, k) = d;
        block_size_[k] = 1;
        if (std::abs(d) <= zero_tol) {
          ++inertia_.zero;
          // leave the column of L at zero; solve() will refuse
        } else {
          (d > 0 ? inertia_.positive : inertia_.negative)++;
          const Eigen::Index m = n - k - 1;
          if (m > 0) {
            Vector l = w.col(k).tail(m) / d;
            L_.col(k).tail(m) = l;
            w.bottomRightCorner(m, m).noalias() -= d * l * l.transpose();
          }
        }
        k += 1;
      } else {
        Eigen::Matrix2d d;
        d << w(k, k), w(k + 1, k), w(k + 1, k), w(k + 1, k + 1);
        D_.block<2, 2>(k, k) = d;
        block_size_[k] = 2;
        block_size_[k + 1] = -1;
        const double det = d.determinant();
        if (std::abs(det) <= zero_tol * zero_tol) {
          inertia_.zero += 2;
        } else if (det < 0) {
          ++inertia_.positive;
          ++inertia_.negative;
        } else {
          (d.trace() > 0 ? inertia_.positive : inertia_.negative) += 2;
        }
        const Eigen::Index m = n - k - 2;
        if (m > 0) {
          Matrix c = w.block(k + 2, k, m, 2);
          Matrix l = c * d.inverse();
          L_.block(k + 2, k, m, 2) = l;
          w.bottomRightCorner(m, m).noalias() -= l * c.transpose();
        }
        k += 2;
      }
    }
  }

  Eigen::Index size() const { return n_; }
  const Inertia& inertia() const { return inertia_; }
  bool singular() const { return inertia_.zero > 0; }

  Vector solve(const Vector& b) const {
    if (b.size() != n_) throw std::invalid_argument("LDLT::solve: dimension mismatch");
    if (singular()) throw SingularMatrixError("LDLT::solve: matrix is singular (zero pivot)");
    Vector c(n_);
    for (Eigen::Index i = 0; i < n_; ++i) c[i] = dscale_[perm_[i]] * b[perm_[i]];
    Vector u = L_.triangularView<Eigen::UnitLower>().solve(c);
    Vector v(n_);
    for (Eigen::Index k = 0; k < n_;) {
      if (block_size_[k] == 1) {
        v[k] = u[k] / D_(k, k);
        k += 1;
      } else {
        v.segment<2>(k) = D_.block<2, 2>(k, k).inverse() * u.segment<2>(k);
        k += 2;
      }
    }
    Vector y = L_.transpose().triangularView<Eigen::UnitUpper>().solve(v);
    Vector x(n_);
    for (Eigen::Index i = 0; i < n_; ++i) x[perm_[i]] = dscale_[perm_[i]] * y[i];
    return x;
  }

  Matrix solve(const Matrix& b) const {
    Matrix x(b.rows(), b.cols());
    for (Eigen::Index j = 0; j < b.cols(); ++j) x.col(j) = solve(Vector(b.col(j)));
    return x;
  }

 private:
  // Swaps indices i and j (both >= k) of the active block and the already
  // computed rows of L.
  void symmetric_swap(Matrix& w, Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    w.row(i).swap(w.row(j));
    w.col(i).swap(w.col(j));
    if (k > 0) L_.block(i, 0, 1, k).swap(L_.block(j, 0, 1, k));
    std::swap(perm_[i], perm_[j]);
  }

  Eigen::Index n_ = 0;
  Matrix L_;
  Matrix D_;
  std::vector<Eigen::Index> perm_;
  std::vector<int> block_size_;
  Inertia inertia_;
  Vector dscale_;
  double scale_ = 0.0;
};

/// Solves the symmetric system K x = rhs with one step of iterative
/// refinement and verifies ||K x - rhs|| <= tol * (1 + ||rhs||).
inline Vector solve_symmetric_checked(const Matrix& K, const Vector& rhs, double tol, const std::string& what) {
  SymmetricIndefiniteLDLT f(K);
  if (f.singular()) throw SingularMatrixError(what + ": singular KKT matrix");
  Vector x = f.solve(rhs);
  const Matrix Ks = K.selfadjointView<Eigen::Lower>();
  x += f.solve(Vector(rhs - Ks * x));
  const double res = (Ks * x - rhs).norm();
  if (!(res <= tol * (1.0 + rhs.norm())))
    throw SingularMatrixError(what + ": KKT residual " + std::to_string(res) + " above tolerance");
  return x;
}

inline double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Induced infinity norm (max absolute row sum).
inline double inf_norm(const Matrix& m) {
  return m.size() ? m.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
}

}  // namespace aladin
