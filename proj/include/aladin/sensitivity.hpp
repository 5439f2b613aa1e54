#pragma once

// Sensitivities at a local solution: active set, active-constraint Jacobian,
// Hessian processing (eigenvalue regularization, BFGS), the nullspace
// reduction and per-subproblem Schur blocks for the dual coordination system.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "aladin/linalg.hpp"
#include "aladin/problem.hpp"

namespace aladin {

class LicqError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Indices into the combined inequality vector (h, lb - x, x - ub).
struct ActiveSet {
  std::vector<std::size_t> indices;
  bool operator==(const ActiveSet&) const = default;
};

/// Combined inequality vector h~ = (h, lb - x, x - ub). Infinite bounds give
/// -inf entries, which are never active.
inline Vector combined_inequalities(const Subproblem& sub, const Vector& x, const Vector& p) {
  const auto n = static_cast<Eigen::Index>(sub.n_x());
  const auto mh = static_cast<Eigen::Index>(sub.n_h());
  Vector out(mh + 2 * n);
  if (mh) out.head(mh) = sub.inequalities.evaluate(x, p);
  out.segment(mh, n) = sub.lower - x;
  out.tail(n) = x - sub.upper;
  return out;
}

inline ActiveSet detect_active(const Subproblem& sub, const Vector& x, const Vector& p, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("detect_active: tau must be positive");
  const Vector ht = combined_inequalities(sub, x, p);
  ActiveSet act;
  for (Eigen::Index j = 0; j < ht.size(); ++j)
    if (ht[j] > -tau) act.indices.push_back(static_cast<std::size_t>(j));
  return act;
}

/// Number of indices in exactly one of the two sets.
inline std::size_t symmetric_difference_size(const ActiveSet& a, const ActiveSet& b) {
  std::size_t common = 0;
  std::size_t i = 0, j = 0;
  while (i < a.indices.size() && j < b.indices.size()) {
    if (a.indices[i] == b.indices[j]) ++common, ++i, ++j;
    else if (a.indices[i] < b.indices[j]) ++i;
    else ++j;
  }
  return a.indices.size() + b.indices.size() - 2 * common;
}

/// Rows: grad g_i, then grad h~_j for j in act (index order). Box rows are
/// -e_j (lower) and +e_j (upper).
inline Matrix active_jacobian(const Subproblem& sub, const Vector& x, const Vector& p, const ActiveSet& act) {
  const auto n = static_cast<Eigen::Index>(sub.n_x());
  const auto mg = static_cast<Eigen::Index>(sub.n_g());
  const auto mh = static_cast<std::size_t>(sub.n_h());
  Matrix C = Matrix::Zero(mg + static_cast<Eigen::Index>(act.indices.size()), n);
  if (mg) C.topRows(mg) = sub.equalities.jacobian(x, p);
  Matrix Jh;
  if (mh) Jh = sub.inequalities.jacobian(x, p);
  Eigen::Index row = mg;
  for (std::size_t j : act.indices) {
    if (j < mh) {
      C.row(row) = Jh.row(static_cast<Eigen::Index>(j));
    } else if (j < mh + static_cast<std::size_t>(n)) {
      C(row, static_cast<Eigen::Index>(j - mh)) = -1.0;
    } else if (j < mh + 2 * static_cast<std::size_t>(n)) {
      C(row, static_cast<Eigen::Index>(j - mh - n)) = 1.0;
    } else {
      throw std::out_of_range("active_jacobian: active index out of range");
    }
    ++row;
  }
  return C;
}

/// Multipliers of the active rows of h~, in the order of act.
inline Vector active_multipliers(const Subproblem& sub, const Vector& gamma, const Vector& eta, const ActiveSet& act) {
  const auto mh = static_cast<std::size_t>(sub.n_h());
  Vector m(static_cast<Eigen::Index>(act.indices.size()));
  for (std::size_t k = 0; k < act.indices.size(); ++k) {
    const std::size_t j = act.indices[k];
    m[static_cast<Eigen::Index>(k)] = j < mh ? gamma[static_cast<Eigen::Index>(j)] : eta[static_cast<Eigen::Index>(j - mh)];
  }
  return m;
}

/// Eigenvalue rule: |l| if l < -delta, delta if |l| < delta, l otherwise.
inline double regularized_eigenvalue(double l, double delta) {
  if (l < -delta) return -l;
  if (std::abs(l) < delta) return delta;
  return l;
}

/// V diag(rule(Lambda)) V' from the symmetric eigendecomposition of H.
inline Matrix regularize(const Matrix& H, double delta) {
  if (!(delta > 0)) throw std::invalid_argument("regularize: delta must be positive");
  if (H.rows() != H.cols()) throw std::invalid_argument("regularize: matrix must be square");
  if (H.size() == 0) return H;
  const Matrix Hs = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(Hs);
  if (es.info() != Eigen::Success) throw std::runtime_error("regularize: eigendecomposition failed");
  Vector lam = es.eigenvalues();
  bool changed = false;
  for (Eigen::Index j = 0; j < lam.size(); ++j) {
    const double r = regularized_eigenvalue(lam[j], delta);
    changed = changed || r != lam[j];
    lam[j] = r;
  }
  if (!changed) return Hs;
  const Matrix& V = es.eigenvectors();
  Matrix B = V * lam.asDiagonal() * V.transpose();
  return 0.5 * (B + B.transpose());
}

/// BFGS update of B with step s and gradient difference y. Plain mode skips
/// the update when s'y <= 1e-12 |s||y|; damped mode applies Powell damping
/// (0.2 / 0.8) and always yields an SPD matrix.
inline Matrix bfgs_update(const Matrix& B, const Vector& s, const Vector& y, bool damped) {
  if (s.size() != y.size() || B.rows() != s.size() || B.cols() != s.size())
    throw std::invalid_argument("bfgs_update: dimension mismatch");
  if (s.squaredNorm() == 0.0) return B;
  const Vector Bs = B * s;
  const double sBs = s.dot(Bs);
  if (!(sBs > 0)) return B;
  Vector yy = y;
  double sy = s.dot(y);
  if (damped) {
    if (sy < 0.2 * sBs) {
      const double theta = 0.8 * sBs / (sBs - sy);
      yy = theta * y + (1.0 - theta) * Bs;
      sy = s.dot(yy);
    }
  } else if (sy <= 1e-12 * s.norm() * y.norm()) {
    return B;
  }
  Matrix out = B - (Bs * Bs.transpose()) / sBs + (yy * yy.transpose()) / sy;
  return 0.5 * (out + out.transpose());
}

/// Orthonormal basis of null(C). A 0 x n matrix gives the identity. Rank
/// deficiency signals a LICQ violation.
inline Matrix nullspace_basis(const Matrix& C, Eigen::Index n = -1) {
  if (n < 0) n = C.cols();
  if (C.cols() != n) throw std::invalid_argument("nullspace_basis: column count mismatch");
  if (C.rows() == 0) return Matrix::Identity(n, n);
  if (C.rows() > n) throw LicqError("nullspace_basis: more active constraints than variables (LICQ violated)");
  Eigen::JacobiSVD<Matrix> svd(C, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double tol = static_cast<double>(std::max(C.rows(), C.cols())) * std::numeric_limits<double>::epsilon() *
                     std::max(1.0, sv[0]) * 100;
  Eigen::Index rank = 0;
  for (Eigen::Index j = 0; j < sv.size(); ++j)
    if (sv[j] > tol) ++rank;
  if (rank < C.rows()) throw LicqError("nullspace_basis: active constraint Jacobian is rank deficient (LICQ violated)");
  return svd.matrixV().rightCols(n - rank);
}

struct ReducedTriple {
  Matrix hessian;   // B-bar = Z' H Z (regularized)
  Vector gradient;  // g-bar = Z' g
  Matrix coupling;  // A-bar = A Z
};

struct SchurPair {
  Matrix S;  // A-bar B-bar^{-1} A-bar'
  Vector s;
};

struct SensitivityPack {
  Vector gradient;  // grad f_i(x_i)
  Matrix hessian;   // B_i: processed (SPD) in full space, raw/BFGS before reduction otherwise
  Matrix jacobian;  // C_i
  ActiveSet active;
  std::optional<Matrix> nullspace;
  std::optional<ReducedTriple> reduced;
  std::optional<SchurPair> schur;
};

/// Projects the pack onto its nullspace basis; the reduced Hessian is
/// regularized when `reg` is set.
inline ReducedTriple reduce(const SensitivityPack& pack, const Matrix& A, double delta = 1e-4, bool reg = true) {
  if (!pack.nullspace) throw std::invalid_argument("reduce: pack has no nullspace basis");
  const Matrix& Z = *pack.nullspace;
  ReducedTriple t;
  Matrix Hr = Z.transpose() * pack.hessian * Z;
  Hr = 0.5 * (Hr + Hr.transpose());
  t.hessian = reg ? regularize(Hr, delta) : Hr;
  t.gradient = Z.transpose() * pack.gradient;
  t.coupling = A * Z;
  return t;
}

/// S = A-bar B-bar^{-1} A-bar', s = offset - A-bar B-bar^{-1} g-bar where
/// offset is the current consensus contribution of the block.
inline SchurPair schur_contribution_at(const ReducedTriple& t, const Vector& offset) {
  SchurPair out;
  const auto nc = t.coupling.rows();
  if (offset.size() != nc) throw std::invalid_argument("schur_contribution: offset length mismatch");
  if (t.hessian.rows() == 0) {
    out.S = Matrix::Zero(nc, nc);
    out.s = offset;
    return out;
  }
  Eigen::LLT<Matrix> llt(t.hessian);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("schur_contribution: reduced Hessian is not SPD");
  const Matrix BinvAt = llt.solve(t.coupling.transpose());
  out.S = t.coupling * BinvAt;
  out.S = 0.5 * (out.S + out.S.transpose());
  out.s = offset - t.coupling * llt.solve(t.gradient);
  // rows of A-bar that are identically zero give exactly zero rows of S
  for (Eigen::Index c = 0; c < nc; ++c) {
    if (t.coupling.row(c).isZero(0.0)) {
      out.S.row(c).setZero();
      out.S.col(c).setZero();
    }
  }
  return out;
}

/// S = A-bar B-bar^{-1} A-bar', s = A-bar (v - B-bar^{-1} g-bar).
inline SchurPair schur_contribution(const ReducedTriple& t, const Vector& v) {
  if (v.size() != t.coupling.cols()) throw std::invalid_argument("schur_contribution: v length mismatch");
  return schur_contribution_at(t, t.coupling * v);
}

}  // namespace aladin
