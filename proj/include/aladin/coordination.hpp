#pragma once

// Coordination QP: full-space KKT solve (slack eliminated), the reduced
// (nullspace) Schur-complement solve, and the Sigma / Delta scaling rules.
//
// With s = (lambda_qp - lambda) / (2 Delta) substituted, the full-space
// optimality system reads
//
//   [ B   C'  A'          ] [dx       ]   [ -g                              ]
//   [ C   0   0           ] [nu       ] = [  0                              ]
//   [ A   0  -(2 Delta)^-1] [lambda_qp]   [ b - sum A x - (2 Delta)^-1 lambda ]

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aladin/linalg.hpp"
#include "aladin/problem.hpp"
#include "aladin/sensitivity.hpp"

namespace aladin {

struct CoordinationResult {
  std::vector<Vector> dx;                // full-space step per block (Z dv when reduced)
  std::optional<std::vector<Vector>> dv; // reduced step per block
  Vector slack;
  Vector lambda_qp;
  double kkt_residual = 0.0;
};

inline constexpr double kCoordinationTol = 1e-8;

/// Full-space coordination QP. `delta` is the diagonal of Delta (length n_c).
inline CoordinationResult solve_coordination_full(const std::vector<SensitivityPack>& packs,
                                                  const SeparableProblem& problem, const std::vector<Vector>& x,
                                                  const Vector& lambda, const Vector& delta) {
  const std::size_t ns = problem.n_s();
  const auto nc = static_cast<Eigen::Index>(problem.n_c());
  if (packs.size() != ns || x.size() != ns) throw std::invalid_argument("coordination: block count mismatch");
  if (lambda.size() != nc || delta.size() != nc) throw std::invalid_argument("coordination: dual length mismatch");
  for (Eigen::Index c = 0; c < nc; ++c)
    if (!(delta[c] > 0)) throw std::invalid_argument("coordination: Delta entries must be positive");

  std::vector<Eigen::Index> offset(ns + 1, 0);
  for (std::size_t i = 0; i < ns; ++i) {
    const auto& pk = packs[i];
    const auto n = static_cast<Eigen::Index>(problem.subproblems[i].n_x());
    if (pk.hessian.rows() != n || pk.gradient.size() != n || pk.jacobian.cols() != n)
      throw std::invalid_argument("coordination: sensitivity dimensions differ from subproblem " + std::to_string(i));
    offset[i + 1] = offset[i] + n + pk.jacobian.rows();
  }
  const Eigen::Index nb = offset[ns];
  const Eigen::Index N = nb + nc;
  Matrix K = Matrix::Zero(N, N);
  Vector rhs = Vector::Zero(N);
  Vector cons = problem.consensus_residual(x);  // sum A x - b

  for (std::size_t i = 0; i < ns; ++i) {
    const auto& pk = packs[i];
    const Matrix& A = problem.subproblems[i].coupling;
    const auto n = pk.hessian.rows();
    const auto m = pk.jacobian.rows();
    const Eigen::Index o = offset[i];
    K.block(o, o, n, n) = pk.hessian;
    if (m) {
      K.block(o + n, o, m, n) = pk.jacobian;
      K.block(o, o + n, n, m) = pk.jacobian.transpose();
    }
    if (nc) {
      K.block(nb, o, nc, n) = A;
      K.block(o, nb, n, nc) = A.transpose();
    }
    rhs.segment(o, n) = -pk.gradient;
  }
  for (Eigen::Index c = 0; c < nc; ++c) {
    K(nb + c, nb + c) = -1.0 / (2.0 * delta[c]);
    rhs[nb + c] = -cons[c] - lambda[c] / (2.0 * delta[c]);
  }

  const Vector sol = solve_symmetric_checked(K, rhs, kCoordinationTol, "coordination QP");
  CoordinationResult out;
  out.kkt_residual = (K * sol - rhs).norm();
  out.dx.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) out.dx[i] = sol.segment(offset[i], packs[i].hessian.rows());
  out.lambda_qp = sol.tail(nc);
  out.slack = (out.lambda_qp - lambda).cwiseQuotient(2.0 * delta);
  return out;
}

/// Dual Schur system (sum S_i + (2 Delta)^-1) lambda_qp = sum s_i + (2 Delta)^-1 lambda - b.
/// With Delta = (mu / 2) I this is the usual 1/mu form.
struct SchurSystem {
  Matrix M;
  Vector r;
};

inline SchurSystem assemble_schur(const std::vector<SchurPair>& pairs, const Vector& lambda, const Vector& delta,
                                  const Vector& b) {
  const auto nc = lambda.size();
  SchurSystem sys{Matrix::Zero(nc, nc), Vector::Zero(nc)};
  for (const auto& p : pairs) {  // fixed block order
    sys.M += p.S;
    sys.r += p.s;
  }
  const Vector w = (2.0 * delta).cwiseInverse();
  sys.M.diagonal() += w;
  sys.r += w.cwiseProduct(lambda) - b;
  return sys;
}

/// dv_i = -B-bar^{-1}(g-bar + A-bar' lambda_qp), lifted by Z_i.
inline void recover_reduced_steps(const std::vector<ReducedTriple>& triples, const std::vector<Matrix>& Z,
                                  const Vector& lambda_qp, CoordinationResult& out) {
  const std::size_t ns = triples.size();
  std::vector<Vector> dv(ns);
  out.dx.assign(ns, Vector());
  for (std::size_t i = 0; i < ns; ++i) {
    const auto& t = triples[i];
    if (t.hessian.rows() == 0) {
      dv[i] = Vector::Zero(0);
    } else {
      Eigen::LLT<Matrix> llt(t.hessian);
      if (llt.info() != Eigen::Success) throw std::invalid_argument("coordination: reduced Hessian is not SPD");
      dv[i] = -llt.solve(Vector(t.gradient + t.coupling.transpose() * lambda_qp));
    }
    out.dx[i] = Z[i] * dv[i];
  }
  out.dv = std::move(dv);
  out.lambda_qp = lambda_qp;
}

/// Reduced coordination QP solved through the Schur system. `offsets` holds
/// the current consensus contribution A_i x_i of each block.
inline CoordinationResult solve_coordination_reduced(const std::vector<ReducedTriple>& triples,
                                                     const std::vector<Matrix>& Z, const std::vector<Vector>& offsets,
                                                     const Vector& lambda, const Vector& delta, const Vector& b) {
  const std::size_t ns = triples.size();
  if (Z.size() != ns || offsets.size() != ns) throw std::invalid_argument("coordination: block count mismatch");
  for (Eigen::Index c = 0; c < delta.size(); ++c)
    if (!(delta[c] > 0)) throw std::invalid_argument("coordination: Delta entries must be positive");
  std::vector<SchurPair> pairs(ns);
  for (std::size_t i = 0; i < ns; ++i) pairs[i] = schur_contribution_at(triples[i], offsets[i]);
  const SchurSystem sys = assemble_schur(pairs, lambda, delta, b);
  CoordinationResult out;
  Vector lqp = Vector::Zero(lambda.size());
  if (lambda.size()) lqp = solve_symmetric_checked(sys.M, sys.r, kCoordinationTol, "reduced coordination QP");
  out.kkt_residual = (sys.M * lqp - sys.r).norm();
  recover_reduced_steps(triples, Z, lqp, out);
  out.slack = (lqp - lambda).cwiseQuotient(2.0 * delta);
  return out;
}

/// Scalar-mu convenience overload: Delta = (mu / 2) I.
inline CoordinationResult solve_coordination_reduced(const std::vector<ReducedTriple>& triples,
                                                     const std::vector<Matrix>& Z, const std::vector<Vector>& offsets,
                                                     const Vector& lambda, double mu, const Vector& b) {
  return solve_coordination_reduced(triples, Z, offsets, lambda, Vector::Constant(lambda.size(), mu / 2.0), b);
}

struct ScalingState {
  std::vector<Matrix> sigma;  // per block, SPD
  Vector delta;               // diagonal of Delta
  Vector prev_violation;      // sum A x - b of the previous iteration (empty before the first)

  static ScalingState initial(const SeparableProblem& problem, const SolverOptions& opts) {
    ScalingState s;
    for (const auto& sub : problem.subproblems) {
      const auto n = static_cast<Eigen::Index>(sub.n_x());
      s.sigma.push_back(opts.rho0 * Matrix::Identity(n, n));
    }
    s.delta = Vector::Constant(static_cast<Eigen::Index>(problem.n_c()), opts.mu0 / 2.0);
    return s;
  }

  /// mu with Delta = (mu / 2) I; only meaningful while Delta is scalar.
  double mu() const { return delta.size() ? 2.0 * delta[0] : 0.0; }
};

/// Sigma <- r Sigma when the pre-update norm is below the cap; same for Delta.
inline ScalingState update_sigma(ScalingState state, const SolverOptions& opts, bool include_delta = true) {
  for (auto& S : state.sigma)
    if (inf_norm(S) < opts.sigma_max) S *= opts.r_sigma;
  if (include_delta && state.delta.size() && inf_norm(state.delta) < opts.delta_max) state.delta *= opts.r_delta;
  return state;
}

/// Rowwise rule: Delta_cc <- beta Delta_cc when |viol_c| > gamma |prev_c|,
/// capped at delta_max.
inline ScalingState update_delta_by_violation(ScalingState state, const Vector& viol, const Vector& prev,
                                              const SolverOptions& opts) {
  if (viol.size() != state.delta.size() || prev.size() != state.delta.size())
    throw std::invalid_argument("update_delta_by_violation: vector length mismatch");
  for (Eigen::Index c = 0; c < viol.size(); ++c)
    if (std::abs(viol[c]) > opts.gamma * std::abs(prev[c]))
      state.delta[c] = std::max(state.delta[c], std::min(opts.beta * state.delta[c], opts.delta_max));
  return state;
}

}  // namespace aladin
