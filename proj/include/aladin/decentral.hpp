#pragma once

// Decentralized solution of the dual Schur system by D-ADMM and D-CG over a
// simulated, bulk-synchronous neighbor network. Every float that crosses an
// edge is counted in a MessageLog.
//
// Agent i only knows the rows C(i) of the consensus constraint it touches.
// The global system is S~ = sum_i I_C(i)' S^_i I_C(i), s~ = sum_i I_C(i)' s^_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aladin/linalg.hpp"
#include "aladin/parallel.hpp"
#include "aladin/problem.hpp"
#include "aladin/sensitivity.hpp"

namespace aladin {

class DecentralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Topology {
  Eigen::Index n_c = 0;
  std::vector<std::vector<Eigen::Index>> rows;          // C(i), ascending global rows
  std::vector<std::vector<std::size_t>> neighbors;      // N(i), ascending, without i
  std::vector<std::vector<Eigen::Index>> local_index;   // global row -> position in C(i), -1 if absent
  Vector multiplicity;                                   // m_c = #{i : c in C(i)}

  std::size_t n_agents() const { return rows.size(); }
  Eigen::Index size(std::size_t i) const { return static_cast<Eigen::Index>(rows[i].size()); }

  /// C(i) ∩ C(j) as global rows (ascending).
  std::vector<Eigen::Index> overlap(std::size_t i, std::size_t j) const {
    std::vector<Eigen::Index> out;
    for (Eigen::Index c : rows[i])
      if (local_index[j][static_cast<std::size_t>(c)] >= 0) out.push_back(c);
    return out;
  }

  /// Diagonal of Lambda_i.
  Vector lambda_diag(std::size_t i) const {
    Vector d(size(i));
    for (Eigen::Index k = 0; k < size(i); ++k) d[k] = multiplicity[rows[i][static_cast<std::size_t>(k)]];
    return d;
  }

  Vector restrict(std::size_t i, const Vector& global) const {
    Vector out(size(i));
    for (Eigen::Index k = 0; k < size(i); ++k) out[k] = global[rows[i][static_cast<std::size_t>(k)]];
    return out;
  }
};

/// Builds the topology from explicit row sets.
inline Topology build_topology(std::vector<std::vector<Eigen::Index>> rows, Eigen::Index n_c) {
  Topology t;
  t.n_c = n_c;
  const std::size_t na = rows.size();
  t.multiplicity = Vector::Zero(n_c);
  t.local_index.assign(na, std::vector<Eigen::Index>(static_cast<std::size_t>(n_c), -1));
  for (std::size_t i = 0; i < na; ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    rows[i].erase(std::unique(rows[i].begin(), rows[i].end()), rows[i].end());
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      const Eigen::Index c = rows[i][k];
      if (c < 0 || c >= n_c) throw std::invalid_argument("build_topology: row index out of range");
      t.local_index[i][static_cast<std::size_t>(c)] = static_cast<Eigen::Index>(k);
      t.multiplicity[c] += 1.0;
    }
  }
  for (Eigen::Index c = 0; c < n_c; ++c)
    if (t.multiplicity[c] == 0)
      throw std::invalid_argument("build_topology: consensus row " + std::to_string(c) + " is not covered by any subproblem");
  t.rows = std::move(rows);
  t.neighbors.assign(na, {});
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j)
      if (i != j && !t.overlap(i, j).empty()) t.neighbors[i].push_back(j);
  return t;
}

/// C(i) = nonzero rows of A_i.
inline Topology build_topology(const SeparableProblem& problem) {
  const auto nc = static_cast<Eigen::Index>(problem.n_c());
  std::vector<std::vector<Eigen::Index>> rows(problem.n_s());
  for (std::size_t i = 0; i < problem.n_s(); ++i) {
    const Matrix& A = problem.subproblems[i].coupling;
    if (A.rows() != nc) throw std::invalid_argument("build_topology: coupling row mismatch");
    for (Eigen::Index c = 0; c < nc; ++c)
      if (A.row(c).cwiseAbs().maxCoeff() > 0) rows[i].push_back(c);
  }
  return build_topology(std::move(rows), nc);
}

struct MessageLog {
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> edge_floats;        // inner iterations
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> setup_edge_floats;  // initialization exchange
  std::uint64_t global_sum_rounds = 0;
  std::uint64_t global_scalars = 0;
  std::uint64_t setup_global_scalars = 0;
  std::uint64_t inner_iterations = 0;
  std::vector<double> residuals;  // final residual of each inner run

  std::uint64_t floats(std::size_t from, std::size_t to) const {
    auto it = edge_floats.find({from, to});
    return it == edge_floats.end() ? 0 : it->second;
  }

  std::uint64_t total_floats() const {
    std::uint64_t n = global_scalars + setup_global_scalars;
    for (const auto& [k, v] : edge_floats) n += v;
    for (const auto& [k, v] : setup_edge_floats) n += v;
    return n;
  }

  void merge(const MessageLog& other) {
    for (const auto& [k, v] : other.edge_floats) edge_floats[k] += v;
    for (const auto& [k, v] : other.setup_edge_floats) setup_edge_floats[k] += v;
    global_sum_rounds += other.global_sum_rounds;
    global_scalars += other.global_scalars;
    setup_global_scalars += other.setup_global_scalars;
    inner_iterations += other.inner_iterations;
    residuals.insert(residuals.end(), other.residuals.begin(), other.residuals.end());
  }
};

/// Local Schur block of one agent, restricted to C(i).
struct LocalBlock {
  Matrix S;
  Vector s;
};

/// Restricts the global Schur pairs onto C(i) and folds the regularization
/// and right-hand-side shift, (1/mu) I and (1/mu) lambda - b, into the local
/// blocks: each row's share is split equally among the m_c agents holding it.
inline std::vector<LocalBlock> fold_schur(const Topology& topo, const std::vector<SchurPair>& pairs,
                                          const Vector& lambda, double mu, const Vector& b) {
  if (pairs.size() != topo.n_agents()) throw std::invalid_argument("fold_schur: agent count mismatch");
  if (!(mu > 0)) throw std::invalid_argument("fold_schur: mu must be positive");
  std::vector<LocalBlock> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto n = topo.size(i);
    LocalBlock& blk = out[i];
    blk.S.resize(n, n);
    blk.s.resize(n);
    for (Eigen::Index a = 0; a < n; ++a) {
      const Eigen::Index ca = topo.rows[i][static_cast<std::size_t>(a)];
      for (Eigen::Index bb = 0; bb < n; ++bb) blk.S(a, bb) = pairs[i].S(ca, topo.rows[i][static_cast<std::size_t>(bb)]);
      const double m = topo.multiplicity[ca];
      blk.S(a, a) += 1.0 / (mu * m);
      blk.s[a] = pairs[i].s[ca] + (lambda[ca] / mu - b[ca]) / m;
    }
  }
  return out;
}

/// Dense assembly of the partitioned system (oracle / diagnostics only).
inline SchurPair assemble_global(const Topology& topo, const std::vector<LocalBlock>& blocks) {
  SchurPair g{Matrix::Zero(topo.n_c, topo.n_c), Vector::Zero(topo.n_c)};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& r = topo.rows[i];
    for (std::size_t a = 0; a < r.size(); ++a) {
      g.s[r[a]] += blocks[i].s[static_cast<Eigen::Index>(a)];
      for (std::size_t bb = 0; bb < r.size(); ++bb)
        g.S(r[a], r[bb]) += blocks[i].S(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(bb));
    }
  }
  return g;
}

struct InnerResult {
  Vector lambda;
  MessageLog log;
  double residual = 0.0;          // ||S~ lambda - s~||_2
  double initial_residual = 0.0;  // ||S~ lambda^0 - s~||_2
  double agreement = 0.0;         // D-ADMM: max ||lambda_i - I_C(i) lambda-bar||_inf
  int iterations = 0;
};

/// Initial dual for the next inner run: the previous lambda_qp when warm
/// starting is on, zero otherwise.
inline Vector warm_start(const Vector& previous, bool enabled, Eigen::Index n_c) {
  if (enabled && previous.size() == n_c) return previous;
  return Vector::Zero(n_c);
}

namespace detail {

// One neighbor round: every agent i sends the overlap part of its vector
// v_i to every neighbor j; the receiver sums the contributions of all agents
// holding each row (including itself) in ascending agent order.
inline std::vector<Vector> exchange_sum(const Topology& topo, const std::vector<Vector>& v,
                                        std::map<std::pair<std::size_t, std::size_t>, std::uint64_t>& counter) {
  const std::size_t na = topo.n_agents();
  std::vector<Vector> out(na);
  for (std::size_t i = 0; i < na; ++i) {
    out[i] = Vector::Zero(topo.size(i));
    for (std::size_t j = 0; j < na; ++j) {
      if (j != i && topo.overlap(i, j).empty()) continue;
      for (Eigen::Index c : topo.overlap(i, j)) {
        const auto li = topo.local_index[i][static_cast<std::size_t>(c)];
        const auto lj = topo.local_index[j][static_cast<std::size_t>(c)];
        out[i][li] += v[j][lj];
      }
      if (j != i) counter[{j, i}] += topo.overlap(i, j).size();
    }
  }
  return out;
}

inline double global_residual(const Topology& topo, const std::vector<LocalBlock>& blocks, const Vector& lambda) {
  const SchurPair g = assemble_global(topo, blocks);
  return (g.S * lambda - g.s).norm();
}

}  // namespace detail

/// D-ADMM: local prox solve, neighbor averaging (self included), dual update.
inline InnerResult run_dadmm(const Topology& topo, const std::vector<LocalBlock>& blocks, const Vector& lambda0,
                             double rho, int n_iter, bool parallel = false) {
  const std::size_t na = topo.n_agents();
  if (blocks.size() != na) throw std::invalid_argument("run_dadmm: agent count mismatch");
  if (!(rho > 0)) throw std::invalid_argument("run_dadmm: rho must be positive");
  if (lambda0.size() != topo.n_c) throw std::invalid_argument("run_dadmm: lambda0 length mismatch");
  InnerResult res;
  res.initial_residual = detail::global_residual(topo, blocks, lambda0);

  std::vector<Eigen::LLT<Matrix>> fac(na);
  std::vector<Vector> lam(na), bar(na), gam(na);
  for (std::size_t i = 0; i < na; ++i) {
    const auto n = topo.size(i);
    fac[i].compute(blocks[i].S + rho * Matrix::Identity(n, n));
    if (fac[i].info() != Eigen::Success) throw DecentralError("run_dadmm: local block is not positive definite");
    bar[i] = topo.restrict(i, lambda0);
    gam[i] = Vector::Zero(n);
    lam[i] = bar[i];
  }
  std::vector<Vector> inv_mult(na);
  for (std::size_t i = 0; i < na; ++i) inv_mult[i] = topo.lambda_diag(i).cwiseInverse();

  for (int it = 0; it < n_iter; ++it) {
    parallel_for(na, parallel, [&](std::size_t i) {
      lam[i] = fac[i].solve(Vector(blocks[i].s - gam[i] + rho * bar[i]));
    });
    std::vector<Vector> sums = detail::exchange_sum(topo, lam, res.log.edge_floats);
    parallel_for(na, parallel, [&](std::size_t i) {
      bar[i] = sums[i].cwiseProduct(inv_mult[i]);
      gam[i] += rho * (lam[i] - bar[i]);
    });
    ++res.iterations;
  }

  res.lambda = Vector::Zero(topo.n_c);
  std::vector<bool> set(static_cast<std::size_t>(topo.n_c), false);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t k = 0; k < topo.rows[i].size(); ++k) {
      const auto c = topo.rows[i][k];
      if (!set[static_cast<std::size_t>(c)]) {
        res.lambda[c] = bar[i][static_cast<Eigen::Index>(k)];
        set[static_cast<std::size_t>(c)] = true;
      }
    }
  for (std::size_t i = 0; i < na; ++i)
    res.agreement = std::max(res.agreement, inf_norm(Vector(lam[i] - topo.restrict(i, res.lambda))));
  res.residual = detail::global_residual(topo, blocks, res.lambda);
  res.log.inner_iterations = static_cast<std::uint64_t>(res.iterations);
  res.log.residuals.push_back(res.residual);
  return res;
}

/// D-CG: conjugate gradients on the partitioned system. Each agent holds the
/// restriction of the global lambda, r, p. Setup: two neighbor rounds (r0 and
/// s~). Per iteration: one neighbor round (overlap of S^_i p_i) and two scalar
/// global sums (sigma, eta).
inline InnerResult run_dcg(const Topology& topo, const std::vector<LocalBlock>& blocks, const Vector& lambda0,
                           int n_iter, bool parallel = false) {
  const std::size_t na = topo.n_agents();
  if (blocks.size() != na) throw std::invalid_argument("run_dcg: agent count mismatch");
  if (lambda0.size() != topo.n_c) throw std::invalid_argument("run_dcg: lambda0 length mismatch");
  InnerResult res;

  std::vector<Vector> lam(na), r(na), p(na), w(na), inv_mult(na);
  for (std::size_t i = 0; i < na; ++i) {
    lam[i] = topo.restrict(i, lambda0);
    w[i] = blocks[i].s - blocks[i].S * lam[i];
    inv_mult[i] = topo.lambda_diag(i).cwiseInverse();
  }
  // consistent initialization: r_i = I_C(i) (s~ - S~ lambda0)
  r = detail::exchange_sum(topo, w, res.log.setup_edge_floats);
  auto weighted_sum = [&](const std::vector<Vector>& a, const std::vector<Vector>& b, bool weighted) {
    double acc = 0.0;
    for (std::size_t i = 0; i < na; ++i)  // fixed agent order
      acc += weighted ? a[i].dot(b[i].cwiseProduct(inv_mult[i])) : a[i].dot(b[i]);
    return acc;
  };
  double eta = weighted_sum(r, r, true);
  res.log.setup_global_scalars += na;
  res.initial_residual = std::sqrt(eta);
  // stop relative to max(|r0|, |s~|) so an exact lambda0 (r0 at rounding
  // level) terminates at once
  std::vector<Vector> rhs(na);
  for (std::size_t i = 0; i < na; ++i) rhs[i] = blocks[i].s;
  rhs = detail::exchange_sum(topo, rhs, res.log.setup_edge_floats);
  res.log.setup_global_scalars += na;
  const double stop = 1e-13 * std::max(res.initial_residual, std::sqrt(weighted_sum(rhs, rhs, true)));
  p = r;

  for (int it = 0; it < n_iter; ++it) {
    if (eta <= 0.0 || std::sqrt(eta) <= stop) break;
    parallel_for(na, parallel, [&](std::size_t i) { w[i] = blocks[i].S * p[i]; });
    const double sigma = weighted_sum(p, w, false);
    std::vector<Vector> u = detail::exchange_sum(topo, w, res.log.edge_floats);
    if (!(sigma > 0))
      throw DecentralError("run_dcg: breakdown (p' S p = " + std::to_string(sigma) + " at inner iteration " +
                           std::to_string(it) + ")");
    const double alpha = eta / sigma;
    parallel_for(na, parallel, [&](std::size_t i) {
      lam[i] += alpha * p[i];
      r[i] -= alpha * u[i];
    });
    const double eta_new = weighted_sum(r, r, true);
    const double beta = eta_new / eta;
    parallel_for(na, parallel, [&](std::size_t i) { p[i] = r[i] + beta * p[i]; });
    eta = eta_new;
    res.log.global_sum_rounds += 2;
    res.log.global_scalars += 2 * na;
    ++res.iterations;
  }

  res.lambda = Vector::Zero(topo.n_c);
  std::vector<bool> set(static_cast<std::size_t>(topo.n_c), false);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t k = 0; k < topo.rows[i].size(); ++k) {
      const auto c = topo.rows[i][k];
      if (!set[static_cast<std::size_t>(c)]) {
        res.lambda[c] = lam[i][static_cast<Eigen::Index>(k)];
        set[static_cast<std::size_t>(c)] = true;
      }
    }
  res.residual = detail::global_residual(topo, blocks, res.lambda);
  res.log.inner_iterations = static_cast<std::uint64_t>(res.iterations);
  res.log.residuals.push_back(res.residual);
  return res;
}

}  // namespace aladin
