#pragma once

// Outer loops: ALADIN (full-space, nullspace and bi-level coordination) and
// the consensus-ADMM baseline, with per-iteration diagnostics.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aladin/coordination.hpp"
#include "aladin/decentral.hpp"
#include "aladin/linalg.hpp"
#include "aladin/local_solver.hpp"
#include "aladin/parallel.hpp"
#include "aladin/problem.hpp"
#include "aladin/sensitivity.hpp"

namespace aladin {

enum class Termination { tolerance_met, max_iterations, error };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::tolerance_met: return "tolerance-met";
    case Termination::max_iterations: return "max-iterations";
    case Termination::error: return "error";
  }
  return "?";
}

struct PhaseTimings {
  double local = 0.0;        // parallelizable step
  double sensitivity = 0.0;  // gradients, Hessians, Jacobians, nullspace
  double regularization = 0.0;
  double qp = 0.0;           // coordination (assembly and solve)
  double inner = 0.0;        // decentralized inner solver (bi-level only)

  PhaseTimings& operator+=(const PhaseTimings& o) {
    local += o.local;
    sensitivity += o.sensitivity;
    regularization += o.regularization;
    qp += o.qp;
    inner += o.inner;
    return *this;
  }
};

struct IterationRecord {
  int iter = 0;
  double consensus_viol = 0.0;  // ||sum A x - b||_inf
  double local_step = 0.0;      // ||x - z||_inf
  double qp_step = 0.0;         // ||dx||_inf
  std::size_t active_changes = 0;
  std::uint64_t comms_floats = 0;
  double inner_residual = std::numeric_limits<double>::quiet_NaN();
  int inner_iterations = 0;
  PhaseTimings time;
};

struct IterationLog {
  std::vector<IterationRecord> records;
  std::size_t size() const { return records.size(); }
  const IterationRecord& back() const { return records.back(); }
};

struct IterateState {
  int k = 0;
  std::vector<Vector> z;
  Vector lambda;
  std::vector<LocalSolution> local;
  ScalingState scaling;
  std::vector<Matrix> bfgs;            // Hessian approximations (BFGS modes)
  std::vector<Vector> prev_x;          // for BFGS steps
  std::vector<Vector> prev_lag_grad;
  std::vector<ActiveSet> active;
  Vector lambda_qp;                    // last coordination dual (inner warm start)
};

struct Solution {
  std::vector<Vector> x;
  Vector lambda;
  Termination reason = Termination::max_iterations;
  std::string message;
  int iterations = 0;
  double consensus_violation = 0.0;
  double local_step = 0.0;
  double local_kkt = 0.0;  // worst local KKT error of the returned x
  IterationLog log;
  MessageLog messages;
  PhaseTimings time;
  double setup_time = 0.0;
  double total_time = 0.0;
  std::vector<Matrix> hessians;  // last B_i (full space)
};

/// Called after every completed iteration with the updated state (z, lambda
/// already moved) and the record just logged.
using IterationObserver = std::function<void(const IterateState&, const IterationRecord&)>;

struct RunSetup {
  std::optional<std::vector<Vector>> z0;
  std::optional<Vector> lambda0;
  IterationObserver observer;
};

namespace detail {

using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline double max_local_step(const std::vector<Vector>& x, const std::vector<Vector>& z) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, inf_norm(Vector(x[i] - z[i])));
  return m;
}

/// Gradient of f + kappa' g + gamma' h at x (box terms are constant in x).
inline Vector lagrangian_gradient(const Subproblem& sub, const Vector& x, const Vector& p, const Vector& kappa,
                                  const Vector& gamma) {
  Vector gr = sub.objective.gradient(x, p);
  if (sub.n_g()) gr += sub.equalities.jacobian(x, p).transpose() * kappa;
  if (sub.n_h()) gr += sub.inequalities.jacobian(x, p).transpose() * gamma;
  return gr;
}

/// Exact Hessian of f + kappa' g + gamma_A' h_A (inactive h dropped).
inline Matrix exact_hessian(const Subproblem& sub, const Vector& x, const Vector& p, const LocalSolution& sol,
                            const ActiveSet& act) {
  const auto mh = sub.n_h();
  Vector w = Vector::Zero(static_cast<Eigen::Index>(mh));
  for (std::size_t j : act.indices)
    if (j < mh) w[static_cast<Eigen::Index>(j)] = sol.gamma[static_cast<Eigen::Index>(j)];
  Matrix H = sub.objective.weighted_hessian(x, p, Vector::Ones(1));
  if (sub.n_g()) H += sub.equalities.weighted_hessian(x, p, sol.kappa);
  if (mh) H += sub.inequalities.weighted_hessian(x, p, w);
  return 0.5 * (H + H.transpose());
}

inline std::vector<Vector> initial_z(const SeparableProblem& problem, const RunSetup& setup) {
  std::vector<Vector> z;
  if (setup.z0) {
    z = *setup.z0;
    if (z.size() != problem.n_s()) throw std::invalid_argument("initial z: block count mismatch");
    for (std::size_t i = 0; i < z.size(); ++i)
      if (z[i].size() != static_cast<Eigen::Index>(problem.subproblems[i].n_x()))
        throw std::invalid_argument("initial z: length mismatch in block " + std::to_string(i));
  } else {
    for (const auto& s : problem.subproblems) z.push_back(s.initial);
  }
  return z;
}

/// Inexact local solves: max(1e-10, 1e-2 * violation), but never looser than
/// tau / 100 so that active constraints end up inside the activity margin.
inline double local_tolerance(double violation, double tau) {
  return std::max(1e-10, std::min(1e-2 * violation, 1e-2 * tau));
}

}  // namespace detail

/// The ALADIN outer loop; opts.variant selects the coordination path.
inline Solution run_aladin(const SeparableProblem& problem, const SolverOptions& opts, const RunSetup& setup = {}) {
  using detail::Clock;
  const auto t_start = Clock::now();
  opts.validate();
  require_valid(problem);
  const std::size_t ns = problem.n_s();
  const auto nc = static_cast<Eigen::Index>(problem.n_c());
  const Vector b = problem.b();

  IterateState st;
  st.z = detail::initial_z(problem, setup);
  st.lambda = setup.lambda0 ? *setup.lambda0 : Vector::Zero(nc);
  if (st.lambda.size() != nc) throw std::invalid_argument("initial lambda: length mismatch");
  st.scaling = ScalingState::initial(problem, opts);
  st.local.resize(ns);
  st.active.resize(ns);
  st.bfgs.resize(ns);
  st.prev_x.resize(ns);
  st.prev_lag_grad.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    const auto n = static_cast<Eigen::Index>(problem.subproblems[i].n_x());
    st.bfgs[i] = Matrix::Identity(n, n);
  }
  const bool bilevel = opts.variant == Variant::bilevel;
  const bool reduced = opts.variant != Variant::fullspace;
  std::optional<Topology> topo;
  if (bilevel && nc > 0) topo = build_topology(problem);

  Solution sol;
  sol.setup_time = detail::seconds_since(t_start);
  std::vector<bool> have_local(ns, false);
  double viol = inf_norm(problem.consensus_residual(st.z));
  std::vector<Vector> x(ns);

  auto finish = [&](Termination reason, std::string msg) {
    sol.reason = reason;
    sol.message = std::move(msg);
    sol.lambda = st.lambda;
    sol.total_time = detail::seconds_since(t_start);
    for (const auto& r : sol.log.records) sol.time += r.time;
    if (!sol.x.empty()) {
      sol.consensus_violation = inf_norm(problem.consensus_residual(sol.x));
      sol.local_step = detail::max_local_step(sol.x, st.z);
    }
    return sol;
  };

  for (int k = 0; k < opts.max_iter; ++k) {
    st.k = k;
    IterationRecord rec;
    rec.iter = k;
    try {
      // 1. parallelizable step
      auto t0 = Clock::now();
      const double tol = detail::local_tolerance(viol, opts.act_margin);
      std::vector<LocalSolution> next(ns);
      parallel_for(ns, opts.parallel, [&](std::size_t i) {
        const Subproblem& sub = problem.subproblems[i];
        const LocalSolution* warm = have_local[i] ? &st.local[i] : nullptr;
        next[i] = solve_local(sub, st.z[i], st.lambda, st.scaling.sigma[i], sub.parameters, warm, tol);
        if (next[i].status == LocalStatus::infeasible)
          throw std::runtime_error("local problem " + std::to_string(i) + " is infeasible");
      });
      st.local = std::move(next);
      for (std::size_t i = 0; i < ns; ++i) {
        have_local[i] = true;
        x[i] = st.local[i].x;
        if (!(inf_norm(x[i]) <= 1e10)) throw std::runtime_error("divergence: ||x|| exceeds 1e10");
      }
      rec.time.local = detail::seconds_since(t0);

      // 2. termination check
      const Vector cres = problem.consensus_residual(x);
      viol = inf_norm(cres);
      rec.consensus_viol = viol;
      rec.local_step = detail::max_local_step(x, st.z);
      sol.x = x;
      sol.iterations = k + 1;
      sol.local_kkt = 0.0;
      for (const auto& l : st.local) sol.local_kkt = std::max(sol.local_kkt, l.kkt_error);

      // 3. sensitivities (active sets are also needed for the log)
      t0 = Clock::now();
      std::vector<ActiveSet> act(ns);
      parallel_for(ns, opts.parallel, [&](std::size_t i) {
        const Subproblem& sub = problem.subproblems[i];
        act[i] = detect_active(sub, x[i], sub.parameters, opts.act_margin);
      });
      for (std::size_t i = 0; i < ns; ++i)
        rec.active_changes += symmetric_difference_size(act[i], st.active[i]);
      st.active = act;

      if (opts.term_eps > 0 && viol <= opts.term_eps && rec.local_step <= opts.term_eps) {
        sol.log.records.push_back(rec);
        if (setup.observer) setup.observer(st, rec);
        return finish(Termination::tolerance_met, "tolerance met");
      }

      std::vector<SensitivityPack> packs(ns);
      std::vector<ReducedTriple> triples(reduced ? ns : 0);
      std::vector<Matrix> Z(reduced ? ns : 0);
      std::vector<double> reg_time(ns, 0.0);
      parallel_for(ns, opts.parallel, [&](std::size_t i) {
        const Subproblem& sub = problem.subproblems[i];
        const Vector& p = sub.parameters;
        SensitivityPack& pk = packs[i];
        pk.active = act[i];
        pk.gradient = sub.objective.gradient(x[i], p);
        pk.jacobian = active_jacobian(sub, x[i], p, act[i]);
        Matrix H;
        if (opts.hessian == HessianMode::exact) {
          H = detail::exact_hessian(sub, x[i], p, st.local[i], act[i]);
        } else {
          const Vector lg = detail::lagrangian_gradient(sub, x[i], p, st.local[i].kappa, st.local[i].gamma);
          if (st.prev_x[i].size()) {
            const Vector lg_prev =
                detail::lagrangian_gradient(sub, st.prev_x[i], p, st.local[i].kappa, st.local[i].gamma);
            st.bfgs[i] = bfgs_update(st.bfgs[i], x[i] - st.prev_x[i], lg - lg_prev,
                                     opts.hessian == HessianMode::dbfgs);
          }
          st.prev_x[i] = x[i];
          st.prev_lag_grad[i] = lg;
          H = st.bfgs[i];
        }
        // B = reg(H) in every variant; the reduced Hessian Z'BZ is then
        // re-regularized, which only matters if B itself was not.
        const bool do_reg = opts.reg && opts.hessian == HessianMode::exact;
        auto tr = Clock::now();
        pk.hessian = do_reg ? regularize(H, opts.reg_param) : H;
        reg_time[i] = detail::seconds_since(tr);
        if (reduced) {
          pk.nullspace = nullspace_basis(pk.jacobian, static_cast<Eigen::Index>(sub.n_x()));
          tr = Clock::now();
          triples[i] = reduce(pk, sub.coupling, opts.reg_param, do_reg);
          reg_time[i] += detail::seconds_since(tr);
          Z[i] = *pk.nullspace;
        }
      });
      for (double r : reg_time) rec.time.regularization += r;
      rec.time.sensitivity = detail::seconds_since(t0);
      sol.hessians.clear();
      for (const auto& pk : packs) sol.hessians.push_back(pk.hessian);

      // 4. coordination
      t0 = Clock::now();
      CoordinationResult cr;
      if (!reduced) {
        cr = solve_coordination_full(packs, problem, x, st.lambda, st.scaling.delta);
      } else {
        std::vector<Vector> offsets(ns);
        for (std::size_t i = 0; i < ns; ++i) offsets[i] = problem.subproblems[i].coupling * x[i];
        if (!bilevel || nc == 0) {
          cr = solve_coordination_reduced(triples, Z, offsets, st.lambda, st.scaling.delta, b);
        } else {
          const double mu = st.scaling.mu();
          std::vector<SchurPair> pairs(ns);
          parallel_for(ns, opts.parallel, [&](std::size_t i) { pairs[i] = schur_contribution_at(triples[i], offsets[i]); });
          const auto blocks = fold_schur(*topo, pairs, st.lambda, mu, b);
          const Vector l0 = warm_start(st.lambda_qp, opts.warm_start, nc);
          const auto ti = Clock::now();
          InnerResult inner = opts.inner_alg == InnerAlgorithm::dcg
                                  ? run_dcg(*topo, blocks, l0, opts.inner_iter, opts.parallel)
                                  : run_dadmm(*topo, blocks, l0, opts.rho_adm, opts.inner_iter, opts.parallel);
          rec.time.inner = detail::seconds_since(ti);
          rec.inner_residual = inner.residual;
          rec.inner_iterations = inner.iterations;
          rec.comms_floats = inner.log.total_floats();
          sol.messages.merge(inner.log);
          recover_reduced_steps(triples, Z, inner.lambda, cr);
          cr.kkt_residual = inner.residual;
          cr.slack = (inner.lambda - st.lambda) / mu;
        }
      }
      rec.time.qp = detail::seconds_since(t0) - rec.time.inner;
      for (const auto& d : cr.dx) rec.qp_step = std::max(rec.qp_step, inf_norm(d));
      st.lambda_qp = cr.lambda_qp;

      // 5. step
      for (std::size_t i = 0; i < ns; ++i) st.z[i] += opts.step_size * (x[i] + cr.dx[i] - st.z[i]);
      st.lambda += opts.step_size * (cr.lambda_qp - st.lambda);

      // 6. scaling
      st.scaling = update_sigma(std::move(st.scaling), opts, !opts.del_up);
      if (opts.del_up && st.scaling.prev_violation.size() == nc) {
        const Vector prev = st.scaling.prev_violation;  // the by-value argument below is moved from st.scaling
        st.scaling = update_delta_by_violation(std::move(st.scaling), cres, prev, opts);
      }
      st.scaling.prev_violation = cres;
    } catch (const std::exception& e) {
      sol.log.records.push_back(rec);
      return finish(Termination::error, "iteration " + std::to_string(k) + ": " + e.what());
    }
    sol.log.records.push_back(rec);
    if (setup.observer) setup.observer(st, rec);
  }
  return finish(Termination::max_iterations, "maximum number of iterations reached");
}

/// Consensus ADMM baseline:
///   x_i <- argmin f_i + lambda' A_i x_i + (rho/2) ||A_i (x_i - z_i)||^2   (local constraints)
///   z   <- argmin sum (rho/2) ||A_i (x_i - z_i)||^2  s.t. sum A_i z_i = b
///   lambda <- lambda + rho (sum A_i x_i - b)
/// The z-step is solved in terms of w_i = A_i z_i with P_i the projector on
/// range(A_i): w_i = A_i x_i + P_i (sum P_j)^{-1} (b - sum A_j x_j), and
/// z_i = x_i + pinv(A_i) (w_i - A_i x_i).
inline Solution run_admm(const SeparableProblem& problem, const SolverOptions& opts, const RunSetup& setup = {}) {
  using detail::Clock;
  const auto t_start = Clock::now();
  opts.validate();
  require_valid(problem);
  const std::size_t ns = problem.n_s();
  const auto nc = static_cast<Eigen::Index>(problem.n_c());
  const double rho = opts.rho_adm;

  IterateState st;
  st.z = detail::initial_z(problem, setup);
  st.lambda = setup.lambda0 ? *setup.lambda0 : Vector::Zero(nc);
  if (st.lambda.size() != nc) throw std::invalid_argument("initial lambda: length mismatch");
  st.local.resize(ns);

  std::vector<Matrix> pinv(ns), metric(ns);
  Matrix Psum = Matrix::Zero(nc, nc);
  for (std::size_t i = 0; i < ns; ++i) {
    const Matrix& A = problem.subproblems[i].coupling;
    metric[i] = 0.5 * rho * A.transpose() * A;
    if (nc == 0) {
      pinv[i] = Matrix::Zero(A.cols(), 0);
      continue;
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    pinv[i] = cod.pseudoInverse();
    Psum += A * pinv[i];
  }
  Eigen::LDLT<Matrix> Pfac;
  if (nc > 0) {
    Psum = 0.5 * (Psum + Psum.transpose());
    Pfac.compute(Psum);
    if (Pfac.info() != Eigen::Success || Pfac.vectorD().minCoeff() < 1e-12)
      throw std::invalid_argument("admm: stacked coupling matrix does not have full row rank");
  }

  Solution sol;
  sol.setup_time = detail::seconds_since(t_start);
  std::vector<bool> have_local(ns, false);
  double viol = inf_norm(problem.consensus_residual(st.z));
  std::vector<Vector> x(ns);

  auto finish = [&](Termination reason, std::string msg) {
    sol.reason = reason;
    sol.message = std::move(msg);
    sol.lambda = st.lambda;
    sol.total_time = detail::seconds_since(t_start);
    for (const auto& r : sol.log.records) sol.time += r.time;
    if (!sol.x.empty()) sol.consensus_violation = inf_norm(problem.consensus_residual(sol.x));
    return sol;
  };

  for (int k = 0; k < opts.max_iter; ++k) {
    st.k = k;
    IterationRecord rec;
    rec.iter = k;
    try {
      auto t0 = Clock::now();
      const double tol = detail::local_tolerance(viol, opts.act_margin);
      std::vector<LocalSolution> next(ns);
      parallel_for(ns, opts.parallel, [&](std::size_t i) {
        const Subproblem& sub = problem.subproblems[i];
        const LocalSolution* warm = have_local[i] ? &st.local[i] : nullptr;
        const Vector lin = sub.coupling.transpose() * st.lambda;
        next[i] = solve_proximal(sub, lin, metric[i], st.z[i], sub.parameters, warm, tol);
        if (next[i].status == LocalStatus::infeasible)
          throw std::runtime_error("local problem " + std::to_string(i) + " is infeasible");
      });
      st.local = std::move(next);
      for (std::size_t i = 0; i < ns; ++i) {
        have_local[i] = true;
        x[i] = st.local[i].x;
        if (!(inf_norm(x[i]) <= 1e10)) throw std::runtime_error("divergence: ||x|| exceeds 1e10");
      }
      rec.time.local = detail::seconds_since(t0);

      const Vector cres = problem.consensus_residual(x);
      viol = inf_norm(cres);
      rec.consensus_viol = viol;
      rec.local_step = detail::max_local_step(x, st.z);
      sol.x = x;
      sol.iterations = k + 1;
      std::vector<ActiveSet> act(ns);
      for (std::size_t i = 0; i < ns; ++i) {
        const Subproblem& sub = problem.subproblems[i];
        act[i] = detect_active(sub, x[i], sub.parameters, opts.act_margin);
        rec.active_changes += symmetric_difference_size(act[i], st.active.size() ? st.active[i] : ActiveSet{});
      }
      st.active = act;
      if (opts.term_eps > 0 && viol <= opts.term_eps && rec.local_step <= opts.term_eps) {
        sol.log.records.push_back(rec);
        if (setup.observer) setup.observer(st, rec);
        return finish(Termination::tolerance_met, "tolerance met");
      }

      t0 = Clock::now();
      if (nc > 0) {
        const Vector weighted = Pfac.solve(cres);  // (sum P)^{-1} (sum A x - b)
        for (std::size_t i = 0; i < ns; ++i) {
          const Matrix& A = problem.subproblems[i].coupling;
          const Vector dw = -(A * pinv[i]) * weighted;  // w_i - A_i x_i
          const Vector znew = x[i] + pinv[i] * dw;
          rec.qp_step = std::max(rec.qp_step, inf_norm(Vector(znew - x[i])));
          st.z[i] = znew;
        }
        st.lambda += rho * cres;
      } else {
        for (std::size_t i = 0; i < ns; ++i) st.z[i] = x[i];
      }
      rec.time.qp = detail::seconds_since(t0);
    } catch (const std::exception& e) {
      sol.log.records.push_back(rec);
      return finish(Termination::error, "iteration " + std::to_string(k) + ": " + e.what());
    }
    sol.log.records.push_back(rec);
    if (setup.observer) setup.observer(st, rec);
  }
  return finish(Termination::max_iterations, "maximum number of iterations reached");
}

}  // namespace aladin
