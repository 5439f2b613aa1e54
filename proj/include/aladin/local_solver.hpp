#pragma once

// Local step: primal-dual interior-point solver for
//
//   min  f(x, p) + c' x + (x - z)' M (x - z)
//   s.t. g(x, p) = 0,  h(x, p) <= 0,  lb <= x <= ub
//
// with c = A' lambda and M = Sigma for the ALADIN local problem. Inequalities
// get slacks, bounds are handled by log barriers on x directly. Newton steps
// solve the symmetric indefinite primal-dual system with inertia correction.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aladin/linalg.hpp"
#include "aladin/problem.hpp"

namespace aladin {

enum class LocalStatus { converged, max_iterations, infeasible };

inline const char* to_string(LocalStatus s) {
  switch (s) {
    case LocalStatus::converged: return "converged";
    case LocalStatus::max_iterations: return "max-iterations";
    case LocalStatus::infeasible: return "infeasible";
  }
  return "?";
}

struct LocalSolution {
  Vector x;
  Vector kappa;  // equality multipliers, n_g
  Vector gamma;  // inequality multipliers, n_h, >= 0
  Vector eta;    // box multipliers, 2 n_x: [lower; upper], >= 0
  Vector slack;  // h + slack = 0 at convergence; kept for warm starts
  LocalStatus status = LocalStatus::converged;
  int iterations = 0;
  double kkt_error = 0.0;
};

struct LocalSolverSettings {
  int max_iter = 100;
  double fraction_to_boundary = 0.995;
  double barrier_factor = 0.2;
  double initial_barrier = 0.1;
  int stall_window = 10;
};

/// Unscaled KKT residuals of the local problem at a given primal-dual point.
struct LocalKKTReport {
  double stationarity = 0.0;    // ||grad L||_inf
  double equality = 0.0;        // ||g||_inf
  double inequality = 0.0;      // max(0, max h)
  double complementarity = 0.0; // max |gamma_j h_j|, |eta (x - bound)|
  double max_error() const { return std::max({stationarity, equality, inequality, complementarity}); }
};

namespace detail {

struct IpmPoint {
  Vector x, s, kappa, gamma, eta_l, eta_u;
};

struct IpmEval {
  Vector grad;     // gradient of the smooth objective part
  Vector g, h;
  Matrix Jg, Jh;
};

class LocalIpm {
 public:
  LocalIpm(const Subproblem& sub, const Vector& lin, const Matrix& metric, const Vector& center, const Vector& p,
           const LocalSolverSettings& settings)
      : sub_(sub), lin_(lin), metric_(metric), center_(center), p_(p), set_(settings) {
    n_ = static_cast<Eigen::Index>(sub.n_x());
    mg_ = static_cast<Eigen::Index>(sub.n_g());
    mh_ = static_cast<Eigen::Index>(sub.n_h());
    has_l_.resize(n_);
    has_u_.resize(n_);
    lb_ = sub.lower;
    ub_ = sub.upper;
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (std::isfinite(lb_[j]) && std::isfinite(ub_[j]) && lb_[j] == ub_[j]) {
        // fixed variable: open a tiny interior, the result is clamped back
        const double w = 1e-9 * std::max(1.0, std::abs(lb_[j]));
        lb_[j] -= w;
        ub_[j] += w;
      }
      has_l_[j] = std::isfinite(lb_[j]);
      has_u_[j] = std::isfinite(ub_[j]);
    }
  }

  LocalSolution run(const LocalSolution* warm, double tol) {
    IpmPoint pt = warm ? warm_point(*warm) : cold_point();
    double mu = set_.initial_barrier;
    if (warm) {
      const double comp = average_complementarity(pt);
      mu = std::clamp(comp, tol / 10, set_.initial_barrier);
    }
    const double mu_min = tol / 10;

    IpmEval ev = evaluate_at(pt.x);
    IpmPoint best = pt;
    double best_err = kkt_error(pt, ev, 0.0);
    double theta_prev = primal_infeasibility(pt, ev);
    int stall = 0;
    LocalStatus status = LocalStatus::max_iterations;
    int it = 0;

    for (;; ++it) {
      const double err0 = kkt_error(pt, ev, 0.0);
      if (err0 < best_err) {
        best_err = err0;
        best = pt;
      }
      if (err0 <= tol) {
        status = LocalStatus::converged;
        best = pt;
        best_err = err0;
        break;
      }
      if (it >= set_.max_iter) break;

      while (mu > mu_min && kkt_error(pt, ev, mu) <= 10 * mu) {
        mu = std::max(mu_min, std::min(set_.barrier_factor * mu, std::pow(mu, 1.5)));
      }

      const Matrix W = hessian(pt);
      Vector dx, dk, dg;
      newton_direction(pt, ev, W, mu, dx, dk, dg);

      Vector ds(mh_), dl(n_), du(n_);
      for (Eigen::Index j = 0; j < mh_; ++j) ds[j] = -pt.s[j] + mu / pt.gamma[j] - (pt.s[j] / pt.gamma[j]) * dg[j];
      for (Eigen::Index j = 0; j < n_; ++j) {
        dl[j] = has_l_[j] ? mu / (pt.x[j] - lb_[j]) - pt.eta_l[j] - pt.eta_l[j] * dx[j] / (pt.x[j] - lb_[j]) : 0.0;
        du[j] = has_u_[j] ? mu / (ub_[j] - pt.x[j]) - pt.eta_u[j] + pt.eta_u[j] * dx[j] / (ub_[j] - pt.x[j]) : 0.0;
      }

      const double tau = std::max(set_.fraction_to_boundary, 1.0 - mu);
      double ap = 1.0, ad = 1.0;
      for (Eigen::Index j = 0; j < mh_; ++j) {
        if (ds[j] < 0) ap = std::min(ap, -tau * pt.s[j] / ds[j]);
        if (dg[j] < 0) ad = std::min(ad, -tau * pt.gamma[j] / dg[j]);
      }
      for (Eigen::Index j = 0; j < n_; ++j) {
        if (has_l_[j]) {
          if (dx[j] < 0) ap = std::min(ap, -tau * (pt.x[j] - lb_[j]) / dx[j]);
          if (dl[j] < 0) ad = std::min(ad, -tau * pt.eta_l[j] / dl[j]);
        }
        if (has_u_[j]) {
          if (dx[j] > 0) ap = std::min(ap, tau * (ub_[j] - pt.x[j]) / dx[j]);
          if (du[j] < 0) ad = std::min(ad, -tau * pt.eta_u[j] / du[j]);
        }
      }

      // backtracking on the barrier KKT residual
      const double merit0 = barrier_residual_norm(pt, ev, mu);
      double t = 1.0;
      IpmPoint trial;
      IpmEval trial_ev;
      bool accepted = false;
      for (int bt = 0; bt < 30; ++bt, t *= 0.5) {
        trial.x = pt.x + t * ap * dx;
        trial.s = pt.s + t * ap * ds;
        trial.kappa = pt.kappa + t * ad * dk;
        trial.gamma = pt.gamma + t * ad * dg;
        trial.eta_l = pt.eta_l + t * ad * dl;
        trial.eta_u = pt.eta_u + t * ad * du;
        keep_interior(trial.x);
        try {
          trial_ev = evaluate_at(trial.x);
        } catch (const DomainError&) {
          continue;
        }
        const double m = barrier_residual_norm(trial, trial_ev, mu);
        if (std::isfinite(m) && m <= (1.0 - 1e-4 * t) * merit0) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // take a short step anyway; the residual may be locally flat
        t = std::max(t, 1e-3);
        trial.x = pt.x + t * ap * dx;
        trial.s = pt.s + t * ap * ds;
        trial.kappa = pt.kappa + t * ad * dk;
        trial.gamma = pt.gamma + t * ad * dg;
        trial.eta_l = pt.eta_l + t * ad * dl;
        trial.eta_u = pt.eta_u + t * ad * du;
        keep_interior(trial.x);
        trial_ev = evaluate_at(trial.x);
      }
      pt = std::move(trial);
      ev = std::move(trial_ev);

      const double theta = primal_infeasibility(pt, ev);
      if (theta > tol && theta >= theta_prev) {
        if (++stall >= set_.stall_window) {
          status = LocalStatus::infeasible;
          ++it;
          break;
        }
      } else {
        stall = 0;
      }
      theta_prev = theta;
    }

    const IpmPoint& out = (status == LocalStatus::converged) ? pt : best;
    LocalSolution sol;
    sol.x = out.x;
    for (Eigen::Index j = 0; j < n_; ++j) sol.x[j] = std::clamp(sol.x[j], sub_.lower[j], sub_.upper[j]);
    sol.kappa = out.kappa;
    sol.gamma = out.gamma;
    sol.eta.resize(2 * n_);
    sol.eta << out.eta_l, out.eta_u;
    sol.slack = out.s;
    sol.status = status;
    sol.iterations = it;
    sol.kkt_error = (status == LocalStatus::converged) ? kkt_error(pt, ev, 0.0) : best_err;
    return sol;
  }

 private:
  double push(double bound_other_gap, double bound) const {
    return std::min(1e-2 * std::max(1.0, std::abs(bound)), 0.49 * bound_other_gap);
  }

  Vector interior(Vector x, double scale) const {
    for (Eigen::Index j = 0; j < n_; ++j) {
      const double gap = (has_l_[j] && has_u_[j]) ? ub_[j] - lb_[j] : kInf;
      if (has_l_[j]) {
        const double pl = scale * push(gap, lb_[j]);
        x[j] = std::max(x[j], lb_[j] + pl);
      }
      if (has_u_[j]) {
        const double pu = scale * push(gap, ub_[j]);
        x[j] = std::min(x[j], ub_[j] - pu);
      }
    }
    return x;
  }

  IpmPoint cold_point() const {
    IpmPoint pt;
    pt.x = interior(center_, 1.0);
    const Vector h = sub_.inequalities.evaluate(pt.x, p_);
    const double mu = set_.initial_barrier;
    pt.s.resize(mh_);
    pt.gamma.resize(mh_);
    for (Eigen::Index j = 0; j < mh_; ++j) {
      pt.s[j] = std::max(-h[j], 1e-2 * std::max(1.0, std::abs(h[j])));
      pt.gamma[j] = mu / pt.s[j];
    }
    pt.kappa = Vector::Zero(mg_);
    pt.eta_l = Vector::Zero(n_);
    pt.eta_u = Vector::Zero(n_);
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (has_l_[j]) pt.eta_l[j] = mu / (pt.x[j] - lb_[j]);
      if (has_u_[j]) pt.eta_u[j] = mu / (ub_[j] - pt.x[j]);
    }
    return pt;
  }

  // Repeated near-unit fraction-to-boundary steps can round x onto a bound.
  void keep_interior(Vector& x) const {
    constexpr double floor = 1e-14;
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (has_l_[j]) x[j] = std::max(x[j], lb_[j] + floor * std::max(1.0, std::abs(lb_[j])));
      if (has_u_[j]) x[j] = std::min(x[j], ub_[j] - floor * std::max(1.0, std::abs(ub_[j])));
    }
  }

  IpmPoint warm_point(const LocalSolution& w) const {
    if (w.x.size() != n_ || w.kappa.size() != mg_ || w.gamma.size() != mh_ || w.eta.size() != 2 * n_)
      throw std::invalid_argument("solve_local: warm start has inconsistent dimensions");
    constexpr double floor = 1e-14;
    IpmPoint pt;
    pt.x = w.x;
    keep_interior(pt.x);
    const Vector h = sub_.inequalities.evaluate(pt.x, p_);
    pt.s.resize(mh_);
    pt.gamma.resize(mh_);
    for (Eigen::Index j = 0; j < mh_; ++j) {
      const double s_prev = (w.slack.size() == mh_) ? w.slack[j] : 0.0;
      pt.s[j] = std::max({-h[j], s_prev, floor});
      pt.gamma[j] = std::max(w.gamma[j], floor);
    }
    pt.kappa = w.kappa;
    pt.eta_l = Vector::Zero(n_);
    pt.eta_u = Vector::Zero(n_);
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (has_l_[j]) pt.eta_l[j] = std::max(w.eta[j], floor);
      if (has_u_[j]) pt.eta_u[j] = std::max(w.eta[n_ + j], floor);
    }
    return pt;
  }

  double average_complementarity(const IpmPoint& pt) const {
    double sum = 0.0;
    int cnt = 0;
    for (Eigen::Index j = 0; j < mh_; ++j, ++cnt) sum += pt.s[j] * pt.gamma[j];
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (has_l_[j]) sum += (pt.x[j] - lb_[j]) * pt.eta_l[j], ++cnt;
      if (has_u_[j]) sum += (ub_[j] - pt.x[j]) * pt.eta_u[j], ++cnt;
    }
    return cnt ? sum / cnt : 0.0;
  }

  IpmEval evaluate_at(const Vector& x) const {
    IpmEval ev;
    ev.grad = sub_.objective.gradient(x, p_) + lin_ + 2.0 * (metric_ * (x - center_));
    ev.g = sub_.equalities.evaluate(x, p_);
    ev.h = sub_.inequalities.evaluate(x, p_);
    ev.Jg = sub_.equalities.jacobian(x, p_);
    ev.Jh = sub_.inequalities.jacobian(x, p_);
    if (!ev.grad.allFinite()) throw DomainError("non-finite objective gradient", "local objective");
    return ev;
  }

  Vector dual_residual(const IpmPoint& pt, const IpmEval& ev) const {
    Vector r = ev.grad - pt.eta_l + pt.eta_u;
    if (mg_) r += ev.Jg.transpose() * pt.kappa;
    if (mh_) r += ev.Jh.transpose() * pt.gamma;
    return r;
  }

  double primal_infeasibility(const IpmPoint& pt, const IpmEval& ev) const {
    double th = 0.0;
    if (mg_) th = std::max(th, ev.g.cwiseAbs().maxCoeff());
    if (mh_) th = std::max(th, (ev.h + pt.s).cwiseAbs().maxCoeff());
    return th;
  }

  // Max-norm KKT error of the barrier problem with parameter mu.
  double kkt_error(const IpmPoint& pt, const IpmEval& ev, double mu) const {
    double e = inf_norm(dual_residual(pt, ev));
    e = std::max(e, primal_infeasibility(pt, ev));
    for (Eigen::Index j = 0; j < mh_; ++j) {
      e = std::max(e, std::abs(pt.s[j] * pt.gamma[j] - mu));
      if (mu == 0.0) e = std::max(e, std::abs(pt.gamma[j] * ev.h[j]));
    }
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (has_l_[j]) e = std::max(e, std::abs((pt.x[j] - lb_[j]) * pt.eta_l[j] - mu));
      if (has_u_[j]) e = std::max(e, std::abs((ub_[j] - pt.x[j]) * pt.eta_u[j] - mu));
    }
    return e;
  }

  double barrier_residual_norm(const IpmPoint& pt, const IpmEval& ev, double mu) const {
    double sq = dual_residual(pt, ev).squaredNorm();
    if (mg_) sq += ev.g.squaredNorm();
    if (mh_) sq += (ev.h + pt.s).squaredNorm();
    for (Eigen::Index j = 0; j < mh_; ++j) sq += std::pow(pt.s[j] * pt.gamma[j] - mu, 2);
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (has_l_[j]) sq += std::pow((pt.x[j] - lb_[j]) * pt.eta_l[j] - mu, 2);
      if (has_u_[j]) sq += std::pow((ub_[j] - pt.x[j]) * pt.eta_u[j] - mu, 2);
    }
    return std::sqrt(sq);
  }

  Matrix hessian(const IpmPoint& pt) const {
    Matrix W = lagrangian_hessian(sub_.objective, sub_.equalities, sub_.inequalities, pt.x, p_, pt.kappa, pt.gamma);
    W += 2.0 * metric_;
    return W;
  }

  // Inequality rows are condensed into the primal block,
  //   (W + Sigma_b + Jh' (gamma/s) Jh) dx + Jg' dk = r,
  // since s/gamma spans many orders of magnitude between active and
  // inactive constraints and would swamp the pivot tolerance.
  void newton_direction(const IpmPoint& pt, const IpmEval& ev, const Matrix& W, double mu, Vector& dx, Vector& dk,
                        Vector& dg) const {
    const Eigen::Index N = n_ + mg_;
    Vector r1 = ev.grad;
    if (mg_) r1 += ev.Jg.transpose() * pt.kappa;
    if (mh_) r1 += ev.Jh.transpose() * pt.gamma;
    Vector sigma_b = Vector::Zero(n_);
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (has_l_[j]) {
        r1[j] -= mu / (pt.x[j] - lb_[j]);
        sigma_b[j] += pt.eta_l[j] / (pt.x[j] - lb_[j]);
      }
      if (has_u_[j]) {
        r1[j] += mu / (ub_[j] - pt.x[j]);
        sigma_b[j] += pt.eta_u[j] / (ub_[j] - pt.x[j]);
      }
    }
    // third block row: Jh dx - (s/gamma) dg = rh
    Vector rh(mh_), dinv(mh_);
    for (Eigen::Index j = 0; j < mh_; ++j) {
      rh[j] = -ev.h[j] - mu / pt.gamma[j];
      dinv[j] = pt.gamma[j] / pt.s[j];
    }
    Vector rhs(N);
    rhs.head(n_) = -r1;
    if (mh_) rhs.head(n_) += ev.Jh.transpose() * dinv.cwiseProduct(rh);
    if (mg_) rhs.tail(mg_) = -ev.g;
    Matrix Wc = W;
    Wc.diagonal() += sigma_b;
    if (mh_) Wc += ev.Jh.transpose() * dinv.asDiagonal() * ev.Jh;

    double delta_w = 0.0, delta_c = 0.0;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Matrix K = Matrix::Zero(N, N);
      K.topLeftCorner(n_, n_) = Wc;
      K.topLeftCorner(n_, n_).diagonal().array() += delta_w;
      if (mg_) {
        K.block(n_, 0, mg_, n_) = ev.Jg;
        K.block(0, n_, n_, mg_) = ev.Jg.transpose();
        K.block(n_, n_, mg_, mg_).diagonal().setConstant(-delta_c);
      }
      SymmetricIndefiniteLDLT f(K);
      const Inertia& in = f.inertia();
      if (in.zero == 0 && in.positive == n_ && in.negative == mg_) {
        Vector sol = f.solve(rhs);
        const Matrix Ks = K.selfadjointView<Eigen::Lower>();
        sol += f.solve(Vector(rhs - Ks * sol));
        dx = sol.head(n_);
        dk = sol.tail(mg_);
        dg = Vector(mh_);
        if (mh_) dg = dinv.cwiseProduct(ev.Jh * dx - rh);
        return;
      }
      if (in.zero > 0 && delta_c == 0.0 && mg_ > 0) delta_c = 1e-8 * std::max(1.0, mu);
      delta_w = (delta_w == 0.0) ? 1e-8 * std::max(1.0, Wc.diagonal().cwiseAbs().maxCoeff() * 1e-8) : delta_w * 10.0;
    }
    throw SingularMatrixError("local solver: could not correct the inertia of the Newton system");
  }

  const Subproblem& sub_;
  Vector lin_;
  Matrix metric_;
  Vector center_;
  Vector p_;
  LocalSolverSettings set_;
  Eigen::Index n_ = 0, mg_ = 0, mh_ = 0;
  Vector lb_, ub_;
  std::vector<bool> has_l_, has_u_;
};

}  // namespace detail

/// Solves min f + lin'x + (x - center)' metric (x - center) subject to the
/// subproblem's constraints. `metric` only needs to be positive semidefinite
/// as long as the problem has a unique solution.
inline LocalSolution solve_proximal(const Subproblem& sub, const Vector& lin, const Matrix& metric,
                                    const Vector& center, const Vector& p, const LocalSolution* warm, double tol,
                                    const LocalSolverSettings& settings = {}) {
  const auto n = static_cast<Eigen::Index>(sub.n_x());
  if (center.size() != n || lin.size() != n || metric.rows() != n || metric.cols() != n)
    throw std::invalid_argument("solve_local: dimension mismatch");
  if (static_cast<std::size_t>(p.size()) != sub.n_p()) throw std::invalid_argument("solve_local: parameter length mismatch");
  detail::LocalIpm ipm(sub, lin, metric, center, p, settings);
  return ipm.run(warm, tol);
}

/// The ALADIN local problem:
///   min f_i(x) + lambda' A_i x + ||x - z_i||^2_Sigma  s.t. local constraints.
inline LocalSolution solve_local(const Subproblem& sub, const Vector& z, const Vector& lambda, const Matrix& sigma,
                                 const Vector& p, const LocalSolution* warm, double tol,
                                 const LocalSolverSettings& settings = {}) {
  if (lambda.size() != sub.coupling.rows()) throw std::invalid_argument("solve_local: lambda length mismatch");
  if (sigma.rows() != static_cast<Eigen::Index>(sub.n_x()) || sigma.cols() != sigma.rows())
    throw std::invalid_argument("solve_local: Sigma dimension mismatch");
  if (sigma.size() && Eigen::LLT<Matrix>(sigma).info() != Eigen::Success)
    throw std::invalid_argument("solve_local: Sigma must be symmetric positive definite");
  const Vector lin = sub.coupling.transpose() * lambda;
  return solve_proximal(sub, lin, sigma, z, p, warm, tol, settings);
}

inline LocalSolution solve_local(const Subproblem& sub, const Vector& z, const Vector& lambda, const Matrix& sigma,
                                 const Vector& p, const std::optional<LocalSolution>& warm, double tol) {
  return solve_local(sub, z, lambda, sigma, p, warm ? &*warm : nullptr, tol);
}

/// KKT residuals of min f + lin'x + (x-z)'M(x-z) at a reported solution.
inline LocalKKTReport local_kkt_report(const Subproblem& sub, const Vector& lin, const Matrix& metric,
                                       const Vector& center, const Vector& p, const LocalSolution& sol) {
  const auto n = static_cast<Eigen::Index>(sub.n_x());
  LocalKKTReport r;
  Vector grad = sub.objective.gradient(sol.x, p) + lin + 2.0 * (metric * (sol.x - center));
  if (sub.n_g()) grad += sub.equalities.jacobian(sol.x, p).transpose() * sol.kappa;
  if (sub.n_h()) grad += sub.inequalities.jacobian(sol.x, p).transpose() * sol.gamma;
  grad -= sol.eta.head(n);
  grad += sol.eta.tail(n);
  r.stationarity = inf_norm(grad);
  const Vector g = sub.equalities.evaluate(sol.x, p);
  const Vector h = sub.inequalities.evaluate(sol.x, p);
  r.equality = inf_norm(g);
  r.inequality = h.size() ? std::max(0.0, h.maxCoeff()) : 0.0;
  for (Eigen::Index j = 0; j < h.size(); ++j) r.complementarity = std::max(r.complementarity, std::abs(sol.gamma[j] * h[j]));
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(sub.lower[j]))
      r.complementarity = std::max(r.complementarity, std::abs(sol.eta[j] * (sol.x[j] - sub.lower[j])));
    if (std::isfinite(sub.upper[j]))
      r.complementarity = std::max(r.complementarity, std::abs(sol.eta[n + j] * (sub.upper[j] - sol.x[j])));
  }
  return r;
}

}  // namespace aladin
