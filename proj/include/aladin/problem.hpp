#pragma once

// Partially separable problem data:
//
//   min  sum_i f_i(x_i, p_i)
//   s.t. g_i(x_i, p_i) = 0,  h_i(x_i, p_i) <= 0,  lb_i <= x_i <= ub_i,
//        sum_i A_i x_i = b.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "aladin/expr.hpp"

namespace aladin {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Subproblem {
  VectorFunction objective;     // scalar
  VectorFunction equalities;    // g_i, may have zero outputs
  VectorFunction inequalities;  // h_i, may have zero outputs
  Vector lower;                 // -inf allowed
  Vector upper;                 // +inf allowed
  Matrix coupling;              // A_i, n_c x n_x
  Vector parameters;            // p_i
  Vector initial;               // z_i^0

  std::size_t n_x() const { return objective.n_x(); }
  std::size_t n_p() const { return objective.n_p(); }
  std::size_t n_g() const { return equalities.n_out(); }
  std::size_t n_h() const { return inequalities.n_out(); }

  /// A subproblem with unbounded box, zero initial guess, no constraints.
  static Subproblem make(VectorFunction objective, Matrix coupling, Vector parameters = {}) {
    Subproblem s;
    const auto n = static_cast<Eigen::Index>(objective.n_x());
    s.equalities = VectorFunction::empty(objective.n_x(), objective.n_p());
    s.inequalities = VectorFunction::empty(objective.n_x(), objective.n_p());
    s.lower = Vector::Constant(n, -kInf);
    s.upper = Vector::Constant(n, kInf);
    s.initial = Vector::Zero(n);
    s.parameters = parameters.size() ? parameters : Vector::Zero(static_cast<Eigen::Index>(objective.n_p()));
    s.coupling = std::move(coupling);
    s.objective = std::move(objective);
    return s;
  }
};

struct SeparableProblem {
  std::vector<Subproblem> subproblems;
  Vector rhs;  // b; empty means zero vector of length n_c

  std::size_t n_s() const { return subproblems.size(); }
  std::size_t n_c() const {
    if (!subproblems.empty()) return static_cast<std::size_t>(subproblems.front().coupling.rows());
    return static_cast<std::size_t>(rhs.size());
  }
  Vector b() const { return rhs.size() ? rhs : Vector::Zero(static_cast<Eigen::Index>(n_c())); }

  /// sum_i A_i x_i - b
  Vector consensus_residual(const std::vector<Vector>& x) const {
    Vector r = -b();
    for (std::size_t i = 0; i < subproblems.size(); ++i) r += subproblems[i].coupling * x[i];
    return r;
  }
};

enum class HessianMode { exact, bfgs, dbfgs };
enum class Variant { fullspace, nullspace, bilevel };
enum class InnerAlgorithm { dcg, dadmm };

inline const char* to_string(HessianMode m) {
  switch (m) {
    case HessianMode::exact: return "exact";
    case HessianMode::bfgs: return "bfgs";
    case HessianMode::dbfgs: return "dbfgs";
  }
  return "?";
}
inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::fullspace: return "fullspace";
    case Variant::nullspace: return "nullspace";
    case Variant::bilevel: return "bilevel";
  }
  return "?";
}
inline const char* to_string(InnerAlgorithm a) { return a == InnerAlgorithm::dcg ? "dcg" : "dadmm"; }

struct SolverOptions {
  int max_iter = 100;
  double term_eps = 1e-8;     // 0 disables the termination check
  double step_size = 1.0;     // alpha in (0, 1]
  double rho0 = 1.0;          // Sigma_i^0 = rho0 * I
  double mu0 = 1e3;           // slack penalty; Delta^0 = (mu0 / 2) * I
  double r_sigma = 2.0;
  double r_delta = 2.0;
  double sigma_max = 1e6;
  double delta_max = 1e6;
  double act_margin = 1e-6;   // tau
  HessianMode hessian = HessianMode::exact;
  bool reg = true;
  double reg_param = 1e-4;    // delta
  Variant variant = Variant::fullspace;
  InnerAlgorithm inner_alg = InnerAlgorithm::dcg;
  int inner_iter = 20;
  double rho_adm = 1e2;
  bool warm_start = true;
  bool del_up = false;
  double beta = 10.0;
  double gamma = 0.25;
  bool parallel = false;
  int log_every = 0;          // 0: silent

  /// Every violated constraint on the option values, human readable.
  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    auto positive = [&](double x, const char* name) {
      if (!(x > 0)) v.push_back(std::string(name) + " must be > 0");
    };
    if (max_iter <= 0) v.push_back("max_iter must be > 0");
    if (!(term_eps >= 0)) v.push_back("term_eps must be >= 0");
    if (!(step_size > 0 && step_size <= 1)) v.push_back("step_size must lie in (0, 1]");
    positive(rho0, "rho0");
    positive(mu0, "mu0");
    if (!(r_sigma > 1)) v.push_back("r_sigma must be > 1");
    if (!(r_delta > 1)) v.push_back("r_delta must be > 1");
    positive(sigma_max, "sigma_max");
    positive(delta_max, "delta_max");
    positive(act_margin, "act_margin");
    positive(reg_param, "reg_param");
    if (inner_iter <= 0) v.push_back("inner_iter must be > 0");
    positive(rho_adm, "rho_adm");
    if (!(beta > 1)) v.push_back("beta must be > 1");
    if (!(gamma > 0 && gamma < 1)) v.push_back("gamma must lie in (0, 1)");
    if (log_every < 0) v.push_back("log_every must be >= 0");
    if (del_up && variant == Variant::bilevel)
      v.push_back("del_up cannot be combined with the bilevel variant (non-scalar Delta)");
    return v;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) {
      std::string msg = "invalid solver options:";
      for (const auto& s : v) msg += "\n  " + s;
      throw std::invalid_argument(msg);
    }
  }
};

/// Checks every structural invariant of the problem and returns all
/// violations (empty when the problem is consistent).
inline std::vector<std::string> validate(const SeparableProblem& problem) {
  std::vector<std::string> out;
  if (problem.subproblems.empty()) {
    out.emplace_back("problem has no subproblems");
    return out;
  }
  const auto n_c = problem.subproblems.front().coupling.rows();
  if (problem.rhs.size() != 0 && problem.rhs.size() != n_c)
    out.push_back("coupling row mismatch: b has " + std::to_string(problem.rhs.size()) + " entries but A_1 has " +
                  std::to_string(n_c) + " rows");
  for (std::size_t i = 0; i < problem.subproblems.size(); ++i) {
    const Subproblem& s = problem.subproblems[i];
    const std::string tag = "subproblem " + std::to_string(i) + ": ";
    const auto n = static_cast<Eigen::Index>(s.n_x());
    if (s.objective.n_out() != 1) out.push_back(tag + "objective must have exactly one output");
    if (s.equalities.n_x() != s.n_x() || s.equalities.n_p() != s.n_p())
      out.push_back(tag + "equality function dimension mismatch");
    if (s.inequalities.n_x() != s.n_x() || s.inequalities.n_p() != s.n_p())
      out.push_back(tag + "inequality function dimension mismatch");
    if (s.coupling.rows() != n_c)
      out.push_back(tag + "coupling row mismatch: A has " + std::to_string(s.coupling.rows()) + " rows, expected " +
                    std::to_string(n_c));
    if (s.coupling.cols() != n) out.push_back(tag + "coupling column count differs from n_x");
    if (s.lower.size() != n || s.upper.size() != n) {
      out.push_back(tag + "bound length differs from n_x");
    } else {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::isnan(s.lower[j]) || std::isnan(s.upper[j])) out.push_back(tag + "NaN bound");
        else if (s.lower[j] > s.upper[j])
          out.push_back(tag + "bound ordering: lower > upper at index " + std::to_string(j));
      }
    }
    if (s.initial.size() != n) out.push_back(tag + "initial guess length differs from n_x");
    if (static_cast<std::size_t>(s.parameters.size()) != s.n_p())
      out.push_back(tag + "parameter length differs from n_p");
    if (!s.coupling.allFinite()) out.push_back(tag + "coupling matrix has non-finite entries");
  }
  for (Eigen::Index c = 0; c < n_c; ++c) {
    bool covered = false;
    for (const auto& s : problem.subproblems)
      if (s.coupling.rows() == n_c && s.coupling.row(c).cwiseAbs().maxCoeff() > 0) covered = true;
    if (!covered) out.push_back("consensus row " + std::to_string(c) + " is not covered by any subproblem");
  }
  return out;
}

inline void require_valid(const SeparableProblem& problem) {
  auto v = validate(problem);
  if (!v.empty()) {
    std::string msg = "invalid problem:";
    for (const auto& s : v) msg += "\n  " + s;
    throw std::invalid_argument(msg);
  }
}

/// Replaces the parameter vector of subproblem i. Expression graphs are
/// untouched, so later solves reuse them as-is.
inline SeparableProblem& set_parameters(SeparableProblem& problem, std::size_t i, const Vector& p) {
  if (i >= problem.subproblems.size()) throw std::out_of_range("set_parameters: subproblem index out of range");
  Subproblem& s = problem.subproblems[i];
  if (static_cast<std::size_t>(p.size()) != s.n_p())
    throw std::invalid_argument("set_parameters: expected " + std::to_string(s.n_p()) + " parameters, got " +
                                std::to_string(p.size()));
  s.parameters = p;
  return problem;
}

}  // namespace aladin
