#pragma once

// Lifting: turns terms that share a global variable vector into a
// partially separable problem. Each term becomes a subproblem owning local
// copies of the variables it touches; one consensus row per extra copy
// forces it to equal the owner copy (the first term touching the variable).

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aladin/problem.hpp"

namespace aladin {

struct LiftTerm {
  std::vector<std::size_t> variables;  // global indices; defines local ordering
  Expr objective{0.0};                 // written in global indices
  std::vector<Expr> equalities;
  std::vector<Expr> inequalities;
  Vector parameters;                   // parameter indices are already local
};

struct LiftedProblem {
  SeparableProblem problem;
  std::vector<std::vector<std::size_t>> local_to_global;
  /// For each global variable: (subproblem, local index) of its owner copy.
  std::vector<std::pair<std::size_t, std::size_t>> owner;

  /// Maps per-subproblem solutions back to the global variable vector.
  Vector recover(const std::vector<Vector>& x) const {
    Vector out(static_cast<Eigen::Index>(owner.size()));
    for (std::size_t v = 0; v < owner.size(); ++v)
      out[static_cast<Eigen::Index>(v)] = x[owner[v].first][static_cast<Eigen::Index>(owner[v].second)];
    return out;
  }
};

inline LiftedProblem lift(std::size_t n_global, const std::vector<LiftTerm>& terms, Vector lower = {},
                          Vector upper = {}, Vector initial = {}) {
  const auto ng = static_cast<Eigen::Index>(n_global);
  if (lower.size() == 0) lower = Vector::Constant(ng, -kInf);
  if (upper.size() == 0) upper = Vector::Constant(ng, kInf);
  if (initial.size() == 0) initial = Vector::Zero(ng);
  if (lower.size() != ng || upper.size() != ng || initial.size() != ng)
    throw std::invalid_argument("lift: bound/initial vectors must have n_global entries");
  if (terms.empty()) throw std::invalid_argument("lift: no terms");

  LiftedProblem out;
  const std::size_t unset = static_cast<std::size_t>(-1);
  out.owner.assign(n_global, {unset, unset});
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> copies(n_global);

  for (std::size_t t = 0; t < terms.size(); ++t) {
    const LiftTerm& term = terms[t];
    if (term.variables.empty()) throw std::invalid_argument("lift: term " + std::to_string(t) + " touches no variables");
    std::vector<std::size_t> map(n_global, unset);
    for (std::size_t l = 0; l < term.variables.size(); ++l) {
      const std::size_t g = term.variables[l];
      if (g >= n_global) throw std::invalid_argument("lift: term " + std::to_string(t) + " references variable out of range");
      if (map[g] != unset) throw std::invalid_argument("lift: term " + std::to_string(t) + " lists a variable twice");
      map[g] = l;
      copies[g].emplace_back(t, l);
    }
    auto localize = [&](const Expr& e) {
      for (std::size_t g : referenced_variables(e))
        if (g >= n_global || map[g] == unset)
          throw std::invalid_argument("lift: term " + std::to_string(t) + " uses undeclared variable " +
                                      std::to_string(g));
      // remap needs an entry for every index; unused ones are never read
      std::vector<std::size_t> full(n_global, 0);
      for (std::size_t g = 0; g < n_global; ++g)
        if (map[g] != unset) full[g] = map[g];
      return remap_variables(e, full);
    };
    const std::size_t nx = term.variables.size();
    const auto np = static_cast<std::size_t>(term.parameters.size());
    std::vector<Expr> g_out, h_out;
    for (const auto& e : term.equalities) g_out.push_back(localize(e));
    for (const auto& e : term.inequalities) h_out.push_back(localize(e));

    Subproblem s;
    s.objective = VectorFunction({localize(term.objective)}, nx, np);
    s.equalities = VectorFunction(std::move(g_out), nx, np);
    s.inequalities = VectorFunction(std::move(h_out), nx, np);
    s.parameters = term.parameters;
    s.lower.resize(static_cast<Eigen::Index>(nx));
    s.upper.resize(static_cast<Eigen::Index>(nx));
    s.initial.resize(static_cast<Eigen::Index>(nx));
    for (std::size_t l = 0; l < nx; ++l) {
      const auto g = static_cast<Eigen::Index>(term.variables[l]);
      s.lower[static_cast<Eigen::Index>(l)] = lower[g];
      s.upper[static_cast<Eigen::Index>(l)] = upper[g];
      s.initial[static_cast<Eigen::Index>(l)] = initial[g];
    }
    out.problem.subproblems.push_back(std::move(s));
    out.local_to_global.push_back(term.variables);
  }

  std::size_t n_c = 0;
  for (std::size_t g = 0; g < n_global; ++g) {
    if (copies[g].empty()) throw std::invalid_argument("lift: variable " + std::to_string(g) + " is touched by no term");
    out.owner[g] = copies[g].front();
    n_c += copies[g].size() - 1;
  }
  for (std::size_t t = 0; t < terms.size(); ++t)
    out.problem.subproblems[t].coupling =
        Matrix::Zero(static_cast<Eigen::Index>(n_c), static_cast<Eigen::Index>(terms[t].variables.size()));
  Eigen::Index row = 0;
  for (std::size_t g = 0; g < n_global; ++g) {
    const auto [ot, ol] = copies[g].front();
    for (std::size_t c = 1; c < copies[g].size(); ++c, ++row) {
      const auto [t, l] = copies[g][c];
      out.problem.subproblems[ot].coupling(row, static_cast<Eigen::Index>(ol)) = 1.0;
      out.problem.subproblems[t].coupling(row, static_cast<Eigen::Index>(l)) = -1.0;
    }
  }
  out.problem.rhs = Vector::Zero(static_cast<Eigen::Index>(n_c));
  return out;
}

/// The inverse direction: one subproblem holding every block's variables,
/// with the consensus rows turned into equality constraints. Used for
/// centralized reference solves.
inline Subproblem centralize(const SeparableProblem& problem) {
  std::size_t nx = 0, np = 0;
  for (const auto& s : problem.subproblems) nx += s.n_x(), np += s.n_p();
  Subproblem out;
  Expr obj(0.0);
  std::vector<Expr> g, h;
  out.lower.resize(static_cast<Eigen::Index>(nx));
  out.upper.resize(static_cast<Eigen::Index>(nx));
  out.initial.resize(static_cast<Eigen::Index>(nx));
  out.parameters.resize(static_cast<Eigen::Index>(np));
  std::size_t ox = 0, op = 0;
  std::vector<std::size_t> offsets;
  for (const auto& s : problem.subproblems) {
    std::vector<std::size_t> vmap(s.n_x()), pmap(s.n_p());
    for (std::size_t j = 0; j < s.n_x(); ++j) vmap[j] = ox + j;
    for (std::size_t j = 0; j < s.n_p(); ++j) pmap[j] = op + j;
    auto mv = [&](const Expr& e) { return remap_variables(e, vmap, pmap); };
    obj = obj + mv(s.objective.outputs().front());
    for (const auto& e : s.equalities.outputs()) g.push_back(mv(e));
    for (const auto& e : s.inequalities.outputs()) h.push_back(mv(e));
    const auto n = static_cast<Eigen::Index>(s.n_x());
    const auto o = static_cast<Eigen::Index>(ox);
    out.lower.segment(o, n) = s.lower;
    out.upper.segment(o, n) = s.upper;
    out.initial.segment(o, n) = s.initial;
    if (s.n_p()) out.parameters.segment(static_cast<Eigen::Index>(op), static_cast<Eigen::Index>(s.n_p())) = s.parameters;
    offsets.push_back(ox);
    ox += s.n_x();
    op += s.n_p();
  }
  const Vector b = problem.b();
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(problem.n_c()); ++c) {
    Expr row(-b[c]);
    for (std::size_t i = 0; i < problem.n_s(); ++i) {
      const Matrix& A = problem.subproblems[i].coupling;
      for (Eigen::Index j = 0; j < A.cols(); ++j)
        if (A(c, j) != 0.0) row = row + A(c, j) * Expr::var(offsets[i] + static_cast<std::size_t>(j));
    }
    g.push_back(row);
  }
  out.objective = VectorFunction({obj}, nx, np);
  out.equalities = VectorFunction(std::move(g), nx, np);
  out.inequalities = VectorFunction(std::move(h), nx, np);
  out.coupling = Matrix::Zero(0, static_cast<Eigen::Index>(nx));
  return out;
}

}  // namespace aladin
