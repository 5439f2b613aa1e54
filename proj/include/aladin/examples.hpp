#pragma once

// Bundled problem instances: the two-block tutorial, a seeded coupled convex
// QP and a chain of three double integrators over a short horizon.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aladin/problem.hpp"

namespace aladin::examples {

/// min 2 (y1 - 1)^2 + (y22 - 2)^2
/// s.t. -1 - y21 y22 <= 0, -1.5 + y21 y22 <= 0, y1 - y21 = 0.
inline SeparableProblem tutorial() {
  const Expr y1 = Expr::var(0);
  const Expr y21 = Expr::var(0), y22 = Expr::var(1);

  Subproblem s1 = Subproblem::make(VectorFunction({2.0 * square(y1 - 1.0)}, 1, 0), Matrix::Ones(1, 1));
  Matrix A2(1, 2);
  A2 << -1.0, 0.0;
  Subproblem s2 = Subproblem::make(VectorFunction({square(y22 - 2.0)}, 2, 0), A2);
  s2.inequalities = VectorFunction({-1.0 - y21 * y22, -1.5 + y21 * y22}, 2, 0);
  s1.initial = Vector::Constant(1, 1.0);
  s2.initial = (Vector(2) << 1.0, 1.0).finished();

  SeparableProblem p;
  p.subproblems = {std::move(s1), std::move(s2)};
  p.rhs = Vector::Zero(1);
  return p;
}

struct CoupledQpConfig {
  std::uint64_t seed = 42;
  int blocks = 4;
  int dim = 3;
  bool bounds = true;      // box [-10, 10], normally inactive
  bool equality = true;    // one linear equality per block
};

/// n-block strictly convex QP; blocks i and i+1 share two consensus rows.
inline SeparableProblem coupled_qp(const CoupledQpConfig& cfg = {}) {
  if (cfg.blocks < 1 || cfg.dim < 2) throw std::invalid_argument("coupled_qp: need blocks >= 1 and dim >= 2");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const int nb = cfg.blocks, n = cfg.dim;
  const int nc = nb > 1 ? 2 * (nb - 1) : 1;

  SeparableProblem p;
  p.rhs.resize(nc);
  for (int c = 0; c < nc; ++c) p.rhs[c] = U(rng);
  std::vector<Matrix> A(static_cast<std::size_t>(nb), Matrix::Zero(nc, n));
  if (nb == 1) {
    for (int j = 0; j < n; ++j) A[0](0, j) = U(rng);
  } else {
    for (int l = 0; l + 1 < nb; ++l)
      for (int r = 0; r < 2; ++r)
        for (int side = 0; side < 2; ++side)
          for (int j = 0; j < n; ++j) A[static_cast<std::size_t>(l + side)](2 * l + r, j) = U(rng);
  }
  for (int i = 0; i < nb; ++i) {
    Matrix M(n, n);
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) M(a, c) = U(rng);
    const Matrix Q = M * M.transpose() + Matrix::Identity(n, n);
    Vector q(n);
    for (int a = 0; a < n; ++a) q[a] = U(rng);
    Expr f(0.0);
    for (int a = 0; a < n; ++a) {
      f = f + q[a] * Expr::var(static_cast<std::size_t>(a));
      for (int c = 0; c < n; ++c)
        if (Q(a, c) != 0.0) f = f + 0.5 * Q(a, c) * Expr::var(static_cast<std::size_t>(a)) * Expr::var(static_cast<std::size_t>(c));
    }
    Subproblem s = Subproblem::make(VectorFunction({f}, static_cast<std::size_t>(n), 0), A[static_cast<std::size_t>(i)]);
    if (cfg.equality) {
      Expr g(-U(rng));
      for (int a = 0; a < n; ++a) g = g + U(rng) * Expr::var(static_cast<std::size_t>(a));
      s.equalities = VectorFunction({g}, static_cast<std::size_t>(n), 0);
    }
    if (cfg.bounds) {
      s.lower = Vector::Constant(n, -10.0);
      s.upper = Vector::Constant(n, 10.0);
    }
    p.subproblems.push_back(std::move(s));
  }
  return p;
}

struct OcpChainConfig {
  int horizon = 5;
  double dt = 0.2;
  double u_max = 1.0;
  double spacing = 1.0;
  double q = 1.0;       // position tracking weight
  double r = 0.1;       // input weight
  double w = 2.0;       // spring weight between neighbors
};

/// Layout of one agent's variables in ocp_chain.
struct OcpChainLayout {
  int horizon = 5;
  int n_neighbors = 0;
  std::size_t pos(int t) const { return static_cast<std::size_t>(2 * t); }
  std::size_t vel(int t) const { return static_cast<std::size_t>(2 * t + 1); }
  std::size_t input(int t) const { return static_cast<std::size_t>(2 * (horizon + 1) + t); }
  std::size_t copy(int nb, int t) const {  // neighbor position copy, t = 1..T
    return static_cast<std::size_t>(3 * horizon + 2 + nb * horizon + (t - 1));
  }
  std::size_t n_x() const { return static_cast<std::size_t>(3 * horizon + 2 + n_neighbors * horizon); }
};

/// Three double integrators (position, velocity) on a line, each tracking its
/// own reference while springs pull neighbors toward a fixed spacing.
/// Agent i keeps local copies of its neighbors' positions for t = 1..T; the
/// consensus rows force copy = owner's position. Dynamics are equality
/// constraints, the initial state is the parameter vector (p0, v0), inputs are
/// box constrained.
inline SeparableProblem ocp_chain(const OcpChainConfig& cfg = {}) {
  const int T = cfg.horizon;
  if (T < 1) throw std::invalid_argument("ocp_chain: horizon must be >= 1");
  const int na = 3;
  const std::vector<std::vector<int>> nbrs = {{1}, {0, 2}, {1}};
  const double ref[3] = {0.0, 1.0, 2.0};
  const double init[3][2] = {{-0.5, 0.0}, {1.5, 0.2}, {2.5, -0.3}};

  std::vector<OcpChainLayout> lay(na);
  for (int i = 0; i < na; ++i) lay[static_cast<std::size_t>(i)] = {T, static_cast<int>(nbrs[static_cast<std::size_t>(i)].size())};
  int nc = 0;
  for (const auto& nb : nbrs) nc += static_cast<int>(nb.size()) * T;

  SeparableProblem p;
  p.rhs = Vector::Zero(nc);
  int row = 0;
  std::vector<Matrix> A(na);
  for (int i = 0; i < na; ++i) A[static_cast<std::size_t>(i)] = Matrix::Zero(nc, static_cast<Eigen::Index>(lay[static_cast<std::size_t>(i)].n_x()));

  for (int i = 0; i < na; ++i) {
    const auto& L = lay[static_cast<std::size_t>(i)];
    const auto& nb = nbrs[static_cast<std::size_t>(i)];
    auto X = [](std::size_t k) { return Expr::var(k); };
    Expr f(0.0);
    for (int t = 1; t <= T; ++t) f = f + cfg.q * square(X(L.pos(t)) - ref[i]);
    for (int t = 0; t < T; ++t) f = f + cfg.r * square(X(L.input(t)));
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const double gap = (nb[k] > i ? 1.0 : -1.0) * cfg.spacing;
      for (int t = 1; t <= T; ++t) f = f + 0.5 * cfg.w * square(X(L.copy(static_cast<int>(k), t)) - X(L.pos(t)) - gap);
    }
    std::vector<Expr> g;
    g.push_back(X(L.pos(0)) - Expr::param(0));
    g.push_back(X(L.vel(0)) - Expr::param(1));
    for (int t = 0; t < T; ++t) {
      g.push_back(X(L.pos(t + 1)) - X(L.pos(t)) - cfg.dt * X(L.vel(t)) - 0.5 * cfg.dt * cfg.dt * X(L.input(t)));
      g.push_back(X(L.vel(t + 1)) - X(L.vel(t)) - cfg.dt * X(L.input(t)));
    }
    Subproblem s = Subproblem::make(VectorFunction({f}, L.n_x(), 2), Matrix(), (Vector(2) << init[i][0], init[i][1]).finished());
    s.equalities = VectorFunction(std::move(g), L.n_x(), 2);
    for (int t = 0; t < T; ++t) {
      s.lower[static_cast<Eigen::Index>(L.input(t))] = -cfg.u_max;
      s.upper[static_cast<Eigen::Index>(L.input(t))] = cfg.u_max;
    }
    p.subproblems.push_back(std::move(s));
  }
  // copy rows: copy_{i,k}(t) - pos_{nb}(t) = 0
  for (int i = 0; i < na; ++i) {
    const auto& nb = nbrs[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < nb.size(); ++k)
      for (int t = 1; t <= T; ++t, ++row) {
        A[static_cast<std::size_t>(i)](row, static_cast<Eigen::Index>(lay[static_cast<std::size_t>(i)].copy(static_cast<int>(k), t))) = 1.0;
        A[static_cast<std::size_t>(nb[k])](row, static_cast<Eigen::Index>(lay[static_cast<std::size_t>(nb[k])].pos(t))) = -1.0;
      }
  }
  for (int i = 0; i < na; ++i) p.subproblems[static_cast<std::size_t>(i)].coupling = A[static_cast<std::size_t>(i)];
  return p;
}

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> n = {"tutorial", "coupled-qp", "ocp-chain"};
  return n;
}

inline SeparableProblem by_name(const std::string& name) {
  if (name == "tutorial") return tutorial();
  if (name == "coupled-qp") return coupled_qp();
  if (name == "ocp-chain") return ocp_chain();
  throw std::invalid_argument("unknown example '" + name + "' (expected tutorial, coupled-qp or ocp-chain)");
}

}  // namespace aladin::examples
