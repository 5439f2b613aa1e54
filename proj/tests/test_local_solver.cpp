#include <gtest/gtest.h>

#include <random>

#include "aladin/aladin.hpp"
#include "oracles.hpp"

using namespace aladin;

namespace {

const Vector kNoParams = Vector::Zero(0);

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

// Quadratic 1/2 x'Qx + q'x with linear equalities Ex = e and inequalities
// Gx <= h, as a subproblem plus the raw data for the oracle.
struct LinearQp {
  Matrix Q, E, G;
  Vector q, e, h;
  Subproblem sub;
};

Expr affine(const Vector& row, double c) {
  Expr out(c);
  for (Eigen::Index j = 0; j < row.size(); ++j) out = out + row[j] * Expr::var(static_cast<std::size_t>(j));
  return out;
}

LinearQp random_linear_qp(std::uint64_t seed, int n, int me, int mi) {
  std::mt19937_64 rng(seed);
  LinearQp p;
  p.Q = oracle::random_spd(rng, n, 0.5);
  p.q = 3.0 * oracle::random_vector(rng, n);
  p.E = oracle::random_matrix(rng, me, n);
  p.e = oracle::random_vector(rng, me);
  p.G = oracle::random_matrix(rng, mi, n);
  p.h = 0.3 * oracle::random_vector(rng, mi).cwiseAbs();  // x = 0 strictly satisfies G x <= h
  p.e.setZero();                                          // and E x = e
  Expr f(0.0);
  for (int a = 0; a < n; ++a) {
    f = f + p.q[a] * Expr::var(static_cast<std::size_t>(a));
    for (int b = 0; b < n; ++b)
      f = f + 0.5 * p.Q(a, b) * Expr::var(static_cast<std::size_t>(a)) * Expr::var(static_cast<std::size_t>(b));
  }
  std::vector<Expr> g, h;
  for (int r = 0; r < me; ++r) g.push_back(affine(p.E.row(r).transpose(), -p.e[r]));
  for (int r = 0; r < mi; ++r) h.push_back(affine(p.G.row(r).transpose(), -p.h[r]));
  p.sub = Subproblem::make(VectorFunction({f}, static_cast<std::size_t>(n), 0), Matrix::Zero(0, n));
  p.sub.equalities = VectorFunction(g, static_cast<std::size_t>(n), 0);
  p.sub.inequalities = VectorFunction(h, static_cast<std::size_t>(n), 0);
  return p;
}

// Active-set enumeration for min 1/2 x'(Q + 2M)x + (q - 2Mz)'x: the unique
// KKT point is the one with primal feasibility and nonnegative multipliers.
Vector enumerate_qp(const LinearQp& p, const Matrix& M, const Vector& z) {
  const Matrix H = p.Q + 2.0 * M;
  const Vector c = p.q - 2.0 * M * z;
  const auto mi = p.G.rows(), me = p.E.rows();
  for (unsigned mask = 0; mask < (1u << mi); ++mask) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index r = 0; r < mi; ++r)
      if (mask & (1u << r)) act.push_back(r);
    Matrix Eq(me + static_cast<Eigen::Index>(act.size()), p.Q.rows());
    Vector eq(Eq.rows());
    Eq.topRows(me) = p.E;
    eq.head(me) = p.e;
    for (std::size_t k = 0; k < act.size(); ++k) {
      Eq.row(me + static_cast<Eigen::Index>(k)) = p.G.row(act[k]);
      eq[me + static_cast<Eigen::Index>(k)] = p.h[act[k]];
    }
    const auto [x, mult] = oracle::eq_qp(H, c, Eq, eq);
    if (((p.G * x - p.h).array() > 1e-10).any()) continue;
    if ((mult.tail(static_cast<Eigen::Index>(act.size())).array() < -1e-10).any()) continue;
    return x;
  }
  ADD_FAILURE() << "no KKT point found by enumeration";
  return Vector();
}

}  // namespace

TEST(SolveLocal, PureProximalTermReturnsCenter) {
  Subproblem s = Subproblem::make(VectorFunction({Expr(0.0)}, 3, 0), Matrix::Zero(1, 3));
  const Vector z = vec({0.3, -2.0, 5.0});
  const LocalSolution r = solve_local(s, z, Vector::Zero(1), Matrix::Identity(3, 3), kNoParams, nullptr, 1e-10);
  EXPECT_EQ(r.status, LocalStatus::converged);
  EXPECT_LE((r.x - z).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SolveLocal, LinearObjectiveClosedForm) {
  const Vector q = vec({1.0, -2.0}), z = vec({0.5, 0.25}), lam = vec({0.3, 0.7});
  const double sigma = 4.0;
  Subproblem s = Subproblem::make(VectorFunction({affine(q, 0.0)}, 2, 0), Matrix::Identity(2, 2));
  const LocalSolution r = solve_local(s, z, lam, sigma * Matrix::Identity(2, 2), kNoParams, nullptr, 1e-12);
  const Vector expect = z - (q + lam) / (2 * sigma);
  EXPECT_LE((r.x - expect).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SolveLocal, TutorialSubproblemTwoMatchesGridOracle) {
  const SeparableProblem p = examples::tutorial();
  const Vector z = vec({1.2, 1.25});
  const LocalSolution r =
      solve_local(p.subproblems[1], z, Vector::Zero(1), Matrix::Identity(2, 2), kNoParams, nullptr, 1e-12);
  const Vector grid = oracle::tutorial_sub2_grid(z);
  EXPECT_EQ(r.status, LocalStatus::converged);
  EXPECT_LE((r.x - grid).cwiseAbs().maxCoeff(), 1e-6) << r.x.transpose() << " vs " << grid.transpose();
  // the solution sits on y21 y22 = 1.5
  EXPECT_NEAR(grid[0] * grid[1], 1.5, 1e-9);
}

TEST(SolveLocal, KktResidualsWithinTolerance) {
  const SeparableProblem p = examples::tutorial();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 30; ++k) {
    const Vector z = vec({u(rng), u(rng)});
    const Vector lam = vec({u(rng)});
    const Matrix sig = (0.5 + std::abs(u(rng))) * Matrix::Identity(2, 2);
    const double tol = 1e-9;
    const Subproblem& s = p.subproblems[1];
    const LocalSolution r = solve_local(s, z, lam, sig, kNoParams, nullptr, tol);
    ASSERT_EQ(r.status, LocalStatus::converged) << "z " << z.transpose();
    const LocalKKTReport rep = local_kkt_report(s, s.coupling.transpose() * lam, sig, z, kNoParams, r);
    EXPECT_LE(rep.stationarity, tol);
    EXPECT_LE(rep.inequality, tol);
    EXPECT_LE(rep.complementarity, tol);
    EXPECT_GE(r.gamma.minCoeff(), 0.0);
    const Vector h = s.inequalities.evaluate(r.x, kNoParams);
    for (Eigen::Index j = 0; j < h.size(); ++j) EXPECT_GE(r.gamma[j] * h[j], -tol);
  }
}

TEST(SolveLocal, BoundsRespectedExactly) {
  // pull hard against the box
  Subproblem s = Subproblem::make(VectorFunction({affine(vec({50.0, -50.0, 1.0}), 0.0)}, 3, 0), Matrix::Zero(0, 3));
  s.lower = vec({-1.0, -kInf, 0.0});
  s.upper = vec({kInf, 2.0, 0.5});
  const Vector z = Vector::Zero(3);
  const LocalSolution r = solve_local(s, z, Vector(0), Matrix::Identity(3, 3), kNoParams, nullptr, 1e-10);
  EXPECT_EQ(r.status, LocalStatus::converged);
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_GE(r.x[j], s.lower[j]);
    EXPECT_LE(r.x[j], s.upper[j]);
  }
  EXPECT_NEAR(r.x[0], -1.0, 1e-9);
  EXPECT_NEAR(r.x[1], 2.0, 1e-9);
  EXPECT_NEAR(r.x[2], 0.0, 1e-9);
  EXPECT_GE(r.eta.minCoeff(), 0.0);
}

TEST(SolveLocal, WarmStartFromSolutionTakesAtMostTwoIterations) {
  const SeparableProblem p = examples::tutorial();
  const Vector z = vec({1.2, 1.25});
  const Subproblem& s = p.subproblems[1];
  const LocalSolution cold = solve_local(s, z, vec({0.4}), Matrix::Identity(2, 2), kNoParams, nullptr, 1e-10);
  const LocalSolution warm = solve_local(s, z, vec({0.4}), Matrix::Identity(2, 2), kNoParams, &cold, 1e-10);
  EXPECT_EQ(warm.status, LocalStatus::converged);
  EXPECT_LE(warm.iterations, 2);
  EXPECT_LE((warm.x - cold.x).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SolveLocal, LinearlyConstrainedQpMatchesEnumerationOracle) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const LinearQp qp = random_linear_qp(seed, 4, 1, 3);
    std::mt19937_64 rng(seed + 1000);
    const Vector z = oracle::random_vector(rng, 4);
    const Matrix sig = 0.5 * Matrix::Identity(4, 4);
    const LocalSolution r = solve_proximal(qp.sub, Vector::Zero(4), sig, z, kNoParams, nullptr, 1e-12);
    ASSERT_EQ(r.status, LocalStatus::converged) << "seed " << seed;
    const Vector x = enumerate_qp(qp, sig, z);
    EXPECT_LE((r.x - x).cwiseAbs().maxCoeff(), 1e-8) << "seed " << seed;
  }
}

TEST(SolveLocal, ProximalWithSingularMetricAndStrictlyConvexObjective) {
  const LinearQp qp = random_linear_qp(77, 3, 1, 2);
  const LocalSolution r = solve_proximal(qp.sub, Vector::Zero(3), Matrix::Zero(3, 3), Vector::Zero(3), kNoParams,
                                         nullptr, 1e-12);
  EXPECT_EQ(r.status, LocalStatus::converged);
  EXPECT_LE((r.x - enumerate_qp(qp, Matrix::Zero(3, 3), Vector::Zero(3))).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SolveLocal, InfeasibleSubproblemIsFlagged) {
  // x >= 2 and x <= 1
  Subproblem s = Subproblem::make(VectorFunction({square(Expr::var(0))}, 1, 0), Matrix::Zero(0, 1));
  s.inequalities = VectorFunction({2.0 - Expr::var(0), Expr::var(0) - 1.0}, 1, 0);
  const LocalSolution r = solve_local(s, Vector::Zero(1), Vector(0), Matrix::Identity(1, 1), kNoParams, nullptr, 1e-8);
  EXPECT_NE(r.status, LocalStatus::converged);
}

TEST(SolveLocal, RejectsBadArguments) {
  const SeparableProblem p = examples::tutorial();
  const Subproblem& s = p.subproblems[1];
  const Vector z = vec({1.0, 1.0});
  EXPECT_THROW(solve_local(s, z, Vector::Zero(2), Matrix::Identity(2, 2), kNoParams, nullptr, 1e-8),
               std::invalid_argument);
  EXPECT_THROW(solve_local(s, z, Vector::Zero(1), -Matrix::Identity(2, 2), kNoParams, nullptr, 1e-8),
               std::invalid_argument);
  EXPECT_THROW(solve_local(s, vec({1.0}), Vector::Zero(1), Matrix::Identity(2, 2), kNoParams, nullptr, 1e-8),
               std::invalid_argument);
  EXPECT_THROW(solve_local(s, z, Vector::Zero(1), Matrix::Identity(2, 2), vec({1.0}), nullptr, 1e-8),
               std::invalid_argument);
}

TEST(SolveLocal, DomainErrorPropagates) {
  // log(x) with x pushed below zero by the proximal pull and no bound
  Subproblem s = Subproblem::make(VectorFunction({-log(Expr::var(0))}, 1, 0), Matrix::Zero(0, 1));
  EXPECT_THROW(solve_local(s, Vector::Constant(1, -3.0), Vector(0), Matrix::Identity(1, 1), kNoParams, nullptr, 1e-8),
               DomainError);
}

TEST(SolveLocal, OcpChainBlocksConverge) {
  const SeparableProblem p = examples::ocp_chain();
  for (const auto& s : p.subproblems) {
    const auto n = static_cast<Eigen::Index>(s.n_x());
    const LocalSolution r = solve_local(s, s.initial, Vector::Zero(static_cast<Eigen::Index>(p.n_c())),
                                        Matrix::Identity(n, n), s.parameters, nullptr, 1e-10);
    EXPECT_EQ(r.status, LocalStatus::converged);
    EXPECT_LE(inf_norm(s.equalities.evaluate(r.x, s.parameters)), 1e-9);
  }
}
