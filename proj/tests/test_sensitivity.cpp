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

Subproblem one_inequality(double value) {
  Subproblem s = Subproblem::make(VectorFunction({square(Expr::var(0))}, 1, 0), Matrix::Zero(0, 1));
  s.inequalities = VectorFunction({Expr(value) + 0.0 * Expr::var(0)}, 1, 0);
  return s;
}

}  // namespace

TEST(DetectActive, MarginRule) {
  const double tau = 1e-6;
  EXPECT_EQ(detect_active(one_inequality(-0.5 * tau), vec({0.0}), kNoParams, tau).indices,
            (std::vector<std::size_t>{0}));
  EXPECT_TRUE(detect_active(one_inequality(-2 * tau), vec({0.0}), kNoParams, tau).indices.empty());
  EXPECT_THROW(detect_active(one_inequality(0.0), vec({0.0}), kNoParams, 0.0), std::invalid_argument);
}

TEST(DetectActive, BoxRowsFollowInequalities) {
  Subproblem s = Subproblem::make(VectorFunction({square(Expr::var(0))}, 3, 0), Matrix::Zero(0, 3));
  s.lower = vec({0.0, -1.0, -kInf});
  s.upper = vec({kInf, 1.0, 2.0});
  // x1 at its lower bound, x2 at its upper bound
  const ActiveSet a = detect_active(s, vec({0.5, -1.0, 2.0}), kNoParams, 1e-6);
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{1, 5}));
}

TEST(DetectActive, TutorialOptimumHasUpperProductActive) {
  const SeparableProblem p = examples::tutorial();
  const Vector y = oracle::tutorial_sub2_grid(vec({1.2, 1.25}));
  const ActiveSet a = detect_active(p.subproblems[1], y, kNoParams, 1e-6);
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{1}));
}

TEST(SymmetricDifference, Counts) {
  EXPECT_EQ(symmetric_difference_size({{1, 2, 5}}, {{2, 5, 7, 9}}), 3u);
  EXPECT_EQ(symmetric_difference_size({}, {{0}}), 1u);
  EXPECT_EQ(symmetric_difference_size({{3}}, {{3}}), 0u);
}

TEST(ActiveJacobian, LowerBoundRow) {
  Subproblem s = Subproblem::make(VectorFunction({square(Expr::var(0))}, 4, 0), Matrix::Zero(0, 4));
  s.lower = Vector::Constant(4, 0.0);
  const ActiveSet a{{1}};  // lower bound of coordinate 2
  const Matrix C = active_jacobian(s, Vector::Ones(4), kNoParams, a);
  ASSERT_EQ(C.rows(), 1);
  EXPECT_EQ(C, (Matrix(1, 4) << 0, -1, 0, 0).finished());
}

TEST(ActiveJacobian, EqualityOnly) {
  Subproblem s = Subproblem::make(VectorFunction({square(Expr::var(0))}, 2, 0), Matrix::Zero(0, 2));
  s.equalities = VectorFunction({Expr::var(0) + Expr::var(1)}, 2, 0);
  EXPECT_EQ(active_jacobian(s, vec({0.3, 0.4}), kNoParams, {}), Matrix::Ones(1, 2));
}

TEST(ActiveJacobian, TutorialActiveRow) {
  const SeparableProblem p = examples::tutorial();
  const Vector y = vec({0.8, 1.875});
  const Matrix C = active_jacobian(p.subproblems[1], y, kNoParams, {{1}});
  EXPECT_EQ(C, (Matrix(1, 2) << y[1], y[0]).finished());
}

TEST(Regularize, DiagonalExample) {
  const Matrix H = Vector(vec({-2.0, 0.0, 3.0})).asDiagonal();
  const Matrix B = regularize(H, 1e-4);
  EXPECT_LE((B - Matrix(vec({2.0, 1e-4, 3.0}).asDiagonal())).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Regularize, SpdAboveDeltaUnchanged) {
  std::mt19937_64 rng(1);
  const Matrix H = oracle::random_spd(rng, 5, 0.5);
  EXPECT_LE((regularize(H, 1e-4) - H).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Regularize, EigenvalueRuleOnRandomMatrices) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const Matrix H = oracle::random_symmetric(rng, 5, 1.0);
    const double delta = 1e-4;
    const Matrix B = regularize(H, delta);
    std::vector<double> want;
    for (double l : oracle::jacobi_eigenvalues(H)) want.push_back(oracle::reg_rule(l, delta));
    std::sort(want.begin(), want.end());
    const std::vector<double> got = oracle::jacobi_eigenvalues(B);
    for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-10);
    EXPECT_EQ(B, B.transpose());
    EXPECT_LE((regularize(B, delta) - B).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Regularize, RejectsBadInput) {
  EXPECT_THROW(regularize(Matrix::Identity(2, 2), 0.0), std::invalid_argument);
  EXPECT_THROW(regularize(Matrix::Zero(2, 3), 1e-4), std::invalid_argument);
  EXPECT_EQ(regularize(Matrix(0, 0), 1e-4).size(), 0);
}

TEST(Bfgs, CorrectCurvatureIsIdentityUpdate) {
  const Matrix I = Matrix::Identity(3, 3);
  const Vector e1 = vec({1.0, 0.0, 0.0});
  EXPECT_LE((bfgs_update(I, e1, e1, false) - I).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Bfgs, AlignedVectors) {
  const Matrix I = Matrix::Identity(3, 3);
  const Vector e1 = vec({1.0, 0.0, 0.0});
  const Matrix B = bfgs_update(I, e1, 2.0 * e1, false);
  EXPECT_LE((B - Matrix(vec({2.0, 1.0, 1.0}).asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Bfgs, RecoversQuadraticHessian) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5;
    const Matrix Q = oracle::random_spd(rng, n, 0.5);
    Matrix B = Matrix::Identity(n, n);
    // quasi-Newton steps with exact line search on f = 1/2 x'Qx are
    // Q-conjugate, so n updates with y = Q s reproduce Q
    Vector x = oracle::random_vector(rng, n);
    for (int k = 0; k < n; ++k) {
      const Vector g = Q * x;
      const Vector d = -B.llt().solve(g);
      const double step = -g.dot(d) / d.dot(Q * d);
      const Vector s = step * d;
      B = bfgs_update(B, s, Q * s, false);
      x += s;
    }
    EXPECT_LE((B - Q).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
  }
}

TEST(Bfgs, PlainSkipsNonPositiveCurvature) {
  const Matrix I = Matrix::Identity(2, 2);
  EXPECT_EQ(bfgs_update(I, vec({1.0, 0.0}), vec({-1.0, 0.0}), false), I);
}

TEST(Bfgs, DampedStaysSpd) {
  // one update from an SPD matrix with arbitrary (s, y)
  std::mt19937_64 rng(4);
  for (int k = 0; k < 200; ++k) {
    const Matrix B0 = oracle::random_spd(rng, 4, 0.5);
    const Matrix B = bfgs_update(B0, oracle::random_vector(rng, 4), oracle::random_vector(rng, 4), true);
    EXPECT_GT(oracle::jacobi_eigenvalues(B).front(), 0.0) << "trial " << k;
  }
  // chained random pairs shrink the smallest eigenvalue geometrically, so
  // after ~30 updates it is below rounding level; 10 stay well resolved
  Matrix B = Matrix::Identity(4, 4);
  for (int k = 0; k < 10; ++k) {
    B = bfgs_update(B, oracle::random_vector(rng, 4), oracle::random_vector(rng, 4), true);
    EXPECT_GT(oracle::jacobi_eigenvalues(B).front(), 0.0);
  }
}

TEST(Nullspace, SimpleCases) {
  const Matrix Z = nullspace_basis((Matrix(1, 2) << 1, 0).finished());
  ASSERT_EQ(Z.cols(), 1);
  EXPECT_NEAR(std::abs(Z(1, 0)), 1.0, 1e-15);
  EXPECT_NEAR(Z(0, 0), 0.0, 1e-15);
  EXPECT_EQ(nullspace_basis(Matrix(0, 3), 3), Matrix::Identity(3, 3));
}

TEST(Nullspace, RandomFullRank) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const Matrix C = oracle::random_matrix(rng, 3, 7);
    const Matrix Z = nullspace_basis(C);
    ASSERT_EQ(Z.cols(), 4);
    EXPECT_LE((C * Z).norm(), 1e-10);
    EXPECT_LE((Z.transpose() * Z - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Nullspace, LicqViolations) {
  Matrix C(2, 3);
  C << 1, 2, 3, 2, 4, 6;
  EXPECT_THROW(nullspace_basis(C), LicqError);
  EXPECT_THROW(nullspace_basis(Matrix::Ones(4, 3)), LicqError);
}

TEST(Reduce, IdentityBasis) {
  SensitivityPack pk;
  pk.hessian = (Matrix(2, 2) << 2, 0.5, 0.5, -1).finished();
  pk.gradient = vec({1.0, 2.0});
  pk.nullspace = Matrix::Identity(2, 2);
  const Matrix A = (Matrix(1, 2) << -1, 0).finished();
  const ReducedTriple t = reduce(pk, A, 1e-4, true);
  EXPECT_LE((t.hessian - regularize(pk.hessian, 1e-4)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(t.gradient, pk.gradient);
  EXPECT_EQ(t.coupling, A);
}

TEST(Reduce, ProjectionExample) {
  for (double sign : {1.0, -1.0}) {
    SensitivityPack pk;
    pk.hessian = Matrix(vec({4.0, 6.0}).asDiagonal());
    pk.gradient = vec({1.0, 2.0});
    pk.nullspace = (Matrix(2, 1) << 0, sign).finished();
    const ReducedTriple t = reduce(pk, (Matrix(1, 2) << -1, 0).finished(), 1e-4, true);
    EXPECT_NEAR(t.hessian(0, 0), 6.0, 1e-14);
    EXPECT_NEAR(t.gradient[0], 2.0 * sign, 1e-14);
    EXPECT_EQ(t.coupling(0, 0), 0.0);
  }
  SensitivityPack none;
  EXPECT_THROW(reduce(none, Matrix::Zero(1, 2)), std::invalid_argument);
}

TEST(Schur, ZeroCouplingGivesZeroBlock) {
  ReducedTriple t{Matrix::Identity(2, 2), vec({1.0, 1.0}), Matrix::Zero(2, 2)};
  const SchurPair s = schur_contribution(t, vec({3.0, 5.0}));
  EXPECT_EQ(s.S, Matrix::Zero(2, 2));
  EXPECT_EQ(s.s, Vector::Zero(2));
}

TEST(Schur, DirectFormula) {
  ReducedTriple t{Matrix::Identity(2, 2), Vector::Zero(2), (Matrix(1, 2) << 1, 0).finished()};
  const SchurPair s = schur_contribution(t, vec({3.0, 5.0}));
  EXPECT_EQ(s.S, Matrix::Ones(1, 1));
  EXPECT_EQ(s.s, Vector::Constant(1, 3.0));
}

TEST(Schur, SparsityFollowsCouplingRows) {
  std::mt19937_64 rng(6);
  Matrix A = oracle::random_matrix(rng, 5, 3);
  A.row(1).setZero();
  A.row(4).setZero();
  ReducedTriple t{oracle::random_spd(rng, 3), oracle::random_vector(rng, 3), A};
  const SchurPair s = schur_contribution(t, oracle::random_vector(rng, 3));
  for (Eigen::Index c = 0; c < 5; ++c) EXPECT_EQ(s.S.row(c).isZero(0.0), A.row(c).isZero(0.0)) << "row " << c;
}

namespace {

struct ReducedInstance {
  std::vector<Matrix> H, C, A, Z;
  std::vector<Vector> g, x;
  Vector lambda, b;
};

ReducedInstance random_reduced(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ReducedInstance r;
  const Eigen::Index nc = 3;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Index n = 4, m = (i == 1) ? 0 : 1 + i % 2;
    r.H.push_back(oracle::random_spd(rng, n, 0.5));
    r.C.push_back(oracle::random_matrix(rng, m, n));
    r.A.push_back(oracle::random_matrix(rng, nc, n));
    r.g.push_back(oracle::random_vector(rng, n));
    r.x.push_back(oracle::random_vector(rng, n));
    r.Z.push_back(nullspace_basis(r.C.back(), n));
  }
  r.lambda = oracle::random_vector(rng, nc);
  r.b = oracle::random_vector(rng, nc);
  return r;
}

}  // namespace

TEST(Reduce, LiftedReducedStepEqualsFullStep) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ReducedInstance r = random_reduced(seed);
    const double mu = 7.0;
    const Vector delta = Vector::Constant(3, mu / 2);
    const oracle::CoordinationOracle full =
        oracle::coordination_monolithic(r.H, r.g, r.C, r.A, r.x, r.lambda, delta, r.b);
    std::vector<ReducedTriple> t;
    std::vector<Vector> offsets;
    for (std::size_t i = 0; i < 3; ++i) {
      SensitivityPack pk;
      pk.hessian = r.H[i];
      pk.gradient = r.g[i];
      pk.nullspace = r.Z[i];
      t.push_back(reduce(pk, r.A[i], 1e-4, true));
      offsets.push_back(r.A[i] * r.x[i]);
    }
    const CoordinationResult red = solve_coordination_reduced(t, r.Z, offsets, r.lambda, mu, r.b);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_LE((red.dx[i] - full.dx[i]).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((red.lambda_qp - full.lambda_qp).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Schur, AssembledSystemReproducesMonolithicDual) {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const ReducedInstance r = random_reduced(seed);
    const double mu = 3.0;
    // monolithic reduced KKT over (dv_1..dv_3, lambda_qp)
    std::vector<ReducedTriple> t;
    Eigen::Index nv = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      SensitivityPack pk;
      pk.hessian = r.H[i];
      pk.gradient = r.g[i];
      pk.nullspace = r.Z[i];
      t.push_back(reduce(pk, r.A[i], 1e-4, true));
      nv += t.back().hessian.rows();
    }
    Matrix K = Matrix::Zero(nv + 3, nv + 3);
    Vector rhs = Vector::Zero(nv + 3);
    Vector ax = -r.b;
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto n = t[i].hessian.rows();
      K.block(o, o, n, n) = t[i].hessian;
      K.block(o, nv, n, 3) = t[i].coupling.transpose();
      K.block(nv, o, 3, n) = t[i].coupling;
      rhs.segment(o, n) = -t[i].gradient;
      ax += r.A[i] * r.x[i];
      o += n;
    }
    K.bottomRightCorner(3, 3) = -(1.0 / mu) * Matrix::Identity(3, 3);
    rhs.tail(3) = -ax - r.lambda / mu;
    const Vector sol = K.fullPivLu().solve(rhs);

    std::vector<SchurPair> pairs;
    for (std::size_t i = 0; i < 3; ++i) pairs.push_back(schur_contribution_at(t[i], r.A[i] * r.x[i]));
    const SchurSystem sys = assemble_schur(pairs, r.lambda, Vector::Constant(3, mu / 2), r.b);
    const Vector lqp = sys.M.llt().solve(sys.r);
    EXPECT_LE((lqp - sol.tail(3)).cwiseAbs().maxCoeff(), 1e-8) << "seed " << seed;
  }
}
