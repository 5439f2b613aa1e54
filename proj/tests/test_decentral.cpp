#include <gtest/gtest.h>

#include <random>

#include "aladin/aladin.hpp"
#include "oracles.hpp"

using namespace aladin;

namespace {

LocalBlock block(double S, double s) { return {Matrix::Constant(1, 1, S), Vector::Constant(1, s)}; }

}  // namespace

TEST(Topology, Tutorial) {
  const Topology t = build_topology(examples::tutorial());
  ASSERT_EQ(t.n_agents(), 2u);
  EXPECT_EQ(t.rows[0], (std::vector<Eigen::Index>{0}));
  EXPECT_EQ(t.rows[1], (std::vector<Eigen::Index>{0}));
  EXPECT_EQ(t.neighbors[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(t.neighbors[1], (std::vector<std::size_t>{0}));
  EXPECT_EQ(t.multiplicity[0], 2.0);
  EXPECT_EQ(t.lambda_diag(0)[0], 2.0);
}

TEST(Topology, BlockDiagonalHasNoNeighbors) {
  const Topology t = build_topology({{0, 1}, {2}, {3, 4}}, 5);
  for (const auto& n : t.neighbors) EXPECT_TRUE(n.empty());
}

TEST(Topology, Chain) {
  const Topology t = build_topology({{0}, {0, 1}, {1}}, 2);
  EXPECT_EQ(t.neighbors[1], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(t.neighbors[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(t.neighbors[2], (std::vector<std::size_t>{1}));
  EXPECT_EQ(t.overlap(0, 2).size(), 0u);
  EXPECT_EQ(t.overlap(0, 1), (std::vector<Eigen::Index>{0}));
}

TEST(Topology, FromProblemSkipsZeroRows) {
  const Topology t = build_topology(examples::coupled_qp());
  // block i shares rows 2(i-1), 2(i-1)+1 with its left neighbor and 2i, 2i+1 with its right
  EXPECT_EQ(t.rows[0], (std::vector<Eigen::Index>{0, 1}));
  EXPECT_EQ(t.rows[1], (std::vector<Eigen::Index>{0, 1, 2, 3}));
  EXPECT_EQ(t.neighbors[1], (std::vector<std::size_t>{0, 2}));
}

TEST(FoldSchur, SharesAreSplitByMultiplicity) {
  const Topology t = build_topology({{0}, {0, 1}}, 2);
  SchurPair p0{Matrix::Zero(2, 2), Vector::Zero(2)}, p1{Matrix::Zero(2, 2), Vector::Zero(2)};
  p0.S(0, 0) = 1.0;
  p1.S << 2, 1, 1, 3;
  const Vector lambda = (Vector(2) << 4.0, 6.0).finished(), b = (Vector(2) << 1.0, 1.0).finished();
  const double mu = 2.0;
  const auto blocks = fold_schur(t, {p0, p1}, lambda, mu, b);
  const SchurPair g = assemble_global(t, blocks);
  Matrix S = p0.S + p1.S;
  S.diagonal().array() += 1.0 / mu;
  EXPECT_LE((g.S - S).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((g.s - (lambda / mu - b)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(fold_schur(t, {p0, p1}, lambda, 0.0, b), std::invalid_argument);
}

TEST(Dadmm, SingleAgentFirstIterateAndFixedPoint) {
  const Topology t = build_topology({{0, 1}}, 2);
  std::mt19937_64 rng(1);
  const Matrix S = oracle::random_spd(rng, 2);
  const Vector s = oracle::random_vector(rng, 2), l0 = oracle::random_vector(rng, 2);
  const double rho = 1.5;
  const InnerResult one = run_dadmm(t, {{S, s}}, l0, rho, 1);
  const Vector expect = (S + rho * Matrix::Identity(2, 2)).llt().solve(s + rho * l0);
  EXPECT_LE((one.lambda - expect).cwiseAbs().maxCoeff(), 1e-14);
  const InnerResult many = run_dadmm(t, {{S, s}}, l0, rho, 300);
  EXPECT_LE((many.lambda - S.llt().solve(s)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(many.log.edge_floats.empty());
}

TEST(Dadmm, TwoIdenticalScalarAgents) {
  const Topology t = build_topology({{0}, {0}}, 1);
  const InnerResult r = run_dadmm(t, {block(1, 2), block(1, 2)}, Vector::Zero(1), 1.0, 200);
  EXPECT_NEAR(r.lambda[0], 2.0, 1e-6);
  EXPECT_LE(r.agreement, 1e-6);
}

TEST(Dadmm, RandomFourAgentSystem) {
  std::uint64_t seed = 42;
  oracle::SchurInstance inst = oracle::random_schur(seed);
  while (inst.topo.n_agents() != 4) inst = oracle::random_schur(++seed);
  const InnerResult r = run_dadmm(inst.topo, inst.blocks, Vector::Zero(inst.topo.n_c), 1.0, 3000);
  EXPECT_LE((r.lambda - inst.dense_solution).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Dadmm, ResidualDecreasesOverWindows) {
  const oracle::SchurInstance inst = oracle::random_schur(7);
  double prev = std::numeric_limits<double>::infinity();
  for (int n = 20; n <= 200; n += 20) {
    const InnerResult r = run_dadmm(inst.topo, inst.blocks, Vector::Zero(inst.topo.n_c), 1.0, n);
    EXPECT_LT(r.residual, prev) << n << " iterations";
    prev = r.residual;
  }
}

TEST(Dadmm, MessageCountsAndLocality) {
  const oracle::SchurInstance inst = oracle::random_schur(11);
  const int n = 17;
  const InnerResult r = run_dadmm(inst.topo, inst.blocks, Vector::Zero(inst.topo.n_c), 1.0, n);
  const std::size_t na = inst.topo.n_agents();
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j) {
      if (i == j) continue;
      EXPECT_EQ(r.log.floats(i, j), inst.topo.overlap(i, j).size() * static_cast<std::uint64_t>(n));
    }
  EXPECT_EQ(r.log.global_scalars, 0u);
}

TEST(Dadmm, RejectsBadInput) {
  const Topology t = build_topology({{0}}, 1);
  EXPECT_THROW(run_dadmm(t, {block(1, 1)}, Vector::Zero(1), 0.0, 5), std::invalid_argument);
  EXPECT_THROW(run_dadmm(t, {block(1, 1)}, Vector::Zero(2), 1.0, 5), std::invalid_argument);
  EXPECT_THROW(run_dadmm(t, {}, Vector::Zero(1), 1.0, 5), std::invalid_argument);
}

TEST(Dcg, ExactStartTerminatesImmediately) {
  const oracle::SchurInstance inst = oracle::random_schur(3);
  const InnerResult r = run_dcg(inst.topo, inst.blocks, inst.dense_solution, 10);
  EXPECT_LE(r.iterations, 1);
  EXPECT_LE((r.lambda - inst.dense_solution).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dcg, OneDimensionalSystem) {
  const Topology t = build_topology({{0}}, 1);
  const InnerResult r = run_dcg(t, {block(2, 6)}, Vector::Zero(1), 1);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_NEAR(r.lambda[0], 3.0, 1e-15);
}

TEST(Dcg, FiveAgentsEightRows) {
  std::uint64_t seed = 0;
  oracle::SchurInstance inst = oracle::random_schur(seed);
  while (inst.topo.n_agents() != 5 || inst.topo.n_c != 8) inst = oracle::random_schur(++seed);
  const Vector l0 = Vector::Zero(8);
  const double r0 = detail::global_residual(inst.topo, inst.blocks, l0);
  const InnerResult r = run_dcg(inst.topo, inst.blocks, l0, 8);
  EXPECT_LE(r.residual, 1e-8 * r0);
  EXPECT_LE((r.lambda - inst.dense_solution).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Dcg, MessageCounts) {
  std::uint64_t seed = 5;
  oracle::SchurInstance inst = oracle::random_schur(seed);
  while (inst.topo.n_c < 6) inst = oracle::random_schur(++seed);
  const int n = 3;
  const InnerResult r = run_dcg(inst.topo, inst.blocks, Vector::Zero(inst.topo.n_c), n);
  ASSERT_EQ(r.iterations, n);
  const std::size_t na = inst.topo.n_agents();
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j) {
      if (i == j) continue;
      EXPECT_EQ(r.log.floats(i, j), inst.topo.overlap(i, j).size() * static_cast<std::uint64_t>(n));
    }
  EXPECT_EQ(r.log.global_scalars, 2 * na * static_cast<std::uint64_t>(n));
  EXPECT_EQ(r.log.global_sum_rounds, 2u * n);
}

TEST(Dcg, DeterministicAndParallelIdentical) {
  const oracle::SchurInstance inst = oracle::random_schur(9);
  const Vector l0 = Vector::Zero(inst.topo.n_c);
  const InnerResult a = run_dcg(inst.topo, inst.blocks, l0, 5, false);
  const InnerResult b = run_dcg(inst.topo, inst.blocks, l0, 5, true);
  EXPECT_EQ(std::memcmp(a.lambda.data(), b.lambda.data(), sizeof(double) * static_cast<std::size_t>(a.lambda.size())), 0);
  const InnerResult c = run_dadmm(inst.topo, inst.blocks, l0, 1.0, 30, false);
  const InnerResult d = run_dadmm(inst.topo, inst.blocks, l0, 1.0, 30, true);
  EXPECT_EQ(std::memcmp(c.lambda.data(), d.lambda.data(), sizeof(double) * static_cast<std::size_t>(c.lambda.size())), 0);
}

TEST(Dcg, BreakdownOnIndefiniteBlocks) {
  const Topology t = build_topology({{0}}, 1);
  EXPECT_THROW(run_dcg(t, {block(-1, 1)}, Vector::Zero(1), 3), DecentralError);
}

TEST(WarmStart, Rules) {
  const Vector prev = Vector::Constant(3, 2.0);
  EXPECT_EQ(warm_start(prev, true, 3), prev);
  EXPECT_EQ(warm_start(prev, false, 3), Vector::Zero(3));
  EXPECT_EQ(warm_start(Vector(), true, 3), Vector::Zero(3));
}

TEST(WarmStart, StationaryOuterIterateNeedsFewInnerIterations) {
  // run bilevel to outer convergence, then solve the final Schur system again
  // warm-started from the converged lambda_qp
  const SeparableProblem p = examples::coupled_qp();
  SolverOptions o;
  o.variant = Variant::bilevel;
  o.inner_iter = static_cast<int>(p.n_c());
  o.term_eps = 1e-10;
  std::vector<std::uint64_t> inner_its;
  RunSetup setup;
  setup.observer = [&](const IterateState&, const IterationRecord& rec) {
    inner_its.push_back(static_cast<std::uint64_t>(rec.inner_iterations));
  };
  const Solution s = run_aladin(p, o, setup);
  ASSERT_EQ(s.reason, Termination::tolerance_met);
  ASSERT_FALSE(inner_its.empty());
  EXPECT_LE(inner_its.back(), 2u);
}
