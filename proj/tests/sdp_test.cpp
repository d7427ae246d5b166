#include "saferoa/sdp.hpp"

#include <random>

#include <gtest/gtest.h>

namespace saferoa {
namespace {

// min x  s.t.  x + y = 1, x - y = 0 ... as an LP with nonnegatives.
TEST(InteriorPoint, SmallLp) {
  SdpInstance in;
  in.num_nonneg = 2;
  in.num_rows = 1;
  in.nonneg_terms = {{0, 0, 1.0}, {0, 1, 1.0}};
  in.rhs = Eigen::VectorXd::Constant(1, 1.0);
  in.nonneg_cost = Eigen::Vector2d(2.0, 3.0);
  const auto sol = InteriorPointSolver().solve(in);
  ASSERT_EQ(sol.status, SolveStatus::Optimal) << sol.message;
  EXPECT_NEAR(sol.primal_objective, 2.0, 1e-7);
  EXPECT_NEAR(sol.nonneg_values(0), 1.0, 1e-7);
  EXPECT_NEAR(sol.duals(0), 2.0, 1e-7);
}

// x^2 + c is SOS over basis {1, x}: Q = [[q00, q01], [q01, q11]],
// q11 = 1, 2 q01 = 0, q00 = c. Minimizing c (free) gives 0.
TEST(InteriorPoint, SosLowerBoundOfSquare) {
  SdpInstance in;
  in.block_sizes = {2};
  in.num_free = 1;
  in.num_rows = 3;
  in.block_terms = {{0, 0, 0, 0, 1.0}, {1, 0, 0, 1, 2.0}, {2, 0, 1, 1, 1.0}};
  in.free_terms = {{0, 0, -1.0}};
  in.rhs = Eigen::Vector3d(0.0, 0.0, 1.0);
  in.free_cost = Eigen::VectorXd::Constant(1, 1.0);
  const auto sol = InteriorPointSolver().solve(in);
  ASSERT_EQ(sol.status, SolveStatus::Optimal) << sol.message;
  EXPECT_NEAR(sol.free_values(0), 0.0, 1e-6);
}

// min trace Q s.t. z'Qz = x^2 + 1 with z = (1, x).
TEST(InteriorPoint, MinTraceGram) {
  SdpInstance in;
  in.block_sizes = {2};
  in.num_rows = 3;
  in.block_terms = {{0, 0, 0, 0, 1.0}, {1, 0, 0, 1, 2.0}, {2, 0, 1, 1, 1.0}};
  in.rhs = Eigen::Vector3d(1.0, 0.0, 1.0);
  in.block_cost = {{0, 0, 0, 1.0}, {0, 1, 1, 1.0}};
  const auto sol = InteriorPointSolver().solve(in);
  ASSERT_EQ(sol.status, SolveStatus::Optimal) << sol.message;
  EXPECT_NEAR(sol.primal_objective, 2.0, 1e-7);
  EXPECT_NEAR(sol.blocks[0](0, 0), 1.0, 1e-7);
  EXPECT_NEAR(sol.blocks[0](0, 1), 0.0, 1e-7);
  EXPECT_NEAR(sol.blocks[0](1, 1), 1.0, 1e-7);
}

// -1 = q00 with Q PSD is infeasible.
TEST(InteriorPoint, DetectsInfeasibility) {
  SdpInstance in;
  in.block_sizes = {1};
  in.num_rows = 1;
  in.block_terms = {{0, 0, 0, 0, 1.0}};
  in.rhs = Eigen::VectorXd::Constant(1, -1.0);
  const auto sol = InteriorPointSolver().solve(in);
  EXPECT_EQ(sol.status, SolveStatus::Infeasible) << sol.message;
}

// min -t s.t. q00 - t = 0 has no lower bound.
TEST(InteriorPoint, DetectsUnboundedness) {
  SdpInstance in;
  in.block_sizes = {1};
  in.num_free = 1;
  in.num_rows = 1;
  in.block_terms = {{0, 0, 0, 0, 1.0}};
  in.free_terms = {{0, 0, -1.0}};
  in.rhs = Eigen::VectorXd::Constant(1, 0.0);
  in.free_cost = Eigen::VectorXd::Constant(1, -1.0);
  const auto sol = InteriorPointSolver().solve(in);
  EXPECT_EQ(sol.status, SolveStatus::Unbounded) << sol.message;
}

TEST(InteriorPoint, PresolveRejectsCostOnUnusedVariable) {
  SdpInstance in;
  in.block_sizes = {1};
  in.num_free = 2;
  in.num_rows = 1;
  in.block_terms = {{0, 0, 0, 0, 1.0}};
  in.free_terms = {{0, 0, 1.0}};
  in.rhs = Eigen::VectorXd::Constant(1, 1.0);
  in.free_cost = Eigen::Vector2d(0.0, 1.0);
  EXPECT_EQ(InteriorPointSolver().solve(in).status, SolveStatus::Unbounded);
}

// Random feasible SDPs: build b from a known PD X0 and C = A'y0 + S0, so the
// solution must satisfy strong duality; check residuals and the gap.
TEST(InteriorPoint, RandomFeasibleInstances) {
  std::mt19937 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 4 + trial;
    const int m = 2 + 2 * trial;
    SdpInstance in;
    in.block_sizes = {n};
    in.num_rows = m;
    std::vector<Eigen::MatrixXd> a(static_cast<size_t>(m));
    for (int r = 0; r < m; ++r) {
      Eigen::MatrixXd t = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
      a[static_cast<size_t>(r)] = 0.5 * (t + t.transpose());
      for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
          const double v = i == j ? a[static_cast<size_t>(r)](i, i) : 2.0 * a[static_cast<size_t>(r)](i, j);
          in.block_terms.push_back({r, 0, i, j, v});
        }
      }
    }
    Eigen::MatrixXd r0 = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
    const Eigen::MatrixXd x0 = r0 * r0.transpose() + Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd r1 = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
    Eigen::MatrixXd c = r1 * r1.transpose() + Eigen::MatrixXd::Identity(n, n);
    in.rhs.resize(m);
    for (int r = 0; r < m; ++r) {
      in.rhs(r) = a[static_cast<size_t>(r)].cwiseProduct(x0).sum();
      c += g(rng) * a[static_cast<size_t>(r)];
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) in.block_cost.push_back({0, i, j, i == j ? c(i, i) : 2.0 * c(i, j)});
    }
    const auto sol = InteriorPointSolver().solve(in);
    ASSERT_EQ(sol.status, SolveStatus::Optimal) << "trial " << trial << ": " << sol.message;
    const Eigen::MatrixXd& x = sol.blocks[0];
    for (int r = 0; r < m; ++r) {
      EXPECT_NEAR(a[static_cast<size_t>(r)].cwiseProduct(x).sum(), in.rhs(r), 1e-6 * (1 + std::abs(in.rhs(r))));
    }
    Eigen::MatrixXd s = c;
    for (int r = 0; r < m; ++r) s -= sol.duals(r) * a[static_cast<size_t>(r)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-6);
    EXPECT_NEAR(sol.primal_objective, sol.dual_objective, 1e-6 * (1 + std::abs(sol.primal_objective)));
  }
}

TEST(InteriorPoint, SparseTextListsEverything) {
  SdpInstance in;
  in.block_sizes = {2};
  in.num_rows = 1;
  in.block_terms = {{0, 0, 0, 1, 2.0}};
  in.rhs = Eigen::VectorXd::Constant(1, 0.5);
  const std::string text = in.to_sparse_text();
  EXPECT_NE(text.find("blocks 1 2"), std::string::npos);
  EXPECT_NE(text.find("0 0 0 1 2"), std::string::npos);
  EXPECT_EQ(to_string(SolveStatus::Inaccurate), "Inaccurate");
}

}  // namespace
}  // namespace saferoa
