#include "saferoa/sos.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace saferoa {
namespace {

Polynomial var(int n, int i) { return Polynomial::variable(n, i); }

Polynomial motzkin() {
  const Polynomial x = var(2, 0);
  const Polynomial y = var(2, 1);
  return pow(x, 4) * y * y + x * x * pow(y, 4) - 3.0 * x * x * y * y + 1.0;
}

TEST(SosProgram, DeclarePolyExamples) {
  SosProgram prog(2);
  const auto s = prog.declare_poly("s", 2, PolyKind::Sos);
  EXPECT_EQ(s.expr.terms().size(), 6u);
  ASSERT_EQ(s.basis.size(), 3u);
  EXPECT_EQ(s.basis[0], Monomial::constant(2));
  EXPECT_EQ(s.basis[1], Monomial::variable(2, 0));
  EXPECT_EQ(s.basis[2], Monomial::variable(2, 1));

  SosProgram prog3(3);
  const auto c = prog3.declare_poly("c", 0, PolyKind::Free);
  ASSERT_EQ(c.expr.terms().size(), 1u);
  EXPECT_EQ(c.expr.terms().begin()->second.coef.size(), 1u);

  SosProgram prog1(1);
  EXPECT_THROW(prog1.declare_poly("bad", 3, PolyKind::Sos), std::invalid_argument);
  EXPECT_THROW(prog1.declare_poly("bad", -1, PolyKind::Free), std::invalid_argument);
}

TEST(SosProgram, ConstantConstraints) {
  SosProgram one(1);
  one.add_sos_constraint(Polynomial(1, 1.0), "one");
  EXPECT_EQ(one.solve().status, SolveStatus::Optimal);

  SosProgram minus(1);
  minus.add_sos_constraint(Polynomial(1, -1.0), "minus one");
  EXPECT_EQ(minus.solve().status, SolveStatus::Infeasible);
}

TEST(SosProgram, BilinearGuardNamesBothFactors) {
  SosProgram prog(2);
  const auto s = prog.declare_poly("s1", 2, PolyKind::Sos);
  const auto b = prog.declare_poly("B", 2, PolyKind::Free);
  try {
    (void)(s.expr * b.expr);
    FAIL() << "expected BilinearError";
  } catch (const BilinearError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("s1"), std::string::npos);
    EXPECT_NE(msg.find("B"), std::string::npos);
  }
  // Fixed polynomial times decision polynomial is fine.
  EXPECT_NO_THROW((void)(PolyExpr(var(2, 0)) * b.expr));
}

TEST(SosProgram, SquarePlusConstant) {
  // x^2 + c in SOS, maximize -c: optimum c = 0.
  SosProgram prog(1);
  const PolyExpr c = prog.new_free_scalar("c");
  const Polynomial x = var(1, 0);
  prog.add_sos_constraint(PolyExpr(x * x) + c, "p");
  prog.maximize(-c.coefficient(Monomial::constant(1)));
  const auto in = prog.compile();
  // One row per distinct monomial: 1, x, x^2.
  EXPECT_EQ(in.num_rows, 3);
  const auto r = prog.solve();
  ASSERT_EQ(r.status, SolveStatus::Optimal) << r.message;
  EXPECT_NEAR(r.value(c).constant_term(), 0.0, 1e-6);
  EXPECT_TRUE(prog.verify(r).passed()) << prog.verify(r).summary();
}

TEST(SosProgram, FeasibilityProblemHasZeroObjective) {
  SosProgram prog(1);
  const Polynomial x = var(1, 0);
  prog.add_sos_constraint(x * x + 2.0 * x + 1.0, "square");
  const auto r = prog.solve();
  ASSERT_EQ(r.status, SolveStatus::Optimal);
  EXPECT_EQ(r.objective, 0.0);
  EXPECT_TRUE(prog.verify(r).passed());
}

TEST(SosProgram, MinimumTraceGram) {
  // min trace Q with z'Qz = x^2 + 1, z = (1, x): Q = I.
  SosProgram prog(1);
  const auto s = prog.declare_poly("s", 2, PolyKind::Sos);
  const Polynomial x = var(1, 0);
  prog.add_polynomial_equality(s.expr - PolyExpr(x * x + 1.0), "match");
  prog.minimize(s.expr.even_coefficient_sum());
  const auto r = prog.solve();
  ASSERT_EQ(r.status, SolveStatus::Optimal) << r.message;
  const Eigen::MatrixXd& q = r.raw.blocks[0];
  EXPECT_NEAR(q(0, 0), 1.0, 1e-7);
  EXPECT_NEAR(q(1, 1), 1.0, 1e-7);
  EXPECT_NEAR(q(0, 1), 0.0, 1e-7);
  EXPECT_NEAR(q.trace(), 2.0, 1e-7);
}

TEST(SosProgram, UnboundedToy) {
  SosProgram prog(1);
  const PolyExpr c = prog.new_free_scalar("c");
  prog.add_sos_constraint(Polynomial(1, 1.0), "one");
  prog.maximize(c.coefficient(Monomial::constant(1)));
  EXPECT_EQ(prog.solve().status, SolveStatus::Unbounded);
}

TEST(SosProgram, MotzkinIsNotSos) {
  const Polynomial m = motzkin();
  // Nonnegativity by AM-GM: the three terms x^4y^2, x^2y^4, 1 have geometric
  // mean x^2y^2. Confirm on a grid.
  for (int i = -40; i <= 40; ++i) {
    for (int j = -40; j <= 40; ++j) EXPECT_GE(m({i / 20.0, j / 20.0}), -1e-12);
  }
  SosProgram prog(2);
  prog.add_sos_constraint(m, "motzkin");
  EXPECT_EQ(prog.solve().status, SolveStatus::Infeasible);
}

TEST(SosProgram, RandomGramPolynomialsAccepted) {
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 3;
    const int half = 1 + trial % 2;
    const auto basis = monomial_basis(n, half);
    const auto k = static_cast<Eigen::Index>(basis.size());
    const Eigen::MatrixXd r = Eigen::MatrixXd::NullaryExpr(k, k, [&] { return g(rng); });
    const Eigen::MatrixXd q = r * r.transpose();
    const Polynomial p = GramRepresentation{basis, q}.expand();
    SosProgram prog(n);
    prog.add_sos_constraint(p, "zQz");
    const auto res = prog.solve();
    ASSERT_EQ(res.status, SolveStatus::Optimal) << "trial " << trial << ": " << res.message;
    const auto rep = prog.verify(res);
    EXPECT_TRUE(rep.passed()) << rep.summary();
  }
}

TEST(SosProgram, OddDegreeNeverSos) {
  std::mt19937 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 1 + trial % 2;
    Polynomial p(n);
    for (const auto& m : monomial_basis(n, 3)) p.add_term(m, g(rng));
    p.add_term(Monomial::variable(n, 0, 3), 1.0);
    p = p + 100.0;
    SosProgram prog(n);
    prog.add_sos_constraint(p, "odd");
    EXPECT_EQ(prog.solve().status, SolveStatus::Infeasible) << p.to_string();
  }
}

TEST(SosProgram, DuplicateConstraintIsIdempotent) {
  // max c s.t. x^4 - 2x^2 + 2 - c in SOS has optimum 1.
  const Polynomial x = var(1, 0);
  const Polynomial p = pow(x, 4) - 2.0 * x * x + 2.0;
  auto run = [&](int copies) {
    SosProgram prog(1);
    const PolyExpr c = prog.new_free_scalar("c");
    for (int k = 0; k < copies; ++k) prog.add_sos_constraint(PolyExpr(p) - c, "lower bound");
    prog.maximize(c.coefficient(Monomial::constant(1)));
    const auto r = prog.solve();
    EXPECT_EQ(r.status, SolveStatus::Optimal) << r.message;
    EXPECT_TRUE(prog.verify(r).passed());
    return r.objective;
  };
  const double one = run(1);
  EXPECT_NEAR(one, 1.0, 1e-6);
  EXPECT_NEAR(run(2), one, 1e-6);
  EXPECT_NEAR(run(3), one, 1e-6);
}

TEST(SosProgram, VerifyDetectsCorruptedGram) {
  const Polynomial x = var(1, 0);
  SosProgram prog(1);
  prog.add_sos_constraint(pow(x + 1.0, 2), "square of x+1");
  auto r = prog.solve();
  ASSERT_EQ(r.status, SolveStatus::Optimal);
  EXPECT_TRUE(prog.verify(r).passed());

  // Hand certificate Q = [1 1; 1 1] over (1, x). Gram blocks are stored for
  // the constraint divided by its largest coefficient, 2.
  r.raw.blocks[0] = 0.5 * Eigen::Matrix2d::Ones();
  EXPECT_TRUE(prog.verify(r).passed());

  // Inject a negative eigenvalue of -1e-3.
  Eigen::Matrix2d q;
  q << 0.5 - 1e-3, 0.5, 0.5, 0.5 - 1e-3;
  // Eigenvalues 1 - 1e-3 and -1e-3.
  r.raw.blocks[0] = q;
  const auto rep = prog.verify(r);
  EXPECT_FALSE(rep.passed());
  ASSERT_EQ(rep.checks.size(), 1u);
  EXPECT_EQ(rep.checks[0].name, "square of x+1");
  EXPECT_NEAR(rep.checks[0].min_eigenvalue, -1e-3, 1e-12);
}

TEST(SosBasis, TrimsByDegreeAndExponent) {
  // Support of x^2 y^2 + x^4 + 1 in two variables.
  const std::vector<Monomial> support{Monomial::constant(2), Monomial({4, 0}), Monomial({2, 2})};
  const auto b = sos_basis(2, support);
  // y^2 cannot appear (y exponent <= 1); y alone would need y^2 in support or a pair.
  for (const auto& m : b) EXPECT_LE(m[1], 1);
  EXPECT_NE(std::find(b.begin(), b.end(), Monomial({2, 0})), b.end());
  EXPECT_NE(std::find(b.begin(), b.end(), Monomial({1, 1})), b.end());

  // Homogeneous quartic: no constant or linear monomials.
  const std::vector<Monomial> quartic{Monomial({4, 0}), Monomial({0, 4})};
  for (const auto& m : sos_basis(2, quartic)) EXPECT_EQ(m.degree(), 2);
}

TEST(PolyExpr, LieDerivativeWithDecisionField) {
  SosProgram prog(2);
  const auto u = prog.declare_poly("u", 1, PolyKind::Free);
  const Polynomial x1 = var(2, 0);
  const Polynomial x2 = var(2, 1);
  const Polynomial v = x1 * x1 + x2 * x2;
  const std::vector<PolyExpr> field{PolyExpr(-x1) + u.expr, PolyExpr(x2)};
  const PolyExpr vdot = lie_derivative(PolyExpr(v), field);
  Eigen::VectorXd vals = Eigen::VectorXd::Zero(3);
  vals(1) = -3.0;  // coefficient of x1 in u
  const Polynomial got = vdot.evaluate(vals);
  const Polynomial want = 2.0 * x1 * (-x1 - 3.0 * x1) + 2.0 * x2 * x2;
  EXPECT_TRUE(approx_equal(got, want, 1e-12));
  EXPECT_EQ(vdot.owners().count("u"), 1u);
}

}  // namespace
}  // namespace saferoa
