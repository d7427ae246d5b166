#include "saferoa/approx.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

namespace saferoa {
namespace {

// Brute-force reference: direct sampling with a far denser grid than sup_error uses.
double dense_sup_error(const ScalarFunction& f, const ChebyshevInterpolant& c) {
  double worst = 0.0;
  const int n = 100001;
  for (int i = 0; i < n; ++i) {
    const double x = c.lower() + (c.upper() - c.lower()) * i / (n - 1);
    worst = std::max(worst, std::abs(f(x) - c(x)));
  }
  return worst;
}

TEST(Chebyshev, Nodes) {
  const auto n2 = chebyshev_nodes(2);
  ASSERT_EQ(n2.size(), 3u);
  EXPECT_DOUBLE_EQ(n2[0], 1.0);
  EXPECT_DOUBLE_EQ(n2[1], 0.0);
  EXPECT_DOUBLE_EQ(n2[2], -1.0);

  const auto n4 = chebyshev_nodes(4);
  ASSERT_EQ(n4.size(), 5u);
  const double r = std::sqrt(2.0) / 2.0;
  const std::vector<double> expected{1.0, r, 0.0, -r, -1.0};
  for (size_t i = 0; i < 5; ++i) EXPECT_NEAR(n4[i], expected[i], 1e-15);
  for (size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(n4[i], -n4[4 - i]);

  EXPECT_EQ(chebyshev_nodes(1), (std::vector<double>{1.0, -1.0}));
  EXPECT_EQ(chebyshev_nodes(0), (std::vector<double>{1.0}));
}

TEST(Chebyshev, ReproducesCubicExactly) {
  const ScalarFunction cube = [](double x) { return x * x * x; };
  const auto c = fit_interpolant(cube, 3, -1.0, 1.0);
  // x^3 = (3 T_1 + T_3) / 4.
  EXPECT_NEAR(c.coefficients()[1], 0.75, 1e-14);
  EXPECT_NEAR(c.coefficients()[3], 0.25, 1e-14);
  const Polynomial t = Polynomial::variable(1, 0);
  EXPECT_TRUE(approx_equal(to_polynomial(c), t * t * t, 1e-10));
}

TEST(Chebyshev, ConstantFunction) {
  for (int k : {0, 1, 5, 9}) {
    const auto c = fit_interpolant([](double) { return 1.0; }, k, -3.0, 2.0);
    EXPECT_NEAR(c.coefficients()[0], 1.0, 1e-14);
    for (size_t i = 1; i < c.coefficients().size(); ++i) EXPECT_NEAR(c.coefficients()[i], 0.0, 1e-14);
  }
}

TEST(Chebyshev, ExpWithinRemainderBound) {
  const ScalarFunction f = [](double x) { return std::exp(x); };
  const auto c = fit_interpolant(f, 10, -1.0, 1.0);
  const double bound = remainder_bound(std::numbers::e, 2.0, 10);
  EXPECT_NEAR(bound, 4.0 * std::numbers::e / 1024.0, 1e-15);
  EXPECT_LE(sup_error(f, c, 10000), bound);
  EXPECT_LE(dense_sup_error(f, c), bound);
}

TEST(Chebyshev, RejectsNonFiniteNode) {
  const ScalarFunction f = [](double x) { return 1.0 / x; };
  // k = 2 has a node at the interval midpoint 0.
  try {
    fit_interpolant(f, 2, -1.0, 1.0);
    FAIL() << "expected domain_error";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("node 1"), std::string::npos);
  }
}

TEST(Chebyshev, ToPolynomialExamples) {
  const Polynomial t = Polynomial::variable(1, 0);
  EXPECT_TRUE(approx_equal(to_polynomial(ChebyshevInterpolant(-1, 1, {0, 0, 1})), 2.0 * t * t - 1.0, 1e-12));
  EXPECT_TRUE(approx_equal(to_polynomial(ChebyshevInterpolant(0, 2, {0, 1})), t - 1.0, 1e-12));
  EXPECT_TRUE(approx_equal(to_polynomial(ChebyshevInterpolant(-4, 7, {1})), Polynomial(1, 1.0), 1e-12));
}

TEST(Chebyshev, ClenshawMatchesExpansion) {
  const ScalarFunction f = [](double x) { return std::sin(3 * x) + x * x; };
  const auto c = fit_interpolant(f, 8, -2.0, 1.5);
  const Polynomial p = to_polynomial(c);
  for (int i = 0; i <= 200; ++i) {
    const double x = -2.0 + 3.5 * i / 200.0;
    EXPECT_NEAR(p({x}), c(x), 1e-9);
  }
  // Nodal exactness.
  for (double node : chebyshev_nodes(8)) {
    const double x = c.from_unit(node);
    EXPECT_NEAR(c(x), f(x), 1e-10);
  }
}

TEST(Chebyshev, RemainderBoundExamples) {
  EXPECT_DOUBLE_EQ(remainder_bound(1.0, 2.0, 4), 0.25);
  EXPECT_DOUBLE_EQ(remainder_bound(0.0, 3.0, 7), 0.0);
  EXPECT_DOUBLE_EQ(remainder_bound(1.0, 2.0, 5), 0.125);
  EXPECT_THROW(remainder_bound(1.0, 1.0, 3), std::invalid_argument);
  EXPECT_THROW(remainder_bound(1.0, 0.5, 3), std::invalid_argument);
  for (int k = 0; k < 20; ++k) EXPECT_LT(remainder_bound(2.0, 1.5, k + 1), remainder_bound(2.0, 1.5, k));
}

TEST(Chebyshev, SupErrorExamples) {
  const ScalarFunction sq = [](double x) { return x * x; };
  // With nodes {1, -1} the degree-1 interpolant of x^2 is the constant 1, so
  // the residual at the midpoint is 1.
  const auto c1 = fit_interpolant(sq, 1, -1.0, 1.0);
  EXPECT_NEAR(c1(0.0), 1.0, 1e-15);
  EXPECT_NEAR(sup_error(sq, c1, 101), 1.0, 1e-12);

  const auto c = fit_interpolant([](double x) { return std::cos(x); }, 6, -1.0, 1.0);
  const ScalarFunction self = [&](double x) { return c(x); };
  EXPECT_LE(sup_error(self, c, 1000), 1e-9);
  EXPECT_THROW(sup_error(sq, c, 1), std::invalid_argument);
}

TEST(Chebyshev, RandomPolynomialsReproduced) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int deg = 1 + trial % 7;
    std::vector<double> a(static_cast<size_t>(deg) + 1);
    for (auto& v : a) v = u(rng);
    const ScalarFunction f = [&](double x) {
      double s = 0.0;
      for (auto it = a.rbegin(); it != a.rend(); ++it) s = s * x + *it;
      return s;
    };
    const auto c = fit_interpolant(f, deg + trial % 3, -1.0, 2.0);
    EXPECT_LE(sup_error(f, c, 2000), 1e-9);
  }
}

TEST(Chebyshev, ExpErrorMonotoneInDegree) {
  const ScalarFunction f = [](double x) { return std::exp(x); };
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 2; k <= 16; ++k) {
    const double e = sup_error(f, fit_interpolant(f, k, -1.0, 1.0), 4001);
    EXPECT_LE(e, prev * (1 + 1e-9) + 1e-15) << "k=" << k;
    prev = e;
  }
}

// Valid (c_m, rho) pairs: sup of |f| over the Bernstein ellipse with rho = 2
// (semi-axes 1.25 and 0.75).
TEST(Chebyshev, BoundHoldsForAnalyticFunctions) {
  struct Case {
    ScalarFunction f;
    double c_m;
  };
  const double rho = 2.0;
  const std::vector<Case> cases{
      {[](double x) { return std::exp(x); }, std::exp(1.25)},
      {[](double x) { return std::sin(x); }, std::cosh(0.75)},
      {[](double x) { return 1.0 / (1.0 + (x / 3) * (x / 3)); }, 1.0 / (1.0 - 1.25 * 1.25 / 9.0)},
  };
  for (const auto& cs : cases) {
    for (int k = 2; k <= 14; ++k) {
      const auto c = fit_interpolant(cs.f, k, -1.0, 1.0);
      EXPECT_LE(dense_sup_error(cs.f, c), remainder_bound(cs.c_m, rho, k)) << "k=" << k;
    }
  }
}

TEST(Chebyshev, DomainMapConsistency) {
  const ScalarFunction f = [](double x) { return std::log(2.0 + x); };
  const double a = 0.5;
  const double b = 3.0;
  const auto direct = fit_interpolant(f, 9, a, b);
  const ScalarFunction pulled = [&](double t) { return f(0.5 * (b - a) * t + 0.5 * (b + a)); };
  const auto unit = fit_interpolant(pulled, 9, -1.0, 1.0);
  for (size_t i = 0; i < direct.coefficients().size(); ++i) {
    EXPECT_NEAR(direct.coefficients()[i], unit.coefficients()[i], 1e-9);
  }
  const Polynomial t = Polynomial::variable(1, 0);
  const std::vector<Polynomial> to_unit{(t - 0.5 * (b + a)) * (2.0 / (b - a))};
  EXPECT_TRUE(approx_equal(to_polynomial(direct), to_polynomial(unit).compose(to_unit), 1e-9));
}

}  // namespace
}  // namespace saferoa
