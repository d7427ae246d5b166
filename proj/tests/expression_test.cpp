#include "saferoa/expression.hpp"

#include <cmath>
#include <random>
#include <string>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "saferoa/approx.hpp"
#include "saferoa/dynamics.hpp"

namespace saferoa {
namespace {

const char* kExample1Second = "x1^2*x2 + 1 - sqrt(abs(exp(x1)*cos(x1)))";

TEST(Parse, NegationAndSum) {
  const auto e = Expression::parse("-x1 + x2", 2);
  const std::vector<double> x{1.0, 0.0};
  EXPECT_DOUBLE_EQ(e.evaluate(x), -1.0);
}

TEST(Parse, NonPolynomialComponentAtOrigin) {
  const auto e = Expression::parse(kExample1Second, 2);
  const std::vector<double> x{0.0, 0.0};
  EXPECT_NEAR(e.evaluate(x), 0.0, 1e-15);
  // Hand evaluation away from the origin.
  const std::vector<double> y{0.3, -1.2};
  const double expected = 0.09 * -1.2 + 1.0 - std::sqrt(std::abs(std::exp(0.3) * std::cos(0.3)));
  EXPECT_NEAR(e.evaluate(y), expected, 1e-14);
}

TEST(Parse, TrailingOperatorReportsColumn) {
  try {
    Expression::parse("x1 +", 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.column(), 5);
  }
}

TEST(Parse, UnknownIdentifier) {
  EXPECT_THROW(Expression::parse("x1 + x3", 2), ParseError);
  EXPECT_THROW(Expression::parse("u1", 2), ParseError);
  EXPECT_THROW(Expression::parse("tan(x1)", 2), ParseError);
  EXPECT_NO_THROW(Expression::parse("u1 * x2", 2, 1));
}

TEST(Parse, NonIntegerExponent) {
  EXPECT_THROW(Expression::parse("x1^2.5", 1), ParseError);
  EXPECT_THROW(Expression::parse("x1^x1", 1), ParseError);
}

TEST(Parse, Precedence) {
  const std::vector<double> x{2.0, 3.0};
  EXPECT_DOUBLE_EQ(Expression::parse("-x1^2", 2).evaluate(x), -4.0);
  EXPECT_DOUBLE_EQ(Expression::parse("x1 - x2 - 1", 2).evaluate(x), -2.0);
  EXPECT_DOUBLE_EQ(Expression::parse("x2 / x1 / 2", 2).evaluate(x), 0.75);
  EXPECT_DOUBLE_EQ(Expression::parse("1 + x1 * x2", 2).evaluate(x), 7.0);
  EXPECT_DOUBLE_EQ(Expression::parse("(1 + x1) * x2", 2).evaluate(x), 9.0);
  EXPECT_DOUBLE_EQ(Expression::parse("2^3^2", 2).evaluate(x), 64.0);
}

// Random syntactically valid source text over x1..x3.
std::string random_source(std::mt19937& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 9);
  std::uniform_int_distribution<int> var(1, 3);
  std::uniform_int_distribution<int> num(0, 40);
  switch (pick(rng)) {
    case 0:
      return fmt::format("x{}", var(rng));
    case 1:
      return fmt::format("{}", num(rng) / 8.0);
    case 2:
      return fmt::format("{}e-3", num(rng));
    case 3:
      return fmt::format("-{}", random_source(rng, depth - 1));
    case 4: {
      static const char* funcs[] = {"sin", "cos", "exp", "sqrt", "abs"};
      return fmt::format("{}({})", funcs[num(rng) % 5], random_source(rng, depth - 1));
    }
    case 5:
      return fmt::format("({})^{}", random_source(rng, depth - 1), num(rng) % 4);
    case 6:
      return fmt::format("{} + {}", random_source(rng, depth - 1), random_source(rng, depth - 1));
    case 7:
      return fmt::format("{} - ({})", random_source(rng, depth - 1), random_source(rng, depth - 1));
    case 8:
      return fmt::format("{} * {}", random_source(rng, depth - 1), random_source(rng, depth - 1));
    default:
      return fmt::format("({}) / ({})", random_source(rng, depth - 1), random_source(rng, depth - 1));
  }
}

TEST(Parse, PrintRoundTripCorpus) {
  std::mt19937 rng(11);
  for (int i = 0; i < 50; ++i) {
    const std::string src = random_source(rng, 4);
    const auto e = Expression::parse(src, 3);
    const std::string printed = e.to_string();
    const auto back = Expression::parse(printed, 3);
    EXPECT_TRUE(back == e) << src << "  ->  " << printed;
    EXPECT_EQ(back.to_string(), printed);
  }
}

TEST(Parse, StatesAndInputs) {
  const auto e = Expression::parse("x3*sin(x1) + u2", 3, 2);
  EXPECT_EQ(e.states(), (std::vector<int>{0, 2}));
  EXPECT_TRUE(e.uses_inputs());
}

TEST(ToPolynomial, ExpandsAndDividesByConstants) {
  const auto e = Expression::parse("(x1 - x2)^2 / 2 + 3", 2);
  const Polynomial x = Polynomial::variable(2, 0);
  const Polynomial y = Polynomial::variable(2, 1);
  const Polynomial expected = (x - y) * (x - y) * 0.5 + 3.0;
  EXPECT_TRUE(approx_equal(to_polynomial(e, 2), expected, 1e-15));
}

TEST(ToPolynomial, RejectsUnmarkedNodeWithPath) {
  const auto e = Expression::parse(kExample1Second, 2);
  try {
    to_polynomial(e, 2);
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& err) {
    const std::string msg = err.what();
    EXPECT_NE(msg.find("sqrt"), std::string::npos) << msg;
    EXPECT_NE(msg.find("root"), std::string::npos) << msg;
  }
  EXPECT_THROW(to_polynomial(Expression::parse("1 / x1", 1), 1), std::invalid_argument);
}

ControlAffineSystem make_system(const Json& j) { return system_from_json(j, "system"); }

TEST(Polynomialize, PolynomialSystemUntouched) {
  const auto sys = make_system(Json::parse(R"j({"n":2,"m":2,"f":["-x1 + x2","x1^2*x2 - 0.5*x2^3"],
      "g":[["1","0"],["0","1"]],"sigma_n":0})j"));
  const auto r = polynomialize(sys);
  for (int i = 0; i < 2; ++i) {
    const Polynomial direct = to_polynomial(sys.f[static_cast<size_t>(i)], 2);
    EXPECT_EQ(r.P[static_cast<size_t>(i)].terms(), direct.terms());
    EXPECT_EQ(r.xi_bound[static_cast<size_t>(i)], 0.0);
  }
}

TEST(Polynomialize, Example1Component) {
  const auto sys = make_system(Json::parse(fmt::format(R"j({{"n":2,"m":2,"f":["-x1 + x2","{}"],
      "g":[["1","0"],["0","1"]],"sigma_n":0.01,
      "markers":[{{"component":2,"expr":"sqrt(abs(exp(x1)*cos(x1)))","k":4,"interval":[-2,2]}}]}})j",
                                                       kExample1Second)));
  const auto r = polynomialize(sys);
  const Polynomial& p = r.P[1];
  EXPECT_LE(p.degree(), 4);
  // The only x2 dependence is the x1^2 x2 term.
  EXPECT_EQ(p.degree_in(1), 1);
  EXPECT_FALSE(r.bound_is_analytic[1]);
  EXPECT_GT(r.xi_empirical[1], 0.0);
  // Independent scan of the substitution error.
  double worst = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double t = -2.0 + 4.0 * i / 4000.0;
    const std::vector<double> x{t, 0.7};
    worst = std::max(worst, std::abs(sys.f[1].evaluate(x) - p(x)));
  }
  EXPECT_NEAR(worst, r.xi_empirical[1], 1e-3 * std::max(1.0, worst));
}

TEST(Polynomialize, SineWithinRemainderBound) {
  // |sin| on the rho = 2 Bernstein ellipse is at most cosh(0.75).
  const double c_m = std::cosh(0.75);
  const auto sys = make_system(Json::parse(fmt::format(R"j({{"n":1,"m":1,"f":["sin(x1) - x1^3"],"g":[["1"]],
      "markers":[{{"component":1,"expr":"sin(x1)","k":7,"interval":[-1,1],"c_m":{},"rho":2}}]}})j",
                                                       c_m)));
  const auto r = polynomialize(sys);
  EXPECT_TRUE(r.bound_is_analytic[0]);
  EXPECT_DOUBLE_EQ(r.xi_bound[0], remainder_bound(c_m, 2.0, 7));
  double worst = 0.0;
  for (int i = 0; i <= 20000; ++i) {
    const double t = -1.0 + 2.0 * i / 20000.0;
    const std::vector<double> x{t};
    worst = std::max(worst, std::abs(sys.f[0].evaluate(x) - r.P[0](x)));
  }
  EXPECT_LE(worst, r.xi_bound[0]);
}

TEST(Polynomialize, UnmarkedTermRejected) {
  const auto sys = make_system(Json::parse(R"j({"n":1,"m":1,"f":["x1 + cos(x1)"],"g":[["1"]]})j"));
  EXPECT_THROW(polynomialize(sys), std::invalid_argument);
}

TEST(SystemConfig, RejectsBadInput) {
  EXPECT_THROW(make_system(Json::parse(R"j({"n":1,"m":1,"f":["x1"],"g":[["1"]],"extra":1})j")), ConfigError);
  EXPECT_THROW(make_system(Json::parse(R"j({"n":2,"m":1,"f":["x1"],"g":[["1"],["0"]]})j")), ConfigError);
  EXPECT_THROW(make_system(Json::parse(R"j({"n":1,"m":1,"f":["x1 +"],"g":[["1"]]})j")), ConfigError);
  EXPECT_THROW(make_system(Json::parse(R"j({"n":1,"m":1,"f":["x1"],"g":[["sin(x1)"]]})j")), ConfigError);
  EXPECT_THROW(make_system(Json::parse(
                   R"j({"n":2,"m":2,"f":["x1","x2"],"markers":[{"component":1,"expr":"sin(x1*x2)","k":3,"interval":[-1,1]}]})j")),
               ConfigError);
  try {
    make_system(Json::parse(R"j({"n":1,"m":1,"f":["x1"],"g":[["1"]],"sigma_n":-1})j"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "system.sigma_n");
  }
}

TEST(SystemConfig, JsonRoundTrip) {
  const auto sys = make_system(Json::parse(R"j({"n":2,"m":2,"f":["-x1 + x2","x1^2*x2 + 1 - sqrt(abs(exp(x1)*cos(x1)))"],
      "g":[["1","0"],["0","1"]],"sigma_n":0.01,
      "markers":[{"component":2,"expr":"sqrt(abs(exp(x1)*cos(x1)))","k":4,"interval":[-2,2]}],
      "unsafe":["(x1+4)^2+(x2-5)^2-4"]})j"));
  const auto back = make_system(system_to_json(sys));
  ASSERT_EQ(back.f.size(), 2u);
  EXPECT_TRUE(back.f[1] == sys.f[1]);
  EXPECT_EQ(back.markers.size(), 1u);
  EXPECT_EQ(back.markers[0].component, 1);
  EXPECT_TRUE(approx_equal(back.unsafe[0], sys.unsafe[0], 0.0));
}

}  // namespace
}  // namespace saferoa
