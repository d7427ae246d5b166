#include "saferoa/sim.hpp"

#include <cmath>
#include <algorithm>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

namespace saferoa {
namespace {

Polynomial X(int n, int i) { return Polynomial::variable(n, i); }

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double e : v) x(k++) = e;
  return x;
}

TEST(Integrate, ExponentialDecay) {
  const auto tr = integrate_field([](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); }, vec({1.0}), {0.01, 5.0});
  EXPECT_FALSE(tr.escaped);
  EXPECT_NEAR(tr.final_state()(0), std::exp(-5.0), 1e-6);
  EXPECT_DOUBLE_EQ(tr.t.back(), 5.0);
  EXPECT_EQ(tr.x.rows(), 501);
}

TEST(Integrate, HarmonicOscillatorReturnsAfterOnePeriod) {
  const auto field = [](const Eigen::VectorXd& x) { return vec({x(1), -x(0)}); };
  const auto tr = integrate_field(field, vec({1.0, 0.0}), {0.001, 2.0 * std::numbers::pi});
  EXPECT_NEAR(tr.final_state()(0), 1.0, 1e-4);
  EXPECT_NEAR(tr.final_state()(1), 0.0, 1e-4);
}

TEST(Integrate, FixedPointStaysPut) {
  const auto tr = integrate_field([](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array() * x.array()); },
                                  vec({0.0, 0.0}), {0.1, 3.0});
  EXPECT_EQ(tr.final_state().norm(), 0.0);
}

TEST(Integrate, FourthOrderConvergence) {
  const auto field = [](const Eigen::VectorXd& x) { return vec({x(1), -x(0)}); };
  auto error = [&](double dt) {
    const auto tr = integrate_field(field, vec({1.0, 0.0}), {dt, 2.0});
    return std::hypot(tr.final_state()(0) - std::cos(2.0), tr.final_state()(1) + std::sin(2.0));
  };
  EXPECT_NEAR(error(0.2) / error(0.1), 16.0, 1.0);
}

TEST(Integrate, ClipsLastStepAndDetectsEscape) {
  const auto tr = integrate_field([](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); }, vec({1.0}), {0.3, 1.0});
  EXPECT_DOUBLE_EQ(tr.t.back(), 1.0);
  EXPECT_NEAR(tr.final_state()(0), std::exp(-1.0), 1e-3);
  const auto blow = integrate_field([](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array() * x.array()); },
                                    vec({1.0}), {0.01, 5.0});
  EXPECT_TRUE(blow.escaped);
  EXPECT_LT(blow.t.back(), 1.01);
}

TEST(Measure, UnitDiskWithinThreeStandardErrors) {
  const Box box = Box::cube(2, 1.0);
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = estimate_measure([](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1] <= 1.0; }, box, 100000,
                                    seed);
    inside += std::abs(m.estimate - std::numbers::pi) <= 3.0 * m.se ? 1 : 0;
  }
  EXPECT_GE(inside, 19);
}

TEST(Measure, EmptyAndFullRegions) {
  const Box box = Box::cube(3, 2.0);
  const auto none = estimate_measure([](std::span<const double>) { return false; }, box, 1000, 1);
  EXPECT_EQ(none.estimate, 0.0);
  EXPECT_EQ(none.se, 0.0);
  const auto all = estimate_measure([](std::span<const double>) { return true; }, box, 1000, 1);
  EXPECT_DOUBLE_EQ(all.estimate, 64.0);
}

TEST(Measure, SampleRegionRejectsDegenerateSets) {
  const Box box = Box::cube(2, 1.0);
  EXPECT_THROW(sample_region([](std::span<const double>) { return false; }, box, 10, 1), std::runtime_error);
  const auto pts = sample_region(superlevel(1.0 - X(2, 0) * X(2, 0) - X(2, 1) * X(2, 1)), box, 100, 2);
  ASSERT_EQ(pts.size(), 100u);
  for (const auto& p : pts) EXPECT_LE(p[0] * p[0] + p[1] * p[1], 1.0);
}

TEST(Compare, IdenticalRegionsHaveUnitRatio) {
  const Box box = Box::cube(2, 2.0);
  const auto p = superlevel(1.0 - X(2, 0) * X(2, 0) - X(2, 1) * X(2, 1));
  const auto r = compare_regions(p, p, box, 20000, 4);
  EXPECT_DOUBLE_EQ(r.ratio, 1.0);
  EXPECT_DOUBLE_EQ(r.containment, 1.0);
  EXPECT_NEAR(r.ratio_se, 0.0, 1e-12);
}

TEST(Compare, NestedIntervalsHaveHalfRatio) {
  const Polynomial x = X(1, 0);
  const Box box = Box::cube(1, 3.0);
  const auto r = compare_regions(superlevel(4.0 - x * x), superlevel(1.0 - x * x), box, 200000, 5);
  EXPECT_NEAR(r.ratio, 0.5, 4.0 * r.ratio_se);
  EXPECT_GT(r.ratio_se, 0.0);
  // b lies inside a, so the contained share equals the ratio.
  EXPECT_DOUBLE_EQ(r.containment, r.ratio);
}

TEST(Compare, DeterministicForFixedSeed) {
  const Polynomial x = X(1, 0);
  const Box box = Box::cube(1, 3.0);
  const auto a = compare_regions(superlevel(4.0 - x * x), superlevel(1.0 - x * x), box, 5000, 9);
  const auto b = compare_regions(superlevel(4.0 - x * x), superlevel(1.0 - x * x), box, 5000, 9);
  EXPECT_EQ(a.ratio, b.ratio);
  EXPECT_EQ(a.a.hits, b.a.hits);
}

ControlAffineSystem stable_scalar() {
  ControlAffineSystem sys;
  sys.n = 1;
  sys.m = 1;
  sys.f = {Expression::parse("-x1", 1)};
  sys.g = {{Polynomial(1, 1.0)}};
  return sys;
}

Certificate scalar_certificate(double radius) {
  Certificate c;
  c.n = 1;
  c.m = 1;
  const Polynomial x = X(1, 0);
  c.V = x * x;
  c.B = radius * radius - x * x;
  c.u = {Polynomial(1)};
  return c;
}

TEST(VerifyRoa, StableScalarConvergesEverywhere) {
  VerifyConfig cfg;
  cfg.n = 200;
  cfg.box = Box::cube(1, 3.0);
  cfg.integrator = {0.01, 10.0};
  const auto r = verify_roa(scalar_certificate(2.0), stable_scalar(), cfg);
  EXPECT_EQ(r.fraction_converged, 1.0);
  EXPECT_EQ(r.fraction_safe, 1.0);
  EXPECT_TRUE(r.witnesses.empty());
}

TEST(VerifyRoa, CorruptedBarrierShowsViolations) {
  ControlAffineSystem sys;
  sys.n = 1;
  sys.m = 1;
  // True region of attraction of x' = -x + x^3 is (-1, 1).
  sys.f = {Expression::parse("-x1 + x1^3", 1)};
  sys.g = {{Polynomial(1)}};
  VerifyConfig cfg;
  cfg.n = 400;
  cfg.box = Box::cube(1, 4.0);
  cfg.integrator = {0.01, 10.0};
  EXPECT_EQ(verify_roa(scalar_certificate(0.9), sys, cfg).fraction_converged, 1.0);
  const auto bad = verify_roa(scalar_certificate(3.6), sys, cfg);
  EXPECT_LT(bad.fraction_converged, 0.5);
  ASSERT_FALSE(bad.witnesses.empty());
  EXPECT_EQ(bad.witnesses.front().kind, "escaped");
}

TEST(VerifyRoa, DetectsUnsafeVisits) {
  auto sys = stable_scalar();
  // Unsafe interval [0.4, 0.6] lies on the path from x0 in (0.6, 2] to 0.
  sys.unsafe = {(X(1, 0) - 0.5) * (X(1, 0) - 0.5) - 0.01};
  VerifyConfig cfg;
  cfg.n = 200;
  cfg.box = Box::cube(1, 3.0);
  cfg.integrator = {0.01, 10.0};
  const auto r = verify_roa(scalar_certificate(2.0), sys, cfg);
  EXPECT_LT(r.fraction_safe, 1.0);
  EXPECT_GT(r.fraction_safe, 0.5);
}

TEST(Soundness, FlagsIncreasingLyapunovFunction) {
  Certificate c = scalar_certificate(1.0);
  c.P = {X(1, 0)};
  c.g = {{Polynomial(1, 1.0)}};
  c.vertices = {{Polynomial(1)}};
  const auto r = check_soundness(c, Box::cube(1, 2.0), 1000, 1);
  EXPECT_GT(r.max_vdot, 0.0);
  c.P = {-1.0 * X(1, 0)};
  EXPECT_LE(check_soundness(c, Box::cube(1, 2.0), 1000, 1).max_vdot, 0.0);
}

TEST(Trajectory, CsvHasHeaderAndRows) {
  const auto tr = integrate_field([](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); }, vec({1.0, 2.0}), {0.5, 1.0});
  std::ostringstream os;
  write_trajectory_csv(os, tr);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "t,x1,x2");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
}

}  // namespace
}  // namespace saferoa
