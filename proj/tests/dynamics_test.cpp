#include "saferoa/dynamics.hpp"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

namespace saferoa {
namespace {

ControlAffineSystem decay(double sigma_n) {
  Json j = Json::parse(R"j({"n":1,"m":1,"f":["-x1"],"g":[["1"]]})j");
  j["sigma_n"] = sigma_n;
  return system_from_json(j);
}

ControlAffineSystem example1() {
  return system_from_json(Json::parse(R"j({"n":2,"m":2,
      "f":["-x1 + x2","x1^2*x2 + 1 - sqrt(abs(exp(x1)*cos(x1)))"],
      "g":[["1","0"],["0","1"]],"sigma_n":0.01,
      "markers":[{"component":2,"expr":"sqrt(abs(exp(x1)*cos(x1)))","k":4,"interval":[-2,2]}]})j"));
}

TEST(Measurements, ExactModelLeavesDiscretizationResidual) {
  const auto sys = decay(0.0);
  const double dt = 0.1;
  const auto data = generate_measurements(sys, {1.0}, 5.0, dt, {Polynomial(1)}, 1);
  ASSERT_EQ(data.size(), 50);
  // x''' = -x, so the one-sided stencil error is at most dt^2/3 * max|x|.
  const double bound = dt * dt / 3.0;
  EXPECT_LE(data.d.cwiseAbs().maxCoeff(), bound);
  for (int k = 0; k < data.size(); ++k) EXPECT_NEAR(data.x(k, 0), std::exp(-data.t[static_cast<size_t>(k)]), 1e-6);
}

TEST(Measurements, SeedDeterminism) {
  const auto sys = example1();
  const std::vector<Polynomial> u0{Polynomial(2), Polynomial(2)};
  const auto a = generate_measurements(sys, {-0.5, 0.2}, 3.0, 0.1, u0, 42);
  const auto b = generate_measurements(sys, {-0.5, 0.2}, 3.0, 0.1, u0, 42);
  const auto c = generate_measurements(sys, {-0.5, 0.2}, 3.0, 0.1, u0, 43);
  EXPECT_EQ(a.xdot, b.xdot);
  EXPECT_EQ(a.d, b.d);
  EXPECT_NE(a.xdot, c.xdot);
}

TEST(Measurements, Example1SampleCount) {
  const auto sys = example1();
  const Polynomial x1 = Polynomial::variable(2, 0);
  const Polynomial x2 = Polynomial::variable(2, 1);
  const std::vector<Polynomial> u{-x1, -x2};
  const auto data = generate_measurements(sys, {-0.5, 0.2}, 30.0, 0.1, u, 7);
  EXPECT_EQ(data.size(), 300);
  EXPECT_FALSE(data.truncated);
  EXPECT_EQ(data.u.rows(), 300);
  EXPECT_DOUBLE_EQ(data.u(0, 0), 0.5);
}

TEST(Measurements, EscapeTruncates) {
  const auto sys = system_from_json(Json::parse(R"j({"n":1,"m":1,"f":["x1^2"],"g":[["1"]]})j"));
  const auto data = generate_measurements(sys, {2.0}, 5.0, 0.01, {Polynomial(1)}, 1);
  EXPECT_TRUE(data.truncated);
  EXPECT_LT(data.size(), 500);
}

TEST(Measurements, RejectsBadSampling) {
  const auto sys = decay(0.0);
  EXPECT_THROW(generate_measurements(sys, {1.0}, 1.0, 0.0, {}, 1), std::invalid_argument);
  EXPECT_THROW(generate_measurements(sys, {1.0}, 0.05, 0.1, {}, 1), std::invalid_argument);
}

TEST(Measurements, NoiseHasConfiguredScale) {
  const auto sys = decay(0.2);
  const auto data = generate_measurements(sys, {1.0}, 400.0, 0.1, {Polynomial(1)}, 5);
  const double var = data.d.squaredNorm() / static_cast<double>(data.size());
  EXPECT_NEAR(std::sqrt(var), 0.2, 0.01);
}

TEST(FiniteDifference, ExactOnQuadratics) {
  Eigen::MatrixXd x(6, 1);
  for (int k = 0; k < 6; ++k) x(k, 0) = 0.5 * (0.2 * k) * (0.2 * k) - 0.2 * k;
  const auto d = finite_difference(x, 0.2);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(d(k, 0), 0.2 * k - 1.0, 1e-12);
}

TEST(TrajectoryCsv, RoundTrip) {
  const auto sys = example1();
  const Polynomial x1 = Polynomial::variable(2, 0);
  const std::vector<Polynomial> u{-x1, Polynomial(2)};
  auto data = generate_measurements(sys, {-0.5, 0.2}, 2.0, 0.1, u, 3);
  std::stringstream ss;
  write_trajectory_csv(ss, data);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,x1,x2,u1,u2");
  const auto back = read_trajectory_csv(ss, sys);
  ASSERT_EQ(back.size(), data.size());
  EXPECT_EQ(back.x, data.x);
  EXPECT_EQ(back.u, data.u);
  // Noise-free reconstruction differs from the noisy derivative by the noise only.
  EXPECT_LE((back.xdot - data.xdot).cwiseAbs().maxCoeff(), 6 * sys.sigma_n);

  std::stringstream meas;
  write_measurements_csv(meas, data);
  std::string header;
  std::getline(meas, header);
  EXPECT_EQ(header, "x1,x2,d1,d2");

  std::stringstream bad("t,x1,u1\n0,1,2\n");
  EXPECT_THROW(read_trajectory_csv(bad, sys), std::runtime_error);
}

TEST(LearnedSystem, NominalDriftAddsLearnedMean) {
  LearnedSystem ls;
  const Polynomial x = Polynomial::variable(1, 0);
  ls.P = {-1.0 * x};
  ls.g = {{Polynomial(1, 1.0)}};
  ls.envelope = {exact_envelope(x * x)};
  ls.learned = {true};
  EXPECT_TRUE(approx_equal(ls.nominal_drift()[0], x * x - x, 0.0));
  ls.learned = {false};
  EXPECT_TRUE(approx_equal(ls.nominal_drift()[0], -1.0 * x, 0.0));
}

}  // namespace
}  // namespace saferoa
