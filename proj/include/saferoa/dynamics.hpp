#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saferoa/expression.hpp"
#include "saferoa/json_util.hpp"
#include "saferoa/learn.hpp"
#include "saferoa/poly.hpp"

namespace saferoa {

/// A non-polynomial sub-expression of one dynamics component, replaced by a
/// Chebyshev interpolant in its single state variable.
struct ChebyshevMarker {
  int component = 0;  // 0-based
  Expression expr;
  std::string source;
  int k = 4;
  double a = -1.0;
  double b = 1.0;
  /// Bound on |f| over the Bernstein ellipse with parameter rho, when known.
  std::optional<double> c_m;
  std::optional<double> rho;
};

/// dx/dt = f(x) + g(x) u with expression-valued f and polynomial g.
struct ControlAffineSystem {
  int n = 0;
  int m = 0;
  std::vector<Expression> f;
  std::vector<std::string> f_source;
  std::vector<std::vector<Polynomial>> g;  // n x m
  std::vector<std::vector<std::string>> g_source;
  double sigma_n = 0.0;
  std::vector<ChebyshevMarker> markers;
  /// Unsafe sets {x : m_i(x) <= 0}.
  std::vector<Polynomial> unsafe;
  std::vector<std::string> unsafe_source;

  Eigen::VectorXd drift(std::span<const double> x) const;
  /// f(x) + g(x) u.
  Eigen::VectorXd rhs(std::span<const double> x, std::span<const double> u) const;
  Eigen::MatrixXd input_matrix(std::span<const double> x) const;
};

/// Parses {"n", "m", "f", "g", "sigma_n", "markers", "unsafe"}; unknown keys
/// are rejected. Marker components are 1-based in the file.
ControlAffineSystem system_from_json(const Json& j, const std::string& path = "system");
Json system_to_json(const ControlAffineSystem& sys);

struct PolynomializeResult {
  std::vector<Polynomial> P;
  /// Per component: sum of remainder bounds of its markers (analytic when
  /// every marker carries c_m and rho, else the empirical sup error).
  std::vector<double> xi_bound;
  std::vector<double> xi_empirical;
  std::vector<bool> bound_is_analytic;
};

/// Replaces each marker by its interpolant and expands f into polynomials.
/// Throws std::invalid_argument naming any unmarked non-polynomial node.
PolynomializeResult polynomialize(const ControlAffineSystem& sys);

struct TrajectoryDataset {
  std::vector<double> t;
  Eigen::MatrixXd x;     // samples x n
  Eigen::MatrixXd u;     // samples x m
  Eigen::MatrixXd xdot;  // finite-difference derivative plus noise
  Eigen::MatrixXd d;     // xdot - f(x) - g(x) u
  bool truncated = false;

  int size() const { return static_cast<int>(t.size()); }
};

/// RK4 simulation of the true system under u = controller(x), sampled every
/// dt for T / dt samples. Derivatives come from central differences (second
/// order one-sided at the ends) plus iid N(0, sigma_n^2) noise.
TrajectoryDataset generate_measurements(const ControlAffineSystem& sys, const std::vector<double>& x0, double T, double dt,
                                        const std::vector<Polynomial>& controller, std::uint64_t seed);

/// CSV with header t,x1..xn,u1..um.
void write_trajectory_csv(std::ostream& os, const TrajectoryDataset& data);
/// Reads the trajectory CSV; derivatives are rebuilt by finite differences.
TrajectoryDataset read_trajectory_csv(std::istream& is, const ControlAffineSystem& sys);
/// CSV with header x1..xn,d1..dn.
void write_measurements_csv(std::ostream& os, const TrajectoryDataset& data);

/// Finite-difference derivative of equally spaced samples.
Eigen::MatrixXd finite_difference(const Eigen::MatrixXd& x, double dt);

/// The polynomial surrogate used for synthesis:
///   dx/dt = P(x) + g(x) u + d,  d_i in [lo_i(x), hi_i(x)].
struct LearnedSystem {
  std::vector<Polynomial> P;
  std::vector<std::vector<Polynomial>> g;
  /// Per component; components without a learned term have zero envelopes.
  std::vector<ConfidenceEnvelope> envelope;
  std::vector<bool> learned;

  int n() const { return static_cast<int>(P.size()); }
  int m() const { return g.empty() ? 0 : static_cast<int>(g.front().size()); }
  /// P + mean disturbance.
  std::vector<Polynomial> nominal_drift() const;
};

}  // namespace saferoa
