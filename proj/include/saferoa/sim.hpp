#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saferoa/dynamics.hpp"
#include "saferoa/json_util.hpp"
#include "saferoa/learn.hpp"
#include "saferoa/synthesis.hpp"

namespace saferoa {

struct IntegratorConfig {
  double dt = 0.01;
  double T = 30.0;

  int steps() const;
};

struct Trajectory {
  std::vector<double> t;
  Eigen::MatrixXd x;  // (steps + 1) x n, or fewer rows when escaped
  bool escaped = false;

  Eigen::VectorXd final_state() const { return x.row(x.rows() - 1).transpose(); }
};

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Fixed-step RK4 on an arbitrary field; stops when |x| > 1e6 or the state
/// becomes non-finite.
Trajectory integrate_field(const VectorField& field, const Eigen::VectorXd& x0, const IntegratorConfig& cfg);

/// Closed loop dx/dt = f(x) + g(x) u(x) of the true system, without noise.
Trajectory integrate(const ControlAffineSystem& sys, const std::vector<Polynomial>& u, std::span<const double> x0,
                     const IntegratorConfig& cfg);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

using RegionPredicate = std::function<bool(std::span<const double>)>;

struct MeasureEstimate {
  double estimate = 0.0;
  /// Binomial standard error of the estimate.
  double se = 0.0;
  int hits = 0;
  int n = 0;
};

/// Monte-Carlo measure of {x in box : pred(x)} from n uniform samples.
MeasureEstimate estimate_measure(const RegionPredicate& pred, const Box& box, int n, std::uint64_t seed);

/// n rejection samples from {pred} within box. Throws std::runtime_error if
/// the acceptance rate falls below 1e-4.
std::vector<std::vector<double>> sample_region(const RegionPredicate& pred, const Box& box, int n, std::uint64_t seed);

/// {x : B(x) >= 0}.
RegionPredicate superlevel(const Polynomial& B);
/// {x : V(x) <= c}.
RegionPredicate sublevel(const Polynomial& V, double c);

struct Witness {
  std::vector<double> x0;
  std::string kind;  // "not_converged", "unsafe", "escaped"
  double value = 0.0;
};

struct MonteCarloReport {
  int n_samples = 0;
  double fraction_converged = 0.0;
  double fraction_safe = 0.0;
  double sampling_rate = 0.0;
  MeasureEstimate region;
  /// At most 10 stored.
  std::vector<Witness> witnesses;
  double max_final_norm = 0.0;
};

struct VerifyConfig {
  int n = 1000;
  IntegratorConfig integrator{0.01, 30.0};
  double converge_radius = 0.05;
  Box box;
  std::uint64_t seed = 1;
};

/// Samples initial states from {B >= 0} and simulates the true system under
/// the certificate's controller.
MonteCarloReport verify_roa(const Certificate& cert, const ControlAffineSystem& sys, const VerifyConfig& cfg);

struct RegionComparison {
  MeasureEstimate a;
  MeasureEstimate b;
  /// measure(b) / measure(a) and its delta-method standard error.
  double ratio = 0.0;
  double ratio_se = 0.0;
  /// Share of samples of region a that lie in region b.
  double containment = 0.0;
};

RegionComparison compare_regions(const RegionPredicate& a, const RegionPredicate& b, const Box& box, int n,
                                 std::uint64_t seed);
RegionComparison compare_regions(const Certificate& a, const Certificate& b, const Box& box, int n, std::uint64_t seed);

struct SoundnessReport {
  int samples = 0;
  /// Largest dV/dt over samples of {B >= 0} and all disturbance vertices.
  double max_vdot = 0.0;
  std::vector<double> argmax;
  /// Samples of {B >= 0} with some m_i <= 0.
  int unsafe_hits = 0;
};

/// Samples {B >= 0} and evaluates the decrease and exclusion conditions on
/// the learned polynomial dynamics.
SoundnessReport check_soundness(const Certificate& cert, const Box& box, int n, std::uint64_t seed);

Json report_to_json(const MonteCarloReport& r);
Json measure_to_json(const MeasureEstimate& m);

}  // namespace saferoa
