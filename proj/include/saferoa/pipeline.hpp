#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saferoa/dynamics.hpp"
#include "saferoa/json_util.hpp"
#include "saferoa/learn.hpp"
#include "saferoa/sim.hpp"
#include "saferoa/synthesis.hpp"

namespace saferoa {

struct LearnConfig {
  /// 0-based state components with an unknown disturbance (1-based in files).
  std::vector<int> components;
  KernelConfig kernel;
  /// Coarse log-marginal-likelihood search over these values when non-empty.
  std::vector<double> search_sigma_f;
  std::vector<double> search_lengthscale;
  double k_delta = 2.0;
  double delta = 0.05;
  /// Degree of the mean, lo and hi polynomials.
  int envelope_degree = 4;
  Box region;
  int grid_n = 21;
  std::vector<std::vector<double>> train_starts;
  std::vector<std::vector<double>> validation_starts;
  double T = 30.0;
  double dt = 0.1;
  /// The lumped term is known at the origin (equilibrium of the true
  /// system); the envelope is pinned there.
  bool pin_origin = true;
};

struct SimConfig {
  VerifyConfig verify;
  /// Region samples for the unsafe-exclusion check.
  int exclusion_samples = 100000;
  /// Region samples for the decrease-condition check.
  int soundness_samples = 10000;
  /// Region samples for the area comparisons.
  int measure_samples = 200000;
};

struct PlotConfig {
  Box box;
  int grid = 200;
  /// Values of the last coordinates for slices of 3-D systems.
  std::vector<double> slices;
};

struct RunConfig {
  std::string name = "run";
  ControlAffineSystem system;
  LearnConfig learn;
  SynthesisConfig synthesis;
  SimConfig sim;
  PlotConfig plot;
  std::string out = "out";
  std::uint64_t seed = 1;
  Json source;
};

/// Validates the whole document before anything runs; unknown keys are
/// rejected with their path.
RunConfig run_config_from_json(const Json& j);
Json run_config_to_json(const RunConfig& cfg);
/// Overrides the seed everywhere it is used.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

struct ComponentFit {
  int component = 0;
  KernelConfig kernel;
  int n_train = 0;
  double log_marginal_likelihood = 0.0;
  /// Validation RMSE of the GP posterior mean and of its polynomial fit.
  double gp_rmse = 0.0;
  double mean_rmse = 0.0;
  double max_width = 0.0;
  /// Largest excursion of the simulator's exact f_i - P_i outside [lo, hi]
  /// on the fit grid (0 when contained).
  double true_residual_excess = 0.0;
  ConfidenceEnvelope envelope;
};

struct LearningResult {
  PolynomializeResult poly;
  LearnedSystem learned;
  std::vector<TrajectoryDataset> train;
  std::vector<TrajectoryDataset> validation;
  std::vector<ComponentFit> fits;
  double probability = 0.0;
};

/// Learning targets y_i = xdot_i - P_i(x) - (g(x) u)_i for one component.
Eigen::VectorXd learning_targets(const TrajectoryDataset& data, const std::vector<Polynomial>& P,
                                 const std::vector<std::vector<Polynomial>>& g, int component);

/// Envelope with lo(0) = hi(0) = value; the outward shift grows as |x|^2.
ConfidenceEnvelope pinned_envelope(const GPModel& model, double k_delta, int degree, const Box& region, int grid_n,
                                   double delta, double value);

/// Polynomializes the system, simulates the training and validation starts
/// under u = 0, fits one GP per learned component and builds envelopes.
LearningResult learn_system(const ControlAffineSystem& sys, const LearnConfig& cfg, std::uint64_t seed);

Json learning_to_json(const LearningResult& r);

struct RunResult {
  LearningResult learning;
  Certificate certificate;
  Json report;
  bool verified = false;
  double fraction_safe = 0.0;
  /// Empty on success.
  std::string failed_stage;
};

/// learn -> polynomialize -> synthesize -> verify.
RunResult execute_run(const RunConfig& cfg);

/// Planned program sizes as printed by --dry-run.
std::vector<PlannedProgram> plan_run(const RunConfig& cfg);

/// Writes certificate.json and report.json into dir.
void write_run_outputs(const RunResult& r, const std::string& dir);

struct PlotExport {
  std::vector<std::string> files;
  Json summary;
};

/// Level-set grids of V and B, an unsafe-region grid, and a measure summary.
/// Rejects grids with more than 1e6 points.
PlotExport export_plot(const Certificate& cert, const PlotConfig& plot, const std::string& dir, std::uint64_t seed);

/// Built-in configurations for the two demonstration systems.
Json demo_config(const std::string& name);

}  // namespace saferoa
