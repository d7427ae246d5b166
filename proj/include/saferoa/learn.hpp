#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "saferoa/poly.hpp"

namespace saferoa {

/// Axis-aligned box [lo_i, hi_i].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const;
  bool contains(std::span<const double> x) const;
  static Box cube(int dim, double half_width);
};

/// Squared-exponential kernel sigma_f^2 exp(-sum_j (x_j - x'_j)^2 / (2 l_j^2)).
struct KernelConfig {
  double sigma_f = 1.0;
  /// One length scale per input, or a single value shared by all inputs.
  std::vector<double> lengthscales{1.0};
  double sigma_n = 0.0;
  /// Diagonal floor added to sigma_n^2.
  double jitter = 1e-10;

  double operator()(std::span<const double> a, std::span<const double> b) const;
  void validate(int dim) const;
};

struct Posterior {
  double mean = 0.0;
  double std = 0.0;
};

/// Gaussian-process regression with zero prior mean.
class GPModel {
 public:
  /// Prior-only model: mean 0 and variance sigma_f^2 everywhere.
  GPModel(int dim, KernelConfig kernel);
  /// Conditions on rows of X and targets y. Throws std::runtime_error when
  /// the regularized kernel matrix is not numerically positive definite or
  /// its condition estimate exceeds 1e12.
  GPModel(Eigen::MatrixXd X, Eigen::VectorXd y, KernelConfig kernel);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(y_.size()); }
  const KernelConfig& kernel() const { return kernel_; }

  Posterior posterior(std::span<const double> x) const;
  double log_marginal_likelihood() const { return lml_; }
  double condition_estimate() const { return cond_; }

 private:
  std::span<const double> row(Eigen::Index i) const { return {X_.data() + i * dim_, static_cast<size_t>(dim_)}; }

  int dim_;
  KernelConfig kernel_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> X_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd L_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
  double cond_ = 1.0;
};

GPModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelConfig& kernel);

/// Coarse search over (sigma_f, l) maximizing the log marginal likelihood,
/// keeping sigma_n from `base`. Candidates that fail to factor are skipped.
KernelConfig grid_search_hyperparameters(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelConfig& base,
                                         const std::vector<double>& sigma_f_values, const std::vector<double>& l_values);

struct PolynomialFit {
  Polynomial poly;
  /// Root-mean-square residual over the fit grid.
  double rmse = 0.0;
};

/// Uniform grid with n points per axis (n = 1 gives the box centre).
std::vector<std::vector<double>> grid_points(const Box& region, int n);

/// Least-squares polynomial of total degree <= degree through values at
/// points. Throws std::runtime_error when the design matrix is rank-deficient.
PolynomialFit least_squares_polynomial(const std::vector<std::vector<double>>& points, const Eigen::VectorXd& values,
                                       int degree);

/// Least-squares fit of the posterior mean over a grid_n^dim grid
/// (at most 1e6 points).
PolynomialFit fit_polynomial_mean(const GPModel& model, int degree, const Box& region, int grid_n);

/// Polynomial band [lo, hi] around the GP posterior band mean -/+ k_delta*std.
struct ConfidenceEnvelope {
  Polynomial mean;
  Polynomial lo;
  Polynomial hi;
  double k_delta = 0.0;
  double delta = 0.05;
  int n_measurements = 0;
  Box region;
  int grid_n = 0;
  double mean_rmse = 0.0;
  /// Outward shifts applied to the fitted band polynomials.
  double shift_lo = 0.0;
  double shift_hi = 0.0;
};

/// Fits lo/hi to mean -/+ k_delta*std on the grid and shifts them outward so
/// that lo <= min(GP lower, mean poly) and hi >= max(GP upper, mean poly) at
/// every grid point. Containment is only guaranteed on the grid.
ConfidenceEnvelope build_envelope(const GPModel& model, double k_delta, int degree, const Box& region, int grid_n,
                                  double delta = 0.05);

/// Polynomial envelope of a known polynomial (zero width).
ConfidenceEnvelope exact_envelope(const Polynomial& p);

/// (1 - delta)^m for 0 < delta < 1 and m >= 1.
double probability_bound(double delta, int m);

}  // namespace saferoa
