#include "saferoa/learn.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

namespace saferoa {

double Box::volume() const {
  double v = 1.0;
  for (int i = 0; i < dim(); ++i) v *= hi[static_cast<size_t>(i)] - lo[static_cast<size_t>(i)];
  return v;
}

bool Box::contains(std::span<const double> x) const {
  for (int i = 0; i < dim(); ++i) {
    if (x[static_cast<size_t>(i)] < lo[static_cast<size_t>(i)] || x[static_cast<size_t>(i)] > hi[static_cast<size_t>(i)]) {
      return false;
    }
  }
  return true;
}

Box Box::cube(int dim, double half_width) {
  return {std::vector<double>(static_cast<size_t>(dim), -half_width), std::vector<double>(static_cast<size_t>(dim), half_width)};
}

double KernelConfig::operator()(std::span<const double> a, std::span<const double> b) const {
  double s = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    const double l = lengthscales.size() == 1 ? lengthscales[0] : lengthscales[j];
    const double d = (a[j] - b[j]) / l;
    s += d * d;
  }
  return sigma_f * sigma_f * std::exp(-0.5 * s);
}

void KernelConfig::validate(int dim) const {
  if (!(sigma_f > 0)) throw std::invalid_argument("kernel: sigma_f must be > 0");
  if (lengthscales.size() != 1 && static_cast<int>(lengthscales.size()) != dim) {
    throw std::invalid_argument(fmt::format("kernel: need 1 or {} length scales, got {}", dim, lengthscales.size()));
  }
  for (double l : lengthscales) {
    if (!(l > 0)) throw std::invalid_argument("kernel: length scales must be > 0");
  }
  if (sigma_n < 0) throw std::invalid_argument("kernel: sigma_n must be >= 0");
}

GPModel::GPModel(int dim, KernelConfig kernel) : dim_(dim), kernel_(std::move(kernel)) {
  kernel_.validate(dim);
  X_.resize(0, dim);
}

GPModel::GPModel(Eigen::MatrixXd X, Eigen::VectorXd y, KernelConfig kernel)
    : dim_(static_cast<int>(X.cols())), kernel_(std::move(kernel)), X_(std::move(X)), y_(std::move(y)) {
  kernel_.validate(dim_);
  const Eigen::Index n = X_.rows();
  if (n < 1 || y_.size() != n) throw std::invalid_argument("gp_fit: need matching rows(X) = len(y) >= 1");
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = k(j, i) = kernel_(row(i), row(j));
    }
  }
  k.diagonal().array() += kernel_.sigma_n * kernel_.sigma_n + kernel_.jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("gp_fit: kernel matrix is not positive definite; increase jitter or sigma_n");
  }
  cond_ = 1.0 / llt.rcond();
  if (!(cond_ <= 1e12)) {
    throw std::runtime_error(
        fmt::format("gp_fit: kernel matrix condition estimate {:.3e} exceeds 1e12; increase jitter or sigma_n", cond_));
  }
  L_ = llt.matrixL();
  alpha_ = llt.solve(y_);
  lml_ = -0.5 * y_.dot(alpha_) - L_.diagonal().array().log().sum() - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

Posterior GPModel::posterior(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("gp_posterior: dimension mismatch");
  const double prior = kernel_.sigma_f * kernel_.sigma_f;
  if (y_.size() == 0) return {0.0, std::sqrt(prior)};
  Eigen::VectorXd ks(y_.size());
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    ks(i) = kernel_(row(i), x);
  }
  const double mean = ks.dot(alpha_);
  const Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(ks);
  const double var = std::max(0.0, prior - v.squaredNorm());
  return {mean, std::sqrt(var)};
}

GPModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelConfig& kernel) { return {X, y, kernel}; }

KernelConfig grid_search_hyperparameters(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelConfig& base,
                                         const std::vector<double>& sigma_f_values, const std::vector<double>& l_values) {
  KernelConfig best = base;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double sf : sigma_f_values) {
    for (double l : l_values) {
      KernelConfig k = base;
      k.sigma_f = sf;
      k.lengthscales = {l};
      try {
        const GPModel m(X, y, k);
        if (m.log_marginal_likelihood() > best_lml) {
          best_lml = m.log_marginal_likelihood();
          best = k;
        }
      } catch (const std::exception&) {
      }
    }
  }
  return best;
}

std::vector<std::vector<double>> grid_points(const Box& region, int n) {
  if (n < 1) throw std::invalid_argument("grid_points: need n >= 1");
  const int dim = region.dim();
  const double total = std::pow(static_cast<double>(n), dim);
  if (total > 1e6) throw std::invalid_argument(fmt::format("grid of {}^{} points exceeds the 1e6 limit", n, dim));
  std::vector<std::vector<double>> pts;
  pts.reserve(static_cast<size_t>(total));
  std::vector<int> idx(static_cast<size_t>(dim), 0);
  while (true) {
    std::vector<double> p(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      const auto k = static_cast<size_t>(i);
      p[k] = n == 1 ? 0.5 * (region.lo[k] + region.hi[k]) : region.lo[k] + (region.hi[k] - region.lo[k]) * idx[k] / (n - 1);
    }
    pts.push_back(std::move(p));
    int d = 0;
    while (d < dim && ++idx[static_cast<size_t>(d)] == n) idx[static_cast<size_t>(d++)] = 0;
    if (d == dim) break;
  }
  return pts;
}

PolynomialFit least_squares_polynomial(const std::vector<std::vector<double>>& points, const Eigen::VectorXd& values,
                                       int degree) {
  if (points.empty()) throw std::invalid_argument("least_squares_polynomial: no points");
  if (degree < 0) throw std::invalid_argument("least_squares_polynomial: degree must be >= 0");
  const int dim = static_cast<int>(points.front().size());
  // Fit in coordinates mapped to [-1, 1] for conditioning.
  std::vector<double> lo(static_cast<size_t>(dim), std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<size_t>(dim), -std::numeric_limits<double>::infinity());
  for (const auto& p : points) {
    for (int i = 0; i < dim; ++i) {
      lo[static_cast<size_t>(i)] = std::min(lo[static_cast<size_t>(i)], p[static_cast<size_t>(i)]);
      hi[static_cast<size_t>(i)] = std::max(hi[static_cast<size_t>(i)], p[static_cast<size_t>(i)]);
    }
  }
  std::vector<double> mid(static_cast<size_t>(dim));
  std::vector<double> half(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    const auto k = static_cast<size_t>(i);
    mid[k] = 0.5 * (lo[k] + hi[k]);
    half[k] = hi[k] > lo[k] ? 0.5 * (hi[k] - lo[k]) : 1.0;
  }
  const auto basis = monomial_basis(dim, degree);
  const auto rows = static_cast<Eigen::Index>(points.size());
  const auto cols = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd a(rows, cols);
  std::vector<double> t(static_cast<size_t>(dim));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int i = 0; i < dim; ++i) {
      const auto k = static_cast<size_t>(i);
      t[k] = (points[static_cast<size_t>(r)][k] - mid[k]) / half[k];
    }
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = basis[static_cast<size_t>(c)].evaluate(t);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols) {
    throw std::runtime_error(
        fmt::format("polynomial fit is rank-deficient (rank {} < {} coefficients); lower the degree or refine the grid",
                    qr.rank(), cols));
  }
  const Eigen::VectorXd coef = qr.solve(values);
  Polynomial unit(dim);
  for (Eigen::Index c = 0; c < cols; ++c) unit.add_term(basis[static_cast<size_t>(c)], coef(c));
  std::vector<Polynomial> map;
  for (int i = 0; i < dim; ++i) {
    const auto k = static_cast<size_t>(i);
    map.push_back((Polynomial::variable(dim, i) - mid[k]) * (1.0 / half[k]));
  }
  PolynomialFit fit{unit.compose(map), 0.0};
  fit.rmse = std::sqrt((a * coef - values).squaredNorm() / static_cast<double>(rows));
  return fit;
}

PolynomialFit fit_polynomial_mean(const GPModel& model, int degree, const Box& region, int grid_n) {
  const auto pts = grid_points(region, grid_n);
  Eigen::VectorXd vals(static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) vals(static_cast<Eigen::Index>(i)) = model.posterior(pts[i]).mean;
  return least_squares_polynomial(pts, vals, degree);
}

ConfidenceEnvelope build_envelope(const GPModel& model, double k_delta, int degree, const Box& region, int grid_n,
                                  double delta) {
  if (k_delta < 0) throw std::invalid_argument("build_envelope: k_delta must be >= 0");
  const auto pts = grid_points(region, grid_n);
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::VectorXd mean(n);
  Eigen::VectorXd sd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Posterior p = model.posterior(pts[static_cast<size_t>(i)]);
    mean(i) = p.mean;
    sd(i) = p.std;
  }
  ConfidenceEnvelope env;
  env.k_delta = k_delta;
  env.delta = delta;
  env.n_measurements = model.size();
  env.region = region;
  env.grid_n = grid_n;
  const PolynomialFit mfit = least_squares_polynomial(pts, mean, degree);
  env.mean = mfit.poly;
  env.mean_rmse = mfit.rmse;
  const Eigen::VectorXd lower = mean - k_delta * sd;
  const Eigen::VectorXd upper = mean + k_delta * sd;
  const Polynomial lo_fit = least_squares_polynomial(pts, lower, degree).poly;
  const Polynomial hi_fit = least_squares_polynomial(pts, upper, degree).poly;
  double shift_lo = 0.0;
  double shift_hi = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pts[static_cast<size_t>(i)];
    const double m = env.mean(p);
    shift_lo = std::max({shift_lo, std::abs(lo_fit(p) - lower(i)), lo_fit(p) - m});
    shift_hi = std::max({shift_hi, std::abs(hi_fit(p) - upper(i)), m - hi_fit(p)});
  }
  env.shift_lo = shift_lo;
  env.shift_hi = shift_hi;
  env.lo = lo_fit - shift_lo;
  env.hi = hi_fit + shift_hi;
  return env;
}

ConfidenceEnvelope exact_envelope(const Polynomial& p) {
  ConfidenceEnvelope env;
  env.mean = p;
  env.lo = p;
  env.hi = p;
  return env;
}

double probability_bound(double delta, int m) {
  if (!(delta > 0 && delta < 1)) throw std::invalid_argument("probability_bound: delta must lie in (0, 1)");
  if (m < 1) throw std::invalid_argument("probability_bound: need at least one measurement");
  return std::pow(1.0 - delta, m);
}

}  // namespace saferoa
