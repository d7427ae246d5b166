#include "saferoa/approx.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

namespace saferoa {

std::vector<double> chebyshev_nodes(int k) {
  if (k < 0) throw std::invalid_argument("chebyshev_nodes: k must be >= 0");
  if (k == 0) return {1.0};
  std::vector<double> nodes(static_cast<size_t>(k) + 1);
  for (int i = 0; i <= k; ++i) {
    // Symmetric evaluation keeps nodes exactly antisymmetric about 0.
    const int j = k - 2 * i;
    nodes[static_cast<size_t>(i)] = std::sin(std::numbers::pi * j / (2.0 * k));
  }
  return nodes;
}

ChebyshevInterpolant::ChebyshevInterpolant(double a, double b, std::vector<double> coeffs)
    : a_(a), b_(b), coeffs_(std::move(coeffs)) {
  if (!(a < b)) throw std::invalid_argument("ChebyshevInterpolant: need a < b");
  if (coeffs_.empty()) throw std::invalid_argument("ChebyshevInterpolant: no coefficients");
}

double ChebyshevInterpolant::operator()(double x) const {
  const double t = to_unit(x);
  double b1 = 0.0;
  double b2 = 0.0;
  for (size_t i = coeffs_.size() - 1; i >= 1; --i) {
    const double b0 = coeffs_[i] + 2.0 * t * b1 - b2;
    b2 = b1;
    b1 = b0;
  }
  return coeffs_[0] + t * b1 - b2;
}

ChebyshevInterpolant fit_interpolant(const ScalarFunction& f, int k, double a, double b) {
  if (!(a < b)) throw std::invalid_argument("fit_interpolant: need a < b");
  const auto nodes = chebyshev_nodes(k);
  std::vector<double> values(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    const double x = 0.5 * (b - a) * nodes[i] + 0.5 * (b + a);
    values[i] = f(x);
    if (!std::isfinite(values[i])) {
      throw std::domain_error(fmt::format("fit_interpolant: f is not finite at node {} (x = {})", i, x));
    }
  }
  if (k == 0) return ChebyshevInterpolant(a, b, {values[0]});

  std::vector<double> c(static_cast<size_t>(k) + 1, 0.0);
  for (int j = 0; j <= k; ++j) {
    double s = 0.0;
    for (int i = 0; i <= k; ++i) {
      const double w = (i == 0 || i == k) ? 0.5 : 1.0;
      s += w * values[static_cast<size_t>(i)] * std::cos(std::numbers::pi * j * i / k);
    }
    c[static_cast<size_t>(j)] = 2.0 * s / k;
  }
  c[0] *= 0.5;
  c[static_cast<size_t>(k)] *= 0.5;
  return ChebyshevInterpolant(a, b, std::move(c));
}

Polynomial to_polynomial(const ChebyshevInterpolant& c) {
  const Polynomial t = Polynomial::variable(1, 0);
  // T_i in the unit variable.
  Polynomial unit(1);
  Polynomial prev(1, 1.0);
  Polynomial cur = t;
  const auto& coeffs = c.coefficients();
  unit += coeffs[0] * prev;
  if (coeffs.size() > 1) unit += coeffs[1] * cur;
  for (size_t i = 2; i < coeffs.size(); ++i) {
    Polynomial next = 2.0 * t * cur - prev;
    unit += coeffs[i] * next;
    prev = std::move(cur);
    cur = std::move(next);
  }
  const double half = 0.5 * (c.upper() - c.lower());
  const double mid = 0.5 * (c.upper() + c.lower());
  const std::vector<Polynomial> map{(t - mid) * (1.0 / half)};
  return unit.compose(map);
}

double remainder_bound(double c_m, double rho, int k) {
  if (c_m < 0) throw std::invalid_argument("remainder_bound: c_m must be >= 0");
  if (!(rho > 1.0)) throw std::invalid_argument("remainder_bound: rho must exceed 1");
  if (k < 0) throw std::invalid_argument("remainder_bound: k must be >= 0");
  return 4.0 * c_m * std::pow(rho, -k) / (rho - 1.0);
}

double sup_error(const ScalarFunction& f, const ChebyshevInterpolant& c, int n_samples) {
  if (n_samples < 2) throw std::invalid_argument("sup_error: need at least 2 samples");
  double worst = 0.0;
  const double a = c.lower();
  const double h = (c.upper() - a) / (n_samples - 1);
  for (int i = 0; i < n_samples; ++i) {
    const double x = i == n_samples - 1 ? c.upper() : a + h * i;
    worst = std::max(worst, std::abs(f(x) - c(x)));
  }
  return worst;
}

}  // namespace saferoa
