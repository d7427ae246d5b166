#pragma once

#include <functional>
#include <vector>

#include "saferoa/poly.hpp"

namespace saferoa {

using ScalarFunction = std::function<double(double)>;

/// Chebyshev points of the second kind, cos(i*pi/k) for i = 0..k (k = 0 gives {1}).
std::vector<double> chebyshev_nodes(int k);

/// Degree-k Chebyshev interpolant on [a, b]:
///   P_k(x) = sum_i c_i T_i(xhat),  xhat = (x - (a+b)/2) / ((b-a)/2).
class ChebyshevInterpolant {
 public:
  ChebyshevInterpolant(double a, double b, std::vector<double> coeffs);

  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  double lower() const { return a_; }
  double upper() const { return b_; }
  const std::vector<double>& coefficients() const { return coeffs_; }

  double to_unit(double x) const { return (x - 0.5 * (b_ + a_)) / (0.5 * (b_ - a_)); }
  double from_unit(double t) const { return 0.5 * (b_ - a_) * t + 0.5 * (b_ + a_); }

  /// Clenshaw evaluation.
  double operator()(double x) const;

 private:
  double a_;
  double b_;
  std::vector<double> coeffs_;
};

/// Interpolates f at the k+1 Chebyshev points mapped to [a, b]. The
/// coefficients come from the discrete cosine relation on the node values.
/// Throws std::domain_error naming the node if f is non-finite there.
ChebyshevInterpolant fit_interpolant(const ScalarFunction& f, int k, double a, double b);

/// Expands the interpolant into a univariate polynomial in the original
/// (unmapped) variable.
Polynomial to_polynomial(const ChebyshevInterpolant& c);

/// 4 c_m rho^{-k} / (rho - 1); requires c_m >= 0, rho > 1, k >= 0.
double remainder_bound(double c_m, double rho, int k);

/// max |f(x) - P_k(x)| over n_samples evenly spaced points of [a, b].
double sup_error(const ScalarFunction& f, const ChebyshevInterpolant& c, int n_samples);

}  // namespace saferoa
