#pragma once

#include <compare>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace saferoa {

/// A monomial x^e = x_1^{e_1} ... x_n^{e_n}. Ordered graded-lexicographically:
/// lower total degree first, and within a degree x1 before x2 (so the degree-2
/// block reads x1^2, x1*x2, x2^2).
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(std::vector<int> exponents);

  static Monomial constant(int nvars);
  static Monomial variable(int nvars, int index, int power = 1);

  int nvars() const { return static_cast<int>(exponents_.size()); }
  int degree() const { return degree_; }
  int operator[](int i) const { return exponents_[static_cast<size_t>(i)]; }
  const std::vector<int>& exponents() const { return exponents_; }

  bool is_constant() const { return degree_ == 0; }
  /// True when every exponent is even, i.e. the monomial is a square.
  bool is_even() const;

  Monomial operator*(const Monomial& other) const;
  double evaluate(std::span<const double> x) const;

  bool operator==(const Monomial& other) const = default;
  std::strong_ordering operator<=>(const Monomial& other) const;

  std::string to_string() const;

 private:
  std::vector<int> exponents_;
  int degree_ = 0;
};

/// Sparse multivariate polynomial with double coefficients. Zero coefficients
/// are never stored; every monomial has exactly nvars() exponents.
class Polynomial {
 public:
  using TermMap = std::map<Monomial, double>;

  explicit Polynomial(int nvars = 0) : nvars_(nvars) {}
  Polynomial(int nvars, double constant);
  Polynomial(int nvars, TermMap terms);

  static Polynomial variable(int nvars, int index);
  static Polynomial monomial(const Monomial& m, double coeff = 1.0);

  int nvars() const { return nvars_; }
  /// Total degree; the zero polynomial reports 0.
  int degree() const;
  /// Highest exponent of variable `index` across terms.
  int degree_in(int index) const;
  bool is_zero() const { return terms_.empty(); }
  bool is_constant() const;
  size_t size() const { return terms_.size(); }

  const TermMap& terms() const { return terms_; }
  double coefficient(const Monomial& m) const;
  double constant_term() const;
  void add_term(const Monomial& m, double coeff);

  double evaluate(std::span<const double> x) const;
  double operator()(std::span<const double> x) const { return evaluate(x); }
  double operator()(std::initializer_list<double> x) const {
    return evaluate(std::span<const double>(x.begin(), x.size()));
  }

  Polynomial differentiate(int var_index) const;
  /// Substitutes polynomial `subs[i]` for variable i. All substitutes share
  /// the result's variable count.
  Polynomial compose(std::span<const Polynomial> subs) const;
  /// p(s_1 x_1, ..., s_n x_n).
  Polynomial scale_variables(std::span<const double> scales) const;
  /// Copy with coefficients of magnitude <= tol removed.
  Polynomial pruned(double tol) const;

  double max_abs_coefficient() const;
  /// Sum of coefficients on even (perfect-square) monomials, which equals
  /// the trace of the diagonal-first Gram matrix of this polynomial.
  double even_coefficient_sum() const;

  Polynomial& operator+=(const Polynomial& other);
  Polynomial& operator-=(const Polynomial& other);
  Polynomial& operator*=(double s);
  Polynomial& operator*=(const Polynomial& other);

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
  friend Polynomial operator+(Polynomial a, double s);
  friend Polynomial operator+(double s, Polynomial a) { return std::move(a) + s; }
  friend Polynomial operator-(Polynomial a, double s) { return std::move(a) + (-s); }
  friend Polynomial operator-(double s, const Polynomial& a);
  Polynomial operator-() const;

  bool operator==(const Polynomial& other) const = default;

  std::string to_string(std::span<const std::string> names = {}) const;

 private:
  void check_same_nvars(const Polynomial& other) const;

  int nvars_ = 0;
  TermMap terms_;
};

Polynomial pow(const Polynomial& p, int exponent);

/// Coefficient-wise comparison; differences are normalized by the largest
/// absolute coefficient of either operand (or 1 if both are tiny).
bool approx_equal(const Polynomial& a, const Polynomial& b, double tol = 1e-9);
/// Largest absolute coefficient difference (unnormalized).
double coefficient_distance(const Polynomial& a, const Polynomial& b);

/// sum_i dV/dx_i * field_i.
Polynomial lie_derivative(const Polynomial& v, std::span<const Polynomial> field);

/// All monomials with min_degree <= degree <= max_degree in graded-lex order.
std::vector<Monomial> monomial_basis(int nvars, int max_degree, int min_degree = 0);

/// Square matrix representation p(x) = z(x)^T Q z(x).
struct GramRepresentation {
  std::vector<Monomial> basis;
  Eigen::MatrixXd matrix;

  Polynomial expand() const;
  double trace() const { return matrix.trace(); }
};

Polynomial gram_expand(const GramRepresentation& g);

/// The diagonal-first Gram matrix of p over `basis`: a coefficient of a
/// perfect-square monomial z_a^2 goes to Q(a,a); any other coefficient is
/// placed on the first off-diagonal pair that produces it. Throws if p has a
/// term the basis cannot produce.
GramRepresentation canonical_gram(const Polynomial& p, std::vector<Monomial> basis);

}  // namespace saferoa
