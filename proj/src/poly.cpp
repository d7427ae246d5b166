#include "saferoa/poly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace saferoa {

Monomial::Monomial(std::vector<int> exponents) : exponents_(std::move(exponents)) {
  for (int e : exponents_) {
    if (e < 0) throw std::invalid_argument("Monomial: negative exponent");
    degree_ += e;
  }
}

Monomial Monomial::constant(int nvars) { return Monomial(std::vector<int>(static_cast<size_t>(nvars), 0)); }

Monomial Monomial::variable(int nvars, int index, int power) {
  if (index < 0 || index >= nvars) throw std::out_of_range("Monomial::variable: index out of range");
  std::vector<int> e(static_cast<size_t>(nvars), 0);
  e[static_cast<size_t>(index)] = power;
  return Monomial(std::move(e));
}

bool Monomial::is_even() const {
  return std::all_of(exponents_.begin(), exponents_.end(), [](int e) { return e % 2 == 0; });
}

Monomial Monomial::operator*(const Monomial& other) const {
  if (nvars() != other.nvars()) throw std::invalid_argument("Monomial product: dimension mismatch");
  std::vector<int> e(exponents_);
  for (size_t i = 0; i < e.size(); ++i) e[i] += other.exponents_[i];
  return Monomial(std::move(e));
}

double Monomial::evaluate(std::span<const double> x) const {
  double v = 1.0;
  for (size_t i = 0; i < exponents_.size(); ++i) {
    for (int k = 0; k < exponents_[i]; ++k) v *= x[i];
  }
  return v;
}

std::strong_ordering Monomial::operator<=>(const Monomial& other) const {
  if (auto c = degree_ <=> other.degree_; c != 0) return c;
  // Same degree: larger leading exponent sorts first.
  for (size_t i = 0; i < exponents_.size() && i < other.exponents_.size(); ++i) {
    if (exponents_[i] != other.exponents_[i]) return other.exponents_[i] <=> exponents_[i];
  }
  return exponents_.size() <=> other.exponents_.size();
}

std::string Monomial::to_string() const {
  if (degree_ == 0) return "1";
  std::string out;
  for (size_t i = 0; i < exponents_.size(); ++i) {
    if (exponents_[i] == 0) continue;
    if (!out.empty()) out += "*";
    out += fmt::format("x{}", i + 1);
    if (exponents_[i] > 1) out += fmt::format("^{}", exponents_[i]);
  }
  return out;
}

Polynomial::Polynomial(int nvars, double constant) : nvars_(nvars) {
  if (constant != 0.0) terms_.emplace(Monomial::constant(nvars), constant);
}

Polynomial::Polynomial(int nvars, TermMap terms) : nvars_(nvars) {
  for (auto& [m, c] : terms) add_term(m, c);
}

Polynomial Polynomial::variable(int nvars, int index) {
  Polynomial p(nvars);
  p.add_term(Monomial::variable(nvars, index), 1.0);
  return p;
}

Polynomial Polynomial::monomial(const Monomial& m, double coeff) {
  Polynomial p(m.nvars());
  p.add_term(m, coeff);
  return p;
}

int Polynomial::degree() const { return terms_.empty() ? 0 : terms_.rbegin()->first.degree(); }

int Polynomial::degree_in(int index) const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m[index]);
  return d;
}

bool Polynomial::is_constant() const { return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.is_constant()); }

double Polynomial::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::constant_term() const { return coefficient(Monomial::constant(nvars_)); }

void Polynomial::add_term(const Monomial& m, double coeff) {
  if (m.nvars() != nvars_) {
    throw std::invalid_argument(fmt::format("Polynomial: monomial has {} variables, expected {}", m.nvars(), nvars_));
  }
  if (coeff == 0.0) return;
  auto [it, inserted] = terms_.emplace(m, coeff);
  if (!inserted) {
    it->second += coeff;
    if (it->second == 0.0) terms_.erase(it);
  }
}

double Polynomial::evaluate(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != nvars_) {
    throw std::invalid_argument(fmt::format("Polynomial::evaluate: got {} values for {} variables", x.size(), nvars_));
  }
  double v = 0.0;
  for (const auto& [m, c] : terms_) v += c * m.evaluate(x);
  return v;
}

Polynomial Polynomial::differentiate(int var_index) const {
  if (var_index < 0 || var_index >= nvars_) throw std::out_of_range("Polynomial::differentiate: bad variable index");
  Polynomial out(nvars_);
  for (const auto& [m, c] : terms_) {
    const int e = m[var_index];
    if (e == 0) continue;
    std::vector<int> ex = m.exponents();
    ex[static_cast<size_t>(var_index)] -= 1;
    out.add_term(Monomial(std::move(ex)), c * e);
  }
  return out;
}

Polynomial Polynomial::compose(std::span<const Polynomial> subs) const {
  if (static_cast<int>(subs.size()) != nvars_) throw std::invalid_argument("Polynomial::compose: wrong substitute count");
  if (terms_.empty()) return Polynomial(subs.empty() ? 0 : subs[0].nvars());
  const int out_n = subs[0].nvars();
  for (const auto& s : subs) {
    if (s.nvars() != out_n) throw std::invalid_argument("Polynomial::compose: substitutes disagree on nvars");
  }
  // Cache powers of each substitute.
  std::vector<std::vector<Polynomial>> powers(subs.size());
  for (size_t i = 0; i < subs.size(); ++i) {
    const int dmax = degree_in(static_cast<int>(i));
    powers[i].reserve(static_cast<size_t>(dmax) + 1);
    powers[i].emplace_back(out_n, 1.0);
    for (int k = 1; k <= dmax; ++k) powers[i].push_back(powers[i].back() * subs[i]);
  }
  Polynomial out(out_n);
  for (const auto& [m, c] : terms_) {
    Polynomial term(out_n, c);
    for (size_t i = 0; i < subs.size(); ++i) {
      if (m[static_cast<int>(i)] > 0) term *= powers[i][static_cast<size_t>(m[static_cast<int>(i)])];
    }
    out += term;
  }
  return out;
}

Polynomial Polynomial::scale_variables(std::span<const double> scales) const {
  if (static_cast<int>(scales.size()) != nvars_) throw std::invalid_argument("scale_variables: wrong scale count");
  Polynomial out(nvars_);
  for (const auto& [m, c] : terms_) out.add_term(m, c * m.evaluate(scales));
  return out;
}

Polynomial Polynomial::pruned(double tol) const {
  Polynomial out(nvars_);
  for (const auto& [m, c] : terms_) {
    if (std::abs(c) > tol) out.terms_.emplace(m, c);
  }
  return out;
}

double Polynomial::max_abs_coefficient() const {
  double v = 0.0;
  for (const auto& [m, c] : terms_) v = std::max(v, std::abs(c));
  return v;
}

double Polynomial::even_coefficient_sum() const {
  double v = 0.0;
  for (const auto& [m, c] : terms_) {
    if (m.is_even()) v += c;
  }
  return v;
}

void Polynomial::check_same_nvars(const Polynomial& other) const {
  if (nvars_ != other.nvars_) {
    throw std::invalid_argument(fmt::format("Polynomial: dimension mismatch ({} vs {} variables)", nvars_, other.nvars_));
  }
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  check_same_nvars(other);
  for (const auto& [m, c] : other.terms_) add_term(m, c);
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& other) {
  check_same_nvars(other);
  for (const auto& [m, c] : other.terms_) add_term(m, -c);
  return *this;
}

Polynomial& Polynomial::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto it = terms_.begin(); it != terms_.end();) {
    it->second *= s;
    it = it->second == 0.0 ? terms_.erase(it) : std::next(it);
  }
  return *this;
}

Polynomial& Polynomial::operator*=(const Polynomial& other) {
  *this = *this * other;
  return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  a.check_same_nvars(b);
  Polynomial out(a.nvars_);
  for (const auto& [ma, ca] : a.terms_) {
    for (const auto& [mb, cb] : b.terms_) out.add_term(ma * mb, ca * cb);
  }
  return out;
}

Polynomial operator+(Polynomial a, double s) {
  a.add_term(Monomial::constant(a.nvars_), s);
  return a;
}

Polynomial operator-(double s, const Polynomial& a) { return Polynomial(a.nvars(), s) - a; }

Polynomial Polynomial::operator-() const {
  Polynomial out(*this);
  out *= -1.0;
  return out;
}

std::string Polynomial::to_string(std::span<const std::string> names) const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  os.precision(12);
  bool first = true;
  for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
    const auto& [m, c] = *it;
    const bool neg = c < 0;
    if (first) {
      if (neg) os << "-";
    } else {
      os << (neg ? " - " : " + ");
    }
    first = false;
    const double a = std::abs(c);
    std::string mono;
    if (!names.empty()) {
      for (int i = 0; i < m.nvars(); ++i) {
        if (m[i] == 0) continue;
        if (!mono.empty()) mono += "*";
        mono += names[static_cast<size_t>(i)];
        if (m[i] > 1) mono += "^" + std::to_string(m[i]);
      }
    } else if (!m.is_constant()) {
      mono = m.to_string();
    }
    if (mono.empty()) {
      os << a;
    } else if (a == 1.0) {
      os << mono;
    } else {
      os << a << "*" << mono;
    }
  }
  return os.str();
}

Polynomial pow(const Polynomial& p, int exponent) {
  if (exponent < 0) throw std::invalid_argument("pow: negative exponent");
  Polynomial result(p.nvars(), 1.0);
  Polynomial base = p;
  while (exponent > 0) {
    if (exponent & 1) result *= base;
    exponent >>= 1;
    if (exponent > 0) base = base * base;
  }
  return result;
}

double coefficient_distance(const Polynomial& a, const Polynomial& b) {
  return (a - b).max_abs_coefficient();
}

bool approx_equal(const Polynomial& a, const Polynomial& b, double tol) {
  const double scale = std::max({a.max_abs_coefficient(), b.max_abs_coefficient(), 1e-300});
  const double ref = scale < 1.0 ? 1.0 : scale;
  return coefficient_distance(a, b) <= tol * ref;
}

Polynomial lie_derivative(const Polynomial& v, std::span<const Polynomial> field) {
  if (static_cast<int>(field.size()) != v.nvars()) {
    throw std::invalid_argument(fmt::format("lie_derivative: field has {} components for {} variables", field.size(), v.nvars()));
  }
  Polynomial out(v.nvars());
  for (int i = 0; i < v.nvars(); ++i) {
    const Polynomial dv = v.differentiate(i);
    if (dv.is_zero()) continue;
    out += dv * field[static_cast<size_t>(i)];
  }
  return out;
}

namespace {
void enumerate_degree(int nvars, int degree, int index, std::vector<int>& cur, std::vector<Monomial>& out) {
  if (index == nvars - 1) {
    cur[static_cast<size_t>(index)] = degree;
    out.emplace_back(cur);
    return;
  }
  for (int e = degree; e >= 0; --e) {
    cur[static_cast<size_t>(index)] = e;
    enumerate_degree(nvars, degree - e, index + 1, cur, out);
  }
  cur[static_cast<size_t>(index)] = 0;
}
}  // namespace

std::vector<Monomial> monomial_basis(int nvars, int max_degree, int min_degree) {
  if (nvars < 1) throw std::invalid_argument("monomial_basis: nvars must be >= 1");
  if (max_degree < 0) throw std::invalid_argument("monomial_basis: max_degree must be >= 0");
  std::vector<Monomial> out;
  std::vector<int> cur(static_cast<size_t>(nvars), 0);
  for (int d = std::max(0, min_degree); d <= max_degree; ++d) enumerate_degree(nvars, d, 0, cur, out);
  return out;
}

Polynomial GramRepresentation::expand() const {
  const auto n = static_cast<Eigen::Index>(basis.size());
  if (matrix.rows() != n || matrix.cols() != n) {
    throw std::invalid_argument(fmt::format("gram_expand: {}x{} matrix for a basis of {}", matrix.rows(), matrix.cols(), n));
  }
  if (n == 0) return Polynomial(0);
  Polynomial out(basis.front().nvars());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.add_term(basis[static_cast<size_t>(i)] * basis[static_cast<size_t>(i)], matrix(i, i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out.add_term(basis[static_cast<size_t>(i)] * basis[static_cast<size_t>(j)], matrix(i, j) + matrix(j, i));
    }
  }
  return out;
}

Polynomial gram_expand(const GramRepresentation& g) { return g.expand(); }

GramRepresentation canonical_gram(const Polynomial& p, std::vector<Monomial> basis) {
  const auto n = static_cast<Eigen::Index>(basis.size());
  GramRepresentation g{std::move(basis), Eigen::MatrixXd::Zero(n, n)};
  std::map<Monomial, std::pair<Eigen::Index, Eigen::Index>> slot;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& bi = g.basis[static_cast<size_t>(i)];
    slot.insert_or_assign(bi * bi, std::pair{i, i});
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      slot.emplace(g.basis[static_cast<size_t>(i)] * g.basis[static_cast<size_t>(j)], std::pair{i, j});
    }
  }
  for (const auto& [m, c] : p.terms()) {
    auto it = slot.find(m);
    if (it == slot.end()) throw std::invalid_argument("canonical_gram: basis cannot represent monomial " + m.to_string());
    const auto [i, j] = it->second;
    if (i == j) {
      g.matrix(i, i) = c;
    } else {
      g.matrix(i, j) = g.matrix(j, i) = c / 2.0;
    }
  }
  return g;
}

}  // namespace saferoa
