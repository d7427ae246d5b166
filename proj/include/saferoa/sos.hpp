#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saferoa/poly.hpp"
#include "saferoa/sdp.hpp"

namespace saferoa {

/// Thrown when two expressions that both contain decision variables are
/// multiplied. The message names the decision objects on each side.
class BilinearError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// constant + sum_k coef[k] * v_k over scalar decision variables v_k.
struct LinearExpr {
  double constant = 0.0;
  std::map<int, double> coef;

  LinearExpr() = default;
  LinearExpr(double c) : constant(c) {}  // NOLINT(google-explicit-constructor)

  bool has_variables() const { return !coef.empty(); }
  double evaluate(const Eigen::VectorXd& values) const;

  LinearExpr& operator+=(const LinearExpr& o);
  LinearExpr& operator-=(const LinearExpr& o);
  LinearExpr& operator*=(double s);
  friend LinearExpr operator+(LinearExpr a, const LinearExpr& b) { return a += b; }
  friend LinearExpr operator-(LinearExpr a, const LinearExpr& b) { return a -= b; }
  friend LinearExpr operator*(LinearExpr a, double s) { return a *= s; }
  friend LinearExpr operator*(double s, LinearExpr a) { return a *= s; }
  LinearExpr operator-() const { return *this * -1.0; }
};

/// A polynomial whose coefficients are affine in decision variables.
class PolyExpr {
 public:
  using TermMap = std::map<Monomial, LinearExpr>;

  explicit PolyExpr(int nvars = 0) : nvars_(nvars) {}
  PolyExpr(const Polynomial& p);  // NOLINT(google-explicit-constructor)
  PolyExpr(int nvars, TermMap terms, std::set<std::string> owners);

  int nvars() const { return nvars_; }
  int degree() const;
  const TermMap& terms() const { return terms_; }
  /// Names of the decision objects this expression depends on.
  const std::set<std::string>& owners() const { return owners_; }
  bool has_variables() const;

  LinearExpr coefficient(const Monomial& m) const;
  /// Sum of coefficients on perfect-square monomials (diagonal-first Gram trace).
  LinearExpr even_coefficient_sum() const;
  Polynomial constant_part() const;
  /// Substitutes decision values.
  Polynomial evaluate(const Eigen::VectorXd& values) const;

  PolyExpr differentiate(int var_index) const;

  PolyExpr& operator+=(const PolyExpr& o);
  PolyExpr& operator-=(const PolyExpr& o);
  PolyExpr& operator*=(double s);
  friend PolyExpr operator+(PolyExpr a, const PolyExpr& b) { return a += b; }
  friend PolyExpr operator-(PolyExpr a, const PolyExpr& b) { return a -= b; }
  friend PolyExpr operator*(PolyExpr a, double s) { return a *= s; }
  friend PolyExpr operator*(double s, PolyExpr a) { return a *= s; }
  /// Throws BilinearError when both factors contain decision variables.
  friend PolyExpr operator*(const PolyExpr& a, const PolyExpr& b);
  PolyExpr operator-() const { return *this * -1.0; }

 private:
  void add_scaled(const PolyExpr& o, double s);

  int nvars_ = 0;
  TermMap terms_;
  std::set<std::string> owners_;
};

/// sum_i dh/dx_i * field_i, with the bilinear guard applied per product.
PolyExpr lie_derivative(const PolyExpr& h, const std::vector<PolyExpr>& field);

enum class PolyKind { Free, Sos };

struct DecisionPoly {
  std::string name;
  PolyKind kind = PolyKind::Free;
  /// Coefficient monomials for free polys; Gram basis for SOS polys.
  std::vector<Monomial> basis;
  int block = -1;
  PolyExpr expr;

  operator const PolyExpr&() const { return expr; }  // NOLINT(google-explicit-constructor)
};

struct ConstraintCheck {
  std::string name;
  double min_eigenvalue = 0.0;
  double residual = 0.0;
  bool passed = false;
};

struct VerificationReport {
  std::vector<ConstraintCheck> checks;
  bool passed() const;
  std::string summary() const;
};

struct SolveResult {
  SolveStatus status = SolveStatus::Failed;
  Eigen::VectorXd values;
  double objective = 0.0;
  SdpSolution raw;
  std::string message;

  bool ok() const { return status == SolveStatus::Optimal || status == SolveStatus::Inaccurate; }
  Polynomial value(const PolyExpr& e) const { return e.evaluate(values); }
  double value(const LinearExpr& e) const { return e.evaluate(values); }
};

struct ProgramSize {
  int rows = 0;
  int free_vars = 0;
  int nonneg_vars = 0;
  std::vector<int> blocks;
};

/// Sum-of-squares program over polynomials in `nvars` state variables.
class SosProgram {
 public:
  explicit SosProgram(int nvars);

  int nvars() const { return nvars_; }

  PolyExpr new_free_scalar(const std::string& name);
  PolyExpr new_nonneg_scalar(const std::string& name);
  /// Free: all monomials with min_degree <= deg <= degree. SOS: degree must
  /// be even; Gram basis covers degrees ceil(min_degree/2)..degree/2.
  DecisionPoly declare_poly(const std::string& name, int degree, PolyKind kind, int min_degree = 0);

  /// Requires e in SOS; returns the constraint index.
  int add_sos_constraint(const PolyExpr& e, const std::string& name);
  /// Requires e == 0.
  void add_equality(const LinearExpr& e, const std::string& name);
  /// Requires e >= 0 (through a nonnegative slack).
  void add_nonnegative(const LinearExpr& e, const std::string& name);
  /// Requires every coefficient of e to vanish.
  void add_polynomial_equality(const PolyExpr& e, const std::string& name);

  void maximize(const LinearExpr& objective);
  void minimize(const LinearExpr& objective);

  /// Gram basis that compile() uses for constraint `index`.
  const std::vector<Monomial>& constraint_basis(int index) const;
  size_t num_constraints() const { return constraints_.size(); }

  SdpInstance compile() const;
  ProgramSize size() const;
  SolveResult solve(const ConicSolver& solver) const;
  SolveResult solve() const;
  /// Checks every SOS constraint and SOS decision polynomial of a solution.
  VerificationReport verify(const SolveResult& result, double eig_tol = 1e-7, double residual_tol = 1e-6) const;

 private:
  enum class VarKind { Free, Nonneg, Gram };
  struct Var {
    VarKind kind;
    int block = -1;  // Gram blocks: program block index
    int i = 0;
    int j = 0;
    int index = 0;  // position among free or nonneg scalars
  };
  struct Constraint {
    std::string name;
    PolyExpr expr;
    std::vector<Monomial> basis;
    double scale = 1.0;
  };
  struct Equality {
    std::string name;
    LinearExpr expr;
  };

  int add_var(VarKind kind, int block = -1, int i = 0, int j = 0);
  int add_gram_block(const std::vector<Monomial>& basis, const std::string& owner, PolyExpr* out);

  int nvars_;
  std::vector<Var> vars_;
  int num_free_ = 0;
  int num_nonneg_ = 0;
  std::vector<int> block_sizes_;
  std::vector<std::string> block_owner_;
  std::vector<std::pair<int, int>> decision_blocks_;  // (block, index in block_owner_)
  std::vector<Constraint> constraints_;
  std::vector<Equality> equalities_;
  LinearExpr objective_;
  bool maximize_ = false;
};

/// Gram basis for an SOS constraint with the given support: monomials of
/// degree ceil(dmin/2)..floor(dmax/2) with each exponent at most half the
/// largest exponent of that variable in the support, then pruned of
/// monomials whose square no basis pair or support term can produce.
std::vector<Monomial> sos_basis(int nvars, const std::vector<Monomial>& support);

}  // namespace saferoa
