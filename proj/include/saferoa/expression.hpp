#pragma once

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "saferoa/poly.hpp"

namespace saferoa {

/// Syntax or name error; column is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int column);
  int column() const { return column_; }

 private:
  int column_;
};

/// Immutable expression tree over states x1..xn and inputs u1..um.
///
/// Grammar (all binary operators left-associative):
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := '-' unary | power
///   power   := primary ('^' integer)*
///   primary := number | x<i> | u<i> | func '(' expr ')' | '(' expr ')'
class Expression {
 public:
  enum class Kind { Constant, State, Input, Neg, Call, Add, Sub, Mul, Div, Pow };
  enum class Func { Sin, Cos, Exp, Sqrt, Abs };

  struct Node {
    Kind kind = Kind::Constant;
    double value = 0.0;  // Constant
    int index = 0;       // State/Input: 0-based; Pow: exponent
    Func func = Func::Sin;
    std::shared_ptr<const Node> a;
    std::shared_ptr<const Node> b;
  };

  Expression() = default;
  explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

  /// Identifiers x1..x<nstates> and u1..u<ninputs> are accepted.
  static Expression parse(std::string_view src, int nstates, int ninputs = 0);

  static Expression constant(double v);
  static Expression state(int index);

  const Node& root() const { return *root_; }
  bool empty() const { return !root_; }

  double evaluate(std::span<const double> x, std::span<const double> u = {}) const;
  /// Minimal-parenthesis rendering that parses back to the same tree.
  std::string to_string() const;

  /// Structural equality.
  bool operator==(const Expression& other) const;

  /// States that appear anywhere in the tree (0-based, sorted).
  std::vector<int> states() const;
  bool uses_inputs() const;

 private:
  std::shared_ptr<const Node> root_;
};

bool same_tree(const Expression::Node& a, const Expression::Node& b);

/// Converts an expression to a polynomial in `nvars` states. Sub-trees equal
/// to a key in `replacements` are substituted. Throws std::invalid_argument
/// naming the offending node and its path when a non-polynomial node
/// remains (function call, division by a non-constant, input variable).
Polynomial to_polynomial(const Expression& e, int nvars,
                         std::span<const std::pair<Expression, Polynomial>> replacements = {});

}  // namespace saferoa
