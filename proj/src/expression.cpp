#include "saferoa/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include <fmt/format.h>

namespace saferoa {

ParseError::ParseError(const std::string& what, int column)
    : std::runtime_error(fmt::format("column {}: {}", column, what)), column_(column) {}

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;
using Kind = Expression::Kind;
using Func = Expression::Func;

NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

const char* func_name(Func f) {
  switch (f) {
    case Func::Sin:
      return "sin";
    case Func::Cos:
      return "cos";
    case Func::Exp:
      return "exp";
    case Func::Sqrt:
      return "sqrt";
    case Func::Abs:
      return "abs";
  }
  return "?";
}

class Parser {
 public:
  Parser(std::string_view src, int nstates, int ninputs) : src_(src), nstates_(nstates), ninputs_(ninputs) {}

  NodePtr run() {
    skip();
    if (pos_ >= src_.size()) fail("empty expression");
    NodePtr e = expr();
    skip();
    if (pos_ < src_.size()) fail(fmt::format("unexpected '{}'", src_[pos_]));
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, static_cast<int>(pos_) + 1); }

  void skip() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    while (true) {
      if (accept('+')) {
        lhs = make(Kind::Add, lhs, term());
      } else if (accept('-')) {
        lhs = make(Kind::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (true) {
      if (accept('*')) {
        lhs = make(Kind::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = make(Kind::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Kind::Neg, unary());
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    while (accept('^')) {
      skip();
      const size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      if (start == pos_) fail("exponent must be a non-negative integer");
      if (pos_ < src_.size() && (src_[pos_] == '.' || src_[pos_] == 'e' || src_[pos_] == 'E')) {
        pos_ = start;
        fail("exponent must be an integer");
      }
      int e = 0;
      const auto res = std::from_chars(src_.data() + start, src_.data() + pos_, e);
      if (res.ec != std::errc() || e > 64) {
        pos_ = start;
        fail("exponent out of range");
      }
      auto n = std::make_shared<Node>();
      n->kind = Kind::Pow;
      n->index = e;
      n->a = base;
      base = n;
    }
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail(fmt::format("unexpected '{}'", c));
  }

  NodePtr number() {
    const size_t start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    const auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    auto n = std::make_shared<Node>();
    n->kind = Kind::Constant;
    n->value = v;
    return n;
  }

  NodePtr identifier() {
    const size_t start = pos_;
    while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::string_view name = src_.substr(start, pos_ - start);
    static constexpr std::pair<std::string_view, Func> funcs[] = {
        {"sin", Func::Sin}, {"cos", Func::Cos}, {"exp", Func::Exp}, {"sqrt", Func::Sqrt}, {"abs", Func::Abs}};
    for (const auto& [fname, f] : funcs) {
      if (name == fname) {
        if (!accept('(')) fail(fmt::format("expected '(' after {}", fname));
        auto n = std::make_shared<Node>();
        n->kind = Kind::Call;
        n->func = f;
        n->a = expr();
        if (!accept(')')) fail("expected ')'");
        return n;
      }
    }
    if (name.size() >= 2 && (name[0] == 'x' || name[0] == 'u')) {
      int idx = 0;
      const auto res = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
      const int limit = name[0] == 'x' ? nstates_ : ninputs_;
      if (res.ec == std::errc() && res.ptr == name.data() + name.size() && idx >= 1 && idx <= limit && name[1] != '0') {
        auto n = std::make_shared<Node>();
        n->kind = name[0] == 'x' ? Kind::State : Kind::Input;
        n->index = idx - 1;
        return n;
      }
    }
    pos_ = start;
    fail(fmt::format("unknown identifier '{}'", name));
  }

  std::string_view src_;
  size_t pos_ = 0;
  int nstates_;
  int ninputs_;
};

double eval(const Node& n, std::span<const double> x, std::span<const double> u) {
  switch (n.kind) {
    case Kind::Constant:
      return n.value;
    case Kind::State:
      return x[static_cast<size_t>(n.index)];
    case Kind::Input:
      return u[static_cast<size_t>(n.index)];
    case Kind::Neg:
      return -eval(*n.a, x, u);
    case Kind::Call: {
      const double v = eval(*n.a, x, u);
      switch (n.func) {
        case Func::Sin:
          return std::sin(v);
        case Func::Cos:
          return std::cos(v);
        case Func::Exp:
          return std::exp(v);
        case Func::Sqrt:
          return std::sqrt(v);
        case Func::Abs:
          return std::abs(v);
      }
      return 0.0;
    }
    case Kind::Add:
      return eval(*n.a, x, u) + eval(*n.b, x, u);
    case Kind::Sub:
      return eval(*n.a, x, u) - eval(*n.b, x, u);
    case Kind::Mul:
      return eval(*n.a, x, u) * eval(*n.b, x, u);
    case Kind::Div:
      return eval(*n.a, x, u) / eval(*n.b, x, u);
    case Kind::Pow:
      return std::pow(eval(*n.a, x, u), n.index);
  }
  return 0.0;
}

int precedence(Kind k) {
  switch (k) {
    case Kind::Add:
    case Kind::Sub:
      return 1;
    case Kind::Mul:
    case Kind::Div:
      return 2;
    case Kind::Neg:
      return 3;
    case Kind::Pow:
      return 4;
    default:
      return 5;
  }
}

std::string print(const Node& n);

std::string wrap(const Node& child, bool parens) { return parens ? "(" + print(child) + ")" : print(child); }

std::string print(const Node& n) {
  switch (n.kind) {
    case Kind::Constant:
      return fmt::format("{}", n.value);
    case Kind::State:
      return fmt::format("x{}", n.index + 1);
    case Kind::Input:
      return fmt::format("u{}", n.index + 1);
    case Kind::Neg:
      return "-" + wrap(*n.a, precedence(n.a->kind) < 3);
    case Kind::Call:
      return fmt::format("{}({})", func_name(n.func), print(*n.a));
    case Kind::Pow:
      return wrap(*n.a, precedence(n.a->kind) < 5) + "^" + std::to_string(n.index);
    default:
      break;
  }
  const int p = precedence(n.kind);
  const char* op = n.kind == Kind::Add ? " + " : n.kind == Kind::Sub ? " - " : n.kind == Kind::Mul ? "*" : "/";
  // Neg binds tighter than * and /, so it never needs parentheses as an operand.
  const bool left = precedence(n.a->kind) < p;
  const bool right = precedence(n.b->kind) <= p;
  return wrap(*n.a, left) + op + wrap(*n.b, right);
}

void collect_states(const Node& n, std::set<int>& out, bool& inputs) {
  if (n.kind == Kind::State) out.insert(n.index);
  if (n.kind == Kind::Input) inputs = true;
  if (n.a) collect_states(*n.a, out, inputs);
  if (n.b) collect_states(*n.b, out, inputs);
}

Polynomial poly_of(const Node& n, int nvars, std::span<const std::pair<Expression, Polynomial>> repl, const std::string& path) {
  for (const auto& [e, p] : repl) {
    if (same_tree(e.root(), n)) return p;
  }
  auto bad = [&](const std::string& why) {
    return std::invalid_argument(fmt::format("non-polynomial node '{}' at {}: {}", print(n), path, why));
  };
  switch (n.kind) {
    case Kind::Constant:
      return Polynomial(nvars, n.value);
    case Kind::State:
      if (n.index >= nvars) throw bad("state index out of range");
      return Polynomial::variable(nvars, n.index);
    case Kind::Input:
      throw bad("input variables are not allowed here");
    case Kind::Neg:
      return -poly_of(*n.a, nvars, repl, path + ".neg");
    case Kind::Call:
      throw bad(fmt::format("{}() needs a Chebyshev marker", func_name(n.func)));
    case Kind::Add:
      return poly_of(*n.a, nvars, repl, path + ".lhs") + poly_of(*n.b, nvars, repl, path + ".rhs");
    case Kind::Sub:
      return poly_of(*n.a, nvars, repl, path + ".lhs") - poly_of(*n.b, nvars, repl, path + ".rhs");
    case Kind::Mul:
      return poly_of(*n.a, nvars, repl, path + ".lhs") * poly_of(*n.b, nvars, repl, path + ".rhs");
    case Kind::Div: {
      const Polynomial den = poly_of(*n.b, nvars, repl, path + ".rhs");
      if (!den.is_constant() || den.constant_term() == 0.0) throw bad("division only by nonzero constants");
      return poly_of(*n.a, nvars, repl, path + ".lhs") * (1.0 / den.constant_term());
    }
    case Kind::Pow:
      return pow(poly_of(*n.a, nvars, repl, path + ".base"), n.index);
  }
  throw bad("unknown node");
}

}  // namespace

bool same_tree(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Kind::Constant:
      return a.value == b.value;
    case Kind::State:
    case Kind::Input:
      return a.index == b.index;
    case Kind::Call:
      return a.func == b.func && same_tree(*a.a, *b.a);
    case Kind::Neg:
      return same_tree(*a.a, *b.a);
    case Kind::Pow:
      return a.index == b.index && same_tree(*a.a, *b.a);
    default:
      return same_tree(*a.a, *b.a) && same_tree(*a.b, *b.b);
  }
}

Expression Expression::parse(std::string_view src, int nstates, int ninputs) {
  return Expression(Parser(src, nstates, ninputs).run());
}

Expression Expression::constant(double v) {
  auto n = std::make_shared<Node>();
  n->value = v;
  return Expression(n);
}

Expression Expression::state(int index) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::State;
  n->index = index;
  return Expression(n);
}

double Expression::evaluate(std::span<const double> x, std::span<const double> u) const { return eval(*root_, x, u); }

std::string Expression::to_string() const { return root_ ? print(*root_) : ""; }

bool Expression::operator==(const Expression& other) const {
  if (!root_ || !other.root_) return root_ == other.root_;
  return same_tree(*root_, *other.root_);
}

std::vector<int> Expression::states() const {
  std::set<int> s;
  bool inputs = false;
  if (root_) collect_states(*root_, s, inputs);
  return {s.begin(), s.end()};
}

bool Expression::uses_inputs() const {
  std::set<int> s;
  bool inputs = false;
  if (root_) collect_states(*root_, s, inputs);
  return inputs;
}

Polynomial to_polynomial(const Expression& e, int nvars, std::span<const std::pair<Expression, Polynomial>> replacements) {
  return poly_of(e.root(), nvars, replacements, "root");
}

}  // namespace saferoa
