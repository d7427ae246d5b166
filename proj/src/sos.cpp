#include "saferoa/sos.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace saferoa {

double LinearExpr::evaluate(const Eigen::VectorXd& values) const {
  double v = constant;
  for (const auto& [k, c] : coef) v += c * values(k);
  return v;
}

LinearExpr& LinearExpr::operator+=(const LinearExpr& o) {
  constant += o.constant;
  for (const auto& [k, c] : o.coef) {
    const double v = (coef[k] += c);
    if (v == 0.0) coef.erase(k);
  }
  return *this;
}

LinearExpr& LinearExpr::operator-=(const LinearExpr& o) { return *this += -o; }

LinearExpr& LinearExpr::operator*=(double s) {
  constant *= s;
  if (s == 0.0) {
    coef.clear();
  } else {
    for (auto& [k, c] : coef) c *= s;
  }
  return *this;
}

namespace {

bool is_zero(const LinearExpr& e) { return e.constant == 0.0 && e.coef.empty(); }

}  // namespace

PolyExpr::PolyExpr(const Polynomial& p) : nvars_(p.nvars()) {
  for (const auto& [m, c] : p.terms()) terms_.emplace(m, LinearExpr(c));
}

PolyExpr::PolyExpr(int nvars, TermMap terms, std::set<std::string> owners)
    : nvars_(nvars), terms_(std::move(terms)), owners_(std::move(owners)) {
  std::erase_if(terms_, [](const auto& kv) { return is_zero(kv.second); });
}

int PolyExpr::degree() const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
  return d;
}

bool PolyExpr::has_variables() const {
  return std::any_of(terms_.begin(), terms_.end(), [](const auto& kv) { return kv.second.has_variables(); });
}

LinearExpr PolyExpr::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? LinearExpr() : it->second;
}

LinearExpr PolyExpr::even_coefficient_sum() const {
  LinearExpr s;
  for (const auto& [m, c] : terms_) {
    if (m.is_even()) s += c;
  }
  return s;
}

Polynomial PolyExpr::constant_part() const {
  Polynomial p(nvars_);
  for (const auto& [m, c] : terms_) p.add_term(m, c.constant);
  return p;
}

Polynomial PolyExpr::evaluate(const Eigen::VectorXd& values) const {
  Polynomial p(nvars_);
  for (const auto& [m, c] : terms_) p.add_term(m, c.evaluate(values));
  return p;
}

PolyExpr PolyExpr::differentiate(int var_index) const {
  if (var_index < 0 || var_index >= nvars_) throw std::out_of_range("PolyExpr::differentiate: bad variable");
  TermMap out;
  for (const auto& [m, c] : terms_) {
    const int e = m[var_index];
    if (e == 0) continue;
    auto ex = m.exponents();
    ex[static_cast<size_t>(var_index)] -= 1;
    out[Monomial(std::move(ex))] += c * static_cast<double>(e);
  }
  return PolyExpr(nvars_, std::move(out), owners_);
}

void PolyExpr::add_scaled(const PolyExpr& o, double s) {
  if (nvars_ == 0 && terms_.empty()) nvars_ = o.nvars_;
  if (o.nvars_ != nvars_ && !o.terms_.empty()) {
    throw std::invalid_argument(fmt::format("PolyExpr: variable count mismatch ({} vs {})", nvars_, o.nvars_));
  }
  for (const auto& [m, c] : o.terms_) {
    auto& slot = terms_[m];
    slot += c * s;
    if (is_zero(slot)) terms_.erase(m);
  }
  owners_.insert(o.owners_.begin(), o.owners_.end());
}

PolyExpr& PolyExpr::operator+=(const PolyExpr& o) {
  add_scaled(o, 1.0);
  return *this;
}

PolyExpr& PolyExpr::operator-=(const PolyExpr& o) {
  add_scaled(o, -1.0);
  return *this;
}

PolyExpr& PolyExpr::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [m, c] : terms_) c *= s;
  return *this;
}

namespace {

std::string owner_list(const std::set<std::string>& owners) {
  if (owners.empty()) return "<unnamed>";
  std::string s;
  for (const auto& o : owners) {
    if (!s.empty()) s += ", ";
    s += o;
  }
  return s;
}

}  // namespace

PolyExpr operator*(const PolyExpr& a, const PolyExpr& b) {
  const bool av = a.has_variables();
  const bool bv = b.has_variables();
  if (av && bv) {
    throw BilinearError(
        fmt::format("bilinear product of decision objects [{}] and [{}]", owner_list(a.owners_), owner_list(b.owners_)));
  }
  if (a.nvars_ != b.nvars_) throw std::invalid_argument("PolyExpr: variable count mismatch in product");
  // Let the variable side carry the linear expressions.
  const PolyExpr& var_side = av ? a : b;
  const PolyExpr& const_side = av ? b : a;
  PolyExpr::TermMap out;
  for (const auto& [mc, cc] : const_side.terms_) {
    for (const auto& [mv, cv] : var_side.terms_) {
      auto& slot = out[mc * mv];
      slot += cv * cc.constant;
    }
  }
  std::set<std::string> owners = a.owners_;
  owners.insert(b.owners_.begin(), b.owners_.end());
  return PolyExpr(a.nvars_, std::move(out), std::move(owners));
}

PolyExpr lie_derivative(const PolyExpr& h, const std::vector<PolyExpr>& field) {
  if (static_cast<int>(field.size()) != h.nvars()) {
    throw std::invalid_argument("lie_derivative: field size must equal variable count");
  }
  PolyExpr out(h.nvars());
  for (int i = 0; i < h.nvars(); ++i) out += h.differentiate(i) * field[static_cast<size_t>(i)];
  return out;
}

bool VerificationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const ConstraintCheck& c) { return c.passed; });
}

std::string VerificationReport::summary() const {
  std::string s;
  for (const auto& c : checks) {
    s += fmt::format("{:<28} min_eig {: .3e} residual {:.3e} {}\n", c.name, c.min_eigenvalue, c.residual,
                     c.passed ? "pass" : "FAIL");
  }
  return s;
}

std::vector<Monomial> sos_basis(int nvars, const std::vector<Monomial>& support) {
  if (support.empty()) return {};
  int dmin = support.front().degree();
  int dmax = 0;
  std::vector<int> emax(static_cast<size_t>(nvars), 0);
  for (const auto& m : support) {
    dmin = std::min(dmin, m.degree());
    dmax = std::max(dmax, m.degree());
    for (int i = 0; i < nvars; ++i) emax[static_cast<size_t>(i)] = std::max(emax[static_cast<size_t>(i)], m[i]);
  }
  std::vector<Monomial> basis;
  for (const auto& m : monomial_basis(nvars, dmax / 2, (dmin + 1) / 2)) {
    bool ok = true;
    for (int i = 0; i < nvars && ok; ++i) ok = 2 * m[i] <= emax[static_cast<size_t>(i)];
    if (ok) basis.push_back(m);
  }
  const std::set<Monomial> supp(support.begin(), support.end());
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t k = 0; k < basis.size(); ++k) {
      const Monomial sq = basis[k] * basis[k];
      if (supp.count(sq)) continue;
      bool produced = false;
      for (size_t i = 0; i < basis.size() && !produced; ++i) {
        for (size_t j = i + 1; j < basis.size() && !produced; ++j) {
          if (i != k && j != k && basis[i] * basis[j] == sq) produced = true;
        }
      }
      if (!produced) {
        basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(k));
        changed = true;
        break;
      }
    }
  }
  return basis;
}

SosProgram::SosProgram(int nvars) : nvars_(nvars) {
  if (nvars < 1) throw std::invalid_argument("SosProgram: need at least one variable");
}

int SosProgram::add_var(VarKind kind, int block, int i, int j) {
  Var v{kind, block, i, j, 0};
  if (kind == VarKind::Free) v.index = num_free_++;
  if (kind == VarKind::Nonneg) v.index = num_nonneg_++;
  vars_.push_back(v);
  return static_cast<int>(vars_.size()) - 1;
}

PolyExpr SosProgram::new_free_scalar(const std::string& name) {
  const int v = add_var(VarKind::Free);
  LinearExpr e;
  e.coef[v] = 1.0;
  return PolyExpr(nvars_, {{Monomial::constant(nvars_), e}}, {name});
}

PolyExpr SosProgram::new_nonneg_scalar(const std::string& name) {
  const int v = add_var(VarKind::Nonneg);
  LinearExpr e;
  e.coef[v] = 1.0;
  return PolyExpr(nvars_, {{Monomial::constant(nvars_), e}}, {name});
}

int SosProgram::add_gram_block(const std::vector<Monomial>& basis, const std::string& owner, PolyExpr* out) {
  const int block = static_cast<int>(block_sizes_.size());
  const int n = static_cast<int>(basis.size());
  block_sizes_.push_back(n);
  block_owner_.push_back(owner);
  PolyExpr::TermMap terms;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const int v = add_var(VarKind::Gram, block, i, j);
      terms[basis[static_cast<size_t>(i)] * basis[static_cast<size_t>(j)]].coef[v] += i == j ? 1.0 : 2.0;
    }
  }
  *out = PolyExpr(nvars_, std::move(terms), {owner});
  return block;
}

DecisionPoly SosProgram::declare_poly(const std::string& name, int degree, PolyKind kind, int min_degree) {
  if (degree < 0) throw std::invalid_argument(fmt::format("declare_poly {}: degree must be >= 0", name));
  if (min_degree < 0 || min_degree > degree) {
    throw std::invalid_argument(fmt::format("declare_poly {}: bad minimum degree {}", name, min_degree));
  }
  DecisionPoly d;
  d.name = name;
  d.kind = kind;
  if (kind == PolyKind::Free) {
    d.basis = monomial_basis(nvars_, degree, min_degree);
    PolyExpr::TermMap terms;
    for (const auto& m : d.basis) terms[m].coef[add_var(VarKind::Free)] = 1.0;
    d.expr = PolyExpr(nvars_, std::move(terms), {name});
    return d;
  }
  if (degree % 2 != 0) {
    throw std::invalid_argument(fmt::format("declare_poly {}: SOS polynomial needs even degree, got {}", name, degree));
  }
  d.basis = monomial_basis(nvars_, degree / 2, (min_degree + 1) / 2);
  d.block = add_gram_block(d.basis, name, &d.expr);
  decision_blocks_.emplace_back(d.block, d.block);
  return d;
}

int SosProgram::add_sos_constraint(const PolyExpr& e, const std::string& name) {
  if (e.nvars() != nvars_ && !e.terms().empty()) {
    throw std::invalid_argument(fmt::format("constraint {}: expected {} variables", name, nvars_));
  }
  Constraint c;
  c.name = name;
  c.expr = e;
  std::vector<Monomial> support;
  double scale = 0.0;
  for (const auto& [m, lin] : e.terms()) {
    support.push_back(m);
    scale = std::max(scale, std::abs(lin.constant));
  }
  c.scale = std::max(1.0, scale);
  c.basis = sos_basis(nvars_, support);
  constraints_.push_back(std::move(c));
  return static_cast<int>(constraints_.size()) - 1;
}

void SosProgram::add_equality(const LinearExpr& e, const std::string& name) { equalities_.push_back({name, e}); }

void SosProgram::add_nonnegative(const LinearExpr& e, const std::string& name) {
  const int slack = add_var(VarKind::Nonneg);
  LinearExpr eq = e;
  eq.coef[slack] -= 1.0;
  equalities_.push_back({name, eq});
}

void SosProgram::add_polynomial_equality(const PolyExpr& e, const std::string& name) {
  for (const auto& [m, lin] : e.terms()) equalities_.push_back({fmt::format("{}[{}]", name, m.to_string()), lin});
}

void SosProgram::maximize(const LinearExpr& objective) {
  objective_ = objective;
  maximize_ = true;
}

void SosProgram::minimize(const LinearExpr& objective) {
  objective_ = objective;
  maximize_ = false;
}

const std::vector<Monomial>& SosProgram::constraint_basis(int index) const {
  return constraints_.at(static_cast<size_t>(index)).basis;
}

SdpInstance SosProgram::compile() const {
  SdpInstance in;
  in.block_sizes = block_sizes_;
  for (const auto& c : constraints_) in.block_sizes.push_back(static_cast<int>(c.basis.size()));
  in.num_free = num_free_;
  in.num_nonneg = num_nonneg_;
  std::vector<double> rhs;

  auto emit = [&](int row, const LinearExpr& e, double s) {
    for (const auto& [k, c] : e.coef) {
      const Var& v = vars_[static_cast<size_t>(k)];
      switch (v.kind) {
        case VarKind::Free:
          in.free_terms.push_back({row, v.index, c * s});
          break;
        case VarKind::Nonneg:
          in.nonneg_terms.push_back({row, v.index, c * s});
          break;
        case VarKind::Gram:
          in.block_terms.push_back({row, v.block, v.i, v.j, c * s});
          break;
      }
    }
  };

  const int first_constraint_block = static_cast<int>(block_sizes_.size());
  for (size_t ci = 0; ci < constraints_.size(); ++ci) {
    const auto& c = constraints_[ci];
    const int block = first_constraint_block + static_cast<int>(ci);
    const double s = 1.0 / c.scale;
    // Gram contributions grouped by product monomial.
    std::map<Monomial, std::vector<std::pair<int, int>>> gram;
    const int n = static_cast<int>(c.basis.size());
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) gram[c.basis[static_cast<size_t>(i)] * c.basis[static_cast<size_t>(j)]].emplace_back(i, j);
    }
    std::set<Monomial> monos;
    for (const auto& [m, lin] : c.expr.terms()) monos.insert(m);
    for (const auto& [m, pairs] : gram) monos.insert(m);
    for (const auto& m : monos) {
      const int row = static_cast<int>(rhs.size());
      const LinearExpr lin = c.expr.coefficient(m);
      emit(row, lin, s);
      auto it = gram.find(m);
      if (it != gram.end()) {
        for (const auto& [i, j] : it->second) in.block_terms.push_back({row, block, i, j, i == j ? -1.0 : -2.0});
      }
      rhs.push_back(-lin.constant * s);
    }
  }
  for (const auto& e : equalities_) {
    const int row = static_cast<int>(rhs.size());
    emit(row, e.expr, 1.0);
    rhs.push_back(-e.expr.constant);
  }
  in.num_rows = static_cast<int>(rhs.size());
  in.rhs = Eigen::Map<Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));

  in.free_cost = Eigen::VectorXd::Zero(num_free_);
  in.nonneg_cost = Eigen::VectorXd::Zero(num_nonneg_);
  const double sign = maximize_ ? -1.0 : 1.0;
  for (const auto& [k, c] : objective_.coef) {
    const Var& v = vars_[static_cast<size_t>(k)];
    switch (v.kind) {
      case VarKind::Free:
        in.free_cost(v.index) += sign * c;
        break;
      case VarKind::Nonneg:
        in.nonneg_cost(v.index) += sign * c;
        break;
      case VarKind::Gram:
        in.block_cost.push_back({v.block, v.i, v.j, sign * c});
        break;
    }
  }
  return in;
}

ProgramSize SosProgram::size() const {
  const SdpInstance in = compile();
  return {in.num_rows, in.num_free, in.num_nonneg, in.block_sizes};
}

SolveResult SosProgram::solve() const { return solve(InteriorPointSolver()); }

SolveResult SosProgram::solve(const ConicSolver& solver) const {
  SolveResult r;
  if (constraints_.empty() && equalities_.empty() && objective_.coef.empty()) {
    r.status = SolveStatus::Optimal;
    r.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vars_.size()));
    return r;
  }
  r.raw = solver.solve(compile());
  r.status = r.raw.status;
  r.message = r.raw.message;
  r.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vars_.size()));
  if (r.raw.blocks.size() != block_sizes_.size() + constraints_.size()) return r;
  for (size_t k = 0; k < vars_.size(); ++k) {
    const Var& v = vars_[k];
    const auto idx = static_cast<Eigen::Index>(k);
    switch (v.kind) {
      case VarKind::Free:
        r.values(idx) = r.raw.free_values(v.index);
        break;
      case VarKind::Nonneg:
        r.values(idx) = r.raw.nonneg_values(v.index);
        break;
      case VarKind::Gram:
        r.values(idx) = r.raw.blocks[static_cast<size_t>(v.block)](v.i, v.j);
        break;
    }
  }
  r.objective = objective_.evaluate(r.values);
  return r;
}

VerificationReport SosProgram::verify(const SolveResult& result, double eig_tol, double residual_tol) const {
  VerificationReport rep;
  auto min_eig = [](const Eigen::MatrixXd& q) {
    if (q.rows() == 0) return 0.0;
    const Eigen::MatrixXd s = 0.5 * (q + q.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  };
  if (result.raw.blocks.size() != block_sizes_.size() + constraints_.size()) {
    for (const auto& c : constraints_) rep.checks.push_back({c.name, 0.0, 0.0, false});
    return rep;
  }
  for (const auto& [block, owner] : decision_blocks_) {
    const double e = min_eig(result.raw.blocks[static_cast<size_t>(block)]);
    rep.checks.push_back({block_owner_[static_cast<size_t>(owner)], e, 0.0, e >= -eig_tol});
  }
  for (size_t ci = 0; ci < constraints_.size(); ++ci) {
    const auto& c = constraints_[ci];
    const Eigen::MatrixXd& q = result.raw.blocks[block_sizes_.size() + ci];
    GramRepresentation g{c.basis, 0.5 * (q + q.transpose())};
    const Polynomial target = c.expr.evaluate(result.values) * (1.0 / c.scale);
    const Polynomial expanded = g.basis.empty() ? Polynomial(nvars_) : g.expand();
    const double residual = coefficient_distance(target, expanded) / std::max(1.0, target.max_abs_coefficient());
    const double e = min_eig(g.matrix);
    rep.checks.push_back({c.name, e, residual, e >= -eig_tol && residual <= residual_tol});
  }
  return rep;
}

}  // namespace saferoa
