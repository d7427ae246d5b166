#include "saferoa/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "saferoa/sim.hpp"

namespace saferoa {

namespace {

constexpr const char* kVersion = "saferoa 1.0.0";

int even_ceil(int d) { return d % 2 == 0 ? d : d + 1; }

/// Degree of an SOS multiplier s such that s * factor reaches an even degree
/// covering `target`.
int multiplier_degree(int target, int factor_degree, int floor) {
  return std::max(floor, even_ceil(std::max(0, even_ceil(target) - factor_degree)));
}

Polynomial squared_norm(int n) {
  Polynomial r(n);
  for (int i = 0; i < n; ++i) r.add_term(Monomial::variable(n, i, 2), 1.0);
  return r;
}

LinearExpr scalar(const PolyExpr& e) { return e.coefficient(Monomial::constant(e.nvars())); }

template <typename... Args>
void log(const SynthesisConfig& cfg, fmt::format_string<Args...> f, Args&&... args) {
  if (cfg.verbose) fmt::print(stderr, "{}\n", fmt::format(f, std::forward<Args>(args)...));
}

int field_degree(const LearnedSystem& sys, const std::vector<std::vector<Polynomial>>& vertices, int deg_u) {
  int d = 1;
  for (const auto& p : sys.P) d = std::max(d, p.degree());
  for (const auto& v : vertices) {
    for (const auto& p : v) d = std::max(d, p.degree());
  }
  for (const auto& row : sys.g) {
    for (const auto& gij : row) {
      if (!gij.is_zero()) d = std::max(d, gij.degree() + deg_u);
    }
  }
  return d;
}

/// P + d + g u with u given as expressions.
std::vector<PolyExpr> field_expr(const LearnedSystem& sys, const std::vector<Polynomial>& d, const std::vector<PolyExpr>& u) {
  std::vector<PolyExpr> f;
  for (int i = 0; i < sys.n(); ++i) {
    PolyExpr fi = PolyExpr(sys.P[static_cast<size_t>(i)] + d[static_cast<size_t>(i)]);
    for (int j = 0; j < sys.m(); ++j) {
      const Polynomial& gij = sys.g[static_cast<size_t>(i)][static_cast<size_t>(j)];
      if (!gij.is_zero()) fi += PolyExpr(gij) * u[static_cast<size_t>(j)];
    }
    f.push_back(std::move(fi));
  }
  return f;
}

std::vector<PolyExpr> as_exprs(const std::vector<Polynomial>& ps) { return {ps.begin(), ps.end()}; }

struct Solved {
  SolveResult result;
  VerificationReport report;
  bool ok = false;
};

Solved solve_checked(const SosProgram& prog, const SynthesisConfig& cfg) {
  Solved s;
  if (cfg.dry_run_sizes) {
    cfg.dry_run_sizes->push_back(prog.size());
    return s;
  }
  const InteriorPointSolver solver(cfg.solver);
  s.result = prog.solve(solver);
  if (s.result.ok()) {
    s.report = prog.verify(s.result);
    s.ok = s.report.passed();
  } else if (s.result.status == SolveStatus::Failed && s.result.raw.primal_infeasibility <= 1e-5) {
    // A stalled solve whose best iterate passes the independent check is a
    // valid, possibly suboptimal, certificate.
    s.report = prog.verify(s.result);
    if (s.report.passed()) {
      s.ok = true;
      s.result.status = SolveStatus::Inaccurate;
    }
  }
  return s;
}

std::string status_text(const Solved& s) {
  if (!s.result.ok()) return to_string(s.result.status);
  return s.ok ? to_string(s.result.status) : "verification_failed";
}

/// Adds -s_ball (|x|^2 - r^2) when the ball exemption is active.
void add_ball_term(SosProgram& prog, PolyExpr& expr, int degree, const std::string& name, const SynthesisConfig& cfg,
                   std::vector<DecisionPoly>* out) {
  if (cfg.ball_radius <= 0) return;
  const int n = prog.nvars();
  const DecisionPoly s = prog.declare_poly(name, std::max(0, degree - 2), PolyKind::Sos);
  expr -= PolyExpr(squared_norm(n) - cfg.ball_radius * cfg.ball_radius) * s.expr;
  if (out) out->push_back(s);
}

}  // namespace

void SynthesisConfig::validate(int n) const {
  auto fail = [](const std::string& what) { throw ConfigError("synthesis", what); };
  if (deg_u < 0) fail("deg_u must be >= 0");
  if (deg_V < 2 || deg_V % 2 != 0) fail("deg_V must be even and >= 2");
  if (deg_B < 2 || deg_B % 2 != 0) fail("deg_B must be even and >= 2");
  if (deg_mult < 2 || deg_mult % 2 != 0) fail("deg_mult must be even and >= 2");
  if (!(alpha > 0)) fail("alpha must be > 0");
  if (zeta < 0) fail("zeta must be >= 0");
  if (outer_max_iters < 1 || loop1_max_iters < 1 || loop2_max_iters < 1) fail("iteration caps must be >= 1");
  if (!(c0 > 0) || !(c_max >= c0)) fail("need 0 < c0 <= c_max");
  if (margin < 0 || ball_radius < 0 || pd_margin < 0) fail("margins must be >= 0");
  if (!(eps_cap > 0)) fail("eps_cap must be > 0");
  if (box.dim() != n || static_cast<int>(box.hi.size()) != n) fail(fmt::format("box must have dimension {}", n));
  for (int i = 0; i < n; ++i) {
    if (!(box.lo[static_cast<size_t>(i)] < box.hi[static_cast<size_t>(i)])) fail("box needs lo < hi");
  }
  if (measure_samples < 1000) fail("measure_samples must be >= 1000");
  if (!(lqr_q > 0)) fail("lqr_q must be > 0");
  if (u_bound < 0) fail("u_bound must be >= 0");
  if (domain) {
    if (domain->dim() != n || static_cast<int>(domain->hi.size()) != n) fail(fmt::format("domain must have dimension {}", n));
    for (int i = 0; i < n; ++i) {
      if (!(domain->lo[static_cast<size_t>(i)] < 0 && 0 < domain->hi[static_cast<size_t>(i)])) {
        fail("domain must contain the origin in its interior");
      }
    }
  }
}

SynthesisConfig synthesis_config_from_json(const Json& j, int n, const std::string& path) {
  check_object(j, path,
               {"deg_u", "deg_V", "deg_B", "deg_mult", "alpha", "zeta", "disturbance_mode", "outer_max_iters",
                "loop1_max_iters", "loop2_max_iters", "tol_c", "tol_trace", "c0", "c_max", "margin", "ball_radius",
                "eps_cap", "pd_margin", "box", "measure_samples", "solver", "initial_feedback", "lqr_q", "u_bound", "barrier_containment", "domain"});
  SynthesisConfig c;
  c.deg_u = get_int(j, "deg_u", path, c.deg_u);
  c.deg_V = get_int(j, "deg_V", path, c.deg_V);
  c.deg_B = get_int(j, "deg_B", path, c.deg_B);
  c.deg_mult = get_int(j, "deg_mult", path, c.deg_mult);
  c.alpha = get_number(j, "alpha", path, c.alpha);
  c.zeta = get_number(j, "zeta", path, c.zeta);
  const std::string mode = get_string(j, "disturbance_mode", path, "none");
  if (mode == "none") {
    c.disturbance_mode = DisturbanceMode::None;
  } else if (mode == "envelope") {
    c.disturbance_mode = DisturbanceMode::Envelope;
  } else {
    throw ConfigError(join_path(path, "disturbance_mode"), "expected \"none\" or \"envelope\"");
  }
  c.outer_max_iters = get_int(j, "outer_max_iters", path, c.outer_max_iters);
  c.loop1_max_iters = get_int(j, "loop1_max_iters", path, c.loop1_max_iters);
  c.loop2_max_iters = get_int(j, "loop2_max_iters", path, c.loop2_max_iters);
  c.tol_c = get_number(j, "tol_c", path, c.tol_c);
  c.tol_trace = get_number(j, "tol_trace", path, c.tol_trace);
  c.c0 = get_number(j, "c0", path, c.c0);
  c.c_max = get_number(j, "c_max", path, c.c_max);
  c.margin = get_number(j, "margin", path, c.margin);
  c.ball_radius = get_number(j, "ball_radius", path, c.ball_radius);
  c.eps_cap = get_number(j, "eps_cap", path, c.eps_cap);
  c.pd_margin = get_number(j, "pd_margin", path, c.pd_margin);
  c.measure_samples = get_int(j, "measure_samples", path, c.measure_samples);
  const std::string fb = get_string(j, "initial_feedback", path, "auto");
  if (fb != "auto" && fb != "lqr") throw ConfigError(join_path(path, "initial_feedback"), "expected \"auto\" or \"lqr\"");
  c.initial_feedback_lqr = fb == "lqr";
  c.lqr_q = get_number(j, "lqr_q", path, c.lqr_q);
  c.u_bound = get_number(j, "u_bound", path, c.u_bound);
  c.barrier_containment = get_bool(j, "barrier_containment", path, c.barrier_containment);
  const std::string bpath = join_path(path, "box");
  if (!j.contains("box")) throw ConfigError(bpath, "missing required key");
  check_object(j.at("box"), bpath, {"lo", "hi"});
  c.box.lo = get_numbers(j.at("box"), "lo", bpath);
  c.box.hi = get_numbers(j.at("box"), "hi", bpath);
  if (j.contains("domain")) {
    const std::string dpath = join_path(path, "domain");
    check_object(j.at("domain"), dpath, {"lo", "hi"});
    Box d;
    d.lo = get_numbers(j.at("domain"), "lo", dpath);
    d.hi = get_numbers(j.at("domain"), "hi", dpath);
    c.domain = d;
  }
  if (j.contains("solver")) {
    const std::string sp = join_path(path, "solver");
    const Json& s = j.at("solver");
    check_object(s, sp, {"max_iterations", "feasibility_tol", "gap_tol", "inaccurate_tol", "augmented_lu"});
    c.solver.max_iterations = get_int(s, "max_iterations", sp, c.solver.max_iterations);
    c.solver.feasibility_tol = get_number(s, "feasibility_tol", sp, c.solver.feasibility_tol);
    c.solver.gap_tol = get_number(s, "gap_tol", sp, c.solver.gap_tol);
    c.solver.inaccurate_tol = get_number(s, "inaccurate_tol", sp, c.solver.inaccurate_tol);
    c.solver.augmented_lu = get_bool(s, "augmented_lu", sp, c.solver.augmented_lu);
  }
  c.validate(n);
  return c;
}

Json synthesis_config_to_json(const SynthesisConfig& c) {
  Json j;
  j["deg_u"] = c.deg_u;
  j["deg_V"] = c.deg_V;
  j["deg_B"] = c.deg_B;
  j["deg_mult"] = c.deg_mult;
  j["alpha"] = c.alpha;
  j["zeta"] = c.zeta;
  j["disturbance_mode"] = c.disturbance_mode == DisturbanceMode::None ? "none" : "envelope";
  j["outer_max_iters"] = c.outer_max_iters;
  j["loop1_max_iters"] = c.loop1_max_iters;
  j["loop2_max_iters"] = c.loop2_max_iters;
  j["tol_c"] = c.tol_c;
  j["tol_trace"] = c.tol_trace;
  j["c0"] = c.c0;
  j["c_max"] = c.c_max;
  j["margin"] = c.margin;
  j["ball_radius"] = c.ball_radius;
  j["eps_cap"] = c.eps_cap;
  j["pd_margin"] = c.pd_margin;
  j["initial_feedback"] = c.initial_feedback_lqr ? "lqr" : "auto";
  j["lqr_q"] = c.lqr_q;
  j["u_bound"] = c.u_bound;
  j["barrier_containment"] = c.barrier_containment;
  j["box"] = {{"lo", c.box.lo}, {"hi", c.box.hi}};
  if (c.domain) j["domain"] = {{"lo", c.domain->lo}, {"hi", c.domain->hi}};
  j["measure_samples"] = c.measure_samples;
  j["solver"] = {{"max_iterations", c.solver.max_iterations},
                 {"feasibility_tol", c.solver.feasibility_tol},
                 {"gap_tol", c.solver.gap_tol},
                 {"inaccurate_tol", c.solver.inaccurate_tol},
                 {"augmented_lu", c.solver.augmented_lu}};
  return j;
}

std::vector<std::vector<Polynomial>> envelope_vertices(const std::vector<ConfidenceEnvelope>& env, int nvars) {
  std::vector<int> varying;
  std::vector<Polynomial> base(static_cast<size_t>(nvars), Polynomial(nvars));
  for (int i = 0; i < nvars && i < static_cast<int>(env.size()); ++i) {
    const auto& e = env[static_cast<size_t>(i)];
    if (e.lo.nvars() != nvars) continue;
    base[static_cast<size_t>(i)] = e.lo;
    if (coefficient_distance(e.lo, e.hi) > 0.0) varying.push_back(i);
  }
  if (varying.size() > 8) {
    throw std::invalid_argument(fmt::format("envelope_vertices: {} varying components exceed the limit of 8", varying.size()));
  }
  std::vector<std::vector<Polynomial>> out;
  const size_t count = size_t{1} << varying.size();
  for (size_t mask = 0; mask < count; ++mask) {
    auto v = base;
    for (size_t k = 0; k < varying.size(); ++k) {
      const auto comp = static_cast<size_t>(varying[k]);
      v[comp] = (mask >> k) & 1U ? env[comp].hi : env[comp].lo;
    }
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::vector<Polynomial>> disturbance_vertices(const LearnedSystem& sys, DisturbanceMode mode) {
  const int n = sys.n();
  if (mode == DisturbanceMode::None) {
    std::vector<Polynomial> mean(static_cast<size_t>(n), Polynomial(n));
    for (int i = 0; i < n && i < static_cast<int>(sys.envelope.size()); ++i) {
      if (sys.learned.size() > static_cast<size_t>(i) && sys.learned[static_cast<size_t>(i)]) {
        mean[static_cast<size_t>(i)] = sys.envelope[static_cast<size_t>(i)].mean;
      }
    }
    return {mean};
  }
  std::vector<ConfidenceEnvelope> env(static_cast<size_t>(n), exact_envelope(Polynomial(n)));
  for (int i = 0; i < n && i < static_cast<int>(sys.envelope.size()); ++i) {
    if (sys.learned.size() > static_cast<size_t>(i) && sys.learned[static_cast<size_t>(i)]) {
      env[static_cast<size_t>(i)] = sys.envelope[static_cast<size_t>(i)];
    }
  }
  return envelope_vertices(env, n);
}

std::vector<Polynomial> closed_loop_field(const LearnedSystem& sys, const std::vector<Polynomial>& d,
                                          const std::vector<Polynomial>& u) {
  std::vector<Polynomial> f;
  for (int i = 0; i < sys.n(); ++i) {
    Polynomial fi = sys.P[static_cast<size_t>(i)] + d[static_cast<size_t>(i)];
    for (int j = 0; j < sys.m(); ++j) fi += sys.g[static_cast<size_t>(i)][static_cast<size_t>(j)] * u[static_cast<size_t>(j)];
    f.push_back(std::move(fi));
  }
  return f;
}

ClfResult initial_clf(const LearnedSystem& sys, bool always_lqr, double lqr_q) {
  const int n = sys.n();
  const int m = sys.m();
  const auto f = sys.nominal_drift();
  ClfResult r;
  r.A = Eigen::MatrixXd::Zero(n, n);
  r.B = Eigen::MatrixXd::Zero(n, m);
  Eigen::VectorXd f0(n);
  for (int i = 0; i < n; ++i) {
    f0(i) = f[static_cast<size_t>(i)].constant_term();
    for (int k = 0; k < n; ++k) r.A(i, k) = f[static_cast<size_t>(i)].coefficient(Monomial::variable(n, k));
    for (int j = 0; j < m; ++j) r.B(i, j) = sys.g[static_cast<size_t>(i)][static_cast<size_t>(j)].constant_term();
  }

  const Eigen::EigenSolver<Eigen::MatrixXd> eig(r.A);
  const Eigen::VectorXcd lambda = eig.eigenvalues();
  const bool hurwitz = (lambda.real().array() < 0).all();
  if (hurwitz && !always_lqr) {
    r.K = Eigen::MatrixXd::Zero(m, n);
  } else {
    // PBH test on the non-decaying modes.
    for (Eigen::Index k = 0; k < lambda.size(); ++k) {
      if (lambda(k).real() < 0) continue;
      Eigen::MatrixXcd pbh(n, n + m);
      pbh.leftCols(n) = r.A.cast<std::complex<double>>() - lambda(k) * Eigen::MatrixXcd::Identity(n, n);
      pbh.rightCols(m) = r.B.cast<std::complex<double>>();
      Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(pbh);
      qr.setThreshold(1e-9);
      if (qr.rank() < n) {
        throw std::runtime_error(fmt::format("initial_clf: linearization is not stabilizable (eigenvalue {:.6g}{:+.6g}i)",
                                             lambda(k).real(), lambda(k).imag()));
      }
    }
    // LQR with Q = lqr_q I, R = I from the stable invariant subspace of the Hamiltonian.
    Eigen::MatrixXd H(2 * n, 2 * n);
    H << r.A, -r.B * r.B.transpose(), -lqr_q * Eigen::MatrixXd::Identity(n, n), -r.A.transpose();
    const Eigen::ComplexEigenSolver<Eigen::MatrixXd> hs(H);
    Eigen::MatrixXcd U(2 * n, n);
    int cols = 0;
    for (Eigen::Index k = 0; k < 2 * n; ++k) {
      if (hs.eigenvalues()(k).real() < 0 && cols < n) U.col(cols++) = hs.eigenvectors().col(k);
    }
    if (cols != n) throw std::runtime_error("initial_clf: Riccati solve failed (Hamiltonian has imaginary-axis eigenvalues)");
    const Eigen::MatrixXcd X = U.bottomRows(n) * U.topRows(n).inverse();
    Eigen::MatrixXd Xr = X.real();
    Xr = 0.5 * (Xr + Xr.transpose());
    r.K = -r.B.transpose() * Xr;
  }
  const Eigen::MatrixXd Acl = r.A + r.B * r.K;
  if ((Eigen::EigenSolver<Eigen::MatrixXd>(Acl).eigenvalues().real().array() >= 0).any()) {
    throw std::runtime_error("initial_clf: could not find a stabilizing linear feedback");
  }
  // Acl^T P + P Acl = -I via the Kronecker form.
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(n * n, n * n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      kron.block(a * n, b * n, n, n) += Acl.transpose() * I(a, b) + I * Acl(b, a);
    }
  }
  const Eigen::VectorXd vecP = kron.partialPivLu().solve(-Eigen::Map<const Eigen::VectorXd>(I.data(), n * n));
  r.P = Eigen::Map<const Eigen::MatrixXd>(vecP.data(), n, n);
  r.P = 0.5 * (r.P + r.P.transpose());

  r.V = Polynomial(n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      r.V += Polynomial::variable(n, a) * Polynomial::variable(n, b) * r.P(a, b);
    }
  }
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(m);
  if (f0.norm() > 1e-6) {
    r.offset_warning = true;
    offset = -r.B.completeOrthogonalDecomposition().pseudoInverse() * f0;
    fmt::print(stderr, "warning: nominal drift at the origin is {:.3e}; adding a constant input offset\n", f0.norm());
  }
  for (int j = 0; j < m; ++j) {
    Polynomial uj(n, offset(j));
    for (int k = 0; k < n; ++k) uj += Polynomial::variable(n, k) * r.K(j, k);
    r.u.push_back(uj);
  }
  return r;
}

namespace {

struct Loop1Step {
  Solved solved;
  double value = 0.0;  // t for step 1, c for step 2
  std::vector<Polynomial> L;
  std::vector<Polynomial> n;
};

/// Step 1 (c fixed, L free, maximize t) or step 2 (L fixed, maximize c).
Loop1Step loop1_step(const Polynomial& V, const std::vector<std::vector<Polynomial>>& fields, double c,
                     const std::vector<Polynomial>* fixed_L, const std::vector<Polynomial>& unsafe,
                     const SynthesisConfig& cfg) {
  const int nv = V.nvars();
  SosProgram prog(nv);
  const Polynomial r2 = squared_norm(nv);
  const bool step2 = fixed_L != nullptr;
  PolyExpr cvar = step2 ? prog.new_nonneg_scalar("c") : PolyExpr(Polynomial(nv, c));
  PolyExpr t = step2 ? PolyExpr(Polynomial(nv, cfg.margin)) : prog.new_free_scalar("t");
  std::vector<DecisionPoly> Ls;
  for (size_t v = 0; v < fields.size(); ++v) {
    const Polynomial vdot = lie_derivative(V, fields[v]);
    const int ldeg = multiplier_degree(vdot.degree(), V.degree(), cfg.deg_mult);
    PolyExpr e = PolyExpr(-vdot) - t * PolyExpr(r2);
    if (step2) {
      e -= PolyExpr((*fixed_L)[v]) * cvar - PolyExpr((*fixed_L)[v] * V);
    } else {
      const DecisionPoly L = prog.declare_poly(fmt::format("L_v{}", v), ldeg, PolyKind::Sos, 2);
      e -= L.expr * PolyExpr(Polynomial(nv, c) - V);
      Ls.push_back(L);
    }
    add_ball_term(prog, e, even_ceil(std::max(vdot.degree(), ldeg + V.degree())), fmt::format("sball_v{}", v), cfg, nullptr);
    prog.add_sos_constraint(e, fmt::format("decrease_v{}", v));
  }
  std::vector<DecisionPoly> ns;
  for (size_t i = 0; i < unsafe.size(); ++i) {
    const DecisionPoly ni = prog.declare_poly(fmt::format("n{}", i + 1),
                                              multiplier_degree(V.degree(), unsafe[i].degree(), cfg.deg_mult), PolyKind::Sos);
    prog.add_sos_constraint(PolyExpr(V) - cvar + ni.expr * PolyExpr(unsafe[i]), fmt::format("unsafe{}", i + 1));
    ns.push_back(ni);
  }
  if (step2) {
    prog.add_nonnegative(LinearExpr(cfg.c_max) - scalar(cvar), "c_cap");
    prog.maximize(scalar(cvar));
  } else {
    prog.add_nonnegative(LinearExpr(1.0) - scalar(t), "t_cap");
    prog.maximize(scalar(t));
  }
  Loop1Step out;
  out.solved = solve_checked(prog, cfg);
  if (!out.solved.ok) return out;
  out.value = step2 ? out.solved.result.value(scalar(cvar)) : out.solved.result.value(scalar(t));
  if (step2) {
    out.L = *fixed_L;
  } else {
    for (const auto& L : Ls) out.L.push_back(out.solved.result.value(L.expr));
  }
  for (const auto& ni : ns) out.n.push_back(out.solved.result.value(ni.expr));
  return out;
}

}  // namespace

Loop1Result loop1_max_sublevel(const Polynomial& V, const LearnedSystem& sys, const std::vector<Polynomial>& u, double c0,
                               const std::vector<Polynomial>& unsafe, const SynthesisConfig& cfg) {
  Loop1Result r;
  std::vector<std::vector<Polynomial>> fields;
  for (const auto& d : disturbance_vertices(sys, cfg.disturbance_mode)) fields.push_back(closed_loop_field(sys, d, u));

  double c = std::min(c0, cfg.c_max);
  Loop1Step step;
  for (;;) {
    step = loop1_step(V, fields, c, nullptr, unsafe, cfg);
    const bool good = step.solved.ok && step.value >= cfg.margin * (1 - 1e-6);
    log(cfg, "  loop1 step1 c={:.6g} t={:.3e} [{}]", c, step.value, status_text(step.solved));
    if (good) break;
    if (++r.halvings > 20) {
      r.message = "loop1: no certifiable sublevel set after 20 halvings of c0";
      return r;
    }
    c *= 0.5;
  }
  r.ok = true;
  r.c = r.c_start = c;
  r.L = step.L;
  r.unsafe_multipliers = step.n;
  r.report = step.solved.report;
  r.c_history.push_back(c);
  for (int it = 0; it < cfg.loop1_max_iters; ++it) {
    const Loop1Step s2 = loop1_step(V, fields, c, &step.L, unsafe, cfg);
    log(cfg, "  loop1 step2 c={:.6g} [{}]", s2.value, status_text(s2.solved));
    if (!s2.solved.ok || s2.value <= c) break;
    const double gain = s2.value - c;
    c = s2.value;
    r.c = c;
    r.L = s2.L;
    r.unsafe_multipliers = s2.n;
    r.report = s2.solved.report;
    r.c_history.push_back(c);
    if (gain < cfg.tol_c * std::max(1.0, c) || c >= cfg.c_max * (1 - 1e-9)) break;
    step = loop1_step(V, fields, c, nullptr, unsafe, cfg);
    log(cfg, "  loop1 step1 c={:.6g} t={:.3e} [{}]", c, step.value, status_text(step.solved));
    if (!step.solved.ok) break;
  }
  return r;
}

ControllerResult theorem1_controller(const Polynomial& V, const Polynomial& B, const LearnedSystem& sys,
                                     const SynthesisConfig& cfg) {
  const int n = sys.n();
  SosProgram prog(n);
  const auto vertices = disturbance_vertices(sys, cfg.disturbance_mode);
  // Without drift at the origin the controller needs no constant term.
  bool origin_at_rest = true;
  for (const auto& d : vertices) {
    for (int i = 0; i < n; ++i) {
      const double f0 = sys.P[static_cast<size_t>(i)].constant_term() + d[static_cast<size_t>(i)].constant_term();
      if (std::abs(f0) > 1e-9) origin_at_rest = false;
    }
  }
  std::vector<DecisionPoly> u;
  std::vector<PolyExpr> uexpr;
  for (int j = 0; j < sys.m(); ++j) {
    u.push_back(prog.declare_poly(fmt::format("u{}", j + 1), cfg.deg_u, PolyKind::Free, origin_at_rest ? 1 : 0));
    uexpr.push_back(u.back().expr);
    if (cfg.u_bound > 0) {
      for (const auto& mono : u.back().basis) {
        const LinearExpr coef = u.back().expr.coefficient(mono);
        prog.add_nonnegative(LinearExpr(cfg.u_bound) - coef, fmt::format("u{}_upper", j + 1));
        prog.add_nonnegative(LinearExpr(cfg.u_bound) + coef, fmt::format("u{}_lower", j + 1));
      }
    }
  }
  const PolyExpr eps = prog.new_nonneg_scalar("eps");
  const Polynomial r2 = squared_norm(n);
  const int fdeg = field_degree(sys, vertices, cfg.deg_u);
  std::vector<DecisionPoly> s1;
  std::vector<DecisionPoly> s2;
  std::vector<DecisionPoly> sb;
  for (size_t v = 0; v < vertices.size(); ++v) {
    const auto F = field_expr(sys, vertices[v], uexpr);
    const int dv = V.degree() - 1 + fdeg;
    s1.push_back(prog.declare_poly(fmt::format("s1_v{}", v), multiplier_degree(dv, B.degree(), cfg.deg_mult), PolyKind::Sos, 2));
    PolyExpr dec = -lie_derivative(PolyExpr(V), F) - s1.back().expr * PolyExpr(B) - PolyExpr(cfg.margin * r2) +
                   PolyExpr(Polynomial(n, cfg.zeta));
    add_ball_term(prog, dec, even_ceil(std::max(dv, s1.back().basis.empty() ? 0 : 2 * s1.back().basis.back().degree() + B.degree())),
                  fmt::format("sball_v{}", v), cfg, &sb);
    prog.add_sos_constraint(dec, fmt::format("decrease_v{}", v));

    const int db = B.degree() - 1 + fdeg;
    s2.push_back(prog.declare_poly(fmt::format("s2_v{}", v), multiplier_degree(db, B.degree(), cfg.deg_mult), PolyKind::Sos));
    const PolyExpr inv = lie_derivative(PolyExpr(B), F) + PolyExpr(cfg.alpha * B) - s2.back().expr * PolyExpr(B) - eps;
    prog.add_sos_constraint(inv, fmt::format("invariance_v{}", v));
  }
  prog.add_nonnegative(LinearExpr(cfg.eps_cap) - scalar(eps), "eps_cap");
  prog.maximize(scalar(eps));

  ControllerResult r;
  r.size = prog.size();
  const Solved s = solve_checked(prog, cfg);
  r.status = s.result.status;
  r.report = s.report;
  r.ok = s.ok;
  if (!s.result.ok()) return r;
  for (const auto& uj : u) r.u.push_back(s.result.value(uj.expr));
  for (const auto& p : s1) r.s1.push_back(s.result.value(p.expr));
  for (const auto& p : s2) r.s2.push_back(s.result.value(p.expr));
  for (const auto& p : sb) r.s_ball.push_back(s.result.value(p.expr));
  r.epsilon = s.result.value(scalar(eps));
  return r;
}

double barrier_trace(const Polynomial& B) { return B.even_coefficient_sum(); }

std::optional<std::vector<Polynomial>> unsafe_multipliers(const Polynomial& B, const std::vector<Polynomial>& unsafe,
                                                          const SynthesisConfig& cfg) {
  if (unsafe.empty()) return std::vector<Polynomial>{};
  SosProgram prog(B.nvars());
  std::vector<DecisionPoly> ns;
  for (size_t i = 0; i < unsafe.size(); ++i) {
    ns.push_back(prog.declare_poly(fmt::format("n{}", i + 1), multiplier_degree(B.degree(), unsafe[i].degree(), cfg.deg_mult),
                                   PolyKind::Sos));
    prog.add_sos_constraint(PolyExpr(-B) + ns.back().expr * PolyExpr(unsafe[i]), fmt::format("unsafe{}", i + 1));
  }
  const Solved s = solve_checked(prog, cfg);
  if (!s.ok) return std::nullopt;
  std::vector<Polynomial> out;
  for (const auto& ni : ns) out.push_back(s.result.value(ni.expr));
  return out;
}

BarrierResult expand_barrier(const Polynomial& V, const Polynomial& B_prev, const ControllerResult& ctrl,
                             const LearnedSystem& sys, const std::vector<Polynomial>& unsafe, const SynthesisConfig& cfg) {
  const int n = sys.n();
  SosProgram prog(n);
  const auto vertices = disturbance_vertices(sys, cfg.disturbance_mode);
  const DecisionPoly B = prog.declare_poly("B", cfg.deg_B, PolyKind::Free);
  const Polynomial r2 = squared_norm(n);
  for (size_t v = 0; v < vertices.size(); ++v) {
    const auto F = closed_loop_field(sys, vertices[v], ctrl.u);
    PolyExpr dec = PolyExpr(-lie_derivative(V, F) - cfg.margin * r2 + cfg.zeta) - PolyExpr(ctrl.s1[v]) * B.expr;
    if (cfg.ball_radius > 0) dec -= PolyExpr(ctrl.s_ball[v] * (r2 - cfg.ball_radius * cfg.ball_radius));
    prog.add_sos_constraint(dec, fmt::format("decrease_v{}", v));
    const PolyExpr inv = lie_derivative(B.expr, as_exprs(F)) + PolyExpr(Polynomial(n, cfg.alpha) - ctrl.s2[v]) * B.expr;
    prog.add_sos_constraint(inv, fmt::format("invariance_v{}", v));
  }
  std::vector<DecisionPoly> ns;
  for (size_t i = 0; i < unsafe.size(); ++i) {
    ns.push_back(prog.declare_poly(fmt::format("n{}", i + 1), multiplier_degree(cfg.deg_B, unsafe[i].degree(), cfg.deg_mult),
                                   PolyKind::Sos));
    prog.add_sos_constraint(-B.expr + ns.back().expr * PolyExpr(unsafe[i]), fmt::format("unsafe{}", i + 1));
  }
  prog.add_equality(scalar(B.expr) - LinearExpr(B_prev.constant_term()), "pin_B0");
  if (cfg.barrier_containment_active) {
    // B - s B_prev in SOS with s in SOS keeps {B_prev >= 0} inside {B >= 0}.
    const DecisionPoly sc =
        prog.declare_poly("s_contain", multiplier_degree(cfg.deg_B, B_prev.degree(), cfg.deg_mult), PolyKind::Sos);
    prog.add_sos_constraint(B.expr - sc.expr * PolyExpr(B_prev), "contains_previous");
  }
  prog.maximize(B.expr.even_coefficient_sum());

  BarrierResult r;
  r.size = prog.size();
  const Solved s = solve_checked(prog, cfg);
  r.status = s.result.status;
  r.report = s.report;
  if (!s.ok) {
    r.stalled = true;
    r.B = B_prev;
    r.trace = barrier_trace(B_prev);
    return r;
  }
  r.B = s.result.value(B.expr);
  r.trace = barrier_trace(r.B);
  for (const auto& ni : ns) r.unsafe_multipliers.push_back(s.result.value(ni.expr));
  return r;
}

Loop2Result loop2_alternate(const Polynomial& V, const Polynomial& B0, const LearnedSystem& sys,
                            const std::vector<Polynomial>& unsafe, const SynthesisConfig& cfg) {
  Loop2Result r;
  r.B = B0;
  r.controller = theorem1_controller(V, B0, sys, cfg);
  log(cfg, "  loop2 controller eps={:.4g} [{}]", r.controller.epsilon, to_string(r.controller.status));
  if (!r.controller.ok) {
    r.message = fmt::format("controller step failed ({})", to_string(r.controller.status));
    return r;
  }
  const auto n0 = unsafe_multipliers(B0, unsafe, cfg);
  if (!n0) {
    r.message = "initial barrier does not exclude the unsafe sets";
    return r;
  }
  r.ok = true;
  r.unsafe_multipliers = *n0;
  r.u = r.controller.u;
  r.trace_history.push_back(barrier_trace(B0));
  r.eps_history.push_back(r.controller.epsilon);
  for (int it = 0; it < cfg.loop2_max_iters; ++it) {
    ++r.iterations;
    const BarrierResult bar = expand_barrier(V, r.B, r.controller, sys, unsafe, cfg);
    log(cfg, "  loop2 barrier trace={:.6g} [{}]", bar.trace, to_string(bar.status));
    if (bar.stalled) {
      r.stalled = true;
      break;
    }
    const ControllerResult ctrl = theorem1_controller(V, bar.B, sys, cfg);
    log(cfg, "  loop2 controller eps={:.4g} [{}]", ctrl.epsilon, to_string(ctrl.status));
    if (!ctrl.ok) {
      r.stalled = true;
      break;
    }
    const double previous = r.trace_history.back();
    r.B = bar.B;
    r.unsafe_multipliers = bar.unsafe_multipliers;
    r.controller = ctrl;
    r.u = ctrl.u;
    r.trace_history.push_back(bar.trace);
    r.eps_history.push_back(ctrl.epsilon);
    if (bar.trace - previous < cfg.tol_trace * std::max(1.0, std::abs(previous))) break;
  }
  return r;
}

Loop3Result loop3_optimal_V(const Polynomial& V_prev, const Polynomial& B, const std::vector<Polynomial>& u,
                            const LearnedSystem& sys, const SynthesisConfig& cfg, std::optional<double> normalization) {
  const int n = sys.n();
  SosProgram prog(n);
  const auto vertices = disturbance_vertices(sys, cfg.disturbance_mode);
  const DecisionPoly V = prog.declare_poly("V", cfg.deg_V, PolyKind::Free, 2);
  const PolyExpr eps = prog.new_free_scalar("eps_V");
  const Polynomial r2 = squared_norm(n);
  const DecisionPoly L1 =
      prog.declare_poly("L_V1", multiplier_degree(cfg.deg_V, B.degree(), cfg.deg_mult), PolyKind::Sos, 2);
  prog.add_sos_constraint(V.expr - L1.expr * PolyExpr(B), "V_nonneg_on_B");
  prog.add_sos_constraint(V.expr - PolyExpr(cfg.pd_margin * r2), "V_positive");
  for (size_t v = 0; v < vertices.size(); ++v) {
    const auto F = closed_loop_field(sys, vertices[v], u);
    int fdeg = 1;
    for (const auto& fi : F) fdeg = std::max(fdeg, fi.degree());
    const int dv = cfg.deg_V - 1 + fdeg;
    const DecisionPoly L2 =
        prog.declare_poly(fmt::format("L_V2_v{}", v), multiplier_degree(dv, B.degree(), cfg.deg_mult), PolyKind::Sos, 2);
    PolyExpr dec = -lie_derivative(V.expr, as_exprs(F)) - L2.expr * PolyExpr(B) - eps * PolyExpr(r2);
    add_ball_term(prog, dec, even_ceil(std::max(dv, 2 * L2.basis.back().degree() + B.degree())), fmt::format("sball_v{}", v),
                  cfg, nullptr);
    prog.add_sos_constraint(dec, fmt::format("decrease_v{}", v));
  }
  const double norm = normalization.value_or(V_prev.even_coefficient_sum());
  prog.add_equality(V.expr.even_coefficient_sum() - LinearExpr(norm), "normalization");
  prog.maximize(scalar(eps));

  Loop3Result r;
  r.size = prog.size();
  const Solved s = solve_checked(prog, cfg);
  r.status = s.result.status;
  r.report = s.report;
  if (!s.ok) {
    r.stalled = true;
    r.V = V_prev;
    return r;
  }
  r.eps_V = s.result.value(scalar(eps));
  if (r.eps_V < cfg.margin) {
    r.stalled = true;
    r.V = V_prev;
    return r;
  }
  r.V = s.result.value(V.expr);
  return r;
}

namespace {

void record(Certificate& cert, int outer, const std::string& loop, double objective, const std::string& status) {
  cert.history.push_back({outer, loop, objective, status});
}

struct Candidate {
  Polynomial V;
  Polynomial B;
  double c = 0.0;
  Loop2Result loop2;
  double measure = -1.0;
};

void adopt(Certificate& cert, const Candidate& cand, const std::vector<std::vector<Polynomial>>& vertices) {
  cert.V = cand.V;
  cert.B = cand.B;
  cert.c = cand.c;
  cert.u = cand.loop2.u;
  cert.epsilon = cand.loop2.controller.epsilon;
  cert.trace = barrier_trace(cand.B);
  cert.multipliers.clear();
  const auto& ctrl = cand.loop2.controller;
  for (size_t v = 0; v < vertices.size(); ++v) {
    cert.multipliers[fmt::format("s1_v{}", v)] = ctrl.s1[v];
    cert.multipliers[fmt::format("s2_v{}", v)] = ctrl.s2[v];
    if (v < ctrl.s_ball.size()) cert.multipliers[fmt::format("sball_v{}", v)] = ctrl.s_ball[v];
  }
  for (size_t i = 0; i < cand.loop2.unsafe_multipliers.size(); ++i) {
    cert.multipliers[fmt::format("n{}", i + 1)] = cand.loop2.unsafe_multipliers[i];
  }
}

}  // namespace

std::vector<Polynomial> exclusion_sets(const std::vector<Polynomial>& unsafe, const SynthesisConfig& cfg) {
  std::vector<Polynomial> out = unsafe;
  if (!cfg.domain) return out;
  const int n = cfg.domain->dim();
  for (int i = 0; i < n; ++i) {
    const Polynomial xi = Polynomial::variable(n, i);
    out.push_back((xi - cfg.domain->lo[static_cast<size_t>(i)]) * (cfg.domain->hi[static_cast<size_t>(i)] - xi));
  }
  return out;
}

Certificate run_pipeline(const LearnedSystem& sys, const SynthesisConfig& cfg, const std::vector<Polynomial>& unsafe) {
  cfg.validate(sys.n());
  Certificate cert;
  cert.n = sys.n();
  cert.m = sys.m();
  cert.P = sys.P;
  cert.g = sys.g;
  cert.unsafe = unsafe;
  const std::vector<Polynomial> excluded = exclusion_sets(unsafe, cfg);
  cert.vertices = disturbance_vertices(sys, cfg.disturbance_mode);
  cert.config = synthesis_config_to_json(cfg);

  ClfResult clf;
  try {
    clf = initial_clf(sys, cfg.initial_feedback_lqr, cfg.lqr_q);
  } catch (const std::exception& e) {
    cert.failure_stage = "initial_clf";
    fmt::print(stderr, "initial_clf: {}\n", e.what());
    return cert;
  }
  Polynomial V = clf.V;
  std::vector<Polynomial> u = clf.u;
  cert.V = V;
  cert.u = u;
  cert.initial_V = V;
  double c0 = cfg.c0;
  std::optional<Candidate> best;
  double previous_trace = std::numeric_limits<double>::quiet_NaN();
  std::optional<Polynomial> previous_B;

  for (int outer = 0; outer < cfg.outer_max_iters; ++outer) {
    cert.outer_iterations = outer + 1;
    log(cfg, "outer iteration {}", outer + 1);
    const Loop1Result l1 = loop1_max_sublevel(V, sys, u, c0, excluded, cfg);
    for (double c : l1.c_history) record(cert, outer + 1, "loop1", c, "ok");
    if (!l1.ok) record(cert, outer + 1, "loop1", 0.0, "failed");
    if (!l1.ok && !previous_B) {
      if (!best) cert.failure_stage = "loop1";
      break;
    }
    if (outer == 0) cert.initial_c = l1.c;

    Candidate cand;
    cand.V = V;
    double c = l1.ok ? l1.c : 0.0;
    bool found = false;
    // After Loop 3 the new V decreases on the previous barrier set, so
    // Loop 2 restarts from that barrier.
    if (previous_B) {
      SynthesisConfig warm = cfg;
      warm.barrier_containment_active = cfg.barrier_containment;
      cand.loop2 = loop2_alternate(V, *previous_B, sys, excluded, warm);
      found = cand.loop2.ok;
      if (!found) record(cert, outer + 1, "theorem1", 0.0, "retry");
    }
    for (int retry = 0; retry <= 10 && !found && l1.ok; ++retry) {
      cand.loop2 = loop2_alternate(V, c - V, sys, excluded, cfg);
      if (cand.loop2.ok) {
        found = true;
        break;
      }
      record(cert, outer + 1, "theorem1", c, "retry");
      c *= 0.9;
    }
    if (!found) {
      record(cert, outer + 1, "loop2", 0.0, "failed");
      if (!best) cert.failure_stage = "theorem1";
      break;
    }
    for (size_t k = 0; k < cand.loop2.trace_history.size(); ++k) {
      record(cert, outer + 1, "loop2", cand.loop2.trace_history[k], k == 0 ? "initial" : "ok");
    }
    cand.B = cand.loop2.B;
    cand.c = c;
    cand.measure = estimate_measure(superlevel(cand.B), cfg.box, cfg.measure_samples, cfg.seed).estimate;
    record(cert, outer + 1, "measure", cand.measure, "ok");
    log(cfg, "  region measure {:.4g}", cand.measure);
    if (outer == 0) cert.barrier_before_loop3 = cand.B;
    if (!best || cand.measure > best->measure) best = cand;

    const double trace = barrier_trace(cand.B);
    const bool converged =
        !std::isnan(previous_trace) && trace - previous_trace < cfg.tol_trace * std::max(1.0, std::abs(previous_trace));
    previous_trace = trace;
    if (converged || outer + 1 == cfg.outer_max_iters) break;

    const Loop3Result l3 = loop3_optimal_V(V, cand.B, cand.loop2.u, sys, cfg);
    record(cert, outer + 1, "loop3", l3.eps_V, l3.stalled ? "stalled" : "ok");
    log(cfg, "  loop3 eps_V={:.4g} [{}]", l3.eps_V, to_string(l3.status));
    if (l3.stalled) break;
    previous_B = cand.B;
    V = l3.V;
    u = cand.loop2.u;
    c0 = std::max(cfg.c0, c);
  }
  if (best) {
    adopt(cert, *best, cert.vertices);
    cert.verification = verify_certificate(cert, cfg);
    if (!cert.verification.passed() && cert.failure_stage.empty()) cert.failure_stage = "verification";
  }
  return cert;
}

std::vector<PlannedProgram> plan_programs(const LearnedSystem& sys, const SynthesisConfig& cfg,
                                          const std::vector<Polynomial>& unsafe) {
  cfg.validate(sys.n());
  const int n = sys.n();
  std::vector<ProgramSize> sizes;
  SynthesisConfig dry = cfg;
  dry.verbose = false;
  dry.dry_run_sizes = &sizes;
  const Polynomial V = squared_norm(n);
  Polynomial B(n, 1.0);
  for (int i = 0; i < n; ++i) B.add_term(Monomial::variable(n, i, cfg.deg_B), -1.0);
  std::vector<Polynomial> u;
  for (int j = 0; j < sys.m(); ++j) {
    Polynomial uj(n);
    for (const auto& mono : monomial_basis(n, cfg.deg_u, 1)) uj.add_term(mono, 1.0);
    u.push_back(uj);
  }
  std::vector<PlannedProgram> out;
  auto take = [&](const std::string& name) {
    if (!sizes.empty()) out.push_back({name, sizes.front()});
    sizes.clear();
  };
  dry.loop1_max_iters = 1;
  const std::vector<Polynomial> excluded = exclusion_sets(unsafe, cfg);
  loop1_max_sublevel(V, sys, u, cfg.c0, excluded, dry);
  take("loop1");
  theorem1_controller(V, B, sys, dry);
  take("theorem1");
  ControllerResult ctrl;
  const size_t nv = disturbance_vertices(sys, cfg.disturbance_mode).size();
  ctrl.u = u;
  ctrl.s1.assign(nv, Polynomial(n));
  ctrl.s2.assign(nv, Polynomial(n));
  ctrl.s_ball.assign(nv, Polynomial(n));
  expand_barrier(V, B, ctrl, sys, excluded, dry);
  take("barrier");
  loop3_optimal_V(V, B, u, sys, dry);
  take("loop3");
  return out;
}

VerificationReport verify_certificate(const Certificate& cert, const SynthesisConfig& cfg) {
  const int n = cert.n;
  LearnedSystem sys;
  sys.P = cert.P;
  sys.g = cert.g;
  SosProgram prog(n);
  const Polynomial r2 = squared_norm(n);
  const PolyExpr eps = prog.new_nonneg_scalar("eps");
  for (size_t v = 0; v < cert.vertices.size(); ++v) {
    const auto F = closed_loop_field(sys, cert.vertices[v], cert.u);
    const Polynomial vdot = lie_derivative(cert.V, F);
    const DecisionPoly s1 = prog.declare_poly(fmt::format("s1_v{}", v),
                                              multiplier_degree(vdot.degree(), cert.B.degree(), cfg.deg_mult), PolyKind::Sos, 2);
    PolyExpr dec = PolyExpr(-vdot - 0.5 * cfg.margin * r2 + cfg.zeta) - s1.expr * PolyExpr(cert.B);
    add_ball_term(prog, dec, even_ceil(std::max(vdot.degree(), 2 * s1.basis.back().degree() + cert.B.degree())),
                  fmt::format("sball_v{}", v), cfg, nullptr);
    prog.add_sos_constraint(dec, fmt::format("decrease_v{}", v));
    const Polynomial bdot = lie_derivative(cert.B, F);
    const DecisionPoly s2 = prog.declare_poly(fmt::format("s2_v{}", v),
                                              multiplier_degree(bdot.degree(), cert.B.degree(), cfg.deg_mult), PolyKind::Sos);
    prog.add_sos_constraint(PolyExpr(bdot + cfg.alpha * cert.B) - s2.expr * PolyExpr(cert.B) - eps,
                            fmt::format("invariance_v{}", v));
  }
  const std::vector<Polynomial> excluded = exclusion_sets(cert.unsafe, cfg);
  for (size_t i = 0; i < excluded.size(); ++i) {
    const DecisionPoly ni = prog.declare_poly(
        fmt::format("n{}", i + 1), multiplier_degree(cert.B.degree(), excluded[i].degree(), cfg.deg_mult), PolyKind::Sos);
    const std::string name =
        i < cert.unsafe.size() ? fmt::format("unsafe{}", i + 1) : fmt::format("domain{}", i - cert.unsafe.size() + 1);
    prog.add_sos_constraint(PolyExpr(-cert.B) + ni.expr * PolyExpr(excluded[i]), name);
  }
  prog.add_sos_constraint(PolyExpr(cert.V - 1e-8 * r2), "V_positive");
  prog.add_nonnegative(LinearExpr(cfg.eps_cap) - scalar(eps), "eps_cap");
  prog.maximize(scalar(eps));
  const Solved s = solve_checked(prog, cfg);
  VerificationReport report = s.report;
  if (!s.result.ok()) report.checks.push_back({fmt::format("solve: {}", to_string(s.result.status)), 0.0, 0.0, false});
  const bool positive_origin = cert.B.constant_term() > 0;
  report.checks.push_back({"B(0) > 0", cert.B.constant_term(), 0.0, positive_origin});
  return report;
}

Json certificate_to_json(const Certificate& cert) {
  Json j;
  j["version"] = kVersion;
  j["n"] = cert.n;
  j["m"] = cert.m;
  j["V"] = polynomial_to_json(cert.V);
  j["B"] = polynomial_to_json(cert.B);
  Json u = Json::array();
  for (const auto& p : cert.u) u.push_back(polynomial_to_json(p));
  j["u"] = u;
  j["c"] = cert.c;
  j["epsilon"] = cert.epsilon;
  j["trace_Q"] = cert.trace;
  Json mult = Json::object();
  for (const auto& [name, p] : cert.multipliers) mult[name] = polynomial_to_json(p);
  j["multipliers"] = mult;
  Json hist = Json::array();
  for (const auto& h : cert.history) {
    hist.push_back({{"outer_iter", h.outer_iter}, {"loop", h.loop}, {"objective", h.objective}, {"status", h.status}});
  }
  j["history"] = hist;
  Json checks = Json::array();
  for (const auto& c : cert.verification.checks) {
    checks.push_back({{"name", c.name}, {"min_eigenvalue", c.min_eigenvalue}, {"residual", c.residual}, {"passed", c.passed}});
  }
  j["verification"] = {{"passed", cert.verification.passed()}, {"checks", checks}};
  j["failure_stage"] = cert.failure_stage;
  j["initial"] = {{"V", polynomial_to_json(cert.initial_V)}, {"c", cert.initial_c}};
  j["barrier_before_loop3"] = polynomial_to_json(cert.barrier_before_loop3);
  j["outer_iterations"] = cert.outer_iterations;
  Json P = Json::array();
  for (const auto& p : cert.P) P.push_back(polynomial_to_json(p));
  j["P"] = P;
  Json g = Json::array();
  for (const auto& row : cert.g) {
    Json r = Json::array();
    for (const auto& p : row) r.push_back(polynomial_to_json(p));
    g.push_back(r);
  }
  j["g"] = g;
  Json verts = Json::array();
  for (const auto& v : cert.vertices) {
    Json r = Json::array();
    for (const auto& p : v) r.push_back(polynomial_to_json(p));
    verts.push_back(r);
  }
  j["vertices"] = verts;
  Json unsafe = Json::array();
  for (const auto& p : cert.unsafe) unsafe.push_back(polynomial_to_json(p));
  j["unsafe"] = unsafe;
  j["config"] = cert.config;
  return j;
}

Certificate certificate_from_json(const Json& j) {
  const std::string path = "certificate";
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  Certificate c;
  c.n = get_int(j, "n", path);
  c.m = get_int(j, "m", path);
  const int n = c.n;
  auto poly = [&](const Json& v, const std::string& p) { return polynomial_from_json(v, n, p); };
  auto poly_list = [&](const char* key) {
    std::vector<Polynomial> out;
    if (!j.contains(key)) throw ConfigError(join_path(path, key), "missing required key");
    const Json& a = j.at(key);
    for (size_t i = 0; i < a.size(); ++i) out.push_back(poly(a[i], fmt::format("{}.{}[{}]", path, key, i)));
    return out;
  };
  auto poly_matrix = [&](const char* key) {
    std::vector<std::vector<Polynomial>> out;
    if (!j.contains(key)) throw ConfigError(join_path(path, key), "missing required key");
    const Json& a = j.at(key);
    for (size_t i = 0; i < a.size(); ++i) {
      out.emplace_back();
      for (size_t k = 0; k < a[i].size(); ++k) out.back().push_back(poly(a[i][k], fmt::format("{}.{}[{}][{}]", path, key, i, k)));
    }
    return out;
  };
  c.V = poly(j.at("V"), path + ".V");
  c.B = poly(j.at("B"), path + ".B");
  c.u = poly_list("u");
  c.c = get_number(j, "c", path);
  c.epsilon = get_number(j, "epsilon", path);
  c.trace = get_number(j, "trace_Q", path);
  if (j.contains("multipliers")) {
    for (const auto& [name, p] : j.at("multipliers").items()) c.multipliers[name] = poly(p, path + ".multipliers." + name);
  }
  if (j.contains("history")) {
    for (const auto& h : j.at("history")) {
      c.history.push_back({h.at("outer_iter").get<int>(), h.at("loop").get<std::string>(), h.at("objective").get<double>(),
                           h.at("status").get<std::string>()});
    }
  }
  if (j.contains("verification")) {
    for (const auto& ch : j.at("verification").at("checks")) {
      c.verification.checks.push_back({ch.at("name").get<std::string>(), ch.at("min_eigenvalue").get<double>(),
                                       ch.at("residual").get<double>(), ch.at("passed").get<bool>()});
    }
  }
  c.failure_stage = get_string(j, "failure_stage", path, "");
  if (j.contains("initial")) {
    c.initial_V = poly(j.at("initial").at("V"), path + ".initial.V");
    c.initial_c = j.at("initial").at("c").get<double>();
  }
  if (j.contains("barrier_before_loop3")) c.barrier_before_loop3 = poly(j.at("barrier_before_loop3"), path + ".barrier_before_loop3");
  c.outer_iterations = get_int(j, "outer_iterations", path, 0);
  c.P = poly_list("P");
  c.g = poly_matrix("g");
  c.vertices = poly_matrix("vertices");
  c.unsafe = poly_list("unsafe");
  if (j.contains("config")) c.config = j.at("config");
  return c;
}

}  // namespace saferoa
