// Runs the seven acceptance checks and prints one PASS/FAIL line for each.
// Usage: acceptance [output-dir]

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "saferoa/approx.hpp"
#include "saferoa/pipeline.hpp"
#include "saferoa/sos.hpp"

namespace {

using namespace saferoa;
using Clock = std::chrono::steady_clock;

struct Line {
  bool pass = false;
  std::string detail;
};

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Line chebyshev_bound() {
  const auto t0 = Clock::now();
  struct Case {
    const char* name;
    ScalarFunction f;
    double c_m;
  };
  // Sup of |f| on the Bernstein ellipse with rho = 2 (semi-axes 1.25, 0.75).
  const std::vector<Case> cases{{"exp", [](double x) { return std::exp(x); }, std::exp(1.25)},
                                {"sin", [](double x) { return std::sin(x); }, std::cosh(0.75)}};
  const double rho = 2.0;
  double worst_ratio = 0.0;
  for (const auto& c : cases) {
    for (int k = 4; k <= 12; ++k) {
      const auto interp = fit_interpolant(c.f, k, -1.0, 1.0);
      const double err = sup_error(c.f, interp, 10000);
      worst_ratio = std::max(worst_ratio, err / remainder_bound(c.c_m, rho, k));
    }
  }
  const double t = seconds(t0);
  return {worst_ratio <= 1.0 && t < 1.0, fmt::format("max error/bound {:.3g}, {:.3f} s", worst_ratio, t)};
}

Polynomial motzkin() {
  const Polynomial x = Polynomial::variable(2, 0);
  const Polynomial y = Polynomial::variable(2, 1);
  return x * x * x * x * y * y + x * x * y * y * y * y - 3.0 * x * x * y * y + 1.0;
}

Line sos_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  int accepted = 0;
  double min_eig = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 3;
    const int half = 1 + trial % 2;
    const auto basis = monomial_basis(n, half);
    const auto k = static_cast<Eigen::Index>(basis.size());
    const Eigen::MatrixXd r = Eigen::MatrixXd::NullaryExpr(k, k, [&] { return g(rng); });
    const Polynomial p = GramRepresentation{basis, r * r.transpose()}.expand();
    SosProgram prog(n);
    prog.add_sos_constraint(p, "zQz");
    const SolveResult res = prog.solve();
    if (res.status != SolveStatus::Optimal) continue;
    const VerificationReport rep = prog.verify(res, 1e-7);
    if (!rep.passed()) continue;
    for (const auto& e : rep.checks) min_eig = std::min(min_eig, e.min_eigenvalue);
    ++accepted;
  }
  SosProgram mz(2);
  mz.add_sos_constraint(motzkin(), "motzkin");
  const SolveStatus ms = mz.solve().status;
  const double t = seconds(t0);
  return {accepted == 20 && ms == SolveStatus::Infeasible && t < 30.0,
          fmt::format("{}/20 Gram polynomials verified (min eig {:.2e}), Motzkin {}, {:.1f} s", accepted, min_eig, to_string(ms),
                      t)};
}

bool non_decreasing(const std::vector<double>& v, double tol) {
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1] - tol) return false;
  }
  return true;
}

Line monotonicity(const RunResult& r, const RunConfig& cfg, double runtime) {
  const Certificate& cert = r.certificate;
  bool ok = true;
  int sequences = 0;
  for (int outer = 1; outer <= cert.outer_iterations; ++outer) {
    std::vector<double> c;
    std::vector<double> trace;
    for (const auto& h : cert.history) {
      if (h.outer_iter != outer) continue;
      if (h.loop == "loop1" && h.status == "ok") c.push_back(h.objective);
      if (h.loop == "loop2") trace.push_back(h.objective);
    }
    ok = ok && non_decreasing(c, 1e-6) && non_decreasing(trace, 1e-6);
    sequences += 2;
  }
  const bool capped = cert.outer_iterations <= cfg.synthesis.outer_max_iters;
  return {ok && capped && runtime < 600.0,
          fmt::format("{} sequences monotone: {}, outer iterations {}/{}, {:.1f} s", sequences, ok ? "yes" : "no",
                      cert.outer_iterations, cfg.synthesis.outer_max_iters, runtime)};
}

double number(const Json& j, const char* a, const char* b) {
  if (!j.contains(a) || !j.at(a).contains(b) || !j.at(a).at(b).is_number()) return std::nan("");
  return j.at(a).at(b).get<double>();
}

Line end_to_end(const RunResult& r, bool loop3_check, double runtime, double limit) {
  const Json& rep = r.report;
  if (!rep.contains("regions") || !rep.contains("monte_carlo")) {
    return {false, fmt::format("no certificate (failed stage '{}')", r.failed_stage)};
  }
  const double violations = number(rep, "regions", "exclusion_violations");
  const double samples = number(rep, "regions", "exclusion_samples");
  const double ratio = number(rep, "regions", "ratio_final_over_initial");
  const double ratio_se = number(rep, "regions", "ratio_se");
  const double converged = number(rep, "monte_carlo", "fraction_converged");
  const double safe = number(rep, "monte_carlo", "fraction_safe");
  const double trajectories = number(rep, "monte_carlo", "n_samples");
  const bool a = violations == 0 && samples >= 1e5;
  const bool b = ratio - 3 * ratio_se > 1.0;
  const bool c = converged == 1.0 && safe == 1.0 && trajectories >= 1000;
  bool d = true;
  std::string extra;
  if (loop3_check) {
    const double l3 = number(rep, "regions", "ratio_final_over_before_loop3");
    const double l3_se = number(rep, "regions", "ratio_before_loop3_se");
    d = l3 - 3 * l3_se > 1.0;
    extra = fmt::format(", B*/B {:.3f} +- {:.3f}", l3, l3_se);
  }
  const bool verified = r.verified;
  return {a && b && c && d && verified && runtime < limit,
          fmt::format("(a) {} of {:.0f} samples unsafe; (b) area ratio {:.2f} +- {:.2f}; (c) {:.0f} trajectories, "
                      "converged {:.3f}, safe {:.3f}{}; SOS re-check {}; {:.1f} s",
                      violations, samples, ratio, ratio_se, trajectories, converged, safe, extra, verified ? "pass" : "fail",
                      runtime)};
}

Line learning_sanity() {
  // Known drift -x1 - x2 in the second component plus a polynomial disturbance.
  Json sj = {{"n", 2},
             {"m", 1},
             {"f", {"x2", "-x1 - x2 + 0.5*x1^2 - 0.2*x1*x2^2"}},
             {"g", Json::array({Json::array({"0"}), Json::array({"1"})})},
             {"sigma_n", 0.01}};
  const ControlAffineSystem sys = system_from_json(sj);
  const std::vector<Polynomial> zero{Polynomial(2)};
  const Polynomial x1 = Polynomial::variable(2, 0);
  const Polynomial x2 = Polynomial::variable(2, 1);
  const std::vector<Polynomial> P{x2, -1.0 * x1 - x2};
  auto targets = [&](const TrajectoryDataset& d) { return learning_targets(d, P, sys.g, 1); };

  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  for (const auto& [x0, seed] : std::vector<std::pair<std::vector<double>, int>>{{{1.5, 0.0}, 11}, {{-1.0, 1.5}, 12}}) {
    const TrajectoryDataset d = generate_measurements(sys, x0, 15.0, 0.1, zero, seed);
    const Eigen::VectorXd t = targets(d);
    const Eigen::Index old = X.rows();
    X.conservativeResize(old + d.x.rows(), 2);
    y.conservativeResize(old + t.size());
    X.bottomRows(d.x.rows()) = d.x;
    y.tail(t.size()) = t;
  }
  KernelConfig base;
  base.sigma_f = 1.0;
  base.lengthscales = {1.0};
  base.sigma_n = 0.01;
  const KernelConfig k = grid_search_hyperparameters(X, y, base, {0.3, 1.0, 3.0}, {0.3, 0.6, 1.0, 2.0});
  const GPModel model = gp_fit(X, y, k);
  Box region;
  region.lo = {X.col(0).minCoeff(), X.col(1).minCoeff()};
  region.hi = {X.col(0).maxCoeff(), X.col(1).maxCoeff()};
  const PolynomialFit mean = fit_polynomial_mean(model, 4, region, 41);

  const TrajectoryDataset v = generate_measurements(sys, {1.2, 0.8}, 15.0, 0.1, zero, 13);
  const Eigen::VectorXd yv = targets(v);
  double se_gp = 0.0;
  double se_poly = 0.0;
  for (Eigen::Index i = 0; i < v.x.rows(); ++i) {
    const std::vector<double> x{v.x(i, 0), v.x(i, 1)};
    se_gp += std::pow(model.posterior(x).mean - yv(i), 2);
    se_poly += std::pow(mean.poly(x) - yv(i), 2);
  }
  const double n = static_cast<double>(v.x.rows());
  const double rmse_gp = std::sqrt(se_gp / n);
  const double rmse_poly = std::sqrt(se_poly / n);
  return {rmse_poly <= 5.0 * rmse_gp, fmt::format("RMSE polynomial mean {:.3e}, GP {:.3e}, ratio {:.2f} (limit 5)", rmse_poly,
                                                  rmse_gp, rmse_poly / rmse_gp)};
}

Line soundness(const std::vector<std::pair<std::string, const RunResult*>>& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& [name, r] : runs) {
    const Json& rep = r->report;
    const double cert_max = number(rep, "soundness", "max_vdot_certificate_vertices");
    const double env_max = number(rep, "soundness", "max_vdot_envelope_vertices");
    const double samples = number(rep, "soundness", "samples");
    const double hits = number(rep, "soundness", "unsafe_hits");
    const bool pass = cert_max <= 1e-6 && env_max <= 1e-6 && samples >= 1e4 && hits == 0;
    ok = ok && pass;
    detail += fmt::format("{}{}: max Vdot {:.2e} over {:.0f} samples, {:.0f} unsafe", detail.empty() ? "" : "; ", name,
                          std::max(cert_max, env_max), samples, hits);
  }
  return {ok, detail};
}

void print(int id, const Line& l) { fmt::print("criterion {}: {} ({})\n", id, l.pass ? "PASS" : "FAIL", l.detail); }

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "acceptance_out";
  bool all = true;
  auto report = [&](int id, const Line& l) {
    print(id, l);
    std::fflush(stdout);
    all = all && l.pass;
  };
  report(1, chebyshev_bound());
  report(2, sos_oracle());

  const RunConfig cfg1 = run_config_from_json(demo_config("example1"));
  auto t0 = Clock::now();
  const RunResult r1 = execute_run(cfg1);
  const double t1 = seconds(t0);
  write_run_outputs(r1, (out / "example1").string());
  report(3, monotonicity(r1, cfg1, t1));
  report(4, end_to_end(r1, false, t1, 600.0));

  const RunConfig cfg2 = run_config_from_json(demo_config("example2"));
  t0 = Clock::now();
  const RunResult r2 = execute_run(cfg2);
  const double t2 = seconds(t0);
  write_run_outputs(r2, (out / "example2").string());
  report(5, end_to_end(r2, true, t2, 1800.0));

  report(6, learning_sanity());
  report(7, soundness({{"example1", &r1}, {"example2", &r2}}));
  fmt::print("{}\n", all ? "all criteria passed" : "some criteria failed");
  return all ? 0 : 1;
}
