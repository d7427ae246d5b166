#include "saferoa/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace saferoa {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<size_t>(v.size())}; }

Box get_box(const Json& j, const char* key, const std::string& path, int n) {
  const std::string p = join_path(path, key);
  if (!j.contains(key)) throw ConfigError(p, "missing required key");
  check_object(j.at(key), p, {"lo", "hi"});
  Box b;
  b.lo = get_numbers(j.at(key), "lo", p);
  b.hi = get_numbers(j.at(key), "hi", p);
  if (b.dim() != n || static_cast<int>(b.hi.size()) != n) throw ConfigError(p, fmt::format("expected dimension {}", n));
  for (int i = 0; i < n; ++i) {
    if (!(b.lo[static_cast<size_t>(i)] < b.hi[static_cast<size_t>(i)])) throw ConfigError(p, "need lo < hi");
  }
  return b;
}

Json box_to_json(const Box& b) { return {{"lo", b.lo}, {"hi", b.hi}}; }

std::vector<std::vector<double>> get_points(const Json& j, const char* key, const std::string& path, int n) {
  const std::string p = join_path(path, key);
  if (!j.contains(key)) throw ConfigError(p, "missing required key");
  const Json& a = j.at(key);
  if (!a.is_array()) throw ConfigError(p, "expected an array of points");
  std::vector<std::vector<double>> out;
  for (size_t i = 0; i < a.size(); ++i) {
    const std::string pi = fmt::format("{}[{}]", p, i);
    if (!a[i].is_array() || static_cast<int>(a[i].size()) != n) throw ConfigError(pi, fmt::format("expected {} numbers", n));
    std::vector<double> x;
    for (const auto& v : a[i]) {
      if (!v.is_number()) throw ConfigError(pi, "expected numbers");
      x.push_back(v.get<double>());
    }
    out.push_back(std::move(x));
  }
  return out;
}

LearnConfig learn_config_from_json(const Json& j, const ControlAffineSystem& sys, const std::string& path) {
  check_object(j, path,
               {"components", "kernel", "search", "k_delta", "delta", "envelope_degree", "region", "grid_n",
                "train_starts", "validation_starts", "T", "dt", "pin_origin"});
  LearnConfig c;
  const std::string cp = join_path(path, "components");
  for (double v : get_numbers(j, "components", path)) {
    const int k = static_cast<int>(v);
    if (k != v || k < 1 || k > sys.n) throw ConfigError(cp, fmt::format("components must be integers in 1..{}", sys.n));
    if (std::find(c.components.begin(), c.components.end(), k - 1) != c.components.end()) {
      throw ConfigError(cp, "duplicate component");
    }
    c.components.push_back(k - 1);
  }
  const std::string kp = join_path(path, "kernel");
  if (!j.contains("kernel")) throw ConfigError(kp, "missing required key");
  check_object(j.at("kernel"), kp, {"sigma_f", "lengthscales", "sigma_n", "jitter"});
  c.kernel.sigma_f = get_number(j.at("kernel"), "sigma_f", kp);
  c.kernel.lengthscales = get_numbers(j.at("kernel"), "lengthscales", kp);
  c.kernel.sigma_n = get_number(j.at("kernel"), "sigma_n", kp, sys.sigma_n);
  c.kernel.jitter = get_number(j.at("kernel"), "jitter", kp, c.kernel.jitter);
  try {
    c.kernel.validate(sys.n);
  } catch (const std::exception& e) {
    throw ConfigError(kp, e.what());
  }
  if (j.contains("search")) {
    const std::string sp = join_path(path, "search");
    check_object(j.at("search"), sp, {"sigma_f", "lengthscale"});
    c.search_sigma_f = get_numbers(j.at("search"), "sigma_f", sp);
    c.search_lengthscale = get_numbers(j.at("search"), "lengthscale", sp);
    if (c.search_sigma_f.empty() || c.search_lengthscale.empty()) throw ConfigError(sp, "search grids must be non-empty");
  }
  c.k_delta = get_number(j, "k_delta", path, c.k_delta);
  if (c.k_delta < 0) throw ConfigError(join_path(path, "k_delta"), "must be >= 0");
  c.delta = get_number(j, "delta", path, c.delta);
  if (!(c.delta > 0 && c.delta < 1)) throw ConfigError(join_path(path, "delta"), "must lie in (0, 1)");
  c.envelope_degree = get_int(j, "envelope_degree", path, c.envelope_degree);
  if (c.envelope_degree < 1) throw ConfigError(join_path(path, "envelope_degree"), "must be >= 1");
  c.region = get_box(j, "region", path, sys.n);
  c.grid_n = get_int(j, "grid_n", path, c.grid_n);
  if (c.grid_n < 2 || std::pow(static_cast<double>(c.grid_n), sys.n) > 1e6) {
    throw ConfigError(join_path(path, "grid_n"), "need grid_n >= 2 and at most 1e6 grid points");
  }
  c.train_starts = get_points(j, "train_starts", path, sys.n);
  if (c.train_starts.empty()) throw ConfigError(join_path(path, "train_starts"), "need at least one start");
  c.validation_starts = get_points(j, "validation_starts", path, sys.n);
  c.T = get_number(j, "T", path, c.T);
  c.dt = get_number(j, "dt", path, c.dt);
  if (!(c.dt > 0) || !(c.T >= c.dt)) throw ConfigError(path, "need 0 < dt <= T");
  c.pin_origin = get_bool(j, "pin_origin", path, c.pin_origin);
  return c;
}

Json learn_config_to_json(const LearnConfig& c) {
  Json comps = Json::array();
  for (int k : c.components) comps.push_back(k + 1);
  Json j;
  j["components"] = comps;
  j["kernel"] = {{"sigma_f", c.kernel.sigma_f},
                 {"lengthscales", c.kernel.lengthscales},
                 {"sigma_n", c.kernel.sigma_n},
                 {"jitter", c.kernel.jitter}};
  if (!c.search_sigma_f.empty()) j["search"] = {{"sigma_f", c.search_sigma_f}, {"lengthscale", c.search_lengthscale}};
  j["k_delta"] = c.k_delta;
  j["delta"] = c.delta;
  j["envelope_degree"] = c.envelope_degree;
  j["region"] = box_to_json(c.region);
  j["grid_n"] = c.grid_n;
  j["train_starts"] = c.train_starts;
  j["validation_starts"] = c.validation_starts;
  j["T"] = c.T;
  j["dt"] = c.dt;
  j["pin_origin"] = c.pin_origin;
  return j;
}

SimConfig sim_config_from_json(const Json& j, int n, const Box& fallback_box, const std::string& path) {
  check_object(j, path,
               {"n_trajectories", "dt", "T", "converge_radius", "box", "exclusion_samples", "soundness_samples",
                "measure_samples"});
  SimConfig c;
  c.verify.n = get_int(j, "n_trajectories", path, c.verify.n);
  c.verify.integrator.dt = get_number(j, "dt", path, c.verify.integrator.dt);
  c.verify.integrator.T = get_number(j, "T", path, c.verify.integrator.T);
  c.verify.converge_radius = get_number(j, "converge_radius", path, c.verify.converge_radius);
  c.verify.box = j.contains("box") ? get_box(j, "box", path, n) : fallback_box;
  c.exclusion_samples = get_int(j, "exclusion_samples", path, c.exclusion_samples);
  c.soundness_samples = get_int(j, "soundness_samples", path, c.soundness_samples);
  c.measure_samples = get_int(j, "measure_samples", path, c.measure_samples);
  if (c.verify.n < 1 || c.exclusion_samples < 1 || c.soundness_samples < 1 || c.measure_samples < 1000) {
    throw ConfigError(path, "sample counts must be >= 1 (measure_samples >= 1000)");
  }
  if (!(c.verify.integrator.dt > 0) || !(c.verify.integrator.T > 0)) throw ConfigError(path, "need dt > 0 and T > 0");
  if (!(c.verify.converge_radius > 0)) throw ConfigError(join_path(path, "converge_radius"), "must be > 0");
  return c;
}

Json sim_config_to_json(const SimConfig& c) {
  return {{"n_trajectories", c.verify.n},
          {"dt", c.verify.integrator.dt},
          {"T", c.verify.integrator.T},
          {"converge_radius", c.verify.converge_radius},
          {"box", box_to_json(c.verify.box)},
          {"exclusion_samples", c.exclusion_samples},
          {"soundness_samples", c.soundness_samples},
          {"measure_samples", c.measure_samples}};
}

PlotConfig plot_config_from_json(const Json& j, int n, const Box& fallback_box, const std::string& path) {
  check_object(j, path, {"box", "grid", "slices"});
  PlotConfig c;
  c.box = j.contains("box") ? get_box(j, "box", path, n) : fallback_box;
  c.grid = get_int(j, "grid", path, c.grid);
  c.slices = get_numbers(j, "slices", path, {});
  if (c.grid < 2) throw ConfigError(join_path(path, "grid"), "must be >= 2");
  return c;
}

Json plot_config_to_json(const PlotConfig& c) {
  return {{"box", box_to_json(c.box)}, {"grid", c.grid}, {"slices", c.slices}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return seed * 1000003ULL + stream; }

/// Weighted least squares over monomials of degree 1..degree (no constant
/// term). Row k is scaled by weights[k].
Polynomial fit_without_constant(const std::vector<std::vector<double>>& pts, const Eigen::VectorXd& values,
                                const Eigen::VectorXd& weights, int n, int degree) {
  const auto basis = monomial_basis(n, degree, 1);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(basis.size()));
  for (size_t i = 0; i < pts.size(); ++i) {
    for (size_t k = 0; k < basis.size(); ++k) {
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          weights(static_cast<Eigen::Index>(i)) * basis[k].evaluate(pts[i]);
    }
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < A.cols()) throw std::runtime_error("pinned envelope: design matrix is rank-deficient");
  const Eigen::VectorXd coef = qr.solve(weights.cwiseProduct(values));
  Polynomial p(n);
  for (size_t k = 0; k < basis.size(); ++k) p.add_term(basis[k], coef(static_cast<Eigen::Index>(k)));
  return p;
}

double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

Polynomial squared_norm_poly(int n) {
  Polynomial r(n);
  for (int i = 0; i < n; ++i) r.add_term(Monomial::variable(n, i, 2), 1.0);
  return r;
}

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == 0 ? 0.0 : std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(fmt::format("cannot write {}", path));
  os << text;
}

}  // namespace

RunConfig run_config_from_json(const Json& j) {
  check_object(j, "", {"name", "system", "learn", "synthesis", "sim", "plot", "out", "seed"});
  RunConfig c;
  c.source = j;
  c.name = get_string(j, "name", "", c.name);
  if (!j.contains("system")) throw ConfigError("system", "missing required key");
  c.system = system_from_json(j.at("system"), "system");
  if (!j.contains("learn")) throw ConfigError("learn", "missing required key");
  c.learn = learn_config_from_json(j.at("learn"), c.system, "learn");
  if (!j.contains("synthesis")) throw ConfigError("synthesis", "missing required key");
  c.synthesis = synthesis_config_from_json(j.at("synthesis"), c.system.n, "synthesis");
  c.sim = sim_config_from_json(j.value("sim", Json::object()), c.system.n, c.synthesis.box, "sim");
  c.plot = plot_config_from_json(j.value("plot", Json::object()), c.system.n, c.synthesis.box, "plot");
  c.out = get_string(j, "out", "", c.out);
  const double seed = get_number(j, "seed", "", 1.0);
  if (seed < 0 || seed != std::floor(seed) || seed > 9e15) throw ConfigError("seed", "must be a non-negative integer");
  apply_seed(c, static_cast<std::uint64_t>(seed));
  if (static_cast<int>(c.learn.components.size()) > 8) throw ConfigError("learn.components", "at most 8 components");
  return c;
}

Json run_config_to_json(const RunConfig& c) {
  Json j;
  j["name"] = c.name;
  j["system"] = system_to_json(c.system);
  j["learn"] = learn_config_to_json(c.learn);
  j["synthesis"] = synthesis_config_to_json(c.synthesis);
  j["sim"] = sim_config_to_json(c.sim);
  j["plot"] = plot_config_to_json(c.plot);
  j["out"] = c.out;
  j["seed"] = c.seed;
  return j;
}

void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.synthesis.seed = derive_seed(seed, 1);
  c.sim.verify.seed = derive_seed(seed, 2);
}

Eigen::VectorXd learning_targets(const TrajectoryDataset& data, const std::vector<Polynomial>& P,
                                 const std::vector<std::vector<Polynomial>>& g, int component) {
  const auto i = static_cast<size_t>(component);
  Eigen::VectorXd y(data.x.rows());
  for (Eigen::Index k = 0; k < data.x.rows(); ++k) {
    const Eigen::VectorXd xk = data.x.row(k).transpose();
    const auto xs = as_span(xk);
    double v = data.xdot(k, component) - P[i](xs);
    for (size_t jj = 0; jj < g[i].size(); ++jj) v -= g[i][jj](xs) * data.u(k, static_cast<Eigen::Index>(jj));
    y(k) = v;
  }
  return y;
}

ConfidenceEnvelope pinned_envelope(const GPModel& model, double k_delta, int degree, const Box& region, int grid_n,
                                   double delta, double value) {
  if (k_delta < 0) throw std::invalid_argument("pinned_envelope: k_delta must be >= 0");
  const int n = model.dim();
  const auto pts = grid_points(region, grid_n);
  const auto np = static_cast<Eigen::Index>(pts.size());
  Eigen::VectorXd mean(np);
  Eigen::VectorXd sd(np);
  for (Eigen::Index i = 0; i < np; ++i) {
    const Posterior p = model.posterior(pts[static_cast<size_t>(i)]);
    mean(i) = p.mean;
    sd(i) = p.std;
  }
  ConfidenceEnvelope env;
  env.k_delta = k_delta;
  env.delta = delta;
  env.n_measurements = model.size();
  env.region = region;
  env.grid_n = grid_n;
  // Residuals are weighted by 1/|x|^2 so that the |x|^2-shaped outward shift
  // stays small near the origin.
  Eigen::VectorXd w(np);
  for (Eigen::Index i = 0; i < np; ++i) {
    const double r2 = squared_norm(pts[static_cast<size_t>(i)]);
    w(i) = r2 < 1e-12 ? 0.0 : 1.0 / r2;
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Constant(np, value);
  env.mean = fit_without_constant(pts, mean - ones, w, n, degree) + value;
  const Eigen::VectorXd lower = mean - k_delta * sd;
  const Eigen::VectorXd upper = mean + k_delta * sd;
  const Polynomial lo_fit = fit_without_constant(pts, lower - ones, w, n, degree) + value;
  const Polynomial hi_fit = fit_without_constant(pts, upper - ones, w, n, degree) + value;
  double shift_lo = 0.0;
  double shift_hi = 0.0;
  double sq_mean = 0.0;
  for (Eigen::Index i = 0; i < np; ++i) {
    const auto& p = pts[static_cast<size_t>(i)];
    const double r2 = squared_norm(p);
    const double m = env.mean(p);
    sq_mean += (m - mean(i)) * (m - mean(i));
    if (r2 < 1e-12) continue;
    shift_lo = std::max({shift_lo, (lo_fit(p) - lower(i)) / r2, (lo_fit(p) - m) / r2});
    shift_hi = std::max({shift_hi, (upper(i) - hi_fit(p)) / r2, (m - hi_fit(p)) / r2});
  }
  env.mean_rmse = std::sqrt(sq_mean / static_cast<double>(np));
  env.shift_lo = shift_lo;
  env.shift_hi = shift_hi;
  const Polynomial r2 = squared_norm_poly(n);
  env.lo = lo_fit - shift_lo * r2;
  env.hi = hi_fit + shift_hi * r2;
  return env;
}

LearningResult learn_system(const ControlAffineSystem& sys, const LearnConfig& cfg, std::uint64_t seed) {
  LearningResult r;
  r.poly = polynomialize(sys);
  const std::vector<Polynomial> zero_control(static_cast<size_t>(sys.m), Polynomial(sys.n));
  for (size_t k = 0; k < cfg.train_starts.size(); ++k) {
    r.train.push_back(generate_measurements(sys, cfg.train_starts[k], cfg.T, cfg.dt, zero_control, derive_seed(seed, 100 + k)));
  }
  for (size_t k = 0; k < cfg.validation_starts.size(); ++k) {
    r.validation.push_back(
        generate_measurements(sys, cfg.validation_starts[k], cfg.T, cfg.dt, zero_control, derive_seed(seed, 200 + k)));
  }
  Eigen::Index rows = 0;
  for (const auto& d : r.train) rows += d.x.rows();
  Eigen::MatrixXd X(rows, sys.n);
  Eigen::Index at = 0;
  for (const auto& d : r.train) {
    X.middleRows(at, d.x.rows()) = d.x;
    at += d.x.rows();
  }
  r.learned.P = r.poly.P;
  r.learned.g = sys.g;
  r.learned.learned.assign(static_cast<size_t>(sys.n), false);
  for (int i = 0; i < sys.n; ++i) r.learned.envelope.push_back(exact_envelope(Polynomial(sys.n)));
  const std::vector<double> origin(static_cast<size_t>(sys.n), 0.0);
  int total = 0;
  for (int comp : cfg.components) {
    Eigen::VectorXd y(rows);
    at = 0;
    for (const auto& d : r.train) {
      y.segment(at, d.x.rows()) = learning_targets(d, r.poly.P, sys.g, comp);
      at += d.x.rows();
    }
    ComponentFit fit;
    fit.component = comp;
    fit.kernel = cfg.kernel;
    if (!cfg.search_sigma_f.empty()) {
      fit.kernel = grid_search_hyperparameters(X, y, cfg.kernel, cfg.search_sigma_f, cfg.search_lengthscale);
    }
    const GPModel model = gp_fit(X, y, fit.kernel);
    fit.n_train = model.size();
    fit.log_marginal_likelihood = model.log_marginal_likelihood();
    const double known = -r.poly.P[static_cast<size_t>(comp)](origin);
    fit.envelope = cfg.pin_origin ? pinned_envelope(model, cfg.k_delta, cfg.envelope_degree, cfg.region, cfg.grid_n, cfg.delta, known)
                                  : build_envelope(model, cfg.k_delta, cfg.envelope_degree, cfg.region, cfg.grid_n, cfg.delta);
    Eigen::VectorXd gp_pred;
    Eigen::VectorXd poly_pred;
    Eigen::VectorXd truth;
    for (const auto& d : r.validation) {
      const Eigen::VectorXd yv = learning_targets(d, r.poly.P, sys.g, comp);
      const Eigen::Index old = truth.size();
      truth.conservativeResize(old + yv.size());
      gp_pred.conservativeResize(old + yv.size());
      poly_pred.conservativeResize(old + yv.size());
      truth.segment(old, yv.size()) = yv;
      for (Eigen::Index k = 0; k < d.x.rows(); ++k) {
        const Eigen::VectorXd xk = d.x.row(k).transpose();
        gp_pred(old + k) = model.posterior(as_span(xk)).mean;
        poly_pred(old + k) = fit.envelope.mean(as_span(xk));
      }
    }
    fit.gp_rmse = rmse(gp_pred, truth);
    fit.mean_rmse = rmse(poly_pred, truth);
    for (const auto& p : grid_points(cfg.region, cfg.grid_n)) {
      fit.max_width = std::max(fit.max_width, fit.envelope.hi(p) - fit.envelope.lo(p));
      const double err = sys.drift(p)(comp) - r.poly.P[static_cast<size_t>(comp)](p);
      fit.true_residual_excess =
          std::max({fit.true_residual_excess, fit.envelope.lo(p) - err, err - fit.envelope.hi(p)});
    }
    r.learned.envelope[static_cast<size_t>(comp)] = fit.envelope;
    r.learned.learned[static_cast<size_t>(comp)] = true;
    total += fit.n_train;
    r.fits.push_back(std::move(fit));
  }
  r.probability = total > 0 ? probability_bound(cfg.delta, total) : 1.0;
  return r;
}

Json learning_to_json(const LearningResult& r) {
  Json fits = Json::array();
  for (const auto& f : r.fits) {
    fits.push_back({{"component", f.component + 1},
                    {"sigma_f", f.kernel.sigma_f},
                    {"lengthscales", f.kernel.lengthscales},
                    {"sigma_n", f.kernel.sigma_n},
                    {"n_train", f.n_train},
                    {"log_marginal_likelihood", f.log_marginal_likelihood},
                    {"validation_rmse_gp", f.gp_rmse},
                    {"validation_rmse_mean_poly", f.mean_rmse},
                    {"mean_fit_rmse", f.envelope.mean_rmse},
                    {"max_envelope_width", f.max_width},
                    {"true_residual_excess", f.true_residual_excess},
                    {"shift_lo", f.envelope.shift_lo},
                    {"shift_hi", f.envelope.shift_hi},
                    {"mean", polynomial_to_json(f.envelope.mean)},
                    {"lo", polynomial_to_json(f.envelope.lo)},
                    {"hi", polynomial_to_json(f.envelope.hi)},
                    {"envelope_sound_on", "grid only"}});
  }
  Json xi = Json::array();
  for (size_t i = 0; i < r.poly.P.size(); ++i) {
    xi.push_back({{"component", i + 1},
                  {"bound", r.poly.xi_bound[i]},
                  {"empirical", r.poly.xi_empirical[i]},
                  {"analytic", static_cast<bool>(r.poly.bound_is_analytic[i])}});
  }
  int samples = 0;
  bool truncated = false;
  for (const auto& d : r.train) {
    samples += d.size();
    truncated = truncated || d.truncated;
  }
  return {{"training_samples", samples},
          {"training_truncated", truncated},
          {"chebyshev_remainder", xi},
          {"components", fits},
          {"probability_bound", r.probability}};
}

RunResult execute_run(const RunConfig& cfg) {
  RunResult r;
  Json& rep = r.report;
  rep["name"] = cfg.name;
  rep["seed"] = cfg.seed;
  Json runtime;
  auto t0 = std::chrono::steady_clock::now();
  try {
    r.learning = learn_system(cfg.system, cfg.learn, cfg.seed);
  } catch (const std::exception& e) {
    r.failed_stage = "learn";
    rep["error"] = e.what();
    return r;
  }
  runtime["learn"] = seconds_since(t0);
  rep["learning"] = learning_to_json(r.learning);

  t0 = std::chrono::steady_clock::now();
  r.certificate = run_pipeline(r.learning.learned, cfg.synthesis, cfg.system.unsafe);
  runtime["synthesis"] = seconds_since(t0);
  Certificate& cert = r.certificate;
  Json syn;
  syn["outer_iterations"] = cert.outer_iterations;
  syn["c"] = cert.c;
  syn["epsilon"] = cert.epsilon;
  syn["trace"] = cert.trace;
  syn["initial_c"] = cert.initial_c;
  syn["vertices"] = cert.vertices.size();
  syn["failure_stage"] = cert.failure_stage;
  std::vector<double> c_seq;
  std::vector<double> trace_seq;
  for (const auto& h : cert.history) {
    if (h.outer_iter == 1 && h.loop == "loop1") c_seq.push_back(h.objective);
    if (h.outer_iter == 1 && h.loop == "loop2") trace_seq.push_back(h.objective);
  }
  syn["loop1_c_sequence"] = c_seq;
  syn["loop2_trace_sequence"] = trace_seq;
  syn["verification"] = {{"passed", cert.verification.passed()}, {"summary", cert.verification.summary()}};
  rep["synthesis"] = syn;
  if (cert.B.is_zero()) {
    r.failed_stage = cert.failure_stage.empty() ? "synthesis" : cert.failure_stage;
    rep["runtime_s"] = runtime;
    return r;
  }

  t0 = std::chrono::steady_clock::now();
  const Box& box = cfg.sim.verify.box;
  Json regions;
  try {
    const auto initial = sublevel(cert.initial_V, cert.initial_c);
    const auto final_region = superlevel(cert.B);
    const RegionComparison grow = compare_regions(initial, final_region, box, cfg.sim.measure_samples, derive_seed(cfg.seed, 3));
    regions["initial_sublevel"] = measure_to_json(grow.a);
    regions["final_barrier"] = measure_to_json(grow.b);
    regions["ratio_final_over_initial"] = grow.ratio;
    regions["ratio_se"] = grow.ratio_se;
    regions["initial_contained_in_final"] = grow.containment;
    if (!cert.barrier_before_loop3.is_zero()) {
      const RegionComparison l3 = compare_regions(superlevel(cert.barrier_before_loop3), final_region, box,
                                                  cfg.sim.measure_samples, derive_seed(cfg.seed, 4));
      regions["before_loop3"] = measure_to_json(l3.a);
      regions["ratio_final_over_before_loop3"] = l3.ratio;
      regions["ratio_before_loop3_se"] = l3.ratio_se;
    }
    int hits = 0;
    for (const auto& x : sample_region(final_region, box, cfg.sim.exclusion_samples, derive_seed(cfg.seed, 5))) {
      for (const auto& mi : cfg.system.unsafe) {
        if (mi(x) <= 0) {
          ++hits;
          break;
        }
      }
    }
    regions["exclusion_samples"] = cfg.sim.exclusion_samples;
    regions["exclusion_violations"] = hits;
    rep["regions"] = regions;

    const SoundnessReport sound = check_soundness(cert, box, cfg.sim.soundness_samples, derive_seed(cfg.seed, 6));
    Certificate env_cert = cert;
    env_cert.vertices = envelope_vertices(r.learning.learned.envelope, cfg.system.n);
    const SoundnessReport env_sound = check_soundness(env_cert, box, cfg.sim.soundness_samples, derive_seed(cfg.seed, 6));
    rep["soundness"] = {{"samples", sound.samples},
                        {"max_vdot_certificate_vertices", sound.max_vdot},
                        {"max_vdot_envelope_vertices", env_sound.max_vdot},
                        {"argmax", sound.argmax},
                        {"unsafe_hits", sound.unsafe_hits}};

    const MonteCarloReport mc = verify_roa(cert, cfg.system, cfg.sim.verify);
    rep["monte_carlo"] = report_to_json(mc);
    r.fraction_safe = mc.fraction_safe;
  } catch (const std::exception& e) {
    r.failed_stage = "verify";
    rep["error"] = e.what();
    runtime["verify"] = seconds_since(t0);
    rep["runtime_s"] = runtime;
    return r;
  }
  runtime["verify"] = seconds_since(t0);
  rep["runtime_s"] = runtime;
  r.verified = cert.valid();
  if (!cert.failure_stage.empty()) {
    r.failed_stage = cert.failure_stage;
  } else if (!r.verified) {
    r.failed_stage = "verification";
  } else if (r.fraction_safe < 1.0) {
    r.failed_stage = "monte_carlo";
  }
  rep["success"] = r.failed_stage.empty();
  return r;
}

std::vector<PlannedProgram> plan_run(const RunConfig& cfg) {
  const PolynomializeResult poly = polynomialize(cfg.system);
  LearnedSystem sys;
  sys.P = poly.P;
  sys.g = cfg.system.g;
  sys.learned.assign(static_cast<size_t>(cfg.system.n), false);
  const int n = cfg.system.n;
  Polynomial width(n);
  for (const auto& mono : monomial_basis(n, cfg.learn.envelope_degree, 0)) width.add_term(mono, 1.0);
  for (int i = 0; i < n; ++i) {
    ConfidenceEnvelope env = exact_envelope(Polynomial(n));
    if (std::find(cfg.learn.components.begin(), cfg.learn.components.end(), i) != cfg.learn.components.end()) {
      env.lo = -1.0 * width;
      env.hi = width;
      env.mean = Polynomial(n);
      for (const auto& [mono, coef] : width.terms()) env.mean.add_term(mono, 1e-3 * coef);
      sys.learned[static_cast<size_t>(i)] = true;
    }
    sys.envelope.push_back(env);
  }
  return plan_programs(sys, cfg.synthesis, cfg.system.unsafe);
}

void write_run_outputs(const RunResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  if (!r.certificate.B.is_zero()) {
    write_text((std::filesystem::path(dir) / "certificate.json").string(), certificate_to_json(r.certificate).dump(2) + "\n");
  }
  Json rep = r.report;
  rep["failed_stage"] = r.failed_stage;
  rep["verified"] = r.verified;
  rep["fraction_safe"] = r.fraction_safe;
  write_text((std::filesystem::path(dir) / "report.json").string(), rep.dump(2) + "\n");
  std::string log;
  for (const auto& h : r.certificate.history) {
    log += fmt::format("outer={} loop={} objective={:.9g} status={}\n", h.outer_iter, h.loop, h.objective, h.status);
  }
  log += fmt::format("failed_stage={} verified={} fraction_safe={}\n", r.failed_stage.empty() ? "none" : r.failed_stage,
                     r.verified, r.fraction_safe);
  write_text((std::filesystem::path(dir) / "log.txt").string(), log);
}

PlotExport export_plot(const Certificate& cert, const PlotConfig& plot, const std::string& dir, std::uint64_t seed) {
  const int n = cert.n;
  if (n < 2) throw std::invalid_argument("export_plot: need at least two state variables");
  if (plot.box.dim() != n) throw std::invalid_argument(fmt::format("export_plot: box must have dimension {}", n));
  const std::vector<double> slices = n == 2 ? std::vector<double>{0.0} : (plot.slices.empty() ? std::vector<double>{0.0} : plot.slices);
  const double points = static_cast<double>(plot.grid) * plot.grid * static_cast<double>(slices.size());
  if (plot.grid < 2 || points > 1e6) {
    throw std::invalid_argument(fmt::format("export_plot: {} grid points exceed the limit of 1e6", points));
  }
  std::filesystem::create_directories(dir);
  PlotExport out;
  Box plane;
  plane.lo = {plot.box.lo[0], plot.box.lo[1]};
  plane.hi = {plot.box.hi[0], plot.box.hi[1]};
  const auto grid2 = grid_points(plane, plot.grid);
  auto header = [&]() {
    std::string h;
    for (int i = 0; i < n; ++i) h += fmt::format("x{},", i + 1);
    return h + "value\n";
  };
  auto row = [&](const std::vector<double>& x, double v) {
    std::string s;
    for (double xi : x) s += fmt::format("{},", xi);
    return s + fmt::format("{}\n", v);
  };
  for (size_t s = 0; s < slices.size(); ++s) {
    const std::string suffix = n == 2 ? "" : fmt::format("_x3_{}", slices[s]);
    std::string v_csv = header();
    std::string b_csv = header();
    std::string u_csv = header();
    for (const auto& p : grid2) {
      std::vector<double> x(static_cast<size_t>(n), 0.0);
      x[0] = p[0];
      x[1] = p[1];
      if (n > 2) x[2] = slices[s];
      v_csv += row(x, cert.V(x));
      b_csv += row(x, cert.B(x));
      int mark = 0;
      for (size_t i = 0; i < cert.unsafe.size() && mark == 0; ++i) {
        if (cert.unsafe[i](x) <= 0) mark = static_cast<int>(i) + 1;
      }
      u_csv += row(x, mark);
    }
    for (const auto& [name, text] : {std::pair{"levels_V", &v_csv}, std::pair{"levels_B", &b_csv}, std::pair{"unsafe_grid", &u_csv}}) {
      const std::string file = fmt::format("{}{}.csv", name, suffix);
      write_text((std::filesystem::path(dir) / file).string(), *text);
      out.files.push_back(file);
    }
  }
  const int samples = 200000;
  Json summary;
  summary["box"] = box_to_json(plot.box);
  summary["grid"] = plot.grid;
  if (n > 2) summary["slices_x3"] = slices;
  summary["barrier_region"] = measure_to_json(estimate_measure(superlevel(cert.B), plot.box, samples, seed));
  summary["lyapunov_sublevel"] = {{"c", cert.c},
                                  {"measure", measure_to_json(estimate_measure(sublevel(cert.V, cert.c), plot.box, samples, seed))}};
  if (!cert.initial_V.is_zero()) {
    summary["initial_sublevel"] = {
        {"c", cert.initial_c},
        {"measure", measure_to_json(estimate_measure(sublevel(cert.initial_V, cert.initial_c), plot.box, samples, seed))}};
  }
  if (!cert.barrier_before_loop3.is_zero()) {
    summary["barrier_before_loop3"] = measure_to_json(estimate_measure(superlevel(cert.barrier_before_loop3), plot.box, samples, seed));
  }
  Json unsafe = Json::array();
  for (const auto& mi : cert.unsafe) {
    unsafe.push_back(measure_to_json(estimate_measure([mi](std::span<const double> x) { return mi(x) <= 0; }, plot.box, samples, seed)));
  }
  summary["unsafe_regions"] = unsafe;
  std::vector<double> origin(static_cast<size_t>(n), 0.0);
  summary["B_at_origin"] = cert.B(origin);
  summary["V_at_origin"] = cert.V(origin);
  write_text((std::filesystem::path(dir) / "regions_summary.json").string(), summary.dump(2) + "\n");
  out.files.push_back("regions_summary.json");
  out.summary = summary;
  return out;
}

Json demo_config(const std::string& name) {
  const Json identity2 = Json::array({Json::array({"1", "0"}), Json::array({"0", "1"})});
  if (name == "example1") {
    Json j;
    j["name"] = "example1";
    j["system"] = {{"n", 2},
                   {"m", 2},
                   {"f", {"-x1 + x2", "x1^2*x2 + 1 - sqrt(abs(exp(x1)*cos(x1)))"}},
                   {"g", identity2},
                   {"sigma_n", 0.01},
                   {"markers", Json::array({{{"component", 2}, {"expr", "sqrt(abs(exp(x1)*cos(x1)))"}, {"k", 4}, {"interval", {-2, 2}}}})},
                   {"unsafe", {"(x1+4)^2 + (x2-5)^2 - 4", "x1^2 + (x2+5)^2 - 4", "(x1-5)^2 + x2^2 - 5"}}};
    j["learn"] = {{"components", {2}},
                  {"kernel", {{"sigma_f", std::exp(0.1)}, {"lengthscales", {std::exp(0.2)}}, {"sigma_n", 0.01}}},
                  {"k_delta", 2.0},
                  {"delta", 0.05},
                  {"envelope_degree", 4},
                  {"region", {{"lo", {-2, -2}}, {"hi", {2, 2}}}},
                  {"grid_n", 41},
                  {"train_starts", {{-0.5, 0.2}}},
                  {"validation_starts", {{-0.4, 0.4}}},
                  {"T", 30.0},
                  {"dt", 0.1},
                  {"pin_origin", true}};
    j["synthesis"] = {{"deg_u", 3},
                      {"deg_V", 4},
                      {"deg_B", 4},
                      {"deg_mult", 2},
                      {"alpha", 1.0},
                      {"disturbance_mode", "envelope"},
                      {"initial_feedback", "lqr"},
                      {"u_bound", 10.0},
                      {"outer_max_iters", 3},
                      {"loop1_max_iters", 10},
                      {"loop2_max_iters", 8},
                      {"c0", 1.0},
                      {"c_max", 100.0},
                      {"box", {{"lo", {-8, -8}}, {"hi", {8, 8}}}},
                      {"domain", {{"lo", {-2, -2}}, {"hi", {2, 2}}}}};
    j["sim"] = {{"n_trajectories", 1000},
                {"dt", 0.01},
                {"T", 30.0},
                {"converge_radius", 0.05},
                {"box", {{"lo", {-2, -2}}, {"hi", {2, 2}}}}};
    j["plot"] = {{"grid", 200}, {"box", {{"lo", {-8, -8}}, {"hi", {8, 8}}}}};
    j["out"] = "out/example1";
    j["seed"] = 1;
    return j;
  }
  if (name == "example2") {
    Json j;
    j["name"] = "example2";
    j["system"] = {{"n", 3},
                   {"m", 3},
                   {"f", {"-x1^2 - cos(x1^2)*sin(x1)", "-x2 - x1^3*x2", "-x1^2*x3 + 1 - sqrt(abs(exp(x1)*cos(x1)))"}},
                   {"g", Json::array({Json::array({"1", "0", "0"}), Json::array({"0", "1", "0"}), Json::array({"0", "0", "1"})})},
                   {"sigma_n", 0.01},
                   {"markers", Json::array({{{"component", 1}, {"expr", "cos(x1^2)*sin(x1)"}, {"k", 6}, {"interval", {-2, 2}}},
                                            {{"component", 3}, {"expr", "sqrt(abs(exp(x1)*cos(x1)))"}, {"k", 4}, {"interval", {-2, 2}}}})},
                   {"unsafe", {"(x1+4)^2 + (x2+4)^2 + (x3-4)^2 - 4", "x1^2 + (x2-4)^2 + x3^2 - 4", "(x1-4)^2 + x2^2 + (x3+4)^2 - 6"}}};
    j["learn"] = {{"components", {1, 3}},
                  {"kernel", {{"sigma_f", 0.1}, {"lengthscales", {0.2}}, {"sigma_n", 0.01}}},
                  {"k_delta", 2.0},
                  {"delta", 0.05},
                  {"envelope_degree", 4},
                  {"region", {{"lo", {-2, -2, -2}}, {"hi", {2, 2, 2}}}},
                  {"grid_n", 15},
                  {"train_starts", {{-0.1, 0.1, 0.1}}},
                  {"validation_starts", {{-0.1, -0.2, 0.1}}},
                  {"T", 30.0},
                  {"dt", 0.05},
                  {"pin_origin", true}};
    j["synthesis"] = {{"deg_u", 3},
                      {"deg_V", 4},
                      {"deg_B", 4},
                      {"deg_mult", 2},
                      {"alpha", 1.0},
                      {"disturbance_mode", "envelope"},
                      {"initial_feedback", "lqr"},
                      {"u_bound", 10.0},
                      {"outer_max_iters", 3},
                      {"loop1_max_iters", 10},
                      {"loop2_max_iters", 8},
                      {"c0", 1.0},
                      {"c_max", 100.0},
                      {"box", {{"lo", {-8, -8, -8}}, {"hi", {8, 8, 8}}}},
                      {"domain", {{"lo", {-2, -2, -2}}, {"hi", {2, 2, 2}}}}};
    j["sim"] = {{"n_trajectories", 1000},
                {"dt", 0.01},
                {"T", 30.0},
                {"converge_radius", 0.05},
                {"box", {{"lo", {-2, -2, -2}}, {"hi", {2, 2, 2}}}}};
    j["plot"] = {{"grid", 100}, {"slices", {-2.0, 0.0, 2.0}}, {"box", {{"lo", {-8, -8, -8}}, {"hi", {8, 8, 8}}}}};
    j["out"] = "out/example2";
    j["seed"] = 1;
    return j;
  }
  throw std::invalid_argument(fmt::format("unknown demo '{}' (expected example1 or example2)", name));
}

}  // namespace saferoa
