#include "saferoa/dynamics.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "saferoa/approx.hpp"

namespace saferoa {

Eigen::VectorXd ControlAffineSystem::drift(std::span<const double> x) const {
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out(i) = f[static_cast<size_t>(i)].evaluate(x);
  return out;
}

Eigen::MatrixXd ControlAffineSystem::input_matrix(std::span<const double> x) const {
  Eigen::MatrixXd out(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) out(i, j) = g[static_cast<size_t>(i)][static_cast<size_t>(j)](x);
  }
  return out;
}

Eigen::VectorXd ControlAffineSystem::rhs(std::span<const double> x, std::span<const double> u) const {
  Eigen::VectorXd out = drift(x);
  if (m > 0) out += input_matrix(x) * Eigen::Map<const Eigen::VectorXd>(u.data(), m);
  return out;
}

namespace {

Expression parse_at(const std::string& src, int n, const std::string& path) {
  try {
    return Expression::parse(src, n);
  } catch (const ParseError& e) {
    throw ConfigError(path, fmt::format("cannot parse '{}': {}", src, e.what()));
  }
}

Polynomial polynomial_at(const std::string& src, int n, const std::string& path) {
  const Expression e = parse_at(src, n, path);
  try {
    return to_polynomial(e, n);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(path, fmt::format("'{}' must be polynomial: {}", src, err.what()));
  }
}

std::string string_at(const Json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected an expression string");
  return v.get<std::string>();
}

}  // namespace

ControlAffineSystem system_from_json(const Json& j, const std::string& path) {
  check_object(j, path, {"n", "m", "f", "g", "sigma_n", "markers", "unsafe"});
  ControlAffineSystem sys;
  sys.n = get_int(j, "n", path);
  sys.m = get_int(j, "m", path);
  if (sys.n < 1) throw ConfigError(join_path(path, "n"), "must be >= 1");
  if (sys.m < 0) throw ConfigError(join_path(path, "m"), "must be >= 0");
  sys.sigma_n = get_number(j, "sigma_n", path, 0.0);
  if (sys.sigma_n < 0) throw ConfigError(join_path(path, "sigma_n"), "must be >= 0");

  const std::string fpath = join_path(path, "f");
  if (!j.contains("f") || !j.at("f").is_array() || static_cast<int>(j.at("f").size()) != sys.n) {
    throw ConfigError(fpath, fmt::format("expected an array of {} expressions", sys.n));
  }
  for (int i = 0; i < sys.n; ++i) {
    const std::string p = fmt::format("{}[{}]", fpath, i);
    const std::string src = string_at(j.at("f")[static_cast<size_t>(i)], p);
    sys.f.push_back(parse_at(src, sys.n, p));
    sys.f_source.push_back(src);
  }

  const std::string gpath = join_path(path, "g");
  if (j.contains("g")) {
    const Json& g = j.at("g");
    if (!g.is_array() || static_cast<int>(g.size()) != sys.n) throw ConfigError(gpath, fmt::format("expected {} rows", sys.n));
    for (int i = 0; i < sys.n; ++i) {
      const Json& row = g[static_cast<size_t>(i)];
      const std::string rp = fmt::format("{}[{}]", gpath, i);
      if (!row.is_array() || static_cast<int>(row.size()) != sys.m) throw ConfigError(rp, fmt::format("expected {} entries", sys.m));
      sys.g.emplace_back();
      sys.g_source.emplace_back();
      for (int k = 0; k < sys.m; ++k) {
        const std::string ep = fmt::format("{}[{}]", rp, k);
        const std::string src = string_at(row[static_cast<size_t>(k)], ep);
        sys.g.back().push_back(polynomial_at(src, sys.n, ep));
        sys.g_source.back().push_back(src);
      }
    }
  } else {
    if (sys.m != sys.n) throw ConfigError(gpath, "required unless m equals n (identity input matrix)");
    for (int i = 0; i < sys.n; ++i) {
      sys.g.emplace_back();
      sys.g_source.emplace_back();
      for (int k = 0; k < sys.m; ++k) {
        sys.g.back().push_back(Polynomial(sys.n, i == k ? 1.0 : 0.0));
        sys.g_source.back().push_back(i == k ? "1" : "0");
      }
    }
  }

  if (j.contains("markers")) {
    const std::string mpath = join_path(path, "markers");
    const Json& ms = j.at("markers");
    if (!ms.is_array()) throw ConfigError(mpath, "expected an array");
    for (size_t i = 0; i < ms.size(); ++i) {
      const std::string p = fmt::format("{}[{}]", mpath, i);
      check_object(ms[i], p, {"component", "expr", "k", "interval", "c_m", "rho"});
      ChebyshevMarker mk;
      const int comp = get_int(ms[i], "component", p);
      if (comp < 1 || comp > sys.n) throw ConfigError(join_path(p, "component"), fmt::format("must lie in 1..{}", sys.n));
      mk.component = comp - 1;
      mk.source = get_string(ms[i], "expr", p);
      mk.expr = parse_at(mk.source, sys.n, join_path(p, "expr"));
      if (mk.expr.states().size() > 1) {
        throw ConfigError(join_path(p, "expr"), "marked sub-expressions must depend on a single state variable");
      }
      mk.k = get_int(ms[i], "k", p);
      if (mk.k < 0) throw ConfigError(join_path(p, "k"), "must be >= 0");
      const auto iv = get_numbers(ms[i], "interval", p);
      if (iv.size() != 2 || !(iv[0] < iv[1])) throw ConfigError(join_path(p, "interval"), "expected [a, b] with a < b");
      mk.a = iv[0];
      mk.b = iv[1];
      if (ms[i].contains("c_m")) mk.c_m = get_number(ms[i], "c_m", p);
      if (ms[i].contains("rho")) {
        mk.rho = get_number(ms[i], "rho", p);
        if (!(*mk.rho > 1.0)) throw ConfigError(join_path(p, "rho"), "must exceed 1");
      }
      sys.markers.push_back(std::move(mk));
    }
  }

  if (j.contains("unsafe")) {
    const std::string upath = join_path(path, "unsafe");
    const Json& us = j.at("unsafe");
    if (!us.is_array()) throw ConfigError(upath, "expected an array of expressions");
    for (size_t i = 0; i < us.size(); ++i) {
      const std::string p = fmt::format("{}[{}]", upath, i);
      const std::string src = string_at(us[i], p);
      Polynomial q = polynomial_at(src, sys.n, p);
      if (q.is_constant()) throw ConfigError(p, "unsafe region polynomial must be nonconstant");
      sys.unsafe.push_back(std::move(q));
      sys.unsafe_source.push_back(src);
    }
  }
  return sys;
}

Json system_to_json(const ControlAffineSystem& sys) {
  Json j;
  j["n"] = sys.n;
  j["m"] = sys.m;
  j["f"] = sys.f_source;
  j["g"] = sys.g_source;
  j["sigma_n"] = sys.sigma_n;
  Json ms = Json::array();
  for (const auto& mk : sys.markers) {
    Json m;
    m["component"] = mk.component + 1;
    m["expr"] = mk.source;
    m["k"] = mk.k;
    m["interval"] = {mk.a, mk.b};
    if (mk.c_m) m["c_m"] = *mk.c_m;
    if (mk.rho) m["rho"] = *mk.rho;
    ms.push_back(m);
  }
  j["markers"] = ms;
  j["unsafe"] = sys.unsafe_source;
  return j;
}

PolynomializeResult polynomialize(const ControlAffineSystem& sys) {
  PolynomializeResult r;
  r.xi_bound.assign(static_cast<size_t>(sys.n), 0.0);
  r.xi_empirical.assign(static_cast<size_t>(sys.n), 0.0);
  r.bound_is_analytic.assign(static_cast<size_t>(sys.n), true);
  for (int i = 0; i < sys.n; ++i) {
    std::vector<std::pair<Expression, Polynomial>> repl;
    for (const auto& mk : sys.markers) {
      if (mk.component != i) continue;
      const auto vars = mk.expr.states();
      const int var = vars.empty() ? 0 : vars.front();
      const ScalarFunction fn = [&](double t) {
        std::vector<double> x(static_cast<size_t>(sys.n), 0.0);
        x[static_cast<size_t>(var)] = t;
        return mk.expr.evaluate(x);
      };
      const ChebyshevInterpolant c = fit_interpolant(fn, mk.k, mk.a, mk.b);
      const std::vector<Polynomial> embed{Polynomial::variable(sys.n, var)};
      const Polynomial p = to_polynomial(c).compose(embed);
      const double emp = sup_error(fn, c, 4001);
      r.xi_empirical[static_cast<size_t>(i)] += emp;
      if (mk.c_m && mk.rho) {
        // The bound holds on [-1, 1]; the affine map to [a, b] preserves it.
        r.xi_bound[static_cast<size_t>(i)] += remainder_bound(*mk.c_m, *mk.rho, mk.k);
      } else {
        r.xi_bound[static_cast<size_t>(i)] += emp;
        r.bound_is_analytic[static_cast<size_t>(i)] = false;
      }
      repl.emplace_back(mk.expr, p);
    }
    try {
      r.P.push_back(to_polynomial(sys.f[static_cast<size_t>(i)], sys.n, repl));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(fmt::format("f[{}]: {}", i + 1, e.what()));
    }
  }
  return r;
}

Eigen::MatrixXd finite_difference(const Eigen::MatrixXd& x, double dt) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, x.cols());
  if (n < 2) return d;
  if (n == 2) {
    d.row(0) = d.row(1) = (x.row(1) - x.row(0)) / dt;
    return d;
  }
  for (Eigen::Index k = 1; k + 1 < n; ++k) d.row(k) = (x.row(k + 1) - x.row(k - 1)) / (2.0 * dt);
  d.row(0) = (-3.0 * x.row(0) + 4.0 * x.row(1) - x.row(2)) / (2.0 * dt);
  d.row(n - 1) = (3.0 * x.row(n - 1) - 4.0 * x.row(n - 2) + x.row(n - 3)) / (2.0 * dt);
  return d;
}

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<size_t>(v.size())}; }

Eigen::VectorXd control(const std::vector<Polynomial>& u, int m, std::span<const double> x) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
  for (int j = 0; j < m && j < static_cast<int>(u.size()); ++j) out(j) = u[static_cast<size_t>(j)](x);
  return out;
}

void attach_residuals(const ControlAffineSystem& sys, TrajectoryDataset& data) {
  data.d.resize(data.x.rows(), sys.n);
  for (Eigen::Index k = 0; k < data.x.rows(); ++k) {
    const Eigen::VectorXd xk = data.x.row(k);
    const Eigen::VectorXd uk = data.u.row(k);
    data.d.row(k) = data.xdot.row(k) - sys.rhs(as_span(xk), as_span(uk)).transpose();
  }
}

}  // namespace

TrajectoryDataset generate_measurements(const ControlAffineSystem& sys, const std::vector<double>& x0, double T, double dt,
                                        const std::vector<Polynomial>& controller, std::uint64_t seed) {
  if (!(dt > 0)) throw std::invalid_argument("generate_measurements: dt must be > 0");
  if (!(T >= dt)) throw std::invalid_argument("generate_measurements: need T >= dt");
  if (static_cast<int>(x0.size()) != sys.n) throw std::invalid_argument("generate_measurements: x0 has the wrong size");
  const int samples = static_cast<int>(std::ceil(T / dt - 1e-9));
  TrajectoryDataset data;
  std::vector<Eigen::VectorXd> xs;
  std::vector<Eigen::VectorXd> us;
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(x0.data(), sys.n);
  auto field = [&](const Eigen::VectorXd& s) {
    const Eigen::VectorXd u = control(controller, sys.m, as_span(s));
    return sys.rhs(as_span(s), as_span(u));
  };
  for (int k = 0; k < samples; ++k) {
    if (!x.allFinite() || x.norm() > 1e6) {
      data.truncated = true;
      fmt::print(stderr, "warning: trajectory escaped at t = {}; truncated to {} samples\n", k * dt, k);
      break;
    }
    xs.push_back(x);
    us.push_back(control(controller, sys.m, as_span(x)));
    data.t.push_back(k * dt);
    const Eigen::VectorXd k1 = field(x);
    const Eigen::VectorXd k2 = field(x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = field(x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = field(x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  const auto rows = static_cast<Eigen::Index>(xs.size());
  data.x.resize(rows, sys.n);
  data.u.resize(rows, sys.m);
  for (Eigen::Index k = 0; k < rows; ++k) {
    data.x.row(k) = xs[static_cast<size_t>(k)].transpose();
    if (sys.m > 0) data.u.row(k) = us[static_cast<size_t>(k)].transpose();
  }
  data.xdot = finite_difference(data.x, dt);
  if (sys.sigma_n > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sys.sigma_n);
    for (Eigen::Index k = 0; k < data.xdot.rows(); ++k) {
      for (Eigen::Index i = 0; i < data.xdot.cols(); ++i) data.xdot(k, i) += noise(rng);
    }
  }
  attach_residuals(sys, data);
  return data;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryDataset& data) {
  os << "t";
  for (Eigen::Index i = 0; i < data.x.cols(); ++i) os << ",x" << i + 1;
  for (Eigen::Index j = 0; j < data.u.cols(); ++j) os << ",u" << j + 1;
  os << "\n";
  for (int k = 0; k < data.size(); ++k) {
    os << fmt::format("{}", data.t[static_cast<size_t>(k)]);
    for (Eigen::Index i = 0; i < data.x.cols(); ++i) os << fmt::format(",{}", data.x(k, i));
    for (Eigen::Index j = 0; j < data.u.cols(); ++j) os << fmt::format(",{}", data.u(k, j));
    os << "\n";
  }
}

void write_measurements_csv(std::ostream& os, const TrajectoryDataset& data) {
  for (Eigen::Index i = 0; i < data.x.cols(); ++i) os << (i ? "," : "") << "x" << i + 1;
  for (Eigen::Index i = 0; i < data.d.cols(); ++i) os << ",d" << i + 1;
  os << "\n";
  for (int k = 0; k < data.size(); ++k) {
    for (Eigen::Index i = 0; i < data.x.cols(); ++i) os << (i ? "," : "") << fmt::format("{}", data.x(k, i));
    for (Eigen::Index i = 0; i < data.d.cols(); ++i) os << fmt::format(",{}", data.d(k, i));
    os << "\n";
  }
}

TrajectoryDataset read_trajectory_csv(std::istream& is, const ControlAffineSystem& sys) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("trajectory csv: empty input");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::erase_if(cell, [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
      header.push_back(cell);
    }
  }
  std::vector<std::string> expected{"t"};
  for (int i = 0; i < sys.n; ++i) expected.push_back(fmt::format("x{}", i + 1));
  for (int j = 0; j < sys.m; ++j) expected.push_back(fmt::format("u{}", j + 1));
  if (header != expected) throw std::runtime_error(fmt::format("trajectory csv: expected header with {} columns t,x1..,u1..", expected.size()));
  TrajectoryDataset data;
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(fmt::format("trajectory csv line {}: bad number '{}'", lineno, cell));
      }
    }
    if (row.size() != expected.size()) throw std::runtime_error(fmt::format("trajectory csv line {}: wrong column count", lineno));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n < 3) throw std::runtime_error("trajectory csv: need at least 3 samples");
  data.x.resize(n, sys.n);
  data.u.resize(n, sys.m);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& r = rows[static_cast<size_t>(k)];
    data.t.push_back(r[0]);
    for (int i = 0; i < sys.n; ++i) data.x(k, i) = r[static_cast<size_t>(1 + i)];
    for (int j = 0; j < sys.m; ++j) data.u(k, j) = r[static_cast<size_t>(1 + sys.n + j)];
  }
  data.xdot = finite_difference(data.x, data.t[1] - data.t[0]);
  attach_residuals(sys, data);
  return data;
}

std::vector<Polynomial> LearnedSystem::nominal_drift() const {
  std::vector<Polynomial> out = P;
  for (size_t i = 0; i < out.size() && i < envelope.size(); ++i) {
    if (learned[i]) out[i] += envelope[i].mean;
  }
  return out;
}

}  // namespace saferoa
