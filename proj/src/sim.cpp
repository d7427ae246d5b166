#include "saferoa/sim.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace saferoa {

int IntegratorConfig::steps() const {
  if (!(dt > 0)) throw std::invalid_argument("integrator: dt must be > 0");
  if (!(T >= 0)) throw std::invalid_argument("integrator: T must be >= 0");
  return static_cast<int>(std::ceil(T / dt - 1e-9));
}

Trajectory integrate_field(const VectorField& field, const Eigen::VectorXd& x0, const IntegratorConfig& cfg) {
  const int steps = cfg.steps();
  Trajectory tr;
  std::vector<Eigen::VectorXd> xs{x0};
  tr.t.push_back(0.0);
  Eigen::VectorXd x = x0;
  for (int k = 0; k < steps; ++k) {
    const double h = std::min(cfg.dt, cfg.T - k * cfg.dt);
    const Eigen::VectorXd k1 = field(x);
    const Eigen::VectorXd k2 = field(x + 0.5 * h * k1);
    const Eigen::VectorXd k3 = field(x + 0.5 * h * k2);
    const Eigen::VectorXd k4 = field(x + h * k3);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite() || x.norm() > 1e6) {
      tr.escaped = true;
      break;
    }
    xs.push_back(x);
    tr.t.push_back(k + 1 == steps ? cfg.T : (k + 1) * cfg.dt);
  }
  tr.x.resize(static_cast<Eigen::Index>(xs.size()), x0.size());
  for (size_t k = 0; k < xs.size(); ++k) tr.x.row(static_cast<Eigen::Index>(k)) = xs[k].transpose();
  return tr;
}

Trajectory integrate(const ControlAffineSystem& sys, const std::vector<Polynomial>& u, std::span<const double> x0,
                     const IntegratorConfig& cfg) {
  const VectorField field = [&](const Eigen::VectorXd& x) {
    const std::span<const double> xs(x.data(), static_cast<size_t>(x.size()));
    Eigen::VectorXd uv = Eigen::VectorXd::Zero(sys.m);
    for (int j = 0; j < sys.m && j < static_cast<int>(u.size()); ++j) uv(j) = u[static_cast<size_t>(j)](xs);
    return sys.rhs(xs, std::span<const double>(uv.data(), static_cast<size_t>(uv.size())));
  };
  return integrate_field(field, Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size())), cfg);
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t";
  for (Eigen::Index i = 0; i < traj.x.cols(); ++i) os << ",x" << i + 1;
  os << "\n";
  for (Eigen::Index k = 0; k < traj.x.rows(); ++k) {
    os << fmt::format("{}", traj.t[static_cast<size_t>(k)]);
    for (Eigen::Index i = 0; i < traj.x.cols(); ++i) os << fmt::format(",{}", traj.x(k, i));
    os << "\n";
  }
}

namespace {

std::vector<double> uniform_point(const Box& box, std::mt19937_64& rng) {
  std::vector<double> p(static_cast<size_t>(box.dim()));
  for (int i = 0; i < box.dim(); ++i) {
    const auto k = static_cast<size_t>(i);
    p[k] = std::uniform_real_distribution<double>(box.lo[k], box.hi[k])(rng);
  }
  return p;
}

}  // namespace

MeasureEstimate estimate_measure(const RegionPredicate& pred, const Box& box, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("estimate_measure: need n >= 1");
  std::mt19937_64 rng(seed);
  MeasureEstimate m;
  m.n = n;
  for (int k = 0; k < n; ++k) {
    if (pred(uniform_point(box, rng))) ++m.hits;
  }
  const double p = static_cast<double>(m.hits) / n;
  const double vol = box.volume();
  m.estimate = p * vol;
  m.se = vol * std::sqrt(p * (1.0 - p) / n);
  return m;
}

std::vector<std::vector<double>> sample_region(const RegionPredicate& pred, const Box& box, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> out;
  long long attempts = 0;
  const long long min_attempts = 100000;
  while (static_cast<int>(out.size()) < n) {
    auto p = uniform_point(box, rng);
    ++attempts;
    if (pred(p)) out.push_back(std::move(p));
    if (attempts >= min_attempts && static_cast<double>(out.size()) < 1e-4 * static_cast<double>(attempts)) {
      throw std::runtime_error(fmt::format("sample_region: acceptance rate {:.2e} below 1e-4 (degenerate region)",
                                           static_cast<double>(out.size()) / static_cast<double>(attempts)));
    }
  }
  return out;
}

RegionPredicate superlevel(const Polynomial& B) {
  return [B](std::span<const double> x) { return B(x) >= 0.0; };
}

RegionPredicate sublevel(const Polynomial& V, double c) {
  return [V, c](std::span<const double> x) { return V(x) <= c; };
}

MonteCarloReport verify_roa(const Certificate& cert, const ControlAffineSystem& sys, const VerifyConfig& cfg) {
  MonteCarloReport r;
  const auto starts = sample_region(superlevel(cert.B), cfg.box, cfg.n, cfg.seed);
  r.n_samples = cfg.n;
  r.region = estimate_measure(superlevel(cert.B), cfg.box, std::max(cfg.n, 10000), cfg.seed + 1);
  r.sampling_rate = r.region.estimate / cfg.box.volume();
  int converged = 0;
  int safe = 0;
  for (const auto& x0 : starts) {
    const Trajectory tr = integrate(sys, cert.u, x0, cfg.integrator);
    bool is_safe = true;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < tr.x.rows() && is_safe; ++k) {
      const Eigen::VectorXd xk = tr.x.row(k).transpose();
      const std::span<const double> xs(xk.data(), static_cast<size_t>(xk.size()));
      for (const auto& mi : sys.unsafe) {
        const double v = mi(xs);
        if (v <= 0) {
          is_safe = false;
          worst = v;
          break;
        }
      }
    }
    const double final_norm = tr.escaped ? std::numeric_limits<double>::infinity() : tr.final_state().norm();
    r.max_final_norm = std::max(r.max_final_norm, final_norm);
    const bool conv = !tr.escaped && final_norm <= cfg.converge_radius;
    converged += conv ? 1 : 0;
    safe += is_safe ? 1 : 0;
    if (r.witnesses.size() < 10) {
      if (tr.escaped) {
        r.witnesses.push_back({x0, "escaped", tr.t.back()});
      } else if (!is_safe) {
        r.witnesses.push_back({x0, "unsafe", worst});
      } else if (!conv) {
        r.witnesses.push_back({x0, "not_converged", final_norm});
      }
    }
  }
  r.fraction_converged = static_cast<double>(converged) / cfg.n;
  r.fraction_safe = static_cast<double>(safe) / cfg.n;
  return r;
}

RegionComparison compare_regions(const RegionPredicate& a, const RegionPredicate& b, const Box& box, int n,
                                 std::uint64_t seed) {
  RegionComparison r;
  std::mt19937_64 rng(seed);
  int in_a = 0;
  int in_b = 0;
  int in_both = 0;
  for (int k = 0; k < n; ++k) {
    const auto p = uniform_point(box, rng);
    const bool ia = a(p);
    const bool ib = b(p);
    in_a += ia;
    in_b += ib;
    in_both += ia && ib;
  }
  const double vol = box.volume();
  auto fill = [&](int hits) {
    const double p = static_cast<double>(hits) / n;
    return MeasureEstimate{p * vol, vol * std::sqrt(p * (1 - p) / n), hits, n};
  };
  r.a = fill(in_a);
  r.b = fill(in_b);
  r.containment = in_a > 0 ? static_cast<double>(in_both) / in_a : 1.0;
  if (in_a > 0) {
    // Delta method on the ratio of two proportions from the same samples.
    const double pa = static_cast<double>(in_a) / n;
    const double pb = static_cast<double>(in_b) / n;
    const double pab = static_cast<double>(in_both) / n;
    r.ratio = pb / pa;
    const double var = (pb * (1 - pb) / (pa * pa) + pb * pb * pa * (1 - pa) / (pa * pa * pa * pa) -
                        2.0 * pb * (pab - pa * pb) / (pa * pa * pa)) /
                       n;
    r.ratio_se = std::sqrt(std::max(0.0, var));
  } else {
    r.ratio = std::numeric_limits<double>::infinity();
  }
  return r;
}

RegionComparison compare_regions(const Certificate& a, const Certificate& b, const Box& box, int n, std::uint64_t seed) {
  if (a.n != b.n) throw std::invalid_argument("compare_regions: certificates differ in dimension");
  return compare_regions(superlevel(a.B), superlevel(b.B), box, n, seed);
}

SoundnessReport check_soundness(const Certificate& cert, const Box& box, int n, std::uint64_t seed) {
  LearnedSystem sys;
  sys.P = cert.P;
  sys.g = cert.g;
  std::vector<Polynomial> vdots;
  for (const auto& d : cert.vertices) vdots.push_back(lie_derivative(cert.V, closed_loop_field(sys, d, cert.u)));
  SoundnessReport r;
  r.max_vdot = -std::numeric_limits<double>::infinity();
  for (const auto& x : sample_region(superlevel(cert.B), box, n, seed)) {
    ++r.samples;
    for (const auto& vd : vdots) {
      const double v = vd(x);
      if (v > r.max_vdot) {
        r.max_vdot = v;
        r.argmax = x;
      }
    }
    for (const auto& mi : cert.unsafe) {
      if (mi(x) <= 0) {
        ++r.unsafe_hits;
        break;
      }
    }
  }
  return r;
}

Json measure_to_json(const MeasureEstimate& m) {
  return {{"estimate", m.estimate}, {"se", m.se}, {"hits", m.hits}, {"n", m.n}};
}

Json report_to_json(const MonteCarloReport& r) {
  Json w = Json::array();
  for (const auto& x : r.witnesses) w.push_back({{"x0", x.x0}, {"kind", x.kind}, {"value", x.value}});
  return {{"n_samples", r.n_samples},
          {"fraction_converged", r.fraction_converged},
          {"fraction_safe", r.fraction_safe},
          {"sampling_rate", r.sampling_rate},
          {"region_measure", measure_to_json(r.region)},
          {"max_final_norm", r.max_final_norm},
          {"witnesses", w}};
}

}  // namespace saferoa
