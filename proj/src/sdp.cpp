#include "saferoa/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <sstream>

#include <fmt/format.h>

namespace saferoa {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "Optimal";
    case SolveStatus::Infeasible:
      return "Infeasible";
    case SolveStatus::Unbounded:
      return "Unbounded";
    case SolveStatus::Inaccurate:
      return "Inaccurate";
    case SolveStatus::Failed:
      return "Failed";
  }
  return "Unknown";
}

std::string SdpInstance::to_sparse_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "# saferoa sparse SDP\n";
  os << "rows " << num_rows << "\n";
  os << "blocks " << block_sizes.size();
  for (int n : block_sizes) os << " " << n;
  os << "\nfree " << num_free << "\nnonneg " << num_nonneg << "\n";
  os << "rhs\n";
  for (int r = 0; r < num_rows; ++r) os << r << " " << rhs(r) << "\n";
  os << "block_terms " << block_terms.size() << "\n";
  for (const auto& t : block_terms) os << t.row << " " << t.block << " " << t.i << " " << t.j << " " << t.value << "\n";
  os << "free_terms " << free_terms.size() << "\n";
  for (const auto& t : free_terms) os << t.row << " " << t.index << " " << t.value << "\n";
  os << "nonneg_terms " << nonneg_terms.size() << "\n";
  for (const auto& t : nonneg_terms) os << t.row << " " << t.index << " " << t.value << "\n";
  os << "block_cost " << block_cost.size() << "\n";
  for (const auto& c : block_cost) os << c.block << " " << c.i << " " << c.j << " " << c.value << "\n";
  os << "free_cost " << free_cost.size() << "\n";
  for (Eigen::Index k = 0; k < free_cost.size(); ++k) os << k << " " << free_cost(k) << "\n";
  os << "nonneg_cost " << nonneg_cost.size() << "\n";
  for (Eigen::Index k = 0; k < nonneg_cost.size(); ++k) os << k << " " << nonneg_cost(k) << "\n";
  return os.str();
}

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Symmetric coefficient entry in full orientation: contributes a * X(i, j).
struct Entry {
  int i;
  int j;
  double a;
};

struct BlockData {
  int n = 0;
  std::vector<int> rows;                    // global (reduced) row ids touching this block
  std::vector<std::vector<Entry>> entries;  // parallel to rows
  MatrixXd cost;
};

// Reduced problem after presolve and row equilibration.
struct Problem {
  int m = 0;
  std::vector<BlockData> blocks;
  MatrixXd F;  // m x nf
  MatrixXd L;  // m x nl
  VectorXd b;
  VectorXd cf;
  VectorXd cl;
  std::vector<int> free_map;    // reduced free index -> original
  std::vector<int> nonneg_map;  // reduced nonneg index -> original
  std::vector<int> row_map;     // reduced row -> original
  VectorXd row_scale;           // per reduced row
};

double max_step(const MatrixXd& x, const MatrixXd& dx, bool* ok) {
  Eigen::LLT<MatrixXd> llt(x);
  if (llt.info() != Eigen::Success) {
    *ok = false;
    return 0.0;
  }
  MatrixXd t = llt.matrixL().solve(dx);
  t = llt.matrixL().solve(t.transpose()).transpose();
  t = 0.5 * (t + t.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(t, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  return lmin < 0 ? -1.0 / lmin : std::numeric_limits<double>::infinity();
}

double max_step_vec(const VectorXd& x, const VectorXd& dx) {
  double a = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < x.size(); ++k) {
    if (dx(k) < 0) a = std::min(a, -x(k) / dx(k));
  }
  return a;
}

// A(G) for a possibly nonsymmetric G.
void apply_block(const BlockData& blk, const MatrixXd& g, VectorXd& out) {
  for (size_t k = 0; k < blk.rows.size(); ++k) {
    double s = 0.0;
    for (const auto& e : blk.entries[k]) s += e.a * g(e.i, e.j);
    out(blk.rows[k]) += s;
  }
}

MatrixXd adjoint_block(const BlockData& blk, const VectorXd& lambda) {
  MatrixXd s = MatrixXd::Zero(blk.n, blk.n);
  for (size_t k = 0; k < blk.rows.size(); ++k) {
    const double l = lambda(blk.rows[k]);
    if (l == 0.0) continue;
    for (const auto& e : blk.entries[k]) s(e.i, e.j) += e.a * l;
  }
  return s;
}

/// Sums duplicate entries and drops those that cancel.
template <class Term, class Key>
std::vector<Term> aggregate(const std::vector<Term>& terms, Key key) {
  std::map<decltype(key(terms.front())), std::pair<Term, double>> acc;
  for (const auto& t : terms) {
    auto [it, inserted] = acc.emplace(key(t), std::pair<Term, double>{t, std::abs(t.value)});
    if (!inserted) {
      it->second.first.value += t.value;
      it->second.second += std::abs(t.value);
    }
  }
  std::vector<Term> out;
  for (const auto& [k, v] : acc) {
    if (std::abs(v.first.value) > 1e-13 * v.second) out.push_back(v.first);
  }
  return out;
}

bool build_problem(const SdpInstance& raw, Problem& p, SdpSolution& sol) {
  SdpInstance in = raw;
  if (!raw.free_terms.empty()) {
    in.free_terms = aggregate(raw.free_terms, [](const auto& t) { return std::pair{t.row, t.index}; });
  }
  if (!raw.nonneg_terms.empty()) {
    in.nonneg_terms = aggregate(raw.nonneg_terms, [](const auto& t) { return std::pair{t.row, t.index}; });
  }
  if (!raw.block_terms.empty()) {
    in.block_terms = aggregate(raw.block_terms, [](const auto& t) {
      return std::tuple{t.row, t.block, std::min(t.i, t.j), std::max(t.i, t.j)};
    });
  }
  const int nb = static_cast<int>(in.block_sizes.size());
  const int m0 = in.num_rows;

  // Column activity for presolve.
  std::vector<bool> free_used(static_cast<size_t>(in.num_free), false);
  std::vector<bool> nonneg_used(static_cast<size_t>(in.num_nonneg), false);
  std::vector<bool> row_used(static_cast<size_t>(m0), false);
  for (const auto& t : in.free_terms) {
    if (t.value != 0.0) {
      free_used[static_cast<size_t>(t.index)] = true;
      row_used[static_cast<size_t>(t.row)] = true;
    }
  }
  for (const auto& t : in.nonneg_terms) {
    if (t.value != 0.0) {
      nonneg_used[static_cast<size_t>(t.index)] = true;
      row_used[static_cast<size_t>(t.row)] = true;
    }
  }
  for (const auto& t : in.block_terms) {
    if (t.value != 0.0) row_used[static_cast<size_t>(t.row)] = true;
  }
  auto cost_free = [&](int k) { return in.free_cost.size() ? in.free_cost(k) : 0.0; };
  auto cost_nonneg = [&](int k) { return in.nonneg_cost.size() ? in.nonneg_cost(k) : 0.0; };

  for (int k = 0; k < in.num_free; ++k) {
    if (!free_used[static_cast<size_t>(k)] && cost_free(k) != 0.0) {
      sol.status = SolveStatus::Unbounded;
      sol.message = fmt::format("free variable {} has nonzero cost but appears in no constraint", k);
      return false;
    }
  }
  for (int k = 0; k < in.num_nonneg; ++k) {
    if (!nonneg_used[static_cast<size_t>(k)] && cost_nonneg(k) < 0.0) {
      sol.status = SolveStatus::Unbounded;
      sol.message = fmt::format("nonnegative variable {} has negative cost but appears in no constraint", k);
      return false;
    }
  }
  std::vector<int> row_index(static_cast<size_t>(m0), -1);
  for (int r = 0; r < m0; ++r) {
    if (row_used[static_cast<size_t>(r)]) {
      row_index[static_cast<size_t>(r)] = static_cast<int>(p.row_map.size());
      p.row_map.push_back(r);
    } else if (std::abs(in.rhs(r)) > 1e-12) {
      sol.status = SolveStatus::Infeasible;
      sol.message = fmt::format("row {} has no variables but right-hand side {}", r, in.rhs(r));
      return false;
    }
  }
  p.m = static_cast<int>(p.row_map.size());
  std::vector<int> free_index(static_cast<size_t>(in.num_free), -1);
  for (int k = 0; k < in.num_free; ++k) {
    if (free_used[static_cast<size_t>(k)]) {
      free_index[static_cast<size_t>(k)] = static_cast<int>(p.free_map.size());
      p.free_map.push_back(k);
    }
  }
  std::vector<int> nonneg_index(static_cast<size_t>(in.num_nonneg), -1);
  for (int k = 0; k < in.num_nonneg; ++k) {
    if (nonneg_used[static_cast<size_t>(k)]) {
      nonneg_index[static_cast<size_t>(k)] = static_cast<int>(p.nonneg_map.size());
      p.nonneg_map.push_back(k);
    }
  }

  // Row norms for equilibration.
  VectorXd norm2 = VectorXd::Zero(p.m);
  for (const auto& t : in.block_terms) {
    const int r = row_index[static_cast<size_t>(t.row)];
    if (r < 0) continue;
    // Off-diagonal linear-form value v corresponds to two symmetric entries v/2.
    norm2(r) += t.i == t.j ? t.value * t.value : 0.5 * t.value * t.value;
  }
  for (const auto& t : in.free_terms) {
    const int r = row_index[static_cast<size_t>(t.row)];
    if (r >= 0) norm2(r) += t.value * t.value;
  }
  for (const auto& t : in.nonneg_terms) {
    const int r = row_index[static_cast<size_t>(t.row)];
    if (r >= 0) norm2(r) += t.value * t.value;
  }
  p.row_scale = norm2.cwiseSqrt().cwiseInverse();

  p.b.resize(p.m);
  for (int r = 0; r < p.m; ++r) p.b(r) = in.rhs(p.row_map[static_cast<size_t>(r)]) * p.row_scale(r);

  p.blocks.resize(static_cast<size_t>(nb));
  std::vector<std::map<int, size_t>> local(static_cast<size_t>(nb));
  for (int b = 0; b < nb; ++b) {
    p.blocks[static_cast<size_t>(b)].n = in.block_sizes[static_cast<size_t>(b)];
    p.blocks[static_cast<size_t>(b)].cost = MatrixXd::Zero(in.block_sizes[static_cast<size_t>(b)], in.block_sizes[static_cast<size_t>(b)]);
  }
  for (const auto& t : in.block_terms) {
    const int r = row_index[static_cast<size_t>(t.row)];
    if (r < 0 || t.value == 0.0) continue;
    auto& blk = p.blocks[static_cast<size_t>(t.block)];
    auto [it, inserted] = local[static_cast<size_t>(t.block)].emplace(r, blk.rows.size());
    if (inserted) {
      blk.rows.push_back(r);
      blk.entries.emplace_back();
    }
    auto& list = blk.entries[it->second];
    const double v = t.value * p.row_scale(r);
    const int i = std::min(t.i, t.j);
    const int j = std::max(t.i, t.j);
    if (i == j) {
      list.push_back({i, i, v});
    } else {
      list.push_back({i, j, 0.5 * v});
      list.push_back({j, i, 0.5 * v});
    }
  }
  for (const auto& c : in.block_cost) {
    auto& cm = p.blocks[static_cast<size_t>(c.block)].cost;
    if (c.i == c.j) {
      cm(c.i, c.i) += c.value;
    } else {
      cm(c.i, c.j) += 0.5 * c.value;
      cm(c.j, c.i) += 0.5 * c.value;
    }
  }

  p.F = MatrixXd::Zero(p.m, static_cast<Index>(p.free_map.size()));
  for (const auto& t : in.free_terms) {
    const int r = row_index[static_cast<size_t>(t.row)];
    const int k = free_index[static_cast<size_t>(t.index)];
    if (r >= 0 && k >= 0) p.F(r, k) += t.value * p.row_scale(r);
  }
  p.L = MatrixXd::Zero(p.m, static_cast<Index>(p.nonneg_map.size()));
  for (const auto& t : in.nonneg_terms) {
    const int r = row_index[static_cast<size_t>(t.row)];
    const int k = nonneg_index[static_cast<size_t>(t.index)];
    if (r >= 0 && k >= 0) p.L(r, k) += t.value * p.row_scale(r);
  }
  p.cf.resize(static_cast<Index>(p.free_map.size()));
  for (size_t k = 0; k < p.free_map.size(); ++k) p.cf(static_cast<Index>(k)) = cost_free(p.free_map[k]);
  p.cl.resize(static_cast<Index>(p.nonneg_map.size()));
  for (size_t k = 0; k < p.nonneg_map.size(); ++k) p.cl(static_cast<Index>(k)) = cost_nonneg(p.nonneg_map[k]);
  return true;
}

struct Iterate {
  std::vector<MatrixXd> X;
  std::vector<MatrixXd> S;
  VectorXd y;       // free primal
  VectorXd w;       // nonneg primal
  VectorXd z;       // nonneg dual slack
  VectorXd lambda;  // equality duals
};

struct Direction {
  std::vector<MatrixXd> dX;
  std::vector<MatrixXd> dS;
  VectorXd dy;
  VectorXd dw;
  VectorXd dz;
  VectorXd dlambda;
};

class Workspace {
 public:
  Workspace(const Problem& p, const SdpSettings& s) : p_(p), s_(s) {}

  SdpSolution run(SdpSolution sol);

 private:
  bool factor(const Iterate& it);
  Direction direction(const Iterate& it, double mu_target, const Direction* predictor);
  void residuals(const Iterate& it);
  double primal_objective(const Iterate& it) const;

  const Problem& p_;
  const SdpSettings& s_;

  std::vector<MatrixXd> sinv_;
  std::vector<MatrixXd> rd_;
  VectorXd rp_;
  VectorXd rf_;
  VectorXd rl_;
  Eigen::LLT<MatrixXd> mchol_;
  MatrixXd schur_;
  Eigen::PartialPivLU<MatrixXd> kkt_;
  MatrixXd mf_;  // M^-1 F
  Eigen::FullPivLU<MatrixXd> reduced_lu_;
  VectorXd dscale_;  // w / z
};

void Workspace::residuals(const Iterate& it) {
  rp_ = p_.b - p_.F * it.y - p_.L * it.w;
  for (size_t b = 0; b < p_.blocks.size(); ++b) {
    VectorXd ax = VectorXd::Zero(p_.m);
    apply_block(p_.blocks[b], it.X[b], ax);
    rp_ -= ax;
  }
  rd_.resize(p_.blocks.size());
  for (size_t b = 0; b < p_.blocks.size(); ++b) {
    rd_[b] = p_.blocks[b].cost - adjoint_block(p_.blocks[b], it.lambda) - it.S[b];
    rd_[b] = 0.5 * (rd_[b] + rd_[b].transpose());
  }
  rf_ = p_.cf - p_.F.transpose() * it.lambda;
  rl_ = p_.cl - p_.L.transpose() * it.lambda - it.z;
}

double Workspace::primal_objective(const Iterate& it) const {
  double v = p_.cf.dot(it.y) + p_.cl.dot(it.w);
  for (size_t b = 0; b < p_.blocks.size(); ++b) v += p_.blocks[b].cost.cwiseProduct(it.X[b]).sum();
  return v;
}

bool Workspace::factor(const Iterate& it) {
  const Index m = p_.m;
  MatrixXd schur = MatrixXd::Zero(m, m);
  sinv_.resize(p_.blocks.size());
  for (size_t b = 0; b < p_.blocks.size(); ++b) {
    const auto& blk = p_.blocks[b];
    Eigen::LLT<MatrixXd> sl(it.S[b]);
    if (sl.info() != Eigen::Success) return false;
    sinv_[b] = sl.solve(MatrixXd::Identity(blk.n, blk.n));
    sinv_[b] = 0.5 * (sinv_[b] + sinv_[b].transpose());
    const MatrixXd& x = it.X[b];
    const MatrixXd& h = sinv_[b];
    MatrixXd w(blk.n, blk.n);
    for (size_t q = 0; q < blk.rows.size(); ++q) {
      // W(t, s) = sum a X(t, k) H(l, s) over entries (k, l, a) of row q.
      w.setZero();
      for (const auto& e : blk.entries[q]) w.noalias() += e.a * x.col(e.i) * h.row(e.j);
      const int rq = blk.rows[q];
      for (size_t pp = 0; pp <= q; ++pp) {
        double v = 0.0;
        for (const auto& e : blk.entries[pp]) v += e.a * w(e.j, e.i);
        const int rp = blk.rows[pp];
        schur(rp, rq) += v;
        if (rp != rq) schur(rq, rp) += v;
      }
    }
  }
  dscale_ = it.w.cwiseQuotient(it.z);
  if (p_.L.cols() > 0) schur.noalias() += p_.L * dscale_.asDiagonal() * p_.L.transpose();
  schur = 0.5 * (schur + schur.transpose());

  const double diag_max = std::max(schur.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  double reg = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    MatrixXd trial = schur;
    if (reg > 0) trial.diagonal().array() += reg;
    mchol_.compute(trial);
    if (mchol_.info() == Eigen::Success) break;
    reg = reg == 0.0 ? 1e-14 * diag_max : reg * 100.0;
  }
  if (mchol_.info() != Eigen::Success) return false;
  schur_ = std::move(schur);
  const Index nf = p_.F.cols();
  if (nf > 0 && !s_.augmented_lu) {
    // Eliminate dlambda: (F' M^-1 F) dy = F' M^-1 h - rf.
    mf_ = mchol_.solve(p_.F);
    const MatrixXd reduced = p_.F.transpose() * mf_;
    reduced_lu_.compute(0.5 * (reduced + reduced.transpose()));
  } else if (nf > 0) {
    // Augmented system [M F; F' 0]; pivoted LU avoids forming F' M^-1 F.
    MatrixXd kkt = MatrixXd::Zero(m + nf, m + nf);
    kkt.topLeftCorner(m, m) = schur_;
    if (reg > 0) kkt.topLeftCorner(m, m).diagonal().array() += reg;
    kkt.topRightCorner(m, nf) = p_.F;
    kkt.bottomLeftCorner(nf, m) = p_.F.transpose();
    kkt.bottomRightCorner(nf, nf).diagonal().array() = -1e-12;
    kkt_.compute(kkt);
  }
  return true;
}

Direction Workspace::direction(const Iterate& it, double mu_target, const Direction* pred) {
  const size_t nb = p_.blocks.size();
  Direction d;
  std::vector<MatrixXd> g(nb);
  VectorXd h = rp_;
  for (size_t b = 0; b < nb; ++b) {
    g[b] = mu_target * sinv_[b] - it.X[b] - it.X[b] * rd_[b] * sinv_[b];
    if (pred) g[b] -= pred->dX[b] * pred->dS[b] * sinv_[b];
    VectorXd ag = VectorXd::Zero(p_.m);
    apply_block(p_.blocks[b], g[b], ag);
    h -= ag;
  }
  VectorXd gl;
  if (p_.L.cols() > 0) {
    VectorXd comp = VectorXd::Constant(it.w.size(), mu_target) - it.w.cwiseProduct(it.z);
    if (pred) comp -= pred->dw.cwiseProduct(pred->dz);
    gl = comp.cwiseQuotient(it.z) - dscale_.cwiseProduct(rl_);
    h -= p_.L * gl;
  }
  // Solves [M F; F' 0] [dlambda; dy] = [h; rf] with iterative refinement.
  auto reduced_solve = [&](const VectorXd& rh, const VectorXd& rfree, VectorXd& dl, VectorXd& dy) {
    if (p_.F.cols() > 0 && !s_.augmented_lu) {
      dy = reduced_lu_.solve(mf_.transpose() * rh - rfree);
      dl = mchol_.solve(rh - p_.F * dy);
    } else if (p_.F.cols() > 0) {
      VectorXd rhs(rh.size() + rfree.size());
      rhs << rh, rfree;
      const VectorXd sol = kkt_.solve(rhs);
      dl = sol.head(rh.size());
      dy = sol.tail(rfree.size());
    } else {
      dy = VectorXd::Zero(0);
      dl = mchol_.solve(rh);
    }
  };
  reduced_solve(h, rf_, d.dlambda, d.dy);
  for (int refine = 0; refine < 8; ++refine) {
    VectorXd r1 = h - schur_ * d.dlambda;
    if (p_.F.cols() > 0) r1 -= p_.F * d.dy;
    const VectorXd r2 = p_.F.cols() > 0 ? VectorXd(rf_ - p_.F.transpose() * d.dlambda) : VectorXd::Zero(0);
    if (r1.norm() + r2.norm() <= 1e-15 * (1.0 + h.norm() + rf_.norm())) break;
    VectorXd cl;
    VectorXd cy;
    reduced_solve(r1, r2, cl, cy);
    d.dlambda += cl;
    d.dy += cy;
  }
  d.dX.resize(nb);
  d.dS.resize(nb);
  for (size_t b = 0; b < nb; ++b) {
    const MatrixXd at = adjoint_block(p_.blocks[b], d.dlambda);
    d.dS[b] = rd_[b] - at;
    MatrixXd dx = g[b] + it.X[b] * at * sinv_[b];
    d.dX[b] = 0.5 * (dx + dx.transpose());
  }
  if (p_.L.cols() > 0) {
    const VectorXd ltl = p_.L.transpose() * d.dlambda;
    d.dz = rl_ - ltl;
    d.dw = gl + dscale_.cwiseProduct(ltl);
  } else {
    d.dz = VectorXd::Zero(0);
    d.dw = VectorXd::Zero(0);
  }
  return d;
}

SdpSolution Workspace::run(SdpSolution sol) {
  const size_t nb = p_.blocks.size();
  int cone_dim = static_cast<int>(p_.L.cols());
  for (const auto& blk : p_.blocks) cone_dim += blk.n;
  if (cone_dim == 0) cone_dim = 1;

  const double bnorm = p_.b.norm();
  double cnorm = p_.cf.norm() + p_.cl.norm();
  for (const auto& blk : p_.blocks) cnorm += blk.cost.norm();

  Iterate it;
  double xi = 10.0;
  double eta = 10.0;
  for (const auto& blk : p_.blocks) xi = std::max(xi, std::sqrt(static_cast<double>(blk.n)));
  xi = std::max(xi, 1.0 + p_.b.cwiseAbs().maxCoeff());
  eta = std::max({eta, xi, 1.0 + cnorm});
  it.X.resize(nb);
  it.S.resize(nb);
  for (size_t b = 0; b < nb; ++b) {
    it.X[b] = xi * MatrixXd::Identity(p_.blocks[b].n, p_.blocks[b].n);
    it.S[b] = eta * MatrixXd::Identity(p_.blocks[b].n, p_.blocks[b].n);
  }
  it.y = VectorXd::Zero(p_.F.cols());
  it.w = VectorXd::Constant(p_.L.cols(), xi);
  it.z = VectorXd::Constant(p_.L.cols(), eta);
  it.lambda = VectorXd::Zero(p_.m);

  double best_merit = std::numeric_limits<double>::infinity();
  Iterate best = it;
  double best_pinf = 0, best_dinf = 0, best_gap = 0;

  for (int iter = 0; iter <= s_.max_iterations; ++iter) {
    residuals(it);
    double mu = it.w.dot(it.z);
    for (size_t b = 0; b < nb; ++b) mu += it.X[b].cwiseProduct(it.S[b]).sum();
    mu /= cone_dim;

    const double pobj = primal_objective(it);
    const double dobj = p_.b.dot(it.lambda);
    const double pinf = rp_.norm() / (1.0 + bnorm);
    double rdn2 = rf_.squaredNorm() + rl_.squaredNorm();
    for (const auto& r : rd_) rdn2 += r.squaredNorm();
    const double dinf = std::sqrt(rdn2) / (1.0 + cnorm);
    const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    sol.iterations = iter;
    if (s_.verbose) {
      fmt::print("  it {:3d} pobj {: .8e} dobj {: .8e} pinf {:.2e} dinf {:.2e} gap {:.2e} mu {:.2e}\n", iter, pobj, dobj, pinf,
                 dinf, gap, mu);
    }
    const double merit = std::max({pinf, dinf, gap});
    if (std::isfinite(merit) && merit < best_merit) {
      best_merit = merit;
      best = it;
      best_pinf = pinf;
      best_dinf = dinf;
      best_gap = gap;
    }
    if (pinf < s_.feasibility_tol && dinf < s_.feasibility_tol && gap < s_.gap_tol) {
      sol.status = SolveStatus::Optimal;
      break;
    }
    // Certificates of infeasibility from diverging iterates.
    if (iter >= 3 && dobj > 0) {
      // A'lambda + S = C - Rd, and so on for the scalar parts.
      double ray = (p_.cf - rf_).norm() + (p_.cl - rl_).norm();
      for (size_t b = 0; b < nb; ++b) ray += (p_.blocks[b].cost - rd_[b]).norm();
      if (ray / dobj < s_.infeasibility_tol) {
        sol.status = SolveStatus::Infeasible;
        sol.message = fmt::format("dual ray found (bound {:.3e})", ray / dobj);
        break;
      }
    }
    if (iter >= 3 && pobj < 0) {
      const double ray = (p_.b - rp_).norm() / -pobj;
      if (ray < s_.infeasibility_tol) {
        sol.status = SolveStatus::Unbounded;
        sol.message = fmt::format("primal ray found (bound {:.3e})", ray);
        break;
      }
    }
    if (iter == s_.max_iterations) break;

    if (!factor(it)) {
      sol.message = "factorization failed";
      break;
    }
    const Direction pred = direction(it, 0.0, nullptr);
    auto step_lengths = [&](const Direction& d, double& ap, double& ad) -> bool {
      bool ok = true;
      ap = max_step_vec(it.w, d.dw);
      ad = max_step_vec(it.z, d.dz);
      for (size_t b = 0; b < nb; ++b) {
        ap = std::min(ap, max_step(it.X[b], d.dX[b], &ok));
        ad = std::min(ad, max_step(it.S[b], d.dS[b], &ok));
      }
      return ok;
    };
    double ap = 0, ad = 0;
    if (!step_lengths(pred, ap, ad)) {
      sol.message = "iterate left the cone";
      break;
    }
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double mu_aff = (it.w + ap * pred.dw).dot(it.z + ad * pred.dz);
    for (size_t b = 0; b < nb; ++b) mu_aff += (it.X[b] + ap * pred.dX[b]).cwiseProduct(it.S[b] + ad * pred.dS[b]).sum();
    mu_aff /= cone_dim;
    double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3.0);
    sigma = std::clamp(sigma, 0.0, 1.0);
    // Keep some centering while far from feasibility.
    if (pinf > 1e-2 || dinf > 1e-2) sigma = std::max(sigma, 0.1);

    const Direction corr = direction(it, sigma * mu, &pred);
    if (!step_lengths(corr, ap, ad)) {
      sol.message = "iterate left the cone";
      break;
    }
    ap = std::min(1.0, s_.step_fraction * ap);
    ad = std::min(1.0, s_.step_fraction * ad);
    // Backtrack when an inaccurate direction would raise the duality measure.
    for (int cut = 0; cut < 10; ++cut) {
      double mu_new = (it.w + ap * corr.dw).dot(it.z + ad * corr.dz);
      for (size_t b = 0; b < nb; ++b) mu_new += (it.X[b] + ap * corr.dX[b]).cwiseProduct(it.S[b] + ad * corr.dS[b]).sum();
      mu_new /= cone_dim;
      if (mu_new <= mu || pinf > 1e-2 || dinf > 1e-2) break;
      ap *= 0.5;
      ad *= 0.5;
    }
    for (size_t b = 0; b < nb; ++b) {
      it.X[b] += ap * corr.dX[b];
      it.S[b] += ad * corr.dS[b];
      it.X[b] = 0.5 * (it.X[b] + it.X[b].transpose());
      it.S[b] = 0.5 * (it.S[b] + it.S[b].transpose());
    }
    it.y += ap * corr.dy;
    it.w += ap * corr.dw;
    it.z += ad * corr.dz;
    it.lambda += ad * corr.dlambda;
  }

  if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::Infeasible && sol.status != SolveStatus::Unbounded) {
    it = best;
    if (best_merit < s_.inaccurate_tol) {
      sol.status = SolveStatus::Inaccurate;
    } else {
      sol.status = SolveStatus::Failed;
    }
    if (sol.message.empty()) sol.message = "iteration limit reached";
    sol.primal_infeasibility = best_pinf;
    sol.dual_infeasibility = best_dinf;
    sol.relative_gap = best_gap;
  } else {
    residuals(it);
    sol.primal_infeasibility = rp_.norm() / (1.0 + bnorm);
    double rdn2 = rf_.squaredNorm() + rl_.squaredNorm();
    for (const auto& r : rd_) rdn2 += r.squaredNorm();
    sol.dual_infeasibility = std::sqrt(rdn2) / (1.0 + cnorm);
  }
  sol.primal_objective = primal_objective(it);
  sol.dual_objective = p_.b.dot(it.lambda);
  if (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::Inaccurate) {
    sol.relative_gap = std::abs(sol.primal_objective - sol.dual_objective) /
                       (1.0 + std::abs(sol.primal_objective) + std::abs(sol.dual_objective));
  }
  sol.blocks = it.X;
  for (Index k = 0; k < it.y.size(); ++k) sol.free_values(p_.free_map[static_cast<size_t>(k)]) = it.y(k);
  for (Index k = 0; k < it.w.size(); ++k) sol.nonneg_values(p_.nonneg_map[static_cast<size_t>(k)]) = it.w(k);
  for (Index r = 0; r < it.lambda.size(); ++r) {
    sol.duals(p_.row_map[static_cast<size_t>(r)]) = it.lambda(r) * p_.row_scale(r);
  }
  return sol;
}

}  // namespace

SdpSolution InteriorPointSolver::solve(const SdpInstance& in) const {
  SdpSolution sol;
  sol.free_values = VectorXd::Zero(in.num_free);
  sol.nonneg_values = VectorXd::Zero(in.num_nonneg);
  sol.duals = VectorXd::Zero(in.num_rows);
  for (int n : in.block_sizes) sol.blocks.push_back(MatrixXd::Zero(n, n));
  try {
    Problem p;
    if (!build_problem(in, p, sol)) return sol;
    Workspace ws(p, settings_);
    return ws.run(std::move(sol));
  } catch (const std::exception& e) {
    sol.status = SolveStatus::Failed;
    sol.message = e.what();
    return sol;
  }
}

}  // namespace saferoa
