#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saferoa/dynamics.hpp"
#include "saferoa/json_util.hpp"
#include "saferoa/learn.hpp"
#include "saferoa/poly.hpp"
#include "saferoa/sdp.hpp"
#include "saferoa/sos.hpp"

namespace saferoa {

enum class DisturbanceMode { None, Envelope };

struct SynthesisConfig {
  int deg_u = 3;
  /// Degree of V from Loop 3 on; the initial V is quadratic.
  int deg_V = 2;
  int deg_B = 4;
  /// Minimum multiplier degree; raised where the constraint degree needs it.
  int deg_mult = 2;
  /// Linear extended class-K factor: gamma(B) = alpha * B.
  double alpha = 1.0;
  /// Relaxation of the decrease condition (dV/dt <= zeta where B >= 0).
  double zeta = 0.0;
  DisturbanceMode disturbance_mode = DisturbanceMode::None;
  int outer_max_iters = 2;
  int loop1_max_iters = 10;
  int loop2_max_iters = 8;
  double tol_c = 1e-3;
  double tol_trace = 1e-3;
  double c0 = 1.0;
  double c_max = 100.0;
  /// Strict decrease margin: dV/dt <= -margin |x|^2.
  double margin = 1e-6;
  /// Radius of the ball around the origin exempt from the decrease
  /// condition (0 disables it).
  double ball_radius = 0.0;
  /// Upper bound on the barrier margin epsilon.
  double eps_cap = 10.0;
  /// V - pd_margin |x|^2 must be SOS in Loop 3.
  double pd_margin = 1e-4;
  /// Sampling box for region measures.
  Box box;
  /// When set, B <= 0 is certified outside this box (where the learned
  /// model is not validated), as if its complement were unsafe.
  std::optional<Box> domain;
  int measure_samples = 20000;
  std::uint64_t seed = 1;
  SdpSettings solver;
  /// Use the LQR gain even when the linearization is already Hurwitz.
  bool initial_feedback_lqr = false;
  /// LQR state weight (Q = lqr_q I, R = I).
  double lqr_q = 1.0;
  /// Bound on the magnitude of every controller coefficient in the
  /// controller step (0 disables it).
  double u_bound = 0.0;
  /// Barrier steps after Loop 3 keep the previous superlevel set inside the
  /// new one. run_pipeline sets barrier_containment_active accordingly.
  bool barrier_containment = true;
  bool barrier_containment_active = false;
  bool verbose = false;
  /// When set, programs are compiled and their sizes appended here instead
  /// of being solved.
  std::vector<ProgramSize>* dry_run_sizes = nullptr;

  void validate(int n) const;
};

SynthesisConfig synthesis_config_from_json(const Json& j, int n, const std::string& path = "synthesis");
Json synthesis_config_to_json(const SynthesisConfig& cfg);

/// All 2^q combinations of {lo, hi} over the q components whose envelope has
/// nonzero width, deduplicated. Components with zero width contribute their
/// mean. Rejects q > 8.
std::vector<std::vector<Polynomial>> envelope_vertices(const std::vector<ConfidenceEnvelope>& env, int nvars);

/// Disturbance vectors the constraints are replicated over: the envelope
/// vertices, or the mean alone when mode is None.
std::vector<std::vector<Polynomial>> disturbance_vertices(const LearnedSystem& sys, DisturbanceMode mode);

struct ClfResult {
  Polynomial V;
  std::vector<Polynomial> u;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;
  /// Nominal drift at the origin exceeded 1e-6 and was cancelled by u0.
  bool offset_warning = false;
};

/// Linear feedback and quadratic Lyapunov function from the linearization at
/// the origin. K = 0 when A is Hurwitz (unless always_lqr), otherwise the LQR
/// gain with Q = lqr_q I, R = I.
/// u0 = K x - g(0)^+ f(0) where f is the nominal drift. Throws
/// std::runtime_error naming an unstabilizable eigenvalue.
ClfResult initial_clf(const LearnedSystem& sys, bool always_lqr = false, double lqr_q = 1.0);

struct Loop1Result {
  bool ok = false;
  double c = 0.0;
  double c_start = 0.0;
  int halvings = 0;
  /// One multiplier per disturbance vertex.
  std::vector<Polynomial> L;
  std::vector<Polynomial> unsafe_multipliers;
  std::vector<double> c_history;
  VerificationReport report;
  std::string message;
};

/// Largest certified sublevel set {V <= c} of the closed loop under u.
Loop1Result loop1_max_sublevel(const Polynomial& V, const LearnedSystem& sys, const std::vector<Polynomial>& u, double c0,
                               const std::vector<Polynomial>& unsafe, const SynthesisConfig& cfg);

struct ControllerResult {
  bool ok = false;
  SolveStatus status = SolveStatus::Failed;
  std::vector<Polynomial> u;
  /// Per vertex.
  std::vector<Polynomial> s1;
  std::vector<Polynomial> s2;
  std::vector<Polynomial> s_ball;
  double epsilon = 0.0;
  VerificationReport report;
  ProgramSize size;
};

/// Fixes V and B; searches u, s1, s2 maximizing epsilon subject to
///   -dV/dx (P + d_v + g u) - s1 B - margin |x|^2 + zeta in SOS,
///   dB/dx (P + d_v + g u) + (alpha - s2) B - epsilon in SOS
/// for every disturbance vertex d_v.
ControllerResult theorem1_controller(const Polynomial& V, const Polynomial& B, const LearnedSystem& sys,
                                     const SynthesisConfig& cfg);

struct BarrierResult {
  bool stalled = false;
  SolveStatus status = SolveStatus::Failed;
  Polynomial B;
  std::vector<Polynomial> unsafe_multipliers;
  double trace = 0.0;
  VerificationReport report;
  ProgramSize size;
};

/// Sum of coefficients of B on perfect-square monomials, the trace of its
/// canonical Gram matrix.
double barrier_trace(const Polynomial& B);

/// Fixes u and the multipliers of `ctrl`; maximizes the Gram trace of B with
/// B(0) pinned to B_prev(0), keeping the decrease and invariance conditions
/// and adding -B + n_i m_i in SOS for each unsafe set {m_i <= 0}.
BarrierResult expand_barrier(const Polynomial& V, const Polynomial& B_prev, const ControllerResult& ctrl,
                             const LearnedSystem& sys, const std::vector<Polynomial>& unsafe, const SynthesisConfig& cfg);

/// Multipliers n_i with -B + n_i m_i in SOS, or nullopt.
std::optional<std::vector<Polynomial>> unsafe_multipliers(const Polynomial& B, const std::vector<Polynomial>& unsafe,
                                                          const SynthesisConfig& cfg);

struct Loop2Result {
  bool ok = false;
  std::vector<Polynomial> u;
  Polynomial B;
  ControllerResult controller;
  std::vector<Polynomial> unsafe_multipliers;
  std::vector<double> trace_history;
  std::vector<double> eps_history;
  int iterations = 0;
  bool stalled = false;
  std::string message;
};

Loop2Result loop2_alternate(const Polynomial& V, const Polynomial& B0, const LearnedSystem& sys,
                            const std::vector<Polynomial>& unsafe, const SynthesisConfig& cfg);

struct Loop3Result {
  bool stalled = false;
  SolveStatus status = SolveStatus::Failed;
  Polynomial V;
  double eps_V = 0.0;
  VerificationReport report;
  ProgramSize size;
};

/// Maximizes eps_V over V (monomials of degree 2..deg_V), L_V1, L_V2:
///   V - L_V1 B in SOS,  V - pd_margin |x|^2 in SOS,
///   -dV/dx (P + d_v + g u) - L_V2 B - eps_V |x|^2 in SOS,
/// with the Gram trace of V fixed to `normalization` (default: that of V_prev).
Loop3Result loop3_optimal_V(const Polynomial& V_prev, const Polynomial& B, const std::vector<Polynomial>& u,
                            const LearnedSystem& sys, const SynthesisConfig& cfg,
                            std::optional<double> normalization = std::nullopt);

struct HistoryRow {
  int outer_iter = 0;
  std::string loop;
  double objective = 0.0;
  std::string status;
};

struct Certificate {
  int n = 0;
  int m = 0;
  /// Learned drift and input matrix the certificate refers to.
  std::vector<Polynomial> P;
  std::vector<std::vector<Polynomial>> g;
  Polynomial V;
  Polynomial B;
  std::vector<Polynomial> u;
  double c = 0.0;
  double epsilon = 0.0;
  double trace = 0.0;
  std::map<std::string, Polynomial> multipliers;
  std::vector<HistoryRow> history;
  VerificationReport verification;
  /// Empty when every stage succeeded.
  std::string failure_stage;
  /// First Loop-1 region {V0 <= c0}.
  Polynomial initial_V;
  double initial_c = 0.0;
  /// Barrier of the first outer iteration (before any Loop-3 update).
  Polynomial barrier_before_loop3;
  int outer_iterations = 0;
  std::vector<std::vector<Polynomial>> vertices;
  std::vector<Polynomial> unsafe;
  Json config;

  bool valid() const { return failure_stage.empty() && verification.passed(); }
};

/// initial_clf, then Loop 1, Loop 2 and Loop 3 repeated until the relative
/// trace improvement falls below tol_trace or outer_max_iters is reached.
/// The returned certificate is the consistent (V, B, u) triple with the
/// largest sampled region.
/// Unsafe sets followed by one set {(x_i - lo_i)(hi_i - x_i) <= 0} per
/// coordinate of cfg.domain.
std::vector<Polynomial> exclusion_sets(const std::vector<Polynomial>& unsafe, const SynthesisConfig& cfg);

Certificate run_pipeline(const LearnedSystem& sys, const SynthesisConfig& cfg, const std::vector<Polynomial>& unsafe);

/// Re-solves for multipliers with V, B, u fixed and checks every constraint
/// of the certificate.
VerificationReport verify_certificate(const Certificate& cert, const SynthesisConfig& cfg);

struct PlannedProgram {
  std::string name;
  ProgramSize size;
};

/// Sizes of the loop-1, controller, barrier and Loop-3 programs for the
/// configured degrees, built from placeholder V, B and u without solving.
std::vector<PlannedProgram> plan_programs(const LearnedSystem& sys, const SynthesisConfig& cfg,
                                          const std::vector<Polynomial>& unsafe);

Json certificate_to_json(const Certificate& cert);
Certificate certificate_from_json(const Json& j);

/// Closed-loop vector field P + d + g u as polynomials.
std::vector<Polynomial> closed_loop_field(const LearnedSystem& sys, const std::vector<Polynomial>& d,
                                          const std::vector<Polynomial>& u);

}  // namespace saferoa
