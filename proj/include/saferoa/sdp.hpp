#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace saferoa {

/// A conic program in standard primal form
///
///   minimize    sum_b <C_b, X_b> + c_free' y + c_nonneg' w
///   subject to  sum_b <A_rb, X_b> + F_r' y + L_r' w = b_r   for every row r
///               X_b PSD,  y free,  w >= 0.
///
/// Block coefficients are stored as "linear-form" triplets: (i, j, v) with
/// i <= j contributes v * X(i, j) once, so an off-diagonal triplet stands for
/// the symmetric matrix entries A(i, j) = A(j, i) = v / 2.
struct SdpInstance {
  struct BlockTerm {
    int row;
    int block;
    int i;
    int j;
    double value;
  };
  struct ScalarTerm {
    int row;
    int index;
    double value;
  };
  struct BlockCost {
    int block;
    int i;
    int j;
    double value;
  };

  std::vector<int> block_sizes;
  int num_free = 0;
  int num_nonneg = 0;
  int num_rows = 0;

  std::vector<BlockTerm> block_terms;
  std::vector<ScalarTerm> free_terms;
  std::vector<ScalarTerm> nonneg_terms;
  Eigen::VectorXd rhs;

  std::vector<BlockCost> block_cost;
  Eigen::VectorXd free_cost;    // size num_free (may be empty -> zero)
  Eigen::VectorXd nonneg_cost;  // size num_nonneg (may be empty -> zero)

  /// Writes the instance in a plain sparse text format (block sizes, triplet
  /// equalities, objective) for comparison against other solvers.
  std::string to_sparse_text() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, Inaccurate, Failed };

std::string to_string(SolveStatus s);

struct SdpSolution {
  SolveStatus status = SolveStatus::Failed;
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::VectorXd free_values;
  Eigen::VectorXd nonneg_values;
  Eigen::VectorXd duals;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  double relative_gap = 0.0;
  int iterations = 0;
  std::string message;
};

struct SdpSettings {
  int max_iterations = 120;
  double feasibility_tol = 1e-9;
  double gap_tol = 1e-8;
  /// Relaxed tolerances reported as Inaccurate when the strict ones stall.
  double inaccurate_tol = 1e-5;
  double infeasibility_tol = 1e-8;
  double step_fraction = 0.98;
  /// Solve the free-variable system with a pivoted LU of the augmented
  /// matrix instead of eliminating through the Cholesky factor of M.
  bool augmented_lu = false;
  bool verbose = false;
};

/// Narrow solver interface; any conforming conic solver may back it.
class ConicSolver {
 public:
  virtual ~ConicSolver() = default;
  virtual SdpSolution solve(const SdpInstance& instance) const = 0;
};

/// Infeasible primal-dual path-following method with the HKM search
/// direction and Mehrotra predictor-corrector steps. Free variables are
/// handled through a reduced Schur system rather than by splitting.
class InteriorPointSolver final : public ConicSolver {
 public:
  explicit InteriorPointSolver(SdpSettings settings = {}) : settings_(settings) {}
  SdpSolution solve(const SdpInstance& instance) const override;
  const SdpSettings& settings() const { return settings_; }

 private:
  SdpSettings settings_;
};

}  // namespace saferoa
