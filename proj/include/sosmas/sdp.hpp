#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sosmas::sdp {

/// Entry of a symmetric coefficient matrix: A(row, col) = A(col, row) = value.
/// Against a symmetric X it contributes value * X(r, r) on the diagonal and
/// 2 * value * X(r, c) off the diagonal.
struct BlockTerm {
  int block = 0;
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct FreeTerm {
  int index = 0;
  double value = 0.0;
};

/// sum_b <A_b, X_b> + sum_f a_f * w_f
struct LinearFunctional {
  std::vector<BlockTerm> block_terms;
  std::vector<FreeTerm> free_terms;
};

struct Equality {
  LinearFunctional lhs;
  double rhs = 0.0;
};

/// maximize  objective(X, w)
/// s.t.      equalities[i].lhs(X, w) = equalities[i].rhs
///           X_b PSD for every block, w free.
struct SdpProblem {
  std::vector<int> block_sizes;
  int free_count = 0;
  std::vector<Equality> equalities;
  LinearFunctional objective;

  int add_block(int size) {
    block_sizes.push_back(size);
    return static_cast<int>(block_sizes.size()) - 1;
  }
  int add_free() { return free_count++; }
};

enum class SdpStatus { Optimal, Infeasible, Unbounded, MaxIterations, NumericalFailure };

std::string to_string(SdpStatus status);

struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::NumericalFailure;
  std::vector<Eigen::MatrixXd> block_values;
  Eigen::VectorXd free_values;
  /// Optimal: multipliers lambda with sum_i lambda_i A_i - C PSD.
  /// Infeasible: Farkas ray with b^T lambda = 1, sum_i lambda_i A_i NSD and
  /// zero free-variable part.
  Eigen::VectorXd dual_values;
  Residuals residuals;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  int iterations = 0;
  int removed_rows = 0;
};

struct SdpSettings {
  double tol = 1e-8;
  int max_iter = 200;
  int max_block_size = 200;
};

SdpSolution solve(const SdpProblem& problem, const SdpSettings& settings = {});

/// Relative KKT residuals of a candidate solution, recomputed from the
/// problem data alone.
///   primal: ||A(X) + F w - b|| / (1 + ||b||)
///   dual:   (sum_b max(0, -lambda_min(Z_b)) + ||F^T lambda - c||) / (1 + ||C||),
///           Z = sum_i lambda_i A_i - C
///   gap:    |pobj - dobj| / (1 + |pobj| + |dobj|)
Residuals residuals(const SdpProblem& problem, const SdpSolution& solution);

double primal_objective(const SdpProblem& problem, const SdpSolution& solution);
double dual_objective(const SdpProblem& problem, const SdpSolution& solution);

/// Quality of a Farkas ray y for primal infeasibility.
struct FarkasCheck {
  double b_dot_y = 0.0;
  /// largest eigenvalue of sum_i y_i A_i over all blocks (must be <= 0)
  double max_eigenvalue = 0.0;
  /// ||F^T y||
  double free_residual = 0.0;
};
FarkasCheck check_farkas(const SdpProblem& problem, const Eigen::VectorXd& y);

/// Throws DimensionError / IndexError / DataError / CapacityError for
/// malformed problems.
void validate(const SdpProblem& problem, const SdpSettings& settings = {});

/// Plain-text dump: dimensions, objective, then one equality per stanza with
/// `B block row col value` and `F index value` lines.
void write_problem(std::ostream& os, const SdpProblem& problem);
SdpProblem read_problem(std::istream& is);

}  // namespace sosmas::sdp
