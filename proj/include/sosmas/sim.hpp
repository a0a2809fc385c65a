#pragma once

#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sosmas/graph.hpp"
#include "sosmas/poly.hpp"

namespace sosmas {

// Agent states are stored one agent per row: N x n.

struct FirstOrderState {
  double t = 0.0;
  Eigen::MatrixXd z;
  Eigen::VectorXd z_gamma;
};

/// omega = z - z_gamma, nu = v - v_gamma.
struct SecondOrderErrorState {
  double t = 0.0;
  Eigen::MatrixXd omega;
  Eigen::MatrixXd nu;
  Eigen::VectorXd v_gamma;
};

/// z_i' = sum_j A_ij (h(z_j) - h(z_i)) + d_i (h(z_gamma) - h(z_i)).
Eigen::MatrixXd first_order_rhs(const FirstOrderState& s, const TopologyGraph& g, const PolyVector& h);

struct ErrorDerivative {
  Eigen::MatrixXd omega;
  Eigen::MatrixXd nu;
};

/// omega_i' = h1(nu_i)
/// nu_i'    = sum_j A_ij h1(omega_j - omega_i) + d_i h1(-omega_i)
///          + sum_j A_ij (h2(v_j) - h2(v_i)) + d_i (h2(v_gamma) - h2(v_i)),  v = nu + v_gamma
/// The position equation is the error model as stated, not z' = v.
ErrorDerivative second_order_error_rhs(const SecondOrderErrorState& s, const TopologyGraph& g, const PolyVector& h1,
                                       const PolyVector& h2);

struct SimulationSetup {
  int order = 2;
  Eigen::MatrixXd z0;
  Eigen::VectorXd z_gamma;
  Eigen::MatrixXd v0;  // order 2
  Eigen::VectorXd v_gamma;
  PolyVector h;   // order 1
  PolyVector h1;  // order 2
  PolyVector h2;  // order 2
  double dt = 1e-4;
  double t_final = 10.0;
};

struct SwitchEvent {
  long step = 0;
  double time = 0.0;
  int from = 0;
  int to = 0;
};

/// One entry per grid point t_k = k dt, k = 0..steps.
struct SimulationResult {
  int order = 2;
  double dt = 0.0;
  std::vector<double> times;
  /// z - z_gamma (order 1) or omega (order 2).
  std::vector<Eigen::MatrixXd> position_error;
  /// z' (order 1; the leader is static) or nu (order 2).
  std::vector<Eigen::MatrixXd> velocity_error;
  /// Graph active on [t_k, t_{k+1}); the last entry is the graph at t_final.
  std::vector<int> graph_index;
  std::vector<SwitchEvent> switches;
  Eigen::VectorXd z_gamma;
  Eigen::VectorXd v_gamma;

  long steps() const { return static_cast<long>(times.size()) - 1; }
  int agent_count() const { return position_error.empty() ? 0 : static_cast<int>(position_error.front().rows()); }
  /// Euclidean norm per agent at grid point k.
  Eigen::VectorXd position_norms(long k) const;
  Eigen::VectorXd velocity_norms(long k) const;
  /// z_i(t_k) with z_gamma(t) = z_gamma(0) + v_gamma t.
  Eigen::MatrixXd absolute_positions(long k) const;
};

/// Steps per subinterval; throws AlignmentError unless dt tiles every
/// subinterval and t_final.
std::vector<long> aligned_step_counts(const SwitchingSchedule& schedule, double dt, double t_final);

/// Fixed-step RK4. The graph is fixed within each step. Throws DivergenceError
/// when the state norm exceeds 1e12 or turns non-finite.
SimulationResult integrate(const SwitchingSchedule& schedule, const SimulationSetup& setup);

struct LyapunovTrace {
  /// Value at t_k with the graph active at t_k.
  std::vector<double> value;
  /// Value at t_{k+1} with the graph of step k (left limit); size steps.
  std::vector<double> step_end;
};

/// order 1: sum_i V(z_i - z_gamma) - N V(0).
/// order 2: 1/2 sum_i sum_j A_ij V(omega_j - omega_i) + sum_i d_i V(omega_i) + sum_i V(nu_i),
///          each summand taken relative to V(0).
LyapunovTrace lyapunov_trace(const SimulationResult& result, const Polynomial& v, const SwitchingSchedule& schedule);

struct MonotonicityReport {
  /// Steps with step_end[k] - value[k] > tol (1 + value[k]).
  long within_violations = 0;
  double worst_within = 0.0;
  /// Steps with value[k+1] - value[k] above the same tolerance.
  long global_violations = 0;
  double worst_global = 0.0;
  /// Increases at switch instants (value[k+1] - step_end[k] > 0); flagged only.
  long switch_jumps = 0;
  double largest_jump = 0.0;
};

MonotonicityReport check_monotonicity(const SimulationResult& result, const LyapunovTrace& trace,
                                      double relative_tolerance = 1e-8);

/// Earliest t_k after which every agent's error norm stays <= epsilon
/// (positions, and velocities for order 2).
std::optional<double> consensus_time(const SimulationResult& result, double epsilon);

/// Header: t,pos_err_1..N,vel_err_1..N,lyap,graph_index. Values use the
/// shortest round-trip decimal form.
void write_csv(std::ostream& out, const SimulationResult& result, const LyapunovTrace& trace);

/// Reads "initial" {z_gamma, z, v_gamma, v}, "simulation" {dt, T} and the
/// couplings (h for order 1, h1 and h2 for order 2).
SimulationSetup simulation_setup_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const SwitchEvent& e);
void to_json(nlohmann::json& j, const MonotonicityReport& r);

}  // namespace sosmas
