#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace sosmas {

/// Undirected weighted interaction graph among N followers plus the
/// follower-to-leader gains d. The leader is never a node of A.
class TopologyGraph {
 public:
  TopologyGraph() = default;
  TopologyGraph(Eigen::MatrixXd adjacency, Eigen::VectorXd leader_gains);

  /// Graph with unit-weight edges given as zero-based follower pairs.
  static TopologyGraph from_edges(int follower_count, const std::vector<std::pair<int, int>>& edges,
                                  const std::vector<std::pair<int, double>>& gains = {});

  int follower_count() const { return static_cast<int>(adjacency_.rows()); }
  const Eigen::MatrixXd& adjacency() const { return adjacency_; }
  const Eigen::VectorXd& leader_gains() const { return gains_; }

  Eigen::MatrixXd laplacian() const;
  Eigen::MatrixXd leader_matrix() const { return gains_.asDiagonal(); }
  /// G = L + D
  Eigen::MatrixXd grand_matrix() const { return laplacian() + leader_matrix(); }

  std::vector<int> neighbors(int i) const;

 private:
  Eigen::MatrixXd adjacency_;
  Eigen::VectorXd gains_;
};

inline Eigen::MatrixXd grand_matrix(const TopologyGraph& g) { return g.grand_matrix(); }

/// Entrywise sum of adjacencies and of leader gains.
TopologyGraph graph_union(std::span<const TopologyGraph> graphs);

/// Breadth-first search over followers plus a leader node attached to every
/// follower with d_i > 0. True iff everything is reachable from the leader.
bool connected_with_leader(const TopologyGraph& g);

/// sum_i sum_j alpha_i^T L_ij beta_j, with alpha/beta stored one agent per row.
double laplacian_bilinear_sum(const Eigen::MatrixXd& laplacian, const Eigen::MatrixXd& alpha,
                              const Eigen::MatrixXd& beta);
/// -sum_{i<j} (alpha_i - alpha_j)^T L_ij (beta_i - beta_j)
double laplacian_pairwise_form(const Eigen::MatrixXd& laplacian, const Eigen::MatrixXd& alpha,
                               const Eigen::MatrixXd& beta);

struct Subinterval {
  int graph_index = 0;
  double duration = 0.0;
};

/// Piecewise-constant switching signal over a finite set of graphs, repeated
/// cyclically past its listed horizon.
class SwitchingSchedule {
 public:
  SwitchingSchedule() = default;
  /// `window_boundaries` are subinterval indices [0, k1, k2, ..., count];
  /// empty means a single window spanning every subinterval.
  SwitchingSchedule(std::vector<TopologyGraph> graphs, std::vector<Subinterval> subintervals,
                    std::vector<int> window_boundaries, double dwell_time);

  const std::vector<TopologyGraph>& graphs() const { return graphs_; }
  const TopologyGraph& graph(int index) const;
  const std::vector<Subinterval>& subintervals() const { return subintervals_; }
  const std::vector<int>& window_boundaries() const { return windows_; }
  double dwell_time() const { return tau_; }
  int follower_count() const { return graphs_.front().follower_count(); }
  int window_count() const { return static_cast<int>(windows_.size()) - 1; }
  /// Length of one pass through the listed subintervals.
  double period() const { return period_; }

  /// Index of the graph active at time t (right-continuous at switches).
  int graph_at(double t) const;
  /// Union of the window's subinterval graphs is connected to the leader.
  bool is_jointly_connected(int window_index) const;
  TopologyGraph window_union(int window_index) const;

 private:
  std::vector<TopologyGraph> graphs_;
  std::vector<Subinterval> subintervals_;
  std::vector<int> windows_;
  double tau_ = 0.0;
  double period_ = 0.0;
  std::vector<double> starts_;
};

/// Four followers, three individually disconnected graphs whose union is
/// connected leader-1-2-3-4-leader; cyclic G1 -> G2 -> G3 with 1 ms dwell.
SwitchingSchedule reference_schedule();

void to_json(nlohmann::json& j, const TopologyGraph& g);
void from_json(const nlohmann::json& j, TopologyGraph& g);
void to_json(nlohmann::json& j, const SwitchingSchedule& s);
void from_json(const nlohmann::json& j, SwitchingSchedule& s);

}  // namespace sosmas
