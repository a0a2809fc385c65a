#include "sosmas/graph.hpp"

#include <cmath>
#include <deque>
#include <string>

#include "sosmas/errors.hpp"

namespace sosmas {

namespace {
constexpr double kSymmetryTolerance = 1e-12;
}

TopologyGraph::TopologyGraph(Eigen::MatrixXd adjacency, Eigen::VectorXd leader_gains)
    : adjacency_(std::move(adjacency)), gains_(std::move(leader_gains)) {
  const auto n = adjacency_.rows();
  if (n <= 0 || adjacency_.cols() != n) throw DimensionError("adjacency must be square and non-empty");
  if (gains_.size() != n) throw DimensionError("leader gains must have one entry per follower");
  if (!adjacency_.allFinite() || !gains_.allFinite()) throw DataError("non-finite graph weight");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (adjacency_(i, i) != 0.0) throw DomainError("adjacency diagonal must be zero");
    if (gains_(i) < 0.0) throw DomainError("leader gains must be nonnegative");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (adjacency_(i, j) < 0.0) throw DomainError("edge weights must be nonnegative");
      if (std::abs(adjacency_(i, j) - adjacency_(j, i)) > kSymmetryTolerance) {
        throw DomainError("adjacency must be symmetric");
      }
    }
  }
}

TopologyGraph TopologyGraph::from_edges(int follower_count,
                                        const std::vector<std::pair<int, int>>& edges,
                                        const std::vector<std::pair<int, double>>& gains) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(follower_count, follower_count);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(follower_count);
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= follower_count || j >= follower_count) {
      throw IndexError("edge endpoint out of range");
    }
    a(i, j) = a(j, i) = 1.0;
  }
  for (auto [i, g] : gains) {
    if (i < 0 || i >= follower_count) throw IndexError("leader gain index out of range");
    d(i) = g;
  }
  return TopologyGraph(std::move(a), std::move(d));
}

Eigen::MatrixXd TopologyGraph::laplacian() const {
  Eigen::MatrixXd l = -adjacency_;
  for (Eigen::Index j = 0; j < l.rows(); ++j) {
    double degree = 0.0;
    for (Eigen::Index k = 0; k < l.cols(); ++k) {
      if (k != j) degree += adjacency_(j, k);
    }
    l(j, j) = degree;
  }
  return l;
}

std::vector<int> TopologyGraph::neighbors(int i) const {
  std::vector<int> out;
  for (int j = 0; j < follower_count(); ++j) {
    if (adjacency_(i, j) > 0.0) out.push_back(j);
  }
  return out;
}

TopologyGraph graph_union(std::span<const TopologyGraph> graphs) {
  if (graphs.empty()) throw DimensionError("union of an empty graph collection");
  const int n = graphs.front().follower_count();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  for (const auto& g : graphs) {
    if (g.follower_count() != n) throw DimensionError("union over graphs of different sizes");
    a += g.adjacency();
    d += g.leader_gains();
  }
  return TopologyGraph(std::move(a), std::move(d));
}

bool connected_with_leader(const TopologyGraph& g) {
  const int n = g.follower_count();
  // Node n is the leader.
  std::vector<bool> seen(static_cast<std::size_t>(n + 1), false);
  std::deque<int> queue{n};
  seen[static_cast<std::size_t>(n)] = true;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v = 0; v < n; ++v) {
      if (seen[static_cast<std::size_t>(v)]) continue;
      const bool edge = (u == n) ? g.leader_gains()(v) > 0.0 : g.adjacency()(u, v) > 0.0;
      if (edge) {
        seen[static_cast<std::size_t>(v)] = true;
        queue.push_back(v);
      }
    }
  }
  for (bool s : seen) {
    if (!s) return false;
  }
  return true;
}

double laplacian_bilinear_sum(const Eigen::MatrixXd& laplacian, const Eigen::MatrixXd& alpha,
                              const Eigen::MatrixXd& beta) {
  const auto n = laplacian.rows();
  if (alpha.rows() != n || beta.rows() != n || alpha.cols() != beta.cols()) {
    throw DimensionError("agent vectors do not match the Laplacian");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) sum += laplacian(i, j) * alpha.row(i).dot(beta.row(j));
  }
  return sum;
}

double laplacian_pairwise_form(const Eigen::MatrixXd& laplacian, const Eigen::MatrixXd& alpha,
                               const Eigen::MatrixXd& beta) {
  const auto n = laplacian.rows();
  if (alpha.rows() != n || beta.rows() != n || alpha.cols() != beta.cols()) {
    throw DimensionError("agent vectors do not match the Laplacian");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sum += laplacian(i, j) * (alpha.row(i) - alpha.row(j)).dot(beta.row(i) - beta.row(j));
    }
  }
  return -sum;
}

SwitchingSchedule::SwitchingSchedule(std::vector<TopologyGraph> graphs,
                                     std::vector<Subinterval> subintervals,
                                     std::vector<int> window_boundaries, double dwell_time)
    : graphs_(std::move(graphs)),
      subintervals_(std::move(subintervals)),
      windows_(std::move(window_boundaries)),
      tau_(dwell_time) {
  if (graphs_.empty()) throw DimensionError("schedule needs at least one graph");
  if (subintervals_.empty()) throw DimensionError("schedule needs at least one subinterval");
  if (!(tau_ > 0.0) || !std::isfinite(tau_)) {
    throw DomainError("dwell time must be positive (tau = 0 is unsupported)");
  }
  const int n = graphs_.front().follower_count();
  for (const auto& g : graphs_) {
    if (g.follower_count() != n) throw DimensionError("schedule graphs differ in follower count");
  }
  const int count = static_cast<int>(subintervals_.size());
  double t = 0.0;
  for (const auto& s : subintervals_) {
    if (s.graph_index < 0 || s.graph_index >= static_cast<int>(graphs_.size())) {
      throw IndexError("subinterval references graph " + std::to_string(s.graph_index));
    }
    if (!std::isfinite(s.duration) || s.duration < tau_ * (1.0 - 1e-12)) {
      throw DomainError("subinterval shorter than the dwell time");
    }
    starts_.push_back(t);
    t += s.duration;
  }
  period_ = t;
  if (windows_.empty()) windows_ = {0, count};
  if (windows_.front() != 0 || windows_.back() != count || windows_.size() < 2) {
    throw DomainError("window boundaries must run from 0 to the subinterval count");
  }
  for (std::size_t k = 1; k < windows_.size(); ++k) {
    if (windows_[k] <= windows_[k - 1]) throw DomainError("window boundaries must increase");
  }
}

const TopologyGraph& SwitchingSchedule::graph(int index) const {
  if (index < 0 || index >= static_cast<int>(graphs_.size())) throw IndexError("graph index out of range");
  return graphs_[static_cast<std::size_t>(index)];
}

int SwitchingSchedule::graph_at(double t) const {
  if (!(t >= 0.0)) throw DomainError("switching signal queried at negative time");
  double shortest = subintervals_.front().duration;
  for (const auto& s : subintervals_) shortest = std::min(shortest, s.duration);
  // Snap to switch instants so k*dt grids land on the right side of a boundary.
  const double eps = 1e-9 * shortest;
  double local = t - std::floor((t + eps) / period_) * period_;
  if (local < 0.0) local = 0.0;
  for (std::size_t k = 0; k + 1 < starts_.size(); ++k) {
    if (local + eps < starts_[k + 1]) return subintervals_[k].graph_index;
  }
  return subintervals_.back().graph_index;
}

TopologyGraph SwitchingSchedule::window_union(int window_index) const {
  if (window_index < 0 || window_index >= window_count()) {
    throw IndexError("window " + std::to_string(window_index) + " out of range");
  }
  std::vector<TopologyGraph> members;
  for (int k = windows_[static_cast<std::size_t>(window_index)];
       k < windows_[static_cast<std::size_t>(window_index) + 1]; ++k) {
    members.push_back(graphs_[static_cast<std::size_t>(subintervals_[static_cast<std::size_t>(k)].graph_index)]);
  }
  return graph_union(members);
}

bool SwitchingSchedule::is_jointly_connected(int window_index) const {
  return connected_with_leader(window_union(window_index));
}

SwitchingSchedule reference_schedule() {
  constexpr int kFollowers = 4;
  std::vector<TopologyGraph> graphs{
      TopologyGraph::from_edges(kFollowers, {{1, 2}}, {{0, 1.0}}),
      TopologyGraph::from_edges(kFollowers, {{0, 1}}, {{3, 1.0}}),
      TopologyGraph::from_edges(kFollowers, {{2, 3}}),
  };
  constexpr double kDwell = 1e-3;
  std::vector<Subinterval> subs{{0, kDwell}, {1, kDwell}, {2, kDwell}};
  return SwitchingSchedule(std::move(graphs), std::move(subs), {0, 3}, kDwell);
}

void to_json(nlohmann::json& j, const TopologyGraph& g) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < g.adjacency().rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < g.adjacency().cols(); ++k) row.push_back(g.adjacency()(i, k));
    a.push_back(row);
  }
  std::vector<double> d(g.leader_gains().data(), g.leader_gains().data() + g.leader_gains().size());
  j = {{"N", g.follower_count()}, {"A", a}, {"d", d}};
}

void from_json(const nlohmann::json& j, TopologyGraph& g) {
  const int n = j.at("N").get<int>();
  const auto& a = j.at("A");
  const auto d = j.at("d").get<std::vector<double>>();
  if (n <= 0 || static_cast<int>(a.size()) != n || static_cast<int>(d.size()) != n) {
    throw FormatError("graph JSON: A and d must match N");
  }
  Eigen::MatrixXd adj(n, n);
  for (int r = 0; r < n; ++r) {
    const auto row = a.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
    if (static_cast<int>(row.size()) != n) throw FormatError("graph JSON: ragged adjacency");
    for (int c = 0; c < n; ++c) adj(r, c) = row[static_cast<std::size_t>(c)];
  }
  g = TopologyGraph(std::move(adj), Eigen::Map<const Eigen::VectorXd>(d.data(), n));
}

void to_json(nlohmann::json& j, const SwitchingSchedule& s) {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& sub : s.subintervals()) subs.push_back({sub.graph_index, sub.duration});
  j = {{"graphs", s.graphs()},
       {"subintervals", subs},
       {"windows", s.window_boundaries()},
       {"tau", s.dwell_time()}};
}

void from_json(const nlohmann::json& j, SwitchingSchedule& s) {
  std::vector<TopologyGraph> graphs;
  for (const auto& g : j.at("graphs")) graphs.push_back(g.get<TopologyGraph>());
  std::vector<Subinterval> subs;
  for (const auto& sub : j.at("subintervals")) {
    if (!sub.is_array() || sub.size() != 2) throw FormatError("subinterval must be [graph, duration]");
    subs.push_back({sub.at(0).get<int>(), sub.at(1).get<double>()});
  }
  std::vector<int> windows;
  if (j.contains("windows")) windows = j.at("windows").get<std::vector<int>>();
  s = SwitchingSchedule(std::move(graphs), std::move(subs), std::move(windows), j.at("tau").get<double>());
}

}  // namespace sosmas
