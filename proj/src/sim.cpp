#include "sosmas/sim.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "sosmas/errors.hpp"

namespace sosmas {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

namespace {

// Polynomial map flattened for repeated evaluation.
class FlatMap {
 public:
  FlatMap() = default;
  explicit FlatMap(const PolyVector& p) {
    for (const auto& e : p) add(e);
  }
  explicit FlatMap(const Polynomial& p) { add(p); }

  int outputs() const { return static_cast<int>(starts_.size()); }
  int inputs() const { return n_; }

  void eval(const double* x, double* out) const {
    for (int i = 0; i < n_; ++i) {
      double* row = &pow_[static_cast<std::size_t>(i * (max_deg_ + 1))];
      row[0] = 1.0;
      for (int k = 1; k <= max_deg_; ++k) row[k] = row[k - 1] * x[i];
    }
    for (std::size_t c = 0; c < starts_.size(); ++c) {
      const std::size_t end = c + 1 < starts_.size() ? starts_[c + 1] : coef_.size();
      double sum = 0.0;
      for (std::size_t t = starts_[c]; t < end; ++t) {
        double term = coef_[t];
        const int* e = &exps_[t * static_cast<std::size_t>(n_)];
        for (int i = 0; i < n_; ++i) {
          if (e[i] != 0) term *= pow_[static_cast<std::size_t>(i * (max_deg_ + 1) + e[i])];
        }
        sum += term;
      }
      out[c] = sum;
    }
  }

  VectorXd operator()(const VectorXd& x) const {
    VectorXd out(outputs());
    eval(x.data(), out.data());
    return out;
  }

 private:
  void add(const Polynomial& p) {
    if (starts_.empty()) {
      n_ = p.variable_count();
    } else if (p.variable_count() != n_) {
      throw DimensionError("coupling entries disagree on the variable count");
    }
    starts_.push_back(coef_.size());
    for (const auto& [m, c] : p.terms()) {
      coef_.push_back(c);
      for (int i = 0; i < n_; ++i) {
        exps_.push_back(m[i]);
        max_deg_ = std::max(max_deg_, m[i]);
      }
    }
    pow_.assign(static_cast<std::size_t>(n_ * (max_deg_ + 1)), 0.0);
  }

  int n_ = 0;
  int max_deg_ = 0;
  std::vector<std::size_t> starts_;
  std::vector<double> coef_;
  std::vector<int> exps_;
  mutable std::vector<double> pow_;
};

void check_map(const FlatMap& f, int n, const char* name) {
  if (f.outputs() != n || f.inputs() != n) {
    throw DimensionError(std::string(name) + " must map R^" + std::to_string(n) + " to itself");
  }
}

void check_graph(const TopologyGraph& g, const MatrixXd& states) {
  if (g.follower_count() != states.rows()) {
    throw DimensionError("graph has " + std::to_string(g.follower_count()) + " followers, state has " +
                         std::to_string(states.rows()));
  }
}

MatrixXd apply_rows(const FlatMap& f, const MatrixXd& x) {
  MatrixXd out(x.rows(), f.outputs());
  VectorXd row(x.cols());
  VectorXd val(f.outputs());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    row = x.row(i).transpose();
    f.eval(row.data(), val.data());
    out.row(i) = val.transpose();
  }
  return out;
}

MatrixXd first_order(const MatrixXd& z, const VectorXd& z_gamma, const TopologyGraph& g, const FlatMap& h) {
  const MatrixXd hz = apply_rows(h, z);
  const VectorXd hg = h(z_gamma);
  const MatrixXd& a = g.adjacency();
  const VectorXd& d = g.leader_gains();
  MatrixXd out = MatrixXd::Zero(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
      if (a(i, j) != 0.0) out.row(i) += a(i, j) * (hz.row(j) - hz.row(i));
    }
    if (d(i) != 0.0) out.row(i) += d(i) * (hg.transpose() - hz.row(i));
  }
  return out;
}

ErrorDerivative second_order(const MatrixXd& omega, const MatrixXd& nu, const VectorXd& v_gamma,
                             const TopologyGraph& g, const FlatMap& h1, const FlatMap& h2) {
  const Eigen::Index n_agents = omega.rows();
  const MatrixXd& a = g.adjacency();
  const VectorXd& d = g.leader_gains();
  ErrorDerivative out;
  out.omega = apply_rows(h1, nu);
  MatrixXd v = nu;
  v.rowwise() += v_gamma.transpose();
  const MatrixXd h2v = apply_rows(h2, v);
  const VectorXd h2g = h2(v_gamma);
  out.nu = MatrixXd::Zero(n_agents, omega.cols());
  VectorXd diff(omega.cols());
  for (Eigen::Index i = 0; i < n_agents; ++i) {
    for (Eigen::Index j = 0; j < n_agents; ++j) {
      if (a(i, j) == 0.0) continue;
      diff = (omega.row(j) - omega.row(i)).transpose();
      out.nu.row(i) += a(i, j) * (h1(diff).transpose() + h2v.row(j) - h2v.row(i));
    }
    if (d(i) != 0.0) {
      diff = -omega.row(i).transpose();
      out.nu.row(i) += d(i) * (h1(diff).transpose() + h2g.transpose() - h2v.row(i));
    }
  }
  return out;
}

long aligned(double span, double dt, const std::string& what) {
  const double ratio = span / dt;
  const long steps = std::lround(ratio);
  if (steps < 1 || std::abs(static_cast<double>(steps) * dt - span) > 1e-9 * span) {
    throw AlignmentError("dt = " + std::to_string(dt) + " does not divide " + what + " = " + std::to_string(span));
  }
  return steps;
}

MatrixXd matrix_from_json(const json& j, const char* key) {
  const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw FormatError(std::string(key) + " is empty");
  MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw FormatError(std::string(key) + " rows differ in length");
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  return m;
}

VectorXd vector_from_json(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void append_number(std::string& line, double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  line.append(buf, res.ptr);
}

}  // namespace

MatrixXd first_order_rhs(const FirstOrderState& s, const TopologyGraph& g, const PolyVector& h) {
  const FlatMap f(h);
  check_map(f, static_cast<int>(s.z.cols()), "h");
  check_graph(g, s.z);
  if (s.z_gamma.size() != s.z.cols()) throw DimensionError("z_gamma has the wrong dimension");
  return first_order(s.z, s.z_gamma, g, f);
}

ErrorDerivative second_order_error_rhs(const SecondOrderErrorState& s, const TopologyGraph& g, const PolyVector& h1,
                                       const PolyVector& h2) {
  const int n = static_cast<int>(s.omega.cols());
  const FlatMap f1(h1);
  const FlatMap f2(h2);
  check_map(f1, n, "h1");
  check_map(f2, n, "h2");
  check_graph(g, s.omega);
  if (s.nu.rows() != s.omega.rows() || s.nu.cols() != n || s.v_gamma.size() != n) {
    throw DimensionError("velocity errors do not match position errors");
  }
  return second_order(s.omega, s.nu, s.v_gamma, g, f1, f2);
}

VectorXd SimulationResult::position_norms(long k) const {
  return position_error.at(static_cast<std::size_t>(k)).rowwise().norm();
}

VectorXd SimulationResult::velocity_norms(long k) const {
  return velocity_error.at(static_cast<std::size_t>(k)).rowwise().norm();
}

MatrixXd SimulationResult::absolute_positions(long k) const {
  const double t = times.at(static_cast<std::size_t>(k));
  VectorXd leader = z_gamma;
  if (order == 2) leader += t * v_gamma;
  MatrixXd out = position_error[static_cast<std::size_t>(k)];
  out.rowwise() += leader.transpose();
  return out;
}

std::vector<long> aligned_step_counts(const SwitchingSchedule& schedule, double dt, double t_final) {
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  if (!(t_final > 0.0)) throw DomainError("T must be positive");
  std::vector<long> out;
  for (const auto& s : schedule.subintervals()) out.push_back(aligned(s.duration, dt, "a subinterval"));
  aligned(t_final, dt, "T");
  return out;
}

SimulationResult integrate(const SwitchingSchedule& schedule, const SimulationSetup& setup) {
  if (setup.order != 1 && setup.order != 2) throw DomainError("order must be 1 or 2");
  const std::vector<long> counts = aligned_step_counts(schedule, setup.dt, setup.t_final);
  const long total = aligned(setup.t_final, setup.dt, "T");
  const Eigen::Index agents = setup.z0.rows();
  const int n = static_cast<int>(setup.z0.cols());
  if (agents != schedule.follower_count()) throw DimensionError("initial state and schedule disagree on N");
  if (setup.z_gamma.size() != n) throw DimensionError("z_gamma has the wrong dimension");

  FlatMap h;
  FlatMap h1;
  FlatMap h2;
  if (setup.order == 1) {
    h = FlatMap(setup.h);
    check_map(h, n, "h");
  } else {
    h1 = FlatMap(setup.h1);
    h2 = FlatMap(setup.h2);
    check_map(h1, n, "h1");
    check_map(h2, n, "h2");
    if (setup.v0.rows() != agents || setup.v0.cols() != n || setup.v_gamma.size() != n) {
      throw DimensionError("velocity initial state has the wrong shape");
    }
  }

  // Stacked state: [position error | velocity error] per agent row.
  const int width = setup.order == 1 ? n : 2 * n;
  MatrixXd x(agents, width);
  x.leftCols(n) = setup.z0.rowwise() - setup.z_gamma.transpose();
  if (setup.order == 2) x.rightCols(n) = setup.v0.rowwise() - setup.v_gamma.transpose();

  auto rhs = [&](const MatrixXd& state, const TopologyGraph& g) {
    MatrixXd out(agents, width);
    if (setup.order == 1) {
      // Protocol in error form: h(z) = h(e + z_gamma).
      MatrixXd z = state;
      z.rowwise() += setup.z_gamma.transpose();
      out = first_order(z, setup.z_gamma, g, h);
    } else {
      const ErrorDerivative d = second_order(state.leftCols(n), state.rightCols(n), setup.v_gamma, g, h1, h2);
      out.leftCols(n) = d.omega;
      out.rightCols(n) = d.nu;
    }
    return out;
  };

  // Graph index for each step of one pass through the subintervals.
  std::vector<int> cycle;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    cycle.insert(cycle.end(), static_cast<std::size_t>(counts[s]), schedule.subintervals()[s].graph_index);
  }
  const auto graph_of = [&](long k) { return cycle[static_cast<std::size_t>(k % static_cast<long>(cycle.size()))]; };

  SimulationResult r;
  r.order = setup.order;
  r.dt = setup.dt;
  r.z_gamma = setup.z_gamma;
  r.v_gamma = setup.order == 2 ? setup.v_gamma : VectorXd::Zero(n);
  r.times.reserve(static_cast<std::size_t>(total + 1));
  r.position_error.reserve(static_cast<std::size_t>(total + 1));
  r.velocity_error.reserve(static_cast<std::size_t>(total + 1));
  r.graph_index.reserve(static_cast<std::size_t>(total + 1));

  auto record = [&](long k, const MatrixXd& state, int graph) {
    r.times.push_back(static_cast<double>(k) * setup.dt);
    r.position_error.push_back(state.leftCols(n));
    if (setup.order == 2) {
      r.velocity_error.push_back(state.rightCols(n));
    } else {
      r.velocity_error.push_back(rhs(state, schedule.graph(graph)));
    }
    r.graph_index.push_back(graph);
  };

  const double dt = setup.dt;
  for (long k = 0; k < total; ++k) {
    const int gi = graph_of(k);
    if (k > 0 && gi != r.graph_index.back()) r.switches.push_back({k, static_cast<double>(k) * dt, r.graph_index.back(), gi});
    record(k, x, gi);
    const TopologyGraph& g = schedule.graph(gi);
    const MatrixXd k1 = rhs(x, g);
    const MatrixXd k2 = rhs(x + 0.5 * dt * k1, g);
    const MatrixXd k3 = rhs(x + 0.5 * dt * k2, g);
    const MatrixXd k4 = rhs(x + dt * k3, g);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double norm = x.norm();
    if (!std::isfinite(norm) || norm > 1e12) {
      const double t = static_cast<double>(k + 1) * dt;
      throw DivergenceError("state norm exceeded 1e12 at t = " + std::to_string(t), t);
    }
  }
  const int last = graph_of(total);
  if (last != r.graph_index.back()) r.switches.push_back({total, static_cast<double>(total) * dt, r.graph_index.back(), last});
  record(total, x, last);
  return r;
}

LyapunovTrace lyapunov_trace(const SimulationResult& result, const Polynomial& v, const SwitchingSchedule& schedule) {
  const FlatMap f(v);
  const int n = result.position_error.empty() ? 0 : static_cast<int>(result.position_error.front().cols());
  if (v.variable_count() != n) throw DimensionError("V must have " + std::to_string(n) + " variables");
  VectorXd origin = VectorXd::Zero(n);
  const double v0 = f(origin)(0);
  auto vf = [&](const VectorXd& x) { return f(x)(0) - v0; };

  auto value = [&](std::size_t k, int graph) {
    const MatrixXd& w = result.position_error[k];
    double sum = 0.0;
    if (result.order == 1) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) sum += vf(w.row(i).transpose());
      return sum;
    }
    const TopologyGraph& g = schedule.graph(graph);
    const MatrixXd& a = g.adjacency();
    const VectorXd& d = g.leader_gains();
    const MatrixXd& nu = result.velocity_error[k];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.rows(); ++j) {
        if (a(i, j) != 0.0) sum += 0.5 * a(i, j) * vf((w.row(j) - w.row(i)).transpose());
      }
      if (d(i) != 0.0) sum += d(i) * vf(w.row(i).transpose());
      sum += vf(nu.row(i).transpose());
    }
    return sum;
  };

  LyapunovTrace t;
  const std::size_t points = result.times.size();
  t.value.reserve(points);
  for (std::size_t k = 0; k < points; ++k) t.value.push_back(value(k, result.graph_index[k]));
  if (points > 0) t.step_end.reserve(points - 1);
  for (std::size_t k = 0; k + 1 < points; ++k) {
    const bool same = result.order == 1 || result.graph_index[k] == result.graph_index[k + 1];
    t.step_end.push_back(same ? t.value[k + 1] : value(k + 1, result.graph_index[k]));
  }
  return t;
}

MonotonicityReport check_monotonicity(const SimulationResult& result, const LyapunovTrace& trace,
                                      double relative_tolerance) {
  MonotonicityReport r;
  for (std::size_t k = 0; k < trace.step_end.size(); ++k) {
    const double allowed = relative_tolerance * (1.0 + std::abs(trace.value[k]));
    const double within = trace.step_end[k] - trace.value[k];
    if (within > allowed) {
      ++r.within_violations;
      r.worst_within = std::max(r.worst_within, within);
    }
    const double global = trace.value[k + 1] - trace.value[k];
    if (global > allowed) {
      ++r.global_violations;
      r.worst_global = std::max(r.worst_global, global);
    }
    if (result.graph_index[k] != result.graph_index[k + 1]) {
      const double jump = trace.value[k + 1] - trace.step_end[k];
      if (jump > 0.0) {
        ++r.switch_jumps;
        r.largest_jump = std::max(r.largest_jump, jump);
      }
    }
  }
  return r;
}

std::optional<double> consensus_time(const SimulationResult& result, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  std::optional<double> since;
  for (std::size_t k = 0; k < result.times.size(); ++k) {
    bool inside = result.position_norms(static_cast<long>(k)).maxCoeff() <= epsilon;
    if (inside && result.order == 2) inside = result.velocity_norms(static_cast<long>(k)).maxCoeff() <= epsilon;
    if (!inside) {
      since.reset();
    } else if (!since) {
      since = result.times[k];
    }
  }
  return since;
}

void write_csv(std::ostream& out, const SimulationResult& result, const LyapunovTrace& trace) {
  const int agents = result.agent_count();
  std::string line = "t";
  for (int i = 1; i <= agents; ++i) line += ",pos_err_" + std::to_string(i);
  for (int i = 1; i <= agents; ++i) line += ",vel_err_" + std::to_string(i);
  line += ",lyap,graph_index\n";
  out << line;
  for (std::size_t k = 0; k < result.times.size(); ++k) {
    line.clear();
    append_number(line, result.times[k]);
    const VectorXd p = result.position_norms(static_cast<long>(k));
    const VectorXd v = result.velocity_norms(static_cast<long>(k));
    for (int i = 0; i < agents; ++i) {
      line += ',';
      append_number(line, p(i));
    }
    for (int i = 0; i < agents; ++i) {
      line += ',';
      append_number(line, v(i));
    }
    line += ',';
    append_number(line, trace.value.at(k));
    line += ',' + std::to_string(result.graph_index[k]) + '\n';
    out << line;
  }
}

SimulationSetup simulation_setup_from_json(const json& j) {
  try {
    SimulationSetup s;
    s.order = j.value("order", 2);
    const json& init = j.at("initial");
    s.z_gamma = vector_from_json(init, "z_gamma");
    s.z0 = matrix_from_json(init, "z");
    if (s.order == 2) {
      s.v_gamma = vector_from_json(init, "v_gamma");
      s.v0 = matrix_from_json(init, "v");
      s.h1 = j.at("h1").get<PolyVector>();
      s.h2 = j.at("h2").get<PolyVector>();
    } else if (s.order == 1) {
      s.h = j.at("h").get<PolyVector>();
    } else {
      throw FormatError("order must be 1 or 2");
    }
    if (j.contains("simulation")) {
      s.dt = j["simulation"].value("dt", s.dt);
      s.t_final = j["simulation"].value("T", s.t_final);
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("simulation input: ") + e.what());
  }
}

void to_json(json& j, const SwitchEvent& e) {
  j = {{"step", e.step}, {"time", e.time}, {"from", e.from}, {"to", e.to}};
}

void to_json(json& j, const MonotonicityReport& r) {
  j = {{"within_violations", r.within_violations}, {"worst_within", r.worst_within},
       {"global_violations", r.global_violations}, {"worst_global", r.worst_global},
       {"switch_jumps", r.switch_jumps},           {"largest_jump", r.largest_jump}};
}

}  // namespace sosmas
