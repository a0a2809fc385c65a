// Acceptance gate: one PASS/FAIL line per criterion.
//   acceptance            run all criteria
//   acceptance 3 7        run the listed ones
// Exit status is 0 iff every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sosmas/cli.hpp"
#include "sosmas/conditions.hpp"
#include "sosmas/graph.hpp"
#include "sosmas/poly.hpp"
#include "sosmas/sdp.hpp"
#include "sosmas/sim.hpp"
#include "sosmas/sos.hpp"

using namespace sosmas;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Detail {
 public:
  template <typename T>
  Detail& operator<<(const T& v) {
    os_ << v;
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

const std::string kExample = std::string(SOSMAS_DATA_DIR) + "/paper_example.json";

json load_example() {
  std::ifstream in(kExample);
  return json::parse(in);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double lambda_min(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues()(0);
}

Monomial mono(std::vector<int> e) { return Monomial(std::move(e)); }

fs::path scratch_dir(const std::string& tag) {
  const fs::path d = fs::temp_directory_path() / ("sosmas_acceptance_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::vector<std::string>& args, std::string& diagnostics) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  diagnostics = err.str();
  return code;
}

// Every stored certificate rechecked from its serialized form.
bool file_certificates_valid(const json& result, int& count, double& worst_residual) {
  count = 0;
  worst_residual = 0.0;
  bool ok = !result.at("certificates").empty();
  for (const auto& c : result.at("certificates")) {
    const auto cert = c.at("certificate").get<GramCertificate>();
    const CertificateCheck check = check_certificate(cert);
    ok = ok && check.valid;
    worst_residual = std::max(worst_residual, check.residual);
    ++count;
  }
  return ok;
}

// ---------------------------------------------------------------------------

Outcome example_certificate() {
  const auto start = std::chrono::steady_clock::now();
  const VerifyResult r = verify(verify_problem_from_json(load_example()));
  const double secs = seconds_since(start);
  bool grams = r.certificates.size() == 3;
  double worst_rel = 0.0;
  for (const auto& c : r.certificates) {
    const CertificateCheck check = check_certificate(c.certificate);
    grams = grams && check.valid;
    const double scale = 1.0 + c.certificate.target.max_abs_coefficient();
    worst_rel = std::max(worst_rel, check.residual / scale);
  }
  const double backward = r.symmetry ? r.symmetry->backward_error : INFINITY;
  const bool pass = r.feasible && r.psi_lambda_min > 0.0 && grams && worst_rel <= 1e-6 && backward <= 2e-4 &&
                    secs < 60.0;
  return {pass, (Detail() << "feasible=" << r.feasible << " lambda_min(Psi)=" << r.psi_lambda_min
                          << " certificates=" << r.certificates.size() << " worst relative Gram residual="
                          << worst_rel << " symmetry backward error=" << backward << " (forward "
                          << (r.symmetry ? r.symmetry->forward_residual : NAN) << ") time=" << secs << "s")
                     .str()};
}

Outcome gradient_consistency() {
  const json ex = load_example();
  const auto v = ex.at("V").get<Polynomial>();
  const auto h1 = ex.at("h1").get<PolyVector>();
  // Term-by-term derivative, independent of the library's gradient.
  double worst = 0.0;
  bool shapes = h1.size() == static_cast<std::size_t>(v.variable_count());
  for (int k = 0; shapes && k < v.variable_count(); ++k) {
    Polynomial dv(v.variable_count());
    for (const auto& [m, c] : v.terms()) {
      if (m[k] == 0) continue;
      std::vector<int> e = m.exponents();
      e[static_cast<std::size_t>(k)] -= 1;
      dv.add_term(Monomial(e), c * m[k]);
    }
    worst = std::max(worst, max_coefficient_difference(dv, h1[static_cast<std::size_t>(k)]));
  }
  return {shapes && worst <= 2e-4, (Detail() << "max |dV/dx - h1| = " << worst).str()};
}

Outcome quartic_synthesis() {
  const fs::path dir = scratch_dir("synth4");
  const std::string out = (dir / "synth.json").string();
  std::string diag;
  const int code = run_cli({"synth", "--problem", kExample, "--order", "2", "--deg-v", "4", "--deg-h", "3", "--out", out},
                           diag);
  if (code != cli::kSuccess) return {false, (Detail() << "exit " << code << ": " << diag).str()};
  std::ifstream in(out);
  const json r = json::parse(in);
  int count = 0;
  double worst = 0.0;
  const bool valid = file_certificates_valid(r, count, worst);
  const bool pass = r.at("feasible").get<bool>() && valid;
  fs::remove_all(dir);
  return {pass, (Detail() << "status=" << r.at("status").get<std::string>() << " certificates=" << count
                          << " all valid=" << valid << " worst residual=" << worst)
                    .str()};
}

Outcome quadratic_infeasible() {
  const fs::path dir = scratch_dir("synth2");
  const std::string out = (dir / "synth.json").string();
  std::string diag;
  const auto start = std::chrono::steady_clock::now();
  const int code = run_cli({"synth", "--problem", kExample, "--order", "2", "--deg-v", "2", "--out", out}, diag);
  const double secs = seconds_since(start);
  if (code == cli::kError) return {false, "exit 1: " + diag};
  std::ifstream in(out);
  const json r = json::parse(in);
  bool every_round = !r.at("rounds").empty();
  for (const auto& round : r.at("rounds")) every_round = every_round && round.at("stats").at("status") == "infeasible";
  const bool pass = code == cli::kNegative && r.at("status") == "infeasible" && every_round && secs < 60.0;
  fs::remove_all(dir);
  return {pass, (Detail() << "exit=" << code << " status=" << r.at("status").get<std::string>()
                          << " rounds=" << r.at("rounds").size() << " time=" << secs << "s")
                    .str()};
}

SwitchingSchedule example_schedule() { return load_example().at("schedule").get<SwitchingSchedule>(); }

Outcome closed_loop_convergence() {
  const SimulationSetup setup = simulation_setup_from_json(load_example());
  const SimulationResult r = integrate(example_schedule(), setup);
  const double pos = r.position_norms(r.steps()).maxCoeff();
  const double vel = r.velocity_norms(r.steps()).maxCoeff();
  const bool pass = setup.dt == 1e-4 && setup.t_final == 10.0 && pos <= 1e-2 && vel <= 1e-2;
  return {pass, (Detail() << "T=" << r.times.back() << " max position error=" << pos
                          << " max velocity error=" << vel << " (bound 0.01)")
                    .str()};
}

Outcome lyapunov_monitor() {
  const json ex = load_example();
  const SwitchingSchedule sched = example_schedule();
  const SimulationResult run = integrate(sched, simulation_setup_from_json(ex));
  const MonotonicityReport second = check_monotonicity(run, lyapunov_trace(run, ex.at("V").get<Polynomial>(), sched));

  // First-order certificate for a fixed cubic coupling, then the switched run.
  Polynomial c1(2);
  c1.add_term(mono({1, 0}), 1.0);
  c1.add_term(mono({3, 0}), 0.5);
  Polynomial c2(2);
  c2.add_term(mono({0, 1}), 1.0);
  c2.add_term(mono({0, 3}), 0.5);
  SynthesisConfig c;
  c.order = 1;
  c.variable_count = 2;
  c.deg_v = 4;
  c.qform = QForm({mono({1, 0}), mono({0, 1})});
  c.mode = SynthesisMode::FixedH;
  c.coupling_seed = PolyVector({c1, c2});
  const SynthesisResult cert = synthesize(c);
  if (!cert.feasible) return {false, "first-order synthesis failed: " + cert.message};
  SimulationSetup s = simulation_setup_from_json(ex);
  s.order = 1;
  s.h = cert.h;
  s.t_final = 2.0;
  const SimulationResult first = integrate(sched, s);
  const MonotonicityReport m1 = check_monotonicity(first, lyapunov_trace(first, cert.v, sched));

  const bool pass = second.within_violations == 0 && m1.global_violations == 0 && m1.switch_jumps == 0;
  return {pass, (Detail() << "second-order within-subinterval violations=" << second.within_violations
                          << " (switch jumps flagged " << second.switch_jumps << ");"
                          << " certified first-order global violations=" << m1.global_violations
                          << " switch jumps=" << m1.switch_jumps)
                    .str()};
}

TopologyGraph random_graph(std::mt19937& rng, int n, double edge_p, double gain_p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> w(0.1, 3.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (u(rng) < edge_p) a(i, j) = a(j, i) = w(rng);
    }
    if (u(rng) < gain_p) d(i) = w(rng);
  }
  return TopologyGraph(a, d);
}

Outcome laplacian_identity() {
  std::mt19937 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  int cases = 0;
  for (; cases < 100; ++cases) {
    const int n = 1 + cases % 6;
    const int dim = 1 + cases % 3;
    const TopologyGraph g = random_graph(rng, n, 0.6, 0.0);
    const Eigen::MatrixXd& adj = g.adjacency();
    Eigen::MatrixXd alpha(n, dim);
    Eigen::MatrixXd beta(n, dim);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < dim; ++k) {
        alpha(i, k) = z(rng);
        beta(i, k) = z(rng);
      }
    }
    // Oracle: sum_{i<j} A_ij (alpha_i - alpha_j).(beta_i - beta_j), straight from the adjacency.
    double oracle = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) oracle += adj(i, j) * (alpha.row(i) - alpha.row(j)).dot(beta.row(i) - beta.row(j));
    }
    const double lhs = laplacian_bilinear_sum(g.laplacian(), alpha, beta);
    const double rhs = laplacian_pairwise_form(g.laplacian(), alpha, beta);
    const double scale = 1.0 + std::abs(oracle);
    worst = std::max({worst, std::abs(lhs - oracle) / scale, std::abs(rhs - oracle) / scale});
  }
  return {worst <= 1e-10, (Detail() << cases << " Laplacians, worst relative deviation " << worst).str()};
}

Outcome joint_connectivity() {
  std::mt19937 rng(31);
  int disagreements = 0;
  int connected = 0;
  const int collections = 300;
  for (int trial = 0; trial < collections; ++trial) {
    const int n = 1 + trial % 6;
    const int m = 1 + (trial / 6) % 4;
    std::vector<TopologyGraph> gs;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < m; ++k) {
      gs.push_back(random_graph(rng, n, 0.25, 0.12));
      sum += gs.back().laplacian() + gs.back().leader_matrix();
    }
    const bool pd = lambda_min(sum) > 1e-9;
    const bool bfs = connected_with_leader(graph_union(gs));
    disagreements += pd != bfs ? 1 : 0;
    connected += bfs ? 1 : 0;
  }
  const bool mixed = connected > 0 && connected < collections;
  return {disagreements == 0 && mixed, (Detail() << collections << " collections, " << connected
                                                 << " jointly connected, disagreements=" << disagreements)
                                           .str()};
}

// Smallest root of det(M - xI) by Newton from below all roots; the
// coefficients come from the Faddeev-LeVerrier recursion.
double charpoly_min_root(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  // p(x) = x^n + c[1] x^(n-1) + ... + c[n] for det(xI - M).
  std::vector<double> c(static_cast<std::size_t>(n + 1), 0.0);
  c[0] = 1.0;
  Eigen::MatrixXd mk = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k <= n; ++k) {
    mk = m * mk + c[static_cast<std::size_t>(k - 1)] * Eigen::MatrixXd::Identity(n, n);
    c[static_cast<std::size_t>(k)] = -(m * mk).trace() / k;
  }
  auto eval = [&](double x, double& dp) {
    double p = 0.0;
    dp = 0.0;
    for (int k = 0; k <= n; ++k) {
      dp = dp * x + p;
      p = p * x + c[static_cast<std::size_t>(k)];
    }
    return p;
  };
  double x = -m.norm() - 1.0;
  for (int it = 0; it < 500; ++it) {
    double dp = 0.0;
    const double p = eval(x, dp);
    if (dp == 0.0) break;
    const double next = x - p / dp;
    if (!(next > x)) break;
    x = next;
  }
  return x;
}

sdp::SdpProblem min_eigenvalue_sdp(const Eigen::MatrixXd& m) {
  sdp::SdpProblem p;
  const int n = static_cast<int>(m.rows());
  p.add_block(n);
  const int t = p.add_free();
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      sdp::Equality eq;
      eq.lhs.block_terms.push_back({0, i, j, i == j ? 1.0 : 0.5});
      if (i == j) eq.lhs.free_terms.push_back({t, 1.0});
      eq.rhs = m(i, j);
      p.equalities.push_back(eq);
    }
  }
  p.objective.free_terms.push_back({t, 1.0});
  return p;
}

double worst_kkt(const sdp::Residuals& r) { return std::max({r.primal, r.dual, r.gap}); }

Outcome solver_suite() {
  std::mt19937 rng(11);
  std::normal_distribution<double> z(0.0, 1.0);
  double eig_err = 0.0;
  double kkt = 0.0;
  int optimal = 0;
  bool statuses = true;
  for (int trial = 0; trial < 24; ++trial) {
    const int n = 1 + trial % 6;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) m(i, j) = m(j, i) = z(rng);
    }
    const sdp::SdpProblem p = min_eigenvalue_sdp(m);
    const sdp::SdpSolution s = sdp::solve(p);
    if (s.status != sdp::SdpStatus::Optimal) {
      statuses = false;
      continue;
    }
    ++optimal;
    kkt = std::max(kkt, worst_kkt(sdp::residuals(p, s)));
    eig_err = std::max(eig_err, std::abs(s.free_values(0) - charpoly_min_root(m)));
  }

  Polynomial motzkin(2);
  motzkin.add_term(mono({4, 2}), 1.0);
  motzkin.add_term(mono({2, 4}), 1.0);
  motzkin.add_term(mono({2, 2}), -3.0);
  motzkin.add_term(mono({0, 0}), 1.0);
  SosProgram mprog;
  mprog.add_sos(to_decision(motzkin), monomial_basis(2, 3));
  const sdp::SdpStatus motzkin_status = mprog.solve().sdp.status;

  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  int certified = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int nv = 1 + trial % 3;
    const int half = 1 + (trial / 3) % 3;
    const auto basis = monomial_basis(nv, half);
    Polynomial target(nv);
    for (int s = 0; s < 1 + trial % 3; ++s) {
      Polynomial q(nv);
      for (const auto& mo : basis) q.add_term(mo, coef(rng));
      target += q * q;
    }
    SosProgram prog;
    const int idx = prog.add_sos(to_decision(target));
    const SosSolution sol = prog.solve();
    if (!sol.optimal()) continue;
    ++optimal;
    kkt = std::max(kkt, worst_kkt(sdp::residuals(prog.build(), sol.sdp)));
    if (check_certificate(prog.raw_certificate(idx, sol)).valid) ++certified;
  }

  const bool pass = statuses && eig_err <= 1e-7 && kkt <= 1e-8 &&
                    motzkin_status == sdp::SdpStatus::Infeasible && certified == 30;
  return {pass, (Detail() << "min-eigenvalue error vs characteristic polynomial=" << eig_err
                          << " worst KKT residual over " << optimal << " optimal solves=" << kkt
                          << " Motzkin=" << sdp::to_string(motzkin_status) << " random SOS certified=" << certified
                          << "/30")
                    .str()};
}

Outcome scalar_window() {
  const Polynomial v = Polynomial::monomial(mono({2}), 1.0);
  const PolyVector h({Polynomial::monomial(mono({1}), 1.0)});
  const QForm qf({mono({1})}, 2);
  // Hand algebra: lower bound (psi - 1) a^2, decrease (2 - psi) (a - b)^2.
  auto oracle_feasible = [](double psi) { return psi >= 1.0 - 1e-12 && psi <= 2.0 + 1e-12; };
  int agree = 0;
  int total = 0;
  double target_err = 0.0;
  std::ostringstream bad;
  for (double psi : {0.9, 1.0, 1.0 + 1e-6, 1.5, 2.0 - 1e-6, 2.0, 2.1, 3.0}) {
    const Eigen::MatrixXd fixed = Eigen::MatrixXd::Constant(1, 1, psi);
    const DecisionPolynomial lower = build_psd_lower_bound(qf, to_affine(fixed));
    const DecisionPolynomial dec = build_first_order_decrease(to_decision(v), to_decision(h), qf, to_affine(fixed));
    // (a, b, g) = (1, 0.3, -0.4): a - b = 0.7, a - g = 1.4.
    const std::vector<double> pt{1.0, 0.3, -0.4};
    auto eval_numeric = [](const DecisionPolynomial& p, const std::vector<double>& x) {
      Polynomial num(p.variable_count());
      for (const auto& [m, c] : p.terms()) num.add_term(m, c.constant());
      return evaluate(num, x);
    };
    target_err = std::max(target_err, std::abs(eval_numeric(lower, {1.4}) - (psi - 1.0) * 1.96));
    target_err = std::max(target_err, std::abs(eval_numeric(dec, pt) - (2.0 - psi) * 0.49));

    VerifyProblem p;
    p.order = 1;
    p.v = v;
    p.h = h;
    p.qform = qf;
    p.psi = fixed;
    const VerifyResult r = verify(p);
    ++total;
    if (r.feasible == oracle_feasible(psi)) {
      ++agree;
    } else {
      bad << " psi=" << psi;
    }
  }
  const bool pass = agree == total && target_err <= 1e-12;
  return {pass, (Detail() << agree << "/" << total << " psi values agree with [1, 2]" << bad.str()
                          << "; target deviation from hand algebra=" << target_err)
                    .str()};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list{
      {"example certificate verifies", example_certificate},
      {"gradient consistency of V and h1", gradient_consistency},
      {"quartic synthesis certifies", quartic_synthesis},
      {"quadratic synthesis is infeasible", quadratic_infeasible},
      {"closed-loop errors below 1e-2 at T=10", closed_loop_convergence},
      {"Lyapunov monotonicity monitor", lyapunov_monitor},
      {"Laplacian bilinear identity", laplacian_identity},
      {"joint connectivity iff positive definite", joint_connectivity},
      {"solver suite", solver_suite},
      {"scalar Psi window", scalar_window},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria().size())) {
      std::cerr << "unknown criterion '" << argv[i] << "'\n";
      return 2;
    }
    selected.push_back(k);
  }
  if (selected.empty()) {
    selected.resize(criteria().size());
    std::iota(selected.begin(), selected.end(), 1);
  }
  int failures = 0;
  for (int k : selected) {
    const Criterion& c = criteria()[static_cast<std::size_t>(k - 1)];
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << k << "] " << c.name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
