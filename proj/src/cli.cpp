#include "sosmas/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sosmas/conditions.hpp"
#include "sosmas/errors.hpp"
#include "sosmas/graph.hpp"
#include "sosmas/sdp.hpp"
#include "sosmas/sim.hpp"

namespace sosmas::cli {

using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
  if (!out) throw FormatError("write failed for " + path);
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Options {
  std::string problem;
  std::string out;
  std::string meta;
  std::string dump_sdp;
  std::optional<double> tol;

  // synth
  std::optional<int> order;
  std::optional<int> deg_v;
  std::optional<int> deg_h;
  std::optional<int> max_rounds;
  std::optional<std::string> mode;

  // simulate
  std::string summary;
  std::optional<double> dt;
  std::optional<double> t_final;
  double epsilon = 1e-2;

  // topology
  bool reference = false;
};

sdp::SdpSettings solver_settings(const Options& o) {
  sdp::SdpSettings s;
  if (o.tol) {
    if (!(*o.tol > 0.0)) throw DomainError("--tol must be positive");
    s.tol = *o.tol;
  }
  return s;
}

void dump_sdp(const Options& o, const sdp::SdpProblem& p) {
  if (o.dump_sdp.empty()) return;
  std::ostringstream os;
  sdp::write_problem(os, p);
  write_text(o.dump_sdp, os.str());
}

int cmd_verify(const Options& o, std::ostream& err) {
  const VerifyProblem p = verify_problem_from_json(read_json(o.problem));
  dump_sdp(o, verify_sdp(p));
  const VerifyResult r = verify(p, solver_settings(o));
  write_json(o.out, r);
  if (!r.feasible) {
    err << "verify: no certificate (" << r.message << ")\n";
    return kNegative;
  }
  return kSuccess;
}

int cmd_synth(const Options& o, std::ostream& err) {
  SynthesisConfig c = synthesis_config_from_json(read_json(o.problem));
  if (o.order) c.order = *o.order;
  if (o.deg_v) c.deg_v = *o.deg_v;
  if (o.deg_h) c.deg_h = *o.deg_h;
  if (o.max_rounds) c.max_rounds = *o.max_rounds;
  if (o.mode) c.mode = *o.mode == "fixed_h" ? SynthesisMode::FixedH : SynthesisMode::Alternate;
  dump_sdp(o, synthesis_sdp(c));
  const SynthesisResult r = synthesize(c, solver_settings(o));
  write_json(o.out, r);
  if (!r.feasible) {
    err << "synth: " << sdp::to_string(r.status) << " (" << r.message << ")\n";
    return kNegative;
  }
  return kSuccess;
}

int cmd_simulate(const Options& o) {
  const json problem = read_json(o.problem);
  SimulationSetup setup = simulation_setup_from_json(problem);
  if (o.dt) setup.dt = *o.dt;
  if (o.t_final) setup.t_final = *o.t_final;
  SwitchingSchedule schedule;
  try {
    schedule = problem.at("schedule").get<SwitchingSchedule>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("schedule: ") + e.what());
  }
  const SimulationResult r = integrate(schedule, setup);

  // Without V the lyap column is zero.
  const int n = static_cast<int>(setup.z0.cols());
  const Polynomial v = problem.contains("V") ? problem.at("V").get<Polynomial>() : Polynomial(n);
  const LyapunovTrace trace = lyapunov_trace(r, v, schedule);
  std::ostringstream csv;
  write_csv(csv, r, trace);
  write_text(o.out, csv.str());

  if (!o.summary.empty()) {
    const auto t = consensus_time(r, o.epsilon);
    json s = {{"order", r.order},
              {"dt", setup.dt},
              {"T", setup.t_final},
              {"steps", r.steps()},
              {"switch_count", r.switches.size()},
              {"final_position_error", r.position_norms(r.steps()).maxCoeff()},
              {"final_velocity_error", r.velocity_norms(r.steps()).maxCoeff()},
              {"epsilon", o.epsilon},
              {"consensus_time", t ? json(*t) : json(nullptr)}};
    if (problem.contains("V")) s["lyapunov"] = check_monotonicity(r, trace);
    write_json(o.summary, s);
  }
  return kSuccess;
}

double lambda_min_of(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

int cmd_topology(const Options& o, std::ostream& err) {
  SwitchingSchedule schedule;
  if (o.reference) {
    schedule = reference_schedule();
  } else {
    if (o.problem.empty()) throw FormatError("topology check needs --problem or --reference");
    const json problem = read_json(o.problem);
    try {
      schedule = problem.contains("schedule") ? problem.at("schedule").get<SwitchingSchedule>()
                                              : problem.get<SwitchingSchedule>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("schedule: ") + e.what());
    }
  }
  json graphs = json::array();
  for (std::size_t i = 0; i < schedule.graphs().size(); ++i) {
    const TopologyGraph& g = schedule.graphs()[i];
    graphs.push_back({{"index", i},
                      {"connected_with_leader", connected_with_leader(g)},
                      {"lambda_min", lambda_min_of(g.grand_matrix())}});
  }
  json windows = json::array();
  bool all = true;
  for (int w = 0; w < schedule.window_count(); ++w) {
    const TopologyGraph u = schedule.window_union(w);
    const bool joint = schedule.is_jointly_connected(w);
    all = all && joint;
    windows.push_back({{"index", w},
                       {"first_subinterval", schedule.window_boundaries()[static_cast<std::size_t>(w)]},
                       {"end_subinterval", schedule.window_boundaries()[static_cast<std::size_t>(w) + 1]},
                       {"jointly_connected", joint},
                       {"lambda_min", lambda_min_of(u.grand_matrix())}});
  }
  const json result = {{"jointly_connected", all},
                       {"dwell_time", schedule.dwell_time()},
                       {"graphs", graphs},
                       {"windows", windows}};
  if (!o.out.empty()) {
    write_json(o.out, result);
  }
  if (!all) {
    err << "topology: some window is not jointly connected\n";
    return kNegative;
  }
  return kSuccess;
}

void write_meta(const Options& o, const std::string& command, const std::vector<std::string>& args,
                const std::string& started, double seconds, int code) {
  std::string path = o.meta;
  if (path.empty()) {
    if (o.out.empty()) return;
    path = o.out + ".meta.json";
  }
  write_json(path, {{"tool", "sosmas"},
                    {"version", kVersion},
                    {"command", command},
                    {"arguments", args},
                    {"started_utc", started},
                    {"wall_seconds", seconds},
                    {"exit_code", code}});
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Polynomial Lyapunov certificates for leader-follower consensus", "sosmas"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto common = [&](CLI::App* sub, bool problem_required) {
    auto* p = sub->add_option("--problem", o.problem, "problem JSON")->check(CLI::ExistingFile);
    if (problem_required) p->required();
    sub->add_option("--meta", o.meta, "run metadata JSON (default: <out>.meta.json)");
  };

  CLI::App* verify_cmd = app.add_subcommand("verify", "check a fixed V and couplings");
  common(verify_cmd, true);
  verify_cmd->add_option("--out", o.out, "result JSON")->required();
  verify_cmd->add_option("--dump-sdp", o.dump_sdp, "write the SDP in plain text");
  verify_cmd->add_option("--tol", o.tol, "solver tolerance");

  CLI::App* synth_cmd = app.add_subcommand("synth", "search for V and couplings");
  common(synth_cmd, true);
  synth_cmd->add_option("--out", o.out, "result JSON")->required();
  synth_cmd->add_option("--dump-sdp", o.dump_sdp, "write the first SDP in plain text");
  synth_cmd->add_option("--tol", o.tol, "solver tolerance");
  synth_cmd->add_option("--order", o.order, "1 or 2")->check(CLI::IsMember({1, 2}));
  synth_cmd->add_option("--deg-v", o.deg_v, "degree of V")->check(CLI::Range(2, 12));
  synth_cmd->add_option("--deg-h", o.deg_h, "degree of the couplings")->check(CLI::Range(1, 11));
  synth_cmd->add_option("--max-rounds", o.max_rounds, "alternation rounds")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--mode", o.mode, "alternate or fixed_h")->check(CLI::IsMember({"alternate", "fixed_h"}));

  CLI::App* sim_cmd = app.add_subcommand("simulate", "integrate the closed loop");
  common(sim_cmd, true);
  sim_cmd->add_option("--out", o.out, "trajectory CSV")->required();
  sim_cmd->add_option("--summary", o.summary, "summary JSON");
  sim_cmd->add_option("--dt", o.dt, "step size [s]")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--T", o.t_final, "horizon [s]")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--epsilon", o.epsilon, "consensus threshold")->check(CLI::PositiveNumber);

  CLI::App* topo_cmd = app.add_subcommand("topology", "switching topology tools");
  topo_cmd->require_subcommand(1);
  CLI::App* check_cmd = topo_cmd->add_subcommand("check", "joint connectivity of each window");
  common(check_cmd, false);
  check_cmd->add_option("--out", o.out, "report JSON");
  check_cmd->add_flag("--reference", o.reference, "use the built-in four-follower schedule");

  std::vector<const char*> argv{"sosmas"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kError;
  }

  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  std::string command;
  int code = kError;
  try {
    if (verify_cmd->parsed()) {
      command = "verify";
      code = cmd_verify(o, err);
    } else if (synth_cmd->parsed()) {
      command = "synth";
      code = cmd_synth(o, err);
    } else if (sim_cmd->parsed()) {
      command = "simulate";
      code = cmd_simulate(o);
    } else {
      command = "topology check";
      code = cmd_topology(o, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_meta(o, command, args, started, seconds, code);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  return code;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace sosmas::cli
