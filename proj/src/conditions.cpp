#include "sosmas/conditions.hpp"

#include <algorithm>
#include <map>

#include "sosmas/errors.hpp"

namespace sosmas {

namespace {

using nlohmann::json;

DecisionPolynomial times(const Polynomial& p, const AffineExpr& e) {
  DecisionPolynomial out(p.variable_count());
  for (const auto& [m, c] : p.terms()) out.add_term(m, e * c);
  return out;
}

void check_psi(const QForm& qf, const AffineMatrix& psi) {
  if (static_cast<int>(psi.size()) != qf.size()) throw DimensionError("Psi size differs from q length");
  for (const auto& row : psi) {
    if (static_cast<int>(row.size()) != qf.size()) throw DimensionError("Psi is not square");
  }
}

// Shared body of both decrease conditions.
DecisionPolynomial decrease(const DecisionPolynomial& v, const DecisionPolyVector& h, const QForm& qf,
                            const AffineMatrix& psi) {
  const int n = qf.variable_count();
  if (v.variable_count() != n || h.variable_count() != n || static_cast<int>(h.size()) != n) {
    throw DimensionError("V and the coupling must act on the q variables");
  }
  check_psi(qf, psi);
  if (has_decisions(v) && has_decisions(h)) {
    throw BilinearityError("V and the coupling cannot both be unknown");
  }
  const int big = 3 * n;
  const auto a_minus_g = AffineSubstitution::difference(n, big, 0, 2 * n);
  const auto b_minus_g = AffineSubstitution::difference(n, big, n, 2 * n);
  const DecisionPolyVector grad = gradient(v);
  const DecisionPolyVector fv = substitute_affine(grad, a_minus_g) - substitute_affine(grad, b_minus_g);
  const DecisionPolyVector fh = substitute_affine(h, AffineSubstitution::embed(n, big, 0)) -
                                substitute_affine(h, AffineSubstitution::embed(n, big, n));
  DecisionPolynomial out = dot(fv, fh);

  const PolyVector q = qf.as_poly_vector();
  const PolyVector dq = substitute_affine(q, a_minus_g) - substitute_affine(q, b_minus_g);
  const int m = qf.size();
  for (int r = 0; r < m; ++r) {
    for (int c = r; c < m; ++c) {
      AffineExpr w = psi[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (r != c) w += psi[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
      if (w.negligible()) continue;
      out -= times(dq[static_cast<std::size_t>(r)] * dq[static_cast<std::size_t>(c)], w);
    }
  }
  return out;
}

Polynomial lyapunov_seed(int n, int deg_v) {
  Polynomial v(n);
  for (int k = 2; k <= deg_v; k += 2) {
    for (int i = 0; i < n; ++i) v.add_term(Monomial::variable(n, i, k), 1.0);
  }
  return v;
}

// Unknown polynomial sum_k c_k m_k with |c_k| <= bound.
DecisionPolynomial unknown_polynomial(SosProgram& prog, const std::vector<Monomial>& monomials, double bound) {
  DecisionPolynomial p(monomials.front().variable_count());
  for (const auto& m : monomials) {
    const int id = prog.new_free();
    prog.add_abs_bound(AffineExpr::variable(id), bound);
    p.add_term(m, AffineExpr::variable(id));
  }
  return p;
}

std::vector<Monomial> monomials_between(int n, int lo, int hi, bool even_only) {
  std::vector<Monomial> out;
  for (const auto& m : monomial_basis(n, hi)) {
    if (m.degree() < lo) continue;
    if (even_only && m.degree() % 2 != 0) continue;
    out.push_back(m);
  }
  return out;
}

struct PsiHandle {
  AffineMatrix entries;
  std::optional<MatrixVar> p;
  int t = -1;
};

// Psi = P + t I with P PSD; the objective maximizes t.
PsiHandle add_psi(SosProgram& prog, const QForm& qf, const std::optional<Eigen::MatrixXd>& fixed) {
  PsiHandle h;
  if (fixed) {
    if (fixed->rows() != qf.size() || fixed->cols() != qf.size()) {
      throw DimensionError("fixed Psi size differs from q length");
    }
    h.entries = to_affine(*fixed);
    return h;
  }
  h.p = prog.new_psd_matrix(qf.size());
  h.t = prog.new_free();
  h.entries = to_affine(*h.p);
  for (int i = 0; i < qf.size(); ++i) {
    h.entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += AffineExpr::variable(h.t);
  }
  prog.set_objective(AffineExpr::variable(h.t));
  return h;
}

Eigen::MatrixXd psi_value(const PsiHandle& h, const SosSolution& sol) {
  const int m = static_cast<int>(h.entries.size());
  Eigen::MatrixXd out(m, m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      out(r, c) = sol.value(h.entries[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
    }
  }
  return 0.5 * (out + out.transpose());
}

double lambda_min(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// Interior-point iterates on these programs often stall a little above
// 1e-8; one retry at a looser tolerance recovers them. The certificates are
// rechecked independently either way.
SosSolution solve_with_retry(const SosProgram& prog, const sdp::SdpSettings& settings, double& used_tol) {
  used_tol = settings.tol;
  SosSolution sol = prog.solve(settings);
  if (sol.sdp.status != sdp::SdpStatus::NumericalFailure) return sol;
  sdp::SdpSettings looser = settings;
  looser.tol = 10.0 * settings.tol;
  SosSolution retry = prog.solve(looser);
  if (retry.sdp.status == sdp::SdpStatus::NumericalFailure) return sol;
  used_tol = looser.tol;
  return retry;
}

SolveStats stats_of(const sdp::SdpProblem& problem, const SosSolution& sol, double tol) {
  SolveStats s;
  s.tolerance = tol;
  s.status = sol.sdp.status;
  s.iterations = sol.sdp.iterations;
  s.residuals = sol.sdp.residuals;
  s.objective = sol.sdp.primal_objective;
  s.block_count = static_cast<int>(problem.block_sizes.size());
  for (int b : problem.block_sizes) s.largest_block = std::max(s.largest_block, b);
  s.equality_count = static_cast<int>(problem.equalities.size());
  return s;
}

struct Named {
  std::string name;
  int index;
};

std::vector<NamedCertificate> collect(const SosProgram& prog, const std::vector<Named>& fragments,
                                      const SosSolution& sol) {
  std::vector<NamedCertificate> out;
  for (const auto& f : fragments) {
    NamedCertificate nc;
    nc.name = f.name;
    nc.certificate = prog.raw_certificate(f.index, sol);
    nc.check = check_certificate(nc.certificate);
    out.push_back(std::move(nc));
  }
  return out;
}

std::string describe_failure(const SolveStats& stats, const std::vector<NamedCertificate>& certs,
                             double psi_min) {
  if (stats.status != sdp::SdpStatus::Optimal) return "solver status " + sdp::to_string(stats.status);
  for (const auto& c : certs) {
    if (!c.check.valid) return "certificate '" + c.name + "' does not validate";
  }
  if (!(psi_min > 0.0)) return "Psi is not positive definite";
  return "";
}

// Program for fixed V and coupling with Psi unknown (or fixed).
struct VerifyModel {
  SosProgram prog;
  PsiHandle psi;
  std::vector<Named> fragments;
};

VerifyModel verify_model(const VerifyProblem& p) {
  if (p.order != 1 && p.order != 2) throw DomainError("order must be 1 or 2");
  const int n = p.qform.variable_count();
  if (n == 0) throw DomainError("q is empty");
  if (p.v.variable_count() != n) throw DimensionError("V and q disagree on the variable count");
  VerifyModel m;
  m.psi = add_psi(m.prog, p.qform, p.psi);
  const DecisionPolynomial v = to_decision(p.v);
  const DecisionPolyVector coupling = to_decision(p.order == 1 ? p.h : p.h2);
  const DecisionPolynomial lower = build_psd_lower_bound(p.qform, m.psi.entries);
  const DecisionPolynomial dec = p.order == 1 ? build_first_order_decrease(v, coupling, p.qform, m.psi.entries)
                                              : build_second_order_decrease(v, coupling, p.qform, m.psi.entries);
  m.fragments.push_back({"lower_bound", m.prog.add_sos(lower)});
  m.fragments.push_back({"decrease", m.prog.add_sos(difference_coordinates(dec, n))});
  m.fragments.push_back({"positivity", m.prog.add_sos(positivity_target(v, p.positivity_eps))});
  return m;
}

}  // namespace

QForm::QForm(std::vector<Monomial> qhat, int exponent_2m) : qhat_(std::move(qhat)) {
  if (qhat_.empty()) throw DomainError("q needs at least one monomial");
  const int n = qhat_.front().variable_count();
  std::vector<bool> has_coordinate(static_cast<std::size_t>(n), false);
  for (const auto& m : qhat_) {
    if (m.variable_count() != n) throw DimensionError("q entries disagree on the variable count");
    if (m.degree() < 1) throw DomainError("q entries must have degree >= 1");
    if (m.degree() == 1) {
      for (int i = 0; i < n; ++i) {
        if (m[i] == 1) has_coordinate[static_cast<std::size_t>(i)] = true;
      }
    }
  }
  if (std::find(has_coordinate.begin(), has_coordinate.end(), false) != has_coordinate.end()) {
    throw DomainError("q must contain every coordinate monomial x_i");
  }
  exponent_2m_ = exponent_2m == 0 ? 2 * degree() : exponent_2m;
  if (exponent_2m_ < 2 || exponent_2m_ % 2 != 0) throw DomainError("exponent 2m must be even and >= 2");
}

int QForm::degree() const {
  int d = 0;
  for (const auto& m : qhat_) d = std::max(d, m.degree());
  return d;
}

PolyVector QForm::as_poly_vector() const {
  std::vector<Polynomial> out;
  for (const auto& m : qhat_) out.push_back(Polynomial::monomial(m, 1.0));
  return PolyVector(std::move(out));
}

AffineMatrix to_affine(const MatrixVar& m) {
  AffineMatrix out(static_cast<std::size_t>(m.size), std::vector<AffineExpr>(static_cast<std::size_t>(m.size)));
  for (int r = 0; r < m.size; ++r) {
    for (int c = 0; c < m.size; ++c) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m.entry(r, c);
  }
  return out;
}

AffineMatrix to_affine(const Eigen::MatrixXd& m) {
  AffineMatrix out(static_cast<std::size_t>(m.rows()), std::vector<AffineExpr>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = AffineExpr(m(r, c));
    }
  }
  return out;
}

DecisionPolynomial build_psd_lower_bound(const QForm& qf, const AffineMatrix& psi) {
  check_psi(qf, psi);
  const int n = qf.variable_count();
  const auto& q = qf.qhat();
  DecisionPolynomial out(n);
  for (int r = 0; r < qf.size(); ++r) {
    for (int c = 0; c < qf.size(); ++c) {
      const AffineExpr& w = psi[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      out.add_term(q[static_cast<std::size_t>(r)] * q[static_cast<std::size_t>(c)], w);
    }
  }
  for (int i = 0; i < n; ++i) out.add_term(Monomial::variable(n, i, qf.exponent_2m()), AffineExpr(-1.0));
  return out;
}

DecisionPolynomial build_first_order_decrease(const DecisionPolynomial& v, const DecisionPolyVector& h,
                                              const QForm& qf, const AffineMatrix& psi) {
  return decrease(v, h, qf, psi);
}

DecisionPolynomial build_second_order_decrease(const DecisionPolynomial& v, const DecisionPolyVector& h2,
                                               const QForm& qf, const AffineMatrix& psi) {
  return decrease(v, h2, qf, psi);
}

DecisionPolynomial difference_coordinates(const DecisionPolynomial& p, int n) {
  if (p.variable_count() != 3 * n) throw DimensionError("expected a polynomial in 3n variables");
  AffineSubstitution map = AffineSubstitution::embed(3 * n, 3 * n, 0);
  for (int i = 0; i < n; ++i) map.images[static_cast<std::size_t>(i)].linear[static_cast<std::size_t>(n + i)] = 1.0;
  const DecisionPolynomial moved = substitute_affine(p, map);
  // Terms of u-degree 0 and 1 cancel exactly for targets that vanish to
  // second order at a = b; only rounding residue is left there. Weights far
  // below the largest one are residue of cancelling expansions as well.
  double scale = 0.0;
  for (const auto& [m, c] : moved.terms()) {
    scale = std::max(scale, std::abs(c.constant()));
    for (const auto& [id, w] : c.linear()) scale = std::max(scale, std::abs(w));
  }
  const double floor = 1e-12 * scale;
  DecisionPolynomial out(3 * n);
  for (const auto& [m, c] : moved.terms()) {
    int u_degree = 0;
    for (int i = 0; i < n; ++i) u_degree += m[i];
    if (u_degree < 2) continue;
    AffineExpr kept(std::abs(c.constant()) > floor ? c.constant() : 0.0);
    for (const auto& [id, w] : c.linear()) {
      if (std::abs(w) > floor) kept += AffineExpr::variable(id, w);
    }
    out.add_term(m, kept);
  }
  return out;
}

DecisionPolynomial symmetry_residual(const DecisionPolynomial& v, const DecisionPolyVector& h1) {
  const int n = v.variable_count();
  if (h1.variable_count() != n || static_cast<int>(h1.size()) != n) {
    throw DimensionError("h1 must map R^n to R^n");
  }
  // A decision-bearing h1 may carry extra monomials; the equalities decide.
  if (!has_decisions(v) && !has_decisions(h1) && h1.degree() != v.degree() - 1) {
    throw DegreeError("deg h1 = " + std::to_string(h1.degree()) + " but deg V - 1 = " +
                      std::to_string(v.degree() - 1));
  }
  const int big = 2 * n;
  const auto at_a = AffineSubstitution::embed(n, big, 0);
  const auto at_b = AffineSubstitution::embed(n, big, n);
  const DecisionPolyVector grad = gradient(v);
  return dot(substitute_affine(grad, at_a), substitute_affine(h1, at_b)) -
         dot(substitute_affine(grad, at_b), substitute_affine(h1, at_a));
}

std::vector<AffineExpr> build_symmetry_equality(const DecisionPolynomial& v, const DecisionPolyVector& h1) {
  return compile_zero(symmetry_residual(v, h1));
}

SymmetryReport symmetry_report(const Polynomial& v, const PolyVector& h1) {
  SymmetryReport r;
  const DecisionPolynomial full = symmetry_residual(to_decision(v), to_decision(h1));
  for (const auto& [m, c] : full.terms()) r.forward_residual = std::max(r.forward_residual, std::abs(c.constant()));

  // Columns: coefficient (component i, monomial mono) of h1; rows: residual monomials.
  const int n = v.variable_count();
  const std::vector<Monomial> monos = monomial_basis(n, std::max(h1.degree(), 0));
  const auto at_a = AffineSubstitution::embed(n, 2 * n, 0);
  const auto at_b = AffineSubstitution::embed(n, 2 * n, n);
  const PolyVector grad = gradient(v);
  const PolyVector grad_a = substitute_affine(grad, at_a);
  const PolyVector grad_b = substitute_affine(grad, at_b);
  std::map<Monomial, int, GradedLex> row_of;
  std::vector<std::vector<std::pair<int, double>>> columns;
  Eigen::VectorXd current(static_cast<Eigen::Index>(n * monos.size()));
  int col = 0;
  for (int i = 0; i < n; ++i) {
    for (const auto& mono : monos) {
      std::vector<Polynomial> unit(static_cast<std::size_t>(n), Polynomial(n));
      unit[static_cast<std::size_t>(i)] = Polynomial::monomial(mono, 1.0);
      const PolyVector u(unit);
      const Polynomial image = dot(grad_a, substitute_affine(u, at_b)) - dot(grad_b, substitute_affine(u, at_a));
      std::vector<std::pair<int, double>> entries;
      for (const auto& [m, c] : image.terms()) {
        auto [it, inserted] = row_of.try_emplace(m, static_cast<int>(row_of.size()));
        entries.emplace_back(it->second, c);
      }
      columns.push_back(std::move(entries));
      current(col++) = h1[static_cast<std::size_t>(i)].coefficient(mono);
    }
  }
  r.equation_count = static_cast<int>(row_of.size());
  if (row_of.empty()) return r;
  Eigen::MatrixXd lin = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(row_of.size()), col);
  for (int k = 0; k < col; ++k) {
    for (auto [row, c] : columns[static_cast<std::size_t>(k)]) lin(row, k) = c;
  }
  const Eigen::VectorXd rhs = -(lin * current);
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(lin);
  const Eigen::VectorXd delta = cod.solve(rhs);
  r.backward_error = delta.cwiseAbs().maxCoeff();
  return r;
}

DecisionPolynomial positivity_target(const DecisionPolynomial& v, double eps) {
  const int n = v.variable_count();
  DecisionPolynomial out = v;
  out.add_term(Monomial::one(n), v.coefficient(Monomial::one(n)) * -1.0);
  for (int i = 0; i < n; ++i) out.add_term(Monomial::variable(n, i, 2), AffineExpr(-eps));
  return out;
}

sdp::SdpProblem verify_sdp(const VerifyProblem& problem) { return verify_model(problem).prog.build(); }

VerifyResult verify(const VerifyProblem& problem, const sdp::SdpSettings& settings) {
  VerifyModel m = verify_model(problem);
  VerifyResult out;
  if (problem.order == 2) out.symmetry = symmetry_report(problem.v, problem.h1);
  const sdp::SdpProblem sdp_problem = m.prog.build();
  double tol = 0.0;
  const SosSolution sol = solve_with_retry(m.prog, settings, tol);
  out.stats = stats_of(sdp_problem, sol, tol);
  if (sol.sdp.status == sdp::SdpStatus::Optimal) {
    out.psi = psi_value(m.psi, sol);
    out.psi_lambda_min = lambda_min(out.psi);
    out.certificates = collect(m.prog, m.fragments, sol);
  }
  out.message = describe_failure(out.stats, out.certificates, out.psi_lambda_min);
  if (out.message.empty() && out.symmetry && out.symmetry->backward_error > problem.symmetry_tolerance) {
    out.message = "symmetry condition violated beyond tolerance";
  }
  out.feasible = out.message.empty();
  return out;
}

PolyVector identity_coupling(int variable_count) {
  std::vector<Polynomial> out;
  for (int i = 0; i < variable_count; ++i) out.push_back(Polynomial::variable(variable_count, i));
  return PolyVector(std::move(out));
}

namespace {

struct RoundOutcome {
  RoundReport report;
  Polynomial v;
  PolyVector coupling;
  Eigen::MatrixXd psi;
  std::vector<NamedCertificate> certificates;
  sdp::SdpProblem problem;
};

struct SynthesisModel {
  SosProgram prog;
  PsiHandle psi;
  std::vector<Named> fragments;
  DecisionPolynomial v;
  DecisionPolyVector coupling;
};

void validate(const SynthesisConfig& c) {
  if (c.order != 1 && c.order != 2) throw DomainError("order must be 1 or 2");
  if (c.variable_count != c.qform.variable_count()) throw DimensionError("q and the variable count disagree");
  if (c.deg_v < 2) throw DegreeError("deg V must be at least 2");
  if (c.deg_h < 1) throw DegreeError("coupling degree must be at least 1");
  if (c.max_rounds < 1) throw DomainError("max_rounds must be positive");
  if (!(c.coefficient_bound > 0.0)) throw DomainError("coefficient bound must be positive");
  if (c.coupling_seed && (static_cast<int>(c.coupling_seed->size()) != c.variable_count ||
                          c.coupling_seed->variable_count() != c.variable_count)) {
    throw DimensionError("coupling seed must map R^n to R^n");
  }
}

// unknown_v: V is the decision polynomial, the coupling is fixed; otherwise
// the reverse.
SynthesisModel synthesis_model(const SynthesisConfig& c, bool unknown_v, const Polynomial& v_fixed,
                               const PolyVector& coupling_fixed) {
  const int n = c.variable_count;
  SynthesisModel m;
  if (unknown_v) {
    m.v = unknown_polynomial(m.prog, monomials_between(n, 2, c.deg_v, c.order == 2), c.coefficient_bound);
    m.coupling = to_decision(coupling_fixed);
  } else {
    m.v = to_decision(v_fixed);
    std::vector<DecisionPolynomial> entries;
    const auto monos = monomials_between(n, 1, c.deg_h, false);
    for (int i = 0; i < n; ++i) entries.push_back(unknown_polynomial(m.prog, monos, c.coefficient_bound));
    m.coupling = DecisionPolyVector(std::move(entries));
  }
  m.psi = add_psi(m.prog, c.qform, std::nullopt);
  const DecisionPolynomial dec = c.order == 1 ? build_first_order_decrease(m.v, m.coupling, c.qform, m.psi.entries)
                                              : build_second_order_decrease(m.v, m.coupling, c.qform, m.psi.entries);
  m.fragments.push_back({"lower_bound", m.prog.add_sos(build_psd_lower_bound(c.qform, m.psi.entries))});
  m.fragments.push_back({"decrease", m.prog.add_sos(difference_coordinates(dec, n))});
  m.fragments.push_back({"positivity", m.prog.add_sos(positivity_target(m.v, c.positivity_eps))});
  return m;
}

RoundOutcome run_round(const SynthesisConfig& c, int round, bool unknown_v, const Polynomial& v_fixed,
                       const PolyVector& coupling_fixed, const sdp::SdpSettings& settings) {
  SynthesisModel m = synthesis_model(c, unknown_v, v_fixed, coupling_fixed);
  RoundOutcome out;
  out.report.round = round;
  out.report.unknown = unknown_v ? "lyapunov" : "coupling";
  out.problem = m.prog.build();
  double tol = 0.0;
  const SosSolution sol = solve_with_retry(m.prog, settings, tol);
  out.report.stats = stats_of(out.problem, sol, tol);
  if (sol.sdp.status == sdp::SdpStatus::Optimal) {
    out.v = sol.value(m.v);
    out.coupling = sol.value(m.coupling);
    out.psi = psi_value(m.psi, sol);
    out.report.psi_lambda_min = lambda_min(out.psi);
    out.certificates = collect(m.prog, m.fragments, sol);
  }
  out.report.message = describe_failure(out.report.stats, out.certificates, out.report.psi_lambda_min);
  out.report.certified = out.report.message.empty();
  return out;
}

}  // namespace

sdp::SdpProblem synthesis_sdp(const SynthesisConfig& config) {
  validate(config);
  const PolyVector seed = config.coupling_seed ? *config.coupling_seed : identity_coupling(config.variable_count);
  return synthesis_model(config, true, Polynomial(config.variable_count), seed).prog.build();
}

SynthesisResult synthesize(const SynthesisConfig& config, const sdp::SdpSettings& settings) {
  validate(config);
  const int n = config.variable_count;
  PolyVector coupling = config.coupling_seed ? *config.coupling_seed : identity_coupling(n);
  Polynomial v = lyapunov_seed(n, config.deg_v);
  const int rounds = config.mode == SynthesisMode::FixedH ? 1 : config.max_rounds;

  SynthesisResult result;
  bool all_infeasible = true;
  for (int r = 1; r <= rounds; ++r) {
    const bool unknown_v = r % 2 == 1;
    RoundOutcome o = run_round(config, r, unknown_v, v, coupling, settings);
    result.rounds.push_back(o.report);
    result.status = o.report.stats.status;
    if (o.report.stats.status != sdp::SdpStatus::Infeasible) all_infeasible = false;
    if (o.report.stats.status == sdp::SdpStatus::Optimal) {
      if (unknown_v) {
        v = o.v;
      } else {
        coupling = o.coupling;
      }
    }
    if (o.report.certified) {
      result.feasible = true;
      result.psi = o.psi;
      result.certificates = std::move(o.certificates);
      break;
    }
  }
  if (!result.feasible && all_infeasible) result.status = sdp::SdpStatus::Infeasible;

  result.v = v;
  if (config.order == 1) {
    result.h = coupling;
  } else {
    result.h1 = gradient(v);
    result.h2 = coupling;
    if (result.feasible) result.symmetry = symmetry_report(result.v, result.h1);
  }
  if (!result.feasible) {
    result.message = result.rounds.back().message;
    result.v = Polynomial(n);
    result.h = result.h1 = result.h2 = PolyVector();
  }
  return result;
}

void to_json(json& j, const QForm& q) {
  json entries = json::array();
  for (const auto& m : q.qhat()) entries.push_back(m.exponents());
  j = {{"qhat", entries}, {"exponent_2m", q.exponent_2m()}};
}

void from_json(const json& j, QForm& q) {
  if (!j.contains("qhat")) throw FormatError("missing \"qhat\"");
  std::vector<Monomial> entries;
  for (const auto& e : j.at("qhat")) entries.push_back(e.get<Monomial>());
  q = QForm(std::move(entries), j.value("exponent_2m", 0));
}

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != n) {
      throw FormatError("matrix must be square");
    }
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace

void to_json(json& j, const SymmetryReport& r) {
  j = {{"forward_residual", r.forward_residual},
       {"backward_error", r.backward_error},
       {"equation_count", r.equation_count}};
}

void to_json(json& j, const SolveStats& s) {
  j = {{"status", sdp::to_string(s.status)},
       {"iterations", s.iterations},
       {"tolerance", s.tolerance},
       {"primal_residual", s.residuals.primal},
       {"dual_residual", s.residuals.dual},
       {"gap", s.residuals.gap},
       {"objective", s.objective},
       {"blocks", s.block_count},
       {"largest_block", s.largest_block},
       {"equalities", s.equality_count}};
}

void to_json(json& j, const NamedCertificate& c) {
  j = {{"name", c.name},
       {"valid", c.check.valid},
       {"residual", c.check.residual},
       {"tolerance", c.check.tolerance},
       {"lambda_min", c.check.lambda_min},
       {"certificate", c.certificate}};
}

void to_json(json& j, const VerifyResult& r) {
  j = {{"feasible", r.feasible},
       {"stats", r.stats},
       {"psi", matrix_json(r.psi)},
       {"psi_lambda_min", r.psi_lambda_min},
       {"certificates", r.certificates},
       {"message", r.message}};
  if (r.symmetry) j["symmetry"] = *r.symmetry;
}

void to_json(json& j, const RoundReport& r) {
  j = {{"round", r.round},
       {"unknown", r.unknown},
       {"stats", r.stats},
       {"certified", r.certified},
       {"psi_lambda_min", r.psi_lambda_min},
       {"message", r.message}};
}

void to_json(json& j, const SynthesisResult& r) {
  j = {{"feasible", r.feasible},
       {"status", sdp::to_string(r.status)},
       {"psi", matrix_json(r.psi)},
       {"certificates", r.certificates},
       {"rounds", r.rounds},
       {"message", r.message}};
  if (r.feasible) {
    j["V"] = r.v;
    if (!r.h.empty()) j["h"] = r.h;
    if (!r.h1.empty()) j["h1"] = r.h1;
    if (!r.h2.empty()) j["h2"] = r.h2;
  }
  if (r.symmetry) j["symmetry"] = *r.symmetry;
}

VerifyProblem verify_problem_from_json(const json& j) {
  VerifyProblem p;
  try {
    p.order = j.at("order").get<int>();
    p.v = j.at("V").get<Polynomial>();
    if (p.order == 1) {
      p.h = j.at("h").get<PolyVector>();
    } else {
      p.h1 = j.at("h1").get<PolyVector>();
      p.h2 = j.at("h2").get<PolyVector>();
    }
    p.qform = j.get<QForm>();
    if (j.contains("psi")) p.psi = matrix_from_json(j.at("psi"));
    p.symmetry_tolerance = j.value("symmetry_tolerance", p.symmetry_tolerance);
  } catch (const json::exception& e) {
    throw FormatError(std::string("problem JSON: ") + e.what());
  }
  if (j.contains("variables") && j.at("variables").get<int>() != p.qform.variable_count()) {
    throw DimensionError("\"variables\" disagrees with q");
  }
  return p;
}

SynthesisConfig synthesis_config_from_json(const json& j) {
  SynthesisConfig c;
  try {
    c.order = j.at("order").get<int>();
    c.qform = j.get<QForm>();
    c.variable_count = j.value("variables", c.qform.variable_count());
    if (j.contains("synthesis")) {
      const json& s = j.at("synthesis");
      c.deg_v = s.value("deg_v", c.deg_v);
      c.deg_h = s.value("deg_h", c.deg_h);
      c.max_rounds = s.value("max_rounds", c.max_rounds);
      c.coefficient_bound = s.value("coefficient_bound", c.coefficient_bound);
      const std::string mode = s.value("mode", std::string("alternate"));
      if (mode == "alternate") {
        c.mode = SynthesisMode::Alternate;
      } else if (mode == "fixed_h") {
        c.mode = SynthesisMode::FixedH;
      } else {
        throw FormatError("unknown synthesis mode '" + mode + "'");
      }
      if (s.contains("coupling_seed")) c.coupling_seed = s.at("coupling_seed").get<PolyVector>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("synthesis JSON: ") + e.what());
  }
  return c;
}

}  // namespace sosmas
