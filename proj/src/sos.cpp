#include "sosmas/sos.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sosmas/errors.hpp"

namespace sosmas {

namespace {
constexpr double kNegligibleWeight = 1e-14;
}

AffineExpr AffineExpr::variable(int id, double coefficient) {
  if (id < 0) throw IndexError("negative decision variable id");
  AffineExpr e;
  if (coefficient != 0.0) e.linear_[id] = coefficient;
  return e;
}

double AffineExpr::evaluate(const std::vector<double>& values) const {
  double sum = constant_;
  for (const auto& [id, c] : linear_) {
    if (static_cast<std::size_t>(id) >= values.size()) throw IndexError("decision variable without value");
    sum += c * values[static_cast<std::size_t>(id)];
  }
  return sum;
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& other) {
  constant_ += other.constant_;
  for (const auto& [id, c] : other.linear_) linear_[id] += c;
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& other) {
  constant_ -= other.constant_;
  for (const auto& [id, c] : other.linear_) linear_[id] -= c;
  return *this;
}

AffineExpr& AffineExpr::operator*=(double s) {
  constant_ *= s;
  for (auto& [id, c] : linear_) c *= s;
  return *this;
}

AffineExpr operator*(const AffineExpr& a, const AffineExpr& b) {
  if (!a.is_constant() && !b.is_constant()) {
    throw BilinearityError("product of two decision-dependent expressions");
  }
  if (a.is_constant()) return b * a.constant();
  return a * b.constant();
}

void AffineExpr::canonicalize() {
  for (auto it = linear_.begin(); it != linear_.end();) {
    it = std::abs(it->second) < kNegligibleWeight ? linear_.erase(it) : std::next(it);
  }
  if (std::abs(constant_) < kNegligibleWeight) constant_ = 0.0;
}

bool AffineExpr::negligible() const {
  if (std::abs(constant_) >= kNegligibleWeight) return false;
  for (const auto& [id, c] : linear_) {
    if (std::abs(c) >= kNegligibleWeight) return false;
  }
  return true;
}

DecisionPolynomial to_decision(const Polynomial& p) { return convert<AffineExpr>(p); }
DecisionPolyVector to_decision(const PolyVector& v) { return convert<AffineExpr>(v); }

bool has_decisions(const DecisionPolynomial& p) {
  for (const auto& [m, c] : p.terms()) {
    if (!c.is_constant()) return true;
  }
  return false;
}

bool has_decisions(const DecisionPolyVector& v) {
  return std::any_of(v.begin(), v.end(), [](const DecisionPolynomial& p) { return has_decisions(p); });
}

std::vector<Monomial> monomial_basis(int variable_count, int half_degree, Parity parity) {
  if (variable_count <= 0) throw DimensionError("basis needs at least one variable");
  if (half_degree < 0) throw DomainError("negative basis degree");
  std::vector<Monomial> out;
  std::vector<int> e(static_cast<std::size_t>(variable_count), 0);
  // All exponent tuples of total degree exactly d, emitted in descending
  // lexicographic order (= graded-lex within a degree).
  auto emit = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == variable_count - 1) {
      e[static_cast<std::size_t>(pos)] = remaining;
      out.emplace_back(e);
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      e[static_cast<std::size_t>(pos)] = k;
      self(self, pos + 1, remaining - k);
    }
    e[static_cast<std::size_t>(pos)] = 0;
  };
  for (int d = 0; d <= half_degree; ++d) {
    if (parity == Parity::Even && d % 2 != 0) continue;
    if (parity == Parity::Odd && d % 2 == 0) continue;
    emit(emit, 0, d);
  }
  return out;
}

std::vector<Monomial> support(const DecisionPolynomial& p) {
  std::vector<Monomial> out;
  for (const auto& [m, c] : p.terms()) out.push_back(m);
  return out;
}

namespace {

// Phase-1 simplex: is there lambda >= 0 with sum lambda = 1 and
// sum lambda_k points_k = target?
bool in_convex_hull(const std::vector<std::vector<double>>& points, const std::vector<double>& target) {
  const int k = static_cast<int>(points.size());
  const int n = static_cast<int>(target.size());
  const int rows = n + 1;
  const int cols = k + rows;  // structural + artificial
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(rows + 1, cols + 1);
  for (int r = 0; r < rows; ++r) {
    double rhs = r < n ? target[static_cast<std::size_t>(r)] : 1.0;
    const double sign = rhs < 0.0 ? -1.0 : 1.0;
    for (int j = 0; j < k; ++j) {
      t(r, j) = sign * (r < n ? points[static_cast<std::size_t>(j)][static_cast<std::size_t>(r)] : 1.0);
    }
    t(r, k + r) = 1.0;
    t(r, cols) = sign * rhs;
  }
  // Objective row: minimize the artificial sum, expressed in nonbasic terms.
  for (int r = 0; r < rows; ++r) t.row(rows) -= t.row(r);
  for (int r = 0; r < rows; ++r) t(rows, k + r) = 0.0;
  std::vector<int> basis(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) basis[static_cast<std::size_t>(r)] = k + r;

  constexpr double eps = 1e-10;
  for (int iter = 0; iter < 10000; ++iter) {
    int enter = -1;
    for (int j = 0; j < cols; ++j) {
      if (t(rows, j) < -eps) {
        enter = j;  // Bland: lowest index
        break;
      }
    }
    if (enter < 0) break;
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r) {
      if (t(r, enter) > eps) {
        const double ratio = t(r, cols) / t(r, enter);
        const bool tie = leave >= 0 && std::abs(ratio - best) <= eps &&
                         basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)];
        if (leave < 0 || ratio < best - eps || tie) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave < 0) break;
    t.row(leave) /= t(leave, enter);
    for (int r = 0; r <= rows; ++r) {
      if (r != leave && t(r, enter) != 0.0) t.row(r) -= t(r, enter) * t.row(leave);
    }
    basis[static_cast<std::size_t>(leave)] = enter;
  }
  return -t(rows, cols) <= 1e-8;
}

}  // namespace

std::vector<Monomial> newton_prune(const std::vector<Monomial>& basis, const std::vector<Monomial>& supp) {
  if (supp.empty()) return {};
  const int n = supp.front().variable_count();
  std::vector<int> lo(static_cast<std::size_t>(n), std::numeric_limits<int>::max());
  std::vector<int> hi(static_cast<std::size_t>(n), 0);
  int dlo = std::numeric_limits<int>::max();
  int dhi = 0;
  std::set<std::vector<int>> members;
  std::vector<std::vector<double>> points;
  for (const auto& m : supp) {
    for (int i = 0; i < n; ++i) {
      lo[static_cast<std::size_t>(i)] = std::min(lo[static_cast<std::size_t>(i)], m[i]);
      hi[static_cast<std::size_t>(i)] = std::max(hi[static_cast<std::size_t>(i)], m[i]);
    }
    dlo = std::min(dlo, m.degree());
    dhi = std::max(dhi, m.degree());
    members.insert(m.exponents());
    points.emplace_back(m.exponents().begin(), m.exponents().end());
  }
  std::vector<Monomial> out;
  for (const auto& b : basis) {
    if (b.variable_count() != n) throw DimensionError("basis and support use different variable sets");
    std::vector<int> twice(b.exponents());
    for (int& e : twice) e *= 2;
    bool inside = 2 * b.degree() >= dlo && 2 * b.degree() <= dhi;
    for (int i = 0; inside && i < n; ++i) {
      inside = twice[static_cast<std::size_t>(i)] >= lo[static_cast<std::size_t>(i)] &&
               twice[static_cast<std::size_t>(i)] <= hi[static_cast<std::size_t>(i)];
    }
    if (inside && !members.contains(twice)) {
      inside = in_convex_hull(points, std::vector<double>(twice.begin(), twice.end()));
    }
    if (inside) out.push_back(b);
  }
  return out;
}

std::vector<Monomial> default_basis(const DecisionPolynomial& p) {
  if (p.is_zero()) return {};
  const int half = (p.degree() + 1) / 2;
  return newton_prune(monomial_basis(p.variable_count(), half), support(p));
}

Polynomial strictness_margin(int variable_count, int k, double eps) {
  Polynomial out(variable_count);
  for (int i = 0; i < variable_count; ++i) out.add_term(Monomial::variable(variable_count, i, 2 * k), eps);
  return out;
}

SosFragment compile_sos(const DecisionPolynomial& target, std::vector<Monomial> basis) {
  SosFragment f;
  f.target = target;
  if (target.is_zero()) return f;
  if (basis.empty()) {
    throw BasisCoverageError("empty basis cannot represent " +
                             to_string(target.terms().begin()->first));
  }
  std::sort(basis.begin(), basis.end(), GradedLex{});
  basis.erase(std::unique(basis.begin(), basis.end()), basis.end());
  std::map<Monomial, std::vector<std::pair<int, int>>, GradedLex> products;
  const int size = static_cast<int>(basis.size());
  for (int i = 0; i < size; ++i) {
    for (int j = i; j < size; ++j) {
      products[basis[static_cast<std::size_t>(i)] * basis[static_cast<std::size_t>(j)]].emplace_back(i, j);
    }
  }
  for (const auto& [m, c] : target.terms()) {
    if (!products.contains(m)) {
      throw BasisCoverageError("monomial " + to_string(m) + " is not covered by the Gram basis");
    }
  }
  for (auto& [m, pairs] : products) {
    f.rows.push_back({m, std::move(pairs), target.coefficient(m)});
  }
  f.basis = std::move(basis);
  return f;
}

SosFragment compile_sos(const DecisionPolynomial& target) { return compile_sos(target, default_basis(target)); }

std::vector<AffineExpr> compile_zero(const DecisionPolynomial& p) {
  std::vector<AffineExpr> out;
  for (const auto& [m, c] : p.terms()) out.push_back(c);
  return out;
}

Polynomial gram_polynomial(const std::vector<Monomial>& basis, const Eigen::MatrixXd& gram) {
  if (basis.empty()) throw DimensionError("empty Gram basis");
  const int size = static_cast<int>(basis.size());
  if (gram.rows() != size || gram.cols() != size) throw DimensionError("Gram matrix does not match basis");
  Polynomial out(basis.front().variable_count());
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      out.add_term(basis[static_cast<std::size_t>(i)] * basis[static_cast<std::size_t>(j)], gram(i, j));
    }
  }
  return out;
}

CertificateCheck check_certificate(const std::vector<Monomial>& basis, const Eigen::MatrixXd& gram,
                                   const Polynomial& target) {
  CertificateCheck c;
  c.tolerance = 1e-6 * (1.0 + target.max_abs_coefficient());
  if (basis.empty()) {
    c.residual = target.max_abs_coefficient();
    c.valid = c.residual <= c.tolerance;
    return c;
  }
  const Eigen::MatrixXd sym = 0.5 * (gram + gram.transpose());
  c.residual = max_coefficient_difference(target, gram_polynomial(basis, sym));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  c.lambda_min = es.eigenvalues()(0);
  c.valid = c.residual <= c.tolerance && c.lambda_min >= -1e-8;
  return c;
}

GramCertificate extract_certificate(const SosFragment& fragment, const Eigen::MatrixXd& gram,
                                    const Polynomial& target) {
  GramCertificate cert;
  cert.basis = fragment.basis;
  cert.gram = fragment.vacuous() ? Eigen::MatrixXd(0, 0) : Eigen::MatrixXd(0.5 * (gram + gram.transpose()));
  cert.target = target;
  const CertificateCheck check = check_certificate(cert.basis, cert.gram, target);
  cert.residual = check.residual;
  cert.lambda_min = check.lambda_min;
  if (!check.valid) {
    throw CertificateRejected("Gram certificate rejected: residual " + std::to_string(check.residual) +
                                  ", lambda_min " + std::to_string(check.lambda_min),
                              check.residual);
  }
  return cert;
}

void to_json(nlohmann::json& j, const GramCertificate& c) {
  nlohmann::json basis = nlohmann::json::array();
  for (const auto& m : c.basis) basis.push_back(m.exponents());
  nlohmann::json gram = nlohmann::json::array();
  for (Eigen::Index r = 0; r < c.gram.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < c.gram.cols(); ++k) row.push_back(c.gram(r, k));
    gram.push_back(row);
  }
  j = {{"basis", basis}, {"gram", gram}, {"target", c.target}, {"residual", c.residual}, {"lambda_min", c.lambda_min}};
}

void from_json(const nlohmann::json& j, GramCertificate& c) {
  c.basis.clear();
  for (const auto& e : j.at("basis")) c.basis.push_back(e.get<Monomial>());
  const auto& g = j.at("gram");
  const int size = static_cast<int>(g.size());
  if (size != static_cast<int>(c.basis.size())) throw FormatError("certificate gram does not match basis");
  c.gram.resize(size, size);
  for (int r = 0; r < size; ++r) {
    const auto row = g.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
    if (static_cast<int>(row.size()) != size) throw FormatError("certificate gram must be square");
    for (int k = 0; k < size; ++k) c.gram(r, k) = row[static_cast<std::size_t>(k)];
  }
  c.target = j.at("target").get<Polynomial>();
  c.residual = j.value("residual", 0.0);
  c.lambda_min = j.value("lambda_min", 0.0);
}

// ---------------------------------------------------------------------------

int MatrixVar::id(int r, int c) const {
  if (r < 0 || c < 0 || r >= size || c >= size) throw IndexError("matrix variable entry out of range");
  if (r > c) std::swap(r, c);
  // Upper triangle, row-major.
  const int offset = r * size - r * (r - 1) / 2;
  return ids[static_cast<std::size_t>(offset + (c - r))];
}

Polynomial SosSolution::value(const DecisionPolynomial& p) const {
  Polynomial out(p.variable_count());
  for (const auto& [m, c] : p.terms()) out.add_term(m, c.evaluate(values));
  return out;
}

PolyVector SosSolution::value(const DecisionPolyVector& v) const {
  std::vector<Polynomial> out;
  for (const auto& e : v) out.push_back(value(e));
  return PolyVector(std::move(out));
}

Eigen::MatrixXd SosSolution::value(const MatrixVar& m) const {
  Eigen::MatrixXd out(m.size, m.size);
  for (int r = 0; r < m.size; ++r) {
    for (int c = r; c < m.size; ++c) out(r, c) = out(c, r) = values[static_cast<std::size_t>(m.id(r, c))];
  }
  return out;
}

int SosProgram::new_free() {
  vars_.push_back({-1, free_count_++, 0});
  return static_cast<int>(vars_.size()) - 1;
}

std::vector<int> SosProgram::new_free(int count) {
  std::vector<int> ids;
  for (int k = 0; k < count; ++k) ids.push_back(new_free());
  return ids;
}

int SosProgram::new_block(int size) {
  if (size <= 0) throw DimensionError("PSD block size must be positive");
  block_sizes_.push_back(size);
  return static_cast<int>(block_sizes_.size()) - 1;
}

MatrixVar SosProgram::new_psd_matrix(int size) {
  MatrixVar m;
  m.size = size;
  m.block = new_block(size);
  for (int r = 0; r < size; ++r) {
    for (int c = r; c < size; ++c) {
      vars_.push_back({m.block, r, c});
      m.ids.push_back(static_cast<int>(vars_.size()) - 1);
    }
  }
  return m;
}

MatrixVar SosProgram::new_symmetric_matrix(int size) {
  if (size <= 0) throw DimensionError("matrix size must be positive");
  MatrixVar m;
  m.size = size;
  for (int r = 0; r < size; ++r) {
    for (int c = r; c < size; ++c) m.ids.push_back(new_free());
  }
  return m;
}

int SosProgram::add_sos(const DecisionPolynomial& target, std::optional<std::vector<Monomial>> basis) {
  if (basis) return add_fragment(compile_sos(target, std::move(*basis)));
  // With the pruned basis, a monomial no Gram product reaches must have a zero
  // coefficient; a decision-dependent one becomes an equality.
  std::vector<Monomial> pruned = default_basis(target);
  std::set<Monomial, GradedLex> reachable;
  for (std::size_t i = 0; i < pruned.size(); ++i) {
    for (std::size_t j = i; j < pruned.size(); ++j) reachable.insert(pruned[i] * pruned[j]);
  }
  DecisionPolynomial covered(target.variable_count());
  std::vector<AffineExpr> forced;
  for (const auto& [m, c] : target.terms()) {
    if (reachable.contains(m) || c.is_constant()) {
      covered.add_term(m, c);
    } else {
      forced.push_back(c);
    }
  }
  if (forced.empty()) return add_fragment(compile_sos(target, std::move(pruned)));
  SosFragment f = compile_sos(covered, std::move(pruned));
  f.target = target;
  for (const auto& c : forced) add_equality(c);
  return add_fragment(std::move(f));
}

int SosProgram::add_fragment(SosFragment fragment) {
  for (const auto& row : fragment.rows) {
    for (const auto& [id, c] : row.coefficient.linear()) {
      if (id >= variable_count()) throw IndexError("fragment references an unknown decision variable");
    }
  }
  Registered reg;
  if (!fragment.vacuous()) {
    reg.block = new_block(static_cast<int>(fragment.basis.size()));
    for (const auto& row : fragment.rows) {
      Row r;
      for (auto [i, j] : row.pairs) r.terms.push_back({reg.block, i, j, 1.0});
      r.expr = row.coefficient * -1.0;
      rows_.push_back(std::move(r));
    }
  }
  reg.fragment = std::move(fragment);
  fragments_.push_back(std::move(reg));
  return static_cast<int>(fragments_.size()) - 1;
}

void SosProgram::add_zero(const DecisionPolynomial& p) {
  for (const auto& e : compile_zero(p)) add_equality(e);
}

void SosProgram::add_equality(const AffineExpr& e) {
  for (const auto& [id, c] : e.linear()) {
    if (id >= variable_count()) throw IndexError("equality references an unknown decision variable");
  }
  rows_.push_back({{}, e});
}

void SosProgram::add_abs_bound(const AffineExpr& v, double bound) {
  if (!(bound > 0.0)) throw DomainError("bound must be positive");
  const MatrixVar s = new_psd_matrix(2);
  add_equality(s.entry(0, 0) - AffineExpr(bound));
  add_equality(s.entry(1, 1) - AffineExpr(bound));
  add_equality(s.entry(0, 1) - v);
}

void SosProgram::append_expr(sdp::LinearFunctional& f, const AffineExpr& e, double scale) const {
  for (const auto& [id, c] : e.linear()) {
    const Var& v = vars_[static_cast<std::size_t>(id)];
    const double w = scale * c;
    if (v.block < 0) {
      f.free_terms.push_back({v.index, w});
    } else {
      // Coefficient w on the scalar X(r, c).
      f.block_terms.push_back({v.block, v.index, v.col, v.index == v.col ? w : 0.5 * w});
    }
  }
}

sdp::SdpProblem SosProgram::build() const {
  sdp::SdpProblem p;
  p.block_sizes = block_sizes_;
  p.free_count = free_count_;
  for (const auto& row : rows_) {
    sdp::Equality eq;
    eq.lhs.block_terms = row.terms;
    append_expr(eq.lhs, row.expr, 1.0);
    eq.rhs = -row.expr.constant();
    p.equalities.push_back(std::move(eq));
  }
  append_expr(p.objective, objective_, 1.0);
  return p;
}

SosSolution SosProgram::solve(const sdp::SdpSettings& settings) const {
  SosSolution out;
  const sdp::SdpProblem problem = build();
  out.sdp = sdp::solve(problem, settings);
  out.values.resize(vars_.size());
  for (std::size_t k = 0; k < vars_.size(); ++k) {
    const Var& v = vars_[k];
    out.values[k] = v.block < 0 ? out.sdp.free_values(v.index)
                                : out.sdp.block_values[static_cast<std::size_t>(v.block)](v.index, v.col);
  }
  return out;
}

namespace {

Eigen::MatrixXd block_value(int block, const SosSolution& solution) {
  if (block < 0) return Eigen::MatrixXd(0, 0);
  const auto& x = solution.sdp.block_values.at(static_cast<std::size_t>(block));
  return 0.5 * (x + x.transpose());
}

}  // namespace

GramCertificate SosProgram::certificate(int index, const SosSolution& solution) const {
  const Registered& reg = fragments_.at(static_cast<std::size_t>(index));
  return extract_certificate(reg.fragment, block_value(reg.block, solution), solution.value(reg.fragment.target));
}

GramCertificate SosProgram::raw_certificate(int index, const SosSolution& solution) const {
  const Registered& reg = fragments_.at(static_cast<std::size_t>(index));
  GramCertificate cert;
  cert.basis = reg.fragment.basis;
  cert.target = solution.value(reg.fragment.target);
  cert.gram = block_value(reg.block, solution);
  const CertificateCheck check = check_certificate(cert.basis, cert.gram, cert.target);
  cert.residual = check.residual;
  cert.lambda_min = check.lambda_min;
  return cert;
}

}  // namespace sosmas
