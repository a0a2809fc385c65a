#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sosmas/poly.hpp"
#include "sosmas/sdp.hpp"

namespace sosmas {

/// constant + sum_k linear[k] * v_k over scalar decision variables v_k.
class AffineExpr {
 public:
  AffineExpr() = default;
  AffineExpr(double constant) : constant_(constant) {}  // NOLINT(google-explicit-constructor)

  static AffineExpr variable(int id, double coefficient = 1.0);

  double constant() const { return constant_; }
  const std::map<int, double>& linear() const { return linear_; }
  bool is_constant() const { return linear_.empty(); }

  double evaluate(const std::vector<double>& values) const;

  AffineExpr& operator+=(const AffineExpr& other);
  AffineExpr& operator-=(const AffineExpr& other);
  AffineExpr& operator*=(double s);

  friend AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
  friend AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
  friend AffineExpr operator*(AffineExpr a, double s) { return a *= s; }
  friend AffineExpr operator*(double s, AffineExpr a) { return a *= s; }
  /// Throws BilinearityError unless one side is constant.
  friend AffineExpr operator*(const AffineExpr& a, const AffineExpr& b);

  friend bool operator==(const AffineExpr&, const AffineExpr&) = default;

  /// Drops negligible linear weights and a negligible constant.
  void canonicalize();
  bool negligible() const;

 private:
  double constant_ = 0.0;
  std::map<int, double> linear_;
};

template <>
struct CoefficientTraits<AffineExpr> {
  static AffineExpr zero() { return AffineExpr(); }
  static bool negligible(const AffineExpr& c) { return c.negligible(); }
  static void canonicalize(AffineExpr& c) { c.canonicalize(); }
};

using DecisionPolynomial = BasicPolynomial<AffineExpr>;
using DecisionPolyVector = BasicPolyVector<AffineExpr>;

DecisionPolynomial to_decision(const Polynomial& p);
DecisionPolyVector to_decision(const PolyVector& v);
/// True iff some coefficient references a decision variable.
bool has_decisions(const DecisionPolynomial& p);
bool has_decisions(const DecisionPolyVector& v);

enum class Parity { Any, Even, Odd };

/// Monomials of total degree <= half_degree with the requested parity,
/// graded-lex sorted.
std::vector<Monomial> monomial_basis(int variable_count, int half_degree, Parity parity = Parity::Any);

/// Support of a decision polynomial (every monomial with a non-zero
/// coefficient expression).
std::vector<Monomial> support(const DecisionPolynomial& p);

/// Keeps the basis monomials b with 2b inside the convex hull of `support`.
std::vector<Monomial> newton_prune(const std::vector<Monomial>& basis, const std::vector<Monomial>& support);

/// Full basis of degree ceil(deg/2), Newton-pruned against p's support.
std::vector<Monomial> default_basis(const DecisionPolynomial& p);

/// eps * sum_i x_i^(2k)
Polynomial strictness_margin(int variable_count, int k, double eps = 1e-6);

/// Coefficient matching for target = b^T G b with G PSD.
struct SosFragment {
  struct Row {
    Monomial monomial;
    /// Gram pairs (i <= j) whose product is `monomial`
    std::vector<std::pair<int, int>> pairs;
    AffineExpr coefficient;
  };
  std::vector<Monomial> basis;
  DecisionPolynomial target;
  std::vector<Row> rows;

  /// The target was the zero polynomial: nothing to certify.
  bool vacuous() const { return basis.empty(); }
};

/// Throws BasisCoverageError if a target monomial is not a product of two
/// basis elements.
SosFragment compile_sos(const DecisionPolynomial& target, std::vector<Monomial> basis);
SosFragment compile_sos(const DecisionPolynomial& target);

/// One expression per monomial, each required to vanish.
std::vector<AffineExpr> compile_zero(const DecisionPolynomial& p);

struct GramCertificate {
  std::vector<Monomial> basis;
  Eigen::MatrixXd gram;
  Polynomial target;
  double residual = 0.0;
  double lambda_min = 0.0;
};

/// Gram matrix reconstruction check, independent of any solver.
struct CertificateCheck {
  double residual = 0.0;     // max |coef(target - b^T G b)|
  double tolerance = 0.0;    // 1e-6 * (1 + max |coef(target)|)
  double lambda_min = 0.0;
  bool valid = false;
};
CertificateCheck check_certificate(const std::vector<Monomial>& basis, const Eigen::MatrixXd& gram,
                                   const Polynomial& target);
inline CertificateCheck check_certificate(const GramCertificate& c) {
  return check_certificate(c.basis, c.gram, c.target);
}

/// b^T G b as a polynomial.
Polynomial gram_polynomial(const std::vector<Monomial>& basis, const Eigen::MatrixXd& gram);

/// Builds and checks a certificate; throws CertificateRejected on failure.
GramCertificate extract_certificate(const SosFragment& fragment, const Eigen::MatrixXd& gram,
                                    const Polynomial& target);

void to_json(nlohmann::json& j, const GramCertificate& c);
void from_json(const nlohmann::json& j, GramCertificate& c);

/// Symmetric matrix of decision variables.
struct MatrixVar {
  int size = 0;
  int block = -1;  // PSD block index, -1 for a free symmetric matrix
  std::vector<int> ids;  // upper triangle, row-major

  int id(int r, int c) const;
  AffineExpr entry(int r, int c) const { return AffineExpr::variable(id(r, c)); }
};

struct SosSolution {
  sdp::SdpSolution sdp;
  std::vector<double> values;

  bool optimal() const { return sdp.status == sdp::SdpStatus::Optimal; }
  double value(const AffineExpr& e) const { return e.evaluate(values); }
  Polynomial value(const DecisionPolynomial& p) const;
  PolyVector value(const DecisionPolyVector& v) const;
  Eigen::MatrixXd value(const MatrixVar& m) const;
};

/// Registry of decision variables, SOS fragments and linear constraints,
/// assembled into one SDP.
class SosProgram {
 public:
  int new_free();
  std::vector<int> new_free(int count);
  MatrixVar new_psd_matrix(int size);
  MatrixVar new_symmetric_matrix(int size);

  /// Adds target in SOS; returns the fragment index (vacuous targets add
  /// nothing but still get an index). Without an explicit basis, decision
  /// coefficients of monomials outside the pruned basis products are set to 0.
  int add_sos(const DecisionPolynomial& target, std::optional<std::vector<Monomial>> basis = std::nullopt);
  int add_fragment(SosFragment fragment);
  void add_zero(const DecisionPolynomial& p);
  /// e == 0
  void add_equality(const AffineExpr& e);
  /// |v| <= bound through a 2x2 PSD block [[bound, v], [v, bound]].
  void add_abs_bound(const AffineExpr& v, double bound);
  void set_objective(const AffineExpr& maximize) { objective_ = maximize; }

  int variable_count() const { return static_cast<int>(vars_.size()); }
  const SosFragment& fragment(int index) const { return fragments_.at(static_cast<std::size_t>(index)).fragment; }
  int fragment_count() const { return static_cast<int>(fragments_.size()); }

  sdp::SdpProblem build() const;
  SosSolution solve(const sdp::SdpSettings& settings = {}) const;

  /// Gram certificate of fragment `index` evaluated at `solution`;
  /// throws CertificateRejected when it does not validate.
  GramCertificate certificate(int index, const SosSolution& solution) const;
  /// Same data without the validity check.
  GramCertificate raw_certificate(int index, const SosSolution& solution) const;

 private:
  struct Var {
    int block = -1;  // -1: free
    int index = 0;   // free index or row
    int col = 0;
  };
  struct Registered {
    SosFragment fragment;
    int block = -1;
  };
  struct Row {
    std::vector<sdp::BlockTerm> terms;
    AffineExpr expr;  // sum terms + expr == 0
  };

  int new_block(int size);
  void append_expr(sdp::LinearFunctional& f, const AffineExpr& e, double scale) const;

  std::vector<Var> vars_;
  std::vector<int> block_sizes_;
  int free_count_ = 0;
  std::vector<Registered> fragments_;
  std::vector<Row> rows_;
  AffineExpr objective_;
};

}  // namespace sosmas
