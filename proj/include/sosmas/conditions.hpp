#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sosmas/poly.hpp"
#include "sosmas/sdp.hpp"
#include "sosmas/sos.hpp"

namespace sosmas {

/// Monomial feature map q(x) together with the exponent of the radial lower
/// bound sum_i x_i^(2m).
class QForm {
 public:
  QForm() = default;
  /// exponent_2m = 0 selects 2 * (largest entry degree).
  explicit QForm(std::vector<Monomial> qhat, int exponent_2m = 0);

  const std::vector<Monomial>& qhat() const { return qhat_; }
  int size() const { return static_cast<int>(qhat_.size()); }
  int variable_count() const { return qhat_.empty() ? 0 : qhat_.front().variable_count(); }
  int exponent_2m() const { return exponent_2m_; }
  int degree() const;

  PolyVector as_poly_vector() const;

 private:
  std::vector<Monomial> qhat_;
  int exponent_2m_ = 0;
};

/// Symmetric matrix whose entries are affine in the decision variables.
using AffineMatrix = std::vector<std::vector<AffineExpr>>;

AffineMatrix to_affine(const MatrixVar& m);
AffineMatrix to_affine(const Eigen::MatrixXd& m);

/// q(a)^T Psi q(a) - sum_i a_i^(2m), in n variables.
DecisionPolynomial build_psd_lower_bound(const QForm& qf, const AffineMatrix& psi);

/// [grad V(a - g) - grad V(b - g)]^T [h(a) - h(b)] - H(a - g, b - g) over
/// (a, b, g) in 3n variables, with H(x, y) = [q(x) - q(y)]^T Psi [q(x) - q(y)].
/// Throws BilinearityError when both V and h carry decision variables.
DecisionPolynomial build_first_order_decrease(const DecisionPolynomial& v, const DecisionPolyVector& h,
                                              const QForm& qf, const AffineMatrix& psi);

/// Same shape with the velocity coupling h2.
DecisionPolynomial build_second_order_decrease(const DecisionPolynomial& v, const DecisionPolyVector& h2,
                                               const QForm& qf, const AffineMatrix& psi);

/// Rewrites a polynomial in (a, b, g) over the coordinates (u, b, g) with
/// a = u + b. The decrease targets vanish at u = 0, so Newton pruning in
/// these coordinates drops the Gram directions that would be forced to zero.
/// Terms of u-degree below 2 are discarded: for such targets they are
/// floating-point residue of the change of variables.
DecisionPolynomial difference_coordinates(const DecisionPolynomial& p, int n);

/// grad V(a) h1(b) - grad V(b) h1(a) over (a, b) in 2n variables.
/// For numeric V and h1, throws DegreeError unless deg h1 == deg V - 1.
DecisionPolynomial symmetry_residual(const DecisionPolynomial& v, const DecisionPolyVector& h1);

/// One expression per residual monomial; empty when h1 is grad V.
std::vector<AffineExpr> build_symmetry_equality(const DecisionPolynomial& v, const DecisionPolyVector& h1);

/// Numeric view of the symmetry condition.
struct SymmetryReport {
  /// max |coef| of the residual polynomial.
  double forward_residual = 0.0;
  /// max |delta| of the smallest (2-norm) change to h1's coefficients that
  /// zeroes the residual exactly.
  double backward_error = 0.0;
  int equation_count = 0;
};

SymmetryReport symmetry_report(const Polynomial& v, const PolyVector& h1);

/// V - V(0) - eps * sum x_i^2, the positivity target for V.
DecisionPolynomial positivity_target(const DecisionPolynomial& v, double eps = 1e-6);

struct NamedCertificate {
  std::string name;
  GramCertificate certificate;
  CertificateCheck check;
};

struct VerifyProblem {
  int order = 2;
  Polynomial v;
  PolyVector h;   // order 1
  PolyVector h1;  // order 2
  PolyVector h2;  // order 2
  QForm qform;
  /// Fixed Psi; when absent Psi is a decision matrix and lambda_min(Psi) is maximized.
  std::optional<Eigen::MatrixXd> psi;
  /// Allowed backward error on the symmetry condition (coefficients printed
  /// to 4 decimals carry up to 5e-5 rounding each).
  double symmetry_tolerance = 2e-4;
  double positivity_eps = 1e-6;
};

struct SolveStats {
  sdp::SdpStatus status = sdp::SdpStatus::NumericalFailure;
  int iterations = 0;
  /// Solver tolerance of the reported solve (10x the requested one after a
  /// numerical-failure retry).
  double tolerance = 0.0;
  sdp::Residuals residuals;
  double objective = 0.0;
  int block_count = 0;
  int largest_block = 0;
  int equality_count = 0;
};

struct VerifyResult {
  bool feasible = false;
  SolveStats stats;
  Eigen::MatrixXd psi;
  double psi_lambda_min = 0.0;
  std::vector<NamedCertificate> certificates;
  std::optional<SymmetryReport> symmetry;
  std::string message;
};

/// Checks a fixed (V, couplings) pair by one SDP in Psi.
VerifyResult verify(const VerifyProblem& problem, const sdp::SdpSettings& settings = {});

/// The SDP that `verify` solves.
sdp::SdpProblem verify_sdp(const VerifyProblem& problem);

enum class SynthesisMode { FixedH, Alternate };

struct SynthesisConfig {
  int order = 2;
  int variable_count = 2;
  int deg_v = 4;
  int deg_h = 3;
  QForm qform;
  SynthesisMode mode = SynthesisMode::Alternate;
  int max_rounds = 4;
  /// Coupling used while V is the unknown (h for order 1, h2 for order 2);
  /// defaults to the identity map.
  std::optional<PolyVector> coupling_seed;
  /// |c| <= bound on every synthesized coefficient.
  double coefficient_bound = 100.0;
  double positivity_eps = 1e-6;
};

struct RoundReport {
  int round = 0;
  std::string unknown;  // "lyapunov" or "coupling"
  SolveStats stats;
  bool certified = false;
  double psi_lambda_min = 0.0;
  std::string message;
};

struct SynthesisResult {
  bool feasible = false;
  sdp::SdpStatus status = sdp::SdpStatus::NumericalFailure;
  Polynomial v;
  PolyVector h;   // order 1
  PolyVector h1;  // order 2, equals grad V
  PolyVector h2;  // order 2
  Eigen::MatrixXd psi;
  std::vector<NamedCertificate> certificates;
  std::optional<SymmetryReport> symmetry;
  std::vector<RoundReport> rounds;
  std::string message;
};

/// fixed_h: one SDP for V and Psi. alternate: V-rounds and coupling-rounds
/// until a certificate validates or max_rounds is reached.
SynthesisResult synthesize(const SynthesisConfig& config, const sdp::SdpSettings& settings = {});

/// The first SDP `synthesize` would solve.
sdp::SdpProblem synthesis_sdp(const SynthesisConfig& config);

/// Identity coupling x -> x.
PolyVector identity_coupling(int variable_count);

void to_json(nlohmann::json& j, const QForm& q);
void from_json(const nlohmann::json& j, QForm& q);
void to_json(nlohmann::json& j, const SymmetryReport& r);
void to_json(nlohmann::json& j, const SolveStats& s);
void to_json(nlohmann::json& j, const NamedCertificate& c);
void to_json(nlohmann::json& j, const VerifyResult& r);
void to_json(nlohmann::json& j, const RoundReport& r);
void to_json(nlohmann::json& j, const SynthesisResult& r);

/// Problem files: order, variables, V, h / h1 / h2, qhat, exponent_2m,
/// optional psi; synthesis settings live under "synthesis".
VerifyProblem verify_problem_from_json(const nlohmann::json& j);
SynthesisConfig synthesis_config_from_json(const nlohmann::json& j);

}  // namespace sosmas
