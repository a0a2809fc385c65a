#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixture.hpp"
#include "sosmas/errors.hpp"
#include "sosmas/sos.hpp"

using namespace sosmas;
using fixture::mono;

namespace {

Polynomial motzkin() {
  Polynomial p(2);
  p.add_term(mono({4, 2}), 1.0);
  p.add_term(mono({2, 4}), 1.0);
  p.add_term(mono({2, 2}), -3.0);
  p.add_term(mono({0, 0}), 1.0);
  return p;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Smallest sampled value of p over a box.
double sampled_min(const Polynomial& p, std::mt19937& rng, int samples, double radius) {
  std::uniform_real_distribution<double> u(-radius, radius);
  std::vector<double> x(static_cast<std::size_t>(p.variable_count()));
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    for (auto& v : x) v = u(rng);
    best = std::min(best, evaluate(p, x));
  }
  return best;
}

GramCertificate certify(const Polynomial& target, std::optional<std::vector<Monomial>> basis = std::nullopt) {
  SosProgram prog;
  const int idx = prog.add_sos(to_decision(target), std::move(basis));
  const SosSolution sol = prog.solve();
  EXPECT_TRUE(sol.optimal()) << sdp::to_string(sol.sdp.status);
  return prog.certificate(idx, sol);
}

}  // namespace

TEST(Sos, MonomialBasisExamples) {
  const auto b = monomial_basis(2, 2);
  ASSERT_EQ(b.size(), 6u);
  const std::vector<std::vector<int>> expected{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  for (std::size_t k = 0; k < b.size(); ++k) EXPECT_EQ(b[k].exponents(), expected[k]);
  const auto odd = monomial_basis(1, 3, Parity::Odd);
  ASSERT_EQ(odd.size(), 2u);
  EXPECT_EQ(odd[0], mono({1}));
  EXPECT_EQ(odd[1], mono({3}));
  EXPECT_EQ(monomial_basis(6, 3).size(), static_cast<std::size_t>(binomial(9, 3)));
  for (int n = 1; n <= 5; ++n) {
    for (int d = 0; d <= 4; ++d) {
      const auto basis = monomial_basis(n, d);
      EXPECT_EQ(basis.size(), static_cast<std::size_t>(binomial(n + d, d)));
      EXPECT_TRUE(std::is_sorted(basis.begin(), basis.end(), GradedLex{}));
    }
  }
  for (const auto& m : monomial_basis(3, 4, Parity::Even)) EXPECT_EQ(m.degree() % 2, 0);
}

TEST(Sos, AffineExprRules) {
  AffineExpr a = AffineExpr::variable(0, 2.0) + AffineExpr(1.0);
  AffineExpr b = AffineExpr::variable(1, -1.0);
  EXPECT_THROW(a * b, BilinearityError);
  AffineExpr c = a * AffineExpr(3.0);
  EXPECT_EQ(c.constant(), 3.0);
  EXPECT_EQ(c.linear().at(0), 6.0);
  EXPECT_DOUBLE_EQ((a + b).evaluate({1.0, 4.0}), -1.0);

  DecisionPolynomial p = DecisionPolynomial::monomial(mono({1}), AffineExpr::variable(0));
  EXPECT_THROW(p * p, BilinearityError);
  EXPECT_NO_THROW(p * to_decision(Polynomial::variable(1, 0)));
}

TEST(Sos, PerfectSquare) {
  const Polynomial x2 = Polynomial::monomial(mono({2}), 1.0);
  const GramCertificate c = certify(x2, monomial_basis(1, 1));
  ASSERT_EQ(c.basis.size(), 2u);
  EXPECT_NEAR(c.gram(0, 0), 0.0, 1e-6);
  EXPECT_NEAR(c.gram(0, 1), 0.0, 1e-6);
  EXPECT_NEAR(c.gram(1, 1), 1.0, 1e-6);
  EXPECT_TRUE(check_certificate(c).valid);
}

TEST(Sos, RankOneSquare) {
  const Polynomial x1 = Polynomial::variable(2, 0);
  const Polynomial x2 = Polynomial::variable(2, 1);
  const GramCertificate c = certify((x1 + x2) * (x1 + x2), std::vector<Monomial>{mono({1, 0}), mono({0, 1})});
  Eigen::Matrix2d expected;
  expected << 1, 1, 1, 1;
  EXPECT_LE((c.gram - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Sos, QuarticExplicitSquare) {
  const Polynomial s = Polynomial::monomial(mono({2, 0}), 1.0) + Polynomial::monomial(mono({0, 2}), 1.0);
  const GramCertificate c = certify(s * s);
  const std::vector<Monomial> expected{mono({2, 0}), mono({1, 1}), mono({0, 2})};
  EXPECT_EQ(c.basis, expected);
  EXPECT_TRUE(check_certificate(c).valid);
}

TEST(Sos, MotzkinIsNotSos) {
  const Polynomial m = motzkin();
  std::mt19937 rng(1);
  EXPECT_GE(sampled_min(m, rng, 20000, 2.0), -1e-12);
  SosProgram prog;
  prog.add_sos(to_decision(m), monomial_basis(2, 3));
  const SosSolution sol = prog.solve();
  ASSERT_EQ(sol.sdp.status, sdp::SdpStatus::Infeasible);
  const sdp::FarkasCheck f = sdp::check_farkas(prog.build(), sol.sdp.dual_values);
  EXPECT_NEAR(f.b_dot_y, 1.0, 1e-9);
  EXPECT_LE(f.max_eigenvalue, 1e-7);
}

TEST(Sos, NewtonPruning) {
  const auto supp = support(to_decision(motzkin()));
  const auto pruned = newton_prune(monomial_basis(2, 3), supp);
  const std::vector<Monomial> expected{mono({0, 0}), mono({1, 1}), mono({2, 1}), mono({1, 2})};
  EXPECT_EQ(pruned, expected);
  // Pruning keeps the certificate of an SOS target intact.
  const Polynomial x1 = Polynomial::variable(3, 0);
  const Polynomial x3 = Polynomial::variable(3, 2);
  const Polynomial q = x1 * x1 * x3 - x3 + Polynomial::constant(3, 2.0);
  const auto basis = default_basis(to_decision(q * q));
  EXPECT_LT(basis.size(), monomial_basis(3, 3).size());
  EXPECT_TRUE(check_certificate(certify(q * q)).valid);
}

TEST(Sos, BasisCoverageError) {
  const Polynomial x3 = Polynomial::monomial(mono({3}), 1.0);
  EXPECT_THROW(compile_sos(to_decision(x3), monomial_basis(1, 1)), BasisCoverageError);
  try {
    compile_sos(to_decision(x3), monomial_basis(1, 1));
  } catch (const BasisCoverageError& e) {
    EXPECT_NE(std::string(e.what()).find("x1^3"), std::string::npos);
  }
}

// x^2 + c x^3: the pruned basis is {x}, so x^3 is unreachable and c must vanish.
TEST(Sos, UncoveredDecisionCoefficientIsForcedToZero) {
  SosProgram prog;
  const int c = prog.new_free();
  DecisionPolynomial dp = to_decision(Polynomial::monomial(mono({2}), 1.0));
  dp.add_term(mono({3}), AffineExpr::variable(c));
  const int idx = prog.add_sos(dp);
  prog.add_abs_bound(AffineExpr::variable(c), 1.0);
  prog.set_objective(AffineExpr::variable(c));
  const SosSolution sol = prog.solve();
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.values[static_cast<std::size_t>(c)], 0.0, 1e-7);
  EXPECT_TRUE(check_certificate(prog.certificate(idx, sol)).valid);

  Polynomial numeric(1);
  numeric.add_term(mono({2}), 1.0);
  numeric.add_term(mono({3}), 1.0);
  SosProgram fixed;
  EXPECT_THROW(fixed.add_sos(to_decision(numeric)), BasisCoverageError);
}

TEST(Sos, CompileZero) {
  // (c1 - c2) * x
  DecisionPolynomial dp = DecisionPolynomial::monomial(mono({1}), AffineExpr::variable(0) - AffineExpr::variable(1));
  const auto rows = compile_zero(dp);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].linear().at(0), 1.0);
  EXPECT_EQ(rows[0].linear().at(1), -1.0);
  EXPECT_TRUE(compile_zero(DecisionPolynomial(2)).empty());

  SosProgram prog;
  const int c1 = prog.new_free();
  const int c2 = prog.new_free();
  prog.add_zero(DecisionPolynomial::monomial(mono({1}), AffineExpr::variable(c1) - AffineExpr::variable(c2)));
  prog.add_equality(AffineExpr::variable(c1) - AffineExpr(2.5));
  const SosSolution sol = prog.solve();
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.values[static_cast<std::size_t>(c2)], 2.5, 1e-7);
}

TEST(Sos, VacuousTarget) {
  const SosFragment f = compile_sos(DecisionPolynomial(2));
  EXPECT_TRUE(f.vacuous());
  EXPECT_TRUE(f.rows.empty());
}

TEST(Sos, CertificateRejectedCarriesResidual) {
  const Polynomial x2 = Polynomial::monomial(mono({2}), 1.0);
  const SosFragment f = compile_sos(to_decision(x2), monomial_basis(1, 1));
  Eigen::Matrix2d wrong;
  wrong << 0, 0, 0, 0.5;
  try {
    extract_certificate(f, wrong, x2);
    FAIL() << "expected rejection";
  } catch (const CertificateRejected& e) {
    EXPECT_NEAR(e.residual(), 0.5, 1e-12);
  }
  Eigen::Matrix2d indefinite;
  indefinite << -1, 0, 0, 1;
  EXPECT_THROW(extract_certificate(f, indefinite, x2 - Polynomial::constant(1, 1.0)), CertificateRejected);
}

TEST(Sos, CertificateJsonRoundTrip) {
  const Polynomial s = Polynomial::monomial(mono({2, 0}), 1.0) + Polynomial::monomial(mono({0, 2}), 1.0);
  const GramCertificate c = certify(s * s);
  nlohmann::json j = c;
  const GramCertificate back = j.get<GramCertificate>();
  EXPECT_EQ(back.basis, c.basis);
  EXPECT_TRUE(back.gram.isApprox(c.gram));
  EXPECT_TRUE(check_certificate(back).valid);
  for (const char* key : {"basis", "gram", "target", "residual", "lambda_min"}) EXPECT_TRUE(j.contains(key));
}

TEST(Sos, DecisionTargetWithObjective) {
  // max c with x^4 - 2x^2 + 1 - c SOS; the minimum 0 is attained at x = 1.
  SosProgram prog;
  const int c = prog.new_free();
  Polynomial p(1);
  p.add_term(mono({4}), 1.0);
  p.add_term(mono({2}), -2.0);
  p.add_term(mono({0}), 1.0);
  DecisionPolynomial dp = to_decision(p);
  dp.add_term(mono({0}), AffineExpr::variable(c, -1.0));
  const int idx = prog.add_sos(dp);
  prog.set_objective(AffineExpr::variable(c));
  const SosSolution sol = prog.solve();
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.values[static_cast<std::size_t>(c)], 0.0, 1e-6);
  EXPECT_TRUE(check_certificate(prog.certificate(idx, sol)).valid);
}

TEST(Sos, AbsBound) {
  SosProgram prog;
  const int v = prog.new_free();
  prog.add_abs_bound(AffineExpr::variable(v), 3.0);
  prog.set_objective(AffineExpr::variable(v, -1.0));
  const SosSolution sol = prog.solve();
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.values[static_cast<std::size_t>(v)], -3.0, 1e-6);
}

// Explicit sums of at most three squares always certify, and every accepted
// certificate is nonnegative on a random sample.
TEST(SosProperty, RandomSumsOfSquaresRoundTrip) {
  std::mt19937 rng(123);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  int certified = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 3;
    const int half = 1 + (trial / 3) % 3;
    const auto basis = monomial_basis(n, half);
    Polynomial target(n);
    const int squares = 1 + trial % 3;
    for (int s = 0; s < squares; ++s) {
      Polynomial q(n);
      for (const auto& m : basis) {
        if (coef(rng) > -0.2) q.add_term(m, coef(rng));
      }
      target += q * q;
    }
    if (target.is_zero()) target = Polynomial::constant(n, 1.0);
    const GramCertificate c = certify(target);
    const CertificateCheck check = check_certificate(c);
    EXPECT_TRUE(check.valid) << "trial " << trial << " residual " << check.residual;
    const double scale = target.max_abs_coefficient();
    EXPECT_GE(sampled_min(target, rng, 10000, 1.5), -1e-5 * (1.0 + scale));
    // Soundness of the reconstructed polynomial itself.
    EXPECT_GE(sampled_min(gram_polynomial(c.basis, c.gram), rng, 10000, 1.5), -1e-5 * (1.0 + scale));
    ++certified;
  }
  EXPECT_EQ(certified, 30);
}

TEST(SosProperty, EnlargingTheBasisKeepsFeasibility) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 1 + trial % 2;
    Polynomial q(n);
    for (const auto& m : monomial_basis(n, 2)) q.add_term(m, coef(rng));
    const Polynomial target = q * q + Polynomial::constant(n, 0.1);
    const auto small = default_basis(to_decision(target));
    const auto large = monomial_basis(n, 2);
    EXPECT_TRUE(check_certificate(certify(target, small)).valid);
    EXPECT_TRUE(check_certificate(certify(target, large)).valid);
  }
}
