#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sosmas/errors.hpp"

namespace sosmas {

/// Coefficients with magnitude below this are dropped after arithmetic.
inline constexpr double kDropTolerance = 1e-14;

/// Exponent tuple over a fixed, index-addressed variable set.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(std::vector<int> exponents);

  static Monomial one(int variable_count);
  static Monomial variable(int variable_count, int index, int power = 1);

  int variable_count() const { return static_cast<int>(exponents_.size()); }
  int degree() const { return degree_; }
  int operator[](int i) const { return exponents_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& exponents() const { return exponents_; }

  Monomial operator*(const Monomial& other) const;
  bool divisible_by(const Monomial& other) const;

  friend bool operator==(const Monomial&, const Monomial&) = default;

 private:
  std::vector<int> exponents_;
  int degree_ = 0;
};

/// Graded lexicographic order: lower total degree first; within a degree,
/// x1 before x2 (so x1^2 < x1*x2 < x2^2).
struct GradedLex {
  bool operator()(const Monomial& a, const Monomial& b) const {
    if (a.degree() != b.degree()) return a.degree() < b.degree();
    return a.exponents() > b.exponents();
  }
};

std::string to_string(const Monomial& m);

template <class Coef>
struct CoefficientTraits;

template <>
struct CoefficientTraits<double> {
  static double zero() { return 0.0; }
  static bool negligible(double c) { return std::abs(c) < kDropTolerance; }
  static void canonicalize(double&) {}
};

/// Sparse multivariate polynomial with coefficients in `Coef`. Terms are
/// kept in canonical form: no stored coefficient is negligible.
template <class Coef>
class BasicPolynomial {
 public:
  using Terms = std::map<Monomial, Coef, GradedLex>;
  using Traits = CoefficientTraits<Coef>;

  BasicPolynomial() = default;
  explicit BasicPolynomial(int variable_count) : variable_count_(variable_count) {
    if (variable_count <= 0) throw DimensionError("polynomial needs at least one variable");
  }

  static BasicPolynomial constant(int variable_count, const Coef& c) {
    BasicPolynomial p(variable_count);
    p.add_term(Monomial::one(variable_count), c);
    return p;
  }

  static BasicPolynomial monomial(const Monomial& m, const Coef& c) {
    BasicPolynomial p(m.variable_count());
    p.add_term(m, c);
    return p;
  }

  /// The polynomial x_index.
  static BasicPolynomial variable(int variable_count, int index) {
    return monomial(Monomial::variable(variable_count, index), Coef(1.0));
  }

  int variable_count() const { return variable_count_; }
  const Terms& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool is_zero() const { return terms_.empty(); }

  /// Total degree; -1 for the zero polynomial.
  int degree() const { return terms_.empty() ? -1 : terms_.rbegin()->first.degree(); }

  Coef coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? Traits::zero() : it->second;
  }

  /// Accumulates c into the coefficient of m and re-canonicalizes that term.
  void add_term(const Monomial& m, const Coef& c) {
    check_monomial(m);
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) it->second += c;
    Traits::canonicalize(it->second);
    if (Traits::negligible(it->second)) terms_.erase(it);
  }

  BasicPolynomial& operator+=(const BasicPolynomial& other) {
    check_same(other);
    for (const auto& [m, c] : other.terms_) add_term(m, c);
    return *this;
  }

  BasicPolynomial& operator-=(const BasicPolynomial& other) {
    check_same(other);
    for (const auto& [m, c] : other.terms_) add_term(m, c * -1.0);
    return *this;
  }

  BasicPolynomial& operator*=(double s) {
    for (auto& [m, c] : terms_) c = c * s;
    sweep();
    return *this;
  }

  friend BasicPolynomial operator+(BasicPolynomial a, const BasicPolynomial& b) { return a += b; }
  friend BasicPolynomial operator-(BasicPolynomial a, const BasicPolynomial& b) { return a -= b; }
  friend BasicPolynomial operator-(BasicPolynomial a) { return a *= -1.0; }
  friend BasicPolynomial operator*(BasicPolynomial a, double s) { return a *= s; }
  friend BasicPolynomial operator*(double s, BasicPolynomial a) { return a *= s; }

  friend BasicPolynomial operator*(const BasicPolynomial& a, const BasicPolynomial& b) {
    a.check_same(b);
    BasicPolynomial out(a.variable_count_);
    for (const auto& [ma, ca] : a.terms_) {
      for (const auto& [mb, cb] : b.terms_) {
        Coef prod = ca * cb;
        auto [it, inserted] = out.terms_.try_emplace(ma * mb, prod);
        if (!inserted) it->second += prod;
      }
    }
    out.sweep();
    return out;
  }

  friend bool operator==(const BasicPolynomial&, const BasicPolynomial&) = default;

  /// Largest |coefficient| (numeric coefficients only).
  double max_abs_coefficient() const
    requires std::is_same_v<Coef, double>
  {
    double best = 0.0;
    for (const auto& [m, c] : terms_) best = std::max(best, std::abs(c));
    return best;
  }

  /// Drops negligible coefficients; used after bulk updates.
  void sweep() {
    for (auto it = terms_.begin(); it != terms_.end();) {
      Traits::canonicalize(it->second);
      if (Traits::negligible(it->second)) {
        it = terms_.erase(it);
      } else {
        ++it;
      }
    }
  }

 private:
  void check_same(const BasicPolynomial& other) const {
    if (other.variable_count_ != variable_count_) {
      throw DimensionError("variable count mismatch: " + std::to_string(variable_count_) +
                           " vs " + std::to_string(other.variable_count_));
    }
  }
  void check_monomial(const Monomial& m) const {
    if (m.variable_count() != variable_count_) {
      throw DimensionError("monomial has " + std::to_string(m.variable_count()) +
                           " variables, polynomial has " + std::to_string(variable_count_));
    }
  }

  int variable_count_ = 0;
  Terms terms_;
};

using Polynomial = BasicPolynomial<double>;

/// Ordered list of polynomials over one variable set.
template <class Coef>
class BasicPolyVector {
 public:
  using Entry = BasicPolynomial<Coef>;

  BasicPolyVector() = default;
  explicit BasicPolyVector(std::vector<Entry> entries) : entries_(std::move(entries)) {
    for (const auto& e : entries_) {
      if (e.variable_count() != entries_.front().variable_count()) {
        throw DimensionError("poly vector entries disagree on variable count");
      }
    }
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int variable_count() const { return entries_.empty() ? 0 : entries_.front().variable_count(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const std::vector<Entry>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  int degree() const {
    int d = -1;
    for (const auto& e : entries_) d = std::max(d, e.degree());
    return d;
  }

  friend bool operator==(const BasicPolyVector&, const BasicPolyVector&) = default;

 private:
  std::vector<Entry> entries_;
};

using PolyVector = BasicPolyVector<double>;

/// One affine form `constant + sum_k linear[k] * y_k` over a new variable set.
struct AffineForm {
  std::vector<double> linear;
  double constant = 0.0;
};

/// Maps each original variable to an affine form over `new_variable_count`
/// variables.
struct AffineSubstitution {
  int new_variable_count = 0;
  std::vector<AffineForm> images;

  /// x_i -> y_{offset+i}
  static AffineSubstitution embed(int n, int new_n, int offset);
  /// x_i -> y_{plus+i} - y_{minus+i}
  static AffineSubstitution difference(int n, int new_n, int plus, int minus);
  /// x_i -> -x_i
  static AffineSubstitution negate(int n);
};

Polynomial affine_image(const AffineForm& form, int new_variable_count);

/// Element-wise coefficient conversion (e.g. numeric -> decision).
template <class To, class From>
BasicPolynomial<To> convert(const BasicPolynomial<From>& p) {
  BasicPolynomial<To> out(p.variable_count());
  for (const auto& [m, c] : p.terms()) out.add_term(m, To(c));
  return out;
}

template <class To, class From>
BasicPolyVector<To> convert(const BasicPolyVector<From>& v) {
  std::vector<BasicPolynomial<To>> entries;
  for (const auto& e : v) entries.push_back(convert<To>(e));
  return BasicPolyVector<To>(std::move(entries));
}

/// Partial derivatives; entry i is d p / d x_i.
template <class Coef>
BasicPolyVector<Coef> gradient(const BasicPolynomial<Coef>& p) {
  const int n = p.variable_count();
  std::vector<BasicPolynomial<Coef>> out(static_cast<std::size_t>(n), BasicPolynomial<Coef>(n));
  for (const auto& [m, c] : p.terms()) {
    for (int i = 0; i < n; ++i) {
      if (m[i] == 0) continue;
      std::vector<int> e = m.exponents();
      e[static_cast<std::size_t>(i)] -= 1;
      out[static_cast<std::size_t>(i)].add_term(Monomial(std::move(e)), c * static_cast<double>(m[i]));
    }
  }
  return BasicPolyVector<Coef>(std::move(out));
}

/// p composed with the affine map. Degree is preserved for injective maps.
template <class Coef>
BasicPolynomial<Coef> substitute_affine(const BasicPolynomial<Coef>& p,
                                        const AffineSubstitution& map) {
  const int n = p.variable_count();
  if (static_cast<int>(map.images.size()) != n) {
    throw DimensionError("substitution provides " + std::to_string(map.images.size()) +
                         " images for " + std::to_string(n) + " variables");
  }
  const int new_n = map.new_variable_count;
  // powers[i][k] = (image_i)^k
  std::vector<std::vector<Polynomial>> powers(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    powers[static_cast<std::size_t>(i)].push_back(Polynomial::constant(new_n, 1.0));
  }
  auto power = [&](int i, int k) -> const Polynomial& {
    auto& cache = powers[static_cast<std::size_t>(i)];
    while (static_cast<int>(cache.size()) <= k) {
      cache.push_back(cache.back() * affine_image(map.images[static_cast<std::size_t>(i)], new_n));
    }
    return cache[static_cast<std::size_t>(k)];
  };
  BasicPolynomial<Coef> out(new_n);
  for (const auto& [m, c] : p.terms()) {
    Polynomial term = Polynomial::constant(new_n, 1.0);
    for (int i = 0; i < n; ++i) {
      if (m[i] > 0) term = term * power(i, m[i]);
    }
    for (const auto& [tm, tc] : term.terms()) out.add_term(tm, c * tc);
  }
  return out;
}

template <class Coef>
BasicPolyVector<Coef> substitute_affine(const BasicPolyVector<Coef>& v,
                                        const AffineSubstitution& map) {
  std::vector<BasicPolynomial<Coef>> out;
  for (const auto& e : v) out.push_back(substitute_affine(e, map));
  return BasicPolyVector<Coef>(std::move(out));
}

/// Inner product sum_i a_i * b_i.
template <class Coef>
BasicPolynomial<Coef> dot(const BasicPolyVector<Coef>& a, const BasicPolyVector<Coef>& b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("dot: length mismatch");
  BasicPolynomial<Coef> out(a.variable_count());
  for (std::size_t i = 0; i < a.size(); ++i) out += a[i] * b[i];
  return out;
}

template <class Coef>
BasicPolyVector<Coef> operator-(const BasicPolyVector<Coef>& a, const BasicPolyVector<Coef>& b) {
  if (a.size() != b.size()) throw DimensionError("poly vector length mismatch");
  std::vector<BasicPolynomial<Coef>> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(a[i] - b[i]);
  return BasicPolyVector<Coef>(std::move(out));
}

double evaluate(const Polynomial& p, std::span<const double> point);
std::vector<double> evaluate(const PolyVector& v, std::span<const double> point);

/// Numeric polynomial arithmetic entry point.
enum class ArithKind { Add, Sub, Mul };
Polynomial arith(const Polynomial& p, const Polynomial& q, ArithKind kind);
Polynomial scale(const Polynomial& p, double s);

/// Largest coefficient difference between two polynomials.
double max_coefficient_difference(const Polynomial& a, const Polynomial& b);

/// True iff p(-x) == -p(x) term by term (every stored monomial has odd degree).
bool is_odd(const Polynomial& p);
bool is_even(const Polynomial& p);

std::string to_string(const Polynomial& p, const std::vector<std::string>& names = {});

void to_json(nlohmann::json& j, const Monomial& m);
void from_json(const nlohmann::json& j, Monomial& m);
void to_json(nlohmann::json& j, const Polynomial& p);
void from_json(const nlohmann::json& j, Polynomial& p);
void to_json(nlohmann::json& j, const PolyVector& v);
void from_json(const nlohmann::json& j, PolyVector& v);

}  // namespace sosmas
