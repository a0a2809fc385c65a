#include "sosmas/poly.hpp"

#include <numeric>
#include <sstream>

namespace sosmas {

Monomial::Monomial(std::vector<int> exponents) : exponents_(std::move(exponents)) {
  for (int e : exponents_) {
    if (e < 0) throw DomainError("negative exponent in monomial");
  }
  degree_ = std::accumulate(exponents_.begin(), exponents_.end(), 0);
}

Monomial Monomial::one(int variable_count) {
  return Monomial(std::vector<int>(static_cast<std::size_t>(variable_count), 0));
}

Monomial Monomial::variable(int variable_count, int index, int power) {
  if (index < 0 || index >= variable_count) throw IndexError("variable index out of range");
  std::vector<int> e(static_cast<std::size_t>(variable_count), 0);
  e[static_cast<std::size_t>(index)] = power;
  return Monomial(std::move(e));
}

Monomial Monomial::operator*(const Monomial& other) const {
  if (other.variable_count() != variable_count()) {
    throw DimensionError("monomial product over different variable sets");
  }
  std::vector<int> e(exponents_);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] += other.exponents_[i];
  return Monomial(std::move(e));
}

bool Monomial::divisible_by(const Monomial& other) const {
  for (std::size_t i = 0; i < exponents_.size(); ++i) {
    if (exponents_[i] < other.exponents_[i]) return false;
  }
  return true;
}

std::string to_string(const Monomial& m) {
  std::ostringstream os;
  bool first = true;
  for (int i = 0; i < m.variable_count(); ++i) {
    if (m[i] == 0) continue;
    if (!first) os << '*';
    os << 'x' << (i + 1);
    if (m[i] > 1) os << '^' << m[i];
    first = false;
  }
  if (first) os << '1';
  return os.str();
}

AffineSubstitution AffineSubstitution::embed(int n, int new_n, int offset) {
  if (offset < 0 || offset + n > new_n) throw DimensionError("embedding exceeds target variables");
  AffineSubstitution map{new_n, {}};
  for (int i = 0; i < n; ++i) {
    AffineForm f{std::vector<double>(static_cast<std::size_t>(new_n), 0.0), 0.0};
    f.linear[static_cast<std::size_t>(offset + i)] = 1.0;
    map.images.push_back(std::move(f));
  }
  return map;
}

AffineSubstitution AffineSubstitution::difference(int n, int new_n, int plus, int minus) {
  if (plus + n > new_n || minus + n > new_n) throw DimensionError("difference map out of range");
  AffineSubstitution map{new_n, {}};
  for (int i = 0; i < n; ++i) {
    AffineForm f{std::vector<double>(static_cast<std::size_t>(new_n), 0.0), 0.0};
    f.linear[static_cast<std::size_t>(plus + i)] += 1.0;
    f.linear[static_cast<std::size_t>(minus + i)] -= 1.0;
    map.images.push_back(std::move(f));
  }
  return map;
}

AffineSubstitution AffineSubstitution::negate(int n) {
  AffineSubstitution map{n, {}};
  for (int i = 0; i < n; ++i) {
    AffineForm f{std::vector<double>(static_cast<std::size_t>(n), 0.0), 0.0};
    f.linear[static_cast<std::size_t>(i)] = -1.0;
    map.images.push_back(std::move(f));
  }
  return map;
}

Polynomial affine_image(const AffineForm& form, int new_variable_count) {
  if (static_cast<int>(form.linear.size()) != new_variable_count) {
    throw DimensionError("affine form has wrong length");
  }
  Polynomial p = Polynomial::constant(new_variable_count, form.constant);
  for (int k = 0; k < new_variable_count; ++k) {
    double a = form.linear[static_cast<std::size_t>(k)];
    if (a != 0.0) p.add_term(Monomial::variable(new_variable_count, k), a);
  }
  return p;
}

double evaluate(const Polynomial& p, std::span<const double> point) {
  const int n = p.variable_count();
  if (static_cast<int>(point.size()) != n) {
    throw DimensionError("evaluation point has " + std::to_string(point.size()) +
                         " entries, expected " + std::to_string(n));
  }
  double sum = 0.0;
  for (const auto& [m, c] : p.terms()) {
    double term = c;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < m[i]; ++k) term *= point[static_cast<std::size_t>(i)];
    }
    sum += term;
  }
  return sum;
}

std::vector<double> evaluate(const PolyVector& v, std::span<const double> point) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(evaluate(e, point));
  return out;
}

Polynomial arith(const Polynomial& p, const Polynomial& q, ArithKind kind) {
  switch (kind) {
    case ArithKind::Add:
      return p + q;
    case ArithKind::Sub:
      return p - q;
    case ArithKind::Mul:
      return p * q;
  }
  return p;
}

Polynomial scale(const Polynomial& p, double s) { return p * s; }

double max_coefficient_difference(const Polynomial& a, const Polynomial& b) {
  return (a - b).max_abs_coefficient();
}

bool is_odd(const Polynomial& p) {
  for (const auto& [m, c] : p.terms()) {
    if (m.degree() % 2 == 0) return false;
  }
  return true;
}

bool is_even(const Polynomial& p) {
  for (const auto& [m, c] : p.terms()) {
    if (m.degree() % 2 != 0) return false;
  }
  return true;
}

std::string to_string(const Polynomial& p, const std::vector<std::string>& names) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  os.precision(10);
  bool first = true;
  // Highest degree first reads more naturally.
  for (auto it = p.terms().rbegin(); it != p.terms().rend(); ++it) {
    const auto& [m, c] = *it;
    if (!first) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << '-';
    os << std::abs(c);
    for (int i = 0; i < m.variable_count(); ++i) {
      if (m[i] == 0) continue;
      os << '*';
      if (static_cast<std::size_t>(i) < names.size()) os << names[static_cast<std::size_t>(i)];
      else os << 'x' << (i + 1);
      if (m[i] > 1) os << '^' << m[i];
    }
    first = false;
  }
  return os.str();
}

void to_json(nlohmann::json& j, const Monomial& m) { j = m.exponents(); }

void from_json(const nlohmann::json& j, Monomial& m) {
  if (!j.is_array()) throw FormatError("monomial must be an exponent array");
  m = Monomial(j.get<std::vector<int>>());
}

void to_json(nlohmann::json& j, const Polynomial& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [m, c] : p.terms()) {
    terms.push_back({{"exp", m.exponents()}, {"coef", c}});
  }
  j = {{"vars", p.variable_count()}, {"terms", terms}};
}

void from_json(const nlohmann::json& j, Polynomial& p) {
  if (!j.is_object() || !j.contains("vars") || !j.contains("terms")) {
    throw FormatError("polynomial JSON needs \"vars\" and \"terms\"");
  }
  const int n = j.at("vars").get<int>();
  Polynomial out(n);
  for (const auto& t : j.at("terms")) {
    Monomial m = t.at("exp").get<Monomial>();
    if (m.variable_count() != n) throw FormatError("term exponent length differs from \"vars\"");
    const double c = t.at("coef").get<double>();
    if (!std::isfinite(c)) throw DataError("non-finite polynomial coefficient");
    out.add_term(m, c);
  }
  p = std::move(out);
}

void to_json(nlohmann::json& j, const PolyVector& v) {
  j = nlohmann::json::array();
  for (const auto& e : v) j.push_back(e);
}

void from_json(const nlohmann::json& j, PolyVector& v) {
  if (!j.is_array() || j.empty()) throw FormatError("poly vector must be a non-empty array");
  std::vector<Polynomial> entries;
  for (const auto& e : j) entries.push_back(e.get<Polynomial>());
  v = PolyVector(std::move(entries));
}

}  // namespace sosmas
