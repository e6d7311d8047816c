#include "superres/tsystems.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "superres/core.hpp"
#include "superres/rng.hpp"

namespace superres {

Polynomial::Polynomial(std::vector<Rational> coefficients) : coeffs_(std::move(coefficients)) {
  normalize();
}

Polynomial Polynomial::constant(const Rational& c) { return Polynomial({c}); }

Polynomial Polynomial::identity() { return Polynomial({Rational(0), Rational(1)}); }

void Polynomial::normalize() {
  while (!coeffs_.empty() && coeffs_.back() == 0) coeffs_.pop_back();
}

Rational Polynomial::coefficient(std::size_t k) const {
  return k < coeffs_.size() ? coeffs_[k] : Rational(0);
}

Rational Polynomial::leading() const { return coeffs_.empty() ? Rational(0) : coeffs_.back(); }

Polynomial Polynomial::derivative() const {
  if (coeffs_.size() <= 1) return {};
  std::vector<Rational> out(coeffs_.size() - 1);
  for (std::size_t k = 1; k < coeffs_.size(); ++k) out[k - 1] = coeffs_[k] * static_cast<long>(k);
  return Polynomial(std::move(out));
}

Polynomial Polynomial::shift(const Rational& c) const {
  // Horner in the variable (s - c).
  const Polynomial linear({-c, Rational(1)});
  Polynomial out;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) out = out * linear + constant(*it);
  return out;
}

Rational Polynomial::operator()(const Rational& s) const {
  Rational acc = 0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * s + *it;
  return acc;
}

double Polynomial::eval(double s) const {
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * s + static_cast<double>(*it);
  return acc;
}

Polynomial operator+(const Polynomial& a, const Polynomial& b) {
  std::vector<Rational> out(std::max(a.coeffs_.size(), b.coeffs_.size()));
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.coefficient(k) + b.coefficient(k);
  return Polynomial(std::move(out));
}

Polynomial operator-(const Polynomial& a, const Polynomial& b) {
  std::vector<Rational> out(std::max(a.coeffs_.size(), b.coeffs_.size()));
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.coefficient(k) - b.coefficient(k);
  return Polynomial(std::move(out));
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  if (a.is_zero() || b.is_zero()) return {};
  std::vector<Rational> out(a.coeffs_.size() + b.coeffs_.size() - 1);
  for (std::size_t i = 0; i < a.coeffs_.size(); ++i) {
    for (std::size_t j = 0; j < b.coeffs_.size(); ++j) out[i + j] += a.coeffs_[i] * b.coeffs_[j];
  }
  return Polynomial(std::move(out));
}

Polynomial operator*(const Rational& k, const Polynomial& p) {
  std::vector<Rational> out = p.coeffs_;
  for (Rational& c : out) c *= k;
  return Polynomial(std::move(out));
}

std::string Polynomial::to_string() const {
  if (coeffs_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (std::size_t k = coeffs_.size(); k-- > 0;) {
    if (coeffs_[k] == 0) continue;
    if (!first) os << " + ";
    os << '(' << coeffs_[k] << ')';
    if (k >= 1) os << "s";
    if (k >= 2) os << '^' << k;
    first = false;
  }
  return os.str();
}

// ---------------------------------------------------------------------------

std::vector<Polynomial> p_sequence(std::size_t r, const std::vector<Rational>& c) {
  if (c.size() < r) throw InvalidArgument("p_sequence: need at least r shifts");
  std::vector<Polynomial> p;
  p.reserve(r + 1);
  p.push_back(Polynomial::constant(1));
  const Polynomial two_s({Rational(0), Rational(2)});
  for (std::size_t i = 1; i <= r; ++i) {
    const Polynomial shifted = p.back().shift(c[i - 1]);
    p.push_back(two_s * shifted + p.back().derivative().shift(c[i - 1]));
  }
  return p;
}

Polynomial gaussian_second_derivative(const Polynomial& h) {
  const Polynomial quad({Rational(2), Rational(0), Rational(4)});
  const Polynomial four_s({Rational(0), Rational(4)});
  const Polynomial dh = h.derivative();
  return quad * h + four_s * dh + dh.derivative();
}

bool FSequenceReport::passed() const {
  return std::all_of(orders.begin(), orders.end(), [](const FOrderCheck& o) { return o.passed(); });
}

FSequenceReport f_sequence_check(std::size_t r, const std::vector<Rational>& c) {
  if (r > 8) throw InvalidArgument("f_sequence_check: r must be <= 8");
  if (c.size() < r) throw InvalidArgument("f_sequence_check: need at least r shifts");
  const std::vector<Polynomial> p = p_sequence(r, c);
  FSequenceReport report;
  Polynomial f_prev = Polynomial::constant(1);
  Rational factorial_pow = 1;  // 2^i i!
  for (std::size_t i = 0; i <= r; ++i) {
    FOrderCheck check;
    check.order = i;
    if (i == 0) {
      check.f_recursion = Polynomial::constant(1);
    } else {
      check.f_recursion = gaussian_second_derivative(f_prev.shift(c[i - 1]));
      factorial_pow *= Rational(2 * static_cast<long>(i));
    }
    Polynomial sos;
    Polynomial deriv = p[i];
    Rational scale = 1;  // 1 / (2^j j!)
    for (std::size_t j = 0; j <= i; ++j) {
      if (j > 0) {
        deriv = deriv.derivative();
        scale /= Rational(2 * static_cast<long>(j));
      }
      const Polynomial square = scale * (deriv * deriv);
      sos = sos + square;
      if (j == i) check.constant_square = square.coefficient(0);
    }
    check.f_sum_of_squares = sos;
    check.identity_holds = check.f_recursion == check.f_sum_of_squares;
    if (!check.identity_holds) {
      const std::size_t len = std::max(check.f_recursion.coefficients().size(),
                                       check.f_sum_of_squares.coefficients().size());
      for (std::size_t k = 0; k < len; ++k) {
        if (check.f_recursion.coefficient(k) != check.f_sum_of_squares.coefficient(k)) {
          check.first_mismatch = static_cast<int>(k);
          break;
        }
      }
    }
    check.constant_square_ok = check.constant_square == factorial_pow &&
                               (i == 0 ? true : p[i].degree() == static_cast<int>(i));
    f_prev = check.f_recursion;
    report.orders.push_back(std::move(check));
  }
  return report;
}

FSequenceReport f_sequence_verify(std::size_t r, const std::vector<Rational>& c) {
  FSequenceReport report = f_sequence_check(r, c);
  for (const FOrderCheck& o : report.orders) {
    if (!o.identity_holds) {
      std::ostringstream os;
      os << "f_" << o.order << ": coefficient of s^" << o.first_mismatch << " differs ("
         << o.f_recursion.coefficient(static_cast<std::size_t>(o.first_mismatch)) << " vs "
         << o.f_sum_of_squares.coefficient(static_cast<std::size_t>(o.first_mismatch)) << ")";
      throw VerificationFailure(os.str());
    }
    if (!o.constant_square_ok) {
      std::ostringstream os;
      os << "f_" << o.order << ": constant square " << o.constant_square << " is not 2^i i!";
      throw VerificationFailure(os.str());
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T magnitude(const T& v) {
  return v < 0 ? T(-v) : v;
}

}  // namespace

template <typename T>
T bareiss_determinant(std::vector<std::vector<T>> a) {
  const std::size_t n = a.size();
  if (n == 0) return T(1);
  for (const auto& row : a) {
    if (row.size() != n) throw InvalidArgument("bareiss_determinant: matrix must be square");
  }
  T prev = T(1);
  int sign = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (magnitude(a[i][k]) > magnitude(a[pivot][k])) pivot = i;
    }
    if (a[pivot][k] == T(0)) return T(0);
    if (pivot != k) {
      std::swap(a[pivot], a[k]);
      sign = -sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      for (std::size_t j = k + 1; j < n; ++j) {
        a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
      }
      a[i][k] = T(0);
    }
    prev = a[k][k];
  }
  return sign > 0 ? a[n - 1][n - 1] : T(-a[n - 1][n - 1]);
}

template double bareiss_determinant<double>(std::vector<std::vector<double>>);
template long double bareiss_determinant<long double>(std::vector<std::vector<long double>>);
template Rational bareiss_determinant<Rational>(std::vector<std::vector<Rational>>);

std::vector<std::vector<double>> gauss_tsys_matrix(const std::vector<double>& s,
                                                   const std::vector<double>& t) {
  if (s.size() != 2 * t.size() + 1) {
    throw InvalidArgument("gauss_tsys_det: need exactly 2M+1 sample points for M centers");
  }
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!(s[i - 1] < s[i])) throw InvalidArgument("gauss_tsys_det: s must be strictly increasing");
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i - 1] < t[i])) throw InvalidArgument("gauss_tsys_det: t must be strictly increasing");
  }
  const std::size_t n = s.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = s[j] - t[i];
      const double g = std::exp(-d * d);
      a[2 * i][j] = g;
      a[2 * i + 1][j] = -d * g;
    }
  }
  std::fill(a[n - 1].begin(), a[n - 1].end(), 1.0);
  return a;
}

double gauss_tsys_det(const std::vector<double>& s, const std::vector<double>& t) {
  const auto a = gauss_tsys_matrix(s, t);
  std::vector<std::vector<long double>> wide(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) wide[i].assign(a[i].begin(), a[i].end());
  return static_cast<double>(bareiss_determinant(std::move(wide)));
}

namespace {

// n sorted points in [lo, hi] with consecutive gaps >= gap.
std::vector<double> spaced_points(Rng& rng, std::size_t n, double lo, double hi, double gap) {
  const double slack = (hi - lo) - gap * static_cast<double>(n - 1);
  std::vector<double> u(n);
  for (double& v : u) v = rng.uniform(0.0, slack);
  std::sort(u.begin(), u.end());
  for (std::size_t k = 0; k < n; ++k) u[k] += lo + gap * static_cast<double>(k);
  return u;
}

}  // namespace

TsysMonteCarlo gauss_tsys_monte_carlo(std::size_t M, std::size_t draws, unsigned long long seed,
                                      double span, double min_gap) {
  if (M == 0) throw InvalidArgument("gauss_tsys_monte_carlo: M must be >= 1");
  if (!(span > 0.0) || !(min_gap > 0.0) || !std::isfinite(span) ||
      span < min_gap * static_cast<double>(M)) {
    throw InvalidArgument("gauss_tsys_monte_carlo: span too small for the requested spacing");
  }
  TsysMonteCarlo out;
  out.M = M;
  out.draws = draws;
  out.min_relative = std::numeric_limits<double>::infinity();
  out.min_abs = std::numeric_limits<double>::infinity();
  bool constant = true;
  for (std::size_t k = 0; k < draws; ++k) {
    Rng rng = Rng::substream(seed, k);
    const std::vector<double> s = spaced_points(rng, 2 * M + 1, -span, span, min_gap);
    const std::vector<double> t = spaced_points(rng, M, -0.5 * span, 0.5 * span, min_gap);
    const auto a = gauss_tsys_matrix(s, t);
    double frob = 0.0;
    for (const auto& row : a) {
      for (double v : row) frob += v * v;
    }
    frob = std::sqrt(frob);
    const double det = gauss_tsys_det(s, t);
    const int sg = det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
    if (out.sign == 0) out.sign = sg;
    if (sg == 0 || sg != out.sign) constant = false;
    out.min_abs = std::min(out.min_abs, std::abs(det));
    out.min_relative = std::min(out.min_relative, std::abs(det) / frob);
  }
  out.sign_constant = constant && out.sign != 0;
  out.nonzero = draws > 0 && out.min_relative > 1e-12;
  return out;
}

}  // namespace superres
