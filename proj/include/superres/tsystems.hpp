#pragma once

// Exact checks behind the Gaussian T-system argument.
//
// The zero-counting argument reduces to the polynomials
//
//     p_0 = 1,  p_i(s) = 2s p_{i-1}(s - c_i) + p'_{i-1}(s - c_i)
//
// and f_i defined by f_i(s) e^{s^2} = d^2/ds^2 [ e^{s^2} f_{i-1}(s - c_i) ],
// f_0 = 1. The identity f_i = sum_j p_i^{(j)}(s)^2 / (2^j j!) shows f_i > 0
// because its last square is the constant 2^i i!.

#include <cstddef>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace superres {

using Rational = boost::multiprecision::cpp_rational;

/// Dense univariate polynomial with exact rational coefficients, ascending degree.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<Rational> coefficients);
  static Polynomial constant(const Rational& c);
  /// The monomial s.
  static Polynomial identity();

  /// -1 for the zero polynomial.
  int degree() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
  bool is_zero() const noexcept { return coeffs_.empty(); }
  const std::vector<Rational>& coefficients() const noexcept { return coeffs_; }
  /// Coefficient of s^k (zero beyond the degree).
  Rational coefficient(std::size_t k) const;
  Rational leading() const;

  Polynomial derivative() const;
  /// p(s - c)
  Polynomial shift(const Rational& c) const;
  Rational operator()(const Rational& s) const;
  double eval(double s) const;

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator-(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator*(const Rational& k, const Polynomial& p);
  friend bool operator==(const Polynomial& a, const Polynomial& b) { return a.coeffs_ == b.coeffs_; }

  std::string to_string() const;

 private:
  void normalize();
  std::vector<Rational> coeffs_;
};

/// p_0..p_r. Uses c[0..r-1] as c_1..c_r.
std::vector<Polynomial> p_sequence(std::size_t r, const std::vector<Rational>& c);

/// e^{-s^2} d^2/ds^2 [ e^{s^2} h(s) ] = (4s^2 + 2) h + 4s h' + h''.
Polynomial gaussian_second_derivative(const Polynomial& h);

struct FOrderCheck {
  std::size_t order = 0;
  Polynomial f_recursion;      // f_i through the differential recursion
  Polynomial f_sum_of_squares; // sum_j p_i^{(j)}^2 / (2^j j!)
  Rational constant_square;    // last square, expected 2^i i!
  bool identity_holds = false;
  bool constant_square_ok = false;
  /// Index of the first differing coefficient, -1 when equal.
  int first_mismatch = -1;

  bool passed() const noexcept { return identity_holds && constant_square_ok; }
};

struct FSequenceReport {
  std::vector<FOrderCheck> orders;  // orders 0..r
  bool passed() const;
};

/// Checks the sum-of-squares identity for f_0..f_r. Requires r <= 8.
FSequenceReport f_sequence_check(std::size_t r, const std::vector<Rational>& c);

/// Like f_sequence_check but throws VerificationFailure naming the first
/// differing coefficient.
FSequenceReport f_sequence_verify(std::size_t r, const std::vector<Rational>& c);

/// Determinant by fraction-free (Bareiss) elimination with row pivoting.
/// Exact for Rational entries.
template <typename T>
T bareiss_determinant(std::vector<std::vector<T>> a);

/// The (2M+1)x(2M+1) collocation matrix with rows e^{-(s-t_i)^2},
/// -(s-t_i) e^{-(s-t_i)^2} for each t_i, then all ones; columns s_1..s_{2M+1}.
std::vector<std::vector<double>> gauss_tsys_matrix(const std::vector<double>& s,
                                                   const std::vector<double>& t);

/// Determinant of gauss_tsys_matrix for strictly increasing s and t.
double gauss_tsys_det(const std::vector<double>& s, const std::vector<double>& t);

struct TsysMonteCarlo {
  std::size_t M = 0;
  std::size_t draws = 0;
  double min_relative = 0.0;  // min |det| / ||matrix||_F
  double min_abs = 0.0;
  int sign = 0;
  bool sign_constant = false;
  /// Every |det| exceeded 1e-12 ||matrix||_F.
  bool nonzero = false;
};

/// Random ordered (s, t) draws; s in [-span, span], t in [-span/2, span/2],
/// neighbouring points at least min_gap apart. Without a floor on the spacing
/// the determinant tends to zero with the gaps (two equal columns), so no
/// fixed threshold could separate it from zero.
TsysMonteCarlo gauss_tsys_monte_carlo(std::size_t M, std::size_t draws, unsigned long long seed,
                                      double span = 2.5, double min_gap = 0.5);

}  // namespace superres
