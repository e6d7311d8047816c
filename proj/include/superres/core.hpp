#pragma once

// Shared vocabulary for the superresolution library: locations, domains,
// sampling measures, point spread functions and the weight function
//
//     w(t) = sum_i p_i psi(s_i, t)
//
// that every other module builds on.

#include <array>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace superres {

// ---------------------------------------------------------------------------
// Errors

/// A precondition on an argument was violated.
using InvalidArgument = std::invalid_argument;

/// The operation is not defined for the given input (e.g. 2D input to a 1D-only routine).
class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// One of the structural conditions (positivity, independence, ...) failed numerically.
class ConditionFailure : public std::runtime_error {
 public:
  ConditionFailure(std::string condition, const std::string& what)
      : std::runtime_error(what), condition_(std::move(condition)) {}
  const std::string& condition() const noexcept { return condition_; }

 private:
  std::string condition_;
};

/// An exact identity check produced a mismatch.
class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Locations

/// A location in one or two dimensions. 1D code uses x only; y stays 0.
struct Point {
  double x = 0.0;
  double y = 0.0;

  constexpr Point() = default;
  constexpr explicit Point(double x_) : x(x_) {}
  constexpr Point(double x_, double y_) : x(x_), y(y_) {}

  constexpr double& operator[](int axis) { return axis == 0 ? x : y; }
  constexpr double operator[](int axis) const { return axis == 0 ? x : y; }

  friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point operator*(double k, Point a) { return {k * a.x, k * a.y}; }
  friend constexpr bool operator==(Point a, Point b) { return a.x == b.x && a.y == b.y; }
  friend constexpr bool operator<(Point a, Point b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  }
};

double squared_distance(Point a, Point b);
double distance(Point a, Point b);
bool is_finite(Point p);

// ---------------------------------------------------------------------------
// Domain

/// A closed interval [lo, hi] or an axis-aligned box.
class Domain {
 public:
  static Domain interval(double lo, double hi);
  static Domain box(double xlo, double xhi, double ylo, double yhi);
  static Domain unit(int dim) { return dim == 1 ? interval(0.0, 1.0) : box(0.0, 1.0, 0.0, 1.0); }

  int dim() const noexcept { return dim_; }
  double lo(int axis) const { return lo_[static_cast<std::size_t>(axis)]; }
  double hi(int axis) const { return hi_[static_cast<std::size_t>(axis)]; }
  double width(int axis) const { return hi(axis) - lo(axis); }
  /// Largest side length; the length scale used for relative tolerances.
  double extent() const;

  bool contains(Point p) const;
  Point clamp(Point p) const;
  /// Reflection through the domain center.
  Point mirror(Point p) const;

 private:
  Domain(int dim, std::array<double, 2> lo, std::array<double, 2> hi);

  int dim_ = 1;
  std::array<double, 2> lo_{0.0, 0.0};
  std::array<double, 2> hi_{1.0, 0.0};
};

// ---------------------------------------------------------------------------
// Sampling measure P

/// Discrete positive measure on the sample locations.
class SamplingMeasure {
 public:
  SamplingMeasure(std::vector<Point> points, std::vector<double> weights, int dim = 1);

  /// Unit weights on the given points.
  static SamplingMeasure counting(std::vector<Point> points, int dim = 1);
  /// n equispaced points covering [lo, hi] including both endpoints, unit weights.
  static SamplingMeasure uniform_grid(const Domain& domain, std::size_t n);
  /// npix x npix pixel centers of a 2D box, unit weights.
  static SamplingMeasure pixel_grid(const Domain& domain, std::size_t npix);

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Point>& points() const noexcept { return points_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  bool is_counting() const noexcept { return counting_; }

 private:
  std::vector<Point> points_;
  std::vector<double> weights_;
  int dim_ = 1;
  bool counting_ = false;
};

// ---------------------------------------------------------------------------
// Point spread functions

/// psi(s, t): response at sensor location s to a unit source at t.
class PSFModel {
 public:
  virtual ~PSFModel() = default;
  virtual int dim() const noexcept = 0;
  virtual double eval(Point s, Point t) const = 0;
  /// Gradient of psi with respect to the source location t.
  virtual Point deriv_t(Point s, Point t) const = 0;
  virtual std::string name() const = 0;
};

/// psi(s, t) = exp(-|s - t|^2 / sigma^2).
class GaussianPSF final : public PSFModel {
 public:
  explicit GaussianPSF(double sigma, int dim = 1);

  int dim() const noexcept override { return dim_; }
  double sigma() const noexcept { return sigma_; }
  double eval(Point s, Point t) const override;
  Point deriv_t(Point s, Point t) const override;
  std::string name() const override { return "gaussian"; }

 private:
  double sigma_;
  double inv_sigma2_;
  int dim_;
};

/// Checked evaluation; rejects non-finite locations.
double psf_eval(const PSFModel& psf, Point s, Point t);
Point psf_deriv_t(const PSFModel& psf, Point s, Point t);

/// w(t) = sum_i p_i psi(s_i, t)
double weight(const PSFModel& psf, const SamplingMeasure& P, Point t);
/// grad_t w(t) = sum_i p_i d/dt psi(s_i, t)
Point weight_deriv(const PSFModel& psf, const SamplingMeasure& P, Point t);

/// The weight used by the solver: either w(t) induced by (psi, P) or w = 1.
class WeightFunction {
 public:
  static WeightFunction from_sampling(std::shared_ptr<const PSFModel> psf, SamplingMeasure P);
  static WeightFunction unit();

  bool is_unit() const noexcept { return psf_ == nullptr; }
  double value(Point t) const;
  Point gradient(Point t) const;

 private:
  WeightFunction() = default;
  std::shared_ptr<const PSFModel> psf_;
  std::shared_ptr<const SamplingMeasure> sampling_;
};

// ---------------------------------------------------------------------------
// Ground truth

/// The unknown measure sum_i c_i delta_{t_i}. 1D locations are kept sorted,
/// 2D locations lexicographically.
class SourceConfiguration {
 public:
  SourceConfiguration() = default;
  SourceConfiguration(std::vector<Point> locations, std::vector<double> amplitudes);

  std::size_t size() const noexcept { return locations_.size(); }
  bool empty() const noexcept { return locations_.empty(); }
  const std::vector<Point>& locations() const noexcept { return locations_; }
  const std::vector<double>& amplitudes() const noexcept { return amplitudes_; }

  /// sum_i w(t_i) c_i, the smallest budget under which the truth is feasible.
  double weighted_mass(const WeightFunction& w) const;

 private:
  std::vector<Point> locations_;
  std::vector<double> amplitudes_;
};

}  // namespace superres
