#include "superres/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace superres {

double squared_distance(Point a, Point b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

double distance(Point a, Point b) { return std::sqrt(squared_distance(a, b)); }

bool is_finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

// ---------------------------------------------------------------------------

Domain::Domain(int dim, std::array<double, 2> lo, std::array<double, 2> hi)
    : dim_(dim), lo_(lo), hi_(hi) {
  for (int a = 0; a < dim_; ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (!std::isfinite(lo_[i]) || !std::isfinite(hi_[i]) || !(lo_[i] < hi_[i])) {
      throw InvalidArgument("Domain: bounds must be finite with lo < hi");
    }
  }
}

Domain Domain::interval(double lo, double hi) { return Domain(1, {lo, 0.0}, {hi, 0.0}); }

Domain Domain::box(double xlo, double xhi, double ylo, double yhi) {
  return Domain(2, {xlo, ylo}, {xhi, yhi});
}

double Domain::extent() const {
  return dim_ == 1 ? width(0) : std::max(width(0), width(1));
}

bool Domain::contains(Point p) const {
  for (int a = 0; a < dim_; ++a) {
    if (p[a] < lo(a) || p[a] > hi(a)) return false;
  }
  return true;
}

Point Domain::clamp(Point p) const {
  Point q = p;
  for (int a = 0; a < dim_; ++a) q[a] = std::clamp(p[a], lo(a), hi(a));
  if (dim_ == 1) q.y = 0.0;
  return q;
}

Point Domain::mirror(Point p) const {
  Point q = p;
  for (int a = 0; a < dim_; ++a) q[a] = lo(a) + hi(a) - p[a];
  return q;
}

// ---------------------------------------------------------------------------

SamplingMeasure::SamplingMeasure(std::vector<Point> points, std::vector<double> weights, int dim)
    : points_(std::move(points)), weights_(std::move(weights)), dim_(dim) {
  if (dim_ != 1 && dim_ != 2) throw InvalidArgument("SamplingMeasure: dim must be 1 or 2");
  if (points_.empty()) throw InvalidArgument("SamplingMeasure: at least one point required");
  if (points_.size() != weights_.size()) {
    throw InvalidArgument("SamplingMeasure: points and weights differ in length");
  }
  for (double p : weights_) {
    if (!std::isfinite(p) || p <= 0.0) {
      throw InvalidArgument("SamplingMeasure: weights must be finite and strictly positive");
    }
  }
  for (Point& s : points_) {
    if (!is_finite(s)) throw InvalidArgument("SamplingMeasure: non-finite sample location");
    if (dim_ == 1) s.y = 0.0;
  }
  std::vector<Point> sorted = points_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("SamplingMeasure: sample locations must be pairwise distinct");
  }
  counting_ = std::all_of(weights_.begin(), weights_.end(), [](double p) { return p == 1.0; });
}

SamplingMeasure SamplingMeasure::counting(std::vector<Point> points, int dim) {
  std::vector<double> ones(points.size(), 1.0);
  return SamplingMeasure(std::move(points), std::move(ones), dim);
}

SamplingMeasure SamplingMeasure::uniform_grid(const Domain& domain, std::size_t n) {
  if (domain.dim() != 1) throw InvalidArgument("uniform_grid: 1D domain required");
  if (n == 0) throw InvalidArgument("uniform_grid: n must be positive");
  std::vector<Point> pts(n);
  if (n == 1) {
    pts[0] = Point(0.5 * (domain.lo(0) + domain.hi(0)));
  } else {
    const double h = domain.width(0) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) pts[i] = Point(domain.lo(0) + h * static_cast<double>(i));
    pts[n - 1] = Point(domain.hi(0));
  }
  return counting(std::move(pts), 1);
}

SamplingMeasure SamplingMeasure::pixel_grid(const Domain& domain, std::size_t npix) {
  if (domain.dim() != 2) throw InvalidArgument("pixel_grid: 2D domain required");
  if (npix == 0) throw InvalidArgument("pixel_grid: npix must be positive");
  const double hx = domain.width(0) / static_cast<double>(npix);
  const double hy = domain.width(1) / static_cast<double>(npix);
  std::vector<Point> pts;
  pts.reserve(npix * npix);
  for (std::size_t i = 0; i < npix; ++i) {
    for (std::size_t j = 0; j < npix; ++j) {
      pts.emplace_back(domain.lo(0) + hx * (static_cast<double>(i) + 0.5),
                       domain.lo(1) + hy * (static_cast<double>(j) + 0.5));
    }
  }
  return counting(std::move(pts), 2);
}

// ---------------------------------------------------------------------------

GaussianPSF::GaussianPSF(double sigma, int dim) : sigma_(sigma), dim_(dim) {
  if (!std::isfinite(sigma) || sigma <= 0.0) throw InvalidArgument("GaussianPSF: sigma must be > 0");
  if (dim != 1 && dim != 2) throw InvalidArgument("GaussianPSF: dim must be 1 or 2");
  inv_sigma2_ = 1.0 / (sigma * sigma);
}

double GaussianPSF::eval(Point s, Point t) const {
  double r2 = (s.x - t.x) * (s.x - t.x);
  if (dim_ == 2) r2 += (s.y - t.y) * (s.y - t.y);
  return std::exp(-r2 * inv_sigma2_);
}

Point GaussianPSF::deriv_t(Point s, Point t) const {
  const double k = 2.0 * inv_sigma2_ * eval(s, t);
  if (dim_ == 1) return Point(k * (s.x - t.x));
  return {k * (s.x - t.x), k * (s.y - t.y)};
}

double psf_eval(const PSFModel& psf, Point s, Point t) {
  if (!is_finite(s) || !is_finite(t)) throw InvalidArgument("psf_eval: non-finite location");
  return psf.eval(s, t);
}

Point psf_deriv_t(const PSFModel& psf, Point s, Point t) {
  if (!is_finite(s) || !is_finite(t)) throw InvalidArgument("psf_deriv_t: non-finite location");
  return psf.deriv_t(s, t);
}

double weight(const PSFModel& psf, const SamplingMeasure& P, Point t) {
  if (!is_finite(t)) throw InvalidArgument("weight: non-finite location");
  const auto& pts = P.points();
  const auto& ws = P.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) acc += ws[i] * psf.eval(pts[i], t);
  return acc;
}

Point weight_deriv(const PSFModel& psf, const SamplingMeasure& P, Point t) {
  if (!is_finite(t)) throw InvalidArgument("weight_deriv: non-finite location");
  const auto& pts = P.points();
  const auto& ws = P.weights();
  Point acc;
  for (std::size_t i = 0; i < pts.size(); ++i) acc = acc + ws[i] * psf.deriv_t(pts[i], t);
  return acc;
}

// ---------------------------------------------------------------------------

WeightFunction WeightFunction::from_sampling(std::shared_ptr<const PSFModel> psf,
                                             SamplingMeasure P) {
  if (!psf) throw InvalidArgument("WeightFunction: null PSF");
  WeightFunction w;
  w.psf_ = std::move(psf);
  w.sampling_ = std::make_shared<const SamplingMeasure>(std::move(P));
  return w;
}

WeightFunction WeightFunction::unit() { return WeightFunction(); }

double WeightFunction::value(Point t) const {
  return psf_ ? weight(*psf_, *sampling_, t) : 1.0;
}

Point WeightFunction::gradient(Point t) const {
  return psf_ ? weight_deriv(*psf_, *sampling_, t) : Point();
}

// ---------------------------------------------------------------------------

SourceConfiguration::SourceConfiguration(std::vector<Point> locations,
                                         std::vector<double> amplitudes) {
  if (locations.size() != amplitudes.size()) {
    throw InvalidArgument("SourceConfiguration: locations and amplitudes differ in length");
  }
  for (std::size_t i = 0; i < locations.size(); ++i) {
    if (!is_finite(locations[i])) throw InvalidArgument("SourceConfiguration: non-finite location");
    if (!std::isfinite(amplitudes[i]) || amplitudes[i] <= 0.0) {
      throw InvalidArgument("SourceConfiguration: amplitudes must be strictly positive");
    }
  }
  std::vector<std::size_t> order(locations.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return locations[a] < locations[b]; });
  locations_.reserve(order.size());
  amplitudes_.reserve(order.size());
  for (std::size_t k : order) {
    if (!locations_.empty() && locations_.back() == locations[k]) {
      throw InvalidArgument("SourceConfiguration: locations must be pairwise distinct");
    }
    locations_.push_back(locations[k]);
    amplitudes_.push_back(amplitudes[k]);
  }
}

double SourceConfiguration::weighted_mass(const WeightFunction& w) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < size(); ++i) acc += w.value(locations_[i]) * amplitudes_[i];
  return acc;
}

}  // namespace superres
