#include "superres/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace superres {

namespace {

constexpr double kGolden = 0.6180339887498949;

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Coarse LMO grid with psi(s_i, g) cached for every grid point g.
class LmoGrid {
 public:
  LmoGrid(const PSFModel& psf, const SamplingMeasure& S, const WeightFunction& w,
          const Domain& domain, std::size_t oversample)
      : domain_(domain) {
    const std::size_t target = std::max<std::size_t>(2, oversample * S.size());
    if (domain.dim() == 1) {
      axis_[0] = target;
      axis_[1] = 1;
    } else {
      const auto per_axis = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(target))));
      axis_[0] = axis_[1] = std::max<std::size_t>(2, per_axis);
    }
    const std::size_t G = axis_[0] * axis_[1];
    points_.reserve(G);
    for (std::size_t i = 0; i < axis_[0]; ++i) {
      for (std::size_t j = 0; j < axis_[1]; ++j) points_.push_back(node(i, j));
    }
    psi_.resize(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(S.size()));
    inv_w_.resize(static_cast<Eigen::Index>(G));
    const auto& pts = S.points();
    for (std::size_t g = 0; g < G; ++g) {
      const auto gi = static_cast<Eigen::Index>(g);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        psi_(gi, static_cast<Eigen::Index>(k)) = psf.eval(pts[k], points_[g]);
      }
      inv_w_(gi) = 1.0 / w.value(points_[g]);
    }
  }

  double step(int axis) const {
    const std::size_t m = axis_[static_cast<std::size_t>(axis)];
    return domain_.width(axis) / static_cast<double>(m - 1);
  }

  Point node(std::size_t i, std::size_t j) const {
    const double x = i + 1 == axis_[0] ? domain_.hi(0) : domain_.lo(0) + step(0) * static_cast<double>(i);
    if (domain_.dim() == 1) return Point(x);
    const double y = j + 1 == axis_[1] ? domain_.hi(1) : domain_.lo(1) + step(1) * static_cast<double>(j);
    return {x, y};
  }

  // Returns (index, score) of the smallest grid score; lowest index wins ties.
  std::pair<std::size_t, double> scan(std::span<const double> r) const {
    const Eigen::Map<const VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
    const VectorXd scores = (psi_ * rv).cwiseProduct(inv_w_);
    std::size_t best = 0;
    double best_score = scores(0);
    for (Eigen::Index g = 1; g < scores.size(); ++g) {
      if (scores(g) < best_score) {
        best_score = scores(g);
        best = static_cast<std::size_t>(g);
      }
    }
    return {best, best_score};
  }

  double min_step() const {
    return domain_.dim() == 1 ? step(0) : std::min(step(0), step(1));
  }

  std::size_t axis_size(int axis) const { return axis_[static_cast<std::size_t>(axis)]; }
  const std::vector<Point>& points() const { return points_; }

 private:
  Domain domain_;
  std::array<std::size_t, 2> axis_{1, 1};
  std::vector<Point> points_;
  MatrixXd psi_;
  VectorXd inv_w_;
};

template <typename F>
std::pair<double, double> golden_section(F&& f, double a, double b, double tol) {
  double c = b - kGolden * (b - a);
  double d = a + kGolden * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kGolden * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kGolden * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? std::pair{c, fc} : std::pair{d, fd};
}

LmoResult lmo_with_grid(const LmoGrid& grid, std::span<const double> r, const PSFModel& psf,
                        const SamplingMeasure& S, const WeightFunction& w, const Domain& domain,
                        const SolverOptions& opts) {
  const auto [index, grid_score] = grid.scan(r);
  Point best = grid.points()[index];
  double best_score = grid_score;
  auto score_at = [&](Point t) { return lmo_score(r, psf, S, w, t); };
  const double tol = opts.refine_tol * domain.extent();

  if (domain.dim() == 1) {
    const double h = grid.step(0);
    const double a = std::max(domain.lo(0), best.x - h);
    const double b = std::min(domain.hi(0), best.x + h);
    const auto [t, s] = golden_section([&](double x) { return score_at(Point(x)); }, a, b, tol);
    if (s < best_score) {
      best = Point(t);
      best_score = s;
    }
    return {best, best_score};
  }

  Point cur = best;
  double cur_score = best_score;
  for (int round = 0; round < 5; ++round) {
    for (int axis = 0; axis < 2; ++axis) {
      const double h = grid.step(axis);
      const double a = std::max(domain.lo(axis), best[axis] - h);
      const double b = std::min(domain.hi(axis), best[axis] + h);
      const auto [t, s] = golden_section(
          [&](double v) {
            Point p = cur;
            p[axis] = v;
            return score_at(p);
          },
          a, b, tol);
      if (s < cur_score) {
        cur[axis] = t;
        cur_score = s;
      }
    }
  }
  if (cur_score < best_score) return {cur, cur_score};
  return {best, best_score};
}

// ---------------------------------------------------------------------------
// Fully-corrective mass update

struct QuadraticModel {
  MatrixXd H;   // 2 B^T B in the u = w .* c variables
  VectorXd g0;  // -2 B^T x
  double xx = 0.0;

  double value(const VectorXd& u) const { return 0.5 * u.dot(H * u) + g0.dot(u) + xx; }
  VectorXd gradient(const VectorXd& u) const { return H * u + g0; }
};

VectorXd project(const VectorXd& u, double tau) {
  VectorXd out = u;
  project_capped_simplex(std::span<double>(out.data(), static_cast<std::size_t>(out.size())), tau);
  return out;
}

double kkt_residual(const QuadraticModel& q, const VectorXd& u, double tau) {
  const VectorXd g = q.gradient(u);
  return (u - project(u - g, tau)).cwiseAbs().maxCoeff();
}

// Exact minimizer on the support of u, with or without the budget active.
// Returns false when the candidate is not a KKT point of the full problem.
bool polish_support(const QuadraticModel& q, const VectorXd& u, double tau, VectorXd& out) {
  const Eigen::Index K = u.size();
  std::vector<Eigen::Index> support;
  for (Eigen::Index k = 0; k < K; ++k) {
    if (u(k) > 0.0) support.push_back(k);
  }
  if (support.empty()) return false;
  const auto m = static_cast<Eigen::Index>(support.size());
  MatrixXd Hs(m, m);
  VectorXd gs(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    gs(a) = q.g0(support[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < m; ++b) {
      Hs(a, b) = q.H(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]);
    }
  }
  auto try_candidate = [&](const VectorXd& us) {
    if ((us.array() <= 0.0).any() || !us.allFinite()) return false;
    VectorXd cand = VectorXd::Zero(K);
    for (Eigen::Index a = 0; a < m; ++a) cand(support[static_cast<std::size_t>(a)]) = us(a);
    if (cand.sum() > tau) {
      cand = project(cand, tau);
    }
    out = cand;
    return true;
  };

  const double budget_used = u.sum();
  if (budget_used < tau * (1.0 - 1e-12)) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Hs);
    if (qr.rank() == m) {
      const VectorXd us = qr.solve(-gs);
      if (us.sum() <= tau && try_candidate(us)) return true;
    }
  }
  MatrixXd A = MatrixXd::Zero(m + 1, m + 1);
  A.topLeftCorner(m, m) = Hs;
  A.block(0, m, m, 1).setOnes();
  A.block(m, 0, 1, m).setOnes();
  VectorXd rhs(m + 1);
  rhs.head(m) = -gs;
  rhs(m) = tau;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
  if (qr.rank() < m + 1) return false;
  const VectorXd sol = qr.solve(rhs);
  if (sol(m) < 0.0) return false;
  return try_candidate(sol.head(m));
}

// ---------------------------------------------------------------------------
// Joint refinement helpers

double norm_sq(const std::vector<double>& x) {
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

double merge_slack(double before, const ObservationSet& obs) {
  return before * 1e-9 + 1e-24 * (1.0 + norm_sq(obs.values));
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<Point> AtomicMeasure::locations() const {
  std::vector<Point> out;
  out.reserve(atoms.size());
  for (const Atom& a : atoms) out.push_back(a.location);
  return out;
}

std::vector<double> AtomicMeasure::masses() const {
  std::vector<double> out;
  out.reserve(atoms.size());
  for (const Atom& a : atoms) out.push_back(a.mass);
  return out;
}

double AtomicMeasure::weighted_mass(const WeightFunction& w) const {
  double acc = 0.0;
  for (const Atom& a : atoms) acc += w.value(a.location) * a.mass;
  return acc;
}

AtomicMeasure AtomicMeasure::sorted() const {
  AtomicMeasure out = *this;
  std::stable_sort(out.atoms.begin(), out.atoms.end(),
                   [](const Atom& a, const Atom& b) { return a.location < b.location; });
  return out;
}

void SolverOptions::validate() const {
  if (!std::isfinite(tau) || tau < 0.0) throw InvalidArgument("SolverOptions: tau must be >= 0");
  if (grid_oversample == 0) throw InvalidArgument("SolverOptions: grid_oversample must be >= 1");
  if (max_iters == 0) throw InvalidArgument("SolverOptions: max_iters must be >= 1");
  for (double v : {gap_tol, refine_tol, merge_tol, prune_tol}) {
    if (!std::isfinite(v) || v <= 0.0) throw InvalidArgument("SolverOptions: tolerances must be > 0");
  }
}

std::vector<double> forward(const AtomicMeasure& measure, const SamplingMeasure& S,
                            const PSFModel& psf) {
  const auto& pts = S.points();
  std::vector<double> model(pts.size(), 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double acc = 0.0;
    for (const Atom& a : measure.atoms) acc += a.mass * psf.eval(pts[i], a.location);
    model[i] = acc;
  }
  return model;
}

double objective(const AtomicMeasure& measure, const ObservationSet& obs, const PSFModel& psf) {
  const std::vector<double> model = forward(measure, obs.sampling, psf);
  double acc = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double e = model[i] - obs.values[i];
    acc += e * e;
  }
  return acc;
}

std::vector<double> residual_gradient(const AtomicMeasure& measure, const ObservationSet& obs,
                                      const PSFModel& psf) {
  std::vector<double> r = forward(measure, obs.sampling, psf);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 2.0 * (r[i] - obs.values[i]);
  return r;
}

double lmo_score(std::span<const double> r, const PSFModel& psf, const SamplingMeasure& S,
                 const WeightFunction& w, Point t) {
  const auto& pts = S.points();
  double acc = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) acc += r[i] * psf.eval(pts[i], t);
  return acc / w.value(t);
}

LmoResult lmo(std::span<const double> r, const PSFModel& psf, const SamplingMeasure& S,
              const WeightFunction& w, const Domain& domain, const SolverOptions& opts) {
  if (r.size() != S.size()) throw InvalidArgument("lmo: residual length differs from sample count");
  const LmoGrid grid(psf, S, w, domain, opts.grid_oversample);
  return lmo_with_grid(grid, r, psf, S, w, domain, opts);
}

void project_capped_simplex(std::span<double> u, double tau) {
  double positive_sum = 0.0;
  for (double& v : u) {
    if (v < 0.0) v = 0.0;
    positive_sum += v;
  }
  if (positive_sum <= tau) return;
  // Project onto the face sum u = tau: find theta with sum max(u - theta, 0) = tau.
  std::vector<double> sorted(u.begin(), u.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - tau) / static_cast<double>(k + 1);
    if (k + 1 == sorted.size() || sorted[k + 1] <= candidate) {
      theta = candidate;
      break;
    }
  }
  for (double& v : u) v = std::max(v - theta, 0.0);
}

std::vector<double> fully_corrective(std::span<const Point> locations, const ObservationSet& obs,
                                     const PSFModel& psf, const WeightFunction& w, double tau,
                                     std::span<const double> warm_start) {
  const std::size_t K = locations.size();
  {
    std::vector<Point> sorted(locations.begin(), locations.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument("fully_corrective: duplicate atom locations");
    }
  }
  if (!warm_start.empty() && warm_start.size() != K) {
    throw InvalidArgument("fully_corrective: warm start has wrong length");
  }
  if (K == 0 || tau <= 0.0) return std::vector<double>(K, 0.0);

  const auto& pts = obs.sampling.points();
  const auto n = static_cast<Eigen::Index>(pts.size());
  const auto Ki = static_cast<Eigen::Index>(K);
  VectorXd wk(Ki);
  for (std::size_t k = 0; k < K; ++k) {
    wk(static_cast<Eigen::Index>(k)) = w.value(locations[k]);
    if (!(wk(static_cast<Eigen::Index>(k)) > 0.0)) {
      throw InvalidArgument("fully_corrective: weight must be positive at every atom");
    }
  }
  MatrixXd B(n, Ki);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < Ki; ++k) {
      B(i, k) = psf.eval(pts[static_cast<std::size_t>(i)], locations[static_cast<std::size_t>(k)]) / wk(k);
    }
  }
  const Eigen::Map<const VectorXd> x(obs.values.data(), n);
  QuadraticModel q{2.0 * B.transpose() * B, -2.0 * B.transpose() * x, x.squaredNorm()};

  VectorXd u0 = VectorXd::Zero(Ki);
  if (!warm_start.empty()) {
    for (Eigen::Index k = 0; k < Ki; ++k) u0(k) = warm_start[static_cast<std::size_t>(k)] * wk(k);
    u0 = project(u0, tau);
  }

  const double L = std::max(Eigen::SelfAdjointEigenSolver<MatrixXd>(q.H, Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .maxCoeff(),
                            std::numeric_limits<double>::min());
  constexpr double kKktTol = 1e-9;
  constexpr int kMaxIter = 2000;

  // Accelerated projected gradient with gradient-based restart.
  VectorXd u = u0;
  VectorXd y = u0;
  double momentum = 1.0;
  for (int it = 0; it < kMaxIter; ++it) {
    const VectorXd g = q.gradient(y);
    const VectorXd next = project(y - g / L, tau);
    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    if ((y - next).dot(next - u) > 0.0) {
      y = next;
      momentum = 1.0;
    } else {
      y = next + ((momentum - 1.0) / next_momentum) * (next - u);
      momentum = next_momentum;
    }
    u = next;
    if (it % 16 == 15 && kkt_residual(q, u, tau) <= kKktTol) break;
  }

  VectorXd best = u;
  double best_value = q.value(u);
  VectorXd polished;
  if (polish_support(q, u, tau, polished)) {
    const double pv = q.value(polished);
    if (pv <= best_value || kkt_residual(q, polished, tau) < kkt_residual(q, best, tau)) {
      if (pv <= best_value * (1.0 + 1e-14) + 1e-300) {
        best = polished;
        best_value = pv;
      }
    }
  }
  if (q.value(u0) < best_value) best = u0;

  std::vector<double> c(K);
  for (std::size_t k = 0; k < K; ++k) {
    c[k] = best(static_cast<Eigen::Index>(k)) / wk(static_cast<Eigen::Index>(k));
  }
  return c;
}

AtomicMeasure merge_close_atoms(const AtomicMeasure& measure, double radius) {
  AtomicMeasure in = measure.sorted();
  AtomicMeasure out;
  std::vector<bool> used(in.size(), false);
  for (std::size_t a = 0; a < in.size(); ++a) {
    if (used[a]) continue;
    double mass = in.atoms[a].mass;
    Point weighted = mass * in.atoms[a].location;
    Point plain = in.atoms[a].location;
    std::size_t members = 1;
    for (std::size_t b = a + 1; b < in.size(); ++b) {
      if (used[b] || distance(in.atoms[a].location, in.atoms[b].location) >= radius) continue;
      used[b] = true;
      mass += in.atoms[b].mass;
      weighted = weighted + in.atoms[b].mass * in.atoms[b].location;
      plain = plain + in.atoms[b].location;
      ++members;
    }
    Point loc = members == 1 ? in.atoms[a].location
                : mass > 0.0 ? (1.0 / mass) * weighted
                             : (1.0 / static_cast<double>(members)) * plain;
    out.atoms.push_back({loc, mass});
  }
  return out;
}

AtomicMeasure local_refine(const AtomicMeasure& measure, const ObservationSet& obs,
                           const PSFModel& psf, const Domain& domain, const SolverOptions& opts,
                           const WeightFunction* w) {
  const std::size_t K = measure.size();
  if (K == 0) return measure;
  const int dim = domain.dim();
  const auto& pts = obs.sampling.points();
  const auto n = static_cast<Eigen::Index>(pts.size());
  const auto Ki = static_cast<Eigen::Index>(K);
  const auto P = static_cast<Eigen::Index>(K * static_cast<std::size_t>(1 + dim));
  const bool budgeted = w != nullptr;
  const double tau = opts.tau;

  // Work in u_k = w(t_k) c_k so that the budget sum u <= tau does not move
  // with the locations.
  auto weight_at = [&](Point t) { return budgeted ? w->value(t) : 1.0; };
  auto loss = [&](const std::vector<Point>& t, const VectorXd& u) {
    std::vector<double> scale(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) scale[k] = u(static_cast<Eigen::Index>(k)) / weight_at(t[k]);
    double acc = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double m = 0.0;
      for (std::size_t k = 0; k < t.size(); ++k) m += scale[k] * psf.eval(pts[i], t[k]);
      const double e = m - obs.values[i];
      acc += e * e;
    }
    return acc;
  };
  auto feasible = [&](VectorXd& u) {
    if (budgeted) {
      project_capped_simplex(std::span<double>(u.data(), static_cast<std::size_t>(u.size())), tau);
    } else {
      u = u.cwiseMax(0.0);
    }
  };

  const std::vector<Point> t_start = measure.locations();
  VectorXd u_start(Ki);
  for (std::size_t k = 0; k < K; ++k) {
    u_start(static_cast<Eigen::Index>(k)) = std::max(0.0, measure.atoms[k].mass) * weight_at(t_start[k]);
  }
  std::vector<Point> t = t_start;
  for (Point& p : t) p = domain.clamp(p);
  VectorXd u = u_start;
  feasible(u);
  double f = loss(t, u);
  {
    VectorXd u0 = u_start;
    feasible(u0);
    const double f_start = loss(t_start, u0);
    if (f_start < f) {
      t = t_start;
      u = u0;
      f = f_start;
    }
  }

  double damping = 1e-6;
  MatrixXd J(n, P);
  VectorXd e(n);
  std::vector<double> wk(K);
  std::vector<Point> gk(K);
  for (std::size_t iter = 0; iter < opts.refine_iters && f > 0.0; ++iter) {
    for (std::size_t k = 0; k < K; ++k) {
      wk[k] = weight_at(t[k]);
      gk[k] = budgeted ? w->gradient(t[k]) : Point();
    }
    // Jacobian of the model: weighted-mass columns then location columns.
    for (Eigen::Index i = 0; i < n; ++i) {
      const Point s = pts[static_cast<std::size_t>(i)];
      double m = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        const double val = psf.eval(s, t[k]);
        const Point d = psf.deriv_t(s, t[k]);
        m += u(ki) * val / wk[k];
        J(i, ki) = val / wk[k];
        for (int a = 0; a < dim; ++a) {
          J(i, Ki + ki * dim + a) = u(ki) * (d[a] * wk[k] - val * gk[k][a]) / (wk[k] * wk[k]);
        }
      }
      e(i) = m - obs.values[static_cast<std::size_t>(i)];
    }
    const MatrixXd JtJ = J.transpose() * J;
    const VectorXd grad = J.transpose() * e;
    if (grad.cwiseAbs().maxCoeff() == 0.0) break;
    const VectorXd diag = JtJ.diagonal();
    const double ridge = 1e-14 * std::max(diag.maxCoeff(), std::numeric_limits<double>::min());
    const double used = u.sum();

    // Coordinates pinned at a bound with descent pointing outward stay put;
    // otherwise the clamped step need not be a descent direction.
    std::vector<bool> pinned(static_cast<std::size_t>(P), false);
    for (std::size_t k = 0; k < K; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      pinned[k] = u(ki) <= 0.0 && grad(ki) > 0.0;
      for (int a = 0; a < dim; ++a) {
        const Eigen::Index j = Ki + ki * dim + a;
        pinned[static_cast<std::size_t>(j)] = (t[k][a] <= domain.lo(a) && grad(j) > 0.0) ||
                                              (t[k][a] >= domain.hi(a) && grad(j) < 0.0);
      }
    }
    auto pin = [&](MatrixXd& A, VectorXd& rhs) {
      for (Eigen::Index j = 0; j < P; ++j) {
        if (!pinned[static_cast<std::size_t>(j)]) continue;
        A.row(j).setZero();
        A.col(j).setZero();
        A(j, j) = 1.0;
        rhs(j) = 0.0;
      }
    };

    bool accepted = false;
    bool stationary = false;
    for (int attempt = 0; attempt < 6 && !accepted && !stationary; ++attempt) {
      MatrixXd A = JtJ;
      A.diagonal() += damping * diag + VectorXd::Constant(P, ridge);
      VectorXd neg_grad = -grad;
      pin(A, neg_grad);
      VectorXd step = A.ldlt().solve(neg_grad);
      if (budgeted && used + step.head(Ki).sum() > tau) {
        // Keep the total weighted mass on the budget face.
        MatrixXd Ak = MatrixXd::Zero(P + 1, P + 1);
        Ak.topLeftCorner(P, P) = A;
        for (Eigen::Index k = 0; k < Ki; ++k) {
          if (pinned[static_cast<std::size_t>(k)]) continue;
          Ak(k, P) = 1.0;
          Ak(P, k) = 1.0;
        }
        VectorXd rhs(P + 1);
        rhs.head(P) = neg_grad;
        rhs(P) = std::max(0.0, tau - used);
        if (Ak.row(P).head(Ki).sum() == 0.0) {
          Ak(P, P) = 1.0;
          rhs(P) = 0.0;
        }
        step = Ak.partialPivLu().solve(rhs).head(P);
      }
      if (!step.allFinite()) {
        damping *= 10.0;
        continue;
      }
      // Decrease promised by the Gauss-Newton model; below rounding level
      // of the loss there is nothing left to gain.
      const double predicted = -grad.dot(step) - 0.5 * step.dot(JtJ * step);
      if (predicted <= 1e-13 * f) {
        stationary = true;
        break;
      }
      double alpha = 1.0;
      for (int ls = 0; ls < 12; ++ls, alpha *= 0.5) {
        std::vector<Point> t_new = t;
        VectorXd u_new = u + alpha * step.head(Ki);
        feasible(u_new);
        for (std::size_t k = 0; k < K; ++k) {
          const auto ki = static_cast<Eigen::Index>(k);
          Point p = t[k];
          for (int a = 0; a < dim; ++a) p[a] += alpha * step(Ki + ki * dim + a);
          t_new[k] = domain.clamp(p);
        }
        const double f_new = loss(t_new, u_new);
        if (f_new < f) {
          const double decrease = f - f_new;
          t = std::move(t_new);
          u = std::move(u_new);
          f = f_new;
          accepted = true;
          damping = ls == 0 ? std::max(damping * 0.1, 1e-12) : std::min(damping * 10.0, 1e6);
          if (decrease <= 1e-13 * f) iter = opts.refine_iters;
          break;
        }
      }
      if (!accepted) damping *= 100.0;
    }
    if (!accepted) break;
  }

  AtomicMeasure refined;
  for (std::size_t k = 0; k < K; ++k) {
    refined.atoms.push_back({t[k], u(static_cast<Eigen::Index>(k)) / weight_at(t[k])});
  }

  const double radius = opts.merge_tol * domain.extent();
  AtomicMeasure merged = merge_close_atoms(refined, radius);
  if (merged.size() < refined.size()) {
    std::vector<Point> mt = merged.locations();
    VectorXd mu(static_cast<Eigen::Index>(merged.size()));
    for (std::size_t k = 0; k < merged.size(); ++k) {
      mu(static_cast<Eigen::Index>(k)) = merged.atoms[k].mass * weight_at(mt[k]);
    }
    feasible(mu);
    for (std::size_t k = 0; k < merged.size(); ++k) {
      merged.atoms[k].mass = mu(static_cast<Eigen::Index>(k)) / weight_at(mt[k]);
    }
    if (loss(mt, mu) <= f + merge_slack(f, obs)) return merged.sorted();
  }
  return refined.sorted();
}

namespace {

struct GapParts {
  double gap = 0.0;
  LmoResult lmo;
};

GapParts gap_with_grid(const LmoGrid& grid, const AtomicMeasure& measure, const ObservationSet& obs,
                       const PSFModel& psf, const WeightFunction& w, const Domain& domain,
                       const SolverOptions& opts) {
  const std::vector<double> r = residual_gradient(measure, obs, psf);
  GapParts out{0.0, lmo_with_grid(grid, r, psf, obs.sampling, w, domain, opts)};
  double s_star = out.lmo.score;
  std::vector<double> atom_scores;
  for (const Atom& a : measure.atoms) {
    const double s = lmo_score(r, psf, obs.sampling, w, a.location);
    atom_scores.push_back(s);
    if (s < s_star) {
      s_star = s;
      out.lmo = {a.location, s};
    }
  }
  // <r, model> - min(0, tau s*), regrouped into terms that are each >= 0 for
  // a feasible measure.
  double used = 0.0;
  double spread = 0.0;
  for (std::size_t k = 0; k < measure.size(); ++k) {
    const double wc = w.value(measure.atoms[k].location) * measure.atoms[k].mass;
    used += wc;
    spread += wc * (atom_scores[k] - s_star);
  }
  out.gap = s_star < 0.0 ? spread + (opts.tau - used) * (-s_star) : spread + used * s_star;
  return out;
}

AtomicMeasure with_masses(const std::vector<Point>& locs, const std::vector<double>& masses) {
  AtomicMeasure m;
  for (std::size_t k = 0; k < locs.size(); ++k) m.atoms.push_back({locs[k], masses[k]});
  return m;
}

AtomicMeasure prune(const AtomicMeasure& measure, double rel_tol) {
  double max_mass = 0.0;
  for (const Atom& a : measure.atoms) max_mass = std::max(max_mass, a.mass);
  AtomicMeasure out;
  for (const Atom& a : measure.atoms) {
    if (a.mass > 0.0 && a.mass >= rel_tol * max_mass) out.atoms.push_back(a);
  }
  return out;
}

}  // namespace

double duality_gap(const AtomicMeasure& measure, const ObservationSet& obs, const PSFModel& psf,
                   const WeightFunction& w, const Domain& domain, const SolverOptions& opts) {
  const LmoGrid grid(psf, obs.sampling, w, domain, opts.grid_oversample);
  return gap_with_grid(grid, measure, obs, psf, w, domain, opts).gap;
}

SolveResult solve(const ObservationSet& obs, const PSFModel& psf, const WeightFunction& w,
                  const Domain& domain, const SolverOptions& opts) {
  opts.validate();
  if (obs.values.size() != obs.sampling.size()) {
    throw InvalidArgument("solve: observation values and sampling differ in length");
  }
  if (psf.dim() != domain.dim() || obs.sampling.dim() != domain.dim()) {
    throw InvalidArgument("solve: PSF, sampling and domain dimensions differ");
  }
  const LmoGrid grid(psf, obs.sampling, w, domain, opts.grid_oversample);
  const double merge_radius = opts.merge_tol * domain.extent();
  const double cluster_radius = std::max(merge_radius, grid.min_step());

  SolveResult result;
  AtomicMeasure measure;
  double current = objective(measure, obs, psf);
  std::size_t stalls = 0;

  for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
    const GapParts parts = gap_with_grid(grid, measure, obs, psf, w, domain, opts);
    result.gap_trace.push_back(parts.gap);
    result.final_gap = parts.gap;
    if (parts.gap <= opts.gap_tol * (1.0 + current)) {
      result.converged = true;
      break;
    }
    result.iterations = iter + 1;

    AtomicMeasure candidate = measure;
    if (parts.lmo.score < 0.0) {
      const bool near_existing =
          std::any_of(candidate.atoms.begin(), candidate.atoms.end(),
                      [&](const Atom& a) { return distance(a.location, parts.lmo.location) < merge_radius; });
      if (!near_existing) candidate.atoms.push_back({parts.lmo.location, 0.0});
    }
    if (!candidate.empty()) {
      const auto locs = candidate.locations();
      const auto masses = fully_corrective(locs, obs, psf, w, opts.tau, candidate.masses());
      candidate = with_masses(locs, masses);
      candidate = local_refine(candidate, obs, psf, domain, opts, &w);
    }
    double cand_value = objective(candidate, obs, psf);
    if (!candidate.empty()) {
      // Masses that are exactly optimal for the refined locations.
      const auto locs = candidate.locations();
      AtomicMeasure resolved = with_masses(locs, fully_corrective(locs, obs, psf, w, opts.tau, candidate.masses()));
      const double resolved_value = objective(resolved, obs, psf);
      if (resolved_value <= cand_value) {
        candidate = std::move(resolved);
        cand_value = resolved_value;
      }
    }

    // Near-coincident atoms have almost collinear columns, so refinement can
    // neither separate nor join them. Offer the merged support instead.
    AtomicMeasure clustered = merge_close_atoms(candidate, cluster_radius);
    if (clustered.size() < candidate.size()) {
      const auto locs = clustered.locations();
      clustered = with_masses(locs, fully_corrective(locs, obs, psf, w, opts.tau, clustered.masses()));
      clustered = local_refine(clustered, obs, psf, domain, opts, &w);
      const double clustered_value = objective(clustered, obs, psf);
      if (clustered_value <= current && clustered_value <= cand_value + merge_slack(cand_value, obs)) {
        candidate = std::move(clustered);
        cand_value = clustered_value;
      }
    }

    AtomicMeasure pruned = prune(candidate, opts.prune_tol);
    if (pruned.size() < candidate.size()) {
      if (!pruned.empty()) {
        const auto locs = pruned.locations();
        pruned = with_masses(locs, fully_corrective(locs, obs, psf, w, opts.tau, pruned.masses()));
      }
      const double pruned_value = objective(pruned, obs, psf);
      if (pruned_value <= current) {
        candidate = std::move(pruned);
        cand_value = pruned_value;
      }
    }

    if (cand_value <= current) {
      const bool progressed = cand_value < current * (1.0 - 1e-14) || candidate.size() != measure.size();
      measure = std::move(candidate);
      current = cand_value;
      stalls = progressed ? 0 : stalls + 1;
    } else {
      ++stalls;
    }
    result.objective_trace.push_back(current);
    if (stalls >= 5) break;
  }
  if (!result.converged) {
    const GapParts parts = gap_with_grid(grid, measure, obs, psf, w, domain, opts);
    result.final_gap = parts.gap;
    result.gap_trace.push_back(parts.gap);
    result.converged = parts.gap <= opts.gap_tol * (1.0 + current);
  }
  result.measure = measure.sorted();
  return result;
}

}  // namespace superres
