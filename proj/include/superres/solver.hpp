#pragma once

// Conditional gradient solver for
//
//     minimize_{mu >= 0}  sum_i ( int psi(s_i, t) dmu(t) - x(s_i) )^2
//     subject to          int w(t) dmu(t) <= tau
//
// over atomic measures on a compact domain. Each outer iteration adds the atom
// returned by a continuous linear minimization oracle, re-solves all masses
// over the current support, and then moves atoms and masses jointly.

#include <cstddef>
#include <span>
#include <vector>

#include "superres/core.hpp"
#include "superres/simulate.hpp"

namespace superres {

struct Atom {
  Point location;
  double mass = 0.0;
};

/// Nonnegative atomic measure sum_k c_k delta_{t_k}.
struct AtomicMeasure {
  std::vector<Atom> atoms;

  std::size_t size() const noexcept { return atoms.size(); }
  bool empty() const noexcept { return atoms.empty(); }
  std::vector<Point> locations() const;
  std::vector<double> masses() const;
  double weighted_mass(const WeightFunction& w) const;
  /// Sorted by location (lexicographic in 2D).
  AtomicMeasure sorted() const;
};

struct SolverOptions {
  /// Budget on int w dmu.
  double tau = 1.0;
  /// Coarse LMO grid has grid_oversample * (sample count) points.
  std::size_t grid_oversample = 10;
  std::size_t max_iters = 100;
  /// Stop once gap <= gap_tol * (1 + objective).
  double gap_tol = 1e-10;
  /// Golden-section bracket width, relative to the domain extent.
  double refine_tol = 1e-12;
  /// Atoms closer than merge_tol * extent are merged.
  double merge_tol = 1e-6;
  /// Atoms lighter than prune_tol * (largest mass) are dropped.
  double prune_tol = 1e-7;
  /// Iterations of joint location/mass descent per outer iteration.
  std::size_t refine_iters = 50;

  void validate() const;
};

struct SolveResult {
  AtomicMeasure measure;
  std::vector<double> objective_trace;
  std::vector<double> gap_trace;
  double final_gap = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct LmoResult {
  Point location;
  double score = 0.0;
};

/// Model prediction sum_k c_k psi(s_i, t_k) at every sample.
std::vector<double> forward(const AtomicMeasure& measure, const SamplingMeasure& S,
                            const PSFModel& psf);

/// sum_i (model_i - x_i)^2 with unit sample weights.
double objective(const AtomicMeasure& measure, const ObservationSet& obs, const PSFModel& psf);

/// r_i = 2 (model_i - x_i), the gradient of the loss in observation space.
std::vector<double> residual_gradient(const AtomicMeasure& measure, const ObservationSet& obs,
                                      const PSFModel& psf);

/// score(t) = <r, psi(., t)> / w(t)
double lmo_score(std::span<const double> r, const PSFModel& psf, const SamplingMeasure& S,
                 const WeightFunction& w, Point t);

/// argmin of score over the domain: coarse grid scan (lowest index wins ties)
/// followed by golden-section refinement inside the bracketing cell.
LmoResult lmo(std::span<const double> r, const PSFModel& psf, const SamplingMeasure& S,
              const WeightFunction& w, const Domain& domain, const SolverOptions& opts);

/// Optimal masses for fixed locations over {c >= 0, sum_k w(t_k) c_k <= tau}.
/// `warm_start` (optional) must have one entry per location.
std::vector<double> fully_corrective(std::span<const Point> locations, const ObservationSet& obs,
                                     const PSFModel& psf, const WeightFunction& w, double tau,
                                     std::span<const double> warm_start = {});

/// Euclidean projection onto {u >= 0, sum u <= tau}.
void project_capped_simplex(std::span<double> u, double tau);

/// Joint descent on (locations, masses). Never increases the objective; keeps
/// locations in the domain, masses nonnegative and, when `w` is given, the
/// weighted mass within tau. Merges atoms closer than opts.merge_tol.
AtomicMeasure local_refine(const AtomicMeasure& measure, const ObservationSet& obs,
                           const PSFModel& psf, const Domain& domain, const SolverOptions& opts,
                           const WeightFunction* w = nullptr);

/// Merges atoms within `radius` of each other (mass-weighted mean location).
AtomicMeasure merge_close_atoms(const AtomicMeasure& measure, double radius);

/// Frank-Wolfe gap <r, model> - min(0, tau * score*). The oracle value is
/// also taken over the current atom locations, so the gap is never negative
/// beyond rounding.
double duality_gap(const AtomicMeasure& measure, const ObservationSet& obs, const PSFModel& psf,
                   const WeightFunction& w, const Domain& domain, const SolverOptions& opts);

SolveResult solve(const ObservationSet& obs, const PSFModel& psf, const WeightFunction& w,
                  const Domain& domain, const SolverOptions& opts);

}  // namespace superres
