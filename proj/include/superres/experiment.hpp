#pragma once

// Experiment harness: configuration, datasets and the runners behind the
// command-line tool. Every runner is a pure function of (config, seed); the
// worker count changes only wall-clock time, never the results.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "superres/certificate.hpp"
#include "superres/core.hpp"
#include "superres/simulate.hpp"
#include "superres/solver.hpp"

namespace superres {

enum class ExperimentKind { boundary, central, separation, noise, certify, lemmas, demo2d };

std::string_view to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(std::string_view name);

/// How the budget tau is chosen for each image.
///
///   oracle: tau = factor * sum_i w(t_i) c_i of the true sources
///   scan:   tau = f * oracle for f on a logarithmic grid in [lo, hi]; the
///           factor with the best mean F (averaged over the radii) is kept
///   fixed:  tau = value for every image
struct TauPolicy {
  enum class Mode { oracle, scan, fixed };
  Mode mode = Mode::oracle;
  double factor = 1.0;
  std::size_t scan_points = 15;
  double lo = 0.1;
  double hi = 10.0;
  double value = 0.0;

  /// Multipliers of the oracle budget that will be tried (one for oracle).
  std::vector<double> factors() const;
  void validate() const;
};

std::string_view to_string(TauPolicy::Mode mode);

struct ExperimentConfig {
  static constexpr std::string_view schema = "superres-experiment/1";

  ExperimentKind kind = ExperimentKind::central;
  std::uint64_t seed = 0;

  double psf_sigma = 0.1;
  /// Samples on [0, 1]; pixels per side for demo2d.
  std::size_t grid_n = 100;
  /// Images per population (per sweep value for sweeps, frames for demo2d).
  std::size_t count = 100;
  /// central and demo2d: sources per image.
  std::size_t sources = 5;
  /// boundary: sources per border region.
  std::size_t per_region = 2;
  double margin = 0.1;
  double noise_sigma = 0.0;

  TauPolicy tau;
  SolverOptions solver;
  /// Tolerance radii for matching; the first one drives sweep curves.
  std::vector<double> radii{0.1};
  bool unweighted = false;

  /// separation / noise: source distances in units of psf_sigma.
  std::vector<double> sweep_values;

  /// certify: source locations in [0, 1].
  std::vector<double> locations;
  std::size_t n_random = 1000;
  /// Neighbourhood half-width for the determinantal check; 0 picks the default.
  double rho = 0.0;

  /// lemmas
  std::size_t max_order = 6;
  std::size_t mc_draws = 10000;
  std::size_t mc_max_sources = 3;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Defaults for each experiment. Sweeps use 20 images of n = 50 samples at
/// d = 0.1..2.0 sigma; the noise sweep adds N(0, 0.1^2) and scans tau.
ExperimentConfig default_config(ExperimentKind kind, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Datasets

/// A generated population together with the spec that produced it.
struct Dataset {
  PopulationSpec spec;
  Population population;
};

/// Population spec for an image experiment. For sweep kinds `sweep_index`
/// selects the pair distance and the seed substream, so the noiseless and the
/// noisy sweep draw the same source positions.
PopulationSpec population_spec(const ExperimentConfig& config, std::size_t sweep_index = 0);

/// One dataset per sweep value for sweep kinds, one otherwise.
std::vector<Dataset> simulate_datasets(const ExperimentConfig& config);

/// Rebuilds sampling, PSF and domain from the spec and checks the observations fit.
Dataset make_dataset(const PopulationSpec& spec, std::vector<PopulationItem> items);

// ---------------------------------------------------------------------------
// Solving

struct ImageResult {
  SourceConfiguration truth;
  AtomicMeasure estimate;
  double tau = 0.0;
  /// One entry per radius.
  std::vector<double> fscores;
  std::size_t iterations = 0;
  bool converged = false;
  double final_gap = 0.0;
};

struct TauScanRow {
  double factor = 0.0;
  std::vector<double> mean_f;
};

struct SolveRecord {
  bool weighted = true;
  std::vector<double> radii;
  TauPolicy tau;
  /// Oracle multiplier that was kept (0 under the fixed policy).
  double chosen_factor = 0.0;
  std::vector<TauScanRow> scan;
  std::vector<ImageResult> images;
  std::vector<double> mean_f;
  std::vector<double> median_f;
};

/// Runs `task(i)` for i in [0, n) on `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task);

/// Solves every image of the dataset under the config's tau policy and scores it.
/// Throws InvalidArgument when the dataset was not generated for this config.
SolveRecord run_solve(const ExperimentConfig& config, const Dataset& dataset, std::size_t jobs = 1);

double mean(const std::vector<double>& xs);
double median(std::vector<double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std(const std::vector<double>& xs);
/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepPoint {
  /// Separation in units of psf_sigma.
  double value = 0.0;
  double mean_f = 0.0;
  double std_f = 0.0;
  std::size_t n_images = 0;
  SolveRecord record;
};

struct SweepRecord {
  std::vector<SweepPoint> points;
};

SweepRecord run_sweep(const ExperimentConfig& config, std::size_t jobs = 1);

/// Header plus one row per sweep value: sweep_value,mean_f,std_f,n_images.
std::string sweep_csv(const SweepRecord& sweep);

// ---------------------------------------------------------------------------
// Certificates and lemmas

struct CertifyRecord {
  std::vector<double> locations;
  std::optional<ConditionReport> conditions;
  std::optional<Certificate> certificate;
  /// Name of the failed condition, empty when none failed.
  std::string failed_condition;
  std::string message;

  bool valid() const noexcept {
    return failed_condition.empty() && certificate && certificate->valid();
  }
};

CertifyRecord run_certify(const ExperimentConfig& config);

struct LemmaRow {
  std::string check;
  std::size_t order = 0;
  bool passed = false;
  std::string detail;
};

struct LemmaRecord {
  std::vector<LemmaRow> rows;
  bool passed() const;
};

/// f-sequence identity for orders 0..max_order with random rational shifts,
/// leading coefficients 2^i of the p-sequence, and the determinant Monte Carlo
/// for M = 1..mc_max_sources (skipped when mc_draws = 0).
LemmaRecord run_lemmas(const ExperimentConfig& config);

/// Fixed-width pass/fail table.
std::string lemma_table(const LemmaRecord& record);

// ---------------------------------------------------------------------------
// Two-dimensional demo

struct Demo2dRecord {
  double pixel = 0.0;
  double radius = 0.0;
  SolveRecord record;
};

/// Frames of the smlm2d population, scored at one third of a pixel.
Demo2dRecord run_demo2d(const ExperimentConfig& config, std::size_t jobs = 1);

/// frame,x,y,amplitude rows for the true sources.
std::string demo2d_truth_csv(const Demo2dRecord& record);
/// frame,x,y,mass rows for the estimates.
std::string demo2d_estimate_csv(const Demo2dRecord& record);

}  // namespace superres
