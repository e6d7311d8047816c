#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "superres/core.hpp"

namespace superres {

/// Samples x(s_i) of a superposition of point spread functions.
struct ObservationSet {
  SamplingMeasure sampling;
  std::vector<double> values;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// x(s_j) = sum_i c_i psi(s_j, t_i), noiseless.
ObservationSet synthesize(const SourceConfiguration& config, const PSFModel& psf,
                          const SamplingMeasure& S);

/// Adds i.i.d. N(0, noise_sigma^2) to every value. Deterministic in `seed`.
ObservationSet add_noise(const ObservationSet& obs, double noise_sigma, std::uint64_t seed);

enum class PopulationKind { central, boundary, pair, smlm2d };

std::string_view to_string(PopulationKind kind);
PopulationKind population_kind_from_string(std::string_view name);

/// Description of a randomized image population.
///
/// Defaults reproduce the one-dimensional experiments: a Gaussian PSF of
/// width 0.1 sampled on an n-point grid over [0, 1] and unit intensities.
struct PopulationSpec {
  PopulationKind kind = PopulationKind::central;
  std::size_t count = 100;
  double sigma = 0.1;
  /// Grid points in 1D; pixels per side for smlm2d.
  std::size_t n = 100;
  /// central: sources per image; smlm2d: sources per frame.
  std::size_t sources = 5;
  /// boundary: sources in each of the two boundary regions.
  std::size_t per_region = 2;
  /// pair: distance between the two sources (signal units).
  double separation = 0.05;
  /// smlm2d: additive noise standard deviation.
  double noise_sigma = 0.0;
  /// Width of the border band; interior sources keep this far from the edges.
  double margin = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PopulationItem {
  SourceConfiguration truth;
  ObservationSet obs;
};

struct Population {
  Domain domain = Domain::unit(1);
  std::shared_ptr<const GaussianPSF> psf;
  SamplingMeasure sampling;
  std::vector<PopulationItem> items;
};

Domain population_domain(const PopulationSpec& spec);
SamplingMeasure population_sampling(const PopulationSpec& spec);

/// Draws spec.count images; item i uses only substream i of spec.seed.
Population gen_population(const PopulationSpec& spec);

/// Source locations of item `index`, drawn exactly as gen_population does.
SourceConfiguration draw_sources(const PopulationSpec& spec, std::uint64_t index);

}  // namespace superres
