#include "superres/simulate.hpp"

#include <cmath>

#include "superres/rng.hpp"

namespace superres {

ObservationSet synthesize(const SourceConfiguration& config, const PSFModel& psf,
                          const SamplingMeasure& S) {
  const auto& pts = S.points();
  std::vector<double> values(pts.size(), 0.0);
  const auto& locs = config.locations();
  const auto& amps = config.amplitudes();
  for (std::size_t j = 0; j < pts.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < locs.size(); ++i) acc += amps[i] * psf.eval(pts[j], locs[i]);
    values[j] = acc;
  }
  return ObservationSet{S, std::move(values), 0.0, 0};
}

ObservationSet add_noise(const ObservationSet& obs, double noise_sigma, std::uint64_t seed) {
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
    throw InvalidArgument("add_noise: noise_sigma must be finite and >= 0");
  }
  ObservationSet out = obs;
  out.noise_sigma = noise_sigma;
  out.seed = seed;
  if (noise_sigma == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.values) v += noise_sigma * rng.normal();
  return out;
}

std::string_view to_string(PopulationKind kind) {
  switch (kind) {
    case PopulationKind::central: return "central";
    case PopulationKind::boundary: return "boundary";
    case PopulationKind::pair: return "pair";
    case PopulationKind::smlm2d: return "smlm2d";
  }
  return "central";
}

PopulationKind population_kind_from_string(std::string_view name) {
  if (name == "central") return PopulationKind::central;
  if (name == "boundary") return PopulationKind::boundary;
  if (name == "pair") return PopulationKind::pair;
  if (name == "smlm2d") return PopulationKind::smlm2d;
  throw InvalidArgument("unknown population kind: " + std::string(name));
}

void PopulationSpec::validate() const {
  if (count == 0) throw InvalidArgument("PopulationSpec: count must be positive");
  if (n == 0) throw InvalidArgument("PopulationSpec: n must be positive");
  if (!std::isfinite(sigma) || sigma <= 0.0) throw InvalidArgument("PopulationSpec: sigma must be > 0");
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
    throw InvalidArgument("PopulationSpec: noise_sigma must be >= 0");
  }
  if (!(margin > 0.0 && margin < 0.5)) throw InvalidArgument("PopulationSpec: margin must lie in (0, 0.5)");
  switch (kind) {
    case PopulationKind::pair:
      if (!std::isfinite(separation) || separation <= 0.0) {
        throw InvalidArgument("PopulationSpec: pair separation must be > 0");
      }
      if (separation >= 1.0 - 2.0 * margin) {
        throw InvalidArgument("PopulationSpec: pair separation too large to fit inside the margins");
      }
      break;
    case PopulationKind::boundary:
      if (per_region == 0) throw InvalidArgument("PopulationSpec: per_region must be positive");
      break;
    case PopulationKind::central:
      if (sources == 0) throw InvalidArgument("PopulationSpec: sources must be positive");
      break;
    case PopulationKind::smlm2d:
      break;
  }
}

Domain population_domain(const PopulationSpec& spec) {
  return Domain::unit(spec.kind == PopulationKind::smlm2d ? 2 : 1);
}

SamplingMeasure population_sampling(const PopulationSpec& spec) {
  const Domain domain = population_domain(spec);
  if (spec.kind == PopulationKind::smlm2d) return SamplingMeasure::pixel_grid(domain, spec.n);
  return SamplingMeasure::uniform_grid(domain, spec.n);
}

namespace {

// Uniform on the open interval (lo, hi).
double open_uniform(Rng& rng, double lo, double hi) {
  double u = rng.uniform(lo, hi);
  while (!(u > lo && u < hi)) u = rng.uniform(lo, hi);
  return u;
}

SourceConfiguration draw_with(const PopulationSpec& spec, Rng& rng) {
  std::vector<Point> locs;
  const double m = spec.margin;
  switch (spec.kind) {
    case PopulationKind::central:
      for (std::size_t i = 0; i < spec.sources; ++i) locs.emplace_back(open_uniform(rng, m, 1.0 - m));
      break;
    case PopulationKind::boundary:
      for (std::size_t i = 0; i < spec.per_region; ++i) locs.emplace_back(open_uniform(rng, 0.0, m));
      for (std::size_t i = 0; i < spec.per_region; ++i) locs.emplace_back(open_uniform(rng, 1.0 - m, 1.0));
      break;
    case PopulationKind::pair: {
      const double half = 0.5 * spec.separation;
      const double center = rng.uniform(m + half, 1.0 - m - half);
      locs.emplace_back(center - half);
      locs.emplace_back(center + half);
      break;
    }
    case PopulationKind::smlm2d:
      for (std::size_t i = 0; i < spec.sources; ++i) {
        const double x = open_uniform(rng, m, 1.0 - m);
        const double y = open_uniform(rng, m, 1.0 - m);
        locs.emplace_back(x, y);
      }
      break;
  }
  std::vector<double> amps(locs.size(), 1.0);
  return SourceConfiguration(std::move(locs), std::move(amps));
}

}  // namespace

SourceConfiguration draw_sources(const PopulationSpec& spec, std::uint64_t index) {
  spec.validate();
  Rng rng = Rng::substream(spec.seed, index);
  return draw_with(spec, rng);
}

Population gen_population(const PopulationSpec& spec) {
  spec.validate();
  const int dim = spec.kind == PopulationKind::smlm2d ? 2 : 1;
  Population pop{population_domain(spec), std::make_shared<const GaussianPSF>(spec.sigma, dim),
                 population_sampling(spec), {}};
  pop.items.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = Rng::substream(spec.seed, i);
    SourceConfiguration truth = draw_with(spec, rng);
    ObservationSet obs = synthesize(truth, *pop.psf, pop.sampling);
    obs.seed = spec.seed;
    if (spec.noise_sigma > 0.0) {
      obs = add_noise(obs, spec.noise_sigma, rng.next_u64());
    }
    pop.items.push_back({std::move(truth), std::move(obs)});
  }
  return pop;
}

}  // namespace superres
