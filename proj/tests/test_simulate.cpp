#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "superres/experiment.hpp"
#include "superres/simulate.hpp"

using namespace superres;

TEST_CASE("synthesize examples") {
  GaussianPSF g(1.0);
  auto S = SamplingMeasure::counting({Point(0.0)});
  CHECK(synthesize(SourceConfiguration({Point(0.0)}, {2.0}), g, S).values[0] == 2.0);
  CHECK(synthesize(SourceConfiguration({Point(-1.0), Point(1.0)}, {1.0, 1.0}), g, S).values[0] ==
        doctest::Approx(2 * std::exp(-1.0)).epsilon(1e-15));
  auto zero = synthesize(SourceConfiguration(), g, SamplingMeasure::uniform_grid(Domain::unit(1), 5));
  for (double v : zero.values) CHECK(v == 0.0);
  CHECK(zero.noise_sigma == 0.0);
}

TEST_CASE("synthesize is linear and shift invariant") {
  GaussianPSF g(0.1);
  auto S = SamplingMeasure::uniform_grid(Domain::unit(1), 50);
  SourceConfiguration a({Point(0.3), Point(0.6)}, {1.0, 0.5});
  SourceConfiguration b({Point(0.3), Point(0.6)}, {0.25, 2.0});
  SourceConfiguration ab({Point(0.3), Point(0.6)}, {1.25, 2.5});
  auto xa = synthesize(a, g, S), xb = synthesize(b, g, S), xab = synthesize(ab, g, S);
  for (std::size_t i = 0; i < S.size(); ++i) CHECK(std::abs(xa.values[i] + xb.values[i] - xab.values[i]) < 1e-12);

  std::vector<Point> shifted;
  for (Point p : S.points()) shifted.emplace_back(p.x + 0.37);
  auto S2 = SamplingMeasure::counting(shifted);
  auto xs = synthesize(SourceConfiguration({Point(0.67), Point(0.97)}, {1.0, 0.5}), g, S2);
  for (std::size_t i = 0; i < S.size(); ++i) CHECK(std::abs(xs.values[i] - xa.values[i]) < 1e-12);
}

TEST_CASE("add_noise") {
  GaussianPSF g(0.1);
  auto S = SamplingMeasure::uniform_grid(Domain::unit(1), 10);
  auto x = synthesize(SourceConfiguration({Point(0.5)}, {1.0}), g, S);
  CHECK(add_noise(x, 0.0, 4).values == x.values);
  CHECK(add_noise(x, 0.1, 4).values == add_noise(x, 0.1, 4).values);
  CHECK(add_noise(x, 0.1, 4).values != add_noise(x, 0.1, 5).values);
  CHECK_THROWS_AS(add_noise(x, -0.1, 4), InvalidArgument);

  auto big = synthesize(SourceConfiguration(), g, SamplingMeasure::uniform_grid(Domain::unit(1), 100000));
  auto noisy = add_noise(big, 0.1, 17);
  double m = 0, s2 = 0;
  for (double v : noisy.values) m += v;
  m /= noisy.values.size();
  for (double v : noisy.values) s2 += (v - m) * (v - m);
  const double sd = std::sqrt(s2 / (noisy.values.size() - 1));
  CHECK(sd >= 0.099);
  CHECK(sd <= 0.101);
}

TEST_CASE("populations respect their regions") {
  PopulationSpec central;
  auto pc = gen_population(central);
  CHECK(pc.items.size() == 100);
  for (auto& it : pc.items) {
    CHECK(it.truth.size() == 5);
    for (Point p : it.truth.locations()) CHECK((p.x > 0.1 && p.x < 0.9));
    for (double c : it.truth.amplitudes()) CHECK(c == 1.0);
  }

  PopulationSpec boundary;
  boundary.kind = PopulationKind::boundary;
  for (auto& it : gen_population(boundary).items) {
    REQUIRE(it.truth.size() == 4);
    int left = 0, right = 0;
    for (Point p : it.truth.locations()) {
      left += p.x > 0.0 && p.x < 0.1;
      right += p.x > 0.9 && p.x < 1.0;
    }
    CHECK(left == 2);
    CHECK(right == 2);
  }

  PopulationSpec pair;
  pair.kind = PopulationKind::pair;
  pair.separation = 0.05;
  pair.n = 50;
  pair.count = 20;
  auto pp = gen_population(pair);
  CHECK(pp.items.size() == 20);
  CHECK(pp.sampling.size() == 50);
  for (auto& it : pp.items) {
    REQUIRE(it.truth.size() == 2);
    const double a = it.truth.locations()[0].x, b = it.truth.locations()[1].x;
    CHECK(b - a == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(a > 0.1);
    CHECK(b < 0.9);
  }
  pair.separation = 0.8;
  CHECK_THROWS_AS(gen_population(pair), InvalidArgument);
  pair.separation = 0.0;
  CHECK_THROWS_AS(gen_population(pair), InvalidArgument);

  PopulationSpec smlm;
  smlm.kind = PopulationKind::smlm2d;
  smlm.n = 16;
  smlm.count = 3;
  smlm.sources = 7;
  smlm.noise_sigma = 0.01;
  auto ps = gen_population(smlm);
  CHECK(ps.sampling.size() == 256);
  for (auto& it : ps.items) {
    CHECK(it.truth.size() == 7);
    for (Point p : it.truth.locations()) CHECK((p.x > 0.1 && p.x < 0.9 && p.y > 0.1 && p.y < 0.9));
  }
}

TEST_CASE("populations are deterministic and split per item") {
  PopulationSpec spec;
  spec.kind = PopulationKind::central;
  spec.count = 10;
  spec.noise_sigma = 0.1;
  spec.seed = 99;
  auto a = gen_population(spec);
  auto b = gen_population(spec);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a.items[i].obs.values == b.items[i].obs.values);
    CHECK(a.items[i].truth.locations() == draw_sources(spec, i).locations());
  }
  spec.count = 3;
  auto c = gen_population(spec);
  CHECK(c.items[2].obs.values == a.items[2].obs.values);
}

TEST_CASE("pair sweep datasets share source draws between noiseless and noisy runs") {
  auto sep = default_config(ExperimentKind::separation, 5);
  auto noise = default_config(ExperimentKind::noise, 5);
  auto ds = simulate_datasets(sep);
  auto dn = simulate_datasets(noise);
  REQUIRE(ds.size() == 20);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    for (std::size_t i = 0; i < ds[k].population.items.size(); ++i) {
      CHECK(ds[k].population.items[i].truth.locations() == dn[k].population.items[i].truth.locations());
    }
  }
  CHECK(ds[1].population.items[0].truth.locations()[1].x - ds[1].population.items[0].truth.locations()[0].x ==
        doctest::Approx(0.02).epsilon(1e-12));
}
