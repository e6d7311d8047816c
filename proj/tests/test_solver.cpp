#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <numeric>

#include "nnls_oracle.hpp"
#include "superres/rng.hpp"
#include "superres/simulate.hpp"
#include "superres/solver.hpp"

using namespace superres;

namespace {

struct Problem {
  std::shared_ptr<GaussianPSF> psf;
  SamplingMeasure S;
  WeightFunction w;
  Domain domain = Domain::unit(1);
};

Problem problem(std::size_t n, double sigma = 0.1) {
  auto psf = std::make_shared<GaussianPSF>(sigma);
  auto S = SamplingMeasure::uniform_grid(Domain::unit(1), n);
  return {psf, S, WeightFunction::from_sampling(psf, S)};
}

AtomicMeasure measure_of(const SourceConfiguration& c) {
  AtomicMeasure m;
  for (std::size_t i = 0; i < c.size(); ++i) m.atoms.push_back({c.locations()[i], c.amplitudes()[i]});
  return m;
}

}  // namespace

TEST_CASE("objective and residual gradient examples") {
  auto pr = problem(100);
  SourceConfiguration truth({Point(0.3), Point(0.6)}, {1.0, 0.7});
  auto obs = synthesize(truth, *pr.psf, pr.S);
  CHECK(objective(measure_of(truth), obs, *pr.psf) <= 1e-20);
  double sq = 0;
  for (double v : obs.values) sq += v * v;
  CHECK(objective(AtomicMeasure{}, obs, *pr.psf) == doctest::Approx(sq).epsilon(1e-14));

  auto S1 = SamplingMeasure::counting({Point(0.2)});
  ObservationSet o1{S1, {0.4}, 0.0, 0};
  AtomicMeasure one{{{Point(0.25), 1.5}}};
  const double model = 1.5 * pr.psf->eval(Point(0.2), Point(0.25));
  CHECK(objective(one, o1, *pr.psf) == doctest::Approx((model - 0.4) * (model - 0.4)));

  for (double r : residual_gradient(measure_of(truth), obs, *pr.psf)) CHECK(std::abs(r) < 1e-12);
  auto r0 = residual_gradient(AtomicMeasure{}, obs, *pr.psf);
  ObservationSet scaled = obs;
  for (double& v : scaled.values) v *= 3.0;
  auto r3 = residual_gradient(AtomicMeasure{}, scaled, *pr.psf);
  for (std::size_t i = 0; i < r0.size(); ++i) {
    CHECK(r0[i] == doctest::Approx(-2 * obs.values[i]));
    CHECK(r3[i] == doctest::Approx(3 * r0[i]));
  }
}

TEST_CASE("lmo finds a single bump and agrees with a 10^6-point grid") {
  auto pr = problem(100);
  std::vector<double> r(pr.S.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = -2 * pr.psf->eval(pr.S.points()[i], Point(0.4));
  SolverOptions opts;
  const LmoResult res = lmo(r, *pr.psf, pr.S, pr.w, pr.domain, opts);
  CHECK(std::abs(res.location.x - 0.4) < 1e-6);

  double best = INFINITY, tbest = 0;
  for (int k = 0; k <= 1000000; ++k) {
    const double t = k / 1e6;
    const double s = lmo_score(r, *pr.psf, pr.S, pr.w, Point(t));
    if (s < best) {
      best = s;
      tbest = t;
    }
  }
  CHECK(std::abs(res.location.x - tbest) <= 1e-6);
  CHECK(res.score <= best + 1e-12);
}

TEST_CASE("lmo degenerate and symmetric residuals") {
  auto pr = problem(100);
  SolverOptions opts;
  std::vector<double> zero(pr.S.size(), 0.0);
  CHECK(lmo(zero, *pr.psf, pr.S, pr.w, pr.domain, opts).score == 0.0);

  std::vector<double> r(pr.S.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const Point s = pr.S.points()[i];
    r[i] = -pr.psf->eval(s, Point(0.2)) - pr.psf->eval(s, Point(0.8)) + 0.3 * pr.psf->eval(s, Point(0.5));
  }
  const LmoResult res = lmo(r, *pr.psf, pr.S, pr.w, pr.domain, opts);
  const double mirrored = lmo_score(r, *pr.psf, pr.S, pr.w, pr.domain.mirror(res.location));
  CHECK(std::abs(res.score - mirrored) <= 1e-9);
}

TEST_CASE("fully corrective examples") {
  auto pr = problem(100);
  SourceConfiguration truth({Point(0.45)}, {1.3});
  auto obs = synthesize(truth, *pr.psf, pr.S);
  const double wt = pr.w.value(Point(0.45));
  std::vector<Point> at{Point(0.45)};
  CHECK(fully_corrective(at, obs, *pr.psf, pr.w, 2 * wt * 1.3)[0] == doctest::Approx(1.3).epsilon(1e-8));
  CHECK(fully_corrective(at, obs, *pr.psf, pr.w, 0.0)[0] == 0.0);

  std::vector<Point> two{Point(0.45), Point(0.95)};
  auto c = fully_corrective(two, obs, *pr.psf, pr.w, 2 * wt * 1.3);
  CHECK(c[1] <= 1e-8);
  CHECK(c[0] == doctest::Approx(1.3).epsilon(1e-6));

  std::vector<Point> dup{Point(0.45), Point(0.45)};
  CHECK_THROWS_AS(fully_corrective(dup, obs, *pr.psf, pr.w, 1.0), InvalidArgument);
}

TEST_CASE("fully corrective satisfies the KKT conditions with an active budget") {
  auto pr = problem(60);
  SourceConfiguration truth({Point(0.3), Point(0.5), Point(0.62)}, {1.0, 0.8, 1.2});
  auto obs = add_noise(synthesize(truth, *pr.psf, pr.S), 0.05, 3);
  std::vector<Point> at{Point(0.28), Point(0.41), Point(0.5), Point(0.66), Point(0.9)};
  const double tau = 0.6 * truth.weighted_mass(pr.w);
  auto c = fully_corrective(at, obs, *pr.psf, pr.w, tau);
  double used = 0;
  for (std::size_t k = 0; k < at.size(); ++k) used += pr.w.value(at[k]) * c[k];
  CHECK(used <= tau * (1 + 1e-9));
  // d/du_k of the loss: g_k / w_k with g the mass gradient; KKT asks g_k/w_k = -lambda on the
  // support and >= -lambda off it.
  AtomicMeasure m;
  for (std::size_t k = 0; k < at.size(); ++k) m.atoms.push_back({at[k], c[k]});
  auto r = residual_gradient(m, obs, *pr.psf);
  std::vector<double> gu(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) {
    double g = 0;
    for (std::size_t i = 0; i < pr.S.size(); ++i) g += r[i] * pr.psf->eval(pr.S.points()[i], at[k]);
    gu[k] = g / pr.w.value(at[k]);
  }
  double lambda = 0;
  for (std::size_t k = 0; k < at.size(); ++k) if (c[k] > 1e-10) lambda = -gu[k];
  CHECK(lambda >= -1e-9);
  for (std::size_t k = 0; k < at.size(); ++k) {
    if (c[k] > 1e-10) CHECK(std::abs(gu[k] + lambda) <= 1e-8);
    else CHECK(gu[k] + lambda >= -1e-8);
  }
}

TEST_CASE("capped simplex projection") {
  std::vector<double> u{0.5, -1.0, 2.0};
  project_capped_simplex(u, 10.0);
  CHECK(u == std::vector<double>{0.5, 0.0, 2.0});
  std::vector<double> v{3.0, 1.0, 0.0};
  project_capped_simplex(v, 2.0);
  CHECK(v[0] == doctest::Approx(2.0));
  CHECK(v[1] == doctest::Approx(0.0));
  std::vector<double> e{1.0, 1.0};
  project_capped_simplex(e, 1.0);
  CHECK(e[0] == doctest::Approx(0.5));
  CHECK(e[0] + e[1] == doctest::Approx(1.0));
}

TEST_CASE("local refine examples") {
  auto pr = problem(100);
  SourceConfiguration truth({Point(0.5)}, {1.0});
  auto obs = synthesize(truth, *pr.psf, pr.S);
  SolverOptions opts;
  opts.tau = 2 * truth.weighted_mass(pr.w);

  auto same = local_refine(measure_of(truth), obs, *pr.psf, pr.domain, opts, &pr.w);
  REQUIRE(same.size() == 1);
  CHECK(std::abs(same.atoms[0].location.x - 0.5) <= 1e-10);
  CHECK(std::abs(same.atoms[0].mass - 1.0) <= 1e-10);

  AtomicMeasure off{{{Point(0.5 + 0.001), 1.0}}};
  const double f0 = objective(off, obs, *pr.psf);
  auto moved = local_refine(off, obs, *pr.psf, pr.domain, opts, &pr.w);
  CHECK(objective(moved, obs, *pr.psf) < f0);
  CHECK(std::abs(moved.atoms[0].location.x - 0.5) < 0.001);

  AtomicMeasure twin{{{Point(0.5), 0.4}, {Point(0.5), 0.6}}};
  auto merged = local_refine(twin, obs, *pr.psf, pr.domain, opts, &pr.w);
  REQUIRE(merged.size() == 1);
  CHECK(merged.atoms[0].mass == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("merge close atoms") {
  AtomicMeasure m{{{Point(0.3), 1.0}, {Point(0.3 + 1e-8), 3.0}, {Point(0.7), 2.0}}};
  auto out = merge_close_atoms(m, 1e-6);
  REQUIRE(out.size() == 2);
  CHECK(out.atoms[0].mass == 4.0);
  CHECK(out.atoms[0].location.x == doctest::Approx(0.3 + 0.75e-8).epsilon(1e-15));
}

TEST_CASE("duality gap") {
  auto pr = problem(100);
  SourceConfiguration truth({Point(0.35), Point(0.7)}, {1.0, 0.5});
  auto obs = add_noise(synthesize(truth, *pr.psf, pr.S), 0.05, 8);
  SolverOptions opts;
  opts.tau = 0.8 * truth.weighted_mass(pr.w);
  CHECK(duality_gap(AtomicMeasure{}, obs, *pr.psf, pr.w, pr.domain, opts) > 0.0);

  SolverOptions tight = opts;
  tight.max_iters = 400;
  tight.gap_tol = 1e-13;
  const SolveResult best = solve(obs, *pr.psf, pr.w, pr.domain, tight);
  const double fopt = objective(best.measure, obs, *pr.psf);
  CHECK(duality_gap(best.measure, obs, *pr.psf, pr.w, pr.domain, opts) <= opts.gap_tol * (1 + fopt) + 1e-12);

  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    AtomicMeasure m;
    double used = 0;
    for (int k = 0; k < 3; ++k) {
      const Point t(rng.uniform());
      const double u = rng.uniform() * opts.tau / 3;
      m.atoms.push_back({t, u / pr.w.value(t)});
      used += u;
    }
    const double gap = duality_gap(m, obs, *pr.psf, pr.w, pr.domain, opts);
    CHECK(gap >= -1e-12);
    CHECK(objective(m, obs, *pr.psf) - fopt <= gap + 1e-9);
  }
}

TEST_CASE("solve examples") {
  auto pr = problem(100);
  SourceConfiguration truth({Point(0.5)}, {1.0});
  auto obs = synthesize(truth, *pr.psf, pr.S);
  SolverOptions opts;
  opts.tau = pr.w.value(Point(0.5));
  auto res = solve(obs, *pr.psf, pr.w, pr.domain, opts);
  REQUIRE(res.measure.size() == 1);
  CHECK(std::abs(res.measure.atoms[0].location.x - 0.5) <= 1e-6);
  CHECK(std::abs(res.measure.atoms[0].mass - 1.0) <= 1e-6);
  CHECK(res.converged);

  ObservationSet zero = obs;
  std::fill(zero.values.begin(), zero.values.end(), 0.0);
  CHECK(solve(zero, *pr.psf, pr.w, pr.domain, opts).measure.empty());

  auto pr50 = problem(50);
  SourceConfiguration pair({Point(0.475), Point(0.525)}, {1.0, 1.0});
  auto obs2 = synthesize(pair, *pr50.psf, pr50.S);
  opts.tau = pair.weighted_mass(pr50.w);
  auto res2 = solve(obs2, *pr50.psf, pr50.w, pr50.domain, opts);
  REQUIRE(res2.measure.size() == 2);
  auto sorted = res2.measure.sorted();
  CHECK(std::abs(sorted.atoms[0].location.x - 0.475) <= 1e-3);
  CHECK(std::abs(sorted.atoms[1].location.x - 0.525) <= 1e-3);
}

TEST_CASE("solve soundness on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    auto pr = problem(40 + rng.below(80));
    const std::size_t M = 1 + rng.below(4);
    std::vector<Point> locs;
    std::vector<double> amps;
    for (std::size_t k = 0; k < M; ++k) {
      locs.emplace_back(0.05 + 0.9 * rng.uniform());
      amps.push_back(0.5 + rng.uniform());
    }
    SourceConfiguration truth(locs, amps);
    auto obs = add_noise(synthesize(truth, *pr.psf, pr.S), 0.05 * rng.uniform(), rng.next_u64());
    SolverOptions opts;
    opts.tau = (0.5 + rng.uniform()) * truth.weighted_mass(pr.w);
    auto a = solve(obs, *pr.psf, pr.w, pr.domain, opts);
    for (std::size_t k = 1; k < a.objective_trace.size(); ++k) {
      CHECK(a.objective_trace[k] <= a.objective_trace[k - 1]);
    }
    for (double g : a.gap_trace) CHECK(g >= -1e-12);
    if (a.converged) CHECK(a.final_gap <= opts.gap_tol * (1 + a.objective_trace.back()));
    for (const Atom& at : a.measure.atoms) {
      CHECK(at.mass >= 0.0);
      CHECK(pr.domain.contains(at.location));
    }
    CHECK(a.measure.weighted_mass(pr.w) <= opts.tau * (1 + 1e-9));
    auto b = solve(obs, *pr.psf, pr.w, pr.domain, opts);
    CHECK(a.objective_trace == b.objective_trace);
    REQUIRE(a.measure.size() == b.measure.size());
    for (std::size_t k = 0; k < a.measure.size(); ++k) {
      CHECK(a.measure.atoms[k].location == b.measure.atoms[k].location);
      CHECK(a.measure.atoms[k].mass == b.measure.atoms[k].mass);
    }
  }
}

TEST_CASE("solve matches a dense-grid NNLS oracle for one source") {
  auto pr = problem(100);
  SourceConfiguration truth({Point(0.4321)}, {1.7});
  auto obs = synthesize(truth, *pr.psf, pr.S);
  SolverOptions opts;
  opts.tau = truth.weighted_mass(pr.w);
  auto res = solve(obs, *pr.psf, pr.w, pr.domain, opts);
  std::vector<double> grid(20001);
  for (std::size_t j = 0; j < grid.size(); ++j) grid[j] = j / 20000.0;
  auto nn = oracle::grid_nnls(*pr.psf, pr.S, obs.values, grid);
  REQUIRE(res.measure.size() == 1);
  CHECK(std::abs(res.measure.atoms[0].location.x - nn.location) <= 5e-5);
  CHECK(std::abs(res.measure.atoms[0].mass - nn.mass) <= 5e-5);
}

TEST_CASE("unit weight and two-dimensional solves") {
  auto pr = problem(100);
  SourceConfiguration truth({Point(0.05), Point(0.6)}, {1.0, 1.0});
  auto obs = synthesize(truth, *pr.psf, pr.S);
  auto unit = WeightFunction::unit();
  SolverOptions opts;
  opts.tau = truth.weighted_mass(unit);
  auto res = solve(obs, *pr.psf, unit, pr.domain, opts);
  CHECK(res.measure.weighted_mass(unit) <= opts.tau * (1 + 1e-9));

  auto psf2 = std::make_shared<GaussianPSF>(0.08, 2);
  auto S2 = SamplingMeasure::pixel_grid(Domain::unit(2), 20);
  auto w2 = WeightFunction::from_sampling(psf2, S2);
  SourceConfiguration t2({Point(0.3, 0.6), Point(0.7, 0.35)}, {1.0, 1.5});
  auto obs2d = synthesize(t2, *psf2, S2);
  opts.tau = t2.weighted_mass(w2);
  auto r2 = solve(obs2d, *psf2, w2, Domain::unit(2), opts).measure.sorted();
  REQUIRE(r2.size() == 2);
  CHECK(distance(r2.atoms[0].location, Point(0.3, 0.6)) < 1e-5);
  CHECK(distance(r2.atoms[1].location, Point(0.7, 0.35)) < 1e-5);
}
