#include "superres/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "superres/eval.hpp"
#include "superres/rng.hpp"
#include "superres/tsystems.hpp"

namespace superres {

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::boundary: return "boundary";
    case ExperimentKind::central: return "central";
    case ExperimentKind::separation: return "separation";
    case ExperimentKind::noise: return "noise";
    case ExperimentKind::certify: return "certify";
    case ExperimentKind::lemmas: return "lemmas";
    case ExperimentKind::demo2d: return "demo2d";
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(std::string_view name) {
  for (auto k : {ExperimentKind::boundary, ExperimentKind::central, ExperimentKind::separation,
                 ExperimentKind::noise, ExperimentKind::certify, ExperimentKind::lemmas,
                 ExperimentKind::demo2d}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown experiment kind: " + std::string(name));
}

std::string_view to_string(TauPolicy::Mode mode) {
  switch (mode) {
    case TauPolicy::Mode::oracle: return "oracle";
    case TauPolicy::Mode::scan: return "scan";
    case TauPolicy::Mode::fixed: return "fixed";
  }
  return "unknown";
}

std::vector<double> TauPolicy::factors() const {
  switch (mode) {
    case Mode::oracle: return {factor};
    case Mode::fixed: return {0.0};
    case Mode::scan: break;
  }
  if (scan_points == 1) return {lo};
  std::vector<double> out(scan_points);
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (std::size_t k = 0; k < scan_points; ++k) {
    out[k] = std::pow(10.0, a + (b - a) * static_cast<double>(k) / static_cast<double>(scan_points - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

void TauPolicy::validate() const {
  switch (mode) {
    case Mode::oracle:
      if (!std::isfinite(factor) || factor < 0.0) throw InvalidArgument("tau.factor must be >= 0");
      break;
    case Mode::fixed:
      if (!std::isfinite(value) || value < 0.0) throw InvalidArgument("tau.value must be >= 0");
      break;
    case Mode::scan:
      if (scan_points == 0) throw InvalidArgument("tau.scan_points must be >= 1");
      if (!std::isfinite(lo) || !std::isfinite(hi) || lo <= 0.0 || hi < lo) {
        throw InvalidArgument("tau scan bounds must satisfy 0 < lo <= hi");
      }
      break;
  }
}

void ExperimentConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!std::isfinite(v) || v <= 0.0) throw InvalidArgument(std::string(name) + " must be > 0");
  };
  positive(psf_sigma, "psf_sigma");
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
    throw InvalidArgument("noise_sigma must be >= 0");
  }
  if (grid_n == 0) throw InvalidArgument("grid_n must be >= 1");
  if (!(margin > 0.0 && margin < 0.5)) throw InvalidArgument("margin must lie in (0, 0.5)");
  tau.validate();
  SolverOptions probe = solver;
  probe.tau = 0.0;
  probe.validate();
  if (radii.empty()) throw InvalidArgument("radii must not be empty");
  for (double r : radii) positive(r, "radius");

  switch (kind) {
    case ExperimentKind::boundary:
    case ExperimentKind::central:
    case ExperimentKind::demo2d:
      if (count == 0) throw InvalidArgument("count must be >= 1");
      if (kind == ExperimentKind::central && sources == 0) throw InvalidArgument("sources must be >= 1");
      if (kind == ExperimentKind::boundary && per_region == 0) {
        throw InvalidArgument("per_region must be >= 1");
      }
      break;
    case ExperimentKind::separation:
    case ExperimentKind::noise:
      if (count == 0) throw InvalidArgument("count must be >= 1");
      if (sweep_values.empty()) throw InvalidArgument("sweep.values must not be empty");
      for (double d : sweep_values) {
        positive(d, "sweep value");
        if (d * psf_sigma >= 1.0 - 2.0 * margin) {
          throw InvalidArgument("sweep value too large: the pair does not fit inside the margins");
        }
      }
      break;
    case ExperimentKind::certify: {
      if (locations.empty()) throw InvalidArgument("locations must not be empty");
      std::vector<double> sorted = locations;
      std::sort(sorted.begin(), sorted.end());
      for (double t : sorted) {
        if (!std::isfinite(t) || t < 0.0 || t > 1.0) throw InvalidArgument("locations must lie in [0, 1]");
      }
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw InvalidArgument("locations must be pairwise distinct");
      }
      if (n_random == 0) throw InvalidArgument("n_random must be >= 1");
      if (!std::isfinite(rho) || rho < 0.0) throw InvalidArgument("rho must be >= 0");
      break;
    }
    case ExperimentKind::lemmas:
      if (max_order > 8) throw InvalidArgument("max_order must be <= 8");
      if (mc_max_sources == 0 || mc_max_sources > 4) {
        throw InvalidArgument("mc_max_sources must lie in [1, 4]");
      }
      break;
  }
}

ExperimentConfig default_config(ExperimentKind kind, std::uint64_t seed) {
  ExperimentConfig c;
  c.kind = kind;
  c.seed = seed;
  switch (kind) {
    case ExperimentKind::boundary:
    case ExperimentKind::central:
      c.radii = {0.02, 0.05, 0.1};
      c.tau.mode = TauPolicy::Mode::scan;
      break;
    case ExperimentKind::noise:
      c.noise_sigma = 0.1;
      c.tau.mode = TauPolicy::Mode::scan;
      [[fallthrough]];
    case ExperimentKind::separation:
      c.grid_n = 50;
      c.count = 20;
      for (int k = 1; k <= 20; ++k) c.sweep_values.push_back(0.1 * k);
      break;
    case ExperimentKind::certify:
      c.locations = {0.25, 0.5, 0.75};
      break;
    case ExperimentKind::lemmas:
      break;
    case ExperimentKind::demo2d:
      // 32 x 32 pixels, PSF width about 1.3 pixels, ten emitters per frame
      // and peak-relative noise of 1%. With noise the oracle budget leaves
      // room for spurious atoms, so the budget is set 10% below it.
      c.grid_n = 32;
      c.psf_sigma = 0.04;
      c.sources = 10;
      c.noise_sigma = 0.01;
      c.count = 10;
      c.tau.factor = 0.9;
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------

PopulationSpec population_spec(const ExperimentConfig& config, std::size_t sweep_index) {
  PopulationSpec spec;
  spec.count = config.count;
  spec.sigma = config.psf_sigma;
  spec.n = config.grid_n;
  spec.sources = config.sources;
  spec.per_region = config.per_region;
  spec.noise_sigma = config.noise_sigma;
  spec.margin = config.margin;
  spec.seed = config.seed;
  switch (config.kind) {
    case ExperimentKind::boundary: spec.kind = PopulationKind::boundary; break;
    case ExperimentKind::central: spec.kind = PopulationKind::central; break;
    case ExperimentKind::demo2d: spec.kind = PopulationKind::smlm2d; break;
    case ExperimentKind::separation:
    case ExperimentKind::noise:
      if (sweep_index >= config.sweep_values.size()) {
        throw InvalidArgument("population_spec: sweep index out of range");
      }
      spec.kind = PopulationKind::pair;
      spec.separation = config.sweep_values[sweep_index] * config.psf_sigma;
      spec.seed = Rng::substream(config.seed, sweep_index).next_u64();
      break;
    case ExperimentKind::certify:
    case ExperimentKind::lemmas:
      throw InvalidArgument("population_spec: experiment kind has no image population");
  }
  return spec;
}

std::vector<Dataset> simulate_datasets(const ExperimentConfig& config) {
  config.validate();
  const bool sweep = config.kind == ExperimentKind::separation || config.kind == ExperimentKind::noise;
  const std::size_t n = sweep ? config.sweep_values.size() : 1;
  std::vector<Dataset> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PopulationSpec spec = population_spec(config, i);
    Population pop = gen_population(spec);
    out.push_back({spec, std::move(pop)});
  }
  return out;
}

Dataset make_dataset(const PopulationSpec& spec, std::vector<PopulationItem> items) {
  spec.validate();
  if (items.size() != spec.count) throw InvalidArgument("dataset: item count does not match spec.count");
  const int dim = spec.kind == PopulationKind::smlm2d ? 2 : 1;
  Population pop{population_domain(spec), std::make_shared<const GaussianPSF>(spec.sigma, dim),
                 population_sampling(spec), {}};
  for (PopulationItem& item : items) {
    if (item.obs.values.size() != pop.sampling.size()) {
      throw InvalidArgument("dataset: observation length does not match the sampling grid");
    }
    for (const Point& t : item.truth.locations()) {
      if (!pop.domain.contains(t)) throw InvalidArgument("dataset: true source outside the domain");
    }
    item.obs.sampling = pop.sampling;
  }
  pop.items = std::move(items);
  return {spec, std::move(pop)};
}

// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t k = 0; k < workers; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t h = xs.size() / 2;
  return xs.size() % 2 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: length mismatch");
  if (x.size() < 2) return 0.0;
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

PopulationKind expected_population(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::boundary: return PopulationKind::boundary;
    case ExperimentKind::central: return PopulationKind::central;
    case ExperimentKind::separation:
    case ExperimentKind::noise: return PopulationKind::pair;
    case ExperimentKind::demo2d: return PopulationKind::smlm2d;
    default: break;
  }
  throw InvalidArgument("experiment kind " + std::string(to_string(kind)) + " does not solve images");
}

// F-score at radius r. An image with no sources and no estimates counts as
// perfectly recovered.
double image_fscore(const SourceConfiguration& truth, const AtomicMeasure& est, double r) {
  if (truth.empty() && est.empty()) return 1.0;
  return score_estimate(truth.locations(), est.locations(), r).fscore;
}

}  // namespace

SolveRecord run_solve(const ExperimentConfig& config, const Dataset& dataset, std::size_t jobs) {
  config.validate();
  const PopulationSpec& spec = dataset.spec;
  if (spec.kind != expected_population(config.kind)) {
    throw InvalidArgument("dataset/config mismatch: dataset holds a " + std::string(to_string(spec.kind)) +
                          " population, config expects " + std::string(to_string(config.kind)));
  }
  if (spec.sigma != config.psf_sigma) throw InvalidArgument("dataset/config mismatch: psf_sigma differs");
  if (spec.n != config.grid_n) throw InvalidArgument("dataset/config mismatch: grid_n differs");
  const Population& pop = dataset.population;
  if (pop.items.size() != spec.count) throw InvalidArgument("dataset: item count does not match spec.count");

  const WeightFunction w = config.unweighted ? WeightFunction::unit()
                                             : WeightFunction::from_sampling(pop.psf, pop.sampling);
  const std::vector<double> factors = config.tau.factors();
  const std::size_t n_img = pop.items.size();
  const std::size_t n_fac = factors.size();
  const std::size_t n_rad = config.radii.size();

  std::vector<ImageResult> all(n_img * n_fac);
  parallel_for(n_img * n_fac, jobs, [&](std::size_t job) {
    const std::size_t i = job / n_fac;
    const std::size_t f = job % n_fac;
    const PopulationItem& item = pop.items[i];
    SolverOptions opts = config.solver;
    opts.tau = config.tau.mode == TauPolicy::Mode::fixed ? config.tau.value
                                                         : factors[f] * item.truth.weighted_mass(w);
    SolveResult res = solve(item.obs, *pop.psf, w, pop.domain, opts);
    ImageResult out;
    out.truth = item.truth;
    out.estimate = res.measure.sorted();
    out.tau = opts.tau;
    out.iterations = res.iterations;
    out.converged = res.converged;
    out.final_gap = res.final_gap;
    for (double r : config.radii) out.fscores.push_back(image_fscore(out.truth, out.estimate, r));
    all[job] = std::move(out);
  });

  SolveRecord rec;
  rec.weighted = !config.unweighted;
  rec.radii = config.radii;
  rec.tau = config.tau;
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t f = 0; f < n_fac; ++f) {
    TauScanRow row{factors[f], std::vector<double>(n_rad, 0.0)};
    for (std::size_t q = 0; q < n_rad; ++q) {
      std::vector<double> fs(n_img);
      for (std::size_t i = 0; i < n_img; ++i) fs[i] = all[i * n_fac + f].fscores[q];
      row.mean_f[q] = mean(fs);
    }
    const double score = mean(row.mean_f);
    if (score > best_score) {
      best_score = score;
      best = f;
    }
    if (config.tau.mode == TauPolicy::Mode::scan) rec.scan.push_back(std::move(row));
  }
  rec.chosen_factor = factors[best];
  rec.images.reserve(n_img);
  for (std::size_t i = 0; i < n_img; ++i) rec.images.push_back(std::move(all[i * n_fac + best]));
  for (std::size_t q = 0; q < n_rad; ++q) {
    std::vector<double> fs(n_img);
    for (std::size_t i = 0; i < n_img; ++i) fs[i] = rec.images[i].fscores[q];
    rec.mean_f.push_back(mean(fs));
    rec.median_f.push_back(median(fs));
  }
  return rec;
}

// ---------------------------------------------------------------------------

SweepRecord run_sweep(const ExperimentConfig& config, std::size_t jobs) {
  if (config.kind != ExperimentKind::separation && config.kind != ExperimentKind::noise) {
    throw InvalidArgument("sweep requires a separation or noise experiment");
  }
  config.validate();
  SweepRecord out;
  for (std::size_t k = 0; k < config.sweep_values.size(); ++k) {
    const PopulationSpec spec = population_spec(config, k);
    const Dataset ds{spec, gen_population(spec)};
    SweepPoint pt;
    pt.value = config.sweep_values[k];
    pt.record = run_solve(config, ds, jobs);
    std::vector<double> fs;
    for (const ImageResult& im : pt.record.images) fs.push_back(im.fscores.front());
    pt.mean_f = mean(fs);
    pt.std_f = sample_std(fs);
    pt.n_images = fs.size();
    out.points.push_back(std::move(pt));
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string sweep_csv(const SweepRecord& sweep) {
  std::string out = "sweep_value,mean_f,std_f,n_images\n";
  for (const SweepPoint& p : sweep.points) {
    out += format_double(p.value) + "," + format_double(p.mean_f) + "," + format_double(p.std_f) + "," +
           std::to_string(p.n_images) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

CertifyRecord run_certify(const ExperimentConfig& config) {
  if (config.kind != ExperimentKind::certify) throw InvalidArgument("certify requires a certify experiment");
  config.validate();
  CertifyRecord rec;
  rec.locations = config.locations;
  std::sort(rec.locations.begin(), rec.locations.end());
  const Domain domain = Domain::unit(1);
  KernelEval ke(std::make_shared<const GaussianPSF>(config.psf_sigma, 1),
                SamplingMeasure::uniform_grid(domain, config.grid_n));
  const double rho = config.rho > 0.0 ? config.rho : default_rho(rec.locations, domain);
  try {
    rec.conditions = check_conditions(ke, rec.locations, domain, config.n_random, rho, config.seed);
    rec.certificate = solve_certificate(ke, rec.locations, domain);
    if (!rec.certificate->valid()) {
      rec.failed_condition = "certificate";
      rec.message = "neither the direct nor the reflected interpolant stays below w";
    }
  } catch (const ConditionFailure& e) {
    rec.failed_condition = e.condition();
    rec.message = e.what();
  }
  return rec;
}

// ---------------------------------------------------------------------------

bool LemmaRecord::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const LemmaRow& r) { return r.passed; });
}

LemmaRecord run_lemmas(const ExperimentConfig& config) {
  if (config.kind != ExperimentKind::lemmas) throw InvalidArgument("verify-lemmas requires a lemmas experiment");
  config.validate();
  LemmaRecord rec;
  const std::size_t r = config.max_order;

  // Shifts p/q with p in [-9, 9], q in [1, 7].
  Rng rng(config.seed);
  std::vector<Rational> c;
  std::string shifts;
  for (std::size_t i = 0; i < r; ++i) {
    const long p = static_cast<long>(rng.below(19)) - 9;
    const long q = static_cast<long>(rng.below(7)) + 1;
    c.emplace_back(p, q);
    if (!shifts.empty()) shifts += " ";
    shifts += c.back().str();
  }

  const FSequenceReport fs = f_sequence_check(r, c);
  for (const FOrderCheck& o : fs.orders) {
    std::string detail = o.passed() ? "identity exact, constant square " + o.constant_square.str()
                                    : "first mismatch at coefficient " + std::to_string(o.first_mismatch);
    if (o.order > 0 && o.order == r) detail += "; shifts " + shifts;
    rec.rows.push_back({"f-sequence", o.order, o.passed(), std::move(detail)});
  }

  const std::vector<Polynomial> p = p_sequence(r, c);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Rational expected = Rational(boost::multiprecision::cpp_int(1) << i);
    const bool ok = p[i].degree() == static_cast<int>(i) && p[i].leading() == expected;
    rec.rows.push_back({"p-leading", i, ok, "leading " + p[i].leading().str() + ", expected " + expected.str()});
  }

  if (config.mc_draws > 0) {
    for (std::size_t M = 1; M <= config.mc_max_sources; ++M) {
      const TsysMonteCarlo mc = gauss_tsys_monte_carlo(M, config.mc_draws, config.seed + M);
      char buf[160];
      std::snprintf(buf, sizeof buf, "%zu draws, min |det|/||A||_F %.3e, sign %+d%s", mc.draws,
                    mc.min_relative, mc.sign, mc.sign_constant ? "" : " (sign changes)");
      rec.rows.push_back({"tsys-det", M, mc.nonzero && mc.sign_constant, buf});
    }
  }
  return rec;
}

std::string lemma_table(const LemmaRecord& record) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-12s %5s  %-6s  ", "check", "order", "result");
  os << buf << "detail\n";
  for (const LemmaRow& row : record.rows) {
    std::snprintf(buf, sizeof buf, "%-12s %5zu  %-6s  ", row.check.c_str(), row.order,
                  row.passed ? "pass" : "FAIL");
    os << buf << row.detail << "\n";
  }
  os << (record.passed() ? "all checks passed\n" : "some checks FAILED\n");
  return os.str();
}

// ---------------------------------------------------------------------------

Demo2dRecord run_demo2d(const ExperimentConfig& config, std::size_t jobs) {
  if (config.kind != ExperimentKind::demo2d) throw InvalidArgument("demo2d requires a demo2d experiment");
  config.validate();
  Demo2dRecord rec;
  rec.pixel = 1.0 / static_cast<double>(config.grid_n);
  rec.radius = rec.pixel / 3.0;
  ExperimentConfig c = config;
  c.radii = {rec.radius};
  const PopulationSpec spec = population_spec(c);
  const Dataset ds{spec, gen_population(spec)};
  rec.record = run_solve(c, ds, jobs);
  return rec;
}

std::string demo2d_truth_csv(const Demo2dRecord& record) {
  std::string out = "frame,x,y,amplitude\n";
  for (std::size_t f = 0; f < record.record.images.size(); ++f) {
    const SourceConfiguration& t = record.record.images[f].truth;
    for (std::size_t i = 0; i < t.size(); ++i) {
      out += std::to_string(f) + "," + format_double(t.locations()[i].x) + "," +
             format_double(t.locations()[i].y) + "," + format_double(t.amplitudes()[i]) + "\n";
    }
  }
  return out;
}

std::string demo2d_estimate_csv(const Demo2dRecord& record) {
  std::string out = "frame,x,y,mass\n";
  for (std::size_t f = 0; f < record.record.images.size(); ++f) {
    for (const Atom& a : record.record.images[f].estimate.atoms) {
      out += std::to_string(f) + "," + format_double(a.location.x) + "," + format_double(a.location.y) +
             "," + format_double(a.mass) + "\n";
    }
  }
  return out;
}

}  // namespace superres
