// superres: dataset generation, solving, sweeps, certificates, lemma checks
// and the 2D demo. Every output file is a pure function of (config, seed);
// wall-clock times go to a separate timing.json.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "superres/experiment.hpp"
#include "superres/io.hpp"

namespace fs = std::filesystem;
using namespace superres;

namespace {

enum Exit { kOk = 0, kIo = 1, kValidation = 2, kCondition = 3, kLemma = 4 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool unweighted = false;
  std::string out_dir = ".";
  std::size_t jobs = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Seed; overrides the config");
  sub->add_flag("--unweighted", c.unweighted, "Solve with w = 1 instead of the induced weight");
  sub->add_option("--out", c.out_dir, "Output directory");
  sub->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

// Loads --config, or builds the default config of `fallback` (which then
// needs --seed). The kind must be one of `allowed`.
ExperimentConfig load_config(const Common& c, ExperimentKind fallback,
                             std::initializer_list<ExperimentKind> allowed, const std::string& command) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) {
    cfg = config_from_json(read_json_file(c.config_path), c.seed);
  } else {
    if (!c.seed) throw InvalidArgument(command + ": a seed is mandatory (--seed or a config file)");
    cfg = default_config(fallback, *c.seed);
  }
  bool ok = false;
  for (ExperimentKind k : allowed) ok = ok || k == cfg.kind;
  if (!ok) {
    throw InvalidArgument(command + ": experiment kind '" + std::string(to_string(cfg.kind)) +
                          "' is not valid for this command");
  }
  if (c.unweighted) cfg.unweighted = true;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::path dir(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_timing(const fs::path& dir, const std::string& command, double seconds, std::size_t jobs) {
  write_json_file(dir / "timing.json", {{"command", command}, {"wall_seconds", seconds}, {"jobs", jobs}});
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string format_scores(const std::vector<double>& radii, const std::vector<double>& mean_f) {
  std::string s;
  for (std::size_t q = 0; q < radii.size(); ++q) {
    s += "  r=" + std::to_string(radii[q]) + "  mean F=" + std::to_string(mean_f[q]) + "\n";
  }
  return s;
}

int cmd_simulate(const Common& c) {
  const ExperimentConfig cfg =
      load_config(c, ExperimentKind::central,
                  {ExperimentKind::boundary, ExperimentKind::central, ExperimentKind::separation,
                   ExperimentKind::noise, ExperimentKind::demo2d},
                  "simulate");
  const fs::path dir = out_dir(c);
  const std::vector<Dataset> sets = simulate_datasets(cfg);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    char name[32];
    if (sets.size() == 1) {
      std::snprintf(name, sizeof name, "dataset.json");
    } else {
      std::snprintf(name, sizeof name, "dataset_%03zu.json", i);
    }
    write_json_file(dir / name, dataset_to_json(sets[i]));
    std::cout << (dir / name).string() << ": " << sets[i].population.items.size() << " images\n";
  }
  return kOk;
}

ExperimentKind kind_for_dataset(PopulationKind k) {
  switch (k) {
    case PopulationKind::boundary: return ExperimentKind::boundary;
    case PopulationKind::central: return ExperimentKind::central;
    case PopulationKind::pair: return ExperimentKind::separation;
    case PopulationKind::smlm2d: return ExperimentKind::demo2d;
  }
  return ExperimentKind::central;
}

int cmd_solve(const Common& c, const std::string& dataset_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = dataset_from_json(read_json_file(dataset_path));
  ExperimentConfig cfg;
  if (!c.config_path.empty()) {
    cfg = load_config(c, ExperimentKind::central,
                      {ExperimentKind::boundary, ExperimentKind::central, ExperimentKind::separation,
                       ExperimentKind::noise, ExperimentKind::demo2d},
                      "solve");
  } else {
    cfg = default_config(kind_for_dataset(ds.spec.kind), c.seed.value_or(ds.spec.seed));
    cfg.psf_sigma = ds.spec.sigma;
    cfg.grid_n = ds.spec.n;
    cfg.count = ds.spec.count;
    cfg.noise_sigma = ds.spec.noise_sigma;
    if (ds.spec.kind == PopulationKind::pair) cfg.sweep_values = {ds.spec.separation / ds.spec.sigma};
    if (ds.spec.kind == PopulationKind::smlm2d) cfg.radii = {1.0 / (3.0 * static_cast<double>(ds.spec.n))};
    cfg.unweighted = c.unweighted;
    cfg.validate();
  }
  const fs::path dir = out_dir(c);
  const SolveRecord rec = run_solve(cfg, ds, c.jobs);
  nlohmann::json j = solve_record_to_json(rec);
  j["config"] = config_to_json(cfg);
  write_json_file(dir / "run.json", j);
  write_timing(dir, "solve", since(t0), c.jobs);
  std::cout << rec.images.size() << " images, " << (rec.weighted ? "weighted" : "unweighted")
            << ", tau factor " << rec.chosen_factor << "\n"
            << format_scores(rec.radii, rec.mean_f);
  return kOk;
}

int cmd_sweep(const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg =
      load_config(c, ExperimentKind::separation, {ExperimentKind::separation, ExperimentKind::noise}, "sweep");
  const fs::path dir = out_dir(c);
  const SweepRecord rec = run_sweep(cfg, c.jobs);
  const std::string csv = sweep_csv(rec);
  write_text_file(dir / "sweep.csv", csv);
  nlohmann::json j = sweep_record_to_json(rec);
  j["config"] = config_to_json(cfg);
  write_json_file(dir / "sweep.json", j);
  write_timing(dir, "sweep", since(t0), c.jobs);
  std::cout << csv;
  return kOk;
}

int cmd_certify(const Common& c) {
  const ExperimentConfig cfg = load_config(c, ExperimentKind::certify, {ExperimentKind::certify}, "certify");
  const fs::path dir = out_dir(c);
  const CertifyRecord rec = run_certify(cfg);
  nlohmann::json j = certify_record_to_json(rec);
  j["config"] = config_to_json(cfg);
  write_json_file(dir / "certificate.json", j);
  if (rec.valid()) {
    const MarginReport& m = rec.certificate->margin;
    std::cout << "valid certificate (" << to_string(rec.certificate->branch) << " branch), min margin "
              << m.off_support_min_margin << ", interpolation residual " << m.interpolation_residual << "\n";
    return kOk;
  }
  std::cout << "certificate invalid (" << rec.failed_condition << "): " << rec.message << "\n";
  return kCondition;
}

int cmd_verify_lemmas(const Common& c, std::optional<std::size_t> max_order) {
  ExperimentConfig cfg = load_config(c, ExperimentKind::lemmas, {ExperimentKind::lemmas}, "verify-lemmas");
  if (max_order) {
    cfg.max_order = *max_order;
    cfg.validate();
  }
  const fs::path dir = out_dir(c);
  const LemmaRecord rec = run_lemmas(cfg);
  nlohmann::json j = lemma_record_to_json(rec);
  j["config"] = config_to_json(cfg);
  write_json_file(dir / "lemmas.json", j);
  std::cout << lemma_table(rec);
  return rec.passed() ? kOk : kLemma;
}

int cmd_demo2d(const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = load_config(c, ExperimentKind::demo2d, {ExperimentKind::demo2d}, "demo2d");
  const fs::path dir = out_dir(c);
  const Demo2dRecord rec = run_demo2d(cfg, c.jobs);
  nlohmann::json j = demo2d_record_to_json(rec);
  j["config"] = config_to_json(cfg);
  write_json_file(dir / "demo2d.json", j);
  write_text_file(dir / "truth.csv", demo2d_truth_csv(rec));
  write_text_file(dir / "estimate.csv", demo2d_estimate_csv(rec));
  write_timing(dir, "demo2d", since(t0), c.jobs);
  std::cout << rec.record.images.size() << " frames, r = pixel/3 = " << rec.radius
            << ", mean F = " << rec.record.mean_f.front() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gridless sparse deconvolution: simulate, solve, sweep, certify, verify-lemmas, demo2d"};
  app.require_subcommand(1);
  Common common;
  std::string dataset_path;
  std::optional<std::size_t> max_order;

  auto* simulate = app.add_subcommand("simulate", "Write datasets generated from the config");
  auto* solve = app.add_subcommand("solve", "Solve every image of a dataset and score it");
  auto* sweep = app.add_subcommand("sweep", "Separation or noise sweep; writes sweep.csv");
  auto* certify = app.add_subcommand("certify", "Check the conditions and build the dual certificate");
  auto* lemmas = app.add_subcommand("verify-lemmas", "Exact polynomial identities and determinant signs");
  auto* demo2d = app.add_subcommand("demo2d", "Two-dimensional localization demo");
  for (auto* sub : {simulate, solve, sweep, certify, lemmas, demo2d}) add_common(sub, common);
  solve->add_option("dataset", dataset_path, "Dataset JSON written by simulate")->required()->check(CLI::ExistingFile);
  lemmas->add_option("--max-order", max_order, "Highest order of the f-sequence check (<= 8)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common);
    if (solve->parsed()) return cmd_solve(common, dataset_path);
    if (sweep->parsed()) return cmd_sweep(common);
    if (certify->parsed()) return cmd_certify(common);
    if (lemmas->parsed()) return cmd_verify_lemmas(common, max_order);
    if (demo2d->parsed()) return cmd_demo2d(common);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ConditionFailure& e) {
    std::cerr << "condition failure (" << e.condition() << "): " << e.what() << "\n";
    return kCondition;
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return kLemma;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const Unsupported& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kValidation;
}
