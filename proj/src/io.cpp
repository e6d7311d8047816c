#include "superres/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace superres {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw InvalidArgument("config: " + what); }

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) bad("unknown key '" + key + "' in " + where);
  }
}

double get_double(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_number()) bad("'" + key + "' must be a number");
  return v.get<double>();
}

// Parsed text gives unsigned for nonnegative literals, but values built in
// code may be signed.
bool is_nonnegative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::size_t get_size(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!is_nonnegative_integer(v)) bad("'" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

bool get_bool(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_boolean()) bad("'" + key + "' must be true or false");
  return v.get<bool>();
}

std::string get_string(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_string()) bad("'" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<double> get_doubles(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_array()) bad("'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const json& x : v) {
    if (!x.is_number()) bad("'" + key + "' must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

TauPolicy::Mode tau_mode_from_string(const std::string& s) {
  for (auto m : {TauPolicy::Mode::oracle, TauPolicy::Mode::scan, TauPolicy::Mode::fixed}) {
    if (to_string(m) == s) return m;
  }
  bad("unknown tau policy '" + s + "'");
}

json point_json(Point p, int dim) {
  return dim == 1 ? json(p.x) : json::array({p.x, p.y});
}

Point point_from_json(const json& j, int dim) {
  if (dim == 1) {
    if (!j.is_number()) throw InvalidArgument("dataset: 1D location must be a number");
    return Point(j.get<double>());
  }
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw InvalidArgument("dataset: 2D location must be [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json truth_json(const SourceConfiguration& truth, int dim) {
  json locs = json::array();
  for (Point p : truth.locations()) locs.push_back(point_json(p, dim));
  return {{"locations", locs}, {"amplitudes", truth.amplitudes()}};
}

json measure_json(const AtomicMeasure& m, int dim) {
  json locs = json::array();
  json masses = json::array();
  for (const Atom& a : m.atoms) {
    locs.push_back(point_json(a.location, dim));
    masses.push_back(a.mass);
  }
  return {{"locations", locs}, {"masses", masses}};
}

int record_dim(const SolveRecord& rec) {
  for (const ImageResult& im : rec.images) {
    for (Point p : im.truth.locations()) if (p.y != 0.0) return 2;
    for (const Atom& a : im.estimate.atoms) if (a.location.y != 0.0) return 2;
  }
  return 1;
}

json solve_record_body(const SolveRecord& rec, int dim) {
  json tau = {{"policy", to_string(rec.tau.mode)}, {"chosen_factor", rec.chosen_factor}};
  switch (rec.tau.mode) {
    case TauPolicy::Mode::oracle:
      tau["factor"] = rec.tau.factor;
      tau["protocol"] = "tau = factor * sum_i w(t_i) c_i of the true sources";
      break;
    case TauPolicy::Mode::fixed:
      tau["value"] = rec.tau.value;
      tau["protocol"] = "tau fixed for every image";
      break;
    case TauPolicy::Mode::scan: {
      tau["scan_points"] = rec.tau.scan_points;
      tau["lo"] = rec.tau.lo;
      tau["hi"] = rec.tau.hi;
      tau["protocol"] =
          "tau = f * oracle tau for f on a logarithmic grid in [lo, hi]; the f with the largest "
          "mean F averaged over all radii is kept for the whole population";
      json scan = json::array();
      for (const TauScanRow& row : rec.scan) scan.push_back({{"factor", row.factor}, {"mean_f", row.mean_f}});
      tau["scan"] = scan;
      break;
    }
  }
  json images = json::array();
  for (std::size_t i = 0; i < rec.images.size(); ++i) {
    const ImageResult& im = rec.images[i];
    images.push_back({{"index", i},
                      {"truth", truth_json(im.truth, dim)},
                      {"estimate", measure_json(im.estimate, dim)},
                      {"tau", im.tau},
                      {"fscores", im.fscores},
                      {"iterations", im.iterations},
                      {"converged", im.converged},
                      {"final_gap", im.final_gap}});
  }
  return {{"weighted", rec.weighted},
          {"radii", rec.radii},
          {"matching",
           "greedy: edges with distance < r taken in ascending (distance, truth index, estimate "
           "index) order; precision = TP/N, recall = TP/M"},
          {"tau", tau},
          {"images", images},
          {"aggregates", {{"n_images", rec.images.size()}, {"mean_f", rec.mean_f}, {"median_f", rec.median_f}}}};
}

}  // namespace

ExperimentConfig config_from_json(const json& j, std::optional<std::uint64_t> seed_override) {
  static const std::set<std::string> top = {
      "schema",  "kind",   "seed",       "psf_sigma", "grid_n",   "count",     "sources",
      "per_region", "margin", "noise_sigma", "tau",  "solver",    "radii",     "unweighted",
      "sweep",   "locations", "n_random", "rho",      "max_order", "mc_draws", "mc_max_sources"};
  reject_unknown(j, top, "config");
  if (!j.contains("schema")) bad("missing 'schema'");
  if (get_string(j, "schema") != ExperimentConfig::schema) {
    bad("unsupported schema '" + get_string(j, "schema") + "', expected " +
        std::string(ExperimentConfig::schema));
  }
  if (!j.contains("kind")) bad("missing 'kind'");
  const ExperimentKind kind = experiment_kind_from_string(get_string(j, "kind"));

  std::uint64_t seed = 0;
  if (j.contains("seed")) {
    if (!is_nonnegative_integer(j["seed"])) bad("'seed' must be a nonnegative integer");
    seed = j["seed"].get<std::uint64_t>();
  } else if (!seed_override) {
    bad("missing 'seed' (mandatory)");
  }
  if (seed_override) seed = *seed_override;

  ExperimentConfig c = default_config(kind, seed);
  if (j.contains("psf_sigma")) c.psf_sigma = get_double(j, "psf_sigma");
  if (j.contains("grid_n")) c.grid_n = get_size(j, "grid_n");
  if (j.contains("count")) c.count = get_size(j, "count");
  if (j.contains("sources")) c.sources = get_size(j, "sources");
  if (j.contains("per_region")) c.per_region = get_size(j, "per_region");
  if (j.contains("margin")) c.margin = get_double(j, "margin");
  if (j.contains("noise_sigma")) c.noise_sigma = get_double(j, "noise_sigma");
  if (j.contains("radii")) c.radii = get_doubles(j, "radii");
  if (j.contains("unweighted")) c.unweighted = get_bool(j, "unweighted");
  if (j.contains("locations")) c.locations = get_doubles(j, "locations");
  if (j.contains("n_random")) c.n_random = get_size(j, "n_random");
  if (j.contains("rho")) c.rho = get_double(j, "rho");
  if (j.contains("max_order")) c.max_order = get_size(j, "max_order");
  if (j.contains("mc_draws")) c.mc_draws = get_size(j, "mc_draws");
  if (j.contains("mc_max_sources")) c.mc_max_sources = get_size(j, "mc_max_sources");

  if (j.contains("tau")) {
    const json& t = j["tau"];
    reject_unknown(t, {"policy", "factor", "scan_points", "lo", "hi", "value"}, "tau");
    if (t.contains("policy")) c.tau.mode = tau_mode_from_string(get_string(t, "policy"));
    if (t.contains("factor")) c.tau.factor = get_double(t, "factor");
    if (t.contains("scan_points")) c.tau.scan_points = get_size(t, "scan_points");
    if (t.contains("lo")) c.tau.lo = get_double(t, "lo");
    if (t.contains("hi")) c.tau.hi = get_double(t, "hi");
    if (t.contains("value")) c.tau.value = get_double(t, "value");
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    reject_unknown(s, {"grid_oversample", "max_iters", "gap_tol", "refine_tol", "merge_tol", "prune_tol",
                       "refine_iters"},
                   "solver");
    if (s.contains("grid_oversample")) c.solver.grid_oversample = get_size(s, "grid_oversample");
    if (s.contains("max_iters")) c.solver.max_iters = get_size(s, "max_iters");
    if (s.contains("gap_tol")) c.solver.gap_tol = get_double(s, "gap_tol");
    if (s.contains("refine_tol")) c.solver.refine_tol = get_double(s, "refine_tol");
    if (s.contains("merge_tol")) c.solver.merge_tol = get_double(s, "merge_tol");
    if (s.contains("prune_tol")) c.solver.prune_tol = get_double(s, "prune_tol");
    if (s.contains("refine_iters")) c.solver.refine_iters = get_size(s, "refine_iters");
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    reject_unknown(s, {"values"}, "sweep");
    if (s.contains("values")) c.sweep_values = get_doubles(s, "values");
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j = {{"schema", ExperimentConfig::schema},
            {"kind", to_string(c.kind)},
            {"seed", c.seed},
            {"psf_sigma", c.psf_sigma},
            {"grid_n", c.grid_n}};
  switch (c.kind) {
    case ExperimentKind::certify:
      j["locations"] = c.locations;
      j["n_random"] = c.n_random;
      j["rho"] = c.rho;
      return j;
    case ExperimentKind::lemmas:
      j["max_order"] = c.max_order;
      j["mc_draws"] = c.mc_draws;
      j["mc_max_sources"] = c.mc_max_sources;
      return j;
    default:
      break;
  }
  j["count"] = c.count;
  j["sources"] = c.sources;
  j["per_region"] = c.per_region;
  j["margin"] = c.margin;
  j["noise_sigma"] = c.noise_sigma;
  j["tau"] = {{"policy", to_string(c.tau.mode)}, {"factor", c.tau.factor}, {"scan_points", c.tau.scan_points},
              {"lo", c.tau.lo}, {"hi", c.tau.hi}, {"value", c.tau.value}};
  j["solver"] = {{"grid_oversample", c.solver.grid_oversample}, {"max_iters", c.solver.max_iters},
                 {"gap_tol", c.solver.gap_tol}, {"refine_tol", c.solver.refine_tol},
                 {"merge_tol", c.solver.merge_tol}, {"prune_tol", c.solver.prune_tol},
                 {"refine_iters", c.solver.refine_iters}};
  j["radii"] = c.radii;
  j["unweighted"] = c.unweighted;
  if (c.kind == ExperimentKind::separation || c.kind == ExperimentKind::noise) {
    j["sweep"] = {{"values", c.sweep_values}};
  }
  return j;
}

// ---------------------------------------------------------------------------

json dataset_to_json(const Dataset& ds) {
  const PopulationSpec& s = ds.spec;
  const int dim = ds.population.domain.dim();
  json items = json::array();
  for (const PopulationItem& item : ds.population.items) {
    items.push_back({{"truth", truth_json(item.truth, dim)},
                     {"noise_seed", item.obs.seed},
                     {"values", item.obs.values}});
  }
  return {{"schema", kDatasetSchema},
          {"population",
           {{"kind", to_string(s.kind)},
            {"count", s.count},
            {"sigma", s.sigma},
            {"n", s.n},
            {"sources", s.sources},
            {"per_region", s.per_region},
            {"separation", s.separation},
            {"noise_sigma", s.noise_sigma},
            {"margin", s.margin},
            {"seed", s.seed}}},
          {"items", items}};
}

Dataset dataset_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("schema", "") != kDatasetSchema) {
      throw InvalidArgument("dataset: missing or unsupported schema, expected " + std::string(kDatasetSchema));
    }
    const json& p = j.at("population");
    PopulationSpec s;
    s.kind = population_kind_from_string(p.at("kind").get<std::string>());
    s.count = p.at("count").get<std::size_t>();
    s.sigma = p.at("sigma").get<double>();
    s.n = p.at("n").get<std::size_t>();
    s.sources = p.at("sources").get<std::size_t>();
    s.per_region = p.at("per_region").get<std::size_t>();
    s.separation = p.at("separation").get<double>();
    s.noise_sigma = p.at("noise_sigma").get<double>();
    s.margin = p.at("margin").get<double>();
    s.seed = p.at("seed").get<std::uint64_t>();
    const int dim = s.kind == PopulationKind::smlm2d ? 2 : 1;
    std::vector<PopulationItem> items;
    for (const json& it : j.at("items")) {
      const json& t = it.at("truth");
      std::vector<Point> locs;
      for (const json& l : t.at("locations")) locs.push_back(point_from_json(l, dim));
      ObservationSet obs{population_sampling(s), it.at("values").get<std::vector<double>>(), s.noise_sigma,
                         it.at("noise_seed").get<std::uint64_t>()};
      items.push_back({SourceConfiguration(std::move(locs), t.at("amplitudes").get<std::vector<double>>()),
                       std::move(obs)});
    }
    return make_dataset(s, std::move(items));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("dataset: malformed file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

json solve_record_to_json(const SolveRecord& rec) {
  json j = {{"schema", kRunSchema}};
  j.update(solve_record_body(rec, record_dim(rec)));
  return j;
}

json sweep_record_to_json(const SweepRecord& rec) {
  json points = json::array();
  for (const SweepPoint& p : rec.points) {
    json body = solve_record_body(p.record, 1);
    points.push_back({{"sweep_value", p.value},
                      {"mean_f", p.mean_f},
                      {"std_f", p.std_f},
                      {"n_images", p.n_images},
                      {"run", body}});
  }
  return {{"schema", kRunSchema}, {"sweep_unit", "psf_sigma"}, {"points", points}};
}

json certify_record_to_json(const CertifyRecord& rec) {
  json j = {{"schema", kRunSchema}, {"locations", rec.locations}, {"valid", rec.valid()}};
  if (!rec.failed_condition.empty()) {
    j["failed_condition"] = rec.failed_condition;
    j["message"] = rec.message;
  }
  if (rec.conditions) {
    const ConditionReport& c = *rec.conditions;
    j["conditions"] = {{"positivity_min_w", c.positivity_min_w},
                       {"independence_min_singular", c.independence_min_singular},
                       {"independence_max_singular", c.independence_max_singular},
                       {"determinantal_min_absdet", c.determinantal_min_absdet},
                       {"determinantal_sign_consistent", c.determinantal_sign_consistent},
                       {"samples_tested", c.samples_tested},
                       {"rho", c.rho},
                       {"warnings", c.warnings}};
  }
  if (rec.certificate) {
    const Certificate& cert = *rec.certificate;
    const MarginReport& m = cert.margin;
    j["certificate"] = {
        {"branch", to_string(cert.branch)},
        {"alpha", std::vector<double>(cert.alpha.data(), cert.alpha.data() + cert.alpha.size())},
        {"beta", std::vector<double>(cert.beta.data(), cert.beta.data() + cert.beta.size())},
        {"warnings", cert.warnings},
        {"margin",
         {{"grid_points", m.grid_points},
          {"off_support_min_margin", m.off_support_min_margin},
          {"off_support_min_relative_margin", m.off_support_min_relative_margin},
          {"max_violation", m.max_violation},
          {"exclusion", m.exclusion},
          {"max_w", m.max_w},
          {"interpolation_residual", m.interpolation_residual},
          {"derivative_residual", m.derivative_residual},
          {"system_residual", m.system_residual}}}};
  }
  return j;
}

json lemma_record_to_json(const LemmaRecord& rec) {
  json rows = json::array();
  for (const LemmaRow& r : rec.rows) {
    rows.push_back({{"check", r.check}, {"order", r.order}, {"passed", r.passed}, {"detail", r.detail}});
  }
  return {{"schema", kRunSchema}, {"passed", rec.passed()}, {"rows", rows}};
}

json demo2d_record_to_json(const Demo2dRecord& rec) {
  json j = {{"schema", kRunSchema}, {"pixel", rec.pixel}, {"radius", rec.radius}};
  j.update(solve_record_body(rec.record, 2));
  return j;
}

// ---------------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("error writing " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace superres
