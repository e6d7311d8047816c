#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "superres/certificate.hpp"
#include "superres/eval.hpp"
#include "superres/experiment.hpp"
#include "superres/io.hpp"
#include "superres/simulate.hpp"
#include "superres/solver.hpp"
#include "superres/tsystems.hpp"

namespace py = pybind11;
using namespace superres;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Accepts shape (n,) for 1D locations and (n, 2) for 2D.
std::vector<Point> to_points(const Array& a, int& dim) {
  if (a.ndim() == 1) {
    dim = 1;
    std::vector<Point> out;
    for (py::ssize_t i = 0; i < a.shape(0); ++i) out.emplace_back(a.at(i));
    return out;
  }
  if (a.ndim() == 2 && a.shape(1) == 2) {
    dim = 2;
    std::vector<Point> out;
    for (py::ssize_t i = 0; i < a.shape(0); ++i) out.emplace_back(a.at(i, 0), a.at(i, 1));
    return out;
  }
  throw InvalidArgument("locations must have shape (n,) or (n, 2)");
}

std::vector<Point> to_points(const Array& a, int expected_dim, const char* what) {
  int dim = 0;
  auto pts = to_points(a, dim);
  if (!pts.empty() && dim != expected_dim) {
    throw InvalidArgument(std::string(what) + ": dimension does not match the samples");
  }
  return pts;
}

py::array_t<double> from_points(const std::vector<Point>& pts, int dim) {
  if (dim == 1) {
    py::array_t<double> out(static_cast<py::ssize_t>(pts.size()));
    auto m = out.mutable_unchecked<1>();
    for (std::size_t i = 0; i < pts.size(); ++i) m(static_cast<py::ssize_t>(i)) = pts[i].x;
    return out;
  }
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(static_cast<py::ssize_t>(i), 0) = pts[i].x;
    m(static_cast<py::ssize_t>(i), 1) = pts[i].y;
  }
  return out;
}

py::array_t<double> from_vector(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw InvalidArgument("expected a one-dimensional array");
  return {a.data(), a.data() + a.size()};
}

SamplingMeasure to_sampling(const Array& samples, int& dim) {
  std::vector<Point> pts = to_points(samples, dim);
  return SamplingMeasure::counting(std::move(pts), dim);
}

Domain default_domain(int dim) { return Domain::unit(dim); }

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json py_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict solve_py(const Array& values, const Array& samples, double sigma, double tau, bool weighted,
                  std::size_t max_iters, double gap_tol, std::size_t grid_oversample) {
  int dim = 0;
  SamplingMeasure S = to_sampling(samples, dim);
  auto psf = std::make_shared<GaussianPSF>(sigma, dim);
  const Domain domain = default_domain(dim);
  const WeightFunction w = weighted ? WeightFunction::from_sampling(psf, S) : WeightFunction::unit();
  ObservationSet obs{S, to_vector(values), 0.0, 0};
  if (obs.values.size() != S.size()) throw InvalidArgument("solve: values and samples differ in length");
  SolverOptions opts;
  opts.tau = tau;
  opts.max_iters = max_iters;
  opts.gap_tol = gap_tol;
  opts.grid_oversample = grid_oversample;
  SolveResult res;
  {
    py::gil_scoped_release release;
    res = solve(obs, *psf, w, domain, opts);
  }
  py::dict d;
  d["locations"] = from_points(res.measure.locations(), dim);
  d["masses"] = from_vector(res.measure.masses());
  d["objective_trace"] = from_vector(res.objective_trace);
  d["gap_trace"] = from_vector(res.gap_trace);
  d["final_gap"] = res.final_gap;
  d["iterations"] = res.iterations;
  d["converged"] = res.converged;
  return d;
}

}  // namespace

PYBIND11_MODULE(_superres, m) {
  m.doc() = "Gridless sparse deconvolution under a weighted mass budget.";

  static py::exception<ConditionFailure> condition_error(m, "ConditionFailure", PyExc_RuntimeError);
  static py::exception<VerificationFailure> verification_error(m, "VerificationFailure", PyExc_RuntimeError);
  static py::exception<Unsupported> unsupported_error(m, "Unsupported", PyExc_NotImplementedError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConditionFailure& e) {
      py::object exc = py::reinterpret_borrow<py::object>(condition_error)(e.what());
      exc.attr("condition") = e.condition();
      PyErr_SetObject(condition_error.ptr(), exc.ptr());
    } catch (const VerificationFailure& e) {
      py::set_error(verification_error, e.what());
    } catch (const Unsupported& e) {
      py::set_error(unsupported_error, e.what());
    } catch (const IoError& e) {
      py::set_error(PyExc_OSError, e.what());
    }
  });

  m.def(
      "psf",
      [](const Array& s, const Array& t, double sigma) {
        int ds = 0, dt = 0;
        const auto S = to_points(s, ds);
        const auto T = to_points(t, dt);
        if (ds != dt) throw InvalidArgument("psf: s and t differ in dimension");
        GaussianPSF psf(sigma, ds);
        py::array_t<double> out({static_cast<py::ssize_t>(S.size()), static_cast<py::ssize_t>(T.size())});
        auto o = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < S.size(); ++i)
          for (std::size_t j = 0; j < T.size(); ++j)
            o(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = psf_eval(psf, S[i], T[j]);
        return out;
      },
      py::arg("s"), py::arg("t"), py::arg("sigma"), "Matrix psi(s_i, t_j) of the Gaussian PSF.");

  m.def(
      "weight",
      [](const Array& t, const Array& samples, double sigma) {
        int dim = 0;
        const SamplingMeasure S = to_sampling(samples, dim);
        GaussianPSF psf(sigma, dim);
        std::vector<double> out;
        for (Point p : to_points(t, dim, "weight")) out.push_back(weight(psf, S, p));
        return from_vector(out);
      },
      py::arg("t"), py::arg("samples"), py::arg("sigma"), "w(t) = sum_i psi(s_i, t) for unit sample weights.");

  m.def(
      "synthesize",
      [](const Array& locations, const Array& amplitudes, const Array& samples, double sigma, double noise_sigma,
         std::uint64_t seed) {
        int dim = 0;
        const SamplingMeasure S = to_sampling(samples, dim);
        GaussianPSF psf(sigma, dim);
        const SourceConfiguration truth(to_points(locations, dim, "synthesize"), to_vector(amplitudes));
        ObservationSet obs = synthesize(truth, psf, S);
        if (noise_sigma > 0.0) obs = add_noise(obs, noise_sigma, seed);
        return from_vector(obs.values);
      },
      py::arg("locations"), py::arg("amplitudes"), py::arg("samples"), py::arg("sigma"),
      py::arg("noise_sigma") = 0.0, py::arg("seed") = 0,
      "Observed values at the samples, with optional seeded Gaussian noise.");

  m.def(
      "weighted_mass",
      [](const Array& locations, const Array& amplitudes, const Array& samples, double sigma) {
        int dim = 0;
        SamplingMeasure S = to_sampling(samples, dim);
        auto psf = std::make_shared<GaussianPSF>(sigma, dim);
        const SourceConfiguration truth(to_points(locations, dim, "weighted_mass"), to_vector(amplitudes));
        return truth.weighted_mass(WeightFunction::from_sampling(psf, std::move(S)));
      },
      py::arg("locations"), py::arg("amplitudes"), py::arg("samples"), py::arg("sigma"),
      "sum_i w(t_i) c_i, the smallest budget under which the sources are feasible.");

  m.def("solve", &solve_py, py::arg("values"), py::arg("samples"), py::arg("sigma"), py::arg("tau"),
        py::arg("weighted") = true, py::arg("max_iters") = 100, py::arg("gap_tol") = 1e-10,
        py::arg("grid_oversample") = 10,
        "Budget-constrained least squares over measures on [0,1] (or the unit square for (n, 2) samples).");

  m.def(
      "certificate",
      [](std::vector<double> locations, const Array& samples, double sigma) {
        int dim = 0;
        const SamplingMeasure S = to_sampling(samples, dim);
        const KernelEval ke(std::make_shared<GaussianPSF>(sigma, dim), S);
        const Certificate c = solve_certificate(ke, locations, Domain::unit(1));
        py::dict d;
        d["valid"] = c.valid();
        d["branch"] = to_string(c.branch);
        d["alpha"] = std::vector<double>(c.alpha.data(), c.alpha.data() + c.alpha.size());
        d["beta"] = std::vector<double>(c.beta.data(), c.beta.data() + c.beta.size());
        d["min_margin"] = c.margin.off_support_min_margin;
        d["interpolation_residual"] = c.margin.interpolation_residual;
        d["derivative_residual"] = c.margin.derivative_residual;
        d["warnings"] = c.warnings;
        return d;
      },
      py::arg("locations"), py::arg("samples"), py::arg("sigma"),
      "Dual certificate for sorted, distinct 1D sources on [0, 1].");

  m.def(
      "score",
      [](const Array& truth, const Array& estimate, double r) {
        int dim = 0;
        const auto T = to_points(truth, dim);
        const auto E = to_points(estimate, dim);
        const MatchResult res = score_estimate(T, E, r);
        py::dict d;
        d["precision"] = res.precision;
        d["recall"] = res.recall;
        d["fscore"] = res.fscore;
        d["tp"] = res.tp;
        d["fp"] = res.fp;
        d["fn"] = res.fn;
        return d;
      },
      py::arg("truth"), py::arg("estimate"), py::arg("r"), "Greedy matching within radius r and the F-score.");

  m.def(
      "f_sequence_check",
      [](std::size_t r, const std::vector<std::pair<long long, long long>>& shifts) {
        std::vector<Rational> c;
        for (auto [p, q] : shifts) c.emplace_back(p, q);
        return f_sequence_check(r, c).passed();
      },
      py::arg("r"), py::arg("shifts"), "Exact sum-of-squares identity for f_0..f_r; shifts are (p, q) rationals.");

  m.def("gauss_tsys_det", &gauss_tsys_det, py::arg("s"), py::arg("t"));

  m.def(
      "run_experiment",
      [](const py::object& config, std::size_t jobs) {
        const ExperimentConfig cfg = config_from_json(py_to_json(config));
        nlohmann::json out;
        {
          py::gil_scoped_release release;
          switch (cfg.kind) {
            case ExperimentKind::boundary:
            case ExperimentKind::central: {
              const Dataset ds = simulate_datasets(cfg).front();
              out = solve_record_to_json(run_solve(cfg, ds, jobs));
              break;
            }
            case ExperimentKind::separation:
            case ExperimentKind::noise: out = sweep_record_to_json(run_sweep(cfg, jobs)); break;
            case ExperimentKind::certify: out = certify_record_to_json(run_certify(cfg)); break;
            case ExperimentKind::lemmas: out = lemma_record_to_json(run_lemmas(cfg)); break;
            case ExperimentKind::demo2d: out = demo2d_record_to_json(run_demo2d(cfg, jobs)); break;
          }
        }
        out["config"] = config_to_json(cfg);
        return json_to_py(out);
      },
      py::arg("config"), py::arg("jobs") = 1,
      "Runs an experiment config (same JSON schema as the command-line tool) and returns its record.");

  m.def(
      "default_config",
      [](const std::string& kind, std::uint64_t seed) {
        return json_to_py(config_to_json(default_config(experiment_kind_from_string(kind), seed)));
      },
      py::arg("kind"), py::arg("seed"));
}
