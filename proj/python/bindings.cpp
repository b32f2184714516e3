#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "commands.hpp"
#include "sdemem/aux_random.hpp"
#include "sdemem/diagnostics.hpp"
#include "sdemem/error.hpp"
#include "sdemem/filters.hpp"
#include "sdemem/models.hpp"

namespace py = pybind11;
using namespace sdemem;

namespace {

UnitData make_unit(const std::vector<double>& times, const Eigen::MatrixXd& obs) {
  if (obs.rows() != static_cast<Eigen::Index>(times.size()))
    throw InvalidConfiguration("obs must have one row per time point");
  return UnitData{"0", times, obs};
}

py::dict simulate(const std::string& model_name, std::size_t units, std::size_t observations, double dt,
                  std::uint64_t seed, const Eigen::VectorXd& mu, const Eigen::VectorXd& tau,
                  const Eigen::VectorXd& xi, const Eigen::VectorXd& kappa, int substeps) {
  const auto model = make_model(model_name);
  SimulationSettings s;
  s.units = units;
  s.observations = observations;
  s.dt = dt;
  s.seed = seed;
  s.substeps = substeps;
  const auto sim = simulate_dataset(*model, Hyperparameters{mu, tau}, std::nullopt, kappa, xi, s);
  py::list times, obs;
  for (const auto& u : sim.data.units) {
    times.append(py::cast(Eigen::Map<const Eigen::VectorXd>(u.times.data(), static_cast<Eigen::Index>(u.size()))
                              .eval()));
    obs.append(py::cast(u.obs));
  }
  py::dict out;
  out["times"] = times;
  out["obs"] = obs;
  out["phi"] = sim.truth.phi;
  out["latent"] = sim.latent;
  return out;
}

double loglik(const std::string& model_name, const std::vector<double>& times, const Eigen::MatrixXd& obs,
              const Eigen::VectorXd& phi, const Eigen::VectorXd& xi, const std::string& filter,
              std::size_t particles, std::uint64_t seed, bool sort, std::size_t substeps,
              const Eigen::VectorXd& kappa) {
  const auto model = make_model(model_name);
  const UnitData unit = make_unit(times, obs);
  FilterSpec spec;
  spec.kind = filter_kind_from_string(filter);
  spec.sort = sort;
  spec.substeps = substeps;
  validate_filter(*model, spec);
  if (!is_stochastic(spec.kind)) return evaluate_unit(*model, spec, unit, kappa, phi, xi, nullptr).loglik;
  Rng rng = substream(seed, 0, 0, StreamPurpose::aux);
  const AuxStream u = init_stream(0, stream_shape(*model, spec, unit, particles), rng);
  return evaluate_unit(*model, spec, unit, kappa, phi, xi, &u).loglik;
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bayesian inference for stochastic differential equation mixed-effects models";

  auto base = py::register_exception<Error>(m, "SdememError", PyExc_RuntimeError);
  py::register_exception<InvalidConfiguration>(m, "InvalidConfiguration", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());

  m.def("simulate", &simulate, py::arg("model"), py::arg("units"), py::arg("observations"), py::arg("dt"),
        py::arg("seed"), py::arg("mu"), py::arg("tau"), py::arg("xi"), py::arg("kappa") = Eigen::VectorXd(0),
        py::arg("substeps") = 1,
        "Simulate a dataset. Returns a dict with per-unit 'times', 'obs', 'latent' and the drawn 'phi'.");

  m.def("loglik", &loglik, py::arg("model"), py::arg("times"), py::arg("obs"), py::arg("phi"), py::arg("xi"),
        py::arg("filter") = "bootstrap", py::arg("particles") = 100, py::arg("seed") = 1, py::arg("sort") = false,
        py::arg("substeps") = 1, py::arg("kappa") = Eigen::VectorXd(0),
        "Log-likelihood of one unit: exact for 'kalman', 'lna' and 'closed-form', estimated otherwise.");

  m.def(
      "ess", [](const std::vector<double>& chain) { return ess(chain); }, py::arg("chain"));
  m.def("mess", &mess, py::arg("draws"), "Minimum ESS over the columns of a draws matrix.");
  m.def(
      "wasserstein1d", [](const std::vector<double>& a, const std::vector<double>& b) { return wasserstein1d(a, b); },
      py::arg("a"), py::arg("b"));
  m.def(
      "systematic_resample",
      [](const std::vector<double>& w, double u) { return systematic_resample(w, u); }, py::arg("weights"),
      py::arg("uniform"));
  m.def(
      "sort_particles", [](const Eigen::MatrixXd& x) { return sort_particles(x); }, py::arg("x"),
      "Permutation ordering the columns of a d x N particle matrix.");
  m.def("run_cli", &run_cli, py::arg("args"), "Run a command-line invocation; returns (exit_code, stdout, stderr).");
}
