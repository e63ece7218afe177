#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "fafed/cli.hpp"
#include "fafed/compare.hpp"
#include "fafed/config.hpp"
#include "fafed/engine.hpp"
#include "fafed/metrics.hpp"
#include "fafed/problems.hpp"
#include "fafed/record_io.hpp"

namespace py = pybind11;
using namespace fafed;

namespace {

py::dict record_columns(const RunRecord& rec) {
  std::vector<std::int64_t> t, samples, comms;
  std::vector<double> loss, grad_norm, mt, cons, wall;
  for (const auto& r : rec.rows) {
    t.push_back(r.t);
    loss.push_back(r.loss);
    grad_norm.push_back(r.grad_norm);
    mt.push_back(r.metric_mt);
    cons.push_back(r.consensus_err);
    samples.push_back(r.samples);
    comms.push_back(r.comms);
    wall.push_back(r.wall_ms);
  }
  py::dict d;
  d["t"] = t;
  d["loss"] = loss;
  d["grad_norm"] = grad_norm;
  d["metric_mt"] = mt;
  d["consensus_err"] = cons;
  d["samples"] = samples;
  d["comms"] = comms;
  d["wall_ms"] = wall;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated adaptive optimization simulator";

  py::enum_<ProblemKind>(m, "ProblemKind")
      .value("CounterExample1D", ProblemKind::CounterExample1D)
      .value("HeterogeneousQuadratic", ProblemKind::HeterogeneousQuadratic)
      .value("SyntheticLogistic", ProblemKind::SyntheticLogistic);

  py::enum_<Algorithm>(m, "Algorithm")
      .value("Fafed", Algorithm::Fafed)
      .value("NaiveAdaptive", Algorithm::NaiveAdaptive)
      .value("FedAvg", Algorithm::FedAvg)
      .value("FedAdam", Algorithm::FedAdam);

  py::enum_<EtaMode>(m, "EtaMode")
      .value("Decaying", EtaMode::Decaying)
      .value("Constant", EtaMode::Constant);

  py::class_<Problem, std::shared_ptr<Problem>>(m, "Problem")
      .def_property_readonly("kind", &Problem::kind)
      .def_property_readonly("n_clients", &Problem::n_clients)
      .def_property_readonly("dim", &Problem::dim)
      .def("local_size", &Problem::local_size)
      .def("grad_exact", &Problem::grad_exact)
      .def("loss", &Problem::loss)
      .def("global_loss", &Problem::global_loss)
      .def("global_grad", &Problem::global_grad)
      .def("describe", &Problem::describe);

  m.def("make_counterexample", [] { return std::make_shared<Problem>(make_counterexample()); });
  m.def(
      "make_quadratic",
      [](std::size_t n_clients, std::size_t dim, double center_spread, double noise_sigma,
         std::uint64_t seed) {
        QuadraticOptions o;
        o.n_clients = n_clients;
        o.dim = dim;
        o.center_spread = center_spread;
        o.noise_sigma = noise_sigma;
        o.seed = seed;
        return std::make_shared<Problem>(make_quadratic(o));
      },
      py::arg("n_clients") = 8, py::arg("dim") = 20, py::arg("center_spread") = 2.0,
      py::arg("noise_sigma") = 0.5, py::arg("seed") = 0);
  m.def(
      "make_logistic",
      [](std::size_t n_clients, std::size_t dim, std::size_t samples_per_client,
         double label_skew, std::uint64_t seed) {
        LogisticOptions o;
        o.n_clients = n_clients;
        o.dim = dim;
        o.samples_per_client = samples_per_client;
        o.label_skew = label_skew;
        o.seed = seed;
        return std::make_shared<Problem>(make_logistic(o));
      },
      py::arg("n_clients") = 8, py::arg("dim") = 10, py::arg("samples_per_client") = 200,
      py::arg("label_skew") = 0.0, py::arg("seed") = 0);

  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init<>())
      .def_readwrite("beta", &HyperParams::beta)
      .def_readwrite("rho", &HyperParams::rho)
      .def_readwrite("c", &HyperParams::c)
      .def_readwrite("q", &HyperParams::q)
      .def_readwrite("b", &HyperParams::b)
      .def_readwrite("init_batch", &HyperParams::init_batch)
      .def_readwrite("w", &HyperParams::w)
      .def_readwrite("rho_hbar", &HyperParams::rho_hbar)
      .def_readwrite("eta_mode", &HyperParams::eta_mode)
      .def_readwrite("eta", &HyperParams::eta)
      .def_readwrite("full_batch", &HyperParams::full_batch)
      .def_readwrite("naive_v0", &HyperParams::naive_v0)
      .def_readwrite("beta1", &HyperParams::beta1)
      .def_readwrite("beta2", &HyperParams::beta2)
      .def_readwrite("tau", &HyperParams::tau)
      .def_readwrite("eta_global", &HyperParams::eta_global)
      .def("validate", &HyperParams::validate);

  m.def("default_hyper_params", &default_hyper_params);
  m.def("parse_algorithm", [](const std::string& s) { return parse_algorithm(s); });
  m.def("eta_schedule", &eta_schedule);
  m.def("metric_Mt", &metric_Mt, py::arg("x_next"), py::arg("x_now"), py::arg("grad"),
        py::arg("m_bar"), py::arg("eta"), py::arg("rho"));
  m.def("finite_diff_check",
        py::overload_cast<const Problem&, const Vector&, double>(&finite_diff_check),
        py::arg("problem"), py::arg("point"), py::arg("step") = 1e-6);

  m.def(
      "run_experiment",
      [](Algorithm algo, std::shared_ptr<Problem> problem, const HyperParams& hp,
         std::int64_t total_steps, std::uint64_t seed, std::int64_t record_every,
         double x0_fill, std::size_t workers, bool audit) {
        RunConfig cfg;
        cfg.algorithm = algo;
        cfg.problem = std::move(problem);
        cfg.hp = hp;
        cfg.total_steps = total_steps;
        cfg.seed = seed;
        cfg.record_every = record_every;
        cfg.x0_fill = x0_fill;
        cfg.workers = workers;
        cfg.audit = audit;
        RunResult res;
        {
          py::gil_scoped_release release;
          res = run_experiment(cfg);
        }
        py::dict out;
        out["record"] = record_columns(res.record);
        out["diverged"] = res.record.diverged;
        out["diverged_at"] = res.record.diverged_at;
        out["csv"] = to_csv(res.record);
        std::vector<Vector> xs;
        for (const auto& c : res.final_state.clients) xs.push_back(c.x);
        out["final_x"] = xs;
        if (audit) {
          py::dict checks;
          for (const auto& c : verify_trace(res.trace)) checks[py::str(c.name)] = c.passed;
          out["checks"] = checks;
        }
        return out;
      },
      py::arg("algorithm"), py::arg("problem"), py::arg("hp"), py::arg("total_steps"),
      py::arg("seed") = 0, py::arg("record_every") = 1, py::arg("x0_fill") = 0.0,
      py::arg("workers") = 1, py::arg("audit") = false);

  m.def(
      "reproduce_counterexample",
      [](std::int64_t steps, double eta, double beta, double x0) {
        const auto rep = reproduce_counterexample(steps, eta, beta, x0);
        py::dict out;
        std::vector<double> xb, pred, obs;
        for (const auto& r : rep.rows) {
          xb.push_back(r.x_bar);
          pred.push_back(r.predicted);
          obs.push_back(r.observed);
        }
        out["x_bar"] = xb;
        out["predicted"] = pred;
        out["observed"] = obs;
        out["clients_after_first"] = rep.clients_after_first;
        out["max_abs_diff"] = rep.max_abs_diff;
        return out;
      },
      py::arg("steps") = 50, py::arg("eta") = 0.1, py::arg("beta") = 0.5, py::arg("x0") = 10.0);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli_main(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "Run the command-line tool in-process; returns (exit code, stdout, stderr).");

  m.attr("CSV_HEADER") = kCsvHeader;
}
