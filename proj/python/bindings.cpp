#include "kanlab/bench.hpp"
#include "kanlab/cli.hpp"
#include "kanlab/init.hpp"
#include "kanlab/io.hpp"
#include "kanlab/kan.hpp"
#include "kanlab/ntk.hpp"
#include "kanlab/special.hpp"
#include "kanlab/spline.hpp"
#include "kanlab/tasks_fit.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>

namespace py = pybind11;
using namespace kanlab;

namespace {

RunSpec make_spec(const std::string& task, std::vector<int> widths, int grid, int k, const std::string& scheme,
                  double alpha, double beta, std::uint64_t seed, int epochs) {
  return RunSpec{task, std::move(widths), grid, k, parse_scheme(scheme, alpha, beta), seed, epochs};
}

py::dict record_dict(const TrainRecord& r) {
  py::dict d;
  d["fingerprint"] = r.fingerprint;
  d["task"] = r.spec.task;
  d["widths"] = r.spec.widths;
  d["scheme"] = scheme_name(r.spec.scheme);
  d["seed"] = r.spec.seed;
  d["epochs"] = r.spec.epochs;
  d["initial_loss"] = r.initial_loss;
  d["loss_history"] = r.loss_history;
  d["final_loss"] = r.final_loss;
  d["rel_l2"] = r.rel_l2;
  d["diverged"] = r.diverged;
  d["wall_time_s"] = r.wall_time_s;
  return d;
}

py::dict row_dict(const ResultRow& r) {
  py::dict d;
  d["task"] = r.task;
  d["depth"] = r.depth;
  d["width"] = r.width;
  d["G"] = r.grid;
  d["scheme"] = r.scheme;
  d["alpha"] = r.alpha;
  d["beta"] = r.beta;
  d["seed"] = r.seed;
  d["final_loss"] = r.final_loss;
  d["rel_l2"] = r.rel_l2;
  d["diverged"] = r.diverged;
  d["wall_time_s"] = r.wall_time_s;
  return d;
}

}  // namespace

PYBIND11_MODULE(_kanlab, m) {
  m.doc() = "Kolmogorov-Arnold network engine, initialization schemes and benchmarks";
  py::register_exception<Error>(m, "KanlabError", PyExc_RuntimeError);

  m.def(
      "basis_values",
      [](double x, double lo, double hi, int grid, int k) { return basis_values(x, KnotVector(lo, hi, grid, k)); },
      py::arg("x"), py::arg("lo") = -1.0, py::arg("hi") = 1.0, py::arg("grid") = 5, py::arg("k") = 3);
  m.def(
      "basis_derivatives",
      [](double x, int order, double lo, double hi, int grid, int k) {
        return basis_derivatives(x, KnotVector(lo, hi, grid, k), order);
      },
      py::arg("x"), py::arg("order"), py::arg("lo") = -1.0, py::arg("hi") = 1.0, py::arg("grid") = 5,
      py::arg("k") = 3);

  py::class_<KanNetwork>(m, "Network")
      .def(py::init([](const std::vector<int>& widths, int grid, int k, double lo, double hi, bool normalized) {
             return make_network(widths, grid, k, lo, hi, normalized);
           }),
           py::arg("widths"), py::arg("grid") = 5, py::arg("k") = 3, py::arg("lo") = -1.0, py::arg("hi") = 1.0,
           py::arg("normalized_basis") = false)
      .def_property_readonly("widths",
                             [](const KanNetwork& n) {
                               std::vector<int> w{n.input_dim()};
                               for (const auto& l : n.layers) w.push_back(l.n_out);
                               return w;
                             })
      .def(
          "initialize",
          [](KanNetwork& n, const std::string& scheme, std::uint64_t seed, double alpha, double beta) {
            std::vector<std::pair<double, double>> out;
            for (const auto& s : initialize(n, parse_scheme(scheme, alpha, beta), seed)) out.emplace_back(s.r, s.b);
            return out;
          },
          py::arg("scheme"), py::arg("seed") = 0, py::arg("alpha") = 0.0, py::arg("beta") = 0.0,
          "Draws weights; returns (sigma_r, sigma_b) per layer.")
      .def("forward", [](const KanNetwork& n, const Batch& x) { return network_forward(n, x); }, py::arg("x"))
      .def("parameters", [](const KanNetwork& n) { return pack_parameters(n); })
      .def("set_parameters", [](KanNetwork& n, const std::vector<double>& theta) { unpack_parameters(n, theta); });

  m.def("load_checkpoint", [](const std::string& path) {
    auto cp = load_checkpoint(path);
    return py::make_tuple(std::move(cp.net), cp.fingerprint);
  });

  m.def("fit_task_ids", &fit_task_ids);
  m.def("feynman_task_ids", &feynman_task_ids);
  m.def(
      "eval_target", [](const std::string& id, const Batch& x) { return eval_target(make_fit_task(id), x); },
      py::arg("task"), py::arg("points"));
  m.def("special", [](const std::string& name, double x) { return special(name, x); }, py::arg("name"), py::arg("x"));

  m.def(
      "fingerprint",
      [](const std::string& task, std::vector<int> widths, int grid, int k, const std::string& scheme, double alpha,
         double beta, std::uint64_t seed, int epochs) {
        return fingerprint(make_spec(task, std::move(widths), grid, k, scheme, alpha, beta, seed, epochs));
      },
      py::arg("task"), py::arg("widths"), py::arg("grid") = 5, py::arg("k") = 3, py::arg("scheme") = "baseline",
      py::arg("alpha") = 0.0, py::arg("beta") = 0.0, py::arg("seed") = 0, py::arg("epochs") = 2000);

  m.def(
      "train",
      [](const std::string& task, std::vector<int> widths, int grid, int k, const std::string& scheme, double alpha,
         double beta, std::uint64_t seed, int epochs, double lr) {
        const auto spec = make_spec(task, std::move(widths), grid, k, scheme, alpha, beta, seed, epochs);
        TrainRecord rec;
        {
          py::gil_scoped_release release;
          rec = run_any(spec, lr);
        }
        return record_dict(rec);
      },
      py::arg("task"), py::arg("widths"), py::arg("grid") = 5, py::arg("k") = 3, py::arg("scheme") = "baseline",
      py::arg("alpha") = 0.0, py::arg("beta") = 0.0, py::arg("seed") = 0, py::arg("epochs") = 2000,
      py::arg("lr") = 1e-3, "Trains one fit task or PDE run and returns its record.");

  m.def(
      "train_ntk",
      [](const std::string& task, std::vector<int> widths, int grid, int k, const std::string& scheme, double alpha,
         double beta, std::uint64_t seed, int epochs, double lr) {
        const auto spec = make_spec(task, std::move(widths), grid, k, scheme, alpha, beta, seed, epochs);
        NtkRunResult res;
        {
          py::gil_scoped_release release;
          res = run_ntk(spec, {}, lr);
        }
        py::list spectra;
        for (const auto& s : res.spectra) {
          spectra.append(py::make_tuple(s.iteration, block_name(s.block), s.eigenvalues));
        }
        py::dict d = record_dict(res.record);
        d["spectra"] = spectra;
        return d;
      },
      py::arg("task"), py::arg("widths"), py::arg("grid") = 5, py::arg("k") = 3, py::arg("scheme") = "baseline",
      py::arg("alpha") = 0.0, py::arg("beta") = 0.0, py::arg("seed") = 0, py::arg("epochs") = 2000,
      py::arg("lr") = 1e-3, "Trains one run and returns its record with (iteration, block, eigenvalues) spectra.");

  m.def("lower_median", &lower_median, py::arg("values"));
  m.def("read_results_csv", [](const std::string& path) {
    py::list rows;
    for (const auto& r : read_results_csv(path)) rows.append(row_dict(r));
    return rows;
  });
  m.def("read_loss_csv", &read_loss_csv, py::arg("path"));
  m.def("read_spectrum_csv", [](const std::string& path) {
    py::list out;
    for (const auto& s : read_spectrum_csv(path)) out.append(py::make_tuple(s.iteration, block_name(s.block), s.eigenvalues));
    return out;
  });

  m.def(
      "main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "kanlab");
        py::gil_scoped_release release;
        return parse_and_dispatch(args, std::cout, std::cerr);
      },
      py::arg("args"), "Runs the command line; returns the exit code.");
}
