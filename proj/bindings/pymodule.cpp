#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <vector>

#include "pvmix/baselines.hpp"
#include "pvmix/em.hpp"
#include "pvmix/errors.hpp"
#include "pvmix/evaluate.hpp"
#include "pvmix/field.hpp"
#include "pvmix/init.hpp"
#include "pvmix/io.hpp"
#include "pvmix/merge.hpp"
#include "pvmix/model_select.hpp"
#include "pvmix/phantom.hpp"

namespace py = pybind11;
using namespace pvmix;

namespace {

std::vector<char> mask_of(const std::vector<bool>& v) {
  std::vector<char> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] ? 1 : 0;
  return out;
}

std::vector<bool> bools_of(const std::vector<char>& v) {
  std::vector<bool> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] != 0;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Constrained mixture modeling of p-value fields: simulation, "
            "fitting, model selection, component merging, and reference "
            "thresholding baselines.";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);
  py::register_exception<InitError>(m, "InitError", PyExc_RuntimeError);

  // ---- enums ----
  py::enum_<SpatialMode>(m, "SpatialMode")
      .value("Off", SpatialMode::Off)
      .value("On", SpatialMode::On);
  py::enum_<Criterion>(m, "Criterion")
      .value("Aic", Criterion::Aic)
      .value("Bic", Criterion::Bic)
      .value("IclBic", Criterion::IclBic);
  py::enum_<FdrMethod>(m, "FdrMethod")
      .value("P1", FdrMethod::P1)
      .value("P2", FdrMethod::P2)
      .value("P3", FdrMethod::P3);
  py::enum_<Neighborhood>(m, "Neighborhood")
      .value("FirstOrder", Neighborhood::FirstOrder)
      .value("SecondOrder", Neighborhood::SecondOrder);
  py::enum_<PhantomVariant>(m, "PhantomVariant")
      .value("A", PhantomVariant::A)
      .value("B", PhantomVariant::B)
      .value("C", PhantomVariant::C)
      .value("Null", PhantomVariant::Null);

  // ---- field ----
  py::class_<PValueField>(m, "PValueField")
      .def(py::init(&make_field), py::arg("raw"), py::arg("dims"),
           py::arg("pvals"))
      .def_property_readonly("n", &PValueField::n)
      .def_readonly("cv", &PValueField::cv)
      .def_readonly("dims", &PValueField::dims)
      .def_readonly("p", &PValueField::p)
      .def_readonly("coords", &PValueField::coords)
      .def_readonly("raw", &PValueField::raw)
      .def_readonly("clamped", &PValueField::clamped)
      .def("__len__", &PValueField::n)
      .def("__repr__", [](const PValueField& f) {
        return "<PValueField n=" + std::to_string(f.n()) + " cv=" +
               std::to_string(f.cv) + ">";
      });

  // ---- model parameters ----
  py::class_<ComponentParams>(m, "ComponentParams")
      .def(py::init<>())
      .def_readwrite("alpha", &ComponentParams::alpha)
      .def_readwrite("beta", &ComponentParams::beta)
      .def_readwrite("mu", &ComponentParams::mu)
      .def_readwrite("sigma2", &ComponentParams::sigma2);

  py::class_<MixtureParams>(m, "MixtureParams")
      .def_static("make", &MixtureParams::make, py::arg("K"), py::arg("cv"),
                  py::arg("delta") = 0.99, py::arg("eta") = 0.05)
      .def_readwrite("K", &MixtureParams::K)
      .def_readwrite("cv", &MixtureParams::cv)
      .def_readwrite("delta", &MixtureParams::delta)
      .def_readwrite("eta", &MixtureParams::eta)
      .def_readwrite("pi", &MixtureParams::pi)
      .def_readwrite("comp", &MixtureParams::comp)
      .def("check", &MixtureParams::check);

  py::class_<Responsibilities>(m, "Responsibilities")
      .def_readonly("n", &Responsibilities::n)
      .def_readonly("K", &Responsibilities::K)
      .def_readonly("w", &Responsibilities::w);

  // ---- fitting ----
  py::class_<FitConfig>(m, "FitConfig")
      .def(py::init<>())
      .def_readwrite("K", &FitConfig::K)
      .def_readwrite("delta", &FitConfig::delta)
      .def_readwrite("eta", &FitConfig::eta)
      .def_readwrite("epsilon", &FitConfig::epsilon)
      .def_readwrite("max_iter", &FitConfig::max_iter)
      .def_readwrite("spatial", &FitConfig::spatial)
      .def_readwrite("seed", &FitConfig::seed)
      .def_readwrite("workers", &FitConfig::workers)
      .def_readwrite("init_candidates", &FitConfig::init_candidates)
      .def_readwrite("p_max_init", &FitConfig::p_max_init)
      .def_readwrite("trace_params", &FitConfig::trace_params)
      .def("check", &FitConfig::check);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("theta", &FitResult::theta)
      .def_readonly("loglik", &FitResult::loglik)
      .def_readonly("n_iter", &FitResult::n_iter)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("valid", &FitResult::valid)
      .def_readonly("resp", &FitResult::resp)
      .def_readonly("labels", &FitResult::labels)
      .def_readonly("trace", &FitResult::trace)
      .def_readonly("aic", &FitResult::aic)
      .def_readonly("bic", &FitResult::bic)
      .def_readonly("iclbic", &FitResult::iclbic);

  m.def("fit", &fit, py::arg("field"), py::arg("config"),
        "Random restarts plus block-cyclic EM for a fixed component count.",
        py::call_guard<py::gil_scoped_release>());

  py::class_<CriteriaValues>(m, "CriteriaValues")
      .def_readonly("aic", &CriteriaValues::aic)
      .def_readonly("bic", &CriteriaValues::bic)
      .def_readonly("iclbic", &CriteriaValues::iclbic);

  py::class_<SelectionReport>(m, "SelectionReport")
      .def_readonly("k_hat", &SelectionReport::K_hat)
      .def_readonly("fits", &SelectionReport::fits)
      .def_readonly("crit", &SelectionReport::crit)
      .def("best", &SelectionReport::best,
           py::return_value_policy::reference_internal);

  m.def("select_k", &select_K, py::arg("field"), py::arg("config"),
        py::arg("k_max"), py::arg("criterion") = Criterion::Bic,
        "Fit every component count up to k_max and keep the criterion "
        "minimizer; ties resolve toward the smaller count.",
        py::call_guard<py::gil_scoped_release>());

  // ---- merging ----
  py::class_<ComponentTest>(m, "ComponentTest")
      .def_readonly("k", &ComponentTest::k)
      .def_readonly("n_k", &ComponentTest::n_k)
      .def_readonly("lambda_", &ComponentTest::lambda)
      .def_readonly("p", &ComponentTest::p)
      .def_readonly("q", &ComponentTest::q)
      .def_readonly("keep", &ComponentTest::keep);

  py::class_<PairTest>(m, "PairTest")
      .def_readonly("k", &PairTest::k)
      .def_readonly("l", &PairTest::l)
      .def_readonly("lambda_", &PairTest::lambda)
      .def_readonly("p", &PairTest::p)
      .def_readonly("q", &PairTest::q)
      .def_readonly("merge", &PairTest::merge)
      .def_readonly("retested", &PairTest::retested);

  py::class_<MergeReport>(m, "MergeReport")
      .def_readonly("stage1", &MergeReport::stage1)
      .def_readonly("stage2", &MergeReport::stage2)
      .def_readonly("relabel", &MergeReport::relabel)
      .def_readonly("k_final", &MergeReport::K_final)
      .def_readonly("theta", &MergeReport::theta)
      .def_readonly("labels", &MergeReport::labels);

  m.def("merge_components", &merge_components, py::arg("field"),
        py::arg("fit"), py::arg("method") = FdrMethod::P2,
        py::arg("q0") = 0.05, py::arg("eta") = 0.05,
        "Component-vs-null tests with FDR control, then pairwise merging "
        "among the survivors.",
        py::call_guard<py::gil_scoped_release>());

  py::class_<FdrResult>(m, "FdrResult")
      .def_readonly("q", &FdrResult::q)
      .def_property_readonly(
          "reject", [](const FdrResult& r) { return bools_of(r.reject); });

  m.def("fdr_p1", &fdr_p1, py::arg("p"), py::arg("q0") = 0.05,
        "Step-up control of the false discovery rate.");
  m.def("fdr_p2", &fdr_p2, py::arg("p"), py::arg("q0") = 0.05,
        "Two-stage adaptive step-up.");
  m.def("fdr_p3", &fdr_p3, py::arg("p"), py::arg("w"), py::arg("q0") = 0.05,
        "Weighted two-stage step-up.");

  // ---- phantoms and simulation ----
  py::class_<PhantomSpec>(m, "PhantomSpec")
      .def_readonly("variant", &PhantomSpec::variant)
      .def_readonly("width", &PhantomSpec::width)
      .def_readonly("height", &PhantomSpec::height)
      .def_readonly("pi_true", &PhantomSpec::pi_true)
      .def_readonly("cls", &PhantomSpec::cls)
      .def_readonly("n_brain", &PhantomSpec::n_brain);

  m.def("make_phantom", &make_phantom, py::arg("variant"));
  m.def("geometry_text", &geometry_text, py::arg("spec"));
  m.def("phantom_from_text", &phantom_from_text, py::arg("text"));

  py::class_<ComplexityCalibration>(m, "ComplexityCalibration")
      .def(py::init<>())
      .def_readwrite("omega", &ComplexityCalibration::omega)
      .def_readwrite("nu", &ComplexityCalibration::nu)
      .def_readonly("omega01", &ComplexityCalibration::omega01)
      .def_readonly("omega02", &ComplexityCalibration::omega02)
      .def_readonly("omega12", &ComplexityCalibration::omega12);

  m.def("psi_density", &psi_density, py::arg("p"), py::arg("nu"));
  m.def("pairwise_overlap", &pairwise_overlap, py::arg("nu_k"),
        py::arg("nu_l"), py::arg("pi_k"), py::arg("pi_l"));
  m.def("calibrate_nu", &calibrate_nu, py::arg("pi_true"), py::arg("omega"));

  py::class_<SimulatedField>(m, "SimulatedField")
      .def_readonly("field", &SimulatedField::field)
      .def_readonly("truth", &SimulatedField::truth);

  m.def("simulate_field", &simulate_field, py::arg("spec"), py::arg("calib"),
        py::arg("seed") = 0);

  // ---- baselines ----
  m.def(
      "bonferroni",
      [](const std::vector<double>& p, double alpha) {
        return bools_of(bonferroni(p, alpha));
      },
      py::arg("pvals"), py::arg("alpha") = 0.05);
  m.def(
      "bh_threshold",
      [](const std::vector<double>& p, double q) {
        return bools_of(bh_threshold(p, q));
      },
      py::arg("pvals"), py::arg("q") = 0.05);
  m.def(
      "by_threshold",
      [](const std::vector<double>& p, double q) {
        return bools_of(by_threshold(p, q));
      },
      py::arg("pvals"), py::arg("q") = 0.05);
  m.def(
      "cluster_threshold",
      [](const PValueField& f, double p0, Neighborhood adjacency, int n_null,
         double alpha, std::uint64_t seed) {
        return bools_of(cluster_threshold(f, p0, adjacency, n_null, alpha,
                                          seed));
      },
      py::arg("field"), py::arg("p0") = 1e-3,
      py::arg("adjacency") = Neighborhood::FirstOrder,
      py::arg("n_null") = 1000, py::arg("alpha") = 0.05, py::arg("seed") = 0,
      "Cluster-size thresholding with an empirically calibrated minimum "
      "cluster size.",
      py::call_guard<py::gil_scoped_release>());

  // ---- evaluation ----
  m.def(
      "jaccard",
      [](const std::vector<bool>& a, const std::vector<bool>& b) {
        return jaccard(mask_of(a), mask_of(b));
      },
      py::arg("pred"), py::arg("truth"),
      "Intersection over union of two masks; two empty masks score 1.");
  m.def("sample_quantile", &sample_quantile, py::arg("sorted_values"),
        py::arg("prob"));

  // ---- file round trips ----
  m.def("read_field", &read_field, py::arg("path"));
  m.def(
      "write_field",
      [](const std::string& path, const PValueField& f,
         const ConfigEcho& extra) { write_field(path, f, extra); },
      py::arg("path"), py::arg("field"), py::arg("extra") = ConfigEcho{});
  m.def("config_hash", &config_hash, py::arg("config"));
  m.def("format_double", &format_double, py::arg("value"));

#ifdef PVMIX_VERSION
  m.attr("__version__") = PVMIX_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
