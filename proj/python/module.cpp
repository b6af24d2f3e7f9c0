// Python bindings for the core operations: kernels, quadrature, tilted
// moments, EP, model fit/predict, the synthetic generator and the rank
// statistics.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "gppriv/data.hpp"
#include "gppriv/ep.hpp"
#include "gppriv/evaluation.hpp"
#include "gppriv/model.hpp"
#include "gppriv/quadrature.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace gppriv;

namespace {

Variant variant_from(const std::string& name) {
  if (name == "gpc") return Variant::GPC;
  if (name == "gpc+") return Variant::GPCPlus;
  throw std::invalid_argument("variant must be 'gpc' or 'gpc+'");
}

FitOptions options_from_kwargs(int max_evals, int restarts, double damping,
                               int quadrature_order, std::uint64_t seed) {
  FitOptions opts;
  opts.max_evals = max_evals;
  opts.restarts = restarts;
  opts.seed = seed;
  opts.ep.damping = damping;
  opts.ep.quadrature_order = quadrature_order;
  return opts;
}

Dataset dataset_from(const Eigen::MatrixXd& x,
                     const std::vector<int>& y,
                     const std::optional<Eigen::MatrixXd>& xstar) {
  Dataset d;
  d.X = x;
  d.y = y;
  if (xstar) d.Xstar = *xstar;
  return d;
}

}  // namespace

PYBIND11_MODULE(_gppriv, m) {
  m.doc() = "Gaussian process classification with privileged noise";

  py::class_<SEKernelParams>(m, "SEKernelParams")
      .def(py::init<double, double>(), "log_amplitude"_a = 0.0,
           "log_scale"_a = 0.0)
      .def_readwrite("log_amplitude", &SEKernelParams::log_amplitude)
      .def_readwrite("log_scale", &SEKernelParams::log_scale)
      .def("amplitude", &SEKernelParams::amplitude)
      .def("scale", &SEKernelParams::scale);

  m.def("se_kernel", &se_kernel, "x"_a, "x2"_a, "params"_a);
  m.def(
      "kernel_matrix",
      [](const Eigen::MatrixXd& x, const SEKernelParams& p) {
        return kernel_matrix(x, p).entries;
      },
      "X"_a, "params"_a);

  m.def(
      "gauss_hermite",
      [](int order) {
        const GHRule rule = gauss_hermite(order);
        return py::make_tuple(rule.nodes, rule.weights);
      },
      "order"_a, "Nodes and weights integrating against exp(-t^2).");
  m.def("std_norm_cdf", &std_norm_cdf, "u"_a);
  m.def("log_std_norm_cdf", &log_std_norm_cdf, "u"_a);

  py::class_<TiltedMoments>(m, "TiltedMoments")
      .def_readonly("log_z", &TiltedMoments::log_z)
      .def_readonly("d_mf", &TiltedMoments::d_mf)
      .def_readonly("d_vf", &TiltedMoments::d_vf)
      .def_readonly("d_mg", &TiltedMoments::d_mg)
      .def_readonly("d_vg", &TiltedMoments::d_vg)
      .def("__repr__", [](const TiltedMoments& t) {
        return "<TiltedMoments log_z=" + std::to_string(t.log_z) + ">";
      });

  m.def(
      "tilted_gpc",
      [](int y, double m, double v, double noise_var) {
        return tilted_gpc(y, m, v, noise_var);
      },
      "y"_a, "m"_a, "v"_a, "noise_var"_a);
  m.def(
      "tilted_gpc_plus",
      [](int y, double m_f, double v_f, double m_g, double v_g, int order) {
        return tilted_gpc_plus(y, CavityMoments{m_f, v_f, m_g, v_g},
                               gauss_hermite(order));
      },
      "y"_a, "m_f"_a, "v_f"_a, "m_g"_a, "v_g"_a, "order"_a = 32);

  py::class_<GPCModel>(m, "Model")
      .def_property_readonly("variant",
                             [](const GPCModel& model) {
                               return model.variant == Variant::GPC
                                          ? "gpc"
                                          : "gpc+";
                             })
      .def_readonly("log_evidence", &GPCModel::log_evidence)
      .def_readonly("ep_converged", &GPCModel::ep_converged)
      .def_property_readonly(
          "length_scale",
          [](const GPCModel& model) { return model.kernel_f.scale(); })
      .def_property_readonly(
          "noise_var", [](const GPCModel& model) { return model.noise_var; })
      .def(
          "predict_proba",
          [](const GPCModel& model, const Eigen::MatrixXd& x) {
            return predict_proba(model, x);
          },
          "X"_a)
      .def(
          "predict_label",
          [](const GPCModel& model, const Eigen::MatrixXd& x) {
            return predict_label(model, x);
          },
          "X"_a)
      .def("save", &save_model, "path"_a);

  m.def("load_model", &load_model, "path"_a);
  m.def(
      "fit",
      [](const Eigen::MatrixXd& x, const std::vector<int>& y,
         const std::optional<Eigen::MatrixXd>& xstar,
         const std::string& variant, int max_evals, int restarts,
         double damping, int quadrature_order, std::uint64_t seed) {
        return fit(dataset_from(x, y, xstar), variant_from(variant),
                   options_from_kwargs(max_evals, restarts, damping,
                                       quadrature_order, seed));
      },
      "X"_a, "y"_a, "Xstar"_a = std::nullopt, "variant"_a = "gpc",
      "max_evals"_a = 40, "restarts"_a = 3, "damping"_a = 0.8,
      "quadrature_order"_a = 32, "seed"_a = 0,
      "Type-II maximum-likelihood fit of a GPC or GPC+ classifier.");

  m.def(
      "synth_lupi",
      [](Eigen::Index n, Eigen::Index d, double noise_low, double noise_high,
         double p_high, std::uint64_t seed) {
        const Dataset data = synth_lupi(
            n, d, NoiseLaw::bimodal(noise_low, noise_high, p_high), seed);
        return py::make_tuple(data.X, *data.Xstar, data.y);
      },
      "n"_a, "d"_a = 2, "noise_low"_a = 0.1, "noise_high"_a = 5.0,
      "p_high"_a = 0.5, "seed"_a = 0,
      "Synthetic dataset whose privileged feature encodes the label noise.");

  m.def("error_rate", &error_rate, "pred"_a, "truth"_a);
  m.def(
      "average_ranks",
      [](const Eigen::MatrixXd& errors) {
        ErrorTable table;
        table.mean_error = errors;
        table.tasks.resize(static_cast<std::size_t>(errors.rows()));
        table.methods.resize(static_cast<std::size_t>(errors.cols()));
        return average_ranks(table);
      },
      "errors"_a, "Per-method average rank of a tasks-by-methods table.");
  m.def("nemenyi_cd", &nemenyi_cd, "k"_a, "n_tasks"_a, "alpha"_a = 0.10);
}
