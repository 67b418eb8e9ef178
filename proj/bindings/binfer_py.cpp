#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "binfer/baselines.hpp"
#include "binfer/config.hpp"
#include "binfer/data.hpp"
#include "binfer/inference.hpp"
#include "binfer/model.hpp"
#include "binfer/training.hpp"

namespace py = pybind11;
using namespace binfer;

namespace {

Assignment make_assignment(std::size_t n, const std::map<std::size_t, double>& observed) {
  Assignment a = Assignment::empty(n);
  for (const auto& [k, v] : observed) {
    if (k >= n) throw Error("assignment index out of range");
    a.set(k, v);
  }
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bidirectional inference networks: moment-propagating "
            "subnetworks over a factorized joint, trained by maximum "
            "likelihood plus composite terms and queried by gradient-based "
            "inference over arbitrary variable subsets.";

  py::register_exception<Error>(m, "BinferError");

  py::class_<ScalarMoments>(m, "ScalarMoments")
      .def(py::init<>())
      .def_readwrite("mean", &ScalarMoments::mean)
      .def_readwrite("var", &ScalarMoments::var)
      .def("__repr__", [](const ScalarMoments& s) {
        return "ScalarMoments(mean=" + std::to_string(s.mean) +
               ", var=" + std::to_string(s.var) + ")";
      });

  py::enum_<VarKind>(m, "VarKind")
      .value("CONTINUOUS", VarKind::kContinuous)
      .value("BINARY", VarKind::kBinary);

  py::class_<VariableSpec>(m, "VariableSpec")
      .def(py::init([](std::string name, VarKind kind, std::vector<std::size_t> parents) {
             return VariableSpec{std::move(name), kind, std::move(parents)};
           }),
           py::arg("name"), py::arg("kind") = VarKind::kContinuous,
           py::arg("parents") = std::vector<std::size_t>{})
      .def_readwrite("name", &VariableSpec::name)
      .def_readwrite("kind", &VariableSpec::kind)
      .def_readwrite("parents", &VariableSpec::parents);

  py::class_<BinModel>(m, "BinModel")
      .def_property_readonly("feature_dim", [](const BinModel& m_) { return m_.feature_dim; })
      .def_property_readonly("num_vars", &BinModel::num_vars)
      .def_property_readonly("param_count", &BinModel::param_count)
      .def_readwrite("meta", &BinModel::meta)
      .def("variable_names",
           [](const BinModel& m_) {
             std::vector<std::string> names;
             for (const auto& v : m_.variables) names.push_back(v.name);
             return names;
           })
      .def("joint_nll",
           [](const BinModel& m_, const std::vector<double>& x,
              const std::vector<double>& v) { return joint_nll(m_, x, v); },
           py::arg("x"), py::arg("values"))
      .def("conditional_moments",
           [](const BinModel& m_, std::size_t n, const std::vector<double>& x,
              const std::vector<double>& v) {
             return conditional_moments(m_, n, x, v);
           },
           py::arg("n"), py::arg("x"), py::arg("values"))
      .def("save", &save_checkpoint, py::arg("path"));

  m.def("make_chain_model",
        [](std::size_t feature_dim, std::vector<std::string> names,
           std::vector<std::size_t> hidden, std::uint64_t seed,
           std::vector<VarKind> kinds) {
          if (kinds.empty()) kinds.assign(names.size(), VarKind::kContinuous);
          Rng rng(seed);
          return make_chain_model(feature_dim, names, kinds, hidden, rng);
        },
        py::arg("feature_dim"), py::arg("names"),
        py::arg("hidden") = std::vector<std::size_t>{},
        py::arg("seed") = 0, py::arg("kinds") = std::vector<VarKind>{});

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  py::class_<InferenceOptions>(m, "InferenceOptions")
      .def(py::init<>())
      .def_readwrite("max_iters", &InferenceOptions::max_iters)
      .def_readwrite("lr", &InferenceOptions::lr)
      .def_readwrite("rel_tol", &InferenceOptions::rel_tol)
      .def_readwrite("seed", &InferenceOptions::seed);

  py::class_<InferenceResult>(m, "InferenceResult")
      .def_readonly("targets", &InferenceResult::targets)
      .def_readonly("estimates", &InferenceResult::estimates)
      .def_readonly("final_loss", &InferenceResult::final_loss)
      .def_readonly("iterations_used", &InferenceResult::iterations_used)
      .def_readonly("converged", &InferenceResult::converged)
      .def("as_dict", [](const InferenceResult& r) {
        py::dict d;
        for (std::size_t i = 0; i < r.targets.size(); ++i) {
          d[py::int_(r.targets[i])] = r.estimates[i];
        }
        return d;
      });

  py::class_<InferenceEngine>(m, "InferenceEngine")
      .def(py::init<const BinModel&>(), py::keep_alive<1, 2>())
      .def("init_targets",
           [](InferenceEngine& e, const std::vector<double>& x,
              const std::map<std::size_t, double>& observed) {
             const Assignment a =
                 e.init_targets(x, make_assignment(e.model().num_vars(), observed));
             return a.values;
           },
           py::arg("x"), py::arg("observed"))
      .def("general_infer",
           [](InferenceEngine& e, const std::vector<double>& x,
              const std::map<std::size_t, double>& observed,
              const InferenceOptions& opts, const std::string& init,
              std::uint64_t seed) {
             InferenceOptions local = opts;
             local.seed = seed;
             if (init == "random") {
               local.init = InitMode::kRandom;
             } else if (init != "feedforward") {
               throw Error("init must be 'feedforward' or 'random'");
             }
             return e.general_infer(x, make_assignment(e.model().num_vars(), observed),
                                    local);
           },
           py::arg("x"), py::arg("observed"),
           py::arg("options") = InferenceOptions{},
           py::arg("init") = "feedforward", py::arg("seed") = 0)
      .def("forward_predict",
           [](InferenceEngine& e, const std::vector<double>& x,
              const std::map<std::size_t, double>& observed) {
             return e.forward_predict(
                 x, make_assignment(e.model().num_vars(), observed));
           },
           py::arg("x"), py::arg("observed"))
      .def("hybrid_infer",
           [](InferenceEngine& e, const std::vector<double>& x,
              const std::map<std::size_t, double>& observed,
              const InferenceOptions& opts) {
             return e.hybrid_infer(
                 x, make_assignment(e.model().num_vars(), observed), opts);
           },
           py::arg("x"), py::arg("observed"),
           py::arg("options") = InferenceOptions{});

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lambda_c", &TrainConfig::lambda_c)
      .def_readwrite("warmup_epochs", &TrainConfig::warmup_epochs)
      .def_readwrite("train_epochs", &TrainConfig::train_epochs)
      .def_readwrite("inner_iters", &TrainConfig::inner_iters)
      .def_readwrite("rho", &TrainConfig::rho)
      .def_readwrite("gamma", &TrainConfig::gamma)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("cl_subsets", &TrainConfig::cl_subsets)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<TrainReport>(m, "TrainReport")
      .def_readonly("epoch_joint_nll", &TrainReport::epoch_joint_nll)
      .def_readonly("epoch_val_nll", &TrainReport::epoch_val_nll)
      .def_readonly("epoch_cl", &TrainReport::epoch_cl)
      .def_readonly("wall_seconds", &TrainReport::wall_seconds);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("feature_dim", [](const Dataset& d) { return d.feature_dim; })
      .def_property_readonly("num_vars", [](const Dataset& d) { return d.num_vars; })
      .def_property_readonly("rows", &Dataset::rows)
      .def_readonly("train_idx", &Dataset::train_idx)
      .def_readonly("val_idx", &Dataset::val_idx)
      .def_readonly("test_idx", &Dataset::test_idx)
      .def_property_readonly("standardized", [](const Dataset& d) { return d.standardized; })
      .def("x_row",
           [](const Dataset& d, std::size_t i) {
             const auto r = d.x_row(i);
             return std::vector<double>(r.begin(), r.end());
           })
      .def("v_row",
           [](const Dataset& d, std::size_t i) {
             const auto r = d.v_row(i);
             return std::vector<double>(r.begin(), r.end());
           })
      .def("v_to_raw", &Dataset::v_to_raw)
      .def("assign_splits", &Dataset::assign_splits, py::arg("train_frac"),
           py::arg("val_frac"), py::arg("seed"))
      .def("standardize", &Dataset::standardize);

  m.def("gen_toy_line",
        [](std::size_t m_, std::uint64_t seed, double noise) {
          return gen_toy_line(m_, seed, noise);
        },
        py::arg("m") = 6, py::arg("seed") = 0, py::arg("noise") = 1.0);
  m.def("gen_gaussian_chain",
        [](std::size_t n_vars, std::size_t m, std::uint64_t seed,
           std::size_t feature_dim) {
          return gen_gaussian_chain(n_vars, m, seed, feature_dim);
        },
        py::arg("n_vars"), py::arg("m"), py::arg("seed") = 0,
        py::arg("feature_dim") = 2);
  m.def("gen_shhs_surrogate",
        [](std::size_t m_, std::uint64_t seed, double coupling) {
          return gen_shhs_surrogate(m_, seed, coupling);
        },
        py::arg("m"), py::arg("seed") = 0, py::arg("coupling") = 1.0);
  m.def("load_dermatology", &load_dermatology, py::arg("path"));

  m.def("warmup_train",
        [](BinModel& model, const Dataset& data, const TrainConfig& cfg, int epochs) {
          return warmup_train(model, data, cfg, epochs);
        },
        py::arg("model"), py::arg("data"), py::arg("config"), py::arg("epochs") = -1);
  m.def("cbin_train", &cbin_train, py::arg("model"), py::arg("data"), py::arg("config"));
  m.def("marginal_nll",
        [](const BinModel& model, const std::vector<double>& x,
           const std::vector<double>& v, const std::vector<std::size_t>& subset) {
          return marginal_nll(model, x, v, subset);
        },
        py::arg("model"), py::arg("x"), py::arg("values"), py::arg("subset"));

  m.def("npn_linear_scalar",
        [](double w_mean, double w_var, double x_mean, double x_var) {
          // Single-weight closed form; bias-free.
          ScalarMoments out;
          out.mean = w_mean * x_mean;
          out.var = w_var * x_var + w_var * x_mean * x_mean + w_mean * w_mean * x_var;
          return out;
        },
        py::arg("w_mean"), py::arg("w_var"), py::arg("x_mean"), py::arg("x_var"));
  m.def("relu_moments", &relu_moments, py::arg("mean"), py::arg("var"));
  m.def("gaussian_nll",
        [](double target, double mean, double var) {
          return gaussian_nll(target, mean, var);
        },
        py::arg("target"), py::arg("mean"), py::arg("var"));

  m.def("metric_rmse",
        [](const std::vector<double>& p, const std::vector<double>& t) {
          return metric_rmse(p, t);
        });
  m.def("metric_accuracy",
        [](const std::vector<double>& p, const std::vector<double>& t) {
          return metric_accuracy(p, t);
        });
}
