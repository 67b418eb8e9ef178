#include "binfer/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

namespace binfer {

Assignment prior_only_predict(InferenceEngine& engine, std::span<const double> x,
                              const Assignment& observed) {
  return engine.init_targets(x, observed);
}

InferenceResult random_init_infer(InferenceEngine& engine,
                                  std::span<const double> x,
                                  const Assignment& observed,
                                  const InferenceOptions& opts,
                                  std::uint64_t seed) {
  InferenceOptions local = opts;
  local.init = InitMode::kRandom;
  local.seed = seed;
  return engine.general_infer(x, observed, local);
}

std::vector<double> RetrainPredictor::predict(std::span<const double> x,
                                              std::span<const double> values) const {
  std::vector<double> input(x.begin(), x.end());
  for (const std::size_t g : given) input.push_back(values[g]);
  std::vector<double> out;
  out.reserve(targets.size());
  for (const auto& net : nets) {
    const ScalarMoments m =
        subnet_forward(net.subnets[0], Moments::deterministic(input));
    out.push_back(m.mean);
  }
  return out;
}

RetrainPredictor retrain_specific(const Dataset& data,
                                  const InferenceTaskSpec& task,
                                  const TrainConfig& cfg,
                                  std::span<const std::size_t> hidden,
                                  std::uint64_t seed) {
  RetrainPredictor pred;
  pred.targets = task.targets;
  for (std::size_t n = 0; n < data.num_vars; ++n) {
    if (std::find(task.targets.begin(), task.targets.end(), n) == task.targets.end()) {
      pred.given.push_back(n);
    }
  }

  // Derived regression set: inputs are [X; V_given], output the one target.
  Dataset derived;
  derived.feature_dim = data.feature_dim + pred.given.size();
  derived.num_vars = 1;
  derived.variables = {VariableSpec{"target", VarKind::kContinuous, {}}};
  derived.train_idx = data.train_idx;
  derived.val_idx = data.val_idx;
  derived.test_idx = data.test_idx;
  derived.standardized = data.standardized;
  const std::size_t m = data.rows();
  derived.X.resize(m * derived.feature_dim);
  derived.V.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    double* row = &derived.X[r * derived.feature_dim];
    const auto x = data.x_row(r);
    std::copy(x.begin(), x.end(), row);
    const auto v = data.v_row(r);
    for (std::size_t i = 0; i < pred.given.size(); ++i) {
      row[data.feature_dim + i] = v[pred.given[i]];
    }
  }

  TrainConfig local = cfg;
  local.lambda_c = 0.0;
  local.cl_subsets.clear();
  for (std::size_t t = 0; t < pred.targets.size(); ++t) {
    for (std::size_t r = 0; r < m; ++r) {
      derived.V[r] = data.V[r * data.num_vars + pred.targets[t]];
    }
    Rng rng(seed + 0x9e3779b97f4a7c15ULL * (t + 1));
    BinModel net = make_model(derived.feature_dim,
                              {VariableSpec{"target", VarKind::kContinuous, {}}},
                              hidden, rng);
    local.seed = seed + t;
    warmup_train(net, derived, local, cfg.warmup_epochs + cfg.train_epochs);
    pred.nets.push_back(std::move(net));
  }
  return pred;
}

namespace {

struct TaskAccumulator {
  std::vector<double> preds;
  std::vector<double> truth;
  double iter_sum = 0.0;
  std::size_t runs = 0;
};

}  // namespace

SuiteResult run_suite(const BinModel& bin_model, const BinModel* cbin_model,
                      const Dataset& data, const TaskSuite& suite,
                      const SuiteSpec& spec) {
  SuiteResult result;
  result.suite = suite;

  std::vector<std::size_t> rows = data.test_idx;
  if (spec.max_rows > 0 && rows.size() > spec.max_rows) rows.resize(spec.max_rows);
  if (rows.empty()) throw Error("run_suite: empty test split");

  InferenceEngine bin_engine(bin_model);
  std::unique_ptr<InferenceEngine> cbin_engine;
  if (cbin_model != nullptr) cbin_engine = std::make_unique<InferenceEngine>(*cbin_model);

  for (const std::string& method : spec.methods) {
    if ((method == "cbin") && cbin_engine == nullptr) {
      throw Error("run_suite: method 'cbin' requested without a cbin model");
    }
    SuiteRow row;
    row.method = method;
    for (std::size_t ti = 0; ti < suite.size(); ++ti) {
      const InferenceTaskSpec& task = suite[ti];
      TaskAccumulator acc;
      InferenceEngine& engine =
          method == "cbin" ? *cbin_engine : bin_engine;

      std::unique_ptr<RetrainPredictor> retrain;
      if (method == "retrain") {
        retrain = std::make_unique<RetrainPredictor>(retrain_specific(
            data, task, spec.retrain_cfg, spec.retrain_hidden, spec.seed + ti));
      }

      for (std::size_t ri = 0; ri < rows.size(); ++ri) {
        const std::size_t r = rows[ri];
        const auto x = data.x_row(r);
        const auto v = data.v_row(r);
        Assignment observed = Assignment::empty(data.num_vars);
        for (std::size_t n = 0; n < data.num_vars; ++n) observed.set(n, v[n]);
        for (const std::size_t t : task.targets) observed.observed[t] = false;

        std::vector<double> estimates(task.targets.size());
        double iters = 0.0;
        if (method == "po") {
          const Assignment filled = prior_only_predict(engine, x, observed);
          for (std::size_t t = 0; t < task.targets.size(); ++t) {
            estimates[t] = filled.values[task.targets[t]];
          }
        } else if (method == "retrain") {
          estimates = retrain->predict(x, v);
        } else {
          InferenceResult res;
          if (method == "ri") {
            res = random_init_infer(engine, x, observed, spec.options,
                                    spec.seed ^ (ti * 1315423911ULL + ri));
          } else {
            const InferenceMode mode =
                InferenceEngine::select_mode(engine.model(), observed);
            res = engine.infer(x, observed, spec.options, mode);
          }
          iters = static_cast<double>(res.iterations_used);
          for (std::size_t t = 0; t < task.targets.size(); ++t) {
            const auto it = std::find(res.targets.begin(), res.targets.end(),
                                      task.targets[t]);
            estimates[t] = res.estimates[static_cast<std::size_t>(
                it - res.targets.begin())];
          }
        }

        for (std::size_t t = 0; t < task.targets.size(); ++t) {
          const std::size_t col = task.targets[t];
          acc.preds.push_back(data.v_to_raw(col, estimates[t]));
          acc.truth.push_back(data.v_to_raw(col, v[col]));
        }
        acc.iter_sum += iters;
        ++acc.runs;
      }
      row.metric.push_back(metric_value(task.metric, acc.preds, acc.truth));
      row.mean_iters.push_back(acc.iter_sum / static_cast<double>(acc.runs));
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

void write_suite_csv(const SuiteResult& result, const Dataset& data,
                     const std::filesystem::path& path,
                     const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open suite output: " + path.string());
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "method";
  for (const auto& task : result.suite) {
    out << ",\"{";
    for (std::size_t i = 0; i < task.targets.size(); ++i) {
      if (i > 0) out << " ";
      out << data.variables[task.targets[i]].name;
    }
    out << "}\"";
  }
  out << "\n";
  for (const auto& row : result.rows) {
    out << row.method;
    for (const double m : row.metric) out << "," << m;
    out << "\n";
    out << row.method << "_iters";
    for (const double it : row.mean_iters) out << "," << it;
    out << "\n";
  }
  if (!out) throw IoError("suite write failed");
}

}  // namespace binfer
