#include "binfer/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace binfer {

namespace {

using nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

MetricKind metric_from_string(const std::string& s) {
  if (s == "rmse") return MetricKind::kRmse;
  if (s == "accuracy") return MetricKind::kAccuracy;
  throw Error("config: unknown metric '" + s + "'");
}

}  // namespace

std::string hash_text(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void ExperimentConfig::validate() const {
  if (dataset_kind != "toy_line" && dataset_kind != "gaussian_chain" &&
      dataset_kind != "shhs_surrogate" && dataset_kind != "dermatology") {
    throw Error("config: unknown dataset kind '" + dataset_kind + "'");
  }
  if (dataset_kind == "dermatology" && dataset_path.empty()) {
    throw Error("config: dermatology requires dataset.path");
  }
  if (method != "bin" && method != "cbin") {
    throw Error("config: method must be 'bin' or 'cbin'");
  }
  if (split_train <= 0.0 || split_val < 0.0 || split_train + split_val > 1.0) {
    throw Error("config: invalid split fractions");
  }
  inference.validate();
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: parse error: ") + e.what());
  }

  ExperimentConfig cfg;
  cfg.config_hash = hash_text(text);

  const json& ds = j.at("dataset");
  cfg.dataset_kind = ds.at("kind").get<std::string>();
  maybe(ds, "path", cfg.dataset_path);
  maybe(ds, "size", cfg.dataset_size);
  maybe(ds, "seed", cfg.dataset_seed);
  maybe(ds, "variables", cfg.chain_vars);
  maybe(ds, "features", cfg.chain_features);
  maybe(ds, "split_train", cfg.split_train);
  maybe(ds, "split_val", cfg.split_val);

  if (j.contains("model")) {
    const json& m = j.at("model");
    maybe(m, "method", cfg.method);
    maybe(m, "hidden", cfg.hidden);
    maybe(m, "init_seed", cfg.init_seed);
    if (m.contains("factorization")) {
      std::vector<VariableSpec> specs;
      for (const auto& v : m.at("factorization")) {
        VariableSpec spec;
        spec.name = v.at("name").get<std::string>();
        if (v.contains("kind")) {
          spec.kind = v.at("kind").get<std::string>() == "binary"
                          ? VarKind::kBinary
                          : VarKind::kContinuous;
        }
        if (v.contains("parents")) {
          spec.parents = v.at("parents").get<std::vector<std::size_t>>();
        }
        specs.push_back(std::move(spec));
      }
      cfg.factorization = std::move(specs);
    }
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "lambda_c", cfg.train.lambda_c);
    maybe(t, "warmup_epochs", cfg.train.warmup_epochs);
    maybe(t, "train_epochs", cfg.train.train_epochs);
    maybe(t, "inner_iters", cfg.train.inner_iters);
    maybe(t, "rho", cfg.train.rho);
    maybe(t, "gamma", cfg.train.gamma);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "seed", cfg.train.seed);
    if (t.contains("cl_subsets")) {
      cfg.train.cl_subsets =
          t.at("cl_subsets").get<std::vector<std::vector<std::size_t>>>();
    }
  }

  if (j.contains("inference")) {
    const json& i = j.at("inference");
    maybe(i, "max_iters", cfg.inference.max_iters);
    maybe(i, "lr", cfg.inference.lr);
    maybe(i, "rel_tol", cfg.inference.rel_tol);
    if (i.contains("init")) {
      const std::string init = i.at("init").get<std::string>();
      if (init == "feedforward") {
        cfg.inference.init = InitMode::kFeedforward;
      } else if (init == "random") {
        cfg.inference.init = InitMode::kRandom;
      } else {
        throw Error("config: inference.init must be 'feedforward' or 'random'");
      }
    }
    maybe(i, "seed", cfg.inference.seed);
  }

  if (j.contains("suite")) {
    const json& s = j.at("suite");
    maybe(s, "methods", cfg.suite_methods);
    maybe(s, "max_rows", cfg.suite_max_rows);
    if (s.contains("tasks")) {
      TaskSuite suite;
      for (const auto& task : s.at("tasks")) {
        InferenceTaskSpec spec;
        spec.targets = task.at("targets").get<std::vector<std::size_t>>();
        if (task.contains("metric")) {
          spec.metric = metric_from_string(task.at("metric").get<std::string>());
        }
        suite.push_back(std::move(spec));
      }
      cfg.suite_tasks = std::move(suite);
    }
  }

  maybe(j, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Dataset build_dataset(const ExperimentConfig& cfg) {
  Dataset ds;
  if (cfg.dataset_kind == "toy_line") {
    ds = gen_toy_line(cfg.dataset_size > 0 ? cfg.dataset_size : 6, cfg.dataset_seed);
  } else if (cfg.dataset_kind == "gaussian_chain") {
    ds = gen_gaussian_chain(cfg.chain_vars,
                            cfg.dataset_size > 0 ? cfg.dataset_size : 1000,
                            cfg.dataset_seed, cfg.chain_features);
  } else if (cfg.dataset_kind == "shhs_surrogate") {
    ds = gen_shhs_surrogate(cfg.dataset_size > 0 ? cfg.dataset_size : 800,
                            cfg.dataset_seed);
  } else {
    ds = load_dermatology(cfg.dataset_path);
  }
  if (ds.train_idx.empty()) {
    ds.assign_splits(cfg.split_train, cfg.split_val, cfg.dataset_seed);
  }
  ds.standardize();
  return ds;
}

BinModel build_model(const ExperimentConfig& cfg, const Dataset& data) {
  Rng rng(cfg.init_seed);
  std::vector<std::size_t> hidden = cfg.hidden;
  BinModel model;
  if (cfg.factorization.has_value()) {
    if (cfg.factorization->size() != data.num_vars) {
      throw Error("config: factorization size does not match dataset");
    }
    model = make_model(data.feature_dim, *cfg.factorization, hidden, rng);
  } else {
    std::vector<std::string> names;
    std::vector<VarKind> kinds;
    for (const auto& v : data.variables) {
      names.push_back(v.name);
      kinds.push_back(v.kind);
    }
    model = make_chain_model(data.feature_dim, names, kinds, hidden, rng);
  }
  model.scaler = data.scaler;
  return model;
}

TaskSuite default_suite(const ExperimentConfig& cfg, const Dataset& data) {
  if (cfg.suite_tasks.has_value()) return *cfg.suite_tasks;
  if (cfg.dataset_kind == "shhs_surrogate") return shhs_task_suite();
  if (cfg.dataset_kind == "dermatology") return dermatology_task_suite();
  TaskSuite suite;
  for (std::size_t n = 0; n < data.num_vars; ++n) {
    suite.push_back(InferenceTaskSpec{{n}, MetricKind::kRmse});
  }
  return suite;
}

}  // namespace binfer
