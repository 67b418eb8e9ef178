#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "binfer/baselines.hpp"
#include "binfer/config.hpp"
#include "binfer/inference.hpp"
#include "binfer/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainArgs {
  std::string config;
  std::string out;
  std::int64_t seed = -1;
};

struct InferArgs {
  std::string config;
  std::string checkpoint;
  std::string targets;
  std::string mode = "auto";
  std::string baseline;
  std::string out;
  std::int64_t seed = -1;
  std::size_t max_rows = 0;
};

struct SuiteArgs {
  std::string config;
  std::string checkpoint;
  std::vector<std::string> cbin_checkpoints;
  std::string out;
  std::int64_t seed = -1;
};

struct GenDataArgs {
  std::string config;
  std::string out;
};

std::vector<std::size_t> parse_targets(const std::string& spec,
                                       const binfer::Dataset& data) {
  std::vector<std::size_t> targets;
  std::stringstream ss(spec);
  std::string name;
  while (std::getline(ss, name, ',')) {
    bool found = false;
    for (std::size_t n = 0; n < data.num_vars; ++n) {
      if (data.variables[n].name == name) {
        targets.push_back(n);
        found = true;
        break;
      }
    }
    if (!found) throw binfer::Error("unknown variable name '" + name + "'");
  }
  if (targets.empty()) throw binfer::Error("no targets given");
  return targets;
}

std::string model_meta(const binfer::ExperimentConfig& cfg) {
  json meta;
  meta["config_hash"] = cfg.config_hash;
  meta["method"] = cfg.method;
  meta["lambda_c"] = cfg.train.lambda_c;
  meta["inner_iters"] = cfg.train.inner_iters;
  meta["seed"] = cfg.train.seed;
  return meta.dump();
}

int cmd_train(const TrainArgs& args) {
  binfer::ExperimentConfig cfg = binfer::load_config(args.config);
  if (!args.out.empty()) cfg.output_dir = args.out;
  if (args.seed >= 0) {
    cfg.train.seed = static_cast<std::uint64_t>(args.seed);
    cfg.init_seed = static_cast<std::uint64_t>(args.seed);
  }
  binfer::Dataset data = binfer::build_dataset(cfg);
  binfer::BinModel model = binfer::build_model(cfg, data);
  model.meta = model_meta(cfg);

  binfer::TrainReport report;
  if (cfg.method == "cbin") {
    report = binfer::cbin_train(model, data, cfg.train);
  } else {
    report = binfer::warmup_train(model, data, cfg.train,
                                  cfg.train.warmup_epochs + cfg.train.train_epochs);
  }

  fs::create_directories(cfg.output_dir);
  const fs::path ckpt = fs::path(cfg.output_dir) / "checkpoint.bin";
  binfer::save_checkpoint(model, ckpt);
  binfer::write_report_jsonl(report, fs::path(cfg.output_dir) / "train_log.jsonl");
  std::cout << "checkpoint: " << ckpt.string() << "\n"
            << "final train nll: " << report.epoch_joint_nll.back() << "\n"
            << "wall seconds: " << report.wall_seconds << "\n";
  return 0;
}

int cmd_infer(const InferArgs& args) {
  binfer::ExperimentConfig cfg = binfer::load_config(args.config);
  binfer::Dataset data = binfer::build_dataset(cfg);
  binfer::BinModel model = binfer::load_checkpoint(args.checkpoint);
  if (model.num_vars() != data.num_vars || model.feature_dim != data.feature_dim) {
    throw binfer::Error("checkpoint does not match the config's dataset");
  }
  const std::vector<std::size_t> targets = parse_targets(args.targets, data);
  binfer::InferenceOptions opts = cfg.inference;
  const std::uint64_t seed =
      args.seed >= 0 ? static_cast<std::uint64_t>(args.seed) : opts.seed;

  binfer::InferenceEngine engine(model);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!args.out.empty()) {
    file.open(args.out);
    if (!file) throw binfer::IoError("cannot open output: " + args.out);
    out = &file;
  }
  *out << "# config_hash=" << cfg.config_hash << "\n";
  *out << "row,mode,iterations,final_loss";
  for (const std::size_t t : targets) *out << "," << data.variables[t].name;
  *out << "\n";

  std::vector<std::size_t> rows = data.test_idx;
  if (args.max_rows > 0 && rows.size() > args.max_rows) rows.resize(args.max_rows);
  for (const std::size_t r : rows) {
    const auto x = data.x_row(r);
    const auto v = data.v_row(r);
    binfer::Assignment observed = binfer::Assignment::empty(data.num_vars);
    for (std::size_t n = 0; n < data.num_vars; ++n) observed.set(n, v[n]);
    for (const std::size_t t : targets) observed.observed[t] = false;

    std::string mode_used;
    binfer::InferenceResult res;
    if (args.baseline == "po") {
      const binfer::Assignment filled =
          binfer::prior_only_predict(engine, x, observed);
      res.targets = targets;
      for (const std::size_t t : targets) res.estimates.push_back(filled.values[t]);
      res.final_loss = engine.loss_at(x, filled.values);
      mode_used = "prior_only";
    } else if (args.baseline == "ri") {
      res = binfer::random_init_infer(engine, x, observed, opts, seed ^ r);
      mode_used = "random_init";
    } else if (!args.baseline.empty()) {
      throw binfer::Error("unknown baseline '" + args.baseline + "'");
    } else {
      binfer::InferenceMode mode;
      if (args.mode == "auto") {
        mode = binfer::InferenceEngine::select_mode(model, observed);
      } else if (args.mode == "forward") {
        mode = binfer::InferenceMode::kForward;
      } else if (args.mode == "hybrid") {
        mode = binfer::InferenceMode::kHybrid;
      } else if (args.mode == "general") {
        mode = binfer::InferenceMode::kGeneral;
      } else {
        throw binfer::Error("unknown mode '" + args.mode + "'");
      }
      res = engine.infer(x, observed, opts, mode);
      mode_used = mode == binfer::InferenceMode::kForward  ? "forward"
                  : mode == binfer::InferenceMode::kHybrid ? "hybrid"
                                                           : "general";
    }

    *out << r << "," << mode_used << "," << res.iterations_used << ","
         << res.final_loss;
    for (const std::size_t t : targets) {
      const auto it = std::find(res.targets.begin(), res.targets.end(), t);
      const double est = res.estimates[static_cast<std::size_t>(it - res.targets.begin())];
      *out << "," << data.v_to_raw(t, est);
    }
    *out << "\n";
  }
  return 0;
}

int cmd_suite(const SuiteArgs& args) {
  binfer::ExperimentConfig cfg = binfer::load_config(args.config);
  if (!args.out.empty()) cfg.output_dir = args.out;
  binfer::Dataset data = binfer::build_dataset(cfg);
  binfer::BinModel bin_model = binfer::load_checkpoint(args.checkpoint);
  const binfer::TaskSuite suite = binfer::default_suite(cfg, data);

  std::vector<binfer::BinModel> cbin_models;
  for (const auto& path : args.cbin_checkpoints) {
    cbin_models.push_back(binfer::load_checkpoint(path));
  }

  binfer::SuiteSpec spec;
  spec.methods = cfg.suite_methods;
  if (spec.methods.empty()) {
    spec.methods = {"po", "ri", "bin"};
    if (!cbin_models.empty()) spec.methods.push_back("cbin");
  }
  spec.options = cfg.inference;
  spec.seed = args.seed >= 0 ? static_cast<std::uint64_t>(args.seed) : cfg.train.seed;
  spec.retrain_cfg = cfg.train;
  spec.retrain_hidden = cfg.hidden;
  spec.max_rows = cfg.suite_max_rows;

  const binfer::SuiteResult result = binfer::run_suite(
      bin_model, cbin_models.empty() ? nullptr : &cbin_models.front(), data,
      suite, spec);
  fs::create_directories(cfg.output_dir);
  binfer::write_suite_csv(result, data,
                          fs::path(cfg.output_dir) / "suite_table.csv",
                          "config_hash=" + cfg.config_hash);

  // One grid row per provided checkpoint per task: inner-loop budget and
  // composite weight against test-time iteration counts and metric.
  std::ofstream grid(fs::path(cfg.output_dir) / "iteration_grid.csv");
  grid << "# config_hash=" << cfg.config_hash << "\n";
  grid << "inner_iters,lambda_c,task,mean_iterations,metric\n";
  binfer::SuiteSpec grid_spec = spec;
  grid_spec.methods = {"cbin"};
  for (const auto& cbin : cbin_models) {
    double lambda_c = 0.0;
    std::int64_t inner = 0;
    if (!cbin.meta.empty()) {
      const json meta = json::parse(cbin.meta, nullptr, false);
      if (!meta.is_discarded()) {
        lambda_c = meta.value("lambda_c", 0.0);
        inner = meta.value("inner_iters", 0);
      }
    }
    const binfer::SuiteResult r =
        binfer::run_suite(bin_model, &cbin, data, suite, grid_spec);
    for (std::size_t ti = 0; ti < suite.size(); ++ti) {
      grid << inner << "," << lambda_c << "," << ti << ","
           << r.rows[0].mean_iters[ti] << "," << r.rows[0].metric[ti] << "\n";
    }
  }
  std::cout << "suite written to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_gen_data(const GenDataArgs& args) {
  binfer::ExperimentConfig cfg = binfer::load_config(args.config);
  binfer::Dataset data = binfer::build_dataset(cfg);
  std::ofstream out(args.out);
  if (!out) throw binfer::IoError("cannot open output: " + args.out);
  out << "# config_hash=" << cfg.config_hash << "\n";
  out << "split";
  for (std::size_t d = 0; d < data.feature_dim; ++d) out << ",x" << d + 1;
  for (const auto& v : data.variables) out << "," << v.name;
  out << "\n";
  std::vector<char> split(data.rows(), 'n');
  for (const std::size_t r : data.train_idx) split[r] = 't';
  for (const std::size_t r : data.val_idx) split[r] = 'v';
  for (const std::size_t r : data.test_idx) split[r] = 'e';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    out << (split[r] == 't' ? "train" : split[r] == 'v' ? "val" : "test");
    for (std::size_t d = 0; d < data.feature_dim; ++d) {
      double x = data.x_row(r)[d];
      if (data.standardized) x = x * data.scaler.x_std[d] + data.scaler.x_mean[d];
      out << "," << x;
    }
    for (std::size_t n = 0; n < data.num_vars; ++n) {
      out << "," << data.v_to_raw(n, data.v_row(r)[n]);
    }
    out << "\n";
  }
  std::cout << "dataset written to " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bidirectional inference networks: train, infer, evaluate"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", train_args.config, "Experiment config (JSON)")
      ->required();
  train->add_option("--out", train_args.out, "Output directory override");
  train->add_option("--seed", train_args.seed, "Seed override");

  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "Run one inference task over the test split");
  infer->add_option("--config", infer_args.config, "Experiment config (JSON)")
      ->required();
  infer->add_option("--checkpoint", infer_args.checkpoint, "Model checkpoint")
      ->required();
  infer->add_option("--targets", infer_args.targets,
                    "Comma-separated target variable names")
      ->required();
  infer->add_option("--mode", infer_args.mode, "auto|forward|hybrid|general");
  infer->add_option("--baseline", infer_args.baseline, "po|ri");
  infer->add_option("--out", infer_args.out, "Predictions CSV (default stdout)");
  infer->add_option("--seed", infer_args.seed, "Seed override");
  infer->add_option("--max-rows", infer_args.max_rows, "Limit test rows");

  SuiteArgs suite_args;
  auto* suite = app.add_subcommand("suite", "Run the evaluation suite");
  suite->add_option("--config", suite_args.config, "Experiment config (JSON)")
      ->required();
  suite->add_option("--checkpoint", suite_args.checkpoint, "Base model checkpoint")
      ->required();
  suite->add_option("--cbin", suite_args.cbin_checkpoints,
                    "Composite-trained checkpoint(s); repeatable");
  suite->add_option("--out", suite_args.out, "Output directory override");
  suite->add_option("--seed", suite_args.seed, "Seed override");

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Materialize a dataset as CSV");
  gen->add_option("--config", gen_args.config, "Experiment config (JSON)")->required();
  gen->add_option("--out", gen_args.out, "Output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (infer->parsed()) return cmd_infer(infer_args);
    if (suite->parsed()) return cmd_suite(suite_args);
    if (gen->parsed()) return cmd_gen_data(gen_args);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cerr << err.dump() << std::endl;
    return 1;
  }
  return 0;
}
