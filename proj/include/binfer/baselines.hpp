#pragma once

#include <string>
#include <vector>

#include "binfer/data.hpp"
#include "binfer/inference.hpp"
#include "binfer/training.hpp"

namespace binfer {

enum class BaselineKind { kPriorOnly, kRandomInit, kRetrain };

// Feedforward initialization reported as the final prediction; no iterative
// refinement.
Assignment prior_only_predict(InferenceEngine& engine, std::span<const double> x,
                              const Assignment& observed);

// Gradient-based inference started from standard-normal draws (standardized
// units) instead of the feedforward sweep.
InferenceResult random_init_infer(InferenceEngine& engine,
                                  std::span<const double> x,
                                  const Assignment& observed,
                                  const InferenceOptions& opts,
                                  std::uint64_t seed);

// One independent regression network per target, trained on [X; V_given]
// with plain NLL; predicts with a single forward pass.
struct RetrainPredictor {
  std::vector<std::size_t> targets;
  std::vector<std::size_t> given;  // complement of targets
  std::vector<BinModel> nets;      // one single-variable model per target

  // Predictions in standardized units, aligned with `targets`.
  std::vector<double> predict(std::span<const double> x,
                              std::span<const double> values) const;
};

RetrainPredictor retrain_specific(const Dataset& data,
                                  const InferenceTaskSpec& task,
                                  const TrainConfig& cfg,
                                  std::span<const std::size_t> hidden,
                                  std::uint64_t seed);

// Experiment harness shared by the command line tool and the evaluation
// tests: run each requested method over each task of the suite on the test
// split and report the pooled metric plus the mean iteration count.
struct SuiteRow {
  std::string method;
  std::vector<double> metric;      // per task
  std::vector<double> mean_iters;  // per task
};

struct SuiteResult {
  TaskSuite suite;
  std::vector<SuiteRow> rows;
};

struct SuiteSpec {
  std::vector<std::string> methods;  // subset of {po, ri, bin, cbin, retrain}
  InferenceOptions options;
  std::uint64_t seed = 0;            // random-init draws
  TrainConfig retrain_cfg;           // used by the retrain row
  std::vector<std::size_t> retrain_hidden;
  std::size_t max_rows = 0;          // 0 = whole test split
};

SuiteResult run_suite(const BinModel& bin_model, const BinModel* cbin_model,
                      const Dataset& data, const TaskSuite& suite,
                      const SuiteSpec& spec);

void write_suite_csv(const SuiteResult& result, const Dataset& data,
                     const std::filesystem::path& path,
                     const std::string& comment = "");

}  // namespace binfer
