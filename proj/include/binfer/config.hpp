#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "binfer/baselines.hpp"
#include "binfer/data.hpp"
#include "binfer/inference.hpp"
#include "binfer/training.hpp"

namespace binfer {

// One experiment = one JSON file: dataset, factorization, architecture,
// training hyperparameters, inference options and the evaluation suite.
struct ExperimentConfig {
  // dataset
  std::string dataset_kind;  // toy_line | gaussian_chain | shhs_surrogate | dermatology
  std::string dataset_path;  // dermatology only
  std::size_t dataset_size = 0;
  std::uint64_t dataset_seed = 0;
  std::size_t chain_vars = 3;        // gaussian_chain only
  std::size_t chain_features = 2;    // gaussian_chain only
  double split_train = 0.7;
  double split_val = 0.1;

  // model
  std::string method = "bin";  // bin | cbin
  std::vector<std::size_t> hidden;
  std::optional<std::vector<VariableSpec>> factorization;  // default: chain
  std::uint64_t init_seed = 0;

  TrainConfig train;
  InferenceOptions inference;

  // suite
  std::vector<std::string> suite_methods;
  std::optional<TaskSuite> suite_tasks;  // default: per-dataset suite
  std::size_t suite_max_rows = 0;

  std::string output_dir = ".";
  std::string config_hash;  // filled by the loader

  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

// FNV-1a over the raw config bytes, printed as 16 hex digits; embedded in
// every output so results are traceable to the exact file that produced them.
std::string hash_text(const std::string& text);

// Builds the dataset named by the config (splits assigned, standardized).
Dataset build_dataset(const ExperimentConfig& cfg);

// Fresh model matching the config and dataset (scaler copied over).
BinModel build_model(const ExperimentConfig& cfg, const Dataset& data);

TaskSuite default_suite(const ExperimentConfig& cfg, const Dataset& data);

}  // namespace binfer
