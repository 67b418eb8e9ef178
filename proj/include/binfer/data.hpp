#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "binfer/model.hpp"

namespace binfer {

enum class MetricKind { kRmse, kAccuracy };

// One inference task: predict `targets` given the remaining variables and X.
struct InferenceTaskSpec {
  std::vector<std::size_t> targets;
  MetricKind metric = MetricKind::kRmse;
};

using TaskSuite = std::vector<InferenceTaskSpec>;

// Row-major tabular data with split bookkeeping. Generators and loaders
// return raw units; standardize() maps X and V into train-split z-scores and
// records the per-column stats needed to undo the map.
struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t num_vars = 0;
  std::vector<double> X;  // rows x feature_dim
  std::vector<double> V;  // rows x num_vars
  std::vector<VariableSpec> variables;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  Scaler scaler;
  bool standardized = false;

  std::size_t rows() const { return feature_dim > 0 ? X.size() / feature_dim : V.size() / std::max<std::size_t>(num_vars, 1); }
  std::span<const double> x_row(std::size_t i) const {
    return {X.data() + i * feature_dim, feature_dim};
  }
  std::span<const double> v_row(std::size_t i) const {
    return {V.data() + i * num_vars, num_vars};
  }
  std::span<double> v_row_mut(std::size_t i) {
    return {V.data() + i * num_vars, num_vars};
  }

  void assign_splits(double train_frac, double val_frac, std::uint64_t seed);
  void standardize();

  double v_to_raw(std::size_t col, double standardized_value) const;
  double v_to_std(std::size_t col, double raw_value) const;
};

// Straight-line toy set: v1 ~ U(0,1), v2 = 3 v1 + 1 + noise * N(0,1); X is
// empty.
Dataset gen_toy_line(std::size_t m, std::uint64_t seed, double noise = 1.0);

// Linear-Gaussian chain with known coefficients, usable as an analytic
// oracle: v_n = a_n . [x; v_<n] + c_n + sigma_n * eps.
struct ChainParams {
  std::size_t feature_dim = 0;
  std::vector<std::vector<double>> coeff;  // coeff[n] has feature_dim + n entries
  std::vector<double> intercept;
  std::vector<double> sigma;
};

Dataset gen_gaussian_chain(std::size_t n_vars, std::size_t m, std::uint64_t seed,
                           std::size_t feature_dim = 2,
                           ChainParams* params_out = nullptr,
                           double sigma_scale = 1.0);

// Synthetic stand-in for a binarized health-score study: 16 features, 8
// correlated latent scores thresholded at their train-split means into
// {0,1}. `coupling` scales the shared latent factors; 0 makes features and
// scores independent. `raw_scores_out`, when given, receives the
// pre-binarization scores so the thresholding can be audited.
Dataset gen_shhs_surrogate(std::size_t m, std::uint64_t seed,
                           double coupling = 1.0,
                           std::vector<double>* raw_scores_out = nullptr);

// The evaluation subsets used with the surrogate (eight-variable suite).
TaskSuite shhs_task_suite();

// UCI dermatology layout: 34 ordinal/integer attributes plus a class label,
// comma separated, '?' marking missing age. The 12 clinical attributes form
// X; the three histopathological attributes of interest form V, rescaled
// from 0-3 codes to [0,1].
Dataset load_dermatology(const std::filesystem::path& path);

TaskSuite dermatology_task_suite();

// Pooled over every inferred variable and sample. `preds`/`truth` are
// task-major: for each sample, one value per task target, raw units.
double metric_rmse(std::span<const double> preds, std::span<const double> truth);
double metric_accuracy(std::span<const double> preds, std::span<const double> truth);
double metric_value(MetricKind kind, std::span<const double> preds,
                    std::span<const double> truth);

// Binarization threshold rule shared by metrics and loaders: 0.5 and above
// maps to class 1.
inline double threshold_binary(double value) { return value >= 0.5 ? 1.0 : 0.0; }

}  // namespace binfer
