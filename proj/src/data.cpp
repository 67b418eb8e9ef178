#include "binfer/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "binfer/rng.hpp"

namespace binfer {

namespace {

std::vector<VariableSpec> chain_specs(std::span<const std::string> names,
                                      VarKind kind) {
  std::vector<VariableSpec> specs(names.size());
  for (std::size_t n = 0; n < names.size(); ++n) {
    specs[n].name = names[n];
    specs[n].kind = kind;
    specs[n].parents.resize(n);
    std::iota(specs[n].parents.begin(), specs[n].parents.end(), 0);
  }
  return specs;
}

void column_stats(const std::vector<double>& data, std::size_t cols,
                  std::span<const std::size_t> rows, std::size_t col,
                  double& mean, double& stddev) {
  double sum = 0.0;
  for (const std::size_t r : rows) sum += data[r * cols + col];
  mean = sum / static_cast<double>(rows.size());
  double ss = 0.0;
  for (const std::size_t r : rows) {
    const double d = data[r * cols + col] - mean;
    ss += d * d;
  }
  stddev = std::sqrt(ss / static_cast<double>(rows.size()));
  if (stddev == 0.0) stddev = 1.0;  // constant column: leave values centered only
}

}  // namespace

void Dataset::assign_splits(double train_frac, double val_frac,
                            std::uint64_t seed) {
  const std::size_t m = rows();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed ^ 0x5eedf00dULL);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::round(train_frac * m));
  const auto n_val = static_cast<std::size_t>(std::round(val_frac * m));
  train_idx.assign(order.begin(), order.begin() + n_train);
  val_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  test_idx.assign(order.begin() + n_train + n_val, order.end());
}

void Dataset::standardize() {
  if (standardized) throw Error("dataset already standardized");
  if (train_idx.empty()) throw Error("standardize: splits not assigned");
  scaler.x_mean.resize(feature_dim);
  scaler.x_std.resize(feature_dim);
  for (std::size_t c = 0; c < feature_dim; ++c) {
    column_stats(X, feature_dim, train_idx, c, scaler.x_mean[c], scaler.x_std[c]);
  }
  scaler.v_mean.resize(num_vars);
  scaler.v_std.resize(num_vars);
  for (std::size_t c = 0; c < num_vars; ++c) {
    column_stats(V, num_vars, train_idx, c, scaler.v_mean[c], scaler.v_std[c]);
  }
  const std::size_t m = rows();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < feature_dim; ++c) {
      X[r * feature_dim + c] = (X[r * feature_dim + c] - scaler.x_mean[c]) / scaler.x_std[c];
    }
    for (std::size_t c = 0; c < num_vars; ++c) {
      V[r * num_vars + c] = (V[r * num_vars + c] - scaler.v_mean[c]) / scaler.v_std[c];
    }
  }
  standardized = true;
}

double Dataset::v_to_raw(std::size_t col, double value) const {
  if (!standardized) return value;
  return value * scaler.v_std[col] + scaler.v_mean[col];
}

double Dataset::v_to_std(std::size_t col, double value) const {
  if (!standardized) return value;
  return (value - scaler.v_mean[col]) / scaler.v_std[col];
}

Dataset gen_toy_line(std::size_t m, std::uint64_t seed, double noise) {
  if (m < 2) throw Error("gen_toy_line: need at least two points");
  Dataset ds;
  ds.feature_dim = 0;
  ds.num_vars = 2;
  const std::string names[] = {"v1", "v2"};
  ds.variables = chain_specs(names, VarKind::kContinuous);
  ds.V.resize(m * 2);
  Rng rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const double v1 = rng.uniform();
    const double v2 = 3.0 * v1 + 1.0 + noise * rng.normal();
    ds.V[i * 2 + 0] = v1;
    ds.V[i * 2 + 1] = v2;
  }
  return ds;
}

Dataset gen_gaussian_chain(std::size_t n_vars, std::size_t m, std::uint64_t seed,
                           std::size_t feature_dim, ChainParams* params_out,
                           double sigma_scale) {
  if (n_vars < 2) throw Error("gen_gaussian_chain: need at least two variables");
  Rng rng(seed);
  ChainParams params;
  params.feature_dim = feature_dim;
  params.coeff.resize(n_vars);
  params.intercept.resize(n_vars);
  params.sigma.resize(n_vars);
  for (std::size_t n = 0; n < n_vars; ++n) {
    params.coeff[n].resize(feature_dim + n);
    for (double& a : params.coeff[n]) a = rng.uniform(-1.0, 1.0);
    params.intercept[n] = rng.uniform(-0.5, 0.5);
    params.sigma[n] = sigma_scale * rng.uniform(0.3, 0.8);
  }

  Dataset ds;
  ds.feature_dim = feature_dim;
  ds.num_vars = n_vars;
  std::vector<std::string> names(n_vars);
  for (std::size_t n = 0; n < n_vars; ++n) names[n] = "v" + std::to_string(n + 1);
  ds.variables = chain_specs(names, VarKind::kContinuous);
  ds.X.resize(m * feature_dim);
  ds.V.resize(m * n_vars);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t d = 0; d < feature_dim; ++d) {
      ds.X[i * feature_dim + d] = rng.normal();
    }
    for (std::size_t n = 0; n < n_vars; ++n) {
      double mean = params.intercept[n];
      for (std::size_t d = 0; d < feature_dim; ++d) {
        mean += params.coeff[n][d] * ds.X[i * feature_dim + d];
      }
      for (std::size_t k = 0; k < n; ++k) {
        mean += params.coeff[n][feature_dim + k] * ds.V[i * n_vars + k];
      }
      ds.V[i * n_vars + n] = mean + params.sigma[n] * rng.normal();
    }
  }
  if (params_out != nullptr) *params_out = params;
  return ds;
}

Dataset gen_shhs_surrogate(std::size_t m, std::uint64_t seed, double coupling,
                           std::vector<double>* raw_scores_out) {
  if (m < 100) throw Error("gen_shhs_surrogate: need at least 100 rows");
  constexpr std::size_t kFactors = 4;
  constexpr std::size_t kFeatures = 16;
  constexpr std::size_t kScores = 8;
  Rng rng(seed);

  // Fixed loadings drawn once per seed: features and scores are noisy views
  // of shared latent factors, so the scores are mutually correlated and
  // predictable from the features.
  std::vector<double> feat_load(kFeatures * kFactors);
  for (double& w : feat_load) w = rng.uniform(-1.0, 1.0);
  std::vector<double> score_load(kScores * kFactors);
  for (double& w : score_load) w = rng.uniform(-1.0, 1.0);
  std::vector<double> score_chain(kScores);
  for (double& w : score_chain) w = rng.uniform(0.2, 0.6);

  Dataset ds;
  ds.feature_dim = kFeatures;
  ds.num_vars = kScores;
  std::vector<std::string> names(kScores);
  for (std::size_t n = 0; n < kScores; ++n) names[n] = "v" + std::to_string(n + 1);
  ds.variables = chain_specs(names, VarKind::kBinary);
  ds.X.resize(m * kFeatures);
  ds.V.resize(m * kScores);

  std::vector<double> factors(kFactors);
  for (std::size_t i = 0; i < m; ++i) {
    for (double& f : factors) f = rng.normal();
    for (std::size_t d = 0; d < kFeatures; ++d) {
      double x = 0.35 * rng.normal();
      for (std::size_t f = 0; f < kFactors; ++f) {
        x += coupling * feat_load[d * kFactors + f] * factors[f];
      }
      ds.X[i * kFeatures + d] = x;
    }
    double prev = 0.0;
    for (std::size_t n = 0; n < kScores; ++n) {
      double s = 0.45 * rng.normal();
      for (std::size_t f = 0; f < kFactors; ++f) {
        s += coupling * score_load[n * kFactors + f] * factors[f];
      }
      s += coupling * score_chain[n] * prev;
      ds.V[i * kScores + n] = s;
      prev = s;
    }
  }

  ds.assign_splits(0.7, 0.1, seed);
  if (raw_scores_out != nullptr) *raw_scores_out = ds.V;
  // Threshold each score at its train-split mean; later standardization also
  // uses train statistics only.
  for (std::size_t c = 0; c < kScores; ++c) {
    double sum = 0.0;
    for (const std::size_t r : ds.train_idx) sum += ds.V[r * kScores + c];
    const double thr = sum / static_cast<double>(ds.train_idx.size());
    for (std::size_t r = 0; r < m; ++r) {
      ds.V[r * kScores + c] = ds.V[r * kScores + c] > thr ? 1.0 : 0.0;
    }
  }
  return ds;
}

TaskSuite shhs_task_suite() {
  const std::vector<std::vector<std::size_t>> subsets = {
      {0, 2}, {3, 4}, {0, 2, 5, 6}, {1, 5, 6}, {2, 4, 7}, {3, 4, 5}, {3, 5, 6}};
  TaskSuite suite;
  for (const auto& s : subsets) {
    suite.push_back(InferenceTaskSpec{s, MetricKind::kAccuracy});
  }
  return suite;
}

Dataset load_dermatology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  constexpr std::size_t kAttrs = 34;  // plus trailing class label
  // Clinical attributes (1-based): 1-11 and 34 (age). Attributes of
  // interest: 27 vacuolisation/damage of basal layer, 29 saw-tooth
  // appearance of retes, 21 elongation of the rete ridges.
  const std::vector<std::size_t> x_cols = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 33};
  const std::vector<std::size_t> v_cols = {26, 28, 20};

  std::vector<std::array<double, kAttrs>> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::array<double, kAttrs> row{};
    std::size_t col = 0;
    while (std::getline(ss, field, ',')) {
      if (col >= kAttrs + 1) {
        throw IoError("dermatology row " + std::to_string(line_no) +
                      ": too many fields");
      }
      if (col < kAttrs) {
        if (field == "?") {
          row[col] = std::numeric_limits<double>::quiet_NaN();
        } else {
          try {
            row[col] = std::stod(field);
          } catch (const std::exception&) {
            throw IoError("dermatology row " + std::to_string(line_no) +
                          ": malformed field '" + field + "'");
          }
        }
      }
      ++col;
    }
    if (col != kAttrs + 1) {
      throw IoError("dermatology row " + std::to_string(line_no) +
                    ": expected " + std::to_string(kAttrs + 1) + " fields, got " +
                    std::to_string(col));
    }
    raw.push_back(row);
  }
  if (raw.empty()) throw IoError("dermatology: empty file");

  Dataset ds;
  ds.feature_dim = x_cols.size();
  ds.num_vars = v_cols.size();
  const std::string names[] = {"v1", "v2", "v3"};
  ds.variables = chain_specs(names, VarKind::kContinuous);
  const std::size_t m = raw.size();
  ds.X.resize(m * ds.feature_dim);
  ds.V.resize(m * ds.num_vars);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < x_cols.size(); ++c) {
      ds.X[i * ds.feature_dim + c] = raw[i][x_cols[c]];
    }
    for (std::size_t c = 0; c < v_cols.size(); ++c) {
      // Ordinal 0-3 codes rescaled to the unit interval.
      ds.V[i * ds.num_vars + c] = raw[i][v_cols[c]] / 3.0;
    }
  }

  ds.assign_splits(0.7, 0.1, 7);
  // Missing age: train-split mean imputation.
  for (std::size_t c = 0; c < ds.feature_dim; ++c) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (const std::size_t r : ds.train_idx) {
      const double v = ds.X[r * ds.feature_dim + c];
      if (std::isfinite(v)) {
        sum += v;
        ++cnt;
      }
    }
    const double fill = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      double& v = ds.X[r * ds.feature_dim + c];
      if (!std::isfinite(v)) v = fill;
    }
  }
  return ds;
}

TaskSuite dermatology_task_suite() {
  return {InferenceTaskSpec{{0}, MetricKind::kRmse},
          InferenceTaskSpec{{1}, MetricKind::kRmse},
          InferenceTaskSpec{{0, 1}, MetricKind::kRmse},
          InferenceTaskSpec{{0, 2}, MetricKind::kRmse}};
}

double metric_rmse(std::span<const double> preds, std::span<const double> truth) {
  if (preds.size() != truth.size()) throw Error("metric: size mismatch");
  if (preds.empty()) throw Error("metric: empty task");
  double ss = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - truth[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(preds.size()));
}

double metric_accuracy(std::span<const double> preds, std::span<const double> truth) {
  if (preds.size() != truth.size()) throw Error("metric: size mismatch");
  if (preds.empty()) throw Error("metric: empty task");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (threshold_binary(preds[i]) == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double metric_value(MetricKind kind, std::span<const double> preds,
                    std::span<const double> truth) {
  return kind == MetricKind::kRmse ? metric_rmse(preds, truth)
                                   : metric_accuracy(preds, truth);
}

}  // namespace binfer
