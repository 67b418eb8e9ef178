#pragma once

// Shared constructed models and trained toy fixtures for the test suites.

#include <span>
#include <vector>

#include "binfer/data.hpp"
#include "binfer/model.hpp"
#include "binfer/rng.hpp"
#include "binfer/training.hpp"

namespace fixtures {

// Turns a subnetwork into an exact affine-Gaussian conditional:
//   mean = coeffs . input + intercept, variance = noise_var (constant).
// Weight variances are driven to ~1e-17 so propagated moments match
// linear-Gaussian algebra to well below 1e-8.
inline void set_affine(binfer::NpnSubnetwork& net, std::span<const double> coeffs,
                       double intercept, double noise_var) {
  if (!net.hidden.empty()) throw binfer::Error("set_affine: subnet must be single-layer");
  if (coeffs.size() != net.input_dim) throw binfer::Error("set_affine: size mismatch");
  auto& head = net.head;
  std::fill(head.w_var_raw.begin(), head.w_var_raw.end(), -40.0);
  std::fill(head.b_var_raw.begin(), head.b_var_raw.end(), -40.0);
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    head.w_mean[i] = coeffs[i];           // mean unit row
    head.w_mean[coeffs.size() + i] = 0.0; // noise unit row
  }
  head.b_mean[0] = intercept;
  head.b_mean[1] = binfer::softplus_inv(noise_var - binfer::kVarianceFloor);
}

// Single-layer chain model whose conditionals are exactly the given
// linear-Gaussian chain parameters.
inline binfer::BinModel affine_chain_model(const binfer::ChainParams& params) {
  const std::size_t n = params.coeff.size();
  binfer::Rng rng(0);
  std::vector<std::string> names(n);
  std::vector<binfer::VarKind> kinds(n, binfer::VarKind::kContinuous);
  for (std::size_t i = 0; i < n; ++i) names[i] = "v" + std::to_string(i + 1);
  const std::vector<std::size_t> hidden;
  binfer::BinModel model =
      binfer::make_chain_model(params.feature_dim, names, kinds, hidden, rng);
  for (std::size_t i = 0; i < n; ++i) {
    set_affine(model.subnets[i], params.coeff[i], params.intercept[i],
               params.sigma[i] * params.sigma[i]);
  }
  return model;
}

struct ToyFixture {
  binfer::Dataset data;        // the 6-point line set, standardized
  binfer::BinModel bin;        // plain maximum-likelihood training
  binfer::BinModel cbin;       // composite training, same seed and budget
  binfer::TrainConfig config;  // shared hyperparameters
};

inline const ToyFixture& toy_fixture() {
  static const ToyFixture fixture = [] {
    ToyFixture f;
    f.data = binfer::gen_toy_line(6, 2024);
    f.data.train_idx.assign({0, 1, 2, 3, 4, 5});
    f.data.standardize();

    f.config.warmup_epochs = 150;
    f.config.train_epochs = 1350;
    f.config.rho = 0.02;
    f.config.gamma = 0.15;
    f.config.batch_size = 6;
    f.config.inner_iters = 20;
    f.config.lambda_c = 1.0;
    f.config.seed = 11;
    f.config.cl_subsets = {{0}};

    const std::vector<std::size_t> hidden{24};
    auto build = [&] {
      binfer::Rng rng(5);
      const std::vector<std::string> names{"v1", "v2"};
      const std::vector<binfer::VarKind> kinds(2, binfer::VarKind::kContinuous);
      return binfer::make_chain_model(0, names, kinds, hidden, rng);
    };

    f.bin = build();
    binfer::warmup_train(f.bin, f.data, f.config,
                         f.config.warmup_epochs + f.config.train_epochs);
    f.cbin = build();
    binfer::cbin_train(f.cbin, f.data, f.config);
    return f;
  }();
  return fixture;
}

}  // namespace fixtures
