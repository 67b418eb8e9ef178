#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "binfer/graph.hpp"
#include "binfer/model.hpp"
#include "binfer/rng.hpp"
#include "support/oracles.hpp"

using binfer::BinModel;
using binfer::Moments;
using binfer::ScalarMoments;
using binfer::VariableSpec;
using binfer::VarKind;

namespace {

// Degenerate subnetwork with zero weights: constant predictive moments.
void make_constant(binfer::NpnSubnetwork& net, double mean, double var) {
  for (auto& layer : net.hidden) {
    std::fill(layer.w_mean.begin(), layer.w_mean.end(), 0.0);
    std::fill(layer.w_var_raw.begin(), layer.w_var_raw.end(), -40.0);
    std::fill(layer.b_mean.begin(), layer.b_mean.end(), 1.0);
    std::fill(layer.b_var_raw.begin(), layer.b_var_raw.end(), -40.0);
  }
  std::fill(net.head.w_mean.begin(), net.head.w_mean.end(), 0.0);
  std::fill(net.head.w_var_raw.begin(), net.head.w_var_raw.end(), -40.0);
  std::fill(net.head.b_var_raw.begin(), net.head.b_var_raw.end(), -40.0);
  net.head.b_mean[0] = mean;
  net.head.b_mean[1] = binfer::softplus_inv(var - binfer::kVarianceFloor);
}

BinModel chain2(std::uint64_t seed, std::size_t feature_dim = 1) {
  binfer::Rng rng(seed);
  const std::vector<std::string> names{"v1", "v2"};
  const std::vector<VarKind> kinds{VarKind::kContinuous, VarKind::kContinuous};
  const std::vector<std::size_t> hidden;
  return binfer::make_chain_model(feature_dim, names, kinds, hidden, rng);
}

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("joint_nll: single variable with matched constant subnet is zero") {
  BinModel model = chain2(1);
  model.variables.pop_back();
  model.subnets.pop_back();
  make_constant(model.subnets[0], 0.8, 1.0);
  const std::vector<double> x{0.0};
  const std::vector<double> v{0.8};
  CHECK(binfer::joint_nll(model, x, v) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("joint_nll: two matched terms add to zero") {
  BinModel model = chain2(2);
  make_constant(model.subnets[0], 0.3, 1.0);
  make_constant(model.subnets[1], -0.6, 1.0);
  const std::vector<double> x{1.0};
  const std::vector<double> v{0.3, -0.6};
  CHECK(binfer::joint_nll(model, x, v) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("joint_nll: equals the sum of independently computed terms") {
  BinModel model = chain2(3);
  make_constant(model.subnets[0], 0.5, 0.7);
  make_constant(model.subnets[1], -1.0, 0.4);
  const std::vector<double> x{0.2};
  const std::vector<double> v{1.1, 0.3};
  const double expected =
      binfer::gaussian_nll(v[0], 0.5, 0.7) + binfer::gaussian_nll(v[1], -1.0, 0.4);
  CHECK(binfer::joint_nll(model, x, v) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("joint_nll: incomplete assignment is an error") {
  BinModel model = chain2(4);
  const std::vector<double> x{0.0};
  const std::vector<double> v{1.0};
  CHECK_THROWS_AS(binfer::joint_nll(model, x, v), binfer::Error);
}

TEST_CASE("conditional_moments: constant subnet ignores inputs") {
  BinModel model = chain2(5);
  make_constant(model.subnets[1], 2.0, 0.9);
  const std::vector<double> x{0.7};
  for (double v1 : {-3.0, 0.0, 5.0}) {
    const std::vector<double> v{v1, 0.0};
    const ScalarMoments m = binfer::conditional_moments(model, 1, x, v);
    CHECK(m.mean == doctest::Approx(2.0));
    CHECK(m.var == doctest::Approx(0.9).epsilon(1e-9));
  }
}

TEST_CASE("conditional_moments: first variable depends only on x") {
  binfer::Rng rng(6);
  const std::vector<std::string> names{"v1", "v2", "v3"};
  const std::vector<VarKind> kinds(3, VarKind::kContinuous);
  const std::vector<std::size_t> hidden{4};
  BinModel model = binfer::make_chain_model(2, names, kinds, hidden, rng);
  const std::vector<double> x{0.5, -0.5};
  const std::vector<double> va{10.0, 20.0, 30.0};
  const std::vector<double> vb{-1.0, -2.0, -3.0};
  const ScalarMoments ma = binfer::conditional_moments(model, 0, x, va);
  const ScalarMoments mb = binfer::conditional_moments(model, 0, x, vb);
  CHECK(ma.mean == mb.mean);
  CHECK(ma.var == mb.var);
}

TEST_CASE("model validation rejects bad parent order and shapes") {
  binfer::Rng rng(7);
  std::vector<VariableSpec> specs = {{"a", VarKind::kContinuous, {1}},
                                     {"b", VarKind::kContinuous, {}}};
  const std::vector<std::size_t> hidden;
  CHECK_THROWS_AS(binfer::make_model(1, specs, hidden, rng), binfer::Error);
}

TEST_CASE("checkpoint: save/load round-trips bit-identically") {
  binfer::Rng rng(8);
  const std::vector<std::string> names{"v1", "v2", "v3"};
  const std::vector<VarKind> kinds{VarKind::kContinuous, VarKind::kBinary,
                                   VarKind::kContinuous};
  const std::vector<std::size_t> hidden{6, 4};
  BinModel model = binfer::make_chain_model(3, names, kinds, hidden, rng);
  model.meta = "{\"tag\":\"fixture\"}";
  model.scaler.x_mean = {1.0, 2.0, 3.0};
  model.scaler.x_std = {0.5, 0.5, 2.0};
  model.scaler.v_mean = {0.1, 0.2, 0.3};
  model.scaler.v_std = {1.0, 1.0, 1.5};

  const auto path = temp_path("binfer_ckpt_roundtrip.bin");
  binfer::save_checkpoint(model, path);
  const BinModel loaded = binfer::load_checkpoint(path);

  CHECK(loaded.meta == model.meta);
  CHECK(loaded.feature_dim == model.feature_dim);
  CHECK(loaded.variables[1].kind == VarKind::kBinary);
  CHECK(binfer::flatten_params(loaded) == binfer::flatten_params(model));
  CHECK(loaded.scaler.v_std == model.scaler.v_std);

  binfer::Rng probe(99);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> x{probe.normal(), probe.normal(), probe.normal()};
    std::vector<double> v{probe.normal(), probe.normal(), probe.normal()};
    CHECK(binfer::joint_nll(loaded, x, v) == binfer::joint_nll(model, x, v));
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: wrong magic header is an error") {
  const auto path = temp_path("binfer_ckpt_badmagic.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPTxxxxxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS_AS(binfer::load_checkpoint(path), binfer::IoError);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: truncated file is an error") {
  binfer::Rng rng(9);
  const std::vector<std::string> names{"v1", "v2"};
  const std::vector<VarKind> kinds(2, VarKind::kContinuous);
  const std::vector<std::size_t> hidden{4};
  BinModel model = binfer::make_chain_model(1, names, kinds, hidden, rng);
  const auto path = temp_path("binfer_ckpt_trunc.bin");
  binfer::save_checkpoint(model, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS_AS(binfer::load_checkpoint(path), binfer::IoError);
  std::filesystem::remove(path);
}

TEST_CASE("permutation safety: same DAG, different declaration storage") {
  // Two chains with identical subnets must give identical joint NLL no
  // matter how the parent lists are ordered internally.
  binfer::Rng rng(10);
  const std::vector<std::size_t> hidden{4};
  std::vector<VariableSpec> fwd = {{"a", VarKind::kContinuous, {}},
                                   {"b", VarKind::kContinuous, {0}},
                                   {"c", VarKind::kContinuous, {0, 1}}};
  BinModel m1 = binfer::make_model(1, fwd, hidden, rng);
  // Same structure with c's parent list reversed; swap the corresponding
  // weight columns so the function is unchanged.
  BinModel m2 = m1;
  m2.variables[2].parents = {1, 0};
  auto& first_layer = m2.subnets[2].hidden[0];
  for (std::size_t r = 0; r < first_layer.out_dim; ++r) {
    std::swap(first_layer.w_mean[r * first_layer.in_dim + 1],
              first_layer.w_mean[r * first_layer.in_dim + 2]);
    std::swap(first_layer.w_var_raw[r * first_layer.in_dim + 1],
              first_layer.w_var_raw[r * first_layer.in_dim + 2]);
  }
  const std::vector<double> x{0.3};
  const std::vector<double> v{0.5, -0.7, 1.2};
  CHECK(binfer::joint_nll(m1, x, v) ==
        doctest::Approx(binfer::joint_nll(m2, x, v)).epsilon(1e-12));
}

TEST_CASE("gradient completeness: dL/dv_k collects term k and descendant terms") {
  binfer::Rng rng(11);
  const std::vector<std::string> names{"v1", "v2", "v3"};
  const std::vector<VarKind> kinds(3, VarKind::kContinuous);
  const std::vector<std::size_t> hidden{6};
  BinModel model = binfer::make_chain_model(2, names, kinds, hidden, rng);
  binfer::ModelGraph graph(model);

  const std::vector<double> x{0.4, -0.2};
  std::vector<double> v{0.6, -0.3, 0.9};
  graph.set_features(x);
  graph.set_values(v);
  graph.tape().forward();
  graph.tape().backward(graph.joint_root());

  for (std::size_t k = 0; k < 3; ++k) {
    const double grad = graph.value_grad(k);
    const double fd = oracles::central_diff(
        [&](double val) {
          std::vector<double> vv = v;
          vv[k] = val;
          return binfer::joint_nll(model, x, vv);
        },
        v[k]);
    CHECK(std::abs(grad - fd) / std::max(std::abs(fd), 1e-2) < 1e-4);
  }

  // The middle variable's gradient must include the downstream term: zeroing
  // v2's own residual still leaves a nonzero gradient through term 3.
  const ScalarMoments m2 = binfer::conditional_moments(model, 1, x, v);
  std::vector<double> v_centered = v;
  v_centered[1] = m2.mean;  // residual of term 2 vanishes at its mean
  graph.set_values(v_centered);
  graph.tape().forward();
  graph.tape().backward(graph.joint_root());
  // Gradient through the log-variance of term 2 is zero only when the head
  // noise is input-independent, so compare against the direct downstream FD.
  const double fd_downstream = oracles::central_diff(
      [&](double val) {
        std::vector<double> vv = v_centered;
        vv[1] = val;
        const ScalarMoments m3 = binfer::conditional_moments(model, 2, x, vv);
        return binfer::gaussian_nll(vv[2], m3);
      },
      v_centered[1]);
  CHECK(std::abs(fd_downstream) > 1e-8);  // term 3 really depends on v2
}

TEST_CASE("factorization consistency: exp(-NLL) factorizes over conditionals") {
  binfer::Rng rng(12);
  const std::vector<std::string> names{"v1", "v2", "v3"};
  const std::vector<VarKind> kinds(3, VarKind::kContinuous);
  const std::vector<std::size_t> hidden{4};
  BinModel model = binfer::make_chain_model(1, names, kinds, hidden, rng);
  const std::vector<double> x{0.9};
  const std::vector<double> v{0.1, -0.4, 0.7};
  double sum = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    sum += binfer::gaussian_nll(v[n], binfer::conditional_moments(model, n, x, v));
  }
  CHECK(std::exp(-binfer::joint_nll(model, x, v)) ==
        doctest::Approx(std::exp(-sum)).epsilon(1e-12));
}
