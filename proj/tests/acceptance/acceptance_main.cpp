// Acceptance suite: one criterion per number, each printing a single
// PASS/FAIL line. Exit code 0 on pass, 1 on fail, 77 when an external
// dataset the criterion needs is unavailable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "binfer/baselines.hpp"
#include "binfer/data.hpp"
#include "binfer/inference.hpp"
#include "binfer/model.hpp"
#include "binfer/training.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace binfer;

namespace {

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1. Moment propagation vs Monte Carlo: 50 random single linear layers,
//    dims <= 8, propagated mean/variance within 3 standard errors of 1e6
//    samples.
Outcome criterion1() {
  Rng init(20240);
  oracles::FastRng mc(77);
  constexpr std::size_t kSamples = 1'000'000;
  std::size_t checked = 0, failed = 0;
  double worst = 0.0;

  for (int layer_idx = 0; layer_idx < 50; ++layer_idx) {
    NpnLinearLayer layer;
    layer.in_dim = 1 + init.index(8);
    layer.out_dim = 1 + init.index(8);
    layer.w_mean.resize(layer.in_dim * layer.out_dim);
    layer.w_var_raw.resize(layer.in_dim * layer.out_dim);
    for (auto& w : layer.w_mean) w = init.uniform(-1.2, 1.2);
    for (auto& w : layer.w_var_raw) w = softplus_inv(init.uniform(0.02, 0.5));
    layer.b_mean.resize(layer.out_dim);
    layer.b_var_raw.resize(layer.out_dim);
    for (auto& b : layer.b_mean) b = init.uniform(-0.5, 0.5);
    for (auto& b : layer.b_var_raw) b = softplus_inv(init.uniform(0.02, 0.3));

    Moments in;
    in.mean.resize(layer.in_dim);
    in.var.resize(layer.in_dim);
    for (auto& v : in.mean) v = init.uniform(-1.5, 1.5);
    for (auto& v : in.var) v = init.uniform(0.0, 0.8);

    const Moments out = npn_linear(in, layer);

    std::vector<oracles::MomentAccumulator> acc(layer.out_dim);
    std::vector<double> x(layer.in_dim);
    std::vector<double> w_sd(layer.in_dim * layer.out_dim);
    std::vector<double> b_sd(layer.out_dim);
    std::vector<double> x_sd(layer.in_dim);
    for (std::size_t i = 0; i < w_sd.size(); ++i) w_sd[i] = std::sqrt(softplus(layer.w_var_raw[i]));
    for (std::size_t j = 0; j < b_sd.size(); ++j) b_sd[j] = std::sqrt(softplus(layer.b_var_raw[j]));
    for (std::size_t i = 0; i < x_sd.size(); ++i) x_sd[i] = std::sqrt(in.var[i]);

    for (std::size_t s = 0; s < kSamples; ++s) {
      for (std::size_t i = 0; i < layer.in_dim; ++i) {
        x[i] = in.mean[i] + x_sd[i] * mc.normal();
      }
      for (std::size_t j = 0; j < layer.out_dim; ++j) {
        double y = layer.b_mean[j] + b_sd[j] * mc.normal();
        const std::size_t base = j * layer.in_dim;
        for (std::size_t i = 0; i < layer.in_dim; ++i) {
          y += (layer.w_mean[base + i] + w_sd[base + i] * mc.normal()) * x[i];
        }
        acc[j].add(y);
      }
    }
    for (std::size_t j = 0; j < layer.out_dim; ++j) {
      const double dm = std::abs(out.mean[j] - acc[j].mean()) / acc[j].se_mean();
      const double dv = std::abs(out.var[j] - acc[j].variance()) / acc[j].se_variance();
      worst = std::max({worst, dm, dv});
      checked += 2;
      if (dm >= 3.0) ++failed;
      if (dv >= 3.0) ++failed;
    }
  }
  Outcome o;
  o.pass = failed == 0;
  o.detail = std::to_string(checked) + " moment checks, worst deviation " +
             std::to_string(worst) + " standard errors";
  return o;
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness: 20 random models (N <= 4, two hidden layers),
//    d(joint NLL)/d(every v and parameter) vs central differences,
//    max relative error < 1e-4.
Outcome criterion2() {
  Rng rng(555);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n_vars = 2 + rng.index(3);
    const std::size_t feat = 1 + rng.index(2);
    std::vector<std::string> names(n_vars);
    std::vector<VarKind> kinds(n_vars, VarKind::kContinuous);
    for (std::size_t i = 0; i < n_vars; ++i) names[i] = "v" + std::to_string(i);
    const std::vector<std::size_t> hidden{5, 4};
    Rng init(1000 + trial);
    BinModel model = make_chain_model(feat, names, kinds, hidden, init);

    std::vector<double> x(feat), v(n_vars);
    for (auto& xx : x) xx = rng.uniform(-1.0, 1.0);
    for (auto& vv : v) vv = rng.uniform(-1.0, 1.0);

    ModelGraph graph(model);
    graph.set_features(x);
    graph.set_values(v);
    graph.tape().forward();
    graph.tape().backward(graph.joint_root());

    for (std::size_t k = 0; k < n_vars; ++k) {
      const double grad = graph.value_grad(k);
      const double fd = oracles::central_diff(
          [&](double val) {
            std::vector<double> vv = v;
            vv[k] = val;
            return joint_nll(model, x, vv);
          },
          v[k]);
      worst = std::max(worst,
                       std::abs(grad - fd) / std::max({std::abs(fd), std::abs(grad), 1e-2}));
    }

    std::vector<double> flat = flatten_params(model);
    std::vector<double> grads(flat.size());
    graph.param_grads(grads);
    for (std::size_t p = 0; p < flat.size(); ++p) {
      const double fd = oracles::central_diff(
          [&](double val) {
            std::vector<double> pf = flat;
            pf[p] = val;
            BinModel probe = model;
            unflatten_params(probe, pf);
            return joint_nll(probe, x, v);
          },
          flat[p]);
      worst = std::max(worst, std::abs(grads[p] - fd) /
                                  std::max({std::abs(fd), std::abs(grads[p]), 1e-2}));
    }
  }
  Outcome o;
  o.pass = worst < 1e-4;
  o.detail = "max relative error " + std::to_string(worst);
  return o;
}

// ---------------------------------------------------------------------------
// 3. Single-layer marginal exactness on N=3 linear-Gaussian chains: the
//    propagated moments of each variable outside the prefix equal the
//    analytic marginals to < 1e-8, for both prefixes.
Outcome criterion3() {
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    ChainParams p;
    p.feature_dim = 2;
    p.coeff.resize(3);
    p.intercept.resize(3);
    p.sigma.resize(3);
    for (std::size_t n = 0; n < 3; ++n) {
      p.coeff[n].resize(p.feature_dim + n);
      for (auto& a : p.coeff[n]) a = rng.uniform(-1.0, 1.0);
      p.intercept[n] = rng.uniform(-0.5, 0.5);
      p.sigma[n] = rng.uniform(0.3, 0.9);
    }
    BinModel model = fixtures::affine_chain_model(p);
    const std::vector<double> x{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    std::vector<double> v{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                          rng.uniform(-1.0, 1.0)};
    const auto joint = oracles::chain_joint(p, x);

    for (std::size_t j = 1; j <= 2; ++j) {
      std::vector<std::size_t> subset(j);
      std::iota(subset.begin(), subset.end(), 0);
      const MarginalEval eval = eval_marginal(model, x, v, subset);
      for (std::size_t i = 0; i < eval.observed.size(); ++i) {
        const std::size_t n = eval.observed[i];
        // Analytic: prefix integrated out jointly, later observed parents
        // clamped at their values.
        double mean = p.intercept[n];
        double var = p.sigma[n] * p.sigma[n];
        for (std::size_t d = 0; d < p.feature_dim; ++d) mean += p.coeff[n][d] * x[d];
        std::vector<double> g(j, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
          const double a = p.coeff[n][p.feature_dim + k];
          if (k < j) {
            mean += a * joint.mean[k];
            g[k] = a;
          } else {
            mean += a * v[k];
          }
        }
        for (std::size_t r = 0; r < j; ++r) {
          for (std::size_t c = 0; c < j; ++c) {
            var += g[r] * g[c] * joint.cov[r * 3 + c];
          }
        }
        worst = std::max(worst, std::abs(eval.moments[i].mean - mean));
        worst = std::max(worst, std::abs(eval.moments[i].var - var));
      }
    }
  }
  Outcome o;
  o.pass = worst < 1e-8;
  o.detail = "max moment deviation " + std::to_string(worst);
  return o;
}

// ---------------------------------------------------------------------------
// 8. Collapse: composite training with lambda_c = 0 is bit-identical to
//    plain training under the same seed.
Outcome criterion8() {
  Dataset data = gen_gaussian_chain(3, 120, 71, 2);
  data.assign_splits(0.8, 0.1, 7);
  data.standardize();

  TrainConfig cfg;
  cfg.lambda_c = 0.0;
  cfg.warmup_epochs = 5;
  cfg.train_epochs = 6;
  cfg.inner_iters = 4;
  cfg.rho = 0.02;
  cfg.gamma = 0.05;
  cfg.batch_size = 16;
  cfg.seed = 2025;

  auto build = [] {
    Rng rng(404);
    const std::vector<std::string> names{"v1", "v2", "v3"};
    const std::vector<VarKind> kinds(3, VarKind::kContinuous);
    const std::vector<std::size_t> hidden{8};
    return make_chain_model(2, names, kinds, hidden, rng);
  };
  BinModel composite = build();
  BinModel plain = build();
  const TrainReport rc = cbin_train(composite, data, cfg);
  const TrainReport rp =
      warmup_train(plain, data, cfg, cfg.warmup_epochs + cfg.train_epochs);

  const bool params_equal = flatten_params(composite) == flatten_params(plain);
  const bool loss_equal = rc.epoch_joint_nll == rp.epoch_joint_nll;
  Outcome o;
  o.pass = params_equal && loss_equal;
  o.detail = std::string("parameters ") + (params_equal ? "identical" : "differ") +
             ", loss trajectory " + (loss_equal ? "identical" : "differs");
  return o;
}

Outcome placeholder() {
  Outcome o;
  o.pass = false;
  o.detail = "not implemented yet";
  return o;
}

Outcome criterion4();
Outcome criterion5();
Outcome criterion6();
Outcome criterion7();
Outcome criterion9();

const char* kNames[] = {
    "",
    "moment propagation matches Monte Carlo within 3 standard errors",
    "gradients match central finite differences below 1e-4",
    "single-layer marginal moments equal analytic Gaussian marginals below 1e-8",
    "greedy forward and hybrid match joint MAP on fitted Gaussian chains",
    "composite training smooths the toy inference landscape",
    "dermatology ordering: composite <= plain <= prior-only, near retrain",
    "test-time iterations non-increasing in the inner budget; composite accuracy holds up",
    "lambda_c = 0 composite training is bit-identical to plain training",
    "feedforward initialization dominates random initialization on average",
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  if (argc > 1) {
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  } else {
    for (int i = 1; i <= 9; ++i) which.push_back(i);
  }

  bool all_pass = true;
  bool any_skip = false;
  for (const int k : which) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      switch (k) {
        case 1: o = criterion1(); break;
        case 2: o = criterion2(); break;
        case 3: o = criterion3(); break;
        case 4: o = criterion4(); break;
        case 5: o = criterion5(); break;
        case 6: o = criterion6(); break;
        case 7: o = criterion7(); break;
        case 8: o = criterion8(); break;
        case 9: o = criterion9(); break;
        default:
          std::cerr << "unknown criterion " << k << "\n";
          return 2;
      }
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
    std::cout << "[" << tag << "] criterion " << k << ": " << kNames[k] << " — "
              << o.detail << " (" << secs << " s)" << std::endl;
    if (o.skipped) {
      any_skip = true;
    } else if (!o.pass) {
      all_pass = false;
    }
  }
  if (!all_pass) return 1;
  if (any_skip) return 77;
  return 0;
}

namespace {

// ---------------------------------------------------------------------------
// 4. Greedy forward prediction and hybrid inference match full joint MAP on
//    fitted single-layer Gaussian chains, within 1e-3 on >= 95% of 200 test
//    points each.
Outcome criterion4() { return placeholder(); }

// 5. Toy landscape smoothing.
Outcome criterion5() { return placeholder(); }

// 6. Dermatology ordering.
Outcome criterion6() { return placeholder(); }

// 7. Iteration trend on the surrogate.
Outcome criterion7() { return placeholder(); }

// 9. Feedforward-init dominance.
Outcome criterion9() { return placeholder(); }

}  // namespace
