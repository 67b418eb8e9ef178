#include <doctest.h>

#include <cmath>

#include "binfer/inference.hpp"
#include "binfer/model.hpp"
#include "binfer/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using binfer::Assignment;
using binfer::BinModel;
using binfer::ChainParams;
using binfer::InferenceEngine;
using binfer::InferenceOptions;
using binfer::InferenceResult;

namespace {

// v1 = a1 x + c1 + s1^{ 1/2} eps, v2 = b x + a v1 + c2 + ...
ChainParams two_chain() {
  ChainParams p;
  p.feature_dim = 1;
  p.coeff = {{0.8}, {-0.4, 1.3}};
  p.intercept = {0.2, -0.1};
  p.sigma = {0.6, 0.5};
  return p;
}

ChainParams three_chain() {
  ChainParams p;
  p.feature_dim = 1;
  p.coeff = {{0.9}, {0.3, 0.7}, {-0.5, 0.4, 0.6}};
  p.intercept = {0.0, 0.25, -0.3};
  p.sigma = {0.5, 0.45, 0.55};
  return p;
}

}  // namespace

TEST_CASE("init_targets: no targets returns the assignment unchanged") {
  BinModel model = fixtures::affine_chain_model(two_chain());
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(2);
  observed.set(0, 0.4);
  observed.set(1, -0.9);
  const std::vector<double> x{0.3};
  const Assignment out = engine.init_targets(x, observed);
  CHECK(out.values == observed.values);
}

TEST_CASE("init_targets: single feedforward step for the last variable") {
  BinModel model = fixtures::affine_chain_model(two_chain());
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(2);
  observed.set(0, 0.7);
  const std::vector<double> x{-0.2};
  const Assignment out = engine.init_targets(x, observed);
  const auto m = binfer::conditional_moments(model, 1, x, out.values);
  CHECK(out.values[1] == doctest::Approx(m.mean).epsilon(1e-12));
  CHECK(out.values[0] == 0.7);
}

TEST_CASE("init_targets: sweep uses observed values where present") {
  BinModel model = fixtures::affine_chain_model(three_chain());
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(3);
  observed.set(1, 0.5);
  const std::vector<double> x{0.1};
  const Assignment out = engine.init_targets(x, observed);
  // Hand trace: v1 from its prior mean; v3 from (x, v1_init, v2_observed).
  const ChainParams p = three_chain();
  const double v1 = p.intercept[0] + p.coeff[0][0] * x[0];
  const double v3 = p.intercept[2] + p.coeff[2][0] * x[0] + p.coeff[2][1] * v1 +
                    p.coeff[2][2] * 0.5;
  CHECK(out.values[0] == doctest::Approx(v1).epsilon(1e-9));
  CHECK(out.values[1] == 0.5);
  CHECK(out.values[2] == doctest::Approx(v3).epsilon(1e-9));
}

TEST_CASE("general_infer: final loss never exceeds the initialization loss") {
  const auto& toy = fixtures::toy_fixture();
  InferenceEngine engine(toy.bin);
  const std::vector<double> x;
  Assignment observed = Assignment::empty(2);
  observed.set(1, toy.data.v_row(0)[1]);

  const Assignment init = engine.init_targets(x, observed);
  std::vector<double> init_full = init.values;
  const double init_loss = engine.loss_at(x, init_full);

  InferenceOptions opts;
  const InferenceResult res = engine.general_infer(x, observed, opts);
  CHECK(res.final_loss <= init_loss + 1e-12);
  CHECK(res.iterations_used >= 1);
}

TEST_CASE("general_infer: matches the analytic conditional mode on a 2-chain") {
  const ChainParams p = two_chain();
  BinModel model = fixtures::affine_chain_model(p);
  InferenceEngine engine(model);
  const std::vector<double> x{0.45};
  const double v2 = 1.9;
  Assignment observed = Assignment::empty(2);
  observed.set(1, v2);

  // Quadratic objective in v1; stationary point in closed form.
  const double mu1 = p.intercept[0] + p.coeff[0][0] * x[0];
  const double s1 = p.sigma[0] * p.sigma[0];
  const double s2 = p.sigma[1] * p.sigma[1];
  const double a = p.coeff[1][1];
  const double k = p.intercept[1] + p.coeff[1][0] * x[0];
  const double analytic =
      (mu1 / s1 + a * (v2 - k) / s2) / (1.0 / s1 + a * a / s2);

  InferenceOptions opts;
  opts.max_iters = 2000;
  opts.rel_tol = 1e-12;
  const InferenceResult res = engine.general_infer(x, observed, opts);
  CHECK(std::abs(res.estimates[0] - analytic) < 1e-3);

  // Reported loss equals the joint NLL at (estimates, observed).
  std::vector<double> full{res.estimates[0], v2};
  CHECK(res.final_loss == doctest::Approx(engine.loss_at(x, full)).epsilon(1e-12));
}

TEST_CASE("general_infer over all variables matches forward prediction closely") {
  BinModel model = fixtures::affine_chain_model(three_chain());
  InferenceEngine engine(model);
  const std::vector<double> x{-0.35};
  Assignment nothing = Assignment::empty(3);

  const InferenceResult fwd = engine.forward_predict(x, nothing);
  InferenceOptions opts;
  const InferenceResult gen = engine.general_infer(x, nothing, opts);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(fwd.estimates[i] - gen.estimates[i]) < 0.05);
  }
}

TEST_CASE("general_infer: requires a non-empty target set") {
  BinModel model = fixtures::affine_chain_model(two_chain());
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(2);
  observed.set(0, 0.0);
  observed.set(1, 0.0);
  InferenceOptions opts;
  const std::vector<double> x0{0.0};
  CHECK_THROWS_AS(engine.general_infer(x0, observed, opts), binfer::Error);
}

TEST_CASE("forward_predict: fully observed input is returned unchanged") {
  BinModel model = fixtures::affine_chain_model(two_chain());
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(2);
  observed.set(0, 1.0);
  observed.set(1, 2.0);
  const std::vector<double> x0{0.5};
  const InferenceResult res = engine.forward_predict(x0, observed);
  CHECK(res.targets.empty());
  CHECK(res.iterations_used == 0);
}

TEST_CASE("forward_predict: chain sweep unrolls the conditional means") {
  const ChainParams p = three_chain();
  BinModel model = fixtures::affine_chain_model(p);
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(3);
  observed.set(0, 0.8);
  const std::vector<double> x{0.25};
  const InferenceResult res = engine.forward_predict(x, observed);

  const double v2 = p.intercept[1] + p.coeff[1][0] * x[0] + p.coeff[1][1] * 0.8;
  const double v3 = p.intercept[2] + p.coeff[2][0] * x[0] + p.coeff[2][1] * 0.8 +
                    p.coeff[2][2] * v2;
  CHECK(res.estimates[0] == doctest::Approx(v2).epsilon(1e-9));
  CHECK(res.estimates[1] == doctest::Approx(v3).epsilon(1e-9));
  CHECK(res.iterations_used == 0);
}

TEST_CASE("forward_predict: rejects observed sets that are not ancestrally closed") {
  BinModel model = fixtures::affine_chain_model(three_chain());
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(3);
  observed.set(1, 0.0);  // v2 observed, its parent v1 is not
  const std::vector<double> x0{0.0};
  CHECK_THROWS_AS(engine.forward_predict(x0, observed), binfer::Error);
}

TEST_CASE("forward greedy equals the joint MAP on a linear-Gaussian chain") {
  const ChainParams p = three_chain();
  BinModel model = fixtures::affine_chain_model(p);
  InferenceEngine engine(model);
  const std::vector<double> x{0.6};
  Assignment observed = Assignment::empty(3);
  observed.set(0, -0.4);

  const InferenceResult greedy = engine.forward_predict(x, observed);
  // Joint MAP oracle: long refinement from the greedy point.
  InferenceOptions opts;
  opts.max_iters = 5000;
  opts.rel_tol = 0.0;
  opts.lr = 0.01;
  const InferenceResult joint = engine.general_infer(x, observed, opts);
  for (std::size_t i = 0; i < greedy.estimates.size(); ++i) {
    CHECK(std::abs(greedy.estimates[i] - joint.estimates[i]) < 1e-3);
  }
}

TEST_CASE("hybrid_infer: worked 3-chain example splits at the observed variable") {
  const ChainParams p = three_chain();
  BinModel model = fixtures::affine_chain_model(p);
  InferenceEngine engine(model);
  const std::vector<double> x{0.15};
  const double v2 = 1.1;
  Assignment observed = Assignment::empty(3);
  observed.set(1, v2);

  InferenceOptions opts;
  opts.max_iters = 3000;
  opts.rel_tol = 1e-12;
  const InferenceResult res = engine.hybrid_infer(x, observed, opts);
  REQUIRE(res.targets == std::vector<std::size_t>{0, 2});

  // Backward phase: argmin over v1 of terms 1..2 (quadratic, closed form).
  const double mu1 = p.intercept[0] + p.coeff[0][0] * x[0];
  const double s1 = p.sigma[0] * p.sigma[0];
  const double s2 = p.sigma[1] * p.sigma[1];
  const double a = p.coeff[1][1];
  const double k = p.intercept[1] + p.coeff[1][0] * x[0];
  const double v1_star = (mu1 / s1 + a * (v2 - k) / s2) / (1.0 / s1 + a * a / s2);
  CHECK(std::abs(res.estimates[0] - v1_star) < 1e-3);

  // Forward phase: one conditional-mean step for v3 from the refined v1.
  const double v3 = p.intercept[2] + p.coeff[2][0] * x[0] +
                    p.coeff[2][1] * res.estimates[0] + p.coeff[2][2] * v2;
  CHECK(res.estimates[1] == doctest::Approx(v3).epsilon(1e-9));
}

TEST_CASE("hybrid_infer: observed prefix degenerates to forward prediction") {
  BinModel model = fixtures::affine_chain_model(three_chain());
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(3);
  observed.set(0, 0.3);
  const std::vector<double> x{0.2};
  InferenceOptions opts;
  const InferenceResult hybrid = engine.hybrid_infer(x, observed, opts);
  const InferenceResult fwd = engine.forward_predict(x, observed);
  CHECK(hybrid.estimates == fwd.estimates);
  CHECK(hybrid.iterations_used == 0);
}

TEST_CASE("hybrid_infer: requires the last variable to be unobserved") {
  BinModel model = fixtures::affine_chain_model(three_chain());
  InferenceEngine engine(model);
  Assignment observed = Assignment::empty(3);
  observed.set(2, 0.0);
  InferenceOptions opts;
  const std::vector<double> x0{0.0};
  CHECK_THROWS_AS(engine.hybrid_infer(x0, observed, opts), binfer::Error);
}

TEST_CASE("hybrid_infer agrees with general inference on a Gaussian chain") {
  BinModel model = fixtures::affine_chain_model(three_chain());
  InferenceEngine engine(model);
  const std::vector<double> x{-0.7};
  Assignment observed = Assignment::empty(3);
  observed.set(1, 0.9);

  InferenceOptions opts;
  opts.max_iters = 5000;
  opts.rel_tol = 1e-13;
  opts.lr = 0.02;
  const InferenceResult hybrid = engine.hybrid_infer(x, observed, opts);
  const InferenceResult general = engine.general_infer(x, observed, opts);
  for (std::size_t i = 0; i < hybrid.estimates.size(); ++i) {
    CHECK(std::abs(hybrid.estimates[i] - general.estimates[i]) < 1e-3);
  }
}

TEST_CASE("observed values are never modified by any mode") {
  const auto& toy = fixtures::toy_fixture();
  InferenceEngine engine(toy.bin);
  const std::vector<double> x;
  const double held = toy.data.v_row(2)[1];
  Assignment observed = Assignment::empty(2);
  observed.set(1, held);

  InferenceOptions opts;
  engine.general_infer(x, observed, opts);
  CHECK(observed.values[1] == held);
  const Assignment filled = engine.init_targets(x, observed);
  CHECK(filled.values[1] == held);
}

TEST_CASE("mode selection: forward for closed sets, hybrid when v_N is free") {
  BinModel model = fixtures::affine_chain_model(three_chain());
  Assignment prefix = Assignment::empty(3);
  prefix.set(0, 0.0);
  CHECK(InferenceEngine::select_mode(model, prefix) == binfer::InferenceMode::kForward);

  Assignment middle = Assignment::empty(3);
  middle.set(1, 0.0);
  CHECK(InferenceEngine::select_mode(model, middle) == binfer::InferenceMode::kHybrid);

  Assignment last = Assignment::empty(3);
  last.set(2, 0.0);
  CHECK(InferenceEngine::select_mode(model, last) == binfer::InferenceMode::kGeneral);
}

TEST_CASE("options validation") {
  InferenceOptions opts;
  opts.max_iters = 0;
  CHECK_THROWS_AS(opts.validate(), binfer::Error);
  opts.max_iters = 10;
  opts.lr = 0.0;
  CHECK_THROWS_AS(opts.validate(), binfer::Error);
}
