#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "binfer/common.hpp"
#include "binfer/rng.hpp"

namespace binfer {

// Mean/variance pair per component, diagonal covariance. A deterministic
// input is represented with variance exactly 0.
struct Moments {
  std::vector<double> mean;
  std::vector<double> var;

  std::size_t size() const { return mean.size(); }

  static Moments deterministic(std::span<const double> values) {
    Moments m;
    m.mean.assign(values.begin(), values.end());
    m.var.assign(values.size(), 0.0);
    return m;
  }
};

struct ScalarMoments {
  double mean = 0.0;
  double var = 0.0;
};

enum class Activation { kIdentity, kRelu };

// Linear layer over Gaussian weights. Weight and bias variances are stored
// as unconstrained raw values and mapped through softplus, so the effective
// variances are positive for every raw value.
struct NpnLinearLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> w_mean;     // out_dim x in_dim, row-major
  std::vector<double> w_var_raw;  // same shape
  std::vector<double> b_mean;     // out_dim
  std::vector<double> b_var_raw;  // out_dim

  std::size_t param_count() const { return 2 * w_mean.size() + 2 * b_mean.size(); }
};

// A stack of linear layers with ReLU between hidden layers, ending in a
// two-unit head: unit 0 carries the predictive mean, unit 1 the raw noise
// level. The predictive variance is the propagated variance of unit 0 plus
// softplus(mean of unit 1) + 1e-6, which keeps it strictly positive.
struct NpnSubnetwork {
  std::size_t input_dim = 0;
  std::vector<NpnLinearLayer> hidden;
  NpnLinearLayer head;  // out_dim == 2

  bool affine() const { return hidden.empty(); }
  std::size_t param_count() const;
};

inline constexpr double kVarianceFloor = 1e-6;

double softplus(double x);
double softplus_inv(double y);  // inverse of softplus, y > 0

// Closed-form moment propagation through a linear layer:
//   out_mean = W_m x_m + b_m
//   out_var  = W_s x_s + W_s (x_m o x_m) + (W_m o W_m) x_s + b_s
// with W_s = softplus(w_var_raw), b_s = softplus(b_var_raw).
Moments npn_linear(const Moments& input, const NpnLinearLayer& layer);

// Exact first/second moments of max(0, z) for z ~ N(mean, var). var == 0
// degenerates to the deterministic ReLU with zero output variance.
ScalarMoments relu_moments(double mean, double var);

Moments npn_activation(const Moments& input, Activation kind);

// (mu - v)^2 / (2 s) + log(s) / 2. The additive normalization constant is
// omitted; it shifts the value but never the location of any optimum.
double gaussian_nll(double target, double mean, double var);
inline double gaussian_nll(double target, const ScalarMoments& m) {
  return gaussian_nll(target, m.mean, m.var);
}

// Full pass through the subnetwork; returns the predictive moments.
ScalarMoments subnet_forward(const NpnSubnetwork& net, const Moments& input);

// Fan-in-scaled uniform weight means, zero bias means, raw variances set so
// the effective weight variances start near 1e-3.
NpnSubnetwork make_subnet(std::size_t input_dim,
                          std::span<const std::size_t> hidden_widths, Rng& rng);

// Canonical flattening order used by checkpoints and graph bindings:
// for each layer (hidden..., head): w_mean, w_var_raw, b_mean, b_var_raw.
void append_params(const NpnSubnetwork& net, std::vector<double>& out);
std::size_t read_params(NpnSubnetwork& net, std::span<const double> flat);

}  // namespace binfer
