#include "binfer/npn.hpp"

#include <cmath>

namespace binfer {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kInvSqrt2 = 0.7071067811865475244;

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

void check_layer(const Moments& input, const NpnLinearLayer& layer) {
  if (input.mean.size() != layer.in_dim || input.var.size() != layer.in_dim) {
    throw Error("npn_linear: input dimension mismatch");
  }
}

}  // namespace

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inv(double y) {
  if (y <= 0.0) throw Error("softplus_inv: argument must be positive");
  // log(e^y - 1), stable for large y.
  return y > 30.0 ? y : std::log(std::expm1(y));
}

std::size_t NpnSubnetwork::param_count() const {
  std::size_t n = head.param_count();
  for (const auto& layer : hidden) n += layer.param_count();
  return n;
}

Moments npn_linear(const Moments& input, const NpnLinearLayer& layer) {
  check_layer(input, layer);
  Moments out;
  out.mean.resize(layer.out_dim);
  out.var.resize(layer.out_dim);
  for (std::size_t j = 0; j < layer.out_dim; ++j) {
    const double* wm = &layer.w_mean[j * layer.in_dim];
    const double* wr = &layer.w_var_raw[j * layer.in_dim];
    double mean = layer.b_mean[j];
    double var = softplus(layer.b_var_raw[j]);
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      const double ws = softplus(wr[i]);
      const double xm = input.mean[i];
      const double xs = input.var[i];
      mean += wm[i] * xm;
      var += ws * xs + ws * xm * xm + wm[i] * wm[i] * xs;
    }
    out.mean[j] = mean;
    out.var[j] = var;
  }
  return out;
}

ScalarMoments relu_moments(double mean, double var) {
  if (!(var >= 0.0)) throw Error("relu_moments: negative variance");
  if (var == 0.0) {
    return {mean > 0.0 ? mean : 0.0, 0.0};
  }
  const double sigma = std::sqrt(var);
  const double alpha = mean / sigma;
  const double pdf = std_normal_pdf(alpha);
  const double cdf = std_normal_cdf(alpha);
  const double m1 = mean * cdf + sigma * pdf;
  const double m2 = (mean * mean + var) * cdf + mean * sigma * pdf;
  double v = m2 - m1 * m1;
  if (v < 0.0) v = 0.0;  // cancellation guard in the far-left tail
  return {m1, v};
}

Moments npn_activation(const Moments& input, Activation kind) {
  if (kind == Activation::kIdentity) return input;
  Moments out;
  out.mean.resize(input.size());
  out.var.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const ScalarMoments m = relu_moments(input.mean[i], input.var[i]);
    out.mean[i] = m.mean;
    out.var[i] = m.var;
  }
  return out;
}

double gaussian_nll(double target, double mean, double var) {
  if (!(var > 0.0)) throw Error("gaussian_nll: variance must be positive");
  const double r = mean - target;
  return r * r / (2.0 * var) + 0.5 * std::log(var);
}

ScalarMoments subnet_forward(const NpnSubnetwork& net, const Moments& input) {
  if (input.size() != net.input_dim) {
    throw Error("subnet_forward: input dimension mismatch");
  }
  Moments h = input;
  for (const auto& layer : net.hidden) {
    h = npn_activation(npn_linear(h, layer), Activation::kRelu);
  }
  const Moments out = npn_linear(h, net.head);
  ScalarMoments result;
  result.mean = out.mean[0];
  result.var = out.var[0] + softplus(out.mean[1]) + kVarianceFloor;
  return result;
}

namespace {

NpnLinearLayer make_layer(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  NpnLinearLayer layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.w_mean.resize(in_dim * out_dim);
  const double bound = in_dim > 0 ? std::sqrt(1.0 / static_cast<double>(in_dim)) : 0.0;
  for (double& w : layer.w_mean) w = rng.uniform(-bound, bound);
  layer.w_var_raw.assign(in_dim * out_dim, softplus_inv(1e-3));
  layer.b_mean.assign(out_dim, 0.0);
  layer.b_var_raw.assign(out_dim, softplus_inv(1e-3));
  return layer;
}

}  // namespace

NpnSubnetwork make_subnet(std::size_t input_dim,
                          std::span<const std::size_t> hidden_widths, Rng& rng) {
  NpnSubnetwork net;
  net.input_dim = input_dim;
  std::size_t prev = input_dim;
  for (const std::size_t width : hidden_widths) {
    net.hidden.push_back(make_layer(prev, width, rng));
    prev = width;
  }
  net.head = make_layer(prev, 2, rng);
  return net;
}

namespace {

void append_layer(const NpnLinearLayer& layer, std::vector<double>& out) {
  out.insert(out.end(), layer.w_mean.begin(), layer.w_mean.end());
  out.insert(out.end(), layer.w_var_raw.begin(), layer.w_var_raw.end());
  out.insert(out.end(), layer.b_mean.begin(), layer.b_mean.end());
  out.insert(out.end(), layer.b_var_raw.begin(), layer.b_var_raw.end());
}

std::size_t read_layer(NpnLinearLayer& layer, std::span<const double> flat) {
  std::size_t pos = 0;
  for (auto* arr : {&layer.w_mean, &layer.w_var_raw, &layer.b_mean, &layer.b_var_raw}) {
    if (pos + arr->size() > flat.size()) throw Error("read_params: flat vector too short");
    std::copy(flat.begin() + pos, flat.begin() + pos + arr->size(), arr->begin());
    pos += arr->size();
  }
  return pos;
}

}  // namespace

void append_params(const NpnSubnetwork& net, std::vector<double>& out) {
  for (const auto& layer : net.hidden) append_layer(layer, out);
  append_layer(net.head, out);
}

std::size_t read_params(NpnSubnetwork& net, std::span<const double> flat) {
  std::size_t pos = 0;
  for (auto& layer : net.hidden) pos += read_layer(layer, flat.subspan(pos));
  pos += read_layer(net.head, flat.subspan(pos));
  return pos;
}

}  // namespace binfer
