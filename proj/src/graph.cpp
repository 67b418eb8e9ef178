#include "binfer/graph.hpp"

#include <array>

namespace binfer {

ModelGraph::ModelGraph(const BinModel& model) : model_(model) {
  model.validate();
  zero_ = tape_.constant(0.0);
  half_ = tape_.constant(0.5);
  var_floor_ = tape_.constant(kVarianceFloor);

  x_leaves_.reserve(model.feature_dim);
  for (std::size_t d = 0; d < model.feature_dim; ++d) {
    x_leaves_.push_back(tape_.leaf(0.0));
  }
  v_leaves_.reserve(model.num_vars());
  for (std::size_t n = 0; n < model.num_vars(); ++n) {
    v_leaves_.push_back(tape_.leaf(0.0));
  }

  subnets_.reserve(model.num_vars());
  for (const auto& net : model.subnets) {
    SubnetNodes nodes;
    nodes.input_dim = net.input_dim;
    for (const auto& layer : net.hidden) nodes.hidden.push_back(bind_layer(layer));
    nodes.head = bind_layer(net.head);
    subnets_.push_back(std::move(nodes));
  }

  moments_.resize(model.num_vars());
  terms_.resize(model.num_vars());
  for (std::size_t n = 0; n < model.num_vars(); ++n) {
    NodeMoments in;
    in.mean.assign(x_leaves_.begin(), x_leaves_.end());
    for (const std::size_t p : model.variables[n].parents) {
      in.mean.push_back(v_leaves_[p]);
    }
    in.var.assign(in.mean.size(), zero_);
    moments_[n] = emit_subnet_at(n, in);
    terms_[n] = emit_nll_of(v_leaves_[n], moments_[n]);
  }

  prefix_roots_.resize(model.num_vars());
  NodeId acc = terms_[0];
  prefix_roots_[0] = acc;
  for (std::size_t n = 1; n < model.num_vars(); ++n) {
    acc = tape_.add(acc, terms_[n]);
    prefix_roots_[n] = acc;
  }
}

NodeId ModelGraph::prefix_root(std::size_t count) const {
  if (count == 0 || count > prefix_roots_.size()) {
    throw Error("prefix_root: count out of range");
  }
  return prefix_roots_[count - 1];
}

void ModelGraph::set_features(std::span<const double> x) {
  if (x.size() != x_leaves_.size()) throw Error("set_features: dimension mismatch");
  for (std::size_t d = 0; d < x.size(); ++d) tape_.set_value(x_leaves_[d], x[d]);
}

void ModelGraph::set_values(std::span<const double> v) {
  if (v.size() != v_leaves_.size()) throw Error("set_values: dimension mismatch");
  for (std::size_t n = 0; n < v.size(); ++n) tape_.set_value(v_leaves_[n], v[n]);
}

void ModelGraph::set_params(std::span<const double> flat) {
  if (flat.size() != param_leaves_.size()) throw Error("set_params: size mismatch");
  for (std::size_t i = 0; i < flat.size(); ++i) {
    tape_.set_value(param_leaves_[i], flat[i]);
  }
}

void ModelGraph::param_grads(std::span<double> out) const {
  if (out.size() != param_leaves_.size()) throw Error("param_grads: size mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = tape_.adjoint(param_leaves_[i]);
  }
}

LayerNodes ModelGraph::bind_layer(const NpnLinearLayer& layer) {
  LayerNodes nodes;
  nodes.in_dim = layer.in_dim;
  nodes.out_dim = layer.out_dim;
  auto bind_array = [&](const std::vector<double>& values, std::vector<NodeId>& ids) {
    ids.reserve(values.size());
    for (const double v : values) {
      const NodeId id = tape_.leaf(v);
      ids.push_back(id);
      param_leaves_.push_back(id);
    }
  };
  bind_array(layer.w_mean, nodes.w_mean);
  bind_array(layer.w_var_raw, nodes.w_var_raw);
  bind_array(layer.b_mean, nodes.b_mean);
  bind_array(layer.b_var_raw, nodes.b_var_raw);
  nodes.w_var_eff.reserve(nodes.w_var_raw.size());
  for (const NodeId id : nodes.w_var_raw) nodes.w_var_eff.push_back(tape_.softplus(id));
  nodes.w_mean_sq.reserve(nodes.w_mean.size());
  for (const NodeId id : nodes.w_mean) nodes.w_mean_sq.push_back(tape_.square(id));
  nodes.b_var_eff.reserve(nodes.b_var_raw.size());
  for (const NodeId id : nodes.b_var_raw) nodes.b_var_eff.push_back(tape_.softplus(id));
  return nodes;
}

NodeMoments ModelGraph::emit_linear(const LayerNodes& layer, const NodeMoments& in) {
  if (in.mean.size() != layer.in_dim) throw Error("emit_linear: dimension mismatch");
  std::vector<NodeId> in_mean_sq(layer.in_dim);
  for (std::size_t i = 0; i < layer.in_dim; ++i) {
    in_mean_sq[i] = tape_.square(in.mean[i]);
  }
  // Indices whose input variance is not the literal zero constant.
  std::vector<std::size_t> stochastic;
  for (std::size_t i = 0; i < layer.in_dim; ++i) {
    if (in.var[i] != zero_) stochastic.push_back(i);
  }

  NodeMoments out;
  out.mean.resize(layer.out_dim);
  out.var.resize(layer.out_dim);
  std::vector<NodeId> row_a, row_b;
  for (std::size_t j = 0; j < layer.out_dim; ++j) {
    const std::size_t base = j * layer.in_dim;
    row_a.assign(layer.w_mean.begin() + base, layer.w_mean.begin() + base + layer.in_dim);
    const NodeId mean_dot = tape_.dot(row_a, in.mean);
    out.mean[j] = tape_.add(mean_dot, layer.b_mean[j]);

    std::vector<NodeId> parts;
    row_a.assign(layer.w_var_eff.begin() + base,
                 layer.w_var_eff.begin() + base + layer.in_dim);
    parts.push_back(tape_.dot(row_a, in_mean_sq));
    if (!stochastic.empty()) {
      row_a.clear();
      row_b.clear();
      for (const std::size_t i : stochastic) {
        row_a.push_back(layer.w_var_eff[base + i]);
        row_b.push_back(in.var[i]);
      }
      parts.push_back(tape_.dot(row_a, row_b));
      row_a.clear();
      for (const std::size_t i : stochastic) {
        row_a.push_back(layer.w_mean_sq[base + i]);
      }
      parts.push_back(tape_.dot(row_a, row_b));
    }
    parts.push_back(layer.b_var_eff[j]);
    out.var[j] = tape_.sum(parts);
  }
  return out;
}

NodeMoments ModelGraph::emit_relu(const NodeMoments& in) {
  NodeMoments out;
  out.mean.resize(in.mean.size());
  out.var.resize(in.var.size());
  for (std::size_t i = 0; i < in.mean.size(); ++i) {
    if (in.var[i] == zero_) {
      out.mean[i] = tape_.max_zero(in.mean[i]);
      out.var[i] = zero_;
      continue;
    }
    const NodeId sigma = tape_.sqrt(in.var[i]);
    const NodeId alpha = tape_.div(in.mean[i], sigma);
    const NodeId cdf = tape_.norm_cdf(alpha);
    const NodeId pdf = tape_.norm_pdf(alpha);
    const NodeId m1 =
        tape_.add(tape_.mul(in.mean[i], cdf), tape_.mul(sigma, pdf));
    const NodeId second_raw = tape_.add(tape_.square(in.mean[i]), in.var[i]);
    const NodeId m2 = tape_.add(tape_.mul(second_raw, cdf),
                                tape_.mul(tape_.mul(in.mean[i], sigma), pdf));
    out.mean[i] = m1;
    out.var[i] = tape_.max_zero(tape_.sub(m2, tape_.square(m1)));
  }
  return out;
}

SubnetOutput ModelGraph::emit_subnet_at(std::size_t n, const NodeMoments& in) {
  const SubnetNodes& net = subnets_[n];
  if (in.mean.size() != net.input_dim) {
    throw Error("emit_subnet_at: input dimension mismatch");
  }
  NodeMoments h = in;
  for (const auto& layer : net.hidden) {
    h = emit_relu(emit_linear(layer, h));
  }
  const NodeMoments out = emit_linear(net.head, h);
  SubnetOutput result;
  result.mean = out.mean[0];
  const std::array<NodeId, 3> parts = {out.var[0], tape_.softplus(out.mean[1]),
                                       var_floor_};
  result.var = tape_.sum(std::span<const NodeId>(parts.data(), parts.size()));
  return result;
}

NodeId ModelGraph::emit_nll_of(NodeId target, const SubnetOutput& out) {
  const NodeId resid = tape_.sub(out.mean, target);
  const NodeId quad =
      tape_.mul(half_, tape_.div(tape_.square(resid), out.var));
  const NodeId logterm = tape_.mul(half_, tape_.log(out.var));
  return tape_.add(quad, logterm);
}

}  // namespace binfer
