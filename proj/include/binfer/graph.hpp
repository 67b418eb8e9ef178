#pragma once

#include <span>
#include <vector>

#include "binfer/autodiff.hpp"
#include "binfer/model.hpp"

namespace binfer {

// Tape nodes carrying a (mean, variance) pair per component. A variance
// entry equal to the builder's zero() constant marks a deterministic input
// and lets the emitter skip the vanishing variance terms.
struct NodeMoments {
  std::vector<NodeId> mean;
  std::vector<NodeId> var;
};

struct SubnetOutput {
  NodeId mean = kInvalidNode;
  NodeId var = kInvalidNode;
};

// Parameter leaves of one linear layer plus cached transforms shared by
// every emission that touches the layer.
struct LayerNodes {
  std::vector<NodeId> w_mean;
  std::vector<NodeId> w_var_raw;
  std::vector<NodeId> b_mean;
  std::vector<NodeId> b_var_raw;
  std::vector<NodeId> w_var_eff;  // softplus(w_var_raw)
  std::vector<NodeId> w_mean_sq;  // square(w_mean)
  std::vector<NodeId> b_var_eff;  // softplus(b_var_raw)
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

struct SubnetNodes {
  std::vector<LayerNodes> hidden;
  LayerNodes head;
  std::size_t input_dim = 0;
};

// Compiles a model onto a tape: one leaf per parameter, per feature and per
// variable, the per-variable conditional moment nodes, the per-variable NLL
// terms and their prefix sums. The graph is built once per model structure;
// leaf values change between evaluations, the graph does not.
class ModelGraph {
 public:
  explicit ModelGraph(const BinModel& model);

  ModelGraph(const ModelGraph&) = delete;
  ModelGraph& operator=(const ModelGraph&) = delete;

  Tape& tape() { return tape_; }
  const Tape& tape() const { return tape_; }
  const BinModel& model() const { return model_; }

  NodeId joint_root() const { return prefix_roots_.back(); }
  // Sum of the first `count` NLL terms; count == N gives the joint.
  NodeId prefix_root(std::size_t count) const;
  NodeId term(std::size_t n) const { return terms_[n]; }
  SubnetOutput moments(std::size_t n) const { return moments_[n]; }

  NodeId feature_leaf(std::size_t d) const { return x_leaves_[d]; }
  NodeId value_leaf(std::size_t n) const { return v_leaves_[n]; }

  void set_features(std::span<const double> x);
  void set_value(std::size_t n, double v) { tape_.set_value(v_leaves_[n], v); }
  void set_values(std::span<const double> v);
  void set_params(std::span<const double> flat);

  // Adjoints after backward(), in canonical flatten order.
  void param_grads(std::span<double> out) const;
  double value_grad(std::size_t n) const { return tape_.adjoint(v_leaves_[n]); }

  // Emission helpers for graphs that rewire subnetwork inputs (composite
  // objectives, marginal propagation). They append nodes to this tape using
  // the already-bound parameter leaves of subnetwork n.
  SubnetOutput emit_subnet_at(std::size_t n, const NodeMoments& in);
  NodeId emit_nll_of(NodeId target, const SubnetOutput& out);
  const SubnetNodes& subnet_nodes(std::size_t n) const { return subnets_[n]; }

  NodeId zero() const { return zero_; }
  NodeId half() const { return half_; }

 private:
  const BinModel& model_;
  Tape tape_;
  NodeId zero_ = kInvalidNode;
  NodeId half_ = kInvalidNode;
  NodeId var_floor_ = kInvalidNode;
  std::vector<NodeId> x_leaves_;
  std::vector<NodeId> v_leaves_;
  std::vector<NodeId> param_leaves_;  // canonical flatten order
  std::vector<SubnetNodes> subnets_;
  std::vector<SubnetOutput> moments_;
  std::vector<NodeId> terms_;
  std::vector<NodeId> prefix_roots_;

  LayerNodes bind_layer(const NpnLinearLayer& layer);
  NodeMoments emit_linear(const LayerNodes& layer, const NodeMoments& in);
  NodeMoments emit_relu(const NodeMoments& in);
};

}  // namespace binfer
