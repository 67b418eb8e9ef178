#include "binfer/autodiff.hpp"

#include <cmath>

namespace binfer {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kInvSqrt2 = 0.7071067811865475244;

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

}  // namespace

NodeId Tape::push(Node node) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(node);
  values_.push_back(0.0);
  values_[id] = eval(id);
  return id;
}

NodeId Tape::constant(double value) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{Op::kConst});
  values_.push_back(value);
  return id;
}

NodeId Tape::leaf(double value) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{Op::kLeaf});
  values_.push_back(value);
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) { return push(Node{Op::kAdd, a, b}); }
NodeId Tape::sub(NodeId a, NodeId b) { return push(Node{Op::kSub, a, b}); }
NodeId Tape::mul(NodeId a, NodeId b) { return push(Node{Op::kMul, a, b}); }
NodeId Tape::div(NodeId a, NodeId b) { return push(Node{Op::kDiv, a, b}); }
NodeId Tape::neg(NodeId a) { return push(Node{Op::kNeg, a}); }
NodeId Tape::square(NodeId a) { return push(Node{Op::kSquare, a}); }
NodeId Tape::sqrt(NodeId a) { return push(Node{Op::kSqrt, a}); }
NodeId Tape::log(NodeId a) { return push(Node{Op::kLog, a}); }
NodeId Tape::exp(NodeId a) { return push(Node{Op::kExp, a}); }
NodeId Tape::softplus(NodeId a) { return push(Node{Op::kSoftplus, a}); }
NodeId Tape::norm_pdf(NodeId a) { return push(Node{Op::kNormPdf, a}); }
NodeId Tape::norm_cdf(NodeId a) { return push(Node{Op::kNormCdf, a}); }
NodeId Tape::max_zero(NodeId a) { return push(Node{Op::kMaxZero, a}); }

NodeId Tape::sum(std::span<const NodeId> terms) {
  Node node{Op::kSum};
  node.args_begin = static_cast<std::uint32_t>(args_.size());
  node.args_count = static_cast<std::uint32_t>(terms.size());
  args_.insert(args_.end(), terms.begin(), terms.end());
  return push(node);
}

NodeId Tape::dot(std::span<const NodeId> a, std::span<const NodeId> b) {
  if (a.size() != b.size()) {
    throw Error("dot: operand lists differ in length");
  }
  Node node{Op::kDot};
  node.args_begin = static_cast<std::uint32_t>(args_.size());
  node.args_count = static_cast<std::uint32_t>(a.size() + b.size());
  args_.insert(args_.end(), a.begin(), a.end());
  args_.insert(args_.end(), b.begin(), b.end());
  return push(node);
}

void Tape::set_value(NodeId id, double value) {
  const Op op = nodes_[id].op;
  if (op != Op::kLeaf && op != Op::kConst) {
    throw Error("set_value: node is not a leaf or constant");
  }
  values_[id] = value;
  dirty_ = true;
}

double Tape::eval(std::size_t i) const {
  const Node& n = nodes_[i];
  switch (n.op) {
    case Op::kConst:
    case Op::kLeaf:
      return values_[i];
    case Op::kAdd:
      return values_[n.a] + values_[n.b];
    case Op::kSub:
      return values_[n.a] - values_[n.b];
    case Op::kMul:
      return values_[n.a] * values_[n.b];
    case Op::kDiv:
      if (values_[n.b] == 0.0) {
        throw EvalError("division by zero", static_cast<NodeId>(i));
      }
      return values_[n.a] / values_[n.b];
    case Op::kNeg:
      return -values_[n.a];
    case Op::kSquare:
      return values_[n.a] * values_[n.a];
    case Op::kSqrt:
      if (values_[n.a] < 0.0) {
        throw EvalError("sqrt of negative value", static_cast<NodeId>(i));
      }
      return std::sqrt(values_[n.a]);
    case Op::kLog:
      if (values_[n.a] <= 0.0) {
        throw EvalError("log of non-positive value", static_cast<NodeId>(i));
      }
      return std::log(values_[n.a]);
    case Op::kExp:
      return std::exp(values_[n.a]);
    case Op::kSoftplus:
      return stable_softplus(values_[n.a]);
    case Op::kNormPdf:
      return std_normal_pdf(values_[n.a]);
    case Op::kNormCdf:
      return std_normal_cdf(values_[n.a]);
    case Op::kMaxZero:
      return values_[n.a] > 0.0 ? values_[n.a] : 0.0;
    case Op::kSum: {
      double acc = 0.0;
      for (std::uint32_t k = 0; k < n.args_count; ++k) {
        acc += values_[args_[n.args_begin + k]];
      }
      return acc;
    }
    case Op::kDot: {
      const std::uint32_t half = n.args_count / 2;
      double acc = 0.0;
      for (std::uint32_t k = 0; k < half; ++k) {
        acc += values_[args_[n.args_begin + k]] *
               values_[args_[n.args_begin + half + k]];
      }
      return acc;
    }
  }
  throw Error("unknown op");
}

void Tape::forward() { forward_range(0, nodes_.size()); }

void Tape::forward_range(std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) {
    const Op op = nodes_[i].op;
    if (op == Op::kConst || op == Op::kLeaf) continue;
    values_[i] = eval(i);
  }
  dirty_ = false;
}

void Tape::backward(NodeId root) { backward_range(root, 0); }

void Tape::backward_range(NodeId root, std::size_t begin) {
  if (dirty_) {
    throw Error("backward called on an unevaluated tape; run forward() first");
  }
  adjoints_.assign(nodes_.size(), 0.0);
  adjoints_[root] = 1.0;
  for (std::size_t idx = root + 1; idx-- > begin;) {
    const double g = adjoints_[idx];
    if (g == 0.0) continue;
    const Node& n = nodes_[idx];
    switch (n.op) {
      case Op::kConst:
      case Op::kLeaf:
        break;
      case Op::kAdd:
        adjoints_[n.a] += g;
        adjoints_[n.b] += g;
        break;
      case Op::kSub:
        adjoints_[n.a] += g;
        adjoints_[n.b] -= g;
        break;
      case Op::kMul:
        adjoints_[n.a] += g * values_[n.b];
        adjoints_[n.b] += g * values_[n.a];
        break;
      case Op::kDiv:
        adjoints_[n.a] += g / values_[n.b];
        adjoints_[n.b] -= g * values_[idx] / values_[n.b];
        break;
      case Op::kNeg:
        adjoints_[n.a] -= g;
        break;
      case Op::kSquare:
        adjoints_[n.a] += g * 2.0 * values_[n.a];
        break;
      case Op::kSqrt:
        adjoints_[n.a] += g * 0.5 / values_[idx];
        break;
      case Op::kLog:
        adjoints_[n.a] += g / values_[n.a];
        break;
      case Op::kExp:
        adjoints_[n.a] += g * values_[idx];
        break;
      case Op::kSoftplus:
        adjoints_[n.a] += g * sigmoid(values_[n.a]);
        break;
      case Op::kNormPdf:
        adjoints_[n.a] += g * (-values_[n.a]) * values_[idx];
        break;
      case Op::kNormCdf:
        adjoints_[n.a] += g * std_normal_pdf(values_[n.a]);
        break;
      case Op::kMaxZero:
        if (values_[n.a] > 0.0) adjoints_[n.a] += g;
        break;
      case Op::kSum:
        for (std::uint32_t k = 0; k < n.args_count; ++k) {
          adjoints_[args_[n.args_begin + k]] += g;
        }
        break;
      case Op::kDot: {
        const std::uint32_t half = n.args_count / 2;
        for (std::uint32_t k = 0; k < half; ++k) {
          const NodeId ai = args_[n.args_begin + k];
          const NodeId bi = args_[n.args_begin + half + k];
          adjoints_[ai] += g * values_[bi];
          adjoints_[bi] += g * values_[ai];
        }
        break;
      }
    }
  }
}

bool adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error("adam_step: dimension mismatch");
  }
  for (const double g : grads) {
    if (!std::isfinite(g)) return false;
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  return true;
}

}  // namespace binfer
