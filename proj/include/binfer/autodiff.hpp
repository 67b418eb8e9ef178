#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "binfer/common.hpp"

namespace binfer {

using NodeId = std::uint32_t;
inline constexpr NodeId kInvalidNode = static_cast<NodeId>(-1);

enum class Op : std::uint8_t {
  kConst,
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kSquare,
  kSqrt,
  kLog,
  kExp,
  kSoftplus,
  kNormPdf,   // standard normal density
  kNormCdf,   // standard normal cumulative, via erfc
  kMaxZero,   // max(x, 0)
  kSum,       // n-ary reduction
  kDot,       // n-ary inner product
};

// Reverse-mode tape over scalar nodes. Nodes are appended in evaluation
// order, so the recorded graph is acyclic by construction and every node's
// inputs precede it. Values are (re)computed by forward(); adjoints by
// backward(root). A tape is a single-threaded object.
class Tape {
 public:
  NodeId constant(double value);
  NodeId leaf(double value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId square(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId softplus(NodeId a);
  NodeId norm_pdf(NodeId a);
  NodeId norm_cdf(NodeId a);
  NodeId max_zero(NodeId a);
  NodeId sum(std::span<const NodeId> terms);
  NodeId dot(std::span<const NodeId> a, std::span<const NodeId> b);

  // Assign a leaf (or constant) value. Invalidates values until forward().
  void set_value(NodeId id, double value);

  // Re-evaluate every node in recording order. Identical inputs yield
  // bit-identical values. Domain violations throw EvalError with the
  // offending node id.
  void forward();

  // Re-evaluate only nodes in [begin, end). Marks the tape evaluated; the
  // caller is responsible for knowing that nothing outside the range is
  // stale relative to its later uses.
  void forward_range(std::size_t begin, std::size_t end);

  // Accumulate adjoints of `root` with respect to every node. Nodes that do
  // not influence the root end up with adjoint zero. Requires an evaluated
  // tape (forward() after the last set_value).
  void backward(NodeId root);

  // Backward sweep restricted to nodes in [begin, root]. Adjoints are valid
  // for nodes inside the range and for leaves; interior nodes below `begin`
  // referenced from the range receive contributions that are not propagated
  // further.
  void backward_range(NodeId root, std::size_t begin);

  double value(NodeId id) const { return values_[id]; }
  double adjoint(NodeId id) const { return adjoints_[id]; }
  bool is_leaf(NodeId id) const { return nodes_[id].op == Op::kLeaf; }

  std::size_t size() const { return nodes_.size(); }
  bool evaluated() const { return !dirty_; }

 private:
  struct Node {
    Op op;
    NodeId a = kInvalidNode;
    NodeId b = kInvalidNode;
    std::uint32_t args_begin = 0;
    std::uint32_t args_count = 0;
  };

  NodeId push(Node node);
  double eval(std::size_t i) const;

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<NodeId> args_;
  bool dirty_ = false;
};

// Adam with bias correction. `step` returns false and leaves parameters and
// moments untouched when any gradient component is non-finite.
struct AdamState {
  explicit AdamState(std::size_t dim, double beta1 = 0.9, double beta2 = 0.999,
                     double epsilon = 1e-8)
      : m(dim, 0.0), v(dim, 0.0), beta1(beta1), beta2(beta2), epsilon(epsilon) {}

  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1;
  double beta2;
  double epsilon;
};

bool adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, double lr);

}  // namespace binfer
