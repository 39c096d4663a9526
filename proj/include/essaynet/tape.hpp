#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "essaynet/tensor.hpp"

namespace essaynet {

using NodeId = std::size_t;

enum class Primitive {
  kLeaf,
  kMatmul,
  kAdd,
  kMultiply,
  kConcat,            // along the last axis
  kSigmoid,
  kTanh,
  kMeanOverTime,      // elementwise mean across k same-shaped inputs
  kSoftmaxCrossEntropy,
  kSquaredError,
  kScaleShift,        // y = scale * x + shift
};

const char* primitive_name(Primitive op);

struct PrimitiveAttrs {
  double scale = 1.0;
  double shift = 0.0;
  std::size_t target = 0;  // class index for softmax-cross-entropy
};

struct TapeNode {
  Primitive op = Primitive::kLeaf;
  std::vector<NodeId> inputs;
  Tensor value;
  Tensor grad;  // empty until backward reaches the node
  PrimitiveAttrs attrs;
};

// Define-by-run tape. Nodes are appended in execution order, which is a
// topological order by construction; backward walks it in reverse. Rebuilt
// (cleared) per essay. Single-threaded; distinct tapes over shared read-only
// parameters may run in parallel.
class Tape {
 public:
  NodeId leaf(Tensor value);
  NodeId apply(Primitive op, const std::vector<NodeId>& inputs,
               const PrimitiveAttrs& attrs = {});

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId concat(const std::vector<NodeId>& xs);
  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId mean_over_time(const std::vector<NodeId>& steps);
  NodeId softmax_cross_entropy(NodeId logits, std::size_t target);
  NodeId squared_error(NodeId prediction, NodeId target);
  NodeId scale_shift(NodeId x, double scale, double shift);

  // Gradient of `loss` (a scalar node) w.r.t. every node that feeds it.
  // Existing gradients are discarded first. Unreached nodes read as zero
  // through grad().
  void backward(NodeId loss);
  void reset_gradients();

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool has_gradient(NodeId id) const { return !nodes_[id].grad.empty(); }
  // Materializes a zero gradient for unreached nodes.
  const Tensor& grad(NodeId id);

  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(NodeId id) const { return nodes_[id]; }
  void clear() { nodes_.clear(); }

  // Fault injection for gradient-check validation: scales the named
  // primitive's backward contributions. Never set outside tests.
  void inject_backward_fault(Primitive op, double scale);
  void clear_backward_fault();

  // Reverse rule for one node: accumulates d(upstream·node)/d(input_i) into
  // input_grad(i). input_grad must return a tensor already shaped like the
  // corresponding input. Shared by backward() and grad_check attribution.
  void apply_reverse(const TapeNode& node, const Tensor& upstream,
                     const std::function<Tensor&(std::size_t)>& input_grad) const;

 private:
  std::vector<TapeNode> nodes_;
  std::optional<Primitive> fault_op_;
  double fault_scale_ = 1.0;
};

// Forward semantics of one primitive, used by Tape::apply and by the local
// checks in grad_check. Throws std::invalid_argument on shape mismatch with a
// diagnostic naming the primitive and the offending shapes.
Tensor eval_primitive(Primitive op, const std::vector<const Tensor*>& inputs,
                      const PrimitiveAttrs& attrs);

}  // namespace essaynet
