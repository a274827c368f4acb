#pragma once

// Define-by-run reverse-mode differentiation. Every op records its output on
// the Tape of its inputs; Tape::reverse_sweep walks the records backwards.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wavegnn/params.hpp"
#include "wavegnn/tensor.hpp"

namespace wavegnn {

using NodeId = std::size_t;

enum class OpKind {
  kConstant,
  kParameter,
  kAdd,
  kSub,
  kMul,
  kScale,
  kMatmul,
  kMatmulNT,
  kTanh,
  kRelu,
  kSin,
  kExp,
  kSigmoid,
  kSoftplus,
  kTime2VecActivation,
  kSum,
  kReshape,
  kConcat,
  kMaskedSoftmax,
  kLayerNorm,
  kMaxRows,
  kCrossEntropy,
  kBinaryCrossEntropy,
};

const char* op_name(OpKind op);

class Tape;

/// Handle to a recorded value. Cheap to copy; only valid while its Tape lives.
class Var {
 public:
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_;
  NodeId id_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  struct Node {
    OpKind op;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;  // empty until the sweep reaches this node
    bool requires_grad = false;
    std::ptrdiff_t param_index = -1;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a store entry; repeated requests return the same node.
  /// Frozen parameters are recorded without gradient tracking.
  Var parameter(const ParamStore& store, std::string_view name);

  /// Appends a node. Throws NumericalError if `value` is not finite.
  Var record(OpKind op, std::vector<NodeId> inputs, Tensor value,
             BackwardFn backward);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad_buffer(NodeId id);

  /// Populates gradients of every node reachable from `loss` (a scalar).
  void reverse_sweep(Var loss);

  /// Gradient of a node after the sweep; zeros if unreachable.
  Tensor gradient(Var v) const;

  /// Per-parameter gradients, index-aligned with `store`.
  GradientSet parameter_gradients(const ParamStore& store) const;

 private:
  // deque: references returned by value() survive later records.
  std::deque<Node> nodes_;
  std::unordered_map<std::size_t, NodeId> param_nodes_;
};

namespace ops {

// Elementwise binary ops broadcast with numpy rules over up to 4 dimensions.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

/// 2-D [p x q] * [q x r], or batched 3-D [B x p x q] * [B x q x r].
Var matmul(Var a, Var b);
/// a * b^T over the last two axes; 2-D or batched 3-D.
Var matmul_nt(Var a, Var b);

Var tanh(Var a);
Var relu(Var a);
Var sin(Var a);
Var exp(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
/// Identity on column 0 of the last axis, sine on the remaining columns.
Var time2vec_activation(Var a);

Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);
/// Concatenates along the last axis; leading dimensions must agree.
Var concat(std::span<const Var> parts);

/// Softmax over the last axis restricted to positions where `mask` is 1.
/// `mask` broadcasts against `scores`. Masked outputs are exactly 0 and a
/// row without any allowed position is all zeros.
Var masked_softmax(Var scores, const Tensor& mask);
Var softmax(Var scores);

/// Normalises over the last axis, then applies gain and bias (both [D]).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

/// Column-wise maximum of a 2-D tensor, shape [cols]. Ties go to the
/// lowest row index.
Var max_rows(Var a);

/// Softmax cross-entropy scaled by `weight`; logits flattened to [C].
Var cross_entropy(Var logits, std::size_t label, double weight = 1.0);
/// Mean elementwise binary cross-entropy on logistic probabilities.
Var binary_cross_entropy(Var logits, const Tensor& targets);

}  // namespace ops

}  // namespace wavegnn
