#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "maes/param_store.hpp"
#include "maes/tensor.hpp"

namespace maes {

class Tape;

/// One executed operation: its output value, references to its inputs and a
/// closure that pushes the output gradient back into them. Parameter leaves
/// carry the store slot their gradient is delivered to.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during the backward pass
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;
  const char* op = "leaf";
  bool needs_grad = false;
  ParameterStore* store = nullptr;
  int param_index = -1;
};

using NodePtr = std::shared_ptr<Node>;

/// Handle to a tape node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  bool valid() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  const NodePtr& node() const { return n_; }

 private:
  NodePtr n_;
};

/// Define-by-run tape. Rebuilt for every forward pass; sequence lengths vary
/// per sample so there is no static graph. With recording off, ops still
/// compute values but nodes keep no inputs and no backward closure, so
/// intermediate state is released as soon as the last handle drops — long
/// evaluation rollouts run in O(live state) memory.
///
/// A tape and its tensors are confined to one thread. Parallelism comes from
/// independent replicas, each with a private tape.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t node_count() const { return order_.size(); }

  Var constant(Tensor value);
  /// Trainable leaf. The current store value is copied onto the tape; after
  /// backward() the accumulated gradient is delivered to the store slot.
  Var param(ParameterStore& store, std::string_view name);

  /// Reverse pass from a scalar loss. Replays recorded operations in exact
  /// reverse execution order, accumulating additively (a tensor consumed k
  /// times receives the sum of k contributions). Overwrites `store` grads:
  /// parameters unreachable from the loss end with zero gradient.
  void backward(const Var& loss, ParameterStore& store);

  /// Used by op implementations; not part of the public surface.
  Var emit(const char* op, Tensor value, std::vector<NodePtr> inputs,
           std::function<void(Node&)> backprop);

 private:
  std::vector<NodePtr> order_;
  bool recording_;
};

// ---------------------------------------------------------------------------
// Operation set. Shape mismatches throw std::invalid_argument naming the op
// and the offending shapes. Forward results are deterministic given inputs.
// ---------------------------------------------------------------------------

Var add(Tape& tp, const Var& a, const Var& b);             // elementwise
Var mul(Tape& tp, const Var& a, const Var& b);             // elementwise
Var scale_shift(Tape& tp, const Var& x, double alpha, double beta);  // alpha*x + beta
Var sum(Tape& tp, const Var& x);                           // -> scalar
Var mean_of(Tape& tp, std::span<const Var> xs);            // scalars -> scalar

Var matvec(Tape& tp, const Var& w, const Var& x);          // [m x n]*[n] -> [m]
Var vecmat(Tape& tp, const Var& x, const Var& m);          // [n]*[n x m] -> [m]
Var outer(Tape& tp, const Var& u, const Var& v);           // [m],[n] -> [m x n]
Var concat(Tape& tp, std::span<const Var> parts);          // vectors -> vector
Var slice(Tape& tp, const Var& x, std::size_t begin, std::size_t len);

Var sigmoid(Tape& tp, const Var& x);
Var tanh_op(Tape& tp, const Var& x);
Var softplus(Tape& tp, const Var& x);
Var relu(Tape& tp, const Var& x);
Var softmax(Tape& tp, const Var& x);

/// Circular convolution of an attention vector with a kernel distribution:
/// out[i] = sum_k s[k] * w[(i - offsets[k]) mod N].
Var circular_conv(Tape& tp, const Var& w, const Var& s, std::span<const int> offsets);

/// Elementwise (x + eps)^gamma with a scalar exponent.
Var pow_eps(Tape& tp, const Var& x, const Var& gamma, double eps);

/// x / sum(x). Caller guarantees sum(x) > 0.
Var normalize_sum(Tape& tp, const Var& x);

/// Erase/add memory update: out[i][j] = m[i][j]*(1 - w[i]*e[j]) + w[i]*a[j].
Var memory_write(Tape& tp, const Var& m, const Var& w, const Var& e, const Var& a);

/// Numerically stable binary cross-entropy on logits, averaged over masked
/// positions. targets and mask are 0/1 data, not differentiated through.
/// An all-zero mask is rejected (the mean would be undefined).
Var bce_with_logits(Tape& tp, const Var& logits, const Tensor& targets, const Tensor& mask);

// Scalar helpers shared across modules.
double sigmoid_scalar(double x);
double softplus_scalar(double x);

}  // namespace maes
