#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "flpl/autodiff/tensor.h"

namespace flpl::ad {

class Var;

// Computes the gradients of an op's inputs given the op's output and the
// incoming gradient. Implementations are written in terms of differentiable
// ops, so with graph recording enabled the backward pass is itself traced and
// can be differentiated again.
using BackwardFn = std::function<std::vector<Var>(const Var& out, const Var& grad)>;

// One record of the computation graph. Inputs always precede the node in
// creation order, so the graph is acyclic by construction.
struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  // Leaf variable.
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  int64_t numel() const { return node_->value.numel(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->inputs.empty(); }
  const char* op() const { return node_->op; }
  const Var& input(size_t i) const { return node_->inputs.at(i); }
  size_t num_inputs() const { return node_->inputs.size(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// True when ops record graph edges on the current thread.
bool GradEnabled();

// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Creates an op result. Edges and the backward function are recorded only when
// recording is enabled and at least one input requires a gradient; otherwise
// the result is a constant leaf.
Var MakeOpResult(Tensor value, std::vector<Var> inputs, BackwardFn backward,
                 const char* op);

// Reverse-mode gradient of a scalar `output` with respect to each entry of
// `wrt`. Inputs not reachable from the output receive zero tensors. With
// create_graph the returned gradients are themselves differentiable.
// Throws ShapeError when `output` is not a single-element tensor.
std::vector<Var> Grad(const Var& output, std::span<const Var> wrt,
                      bool create_graph = false);

}  // namespace flpl::ad
