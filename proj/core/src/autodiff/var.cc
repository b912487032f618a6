#include "flpl/autodiff/var.h"

#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "flpl/autodiff/ops.h"

namespace flpl::ad {
namespace {

thread_local bool g_grad_enabled = true;

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
    g_grad_enabled = enabled;
  }
  ~GradModeGuard() { g_grad_enabled = previous_; }

 private:
  bool previous_;
};

// Post-order over nodes that require gradients.
std::vector<Var> TopologicalOrder(const Var& root) {
  std::vector<Var> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Var, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [var, next] = stack.back();
    if (next < var.num_inputs()) {
      const Var& in = var.input(next++);
      if (in.requires_grad() && visited.insert(in.node()).second) {
        stack.emplace_back(in, 0);
      }
    } else {
      order.push_back(var);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var MakeOpResult(Tensor value, std::vector<Var> inputs, BackwardFn backward,
                 const char* op) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled) {
    for (const Var& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

std::vector<Var> Grad(const Var& output, std::span<const Var> wrt,
                      bool create_graph) {
  if (output.numel() != 1) throw ShapeError("Grad: output must be scalar", output.shape());
  GradModeGuard mode(create_graph);

  std::unordered_map<Node*, Var> grads;
  if (output.requires_grad()) {
    grads[output.node()] = Var(Tensor::Ones(output.shape()));
    std::vector<Var> order = TopologicalOrder(output);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Var& v = *it;
      if (v.is_leaf()) continue;
      auto found = grads.find(v.node());
      if (found == grads.end()) continue;
      Var g = found->second;
      std::vector<Var> input_grads = v.node()->backward(v, g);
      for (size_t i = 0; i < v.num_inputs(); ++i) {
        const Var& in = v.input(i);
        if (!in.requires_grad() || i >= input_grads.size() || !input_grads[i].defined()) {
          continue;
        }
        auto [slot, inserted] = grads.try_emplace(in.node(), input_grads[i]);
        if (!inserted) slot->second = Add(slot->second, input_grads[i]);
      }
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto found = grads.find(w.node());
    if (found != grads.end()) {
      result.push_back(found->second);
    } else {
      result.emplace_back(Tensor::Zeros(w.shape()));
    }
  }
  return result;
}

}  // namespace flpl::ad
