#pragma once

#include <functional>
#include <span>

#include "flpl/autodiff/gradient_vector.h"
#include "flpl/autodiff/var.h"

namespace flpl::ad {

enum class GradientObjective {
  kSse,        // sum_i (g_dummy_i - g_target_i)^2
  kNegCosine,  // sum over layout entries of 1 - cos(g_dummy, g_target)
};

// Training loss of a model as a function of its parameters and one
// (input, label) pair. The label is whatever representation the attacker
// optimizes (e.g. logits that the function passes through softmax).
using LossFn =
    std::function<Var(std::span<const Var> params, const Var& input, const Var& label)>;

struct GradientMatch {
  double loss = 0.0;
  Tensor grad_input;
  Tensor grad_label;  // zeros when the label is held fixed
};

// Gradient-matching objective and its gradient w.r.t. the dummy input (and the
// dummy label when `label_trainable`). The model gradient is taken with a
// traced backward pass so the objective can be differentiated through it.
// Parameters are held fixed. Throws ShapeError when `target.layout` differs
// from `layout`.
GradientMatch GradOfGradientObjective(const LossFn& loss, std::span<const Tensor> params,
                                      const ParamLayout& layout, const Tensor& dummy_input,
                                      const Tensor& dummy_label, bool label_trainable,
                                      const GradientVector& target,
                                      GradientObjective objective);

// The objective value alone, with no second-order pass.
double GradientObjectiveValue(const LossFn& loss, std::span<const Tensor> params,
                              const ParamLayout& layout, const Tensor& input,
                              const Tensor& label, const GradientVector& target,
                              GradientObjective objective);

}  // namespace flpl::ad
