#include "flpl/autodiff/gradient_objective.h"

#include "flpl/autodiff/ops.h"

namespace flpl::ad {
namespace {

Var MatchLoss(std::span<const Var> dummy_grads, const ParamLayout& layout,
              const GradientVector& target, GradientObjective objective) {
  const auto targets = Unflatten(target.values, layout);
  Var total;
  for (size_t i = 0; i < dummy_grads.size(); ++i) {
    Var t(targets[i]);
    Var term = objective == GradientObjective::kSse
                   ? Sum(Mul(Sub(dummy_grads[i], t), Sub(dummy_grads[i], t)))
                   : AddScalar(Neg(CosineSimilarity(dummy_grads[i], t)), 1.0);
    total = total.defined() ? Add(total, term) : term;
  }
  return total;
}

void CheckLayout(const ParamLayout& layout, std::span<const Tensor> params,
                 const GradientVector& target) {
  if (!(target.layout == layout)) {
    throw ShapeError("GradOfGradientObjective", "target gradient layout does not match model");
  }
  if (params.size() != layout.entries().size()) {
    throw ShapeError("GradOfGradientObjective", "parameter count does not match layout");
  }
}

}  // namespace

GradientMatch GradOfGradientObjective(const LossFn& loss, std::span<const Tensor> params,
                                      const ParamLayout& layout, const Tensor& dummy_input,
                                      const Tensor& dummy_label, bool label_trainable,
                                      const GradientVector& target,
                                      GradientObjective objective) {
  CheckLayout(layout, params, target);
  std::vector<Var> pvars;
  pvars.reserve(params.size());
  for (const Tensor& p : params) pvars.emplace_back(p, true);
  Var x(dummy_input, true);
  Var y(dummy_label, label_trainable);

  Var model_loss = loss(pvars, x, y);
  std::vector<Var> dummy_grads = Grad(model_loss, pvars, /*create_graph=*/true);
  Var match = MatchLoss(dummy_grads, layout, target, objective);

  std::vector<Var> wrt{x};
  if (label_trainable) wrt.push_back(y);
  std::vector<Var> outer = Grad(match, wrt);

  GradientMatch result;
  result.loss = match.item();
  result.grad_input = outer[0].value();
  result.grad_label = label_trainable ? outer[1].value() : Tensor::Zeros(dummy_label.shape);
  return result;
}

double GradientObjectiveValue(const LossFn& loss, std::span<const Tensor> params,
                              const ParamLayout& layout, const Tensor& input,
                              const Tensor& label, const GradientVector& target,
                              GradientObjective objective) {
  CheckLayout(layout, params, target);
  std::vector<Var> pvars;
  for (const Tensor& p : params) pvars.emplace_back(p, true);
  Var model_loss = loss(pvars, Var(input), Var(label));
  std::vector<Var> grads = Grad(model_loss, pvars);
  NoGradGuard no_grad;
  return MatchLoss(grads, layout, target, objective).item();
}

}  // namespace flpl::ad
