#include "flpl/attack/dlg.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "flpl/attack/optim.h"
#include "flpl/autodiff/ops.h"
#include "flpl/common/rng.h"

namespace flpl::attack {
namespace {

struct NonFinite {};

// Model loss with the label either used as given or mapped from logits.
ad::LossFn MakeLossFn(const models::ModelSpec& spec, bool label_is_logits) {
  return [&spec, label_is_logits](std::span<const ad::Var> params, const ad::Var& input,
                                  const ad::Var& label) {
    ad::Var target = label;
    if (label_is_logits) {
      target = spec.kind == models::ModelKind::kClassifier ? ad::Softmax(label)
                                                           : ad::Sigmoid(label);
    }
    return models::Loss(spec, models::Forward(spec, params, input), target);
  };
}

ad::Shape BatchShape(const ad::Shape& per_example, int batch) {
  ad::Shape s{batch};
  s.insert(s.end(), per_example.begin(), per_example.end());
  return s;
}

ad::Shape LabelShape(const models::ModelSpec& spec, int batch) {
  if (spec.kind == models::ModelKind::kClassifier) return {batch, spec.num_classes};
  return BatchShape(spec.OutputShape(), batch);
}

ad::Tensor Relax(const models::ModelSpec& spec, const ad::Tensor& logits) {
  ad::NoGradGuard no_grad;
  ad::Var l(logits);
  return (spec.kind == models::ModelKind::kClassifier ? ad::Softmax(l) : ad::Sigmoid(l)).value();
}

ReconstructionResult Run(const models::ModelSpec& spec, const models::ModelParams& params,
                         const GradientVector& target, const AttackConfig& cfg,
                         const AttackStart& start, const models::Dataset* truth,
                         const std::optional<ad::Tensor>& fixed_label) {
  cfg.Validate();
  spec.Validate();
  if (params.layout != spec.Layout()) throw AttackError("attack: params do not match model");
  if (!(target.layout == spec.Layout())) {
    throw AttackError("attack: target gradient layout does not match model");
  }
  const ad::Shape input_shape = BatchShape(spec.input, cfg.batch_size);
  const ad::Shape label_shape = LabelShape(spec, cfg.batch_size);
  AttackStart init = InitialGuess(spec, cfg);
  if (start.input) init.input = start.input;
  if (start.label) init.label = start.label;
  if (init.input->shape != input_shape) {
    throw AttackError("attack: start input shape " + ad::ShapeToString(init.input->shape) +
                      ", expected " + ad::ShapeToString(input_shape));
  }
  if (init.label->shape != label_shape) {
    throw AttackError("attack: start label shape " + ad::ShapeToString(init.label->shape) +
                      ", expected " + ad::ShapeToString(label_shape));
  }
  if (fixed_label && fixed_label->shape != label_shape) {
    throw AttackError("attack: label shape " + ad::ShapeToString(fixed_label->shape) +
                      ", expected " + ad::ShapeToString(label_shape));
  }
  if (truth && truth->inputs.shape != input_shape) {
    throw AttackError("attack: ground truth shape " + ad::ShapeToString(truth->inputs.shape) +
                      ", expected " + ad::ShapeToString(input_shape));
  }

  const bool joint = !fixed_label.has_value();
  const ad::LossFn loss = MakeLossFn(spec, joint);
  const std::vector<ad::Tensor> param_tensors = Unflatten(params.values, params.layout);
  const size_t n_input = init.input->data.size();

  auto unpack = [&](std::span<const double> z, ad::Tensor& input, ad::Tensor& label) {
    input = ad::Tensor(input_shape, std::vector<double>(z.begin(), z.begin() + n_input));
    label = joint ? ad::Tensor(label_shape, std::vector<double>(z.begin() + n_input, z.end()))
                  : *fixed_label;
  };
  Objective objective = [&](std::span<const double> z, std::span<double> grad) {
    ad::Tensor input, label;
    unpack(z, input, label);
    ad::GradientMatch m = ad::GradOfGradientObjective(loss, param_tensors, params.layout, input,
                                                      label, joint, target, cfg.objective);
    if (!std::isfinite(m.loss)) throw NonFinite{};
    std::copy(m.grad_input.data.begin(), m.grad_input.data.end(), grad.begin());
    if (joint) std::copy(m.grad_label.data.begin(), m.grad_label.data.end(), grad.begin() + n_input);
    for (double g : grad) {
      if (!std::isfinite(g)) throw NonFinite{};
    }
    return m.loss;
  };

  std::vector<double> z(init.input->data);
  if (joint) z.insert(z.end(), init.label->data.begin(), init.label->data.end());

  ReconstructionResult result;
  std::vector<double> best_z = z;
  double best = std::numeric_limits<double>::infinity();
  auto record = [&](int iteration, double value) {
    result.history.push_back(value);
    ad::Tensor input, label;
    unpack(z, input, label);
    if (truth) result.psnr_history.push_back(Psnr(input, truth->inputs));
    if (cfg.snapshot_every > 0 && iteration % cfg.snapshot_every == 0) {
      result.snapshots.push_back({iteration, input});
    }
    if (value < best) {
      best = value;
      best_z = z;
      result.best_iteration = iteration;
    }
  };

  try {
    std::vector<double> grad(z.size());
    if (cfg.optimizer == OptimizerKind::kLbfgs) {
      record(0, objective(z, grad));
      LbfgsOptions opts;
      opts.lr = cfg.lr;
      opts.max_iter = cfg.lbfgs_max_inner;
      opts.max_eval = cfg.lbfgs_max_inner * 5 / 4;
      Lbfgs lbfgs(opts);
      for (int it = 1; it <= cfg.max_outer_iters; ++it) {
        const std::vector<double> before = z;
        const double value = lbfgs.Step(z, objective);
        record(it, value);
        // A step that cannot move will not move on later calls either.
        if (z == before) break;
      }
    } else {
      Adam adam(AdamOptions{cfg.lr});
      for (int it = 0; it <= cfg.max_outer_iters; ++it) {
        const double value = objective(z, grad);
        record(it, value);
        if (it == cfg.max_outer_iters) break;
        adam.Update(z, grad);
      }
    }
  } catch (const NonFinite&) {
    result.diverged = true;
  }
  if (result.history.empty()) {
    // Non-finite at the starting point.
    result.history.push_back(std::numeric_limits<double>::quiet_NaN());
    best = std::numeric_limits<double>::quiet_NaN();
  }

  ad::Tensor input, label;
  unpack(best_z, input, label);
  result.dummy_input = std::move(input);
  result.dummy_label = joint ? Relax(spec, label) : label;
  result.final_grad_match_loss = best;
  if (truth) {
    result.mse_to_truth = MseImage(result.dummy_input, truth->inputs);
    result.psnr_to_truth = Psnr(result.dummy_input, truth->inputs);
  }
  return result;
}

}  // namespace

void AttackConfig::Validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw AttackError("attack: lr must be positive");
  if (max_outer_iters < 1) throw AttackError("attack: max_outer_iters must be >= 1");
  if (lbfgs_max_inner < 1) throw AttackError("attack: lbfgs_max_inner must be >= 1");
  if (batch_size < 1) throw AttackError("attack: batch_size must be >= 1");
  if (snapshot_every < 0) throw AttackError("attack: snapshot_every must be >= 0");
}

AttackStart InitialGuess(const models::ModelSpec& spec, const AttackConfig& cfg) {
  Rng rng(DeriveSeed(cfg.seed, 0xd1c));
  auto draw = [&](const ad::Shape& shape) {
    ad::Tensor t(shape);
    for (double& v : t.data) v = cfg.init == InitKind::kNormal ? rng.Normal() : rng.Uniform();
    return t;
  };
  AttackStart s;
  s.input = draw(BatchShape(spec.input, cfg.batch_size));
  s.label = draw(LabelShape(spec, cfg.batch_size));
  return s;
}

ReconstructionResult DlgReconstruct(const models::ModelSpec& spec,
                                    const models::ModelParams& params,
                                    const GradientVector& target, const AttackConfig& cfg,
                                    const AttackStart& start, const models::Dataset* truth) {
  return Run(spec, params, target, cfg, start, truth, std::nullopt);
}

ReconstructionResult DlgInputOnly(const models::ModelSpec& spec,
                                  const models::ModelParams& params,
                                  const GradientVector& target, const ad::Tensor& label,
                                  const AttackConfig& cfg, const AttackStart& start,
                                  const models::Dataset* truth) {
  return Run(spec, params, target, cfg, start, truth, label);
}

std::pair<ReconstructionResult, defenses::DefenseConfig> AttackUnderDefense(
    const models::ModelSpec& spec, const models::ModelParams& params,
    const models::Dataset& batch, const defenses::DefenseConfig& defense,
    const AttackConfig& cfg) {
  if (batch.size() != cfg.batch_size) {
    throw AttackError("AttackUnderDefense: batch has " + std::to_string(batch.size()) +
                      " examples but the attack expects " + std::to_string(cfg.batch_size));
  }
  const GradientVector grad = models::ComputeGradient(spec, params, batch).second;
  const GradientVector shared = defenses::ApplyDefense(grad, defense);
  return {DlgReconstruct(spec, params, shared, cfg, {}, &batch), defense};
}

double MseImage(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.shape != b.shape) {
    throw ad::ShapeError("MseImage", "shape mismatch " + ad::ShapeToString(a.shape) + " vs " +
                                         ad::ShapeToString(b.shape));
  }
  if (a.data.empty()) throw AttackError("MseImage: empty tensors");
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double Psnr(const ad::Tensor& a, const ad::Tensor& b, double peak) {
  const double mse = MseImage(a, b);
  if (mse == 0) return kPsnrSentinel;
  const double v = 10.0 * std::log10(peak * peak / mse);
  return std::isfinite(v) ? std::min(v, kPsnrSentinel) : kPsnrSentinel;
}

void WriteImage(const std::filesystem::path& path, const ad::Tensor& image) {
  ad::Shape s = image.shape;
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3)) {
    throw AttackError("WriteImage: expected [1|3, H, W], got " + ad::ShapeToString(image.shape));
  }
  const int64_t c = s[0], h = s[1], w = s[2];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AttackError("WriteImage: cannot open " + path.string());
  out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      for (int64_t k = 0; k < c; ++k) {
        const double v = std::clamp(image.data[(k * h + i) * w + j], 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  if (!out) throw AttackError("WriteImage: write failed for " + path.string());
}

void WriteHistoryCsv(std::ostream& out, const ReconstructionResult& result) {
  out << "iter,match_loss,psnr\n";
  for (size_t i = 0; i < result.history.size(); ++i) {
    out << i << ',' << result.history[i] << ',';
    if (i < result.psnr_history.size()) out << result.psnr_history[i];
    out << '\n';
  }
}

}  // namespace flpl::attack
