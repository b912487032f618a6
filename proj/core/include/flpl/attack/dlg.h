#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flpl/autodiff/gradient_objective.h"
#include "flpl/common/error.h"
#include "flpl/defenses/defenses.h"
#include "flpl/models/model.h"

namespace flpl::attack {

class AttackError : public Error {
 public:
  using Error::Error;
};

enum class OptimizerKind { kLbfgs, kAdam };
enum class InitKind { kNormal, kUniform };

struct AttackConfig {
  ad::GradientObjective objective = ad::GradientObjective::kSse;
  OptimizerKind optimizer = OptimizerKind::kLbfgs;
  double lr = 1.0;
  int max_outer_iters = 300;
  int lbfgs_max_inner = 20;
  uint64_t seed = 0;
  InitKind init = InitKind::kNormal;
  // Examples in the attacked batch.
  int batch_size = 1;
  // Keep a copy of the dummy input every this many outer iterations (0: off).
  int snapshot_every = 0;

  void Validate() const;
};

// Optional starting point; missing parts are drawn from the configured init.
struct AttackStart {
  std::optional<ad::Tensor> input;
  // Label logits (classifier) or mask logits (segmenter) for a joint attack.
  std::optional<ad::Tensor> label;
};

struct Snapshot {
  int iteration = 0;
  ad::Tensor input;
};

struct ReconstructionResult {
  ad::Tensor dummy_input;
  // Relaxed label: softmax of the logits (classifier) or sigmoid of the mask
  // logits (segmenter). The fixed label for an input-only attack.
  ad::Tensor dummy_label;
  double final_grad_match_loss = 0.0;
  // Match loss of the iterate at the start (index 0) and after each outer
  // iteration. The returned state is the one with the lowest entry.
  std::vector<double> history;
  // PSNR of each recorded iterate when ground truth was supplied.
  std::vector<double> psnr_history;
  std::vector<Snapshot> snapshots;
  bool diverged = false;
  int best_iteration = 0;
  std::optional<double> mse_to_truth;
  std::optional<double> psnr_to_truth;
};

// Dummy data drawn from the configured init for `batch_size` examples.
AttackStart InitialGuess(const models::ModelSpec& spec, const AttackConfig& cfg);

// Joint reconstruction of inputs and labels from a shared gradient. A
// non-finite objective stops the run early with diverged = true.
ReconstructionResult DlgReconstruct(const models::ModelSpec& spec,
                                    const models::ModelParams& params,
                                    const GradientVector& target, const AttackConfig& cfg,
                                    const AttackStart& start = {},
                                    const models::Dataset* truth = nullptr);

// Input-only variant: `label` holds class distributions [B, classes]
// (classifier) or masks [B, 1, H, W] (segmenter) and is not optimized.
ReconstructionResult DlgInputOnly(const models::ModelSpec& spec,
                                  const models::ModelParams& params,
                                  const GradientVector& target, const ad::Tensor& label,
                                  const AttackConfig& cfg, const AttackStart& start = {},
                                  const models::Dataset* truth = nullptr);

// Computes the batch gradient, applies `defense` and attacks the result.
std::pair<ReconstructionResult, defenses::DefenseConfig> AttackUnderDefense(
    const models::ModelSpec& spec, const models::ModelParams& params,
    const models::Dataset& batch, const defenses::DefenseConfig& defense,
    const AttackConfig& cfg);

// PSNR of an exact match, larger than any computed value.
inline constexpr double kPsnrSentinel = 1000.0;

double MseImage(const ad::Tensor& a, const ad::Tensor& b);
// 10 log10(peak^2 / mse), capped at kPsnrSentinel.
double Psnr(const ad::Tensor& a, const ad::Tensor& b, double peak = 1.0);

// Writes one image [C, H, W] (or [1, C, H, W]) with values clamped to
// [0, 1]: binary PGM for C = 1, binary PPM for C = 3.
void WriteImage(const std::filesystem::path& path, const ad::Tensor& image);

// iter,match_loss,psnr (psnr empty without ground truth).
void WriteHistoryCsv(std::ostream& out, const ReconstructionResult& result);

}  // namespace flpl::attack
