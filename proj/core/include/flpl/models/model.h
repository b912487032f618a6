#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "flpl/autodiff/gradient_vector.h"
#include "flpl/autodiff/ops.h"
#include "flpl/models/dataset.h"

namespace flpl::models {

struct ConvLayer {
  int out_channels = 1;
  int kernel = 5;
  int padding = 0;  // zero padding applied before a stride-1 valid conv
};
struct SigmoidLayer {};
// Flattens to [batch, features] if needed, then applies an affine map.
struct DenseLayer {
  int out_features = 1;
};
using LayerDesc = std::variant<ConvLayer, SigmoidLayer, DenseLayer>;

// Architecture description.
//
// Classifiers are evaluated sequentially over `layers` and must end with a
// dense layer producing `num_classes` logits; the loss applies softmax
// cross-entropy. Segmenters hold exactly four conv layers wired as a one-level
// U-Net:
//
//   x -> conv0+sigmoid = e -> avgpool2 -> conv1+sigmoid -> upsample2 = u
//   concat(u, e) -> conv2+sigmoid -> conv3 (1 channel) + sigmoid -> mask
//
// and are trained with binary cross-entropy against a same-size mask.
struct ModelSpec {
  ModelKind kind = ModelKind::kClassifier;
  ad::Shape input;  // [channels, height, width]
  std::vector<LayerDesc> layers;
  int num_classes = 10;
  double init_std = 0.1;

  ParamLayout Layout() const;
  // Output shape for a single example (without the batch dim).
  ad::Shape OutputShape() const;
  // Throws ModelError on an inconsistent architecture.
  void Validate() const;
};

struct ModelParams {
  ParamLayout layout;
  std::vector<double> values;

  int64_t size() const { return static_cast<int64_t>(values.size()); }
};

struct ClassifierOptions {
  int input_size = 16;
  int input_channels = 1;
  int conv_channels = 8;
  int kernel = 5;
  int num_classes = 10;
  double init_std = 0.1;
};

struct SegmenterOptions {
  int input_size = 16;
  int input_channels = 3;
  int base_channels = 4;
  double init_std = 0.1;
};

// Three stride-1 valid 5x5 convs with sigmoid activations, then a dense
// layer over num_classes. Requires input_size >= 3 * (kernel - 1) + 1.
std::pair<ModelSpec, ModelParams> BuildClassifier(const ClassifierOptions& opts, uint64_t seed);
// Requires an even input_size.
std::pair<ModelSpec, ModelParams> BuildSegmenter(const SegmenterOptions& opts, uint64_t seed);

// Parameters drawn i.i.d. from N(0, init_std^2).
ModelParams InitParams(const ModelSpec& spec, uint64_t seed);
ModelParams ZeroParams(const ModelSpec& spec);

// Wraps flat parameters as graph leaves, one per layout entry.
std::vector<ad::Var> ParamVars(const ModelSpec& spec, std::span<const double> values,
                               bool requires_grad);

// Forward pass over a batch [B, C, H, W]. Returns logits [B, classes] for a
// classifier and probabilities [B, 1, H, W] for a segmenter.
ad::Var Forward(const ModelSpec& spec, std::span<const ad::Var> params, const ad::Var& x);

// Training loss for a forward output against targets: one-hot or soft class
// distributions [B, classes] for a classifier, a mask for a segmenter.
ad::Var Loss(const ModelSpec& spec, const ad::Var& output, const ad::Var& targets);

// Loss targets for a batch: labels become one-hot rows for a classifier.
ad::Tensor Targets(const ModelSpec& spec, const Dataset& batch);

// Mean loss over `batch` and its gradient w.r.t. every parameter.
std::pair<double, GradientVector> ComputeGradient(const ModelSpec& spec,
                                                  const ModelParams& params,
                                                  const Dataset& batch);

struct TrainOptions {
  int epochs = 1;
  double lr = 0.1;
  int batch_size = 8;
  uint64_t seed = 0;
};

// Minibatch SGD over a shuffled shard. Returns the updated parameters and the
// shard size n_k.
std::pair<ModelParams, int64_t> LocalTrain(const ModelSpec& spec, const ModelParams& params,
                                           const Dataset& shard, const TrainOptions& opts);

// Classifier: fraction of argmax-correct predictions. Segmenter: pixel
// accuracy with the prediction thresholded at p > 0.5.
double EvaluateAccuracy(const ModelSpec& spec, const ModelParams& params, const Dataset& testset);

// Mean loss without gradients.
double EvaluateLoss(const ModelSpec& spec, const ModelParams& params, const Dataset& data);

}  // namespace flpl::models
