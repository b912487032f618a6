#include "flpl/models/model.h"

#include <algorithm>
#include <numeric>
#include <string>

#include "flpl/common/rng.h"

namespace flpl::models {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct Walk {
  ParamLayout layout;
  ad::Shape shape;  // current per-example shape
};

// Shape propagation shared by Layout() and OutputShape() for sequential models.
Walk WalkClassifier(const ModelSpec& spec) {
  Walk w;
  w.shape = spec.input;
  int conv = 0, dense = 0;
  for (const LayerDesc& layer : spec.layers) {
    std::visit(Overloaded{
                   [&](const ConvLayer& c) {
                     if (w.shape.size() != 3) throw ModelError("conv layer after dense layer");
                     const int64_t h = w.shape[1] + 2 * c.padding - c.kernel + 1;
                     const int64_t wd = w.shape[2] + 2 * c.padding - c.kernel + 1;
                     if (h < 1 || wd < 1) {
                       throw ModelError("conv" + std::to_string(conv) + ": input " +
                                        ad::ShapeToString(w.shape) + " too small for kernel " +
                                        std::to_string(c.kernel));
                     }
                     const std::string name = "conv" + std::to_string(conv++);
                     w.layout.Add(name + ".weight", {c.out_channels, w.shape[0], c.kernel, c.kernel});
                     w.layout.Add(name + ".bias", {c.out_channels});
                     w.shape = {c.out_channels, h, wd};
                   },
                   [&](const SigmoidLayer&) {},
                   [&](const DenseLayer& d) {
                     const int64_t in = ad::NumElements(w.shape);
                     const std::string name = "fc" + std::to_string(dense++);
                     w.layout.Add(name + ".weight", {d.out_features, in});
                     w.layout.Add(name + ".bias", {d.out_features});
                     w.shape = {d.out_features};
                   },
               },
               layer);
  }
  return w;
}

Walk WalkSegmenter(const ModelSpec& spec) {
  if (spec.layers.size() != 4) throw ModelError("segmenter needs exactly 4 conv layers");
  std::vector<ConvLayer> convs;
  for (const LayerDesc& l : spec.layers) {
    if (!std::holds_alternative<ConvLayer>(l)) throw ModelError("segmenter layers must be convs");
    convs.push_back(std::get<ConvLayer>(l));
  }
  if (spec.input.size() != 3) throw ModelError("segmenter input must be [C, H, W]");
  const int64_t c_in = spec.input[0], size = spec.input[1];
  if (spec.input[2] != size) throw ModelError("segmenter input must be square");
  if (size % 2 != 0) throw ModelError("segmenter input size must be divisible by 2, got " +
                                      std::to_string(size));
  for (const ConvLayer& c : convs) {
    if (c.kernel != 2 * c.padding + 1) throw ModelError("segmenter convs must preserve size");
  }
  if (convs[3].out_channels != 1) throw ModelError("segmenter head must have 1 channel");
  Walk w;
  const int64_t enc = convs[0].out_channels, mid = convs[1].out_channels;
  const int64_t dec = convs[2].out_channels;
  w.layout.Add("enc.weight", {enc, c_in, convs[0].kernel, convs[0].kernel});
  w.layout.Add("enc.bias", {enc});
  w.layout.Add("mid.weight", {mid, enc, convs[1].kernel, convs[1].kernel});
  w.layout.Add("mid.bias", {mid});
  w.layout.Add("dec.weight", {dec, mid + enc, convs[2].kernel, convs[2].kernel});
  w.layout.Add("dec.bias", {dec});
  w.layout.Add("head.weight", {1, dec, convs[3].kernel, convs[3].kernel});
  w.layout.Add("head.bias", {1});
  w.shape = {1, size, size};
  return w;
}

ad::Var ConvBlock(const ad::Var& x, const ConvLayer& c, const ad::Var& w, const ad::Var& b) {
  return ad::AddBias(ad::Conv2d(ad::Pad2d(x, c.padding), w), b);
}

}  // namespace

ParamLayout ModelSpec::Layout() const {
  return kind == ModelKind::kClassifier ? WalkClassifier(*this).layout
                                        : WalkSegmenter(*this).layout;
}

ad::Shape ModelSpec::OutputShape() const {
  return kind == ModelKind::kClassifier ? WalkClassifier(*this).shape
                                        : WalkSegmenter(*this).shape;
}

void ModelSpec::Validate() const {
  if (input.size() != 3) throw ModelError("input shape must be [C, H, W]");
  if (kind == ModelKind::kClassifier) {
    if (layers.empty() || !std::holds_alternative<DenseLayer>(layers.back())) {
      throw ModelError("classifier must end with a dense layer");
    }
    if (std::get<DenseLayer>(layers.back()).out_features != num_classes) {
      throw ModelError("classifier output width must equal num_classes");
    }
  }
  (void)OutputShape();
}

std::pair<ModelSpec, ModelParams> BuildClassifier(const ClassifierOptions& opts, uint64_t seed) {
  const int min_size = 3 * (opts.kernel - 1) + 1;
  if (opts.input_size < min_size) {
    throw ModelError("BuildClassifier: input size " + std::to_string(opts.input_size) +
                     " is below the minimum " + std::to_string(min_size) +
                     " for three valid convs");
  }
  if (opts.conv_channels < 1 || opts.input_channels < 1) {
    throw ModelError("BuildClassifier: channel counts must be >= 1");
  }
  ModelSpec spec;
  spec.kind = ModelKind::kClassifier;
  spec.input = {opts.input_channels, opts.input_size, opts.input_size};
  spec.num_classes = opts.num_classes;
  spec.init_std = opts.init_std;
  for (int i = 0; i < 3; ++i) {
    spec.layers.push_back(ConvLayer{opts.conv_channels, opts.kernel, 0});
    spec.layers.push_back(SigmoidLayer{});
  }
  spec.layers.push_back(DenseLayer{opts.num_classes});
  spec.Validate();
  ModelParams params = InitParams(spec, seed);
  return {std::move(spec), std::move(params)};
}

std::pair<ModelSpec, ModelParams> BuildSegmenter(const SegmenterOptions& opts, uint64_t seed) {
  if (opts.input_size < 2 || opts.input_size % 2 != 0) {
    throw ModelError("BuildSegmenter: input size must be even, got " +
                     std::to_string(opts.input_size));
  }
  ModelSpec spec;
  spec.kind = ModelKind::kSegmenter;
  spec.input = {opts.input_channels, opts.input_size, opts.input_size};
  spec.num_classes = 1;
  spec.init_std = opts.init_std;
  const int c = opts.base_channels;
  spec.layers = {ConvLayer{c, 3, 1}, ConvLayer{2 * c, 3, 1}, ConvLayer{c, 3, 1},
                 ConvLayer{1, 1, 0}};
  spec.Validate();
  ModelParams params = InitParams(spec, seed);
  return {std::move(spec), std::move(params)};
}

ModelParams InitParams(const ModelSpec& spec, uint64_t seed) {
  ModelParams p = ZeroParams(spec);
  Rng rng(DeriveSeed(seed, 0x1a17));
  for (double& v : p.values) v = rng.Normal(0.0, spec.init_std);
  return p;
}

ModelParams ZeroParams(const ModelSpec& spec) {
  ModelParams p;
  p.layout = spec.Layout();
  p.values.assign(static_cast<size_t>(p.layout.size()), 0.0);
  return p;
}

std::vector<ad::Var> ParamVars(const ModelSpec& spec, std::span<const double> values,
                               bool requires_grad) {
  std::vector<ad::Var> vars;
  for (ad::Tensor& t : Unflatten(values, spec.Layout())) vars.emplace_back(std::move(t), requires_grad);
  return vars;
}

ad::Var Forward(const ModelSpec& spec, std::span<const ad::Var> params, const ad::Var& x) {
  ad::Shape expected = spec.input;
  if (x.shape().size() != 4 || ad::Shape(x.shape().begin() + 1, x.shape().end()) != expected) {
    throw ad::ShapeError("Forward", x.shape(), expected);
  }
  if (spec.kind == ModelKind::kSegmenter) {
    if (params.size() != 8) throw ModelError("Forward: segmenter expects 8 parameter tensors");
    const auto& L = spec.layers;
    const auto conv = [&](int i) { return std::get<ConvLayer>(L[i]); };
    ad::Var e = ad::Sigmoid(ConvBlock(x, conv(0), params[0], params[1]));
    ad::Var m = ad::Sigmoid(ConvBlock(ad::AvgPool2(e), conv(1), params[2], params[3]));
    ad::Var cat = ad::ConcatChannels(ad::Upsample2(m), e);
    ad::Var d = ad::Sigmoid(ConvBlock(cat, conv(2), params[4], params[5]));
    return ad::Sigmoid(ConvBlock(d, conv(3), params[6], params[7]));
  }
  ad::Var h = x;
  size_t p = 0;
  for (const LayerDesc& layer : spec.layers) {
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      h = ConvBlock(h, *c, params[p], params[p + 1]);
      p += 2;
    } else if (std::holds_alternative<SigmoidLayer>(layer)) {
      h = ad::Sigmoid(h);
    } else {
      if (h.shape().size() != 2) h = ad::Flatten(h);
      h = ad::Linear(h, params[p], params[p + 1]);
      p += 2;
    }
  }
  return h;
}

ad::Var Loss(const ModelSpec& spec, const ad::Var& output, const ad::Var& targets) {
  return spec.kind == ModelKind::kClassifier ? ad::CrossEntropyLoss(output, targets)
                                             : ad::BinaryCrossEntropyLoss(output, targets);
}

ad::Tensor Targets(const ModelSpec& spec, const Dataset& batch) {
  if (spec.kind == ModelKind::kSegmenter) return batch.labels;
  const int64_t n = batch.size();
  ad::Tensor t({n, spec.num_classes});
  for (int64_t i = 0; i < n; ++i) {
    const auto label = static_cast<int64_t>(batch.labels[i]);
    if (label < 0 || label >= spec.num_classes) throw ModelError("label out of range");
    t[i * spec.num_classes + label] = 1.0;
  }
  return t;
}

std::pair<double, GradientVector> ComputeGradient(const ModelSpec& spec,
                                                  const ModelParams& params,
                                                  const Dataset& batch) {
  if (params.layout != spec.Layout()) throw ModelError("ComputeGradient: params do not match spec");
  std::vector<ad::Var> vars = ParamVars(spec, params.values, true);
  ad::Var x(batch.inputs);
  ad::Var loss = Loss(spec, Forward(spec, vars, x), ad::Var(Targets(spec, batch)));
  std::vector<ad::Var> grads = ad::Grad(loss, vars);
  std::vector<ad::Tensor> tensors;
  tensors.reserve(grads.size());
  for (const ad::Var& g : grads) tensors.push_back(g.value());
  return {loss.item(), GradientVector(params.layout, FlattenTensors(tensors))};
}

std::pair<ModelParams, int64_t> LocalTrain(const ModelSpec& spec, const ModelParams& params,
                                           const Dataset& shard, const TrainOptions& opts) {
  if (shard.size() == 0) throw ModelError("LocalTrain: empty shard");
  if (opts.epochs < 1) throw ModelError("LocalTrain: epochs must be >= 1");
  if (opts.batch_size < 1) throw ModelError("LocalTrain: batch size must be >= 1");
  ModelParams current = params;
  const int64_t n = shard.size();
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(DeriveSeed(opts.seed, 0x7a19, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (int64_t first = 0; first < n; first += opts.batch_size) {
      const int64_t count = std::min<int64_t>(opts.batch_size, n - first);
      Dataset batch = shard.Subset(std::span<const int64_t>(order).subspan(first, count));
      auto [loss, grad] = ComputeGradient(spec, current, batch);
      (void)loss;
      for (size_t i = 0; i < current.values.size(); ++i) current.values[i] -= opts.lr * grad.values[i];
    }
  }
  return {std::move(current), n};
}

double EvaluateAccuracy(const ModelSpec& spec, const ModelParams& params, const Dataset& testset) {
  if (testset.size() == 0) throw ModelError("EvaluateAccuracy: empty test set");
  ad::NoGradGuard no_grad;
  std::vector<ad::Var> vars = ParamVars(spec, params.values, false);
  constexpr int64_t kChunk = 64;
  int64_t correct = 0, total = 0;
  for (int64_t first = 0; first < testset.size(); first += kChunk) {
    const int64_t count = std::min(kChunk, testset.size() - first);
    Dataset batch = testset.Slice(first, count);
    const ad::Tensor out = Forward(spec, vars, ad::Var(batch.inputs)).value();
    if (spec.kind == ModelKind::kClassifier) {
      const int64_t k = spec.num_classes;
      for (int64_t i = 0; i < count; ++i) {
        const double* row = out.data.data() + i * k;
        const int64_t pred = std::max_element(row, row + k) - row;
        correct += pred == static_cast<int64_t>(batch.labels[i]);
      }
      total += count;
    } else {
      for (int64_t i = 0; i < out.numel(); ++i) {
        const double pred = out[i] > 0.5 ? 1.0 : 0.0;
        correct += pred == batch.labels[i];
      }
      total += out.numel();
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

double EvaluateLoss(const ModelSpec& spec, const ModelParams& params, const Dataset& data) {
  ad::NoGradGuard no_grad;
  std::vector<ad::Var> vars = ParamVars(spec, params.values, false);
  ad::Var out = Forward(spec, vars, ad::Var(data.inputs));
  return Loss(spec, out, ad::Var(Targets(spec, data))).item();
}

}  // namespace flpl::models
