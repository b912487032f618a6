#include <gtest/gtest.h>

#include <cmath>

#include "flpl/models/model.h"
#include "oracles.h"

namespace flpl::models {
namespace {

using testing::CentralDifference;
using testing::MaxRelativeError;

// Central-difference gradient of the mean batch loss.
std::vector<double> NumericGradient(const ModelSpec& spec, const ModelParams& params,
                                    const Dataset& batch) {
  auto f = [&](const std::vector<double>& v) {
    return EvaluateLoss(spec, ModelParams{params.layout, v}, batch);
  };
  return CentralDifference(f, params.values);
}

TEST(BuildClassifierTest, SameSeedGivesBitIdenticalParams) {
  auto [s1, p1] = BuildClassifier({}, 42);
  auto [s2, p2] = BuildClassifier({}, 42);
  EXPECT_EQ(p1.values, p2.values);
  EXPECT_EQ(p1.layout, p2.layout);
  auto [s3, p3] = BuildClassifier({}, 43);
  EXPECT_NE(p1.values, p3.values);
}

TEST(BuildClassifierTest, DeskScaleParameterCountMatchesHandCount) {
  auto [spec, params] = BuildClassifier({}, 1);
  // conv: out * in * 5 * 5 + out; spatial 16 -> 12 -> 8 -> 4; dense: 8*4*4*10 + 10.
  const int64_t conv0 = 8 * 1 * 25 + 8;
  const int64_t conv1 = 8 * 8 * 25 + 8;
  const int64_t conv2 = 8 * 8 * 25 + 8;
  const int64_t fc = 8 * 4 * 4 * 10 + 10;
  EXPECT_EQ(params.size(), conv0 + conv1 + conv2 + fc);
  EXPECT_EQ(params.size(), 4714);
  EXPECT_EQ(spec.Layout().size(), params.size());
}

TEST(BuildClassifierTest, FullScaleInputGivesFourLayerShape) {
  ClassifierOptions opts;
  opts.input_size = 32;
  opts.input_channels = 3;
  auto [spec, params] = BuildClassifier(opts, 1);
  const auto& e = params.layout.entries();
  ASSERT_EQ(e.size(), 8u);
  EXPECT_EQ(e[0].shape, (ad::Shape{8, 3, 5, 5}));
  EXPECT_EQ(e[6].shape, (ad::Shape{10, 8 * 20 * 20}));
  EXPECT_EQ(spec.OutputShape(), (ad::Shape{10}));
  ad::Var x(ad::Tensor({2, 3, 32, 32}));
  EXPECT_EQ(Forward(spec, ParamVars(spec, params.values, false), x).shape(), (ad::Shape{2, 10}));
}

TEST(BuildClassifierTest, RejectsTooSmallInput) {
  ClassifierOptions opts;
  opts.input_size = 12;
  EXPECT_THROW(BuildClassifier(opts, 0), ModelError);
  opts.input_size = 13;
  EXPECT_NO_THROW(BuildClassifier(opts, 0));
  opts.conv_channels = 0;
  EXPECT_THROW(BuildClassifier(opts, 0), ModelError);
}

TEST(BuildClassifierTest, InitialParamsHaveConfiguredSpread) {
  ClassifierOptions opts;
  opts.init_std = 0.1;
  auto [spec, params] = BuildClassifier(opts, 3);
  double sum = 0.0, sq = 0.0;
  for (double v : params.values) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(params.size());
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(sq / n), 0.1, 0.005);
}

TEST(BuildSegmenterTest, OutputMatchesInputSpatialSize) {
  auto [spec, params] = BuildSegmenter({}, 1);
  EXPECT_EQ(spec.OutputShape(), (ad::Shape{1, 16, 16}));
  ad::Var x(ad::Tensor({2, 3, 16, 16}));
  EXPECT_EQ(Forward(spec, ParamVars(spec, params.values, false), x).shape(),
            (ad::Shape{2, 1, 16, 16}));
}

TEST(BuildSegmenterTest, RejectsOddSize) {
  SegmenterOptions opts;
  opts.input_size = 15;
  EXPECT_THROW(BuildSegmenter(opts, 0), ModelError);
}

TEST(BuildSegmenterTest, ZeroParamsOnZeroInputGiveHalf) {
  auto [spec, params] = BuildSegmenter({}, 1);
  ModelParams zero = ZeroParams(spec);
  ad::Tensor y =
      Forward(spec, ParamVars(spec, zero.values, false), ad::Var(ad::Tensor({1, 3, 16, 16})))
          .value();
  for (double v : y.data) EXPECT_EQ(v, 0.5);
}

TEST(BuildSegmenterTest, GradientMatchesFiniteDifferences) {
  SegmenterOptions opts;
  opts.input_size = 12;
  opts.base_channels = 2;
  opts.init_std = 0.5;
  auto [spec, params] = BuildSegmenter(opts, 5);
  Dataset batch = SynthDataset(ModelKind::kSegmenter, 2, 12, 6);
  auto [loss, grad] = ComputeGradient(spec, params, batch);
  EXPECT_EQ(grad.layout, params.layout);
  EXPECT_LT(MaxRelativeError(grad.values, NumericGradient(spec, params, batch)), 1e-4);
}

// Property: backward agrees with central differences on random small models.
TEST(ComputeGradientTest, MatchesFiniteDifferencesOnFiftyRandomModels) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    testing::RandomModelCase c = testing::MakeRandomModelCase(1000 + seed);
    ASSERT_LE(c.params.size(), 500);
    auto [loss, grad] = ComputeGradient(c.spec, c.params, c.batch);
    EXPECT_LT(MaxRelativeError(grad.values, NumericGradient(c.spec, c.params, c.batch)), 1e-4)
        << "seed " << seed;
  }
}

TEST(ComputeGradientTest, LossIsNonNegative) {
  auto [spec, params] = BuildClassifier({}, 2);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Dataset batch = SynthDataset(ModelKind::kClassifier, 4, 16, seed);
    EXPECT_GE(ComputeGradient(spec, params, batch).first, 0.0);
  }
  auto [sspec, sparams] = BuildSegmenter({}, 2);
  EXPECT_GE(ComputeGradient(sspec, sparams, SynthDataset(ModelKind::kSegmenter, 2, 16, 0)).first,
            0.0);
}

TEST(ComputeGradientTest, DuplicateSampleBatchGivesSingleSampleGradient) {
  auto [spec, params] = BuildClassifier({}, 2);
  Dataset data = SynthDataset(ModelKind::kClassifier, 1, 16, 9);
  std::vector<int64_t> twice{0, 0};
  auto [l1, g1] = ComputeGradient(spec, params, data);
  auto [l2, g2] = ComputeGradient(spec, params, data.Subset(twice));
  EXPECT_NEAR(l1, l2, 1e-14);
  for (int64_t i = 0; i < params.size(); ++i) EXPECT_NEAR(g1.values[i], g2.values[i], 1e-14);
}

TEST(ComputeGradientTest, IsDeterministic) {
  auto [spec, params] = BuildClassifier({}, 2);
  Dataset batch = SynthDataset(ModelKind::kClassifier, 3, 16, 1);
  EXPECT_EQ(ComputeGradient(spec, params, batch).second.values,
            ComputeGradient(spec, params, batch).second.values);
}

TEST(ComputeGradientTest, RejectsMismatchedBatch) {
  auto [spec, params] = BuildClassifier({}, 2);
  Dataset wrong = SynthDataset(ModelKind::kClassifier, 2, 20, 1);
  EXPECT_THROW(ComputeGradient(spec, params, wrong), ad::ShapeError);
  ModelParams short_params{ParamLayout{}, {}};
  EXPECT_THROW(ComputeGradient(spec, short_params, SynthDataset(ModelKind::kClassifier, 2, 16, 1)),
               ModelError);
}

TEST(ComputeGradientTest, TracingLeavesParamsBitIdentical) {
  auto [spec, params] = BuildClassifier({}, 4);
  const std::vector<double> before = params.values;
  ComputeGradient(spec, params, SynthDataset(ModelKind::kClassifier, 2, 16, 1));
  EXPECT_EQ(params.values, before);
}

TEST(LayoutTest, FlattenUnflattenRoundTrips) {
  auto [spec, params] = BuildSegmenter({}, 8);
  EXPECT_EQ(FlattenTensors(Unflatten(params.values, params.layout)), params.values);
  EXPECT_THROW(Unflatten(std::vector<double>(3), params.layout), ad::ShapeError);
}

TEST(LocalTrainTest, ZeroLearningRateLeavesParamsUnchanged) {
  auto [spec, params] = BuildClassifier({}, 3);
  Dataset shard = SynthDataset(ModelKind::kClassifier, 12, 16, 3);
  TrainOptions opts;
  opts.lr = 0.0;
  auto [out, n_k] = LocalTrain(spec, params, shard, opts);
  EXPECT_EQ(out.values, params.values);
  EXPECT_EQ(n_k, 12);
}

TEST(LocalTrainTest, SingleSampleEpochIsOneSgdStep) {
  auto [spec, params] = BuildClassifier({}, 3);
  Dataset shard = SynthDataset(ModelKind::kClassifier, 1, 16, 4);
  TrainOptions opts;
  opts.lr = 1e-3;
  auto [out, n_k] = LocalTrain(spec, params, shard, opts);
  auto [loss, grad] = ComputeGradient(spec, params, shard);
  for (int64_t i = 0; i < params.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.values[i], params.values[i] - 1e-3 * grad.values[i]);
  }
}

TEST(LocalTrainTest, FiveEpochsReduceLoss) {
  auto [spec, params] = BuildClassifier({}, 3);
  Dataset shard = SynthDataset(ModelKind::kClassifier, 64, 16, 5);
  TrainOptions opts;
  opts.epochs = 5;
  opts.lr = 0.5;
  const double before = EvaluateLoss(spec, params, shard);
  auto [out, n_k] = LocalTrain(spec, params, shard, opts);
  EXPECT_LT(EvaluateLoss(spec, out, shard), before);
}

TEST(LocalTrainTest, IsBitDeterministic) {
  auto [spec, params] = BuildClassifier({}, 3);
  Dataset shard = SynthDataset(ModelKind::kClassifier, 20, 16, 5);
  TrainOptions opts;
  opts.epochs = 2;
  opts.seed = 77;
  EXPECT_EQ(LocalTrain(spec, params, shard, opts).first.values,
            LocalTrain(spec, params, shard, opts).first.values);
}

TEST(LocalTrainTest, RejectsEmptyShardAndBadEpochs) {
  auto [spec, params] = BuildClassifier({}, 3);
  Dataset shard = SynthDataset(ModelKind::kClassifier, 4, 16, 5);
  TrainOptions opts;
  EXPECT_THROW(LocalTrain(spec, params, shard.Slice(0, 0), opts), ModelError);
  opts.epochs = 0;
  EXPECT_THROW(LocalTrain(spec, params, shard, opts), ModelError);
}

TEST(EvaluateAccuracyTest, MemorizingParamsScorePerfectly) {
  // One dense layer on one-hot inputs with a scaled identity weight.
  ModelSpec spec;
  spec.input = {1, 1, 10};
  spec.layers = {DenseLayer{10}};
  ModelParams params = ZeroParams(spec);
  for (int i = 0; i < 10; ++i) params.values[i * 10 + i] = 5.0;
  Dataset data;
  data.inputs = ad::Tensor({10, 1, 1, 10});
  data.labels = ad::Tensor({10});
  for (int i = 0; i < 10; ++i) {
    data.inputs[i * 10 + i] = 1.0;
    data.labels[i] = i;
  }
  EXPECT_EQ(EvaluateAccuracy(spec, params, data), 1.0);
}

TEST(EvaluateAccuracyTest, RandomParamsScoreNearChance) {
  auto [spec, params] = BuildClassifier({}, 11);
  Dataset test = SynthDataset(ModelKind::kClassifier, 2000, 16, 12);
  EXPECT_NEAR(EvaluateAccuracy(spec, params, test), 0.1, 0.05);
}

TEST(EvaluateAccuracyTest, ConstantSegmenterOnBalancedMaskScoresHalf) {
  auto [spec, params] = BuildSegmenter({}, 1);
  Dataset data;
  data.kind = ModelKind::kSegmenter;
  data.inputs = ad::Tensor({1, 3, 16, 16});
  data.labels = ad::Tensor({1, 1, 16, 16});
  for (int i = 0; i < 128; ++i) data.labels[i] = 1.0;
  EXPECT_EQ(EvaluateAccuracy(spec, ZeroParams(spec), data), 0.5);
}

TEST(EvaluateAccuracyTest, RejectsEmptyTestSet) {
  auto [spec, params] = BuildClassifier({}, 1);
  Dataset data = SynthDataset(ModelKind::kClassifier, 2, 16, 1);
  EXPECT_THROW(EvaluateAccuracy(spec, params, data.Slice(0, 0)), ModelError);
}

TEST(EvaluateAccuracyTest, StaysInUnitInterval) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto [spec, params] = BuildClassifier({}, seed);
    const double a = EvaluateAccuracy(spec, params, SynthDataset(ModelKind::kClassifier, 30, 16, seed));
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(SynthDatasetTest, SameSeedIsBitIdentical) {
  for (ModelKind kind : {ModelKind::kClassifier, ModelKind::kSegmenter}) {
    Dataset a = SynthDataset(kind, 8, 16, 3), b = SynthDataset(kind, 8, 16, 3);
    EXPECT_EQ(a.inputs.data, b.inputs.data);
    EXPECT_EQ(a.labels.data, b.labels.data);
  }
}

TEST(SynthDatasetTest, SegmenterMasksAreBinaryAndNonConstant) {
  for (int size : {8, 12, 16}) {
    Dataset d = SynthDataset(ModelKind::kSegmenter, 20, size, size);
    EXPECT_NO_THROW(d.Validate());
    const int64_t per = static_cast<int64_t>(size) * size;
    for (int64_t k = 0; k < d.size(); ++k) {
      double ones = 0.0;
      for (int64_t p = 0; p < per; ++p) ones += d.labels[k * per + p];
      EXPECT_GT(ones, 0.0);
      EXPECT_LT(ones, static_cast<double>(per));
    }
  }
}

TEST(SynthDatasetTest, SegmenterInputsAreUnitNormalEncodings) {
  Dataset d = SynthDataset(ModelKind::kSegmenter, 5, 8, 1);
  const int64_t plane = 64;
  for (int64_t k = 0; k < 5; ++k)
    for (int64_t p = 0; p < plane; ++p) {
      double len = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double n = 2.0 * d.inputs[(k * 3 + c) * plane + p] - 1.0;
        len += n * n;
      }
      EXPECT_NEAR(len, 1.0, 1e-12);
      EXPECT_GE(d.inputs[(k * 3 + 2) * plane + p], 0.5);
    }
}

TEST(SynthDatasetTest, ClassLabelsAreUniform) {
  const int n = 5000;
  Dataset d = SynthDataset(ModelKind::kClassifier, n, 16, 7);
  std::vector<int> counts(10);
  for (double v : d.labels.data) counts[static_cast<int>(v)]++;
  // Binomial(5000, 0.1): sd = sqrt(450) ~ 21.2; allow 4 sd.
  for (int c : counts) EXPECT_NEAR(c, 500, 85);
}

TEST(DatasetTest, ValidateRejectsMismatchedLeadingDims) {
  Dataset d = SynthDataset(ModelKind::kClassifier, 4, 16, 1);
  d.labels = ad::Tensor({3});
  EXPECT_THROW(d.Validate(), ModelError);
  Dataset s = SynthDataset(ModelKind::kSegmenter, 1, 8, 1);
  s.labels[0] = 0.5;
  EXPECT_THROW(s.Validate(), ModelError);
}

TEST(DatasetTest, ShardsAreDisjointSlices) {
  Dataset d = SynthDataset(ModelKind::kClassifier, 10, 16, 1);
  auto shards = SplitShards(d, 3);
  ASSERT_EQ(shards.size(), 3u);
  for (int s = 0; s < 3; ++s) {
    EXPECT_EQ(shards[s].size(), 3);
    EXPECT_EQ(shards[s].labels.data, d.Slice(3 * s, 3).labels.data);
  }
  EXPECT_THROW(SplitShards(d, 11), ModelError);
}

}  // namespace
}  // namespace flpl::models
