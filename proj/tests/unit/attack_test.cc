#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flpl/attack/dlg.h"
#include "flpl/attack/optim.h"
#include "flpl/autodiff/ops.h"
#include "flpl/common/rng.h"

namespace flpl::attack {
namespace {

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// --- optimizers -----------------------------------------------------------

double Rosenbrock(std::span<const double> x, std::span<double> g) {
  double f = 0;
  std::fill(g.begin(), g.end(), 0.0);
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i], b = 1 - x[i];
    f += 100 * a * a + b * b;
    g[i] += -400 * a * x[i] - 2 * b;
    g[i + 1] += 200 * a;
  }
  return f;
}

TEST(CubicInterpolateTest, RecoversQuadraticMinimizer) {
  // f(x) = (x - 0.3)^2 sampled with derivatives at 0 and 1.
  auto f = [](double x) { return (x - 0.3) * (x - 0.3); };
  auto g = [](double x) { return 2 * (x - 0.3); };
  EXPECT_NEAR(CubicInterpolate(0, f(0), g(0), 1, f(1), g(1), 0, 1), 0.3, 1e-12);
  EXPECT_NEAR(CubicInterpolate(1, f(1), g(1), 0, f(0), g(0), 0, 1), 0.3, 1e-12);
}

TEST(CubicInterpolateTest, RecoversCubicLocalMinimizer) {
  // f(x) = x^3 - 3x has its local minimum at x = 1.
  auto f = [](double x) { return x * x * x - 3 * x; };
  auto g = [](double x) { return 3 * x * x - 3; };
  EXPECT_NEAR(CubicInterpolate(0, f(0), g(0), 2, f(2), g(2), 0, 2), 1.0, 1e-12);
}

TEST(CubicInterpolateTest, ClampsToBounds) {
  auto f = [](double x) { return (x - 5) * (x - 5); };
  auto g = [](double x) { return 2 * (x - 5); };
  EXPECT_DOUBLE_EQ(CubicInterpolate(0, f(0), g(0), 1, f(1), g(1), 0, 2), 2.0);
}

TEST(StrongWolfeTest, AcceptedStepSatisfiesConditions) {
  const std::vector<double> x = {-1.2, 1.0};
  std::vector<double> g0(2);
  const double f0 = Rosenbrock(x, g0);
  const std::vector<double> d = {-g0[0], -g0[1]};
  const double gtd = -(g0[0] * g0[0] + g0[1] * g0[1]);
  auto r = StrongWolfe(Rosenbrock, x, 1.0, d, f0, g0, gtd);
  std::vector<double> p = {x[0] + r.t * d[0], x[1] + r.t * d[1]};
  std::vector<double> gp(2);
  const double fp = Rosenbrock(p, gp);
  EXPECT_DOUBLE_EQ(fp, r.f);
  EXPECT_LE(fp, f0 + 1e-4 * r.t * gtd);
  EXPECT_LE(std::abs(gp[0] * d[0] + gp[1] * d[1]), 0.9 * std::abs(gtd));
}

TEST(LbfgsTest, MinimizesRosenbrock) {
  std::vector<double> x = {-1.2, 1.0, -0.5, 0.8};
  Lbfgs opt;
  double f = 0;
  for (int i = 0; i < 50; ++i) f = opt.Step(x, Rosenbrock);
  EXPECT_LT(f, 1e-10);
  for (double v : x) EXPECT_NEAR(v, 1.0, 1e-5);
}

TEST(LbfgsTest, QuadraticInFewIterations) {
  // Diagonal quadratic with condition number 100.
  Objective quad = [](std::span<const double> x, std::span<double> g) {
    double f = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      const double a = 1.0 + 99.0 * i / (x.size() - 1);
      f += 0.5 * a * x[i] * x[i];
      g[i] = a * x[i];
    }
    return f;
  };
  std::vector<double> x(6, 1.0);
  Lbfgs opt;
  EXPECT_LT(opt.Step(x, quad), 1e-9);
}

TEST(AdamTest, MinimizesQuadratic) {
  std::vector<double> x = {3.0, -2.0};
  Adam opt(AdamOptions{0.1});
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> g = {2 * x[0], 2 * x[1]};
    opt.Update(x, g);
  }
  EXPECT_NEAR(x[0], 0.0, 1e-3);
  EXPECT_NEAR(x[1], 0.0, 1e-3);
}

// --- metrics and dumps ----------------------------------------------------

TEST(MetricsTest, TrivialValues) {
  ad::Tensor x({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  ad::Tensor y = x;
  for (double& v : y.data) v += 0.1;
  EXPECT_EQ(Psnr(x, x), kPsnrSentinel);
  EXPECT_NEAR(MseImage(x, y), 0.01, 1e-15);
  EXPECT_NEAR(Psnr(x, y), 20.0, 1e-9);
  EXPECT_NEAR(Psnr(x, y, 2.0), 20.0 + 20 * std::log10(2.0), 1e-9);
  EXPECT_THROW(MseImage(x, ad::Tensor({3, 2})), ad::ShapeError);
}

TEST(WriteImageTest, GraymapAndPixmap) {
  const auto dir = std::filesystem::temp_directory_path() / "flpl_attack_test";
  std::filesystem::create_directories(dir);
  ad::Tensor gray({1, 2, 3}, {0, 0.5, 1, 2, -1, 1.0 / 255});
  WriteImage(dir / "g.pgm", gray);
  std::ifstream in(dir / "g.pgm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  const std::vector<unsigned char> px(bytes.begin() + header.size(), bytes.end());
  EXPECT_EQ(px, (std::vector<unsigned char>{0, 128, 255, 255, 0, 1}));

  ad::Tensor rgb({1, 3, 1, 2}, {1, 0, 0, 1, 0, 0});
  WriteImage(dir / "c.ppm", rgb);
  std::ifstream in2(dir / "c.ppm", std::ios::binary);
  std::string b2((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
  EXPECT_EQ(b2, std::string("P6\n2 1\n255\n") + std::string("\xff\x00\x00\x00\xff\x00", 6));
  EXPECT_THROW(WriteImage(dir / "x.pgm", ad::Tensor({2, 2, 2})), AttackError);
}

// --- single dense layer: the gradient determines the input ----------------

struct Logistic {
  models::ModelSpec spec;
  models::ModelParams params;
  ad::Tensor x;  // [1, 2, 1, 1]
  int label = 0;
};

Logistic MakeLogistic(uint64_t seed) {
  Logistic l;
  l.spec.kind = models::ModelKind::kClassifier;
  l.spec.input = {2, 1, 1};
  l.spec.layers = {models::DenseLayer{2}};
  l.spec.num_classes = 2;
  l.spec.init_std = 1.0;
  l.params = models::InitParams(l.spec, seed);
  Rng rng(seed + 1);
  l.x = ad::Tensor({1, 2, 1, 1}, {rng.Uniform(), rng.Uniform()});
  l.label = static_cast<int>(rng.UniformInt(2));
  return l;
}

// Gradient of softmax cross-entropy for one example, written out by hand:
// dW = (p - y) x^T, db = p - y.
GradientVector AnalyticGradient(const Logistic& l) {
  const auto& w = l.params.values;  // W [2, 2] row-major, then b [2]
  const double x0 = l.x.data[0], x1 = l.x.data[1];
  const double z0 = w[0] * x0 + w[1] * x1 + w[4];
  const double z1 = w[2] * x0 + w[3] * x1 + w[5];
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  const double r0 = e0 / (e0 + e1) - (l.label == 0), r1 = e1 / (e0 + e1) - (l.label == 1);
  return GradientVector(l.spec.Layout(), {r0 * x0, r0 * x1, r1 * x0, r1 * x1, r0, r1});
}

TEST(DlgLogisticTest, OracleRecoversInputFromGradient) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Logistic l = MakeLogistic(seed);
    models::Dataset d{models::ModelKind::kClassifier, l.x, ad::Tensor({1}, {double(l.label)})};
    const GradientVector g = AnalyticGradient(l);
    const GradientVector engine = models::ComputeGradient(l.spec, l.params, d).second;
    for (size_t i = 0; i < g.values.size(); ++i) EXPECT_NEAR(g.values[i], engine.values[i], 1e-12);
    // Row 0 of dW divided by db[0] is x.
    EXPECT_NEAR(g.values[0] / g.values[4], l.x.data[0], 1e-12);
    EXPECT_NEAR(g.values[1] / g.values[4], l.x.data[1], 1e-12);
  }
}

class DlgLogisticOptimizerTest : public ::testing::TestWithParam<OptimizerKind> {};

TEST_P(DlgLogisticOptimizerTest, RecoversInputWithWarmStartLabel) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Logistic l = MakeLogistic(seed);
    const GradientVector target = AnalyticGradient(l);
    AttackConfig cfg;
    cfg.optimizer = GetParam();
    cfg.seed = seed;
    // Inputs drawn from the data range. From N(0, 1) a dummy can start deep in
    // the saturated region of the softmax, where the dummy gradient vanishes.
    cfg.init = InitKind::kUniform;
    if (cfg.optimizer == OptimizerKind::kAdam) {
      cfg.lr = 0.01;
      cfg.max_outer_iters = 3000;
    }
    AttackStart start;
    start.label = ad::Tensor({1, 2});
    start.label->data[l.label] = 20.0;  // warm start: softmax is one-hot to 1e-8
    models::Dataset truth{models::ModelKind::kClassifier, l.x, ad::Tensor({1})};
    auto r = DlgReconstruct(l.spec, l.params, target, cfg, start, &truth);
    if (cfg.optimizer == OptimizerKind::kLbfgs) {
      EXPECT_LT(r.final_grad_match_loss, 1e-8) << seed;
      for (int i = 0; i < 2; ++i) EXPECT_NEAR(r.dummy_input.data[i], l.x.data[i], 1e-3) << seed;
    } else {
      EXPECT_LT(r.final_grad_match_loss, 1e-6) << seed;
    }
    EXPECT_FALSE(r.diverged);
  }
}

INSTANTIATE_TEST_SUITE_P(Optimizers, DlgLogisticOptimizerTest,
                         ::testing::Values(OptimizerKind::kLbfgs, OptimizerKind::kAdam));

// --- contracts on small models --------------------------------------------

std::pair<models::ModelSpec, models::ModelParams> SmallClassifier(uint64_t seed) {
  models::ClassifierOptions o;
  o.input_size = 7;
  o.kernel = 3;
  o.conv_channels = 2;
  o.num_classes = 4;
  return models::BuildClassifier(o, seed);
}

// Model gradient at (input, label logits) computed directly from the engine.
GradientVector GradientAtSoftLabel(const models::ModelSpec& spec,
                                   const models::ModelParams& params, const ad::Tensor& input,
                                   const ad::Tensor& logits) {
  auto vars = models::ParamVars(spec, params.values, true);
  ad::Var loss = models::Loss(spec, models::Forward(spec, vars, ad::Var(input)),
                              ad::Softmax(ad::Var(logits)));
  std::vector<ad::Tensor> grads;
  for (const ad::Var& g : ad::Grad(loss, vars)) grads.push_back(g.value());
  return GradientVector(params.layout, FlattenTensors(grads));
}

TEST(DlgContractTest, TargetAtInitIsFixedPoint) {
  auto [spec, params] = SmallClassifier(1);
  for (auto objective : {ad::GradientObjective::kSse, ad::GradientObjective::kNegCosine}) {
    AttackConfig cfg;
    cfg.objective = objective;
    cfg.seed = 4;
    cfg.max_outer_iters = 3;
    const AttackStart init = InitialGuess(spec, cfg);
    const GradientVector target = GradientAtSoftLabel(spec, params, *init.input, *init.label);
    auto r = DlgReconstruct(spec, params, target, cfg);
    ASSERT_FALSE(r.history.empty());
    EXPECT_LT(std::abs(r.history[0]), 1e-12);
    EXPECT_LT(std::abs(r.final_grad_match_loss), 1e-12);
  }
}

TEST(DlgContractTest, InputOnlyFromTruthHasZeroLoss) {
  models::SegmenterOptions o;
  o.input_size = 8;
  auto [spec, params] = models::BuildSegmenter(o, 3);
  auto data = models::SynthDataset(models::ModelKind::kSegmenter, 1, 8, 9);
  const GradientVector target = models::ComputeGradient(spec, params, data).second;
  AttackConfig cfg;
  cfg.max_outer_iters = 2;
  AttackStart start;
  start.input = data.inputs;
  auto r = DlgInputOnly(spec, params, target, data.labels, cfg, start, &data);
  EXPECT_LT(r.history[0], 1e-12);
  EXPECT_EQ(r.dummy_label.data, data.labels.data);
}

TEST(DlgContractTest, BestSoFarMatchesHistory) {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    auto [spec, params] = SmallClassifier(seed);
    auto data = models::SynthDataset(models::ModelKind::kClassifier, 1, 7, seed + 50);
    data.labels[0] = static_cast<double>(seed % 4);
    const GradientVector target = models::ComputeGradient(spec, params, data).second;
    for (auto opt : {OptimizerKind::kLbfgs, OptimizerKind::kAdam}) {
      AttackConfig cfg;
      cfg.optimizer = opt;
      cfg.lr = opt == OptimizerKind::kAdam ? 0.1 : 1.0;
      cfg.max_outer_iters = 15;
      cfg.seed = seed;
      auto r = DlgReconstruct(spec, params, target, cfg, {}, &data);
      ASSERT_FALSE(r.history.empty());
      EXPECT_EQ(r.final_grad_match_loss, *std::min_element(r.history.begin(), r.history.end()));
      EXPECT_EQ(r.history[r.best_iteration], r.final_grad_match_loss);
      EXPECT_EQ(r.psnr_history.size(), r.history.size());
      EXPECT_EQ(*r.psnr_to_truth, r.psnr_history[r.best_iteration]);
      EXPECT_TRUE(std::isfinite(*r.mse_to_truth));
      // Dummy label is a probability distribution.
      double s = 0;
      for (double p : r.dummy_label.data) s += p;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(DlgContractTest, NonFiniteObjectiveStopsRun) {
  auto [spec, params] = SmallClassifier(2);
  GradientVector target(params.layout, std::vector<double>(params.values.size(), 0.0));
  target.values[3] = std::numeric_limits<double>::quiet_NaN();
  AttackConfig cfg;
  cfg.max_outer_iters = 5;
  auto r = DlgReconstruct(spec, params, target, cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(DlgContractTest, RejectsMismatches) {
  auto [spec, params] = SmallClassifier(2);
  AttackConfig cfg;
  GradientVector wrong(std::vector<double>(params.values.size(), 0.0));
  EXPECT_THROW(DlgReconstruct(spec, params, wrong, cfg), AttackError);
  GradientVector target(params.layout, std::vector<double>(params.values.size(), 0.0));
  AttackStart bad;
  bad.input = ad::Tensor({2, 1, 7, 7});
  EXPECT_THROW(DlgReconstruct(spec, params, target, cfg, bad), AttackError);
  cfg.max_outer_iters = 0;
  EXPECT_THROW(DlgReconstruct(spec, params, target, AttackConfig{cfg}), AttackError);
  auto data = models::SynthDataset(models::ModelKind::kClassifier, 2, 7, 1);
  EXPECT_THROW(AttackUnderDefense(spec, params, data, {}, AttackConfig{}), AttackError);
}

TEST(DlgContractTest, SnapshotsAndCsv) {
  auto [spec, params] = SmallClassifier(6);
  auto data = models::SynthDataset(models::ModelKind::kClassifier, 1, 7, 6);
  data.labels[0] = 1;
  AttackConfig cfg;
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.lr = 0.05;
  cfg.max_outer_iters = 10;
  cfg.snapshot_every = 5;
  auto r = AttackUnderDefense(spec, params, data, {}, cfg).first;
  ASSERT_EQ(r.snapshots.size(), 3u);
  EXPECT_EQ(r.snapshots[2].iteration, 10);
  std::ostringstream csv;
  WriteHistoryCsv(csv, r);
  const std::string s = csv.str();
  EXPECT_EQ(s.rfind("iter,match_loss,psnr\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 12);
}

TEST(DlgContractTest, ZeroVarianceNoiseEqualsUndefended) {
  auto [spec, params] = SmallClassifier(8);
  auto data = models::SynthDataset(models::ModelKind::kClassifier, 1, 7, 8);
  data.labels[0] = 3;
  AttackConfig cfg;
  cfg.max_outer_iters = 10;
  cfg.seed = 8;
  defenses::DefenseConfig noise;
  noise.mode = defenses::DefenseMode::kNoise;
  noise.variance = 0.0;
  auto a = AttackUnderDefense(spec, params, data, {}, cfg).first;
  auto [b, echoed] = AttackUnderDefense(spec, params, data, noise, cfg);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.dummy_input.data, b.dummy_input.data);
  EXPECT_EQ(echoed.mode, defenses::DefenseMode::kNoise);
}

// --- desk-scale behaviour --------------------------------------------------

TEST(DlgDeskScaleTest, UndefendedClassifierIsReconstructed) {
  auto [spec, params] = models::BuildClassifier(models::ClassifierOptions{}, 100);
  auto data = models::SynthDataset(models::ModelKind::kClassifier, 1, 16, 200);
  AttackConfig cfg;
  auto r = AttackUnderDefense(spec, params, data, {}, cfg).first;
  EXPECT_GT(*r.psnr_to_truth, 20.0);
  EXPECT_LE(static_cast<int>(r.history.size()), cfg.max_outer_iters + 1);
}

TEST(DlgDeskScaleTest, FixedLabelConvergesNoSlowerThanJoint) {
  // Paired runs: the iteration at which the best state was reached.
  std::vector<double> joint, fixed;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto [spec, params] = models::BuildClassifier(models::ClassifierOptions{}, 100 + seed);
    auto data = models::SynthDataset(models::ModelKind::kClassifier, 1, 16, 200 + seed);
    const GradientVector target = models::ComputeGradient(spec, params, data).second;
    AttackConfig cfg;
    cfg.seed = seed;
    joint.push_back(DlgReconstruct(spec, params, target, cfg, {}, &data).best_iteration);
    fixed.push_back(
        DlgInputOnly(spec, params, target, models::Targets(spec, data), cfg, {}, &data)
            .best_iteration);
  }
  EXPECT_LE(Median(fixed), Median(joint));
}

}  // namespace
}  // namespace flpl::attack
