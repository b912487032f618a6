#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "tools/cli/commands.h"

namespace flpl::cli {
namespace {

ExperimentConfig TinyConfig() {
  ExperimentConfig c;
  c.model.input_size = 8;
  c.model.kernel = 3;
  c.model.channels = 2;
  c.data.train_per_client = 16;
  c.data.test_examples = 40;
  c.fl.rounds = 2;
  c.fl.local_epochs = 1;
  c.attack.seeds = 3;
  c.attack.config.max_outer_iters = 10;
  c.sweep.accuracy = false;
  c.sweep.images = false;
  return c;
}

const PaillierBenchRow& Row(const std::vector<PaillierBenchRow>& rows, int bits, int64_t n) {
  for (const auto& r : rows) {
    if (r.key_bits == bits && r.n_params == n) return r;
  }
  throw std::runtime_error("missing row");
}

TEST(BenchPaillierTest, ScalesLinearlyInCountAndSteeplyInKeySize) {
  ExperimentConfig c = TinyConfig();
  c.bench.paillier_bits = {512, 2048};
  c.bench.param_counts = {0, 16, 32};
  const auto rows = BenchPaillier(c);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_LT(Row(rows, 512, 0).encrypt_ms, 0.1);
  const double linear = Row(rows, 2048, 32).encrypt_ms / Row(rows, 2048, 16).encrypt_ms;
  EXPECT_GE(linear, 1.7);
  EXPECT_LE(linear, 2.3);
  EXPECT_GT(Row(rows, 2048, 32).encrypt_ms / Row(rows, 512, 32).encrypt_ms, 10.0);

  std::ostringstream os;
  WritePaillierBenchCsv(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "key_bits,n_params,encrypt_ms,per_element_us");
}

TEST(BenchCkksTest, CiphertextCountFollowsPacking) {
  ExperimentConfig c = TinyConfig();
  c.bench.ckks_poly_degrees = {4096};
  c.bench.param_counts = {0, 1, 2048, 2049, 4096, 4097};
  const auto rows = BenchCkks(c);
  ASSERT_EQ(rows.size(), 6u);
  const int64_t expected[] = {0, 1, 1, 2, 2, 3};
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].ciphertexts, expected[i]) << rows[i].n_params;
    EXPECT_EQ(rows[i].log2q, crypto::CkksMaxLog2Q(4096));
  }
}

TEST(SweepTest, ZeroRowsAgreeAcrossAxes) {
  const ExperimentConfig c = TinyConfig();
  const auto prune = RunSweep(c, SweepAxis::kPrune, {0.0}, std::nullopt);
  const auto noise = RunSweep(c, SweepAxis::kNoise, {0.0}, std::nullopt);
  ASSERT_EQ(prune[0].runs.size(), 3u);
  for (size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(prune[0].runs[s].psnr, noise[0].runs[s].psnr);
    EXPECT_EQ(prune[0].runs[s].match_loss, noise[0].runs[s].match_loss);
  }
  EXPECT_EQ(prune[0].psnr_median, noise[0].psnr_median);
}

TEST(SweepTest, DeterministicAndWorkerIndependent) {
  ExperimentConfig c = TinyConfig();
  const auto a = RunSweep(c, SweepAxis::kNoise, {0.0, 0.01}, std::nullopt);
  c.workers = 3;
  const auto b = RunSweep(c, SweepAxis::kNoise, {0.0, 0.01}, std::nullopt);
  std::ostringstream sa, sb;
  WriteSweepRunsCsv(sa, SweepAxis::kNoise, a);
  WriteSweepRunsCsv(sb, SweepAxis::kNoise, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(SweepTest, AccuracyColumnsAndImages) {
  ExperimentConfig c = TinyConfig();
  c.attack.seeds = 1;
  c.sweep.accuracy = true;
  const auto dir = std::filesystem::path(::testing::TempDir()) / "sweep_images";
  std::filesystem::remove_all(dir);
  const auto rows = RunSweep(c, SweepAxis::kPrune, {0.0, 0.5}, dir);
  ASSERT_TRUE(rows[0].accuracy && rows[1].accuracy);
  EXPECT_EQ(*rows[0].accuracy_drop_pp, 0.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "truth_seed0.pgm"));
  EXPECT_TRUE(std::filesystem::exists(dir / "prune_0.5_seed0.pgm"));
  std::ostringstream os;
  WriteSweepCsv(os, SweepAxis::kPrune, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "axis,value,seeds,psnr_median,psnr_min,psnr_max,match_loss_median,diverged,accuracy,"
            "accuracy_drop_pp");
}

TEST(FlRunTest, InProcessAndTcpAgree) {
  ExperimentConfig c = TinyConfig();
  const auto a = FlRun(c);
  c.fl.tcp = true;
  c.fl.port = 0;
  const auto b = FlRun(c);
  ASSERT_EQ(a.size(), 2u);
  for (size_t r = 0; r < a.size(); ++r) EXPECT_EQ(a[r].params, b[r].params);
}

TEST(SweepTest, SegmenterIsRejected) {
  ExperimentConfig c = TinyConfig();
  c.model.kind = models::ModelKind::kSegmenter;
  EXPECT_THROW(RunSweep(c, SweepAxis::kPrune, {0.0}, std::nullopt), ConfigError);
}

}  // namespace
}  // namespace flpl::cli
