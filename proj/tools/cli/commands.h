#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tools/cli/config.h"

namespace flpl::cli {

// --- benchmarks -------------------------------------------------------------

struct PaillierBenchRow {
  int key_bits = 0;
  int64_t n_params = 0;
  double encrypt_ms = 0;  // median over repetitions
};
std::vector<PaillierBenchRow> BenchPaillier(const ExperimentConfig& cfg);
void WritePaillierBenchCsv(std::ostream& out, const std::vector<PaillierBenchRow>& rows);

struct CkksBenchRow {
  int poly_degree = 0;
  int log2q = 0;
  int64_t n_params = 0;
  int64_t ciphertexts = 0;
  double encrypt_ms = 0;  // median over repetitions
};
std::vector<CkksBenchRow> BenchCkks(const ExperimentConfig& cfg);
void WriteCkksBenchCsv(std::ostream& out, const std::vector<CkksBenchRow>& rows);

// The largest secure log2 q not above the configured one, unless insecure
// parameters were requested.
crypto::CkksParams CkksParamsFor(const ExperimentConfig& cfg, int poly_degree);

// --- federated runs -----------------------------------------------------------

struct FlSetup {
  models::ModelSpec spec;
  models::ModelParams initial;
  std::vector<models::Dataset> shards;
  models::Dataset testset;
};
// Deterministic in cfg.seed, so separate server and client processes agree.
FlSetup MakeFlSetup(const ExperimentConfig& cfg);
fl::RoundConfig MakeRoundConfig(const ExperimentConfig& cfg,
                                const defenses::DefenseConfig& defense);

std::vector<fl::RoundResult> FlRun(const ExperimentConfig& cfg);
// Server role over TCP: accepts cfg.fl.clients connections on `port`.
std::vector<fl::RoundResult> Serve(const ExperimentConfig& cfg, uint16_t port);
// Client role over TCP. Client 0 evaluates and reports.
void RunClient(const ExperimentConfig& cfg, uint32_t id, const std::string& host,
               uint16_t port);
uint16_t ResolvePort(const ExperimentConfig& cfg, std::optional<int> flag);

// --- attack sweeps ------------------------------------------------------------

enum class SweepAxis { kPrune, kNoise };
std::string SweepAxisName(SweepAxis axis);
defenses::DefenseConfig DefenseFor(SweepAxis axis, double value, uint64_t seed);

struct AttackRun {
  double value = 0;
  int seed_index = 0;
  double psnr = 0;
  double mse = 0;
  double match_loss = 0;
  int iterations = 0;
  bool diverged = false;
};

struct SweepRow {
  double value = 0;
  std::vector<AttackRun> runs;
  double psnr_median = 0;
  double psnr_min = 0;
  double psnr_max = 0;
  double match_loss_median = 0;
  int diverged = 0;
  // Final-round FL accuracy with the defense applied to every client update.
  std::optional<double> accuracy;
  std::optional<double> accuracy_drop_pp;  // relative to the undefended run
};

// One DLG attack per (value, seed index) on a freshly initialized classifier,
// with the defense applied to the shared gradient. Images go to image_dir
// when it is set.
std::vector<SweepRow> RunSweep(const ExperimentConfig& cfg, SweepAxis axis,
                               const std::vector<double>& values,
                               const std::optional<std::filesystem::path>& image_dir);
void WriteSweepCsv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows);
void WriteSweepRunsCsv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows);

double Median(std::vector<double> v);

}  // namespace flpl::cli
