#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flpl/attack/dlg.h"
#include "flpl/common/error.h"
#include "flpl/defenses/defenses.h"
#include "flpl/fl/fedavg.h"

namespace flpl::cli {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ModelSection {
  models::ModelKind kind = models::ModelKind::kClassifier;
  int input_size = 16;
  int input_channels = 0;  // 0: 1 for a classifier, 3 for a segmenter
  int channels = 8;        // conv channels (classifier) or base channels (segmenter)
  int kernel = 5;          // classifier only
  // Large enough for the sigmoid stack to leave its initial plateau.
  double init_std = 0.5;
};

struct DataSection {
  int train_per_client = 80;
  int test_examples = 500;
};

struct FlSection {
  int clients = 3;
  int clients_per_round = 3;
  int rounds = 12;
  int local_epochs = 5;
  double lr = 0.2;
  int batch_size = 8;
  fl::Aggregation aggregation = fl::Aggregation::kPlain;
  bool tcp = false;
  std::string host = "127.0.0.1";
  int port = -1;  // -1: FLPL_PORT or the default port
};

struct CryptoSection {
  int paillier_bits = 2048;
  int precision_bits = 40;
  int ckks_poly_degree = 8192;
  int ckks_log2q = 200;
  int ckks_scale_bits = 40;
  uint64_t key_seed = 0x6b657973;
};

struct AttackSection {
  attack::AttackConfig config;
  // Standard deviation of the randomly initialized model under attack.
  double model_init_std = 0.1;
  int seeds = 10;
};

struct BenchSection {
  std::vector<int> paillier_bits = {512, 1024, 2048};
  std::vector<int> ckks_poly_degrees = {4096, 8192, 16384};
  std::vector<int64_t> param_counts = {250, 500, 1000};
  int repetitions = 5;
};

struct SweepSection {
  std::vector<double> prune_ratios = {0.0, 0.5, 0.83, 0.87, 0.905};
  std::vector<double> noise_variances = {0.0, 0.001, 0.007};
  bool accuracy = true;
  bool images = true;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  int workers = 1;
  bool insecure_params = false;
  std::filesystem::path out = "out";
  ModelSection model;
  DataSection data;
  FlSection fl;
  defenses::DefenseConfig defense;
  CryptoSection crypto;
  AttackSection attack;
  BenchSection bench;
  SweepSection sweep;

  // Throws ConfigError on out-of-range values.
  void Validate() const;
};

// Parses YAML text; every key must be known. Errors carry the line number.
ExperimentConfig ParseConfig(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig LoadConfig(const std::filesystem::path& path);

}  // namespace flpl::cli
