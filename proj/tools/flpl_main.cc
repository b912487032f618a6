// flpl: benchmarks, defense sweeps and federated runs driven by a YAML config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "tools/cli/commands.h"
#include "tools/cli/config.h"

namespace {

namespace cli = flpl::cli;

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  bool insecure = false;
  std::optional<int> workers;
};

void AddCommonFlags(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_path, "YAML experiment config");
  app->add_option("--seed", f.seed, "Override the config seed");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--workers", f.workers, "Worker threads");
  app->add_flag("--insecure-params", f.insecure,
                "Allow key sizes and CKKS moduli below 128-bit security (tests only)");
}

cli::ExperimentConfig Resolve(const CommonFlags& f) {
  cli::ExperimentConfig cfg =
      f.config_path.empty() ? cli::ExperimentConfig{} : cli::LoadConfig(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.workers) cfg.workers = *f.workers;
  if (f.insecure) cfg.insecure_params = true;
  cfg.Validate();
  return cfg;
}

// Writes `text` to out/name and echoes it on stdout.
void Emit(const cli::ExperimentConfig& cfg, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(cfg.out);
  const auto path = cfg.out / name;
  std::ofstream file(path);
  if (!file) throw flpl::Error("cannot write " + path.string());
  file << text;
  std::cout << text;
  std::fprintf(stderr, "wrote %s\n", path.string().c_str());
}

int SweepCommand(const CommonFlags& flags, cli::SweepAxis axis) {
  const auto cfg = Resolve(flags);
  const auto& values =
      axis == cli::SweepAxis::kPrune ? cfg.sweep.prune_ratios : cfg.sweep.noise_variances;
  const std::string name = cli::SweepAxisName(axis);
  std::optional<std::filesystem::path> images;
  if (cfg.sweep.images) images = cfg.out / ("images_" + name);
  const auto rows = cli::RunSweep(cfg, axis, values, images);
  std::ostringstream summary, runs;
  cli::WriteSweepCsv(summary, axis, rows);
  cli::WriteSweepRunsCsv(runs, axis, rows);
  std::filesystem::create_directories(cfg.out);
  std::ofstream(cfg.out / ("sweep_" + name + "_runs.csv")) << runs.str();
  Emit(cfg, "sweep_" + name + ".csv", summary.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning privacy toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<int> port;
  std::string host = "127.0.0.1";
  uint32_t id = 0;
  bool no_timings = false;

  auto* bench_paillier = app.add_subcommand("bench-paillier", "Paillier encryption timings");
  auto* bench_ckks = app.add_subcommand("bench-ckks", "CKKS encryption timings");
  auto* sweep_prune = app.add_subcommand("sweep-prune", "Gradient attack against pruning");
  auto* sweep_noise = app.add_subcommand("sweep-noise", "Gradient attack against noise");
  auto* fl_run = app.add_subcommand("fl-run", "Federated averaging, all roles in one process");
  auto* serve = app.add_subcommand("serve", "Federated averaging server over TCP");
  auto* client = app.add_subcommand("client", "Federated averaging client over TCP");
  for (auto* sub : {bench_paillier, bench_ckks, sweep_prune, sweep_noise, fl_run, serve, client}) {
    AddCommonFlags(sub, flags);
  }
  for (auto* sub : {fl_run, serve}) {
    sub->add_flag("--no-timings", no_timings, "Omit wall-clock columns from the CSV");
  }
  serve->add_option("--port", port, "Listen port (else fl.port, FLPL_PORT, 47017)");
  client->add_option("--port", port, "Server port (else fl.port, FLPL_PORT, 47017)");
  client->add_option("--host", host, "Server host");
  client->add_option("--id", id, "Client id in [0, fl.clients)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bench_paillier) {
      const auto cfg = Resolve(flags);
      std::ostringstream os;
      cli::WritePaillierBenchCsv(os, cli::BenchPaillier(cfg));
      Emit(cfg, "bench_paillier.csv", os.str());
    } else if (*bench_ckks) {
      const auto cfg = Resolve(flags);
      std::ostringstream os;
      cli::WriteCkksBenchCsv(os, cli::BenchCkks(cfg));
      Emit(cfg, "bench_ckks.csv", os.str());
    } else if (*sweep_prune) {
      return SweepCommand(flags, cli::SweepAxis::kPrune);
    } else if (*sweep_noise) {
      return SweepCommand(flags, cli::SweepAxis::kNoise);
    } else if (*fl_run || *serve) {
      const auto cfg = Resolve(flags);
      const auto results = *fl_run ? cli::FlRun(cfg) : cli::Serve(cfg, cli::ResolvePort(cfg, port));
      std::ostringstream os;
      flpl::fl::WriteRoundsCsv(os, results, cli::MakeRoundConfig(cfg, cfg.defense), !no_timings);
      Emit(cfg, "rounds.csv", os.str());
    } else if (*client) {
      const auto cfg = Resolve(flags);
      cli::RunClient(cfg, id, host, cli::ResolvePort(cfg, port));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "flpl: %s\n", e.what());
    return 1;
  }
  return 0;
}
