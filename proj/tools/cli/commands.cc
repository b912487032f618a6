#include "tools/cli/commands.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "flpl/common/parallel.h"
#include "flpl/common/rng.h"
#include "flpl/net/tcp.h"

namespace flpl::cli {
namespace {

using Clock = std::chrono::steady_clock;

double MillisSince(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

std::vector<double> RandomValues(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.Uniform(-1.0, 1.0);
  return v;
}

std::pair<models::ModelSpec, models::ModelParams> BuildModel(const ExperimentConfig& cfg,
                                                             double init_std, uint64_t seed) {
  if (cfg.model.kind == models::ModelKind::kClassifier) {
    models::ClassifierOptions o;
    o.input_size = cfg.model.input_size;
    if (cfg.model.input_channels > 0) o.input_channels = cfg.model.input_channels;
    o.conv_channels = cfg.model.channels;
    o.kernel = cfg.model.kernel;
    o.init_std = init_std;
    return models::BuildClassifier(o, seed);
  }
  models::SegmenterOptions o;
  o.input_size = cfg.model.input_size;
  if (cfg.model.input_channels > 0) o.input_channels = cfg.model.input_channels;
  o.base_channels = cfg.model.channels;
  o.init_std = init_std;
  return models::BuildSegmenter(o, seed);
}

std::string FormatValue(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// The first example of a batch as a [C, H, W] image.
ad::Tensor FirstImage(const ad::Tensor& batch, const ad::Shape& image_shape) {
  const auto n = static_cast<std::ptrdiff_t>(ad::NumElements(image_shape));
  return ad::Tensor(image_shape, std::vector<double>(batch.data.begin(), batch.data.begin() + n));
}

}  // namespace

double Median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<PaillierBenchRow> BenchPaillier(const ExperimentConfig& cfg) {
  std::vector<PaillierBenchRow> rows;
  for (int bits : cfg.bench.paillier_bits) {
    const auto keys = crypto::PaillierKeygen(bits, DeriveSeed(cfg.seed, 0xbe1, bits),
                                             cfg.insecure_params);
    const crypto::FixedPointCodec codec(keys.pk.n, cfg.crypto.precision_bits);
    for (int64_t n : cfg.bench.param_counts) {
      const auto values = RandomValues(n, DeriveSeed(cfg.seed, 0xbe2, n));
      std::vector<double> times;
      for (int rep = 0; rep < cfg.bench.repetitions; ++rep) {
        const auto t = Clock::now();
        auto cts = crypto::PaillierEncryptVector(keys.pk, values, codec,
                                                 DeriveSeed(cfg.seed, 0xbe3, rep), cfg.workers);
        times.push_back(MillisSince(t));
      }
      rows.push_back({bits, n, Median(times)});
    }
  }
  return rows;
}

void WritePaillierBenchCsv(std::ostream& out, const std::vector<PaillierBenchRow>& rows) {
  out << "key_bits,n_params,encrypt_ms,per_element_us\n";
  for (const auto& r : rows) {
    const double per = r.n_params > 0 ? r.encrypt_ms * 1e3 / r.n_params : 0.0;
    out << r.key_bits << ',' << r.n_params << ',' << r.encrypt_ms << ',' << per << '\n';
  }
}

crypto::CkksParams CkksParamsFor(const ExperimentConfig& cfg, int poly_degree) {
  crypto::CkksParams p;
  p.poly_degree = poly_degree;
  p.scale_bits = cfg.crypto.ckks_scale_bits;
  p.insecure = cfg.insecure_params;
  p.log2q = cfg.insecure_params ? cfg.crypto.ckks_log2q
                                : std::min(cfg.crypto.ckks_log2q, crypto::CkksMaxLog2Q(poly_degree));
  return p;
}

std::vector<CkksBenchRow> BenchCkks(const ExperimentConfig& cfg) {
  std::vector<CkksBenchRow> rows;
  for (int degree : cfg.bench.ckks_poly_degrees) {
    const crypto::CkksContext ctx(CkksParamsFor(cfg, degree));
    const auto keys = crypto::CkksKeygen(ctx, DeriveSeed(cfg.seed, 0xbc1, degree));
    for (int64_t n : cfg.bench.param_counts) {
      const auto values = RandomValues(n, DeriveSeed(cfg.seed, 0xbe2, n));
      std::vector<double> times;
      int64_t count = 0;
      for (int rep = 0; rep < cfg.bench.repetitions; ++rep) {
        const auto t = Clock::now();
        auto cts = crypto::CkksEncryptVector(ctx, keys.public_key, values,
                                             DeriveSeed(cfg.seed, 0xbc3, rep), cfg.workers);
        times.push_back(MillisSince(t));
        count = static_cast<int64_t>(cts.size());
      }
      rows.push_back({degree, ctx.log2q(), n, count, Median(times)});
    }
  }
  return rows;
}

void WriteCkksBenchCsv(std::ostream& out, const std::vector<CkksBenchRow>& rows) {
  out << "poly_degree,log2q,n_params,ciphertexts,encrypt_ms,per_element_us\n";
  for (const auto& r : rows) {
    const double per = r.n_params > 0 ? r.encrypt_ms * 1e3 / r.n_params : 0.0;
    out << r.poly_degree << ',' << r.log2q << ',' << r.n_params << ',' << r.ciphertexts << ','
        << r.encrypt_ms << ',' << per << '\n';
  }
}

FlSetup MakeFlSetup(const ExperimentConfig& cfg) {
  FlSetup s;
  std::tie(s.spec, s.initial) = BuildModel(cfg, cfg.model.init_std, DeriveSeed(cfg.seed, 0xf10));
  const int channels = static_cast<int>(s.spec.input[0]);
  const auto train = models::SynthDataset(
      cfg.model.kind, static_cast<int64_t>(cfg.fl.clients) * cfg.data.train_per_client,
      cfg.model.input_size, DeriveSeed(cfg.seed, 0xf11), channels);
  s.shards = models::SplitShards(train, cfg.fl.clients);
  s.testset = models::SynthDataset(cfg.model.kind, cfg.data.test_examples, cfg.model.input_size,
                                   DeriveSeed(cfg.seed, 0xf12), channels);
  return s;
}

fl::RoundConfig MakeRoundConfig(const ExperimentConfig& cfg,
                                const defenses::DefenseConfig& defense) {
  fl::RoundConfig r;
  r.num_clients = cfg.fl.clients;
  r.clients_per_round = cfg.fl.clients_per_round;
  r.rounds = cfg.fl.rounds;
  r.local_epochs = cfg.fl.local_epochs;
  r.lr = cfg.fl.lr;
  r.batch_size = cfg.fl.batch_size;
  r.defense = defense;
  r.defense.seed = DeriveSeed(cfg.seed, 0xdef);
  r.aggregation = cfg.fl.aggregation;
  r.crypto.paillier_bits = cfg.crypto.paillier_bits;
  r.crypto.precision_bits = cfg.crypto.precision_bits;
  r.crypto.ckks = CkksParamsFor(cfg, cfg.crypto.ckks_poly_degree);
  r.crypto.insecure = cfg.insecure_params;
  r.crypto.key_seed = cfg.crypto.key_seed;
  r.seed = DeriveSeed(cfg.seed, 0xf13);
  r.workers = cfg.workers;
  return r;
}

std::vector<fl::RoundResult> FlRun(const ExperimentConfig& cfg) {
  const FlSetup s = MakeFlSetup(cfg);
  const fl::RoundConfig rc = MakeRoundConfig(cfg, cfg.defense);
  if (cfg.fl.tcp) {
    const uint16_t port = cfg.fl.port >= 0 ? static_cast<uint16_t>(cfg.fl.port) : 0;
    return fl::RunRoundsTcp(s.spec, s.initial, s.shards, s.testset, rc, port);
  }
  return fl::RunRoundsInProcess(s.spec, s.initial, s.shards, s.testset, rc);
}

uint16_t ResolvePort(const ExperimentConfig& cfg, std::optional<int> flag) {
  if (flag) {
    if (*flag < 0 || *flag > 65535) throw ConfigError("--port must be in [0, 65535]");
    return static_cast<uint16_t>(*flag);
  }
  if (cfg.fl.port >= 0) return static_cast<uint16_t>(cfg.fl.port);
  return net::PortFromEnvironment();
}

std::vector<fl::RoundResult> Serve(const ExperimentConfig& cfg, uint16_t port) {
  const FlSetup s = MakeFlSetup(cfg);
  const fl::RoundConfig rc = MakeRoundConfig(cfg, cfg.defense);
  net::TcpListener listener(cfg.fl.host, port);
  std::fprintf(stderr, "listening on %s:%u for %d clients\n", cfg.fl.host.c_str(),
               static_cast<unsigned>(listener.port()), cfg.fl.clients);
  std::vector<std::unique_ptr<net::Channel>> channels;
  for (int i = 0; i < cfg.fl.clients; ++i) channels.push_back(listener.Accept());
  auto endpoint = net::ServerEndpoint::Accept(std::move(channels));
  fl::FedServer server(s.initial.values, rc, 0);
  try {
    auto results = server.Run(endpoint);
    endpoint.CloseAll();
    return results;
  } catch (...) {
    endpoint.CloseAll();
    throw;
  }
}

void RunClient(const ExperimentConfig& cfg, uint32_t id, const std::string& host,
               uint16_t port) {
  if (id >= static_cast<uint32_t>(cfg.fl.clients)) {
    throw ConfigError("--id must be below fl.clients (" + std::to_string(cfg.fl.clients) + ")");
  }
  FlSetup s = MakeFlSetup(cfg);
  std::optional<models::Dataset> test;
  if (id == 0) test = s.testset;
  fl::FedClient client(id, s.spec, s.shards[id], MakeRoundConfig(cfg, cfg.defense), test);
  auto channel = net::TcpConnect(host, port, 30000);
  client.Run(*channel);
  channel->Close();
}

std::string SweepAxisName(SweepAxis axis) { return axis == SweepAxis::kPrune ? "prune" : "noise"; }

defenses::DefenseConfig DefenseFor(SweepAxis axis, double value, uint64_t seed) {
  defenses::DefenseConfig d;
  d.seed = seed;
  if (axis == SweepAxis::kPrune) {
    d.mode = defenses::DefenseMode::kCompressRatio;
    d.target_ratio = value;
  } else {
    d.mode = defenses::DefenseMode::kNoise;
    d.variance = value;
  }
  return d;
}

std::vector<SweepRow> RunSweep(const ExperimentConfig& cfg, SweepAxis axis,
                               const std::vector<double>& values,
                               const std::optional<std::filesystem::path>& image_dir) {
  if (cfg.model.kind != models::ModelKind::kClassifier) {
    throw ConfigError("sweeps attack the classifier; set model.kind: classifier");
  }
  const int seeds = cfg.attack.seeds;
  std::vector<SweepRow> rows(values.size());
  for (size_t v = 0; v < values.size(); ++v) {
    rows[v].value = values[v];
    rows[v].runs.resize(static_cast<size_t>(seeds));
  }
  if (image_dir) std::filesystem::create_directories(*image_dir);

  ParallelFor(values.size() * seeds, cfg.workers, [&](size_t job) {
    const size_t v = job / seeds;
    const int s = static_cast<int>(job % seeds);
    const uint64_t k = static_cast<uint64_t>(s);
    auto [spec, params] = BuildModel(cfg, cfg.attack.model_init_std, DeriveSeed(cfg.seed, 0xa770, k));
    const auto batch = models::SynthDataset(models::ModelKind::kClassifier,
                                            cfg.attack.config.batch_size, cfg.model.input_size,
                                            DeriveSeed(cfg.seed, 0xba7c, k),
                                            static_cast<int>(spec.input[0]));
    attack::AttackConfig ac = cfg.attack.config;
    ac.seed = DeriveSeed(cfg.seed, 0xa7a, k);
    const auto defense = DefenseFor(axis, values[v], DeriveSeed(cfg.seed, 0xde, k));
    const auto r = attack::AttackUnderDefense(spec, params, batch, defense, ac).first;
    AttackRun& run = rows[v].runs[static_cast<size_t>(s)];
    run.value = values[v];
    run.seed_index = s;
    run.psnr = *r.psnr_to_truth;
    run.mse = *r.mse_to_truth;
    run.match_loss = r.final_grad_match_loss;
    run.iterations = static_cast<int>(r.history.size()) - 1;
    run.diverged = r.diverged;
    if (image_dir) {
      const std::string stem = SweepAxisName(axis) + "_" + FormatValue(values[v]) + "_seed" +
                               std::to_string(s);
      attack::WriteImage(*image_dir / (stem + ".pgm"), FirstImage(r.dummy_input, spec.input));
      if (v == 0) {
        attack::WriteImage(*image_dir / ("truth_seed" + std::to_string(s) + ".pgm"),
                           FirstImage(batch.inputs, spec.input));
      }
    }
  });

  for (SweepRow& row : rows) {
    std::vector<double> psnr, loss;
    for (const AttackRun& r : row.runs) {
      psnr.push_back(r.psnr);
      loss.push_back(r.match_loss);
      row.diverged += r.diverged;
    }
    row.psnr_median = Median(psnr);
    row.psnr_min = *std::min_element(psnr.begin(), psnr.end());
    row.psnr_max = *std::max_element(psnr.begin(), psnr.end());
    row.match_loss_median = Median(loss);
  }

  if (cfg.sweep.accuracy) {
    const FlSetup setup = MakeFlSetup(cfg);
    auto accuracy_with = [&](const defenses::DefenseConfig& d) {
      const auto res = fl::RunRoundsInProcess(setup.spec, setup.initial, setup.shards,
                                              setup.testset, MakeRoundConfig(cfg, d));
      return res.back().accuracy;
    };
    const double baseline = accuracy_with(defenses::DefenseConfig{});
    for (SweepRow& row : rows) {
      row.accuracy = row.value == 0 ? baseline : accuracy_with(DefenseFor(axis, row.value, 0));
      row.accuracy_drop_pp = 100.0 * (baseline - *row.accuracy);
    }
  }
  return rows;
}

void WriteSweepCsv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows) {
  out << "axis,value,seeds,psnr_median,psnr_min,psnr_max,match_loss_median,diverged,accuracy,"
         "accuracy_drop_pp\n";
  for (const SweepRow& r : rows) {
    out << SweepAxisName(axis) << ',' << r.value << ',' << r.runs.size() << ',' << r.psnr_median
        << ',' << r.psnr_min << ',' << r.psnr_max << ',' << r.match_loss_median << ','
        << r.diverged << ',';
    if (r.accuracy) out << *r.accuracy;
    out << ',';
    if (r.accuracy_drop_pp) out << *r.accuracy_drop_pp;
    out << '\n';
  }
}

void WriteSweepRunsCsv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows) {
  out << "axis,value,seed,psnr,mse,match_loss,iterations,diverged\n";
  for (const SweepRow& row : rows) {
    for (const AttackRun& r : row.runs) {
      out << SweepAxisName(axis) << ',' << r.value << ',' << r.seed_index << ',' << r.psnr << ','
          << r.mse << ',' << r.match_loss << ',' << r.iterations << ',' << (r.diverged ? 1 : 0)
          << '\n';
    }
  }
}

}  // namespace flpl::cli
