#include "flpl/fl/fedavg.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "flpl/common/hash.h"
#include "flpl/common/rng.h"
#include "flpl/net/tcp.h"

namespace flpl::fl {
namespace {

using Clock = std::chrono::steady_clock;

double MillisSince(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

net::Backend ToBackend(Aggregation a) {
  switch (a) {
    case Aggregation::kPlain:
      return net::Backend::kPlain;
    case Aggregation::kPaillier:
      return net::Backend::kPaillier;
    case Aggregation::kCkks:
      return net::Backend::kCkks;
  }
  throw FlError("unknown aggregation");
}

uint64_t TotalWeight(const auto& updates) {
  uint64_t m = 0;
  for (const auto& u : updates) {
    if (u.n_k == 0) throw FlError("aggregate: client " + std::to_string(u.client_id) +
                                  " reported n_k = 0");
    m += u.n_k;
  }
  return m;
}

template <typename U>
void SortAndCheck(std::vector<U>& updates, const char* context) {
  if (updates.empty()) throw FlError(std::string(context) + ": no updates");
  std::sort(updates.begin(), updates.end(),
            [](const U& a, const U& b) { return a.client_id < b.client_id; });
  for (size_t i = 1; i < updates.size(); ++i) {
    if (updates[i].client_id == updates[i - 1].client_id) {
      throw FlError(std::string(context) + ": duplicate client " +
                    std::to_string(updates[i].client_id));
    }
  }
}

template <typename U>
size_t CommonLength(const std::vector<U>& updates, auto member, const char* context) {
  const size_t n = (updates.front().*member).size();
  for (const U& u : updates) {
    if ((u.*member).size() != n) {
      throw FlError(std::string(context) + ": client " + std::to_string(u.client_id) +
                    " sent " + std::to_string((u.*member).size()) + " entries, expected " +
                    std::to_string(n));
    }
  }
  return n;
}

}  // namespace

Aggregation ParseAggregation(const std::string& name) {
  if (name == "plain") return Aggregation::kPlain;
  if (name == "paillier") return Aggregation::kPaillier;
  if (name == "ckks") return Aggregation::kCkks;
  throw FlError("unknown aggregation '" + name + "' (expected plain, paillier or ckks)");
}

std::string AggregationName(Aggregation a) {
  switch (a) {
    case Aggregation::kPlain:
      return "plain";
    case Aggregation::kPaillier:
      return "paillier";
    case Aggregation::kCkks:
      return "ckks";
  }
  return "?";
}

void RoundConfig::Validate() const {
  if (num_clients < 1) throw FlError("num_clients must be >= 1");
  if (clients_per_round < 1 || clients_per_round > num_clients) {
    throw FlError("clients_per_round must be in [1, num_clients], got " +
                  std::to_string(clients_per_round));
  }
  if (rounds < 1) throw FlError("rounds must be >= 1");
  if (local_epochs < 1) throw FlError("local_epochs must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw FlError("lr must be positive");
  if (batch_size < 1) throw FlError("batch_size must be >= 1");
  if (workers < 1) throw FlError("workers must be >= 1");
  if (crypto.precision_bits < 1 || crypto.precision_bits > 60) {
    throw FlError("precision_bits must be in [1, 60]");
  }
  if (aggregation == Aggregation::kPaillier &&
      !crypto::IsSupportedPaillierBits(crypto.paillier_bits)) {
    throw FlError("unsupported Paillier key size " + std::to_string(crypto.paillier_bits));
  }
  defense.Validate();
}

std::vector<uint32_t> SelectClients(std::span<const uint32_t> pool, int k, uint64_t seed) {
  if (k < 1 || k > static_cast<int>(pool.size())) {
    throw FlError("SelectClients: cannot pick " + std::to_string(k) + " of " +
                  std::to_string(pool.size()));
  }
  std::vector<uint32_t> ids(pool.begin(), pool.end());
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (int i = 0; i < k; ++i) {
    const size_t j = i + rng.UniformInt(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<double> AggregatePlain(std::vector<PlainUpdate> updates) {
  SortAndCheck(updates, "AggregatePlain");
  const size_t n = CommonLength(updates, &PlainUpdate::values, "AggregatePlain");
  const double m = static_cast<double>(TotalWeight(updates));
  std::vector<double> out(n, 0.0);
  for (const PlainUpdate& u : updates) {
    const double w = static_cast<double>(u.n_k) / m;
    for (size_t i = 0; i < n; ++i) out[i] += w * u.values[i];
  }
  return out;
}

PaillierAggregate AggregatePaillier(const crypto::PaillierPublicKey& pk,
                                    std::vector<PaillierUpdate> updates) {
  SortAndCheck(updates, "AggregatePaillier");
  const size_t n = CommonLength(updates, &PaillierUpdate::values, "AggregatePaillier");
  PaillierAggregate agg;
  agg.total_weight = TotalWeight(updates);
  agg.sum.resize(n);
  for (size_t i = 0; i < n; ++i) {
    mpz_class acc = 1;
    for (const PaillierUpdate& u : updates) {
      mpz_class term;
      const mpz_class weight(static_cast<unsigned long>(u.n_k));
      mpz_powm(term.get_mpz_t(), u.values[i].c.get_mpz_t(), weight.get_mpz_t(),
               pk.n_squared.get_mpz_t());
      acc = acc * term % pk.n_squared;
    }
    agg.sum[i].c = std::move(acc);
  }
  return agg;
}

std::vector<crypto::CkksCiphertext> AggregateCkks(const crypto::CkksContext& ctx,
                                                  std::vector<CkksUpdate> updates) {
  SortAndCheck(updates, "AggregateCkks");
  const size_t n = CommonLength(updates, &CkksUpdate::chunks, "AggregateCkks");
  const double m = static_cast<double>(TotalWeight(updates));
  std::vector<crypto::CkksCiphertext> out;
  out.reserve(n);
  for (size_t c = 0; c < n; ++c) {
    crypto::CkksCiphertext acc;
    for (size_t k = 0; k < updates.size(); ++k) {
      const double w = static_cast<double>(updates[k].n_k) / m;
      crypto::CkksCiphertext term = crypto::CkksMulPlainScalar(ctx, updates[k].chunks[c], w);
      if (k == 0) {
        acc = std::move(term);
      } else {
        crypto::CkksAddInPlace(ctx, acc, term);
      }
    }
    out.push_back(std::move(acc));
  }
  return out;
}

FedServer::FedServer(std::vector<double> initial_params, RoundConfig config,
                     uint32_t evaluator_id)
    : params_(std::move(initial_params)), config_(std::move(config)), evaluator_id_(evaluator_id) {
  config_.Validate();
  config_.crypto.key_seed = 0;  // the server never sees client key material
}

std::vector<RoundResult> FedServer::Run(net::ServerEndpoint& endpoint) {
  const std::vector<uint32_t> ids = endpoint.client_ids();
  if (static_cast<int>(ids.size()) != config_.num_clients) {
    throw FlError("FedServer: expected " + std::to_string(config_.num_clients) +
                  " clients, got " + std::to_string(ids.size()));
  }
  if (std::find(ids.begin(), ids.end(), evaluator_id_) == ids.end()) {
    throw FlError("FedServer: evaluator client " + std::to_string(evaluator_id_) +
                  " is not connected");
  }

  std::optional<crypto::PaillierPublicKey> paillier_pk;
  std::optional<crypto::CkksContext> ckks;
  if (config_.aggregation == Aggregation::kPaillier) {
    for (uint32_t id : ids) {
      crypto::PaillierPublicKey pk = crypto::DeserializePublicKey(endpoint.hello(id).key_material);
      if (paillier_pk && !(pk == *paillier_pk)) {
        throw FlError("FedServer: client " + std::to_string(id) +
                      " announced a different Paillier public key");
      }
      paillier_pk = std::move(pk);
    }
  } else if (config_.aggregation == Aggregation::kCkks) {
    ckks.emplace(config_.crypto.ckks);
  }

  endpoint.Broadcast(net::ModelBroadcast{0, params_});
  std::vector<RoundResult> results;
  for (int r = 1; r <= config_.rounds; ++r) {
    const uint32_t round = static_cast<uint32_t>(r);
    RoundResult result;
    result.round = r;
    result.selected =
        SelectClients(ids, config_.clients_per_round, DeriveSeed(config_.seed, 0x5e1ec7, round));

    const auto t_begin = Clock::now();
    for (uint32_t id : result.selected) {
      endpoint.SendTo(id, net::RoundControl{net::RoundControl::Action::kBegin, round});
    }
    auto gathered = endpoint.Gather(result.selected);
    result.timings.collect_ms = MillisSince(t_begin);

    const auto t_agg = Clock::now();
    net::AggregateResult agg;
    agg.round = round;
    agg.backend = ToBackend(config_.aggregation);
    const std::string where = "round " + std::to_string(r) + " update";
    switch (config_.aggregation) {
      case Aggregation::kPlain: {
        std::vector<PlainUpdate> updates;
        for (auto& [id, msg] : gathered) {
          auto u = net::Expect<net::UpdatePlain>(std::move(msg), where.c_str());
          if (u.round != round || u.client_id != id) throw FlError(where + ": stale or misrouted");
          updates.push_back({u.client_id, u.n_k, std::move(u.values)});
          agg.total_weight += u.n_k;
        }
        agg.values = AggregatePlain(std::move(updates));
        params_ = agg.values;
        break;
      }
      case Aggregation::kPaillier: {
        std::vector<PaillierUpdate> updates;
        for (auto& [id, msg] : gathered) {
          auto u = net::Expect<net::UpdatePaillier>(std::move(msg), where.c_str());
          if (u.round != round || u.client_id != id) throw FlError(where + ": stale or misrouted");
          PaillierUpdate pu{u.client_id, u.n_k, {}};
          pu.values.reserve(u.ciphertexts.size());
          for (const net::Blob& b : u.ciphertexts) {
            size_t offset = 0;
            pu.values.push_back(crypto::ReadCiphertext(b, offset));
            if (offset != b.size()) throw FlError(where + ": trailing ciphertext bytes");
          }
          updates.push_back(std::move(pu));
        }
        PaillierAggregate sum = AggregatePaillier(*paillier_pk, std::move(updates));
        agg.total_weight = sum.total_weight;
        agg.ciphertexts.reserve(sum.sum.size());
        for (const auto& c : sum.sum) {
          net::Blob b;
          crypto::AppendCiphertext(c, b);
          agg.ciphertexts.push_back(std::move(b));
        }
        break;
      }
      case Aggregation::kCkks: {
        std::vector<CkksUpdate> updates;
        for (auto& [id, msg] : gathered) {
          auto u = net::Expect<net::UpdateCkks>(std::move(msg), where.c_str());
          if (u.round != round || u.client_id != id) throw FlError(where + ": stale or misrouted");
          CkksUpdate cu{u.client_id, u.n_k, {}};
          for (const net::Blob& b : u.ciphertexts) {
            cu.chunks.push_back(crypto::CkksDeserialize(*ckks, b));
          }
          updates.push_back(std::move(cu));
          agg.total_weight += u.n_k;
        }
        for (const auto& c : AggregateCkks(*ckks, std::move(updates))) {
          agg.ciphertexts.push_back(crypto::CkksSerialize(*ckks, c));
        }
        break;
      }
    }
    result.timings.aggregate_ms = MillisSince(t_agg);

    const auto t_finish = Clock::now();
    endpoint.Broadcast(agg);
    const std::string report_ctx = "round " + std::to_string(r) + " report";
    auto report = net::Expect<net::RoundControl>(endpoint.RecvFrom(evaluator_id_),
                                                 report_ctx.c_str());
    if (report.action != net::RoundControl::Action::kReport || report.round != round) {
      throw FlError(report_ctx + ": unexpected control message");
    }
    result.timings.finish_ms = MillisSince(t_finish);
    result.timings.total_ms = MillisSince(t_begin);
    result.accuracy = report.accuracy;
    result.params_hash = report.params_hash;
    results.push_back(std::move(result));
  }
  endpoint.Broadcast(net::RoundControl{});
  return results;
}

struct FedClient::Keys {
  std::optional<crypto::PaillierKeyPair> paillier;
  std::optional<crypto::FixedPointCodec> codec;
  std::optional<crypto::CkksContext> ckks;
  std::optional<crypto::CkksKeys> ckks_keys;
};

FedClient::FedClient(uint32_t id, models::ModelSpec spec, models::Dataset shard,
                     RoundConfig config, std::optional<models::Dataset> testset)
    : id_(id),
      spec_(std::move(spec)),
      shard_(std::move(shard)),
      config_(std::move(config)),
      testset_(std::move(testset)),
      keys_(std::make_unique<Keys>()) {
  config_.Validate();
  if (shard_.size() < 1) throw FlError("FedClient: empty shard");
  const uint64_t key_seed = config_.crypto.key_seed;
  if (config_.aggregation == Aggregation::kPaillier) {
    keys_->paillier = crypto::PaillierKeygen(config_.crypto.paillier_bits,
                                             DeriveSeed(key_seed, 0x9a11), config_.crypto.insecure);
    keys_->codec.emplace(keys_->paillier->pk.n, config_.crypto.precision_bits);
  } else if (config_.aggregation == Aggregation::kCkks) {
    keys_->ckks.emplace(config_.crypto.ckks);
    keys_->ckks_keys = crypto::CkksKeygen(*keys_->ckks, DeriveSeed(key_seed, 0xc6c5));
  }
}

FedClient::~FedClient() = default;

net::Message FedClient::MakeUpdate(uint32_t round, const std::vector<double>& global) {
  const ParamLayout layout = spec_.Layout();
  models::ModelParams current{layout, global};
  models::TrainOptions opts;
  opts.epochs = config_.local_epochs;
  opts.lr = config_.lr;
  opts.batch_size = config_.batch_size;
  opts.seed = DeriveSeed(config_.seed, 0x7a1, round, id_);
  auto [trained, n_k] = models::LocalTrain(spec_, current, shard_, opts);

  std::vector<double> delta(global.size());
  for (size_t i = 0; i < delta.size(); ++i) delta[i] = trained.values[i] - global[i];
  defenses::DefenseConfig defense = config_.defense;
  defense.seed = DeriveSeed(config_.defense.seed, 0xdef, round, id_);
  const GradientVector defended = defenses::ApplyDefense(GradientVector(layout, delta), defense);
  std::vector<double> shared(global.size());
  for (size_t i = 0; i < shared.size(); ++i) shared[i] = global[i] + defended.values[i];

  const uint64_t nk = static_cast<uint64_t>(n_k);
  const uint64_t enc_seed = DeriveSeed(config_.seed, 0xe7c, round, id_);
  switch (config_.aggregation) {
    case Aggregation::kPlain:
      return net::UpdatePlain{round, id_, nk, std::move(shared)};
    case Aggregation::kPaillier: {
      double max_abs = 0;
      for (double v : shared) max_abs = std::max(max_abs, std::abs(v));
      // The server multiplies by n_k and sums over at most num_clients.
      keys_->codec->CheckHeadroom(max_abs, config_.num_clients, static_cast<double>(nk));
      auto cts = crypto::PaillierEncryptVector(keys_->paillier->pk, shared, *keys_->codec,
                                               enc_seed, config_.workers);
      net::UpdatePaillier u{round, id_, nk, {}};
      u.ciphertexts.reserve(cts.size());
      for (const auto& c : cts) {
        net::Blob b;
        crypto::AppendCiphertext(c, b);
        u.ciphertexts.push_back(std::move(b));
      }
      return u;
    }
    case Aggregation::kCkks: {
      auto cts = crypto::CkksEncryptVector(*keys_->ckks, keys_->ckks_keys->public_key, shared,
                                           enc_seed, config_.workers);
      net::UpdateCkks u{round, id_, nk, {}};
      for (const auto& c : cts) u.ciphertexts.push_back(crypto::CkksSerialize(*keys_->ckks, c));
      return u;
    }
  }
  throw FlError("unknown aggregation");
}

std::vector<double> FedClient::ReadAggregate(const net::AggregateResult& agg) const {
  if (agg.backend != ToBackend(config_.aggregation)) {
    throw FlError("aggregate backend does not match configuration");
  }
  const size_t n = static_cast<size_t>(spec_.Layout().size());
  std::vector<double> out;
  switch (config_.aggregation) {
    case Aggregation::kPlain:
      out = agg.values;
      break;
    case Aggregation::kPaillier: {
      std::vector<crypto::PaillierCiphertext> cts;
      cts.reserve(agg.ciphertexts.size());
      for (const net::Blob& b : agg.ciphertexts) {
        size_t offset = 0;
        cts.push_back(crypto::ReadCiphertext(b, offset));
      }
      out = crypto::PaillierDecryptVector(keys_->paillier->sk, cts, *keys_->codec,
                                          static_cast<double>(agg.total_weight), config_.workers);
      break;
    }
    case Aggregation::kCkks: {
      std::vector<crypto::CkksCiphertext> cts;
      for (const net::Blob& b : agg.ciphertexts) {
        cts.push_back(crypto::CkksDeserialize(*keys_->ckks, b));
      }
      out = crypto::CkksDecryptVector(*keys_->ckks, keys_->ckks_keys->secret, cts, n);
      break;
    }
  }
  if (out.size() != n) {
    throw FlError("aggregate carries " + std::to_string(out.size()) + " parameters, expected " +
                  std::to_string(n));
  }
  return out;
}

void FedClient::Run(net::Channel& channel) {
  net::Hello hello{id_, {}};
  if (keys_->paillier) hello.key_material = crypto::SerializePublicKey(keys_->paillier->pk);
  channel.Send(hello);
  std::vector<double> global =
      net::Expect<net::ModelBroadcast>(channel.Recv(), "initial model").params;
  if (static_cast<int64_t>(global.size()) != spec_.Layout().size()) {
    throw FlError("initial model has " + std::to_string(global.size()) + " parameters");
  }
  for (;;) {
    net::Message m = channel.Recv();
    try {
      if (auto* ctl = std::get_if<net::RoundControl>(&m)) {
        if (ctl->action == net::RoundControl::Action::kShutdown) return;
        if (ctl->action != net::RoundControl::Action::kBegin) {
          throw FlError("client: unexpected control action");
        }
        channel.Send(MakeUpdate(ctl->round, global));
      } else if (auto* agg = std::get_if<net::AggregateResult>(&m)) {
        global = ReadAggregate(*agg);
        history_.push_back(global);
        if (testset_) {
          const double acc =
              models::EvaluateAccuracy(spec_, {spec_.Layout(), global}, *testset_);
          channel.Send(net::RoundControl{net::RoundControl::Action::kReport, agg->round, acc,
                                         HashDoubles(global)});
        }
      } else {
        net::Expect<net::RoundControl>(std::move(m), "client");
      }
    } catch (const std::exception& e) {
      channel.Send(net::ErrorMessage{"client " + std::to_string(id_) + ": " + e.what()});
      throw;
    }
  }
}

namespace {

// Builds all clients up front (so key generation errors surface before any
// connection is made), runs each on its own thread and the server on the
// calling thread.
std::vector<RoundResult> RunSession(
    const models::ModelSpec& spec, const models::ModelParams& initial,
    const std::vector<models::Dataset>& shards, const models::Dataset& testset,
    const RoundConfig& config, const std::function<std::unique_ptr<net::Channel>(size_t)>& connect,
    const std::function<std::vector<std::unique_ptr<net::Channel>>()>& accept) {
  config.Validate();
  if (static_cast<int>(shards.size()) != config.num_clients) {
    throw FlError("expected " + std::to_string(config.num_clients) + " shards, got " +
                  std::to_string(shards.size()));
  }
  if (initial.size() != spec.Layout().size()) throw FlError("initial parameters do not fit model");
  std::vector<std::unique_ptr<FedClient>> clients;
  for (size_t i = 0; i < shards.size(); ++i) {
    std::optional<models::Dataset> test;
    if (i == 0) test = testset;
    clients.push_back(std::make_unique<FedClient>(static_cast<uint32_t>(i), spec, shards[i],
                                                  config, std::move(test)));
  }

  std::vector<std::exception_ptr> errors(clients.size());
  std::vector<std::thread> threads;
  for (size_t i = 0; i < clients.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        std::unique_ptr<net::Channel> ch = connect(i);
        clients[i]->Run(*ch);
        ch->Close();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }

  std::vector<RoundResult> results;
  std::exception_ptr server_error;
  std::optional<net::ServerEndpoint> endpoint;
  try {
    endpoint = net::ServerEndpoint::Accept(accept());
    FedServer server(initial.values, config, 0);
    results = server.Run(*endpoint);
  } catch (...) {
    server_error = std::current_exception();
  }
  if (endpoint) endpoint->CloseAll();
  for (std::thread& t : threads) t.join();
  // A client's own failure explains a server-side error better than the
  // resulting transport message.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (server_error) std::rethrow_exception(server_error);

  const auto& history = clients[0]->history();
  for (size_t r = 0; r < results.size() && r < history.size(); ++r) results[r].params = history[r];
  return results;
}

}  // namespace

std::vector<RoundResult> RunRoundsInProcess(const models::ModelSpec& spec,
                                            const models::ModelParams& initial,
                                            const std::vector<models::Dataset>& shards,
                                            const models::Dataset& testset,
                                            const RoundConfig& config) {
  std::vector<std::unique_ptr<net::Channel>> server_side, client_side;
  for (size_t i = 0; i < shards.size(); ++i) {
    auto [a, b] = net::MakeChannelPair();
    server_side.push_back(std::move(a));
    client_side.push_back(std::move(b));
  }
  return RunSession(
      spec, initial, shards, testset, config,
      [&](size_t i) { return std::move(client_side[i]); },
      [&] { return std::move(server_side); });
}

std::vector<RoundResult> RunRoundsTcp(const models::ModelSpec& spec,
                                      const models::ModelParams& initial,
                                      const std::vector<models::Dataset>& shards,
                                      const models::Dataset& testset, const RoundConfig& config,
                                      uint16_t port) {
  net::TcpListener listener("127.0.0.1", port);
  const uint16_t bound = listener.port();
  return RunSession(
      spec, initial, shards, testset, config,
      [&](size_t) { return net::TcpConnect("127.0.0.1", bound); },
      [&] {
        std::vector<std::unique_ptr<net::Channel>> channels;
        for (size_t i = 0; i < shards.size(); ++i) channels.push_back(listener.Accept());
        return channels;
      });
}

void WriteRoundsCsv(std::ostream& out, const std::vector<RoundResult>& results,
                    const RoundConfig& config, bool include_timings) {
  out << "round,backend,defense,clients,accuracy,params_hash";
  if (include_timings) out << ",collect_ms,aggregate_ms,finish_ms,total_ms";
  out << "\n";
  const std::string backend = AggregationName(config.aggregation);
  const std::string defense = config.defense.Label();
  for (const RoundResult& r : results) {
    std::ostringstream line;
    line << r.round << ',' << backend << ',' << defense << ',' << r.selected.size() << ','
         << std::setprecision(17) << r.accuracy << ',' << std::hex << std::setw(16)
         << std::setfill('0') << r.params_hash << std::dec << std::setfill(' ');
    if (include_timings) {
      line << std::fixed << std::setprecision(3) << ',' << r.timings.collect_ms << ','
           << r.timings.aggregate_ms << ',' << r.timings.finish_ms << ',' << r.timings.total_ms;
    }
    out << line.str() << "\n";
  }
}

}  // namespace flpl::fl
