#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flpl/crypto/ckks.h"
#include "flpl/crypto/paillier.h"
#include "flpl/defenses/defenses.h"
#include "flpl/models/model.h"
#include "flpl/net/channel.h"

namespace flpl::fl {

class FlError : public Error {
 public:
  using Error::Error;
};

enum class Aggregation { kPlain, kPaillier, kCkks };

Aggregation ParseAggregation(const std::string& name);
std::string AggregationName(Aggregation a);

struct CryptoSettings {
  int paillier_bits = 2048;
  int precision_bits = 40;
  crypto::CkksParams ckks;
  // Permits Paillier keys below 2048 bits.
  bool insecure = false;
  // Seed from which every client derives the same key pair. Clients only;
  // the server never receives it.
  uint64_t key_seed = 0;
};

struct RoundConfig {
  int num_clients = 3;
  int clients_per_round = 3;
  int rounds = 3;
  int local_epochs = 1;
  double lr = 0.1;
  int batch_size = 8;
  defenses::DefenseConfig defense;
  Aggregation aggregation = Aggregation::kPlain;
  CryptoSettings crypto;
  uint64_t seed = 0;
  // Threads per client for encryption.
  int workers = 1;

  // Throws FlError on inconsistent settings.
  void Validate() const;
};

// Server-side wall-clock per phase, in milliseconds.
struct PhaseTimings {
  double collect_ms = 0;    // Begin sent -> all updates received (local training, encryption)
  double aggregate_ms = 0;  // aggregation on the server
  double finish_ms = 0;     // aggregate sent -> evaluator report (decryption, evaluation)
  double total_ms = 0;
};

struct RoundResult {
  int round = 0;
  std::vector<uint32_t> selected;
  double accuracy = 0.0;
  uint64_t params_hash = 0;
  // Global parameters after the round, as decrypted by the evaluating client.
  std::vector<double> params;
  PhaseTimings timings;
};

// Uniform sample of k ids without replacement, returned sorted.
std::vector<uint32_t> SelectClients(std::span<const uint32_t> pool, int k, uint64_t seed);

struct PlainUpdate {
  uint32_t client_id = 0;
  uint64_t n_k = 0;
  std::vector<double> values;
};
// sum_k (n_k / m) w_k with m = sum_k n_k, summed in client id order.
std::vector<double> AggregatePlain(std::vector<PlainUpdate> updates);

struct PaillierUpdate {
  uint32_t client_id = 0;
  uint64_t n_k = 0;
  std::vector<crypto::PaillierCiphertext> values;
};
struct PaillierAggregate {
  std::vector<crypto::PaillierCiphertext> sum;  // E(sum_k n_k w_k)
  uint64_t total_weight = 0;                    // m; divide after decryption
};
// Coordinate-wise product of E(w_k)^(n_k) mod N^2. Needs only the public key.
PaillierAggregate AggregatePaillier(const crypto::PaillierPublicKey& pk,
                                    std::vector<PaillierUpdate> updates);

struct CkksUpdate {
  uint32_t client_id = 0;
  uint64_t n_k = 0;
  std::vector<crypto::CkksCiphertext> chunks;
};
// sum_k mul_plain_scalar(E(w_k), n_k / m); the result is already averaged.
std::vector<crypto::CkksCiphertext> AggregateCkks(const crypto::CkksContext& ctx,
                                                  std::vector<CkksUpdate> updates);

// Holds only public material: the Paillier public key arrives in the
// clients' Hello and the CKKS context is built from public parameters.
class FedServer {
 public:
  FedServer(std::vector<double> initial_params, RoundConfig config, uint32_t evaluator_id);
  std::vector<RoundResult> Run(net::ServerEndpoint& endpoint);

 private:
  std::vector<double> params_;
  RoundConfig config_;
  uint32_t evaluator_id_;
};

class FedClient {
 public:
  // A client given a test set evaluates the global model after every round
  // and reports to the server.
  FedClient(uint32_t id, models::ModelSpec spec, models::Dataset shard, RoundConfig config,
            std::optional<models::Dataset> testset = std::nullopt);
  ~FedClient();

  void Run(net::Channel& channel);
  // Global parameters after each completed round.
  const std::vector<std::vector<double>>& history() const { return history_; }

 private:
  struct Keys;
  net::Message MakeUpdate(uint32_t round, const std::vector<double>& global);
  std::vector<double> ReadAggregate(const net::AggregateResult& agg) const;

  uint32_t id_;
  models::ModelSpec spec_;
  models::Dataset shard_;
  RoundConfig config_;
  std::optional<models::Dataset> testset_;
  std::unique_ptr<Keys> keys_;
  std::vector<std::vector<double>> history_;
};

// Runs server and clients in one process over the in-process bus; clients
// run on their own threads. Client ids are 0..num_clients-1 and client 0
// evaluates on `testset`.
std::vector<RoundResult> RunRoundsInProcess(const models::ModelSpec& spec,
                                            const models::ModelParams& initial,
                                            const std::vector<models::Dataset>& shards,
                                            const models::Dataset& testset,
                                            const RoundConfig& config);

// Same, but every client connects to a server socket on 127.0.0.1.
std::vector<RoundResult> RunRoundsTcp(const models::ModelSpec& spec,
                                      const models::ModelParams& initial,
                                      const std::vector<models::Dataset>& shards,
                                      const models::Dataset& testset, const RoundConfig& config,
                                      uint16_t port = 0);

// CSV with header; timing columns are wall-clock and optional so that runs
// can be compared byte for byte.
void WriteRoundsCsv(std::ostream& out, const std::vector<RoundResult>& results,
                    const RoundConfig& config, bool include_timings);

}  // namespace flpl::fl
