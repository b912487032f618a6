#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flpl/common/error.h"

namespace flpl::net {

class TransportError : public Error {
 public:
  using Error::Error;
};

enum class MsgType : uint8_t {
  kHello = 0x01,
  kModelBroadcast = 0x02,
  kUpdatePlain = 0x03,
  kUpdatePaillier = 0x04,
  kUpdateCkks = 0x05,
  kAggregateResult = 0x06,
  kRoundControl = 0x07,
  kError = 0x7F,
};

using Blob = std::vector<uint8_t>;

// First message on every connection.
struct Hello {
  uint32_t client_id = 0;
  Blob key_material;  // public key bytes for the aggregation backend, may be empty
  bool operator==(const Hello&) const = default;
};

struct ModelBroadcast {
  uint32_t round = 0;
  std::vector<double> params;
  bool operator==(const ModelBroadcast&) const = default;
};

struct UpdatePlain {
  uint32_t round = 0;
  uint32_t client_id = 0;
  uint64_t n_k = 0;
  std::vector<double> values;
  bool operator==(const UpdatePlain&) const = default;
};

// Ciphertexts are carried as the byte encodings defined by the crypto
// modules, one blob per ciphertext.
struct UpdatePaillier {
  uint32_t round = 0;
  uint32_t client_id = 0;
  uint64_t n_k = 0;
  std::vector<Blob> ciphertexts;
  bool operator==(const UpdatePaillier&) const = default;
};

struct UpdateCkks {
  uint32_t round = 0;
  uint32_t client_id = 0;
  uint64_t n_k = 0;
  std::vector<Blob> ciphertexts;
  bool operator==(const UpdateCkks&) const = default;
};

enum class Backend : uint8_t { kPlain = 0, kPaillier = 1, kCkks = 2 };

// The server's aggregate for a round. Plain results carry the averaged
// parameters in `values`; encrypted ones carry ciphertexts and the weight
// total m_i that clients divide by after decryption (Paillier) or that was
// already applied (CKKS).
struct AggregateResult {
  uint32_t round = 0;
  Backend backend = Backend::kPlain;
  uint64_t total_weight = 0;
  std::vector<double> values;
  std::vector<Blob> ciphertexts;
  bool operator==(const AggregateResult&) const = default;
};

// Round lifecycle. An empty payload means shutdown.
struct RoundControl {
  enum class Action : uint8_t { kShutdown = 0, kBegin = 1, kReport = 2 };
  Action action = Action::kShutdown;
  uint32_t round = 0;
  double accuracy = 0.0;     // kReport only
  uint64_t params_hash = 0;  // kReport only
  bool operator==(const RoundControl&) const = default;
};

struct ErrorMessage {
  std::string text;
  bool operator==(const ErrorMessage&) const = default;
};

using Message = std::variant<Hello, ModelBroadcast, UpdatePlain, UpdatePaillier, UpdateCkks,
                             AggregateResult, RoundControl, ErrorMessage>;

MsgType TypeOf(const Message& m);
const char* MsgTypeName(MsgType t);

inline constexpr uint32_t kMaxFrameLength = 0x7FFFFFFFu;  // payload <= 2^31 - 2

// Little-endian payload schemas (documented in docs/wire_format.md).
Blob EncodePayload(const Message& m);
Message DecodePayload(MsgType type, std::span<const uint8_t> payload);

// Frame: 4-byte big-endian length (payload size + 1), 1 type byte, payload.
Blob EncodeFrame(const Message& m);
// Decodes exactly one complete frame. Throws TransportError on truncation,
// trailing bytes, oversize length, unknown type or a malformed payload.
Message DecodeFrame(std::span<const uint8_t> bytes);

// Reassembles frames from arbitrary stream chunks.
class FrameReader {
 public:
  explicit FrameReader(uint32_t max_length = kMaxFrameLength) : max_length_(max_length) {}

  void Feed(std::span<const uint8_t> chunk);
  // Next complete message, if any. Throws TransportError on a bad frame.
  std::optional<Message> Next();
  size_t buffered() const { return buffer_.size() - start_; }

 private:
  uint32_t max_length_;
  Blob buffer_;
  size_t start_ = 0;
};

}  // namespace flpl::net
