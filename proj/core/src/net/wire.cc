#include "flpl/net/wire.h"

#include <bit>
#include <cstring>

namespace flpl::net {
namespace {

class Writer {
 public:
  void U8(uint8_t v) { out_.push_back(v); }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void U64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void F64(double v) { U64(std::bit_cast<uint64_t>(v)); }
  void Bytes(std::span<const uint8_t> b) {
    U32(static_cast<uint32_t>(b.size()));
    out_.insert(out_.end(), b.begin(), b.end());
  }
  void Doubles(std::span<const double> v) {
    U32(static_cast<uint32_t>(v.size()));
    for (double d : v) F64(d);
  }
  void Blobs(std::span<const Blob> blobs) {
    U32(static_cast<uint32_t>(blobs.size()));
    for (const Blob& b : blobs) Bytes(b);
  }
  Blob Take() { return std::move(out_); }

 private:
  Blob out_;
};

class Reader {
 public:
  Reader(std::span<const uint8_t> in, const char* what) : in_(in), what_(what) {}

  uint8_t U8() { return Take(1)[0]; }
  uint32_t U32() {
    auto b = Take(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  uint64_t U64() {
    auto b = Take(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double F64() { return std::bit_cast<double>(U64()); }
  Blob Bytes() {
    const uint32_t n = U32();
    auto b = Take(n);
    return Blob(b.begin(), b.end());
  }
  std::vector<double> Doubles() {
    const uint32_t n = U32();
    if (static_cast<uint64_t>(n) * 8 > remaining()) Fail("element count exceeds payload");
    std::vector<double> v(n);
    for (double& d : v) d = F64();
    return v;
  }
  std::vector<Blob> Blobs() {
    const uint32_t n = U32();
    if (static_cast<uint64_t>(n) * 4 > remaining()) Fail("blob count exceeds payload");
    std::vector<Blob> v(n);
    for (Blob& b : v) b = Bytes();
    return v;
  }
  size_t remaining() const { return in_.size() - pos_; }
  void Finish() {
    if (remaining() != 0) Fail(std::to_string(remaining()) + " trailing bytes");
  }
  [[noreturn]] void Fail(const std::string& msg) {
    throw TransportError(std::string(what_) + ": " + msg);
  }

 private:
  std::span<const uint8_t> Take(size_t n) {
    if (remaining() < n) Fail("truncated payload");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const uint8_t> in_;
  const char* what_;
  size_t pos_ = 0;
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

MsgType TypeOf(const Message& m) {
  return std::visit(
      Overloaded{[](const Hello&) { return MsgType::kHello; },
                 [](const ModelBroadcast&) { return MsgType::kModelBroadcast; },
                 [](const UpdatePlain&) { return MsgType::kUpdatePlain; },
                 [](const UpdatePaillier&) { return MsgType::kUpdatePaillier; },
                 [](const UpdateCkks&) { return MsgType::kUpdateCkks; },
                 [](const AggregateResult&) { return MsgType::kAggregateResult; },
                 [](const RoundControl&) { return MsgType::kRoundControl; },
                 [](const ErrorMessage&) { return MsgType::kError; }},
      m);
}

const char* MsgTypeName(MsgType t) {
  switch (t) {
    case MsgType::kHello:
      return "Hello";
    case MsgType::kModelBroadcast:
      return "ModelBroadcast";
    case MsgType::kUpdatePlain:
      return "UpdatePlain";
    case MsgType::kUpdatePaillier:
      return "UpdatePaillier";
    case MsgType::kUpdateCkks:
      return "UpdateCkks";
    case MsgType::kAggregateResult:
      return "AggregateResult";
    case MsgType::kRoundControl:
      return "RoundControl";
    case MsgType::kError:
      return "Error";
  }
  return "?";
}

Blob EncodePayload(const Message& m) {
  Writer w;
  std::visit(Overloaded{[&](const Hello& h) {
                          w.U32(h.client_id);
                          w.Bytes(h.key_material);
                        },
                        [&](const ModelBroadcast& b) {
                          w.U32(b.round);
                          w.Doubles(b.params);
                        },
                        [&](const UpdatePlain& u) {
                          w.U32(u.round);
                          w.U32(u.client_id);
                          w.U64(u.n_k);
                          w.Doubles(u.values);
                        },
                        [&](const UpdatePaillier& u) {
                          w.U32(u.round);
                          w.U32(u.client_id);
                          w.U64(u.n_k);
                          w.Blobs(u.ciphertexts);
                        },
                        [&](const UpdateCkks& u) {
                          w.U32(u.round);
                          w.U32(u.client_id);
                          w.U64(u.n_k);
                          w.Blobs(u.ciphertexts);
                        },
                        [&](const AggregateResult& a) {
                          w.U32(a.round);
                          w.U8(static_cast<uint8_t>(a.backend));
                          w.U64(a.total_weight);
                          w.Doubles(a.values);
                          w.Blobs(a.ciphertexts);
                        },
                        [&](const RoundControl& c) {
                          if (c.action == RoundControl::Action::kShutdown) return;
                          w.U8(static_cast<uint8_t>(c.action));
                          w.U32(c.round);
                          w.F64(c.accuracy);
                          w.U64(c.params_hash);
                        },
                        [&](const ErrorMessage& e) {
                          w.Bytes(std::span(reinterpret_cast<const uint8_t*>(e.text.data()),
                                            e.text.size()));
                        }},
             m);
  return w.Take();
}

Message DecodePayload(MsgType type, std::span<const uint8_t> payload) {
  Reader r(payload, MsgTypeName(type));
  Message out;
  switch (type) {
    case MsgType::kHello: {
      Hello h;
      h.client_id = r.U32();
      h.key_material = r.Bytes();
      out = std::move(h);
      break;
    }
    case MsgType::kModelBroadcast: {
      ModelBroadcast b;
      b.round = r.U32();
      b.params = r.Doubles();
      out = std::move(b);
      break;
    }
    case MsgType::kUpdatePlain: {
      UpdatePlain u;
      u.round = r.U32();
      u.client_id = r.U32();
      u.n_k = r.U64();
      u.values = r.Doubles();
      out = std::move(u);
      break;
    }
    case MsgType::kUpdatePaillier:
    case MsgType::kUpdateCkks: {
      const uint32_t round = r.U32(), client_id = r.U32();
      const uint64_t n_k = r.U64();
      std::vector<Blob> cts = r.Blobs();
      if (type == MsgType::kUpdatePaillier) {
        out = UpdatePaillier{round, client_id, n_k, std::move(cts)};
      } else {
        out = UpdateCkks{round, client_id, n_k, std::move(cts)};
      }
      break;
    }
    case MsgType::kAggregateResult: {
      AggregateResult a;
      a.round = r.U32();
      const uint8_t backend = r.U8();
      if (backend > 2) r.Fail("unknown backend " + std::to_string(backend));
      a.backend = static_cast<Backend>(backend);
      a.total_weight = r.U64();
      a.values = r.Doubles();
      a.ciphertexts = r.Blobs();
      out = std::move(a);
      break;
    }
    case MsgType::kRoundControl: {
      RoundControl c;
      if (r.remaining() > 0) {
        const uint8_t action = r.U8();
        if (action != 1 && action != 2) r.Fail("unknown action " + std::to_string(action));
        c.action = static_cast<RoundControl::Action>(action);
        c.round = r.U32();
        c.accuracy = r.F64();
        c.params_hash = r.U64();
      }
      out = c;
      break;
    }
    case MsgType::kError: {
      Blob b = r.Bytes();
      out = ErrorMessage{std::string(b.begin(), b.end())};
      break;
    }
    default:
      throw TransportError("unknown message type 0x" +
                           std::to_string(static_cast<unsigned>(type)));
  }
  r.Finish();
  return out;
}

namespace {

bool IsKnownType(uint8_t t) {
  return (t >= 0x01 && t <= 0x07) || t == 0x7F;
}

}  // namespace

Blob EncodeFrame(const Message& m) {
  Blob payload = EncodePayload(m);
  if (payload.size() > kMaxFrameLength - 1) throw TransportError("EncodeFrame: payload too large");
  const auto len = static_cast<uint32_t>(payload.size() + 1);
  Blob frame;
  frame.reserve(payload.size() + 5);
  for (int shift = 24; shift >= 0; shift -= 8) frame.push_back(static_cast<uint8_t>(len >> shift));
  frame.push_back(static_cast<uint8_t>(TypeOf(m)));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

namespace {

uint32_t ReadLength(std::span<const uint8_t> b) {
  return (uint32_t{b[0]} << 24) | (uint32_t{b[1]} << 16) | (uint32_t{b[2]} << 8) | b[3];
}

void CheckHeader(uint32_t len, uint8_t type, uint32_t max_length) {
  if (len == 0) throw TransportError("frame: zero length");
  if (len > max_length) throw TransportError("frame: length " + std::to_string(len) + " too large");
  if (!IsKnownType(type)) throw TransportError("frame: unknown message type " + std::to_string(type));
}

}  // namespace

Message DecodeFrame(std::span<const uint8_t> bytes) {
  if (bytes.size() < 5) throw TransportError("frame: truncated header");
  const uint32_t len = ReadLength(bytes);
  CheckHeader(len, bytes[4], kMaxFrameLength);
  if (bytes.size() - 4 < len) throw TransportError("frame: truncated payload");
  if (bytes.size() - 4 > len) throw TransportError("frame: trailing bytes");
  return DecodePayload(static_cast<MsgType>(bytes[4]), bytes.subspan(5, len - 1));
}

void FrameReader::Feed(std::span<const uint8_t> chunk) {
  if (start_ > 0 && start_ == buffer_.size()) {
    buffer_.clear();
    start_ = 0;
  }
  buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
}

std::optional<Message> FrameReader::Next() {
  std::span<const uint8_t> avail(buffer_.data() + start_, buffer_.size() - start_);
  if (avail.size() < 5) return std::nullopt;
  const uint32_t len = ReadLength(avail);
  CheckHeader(len, avail[4], max_length_);
  if (avail.size() - 4 < len) return std::nullopt;
  Message m = DecodePayload(static_cast<MsgType>(avail[4]), avail.subspan(5, len - 1));
  start_ += 4 + static_cast<size_t>(len);
  if (start_ > (1u << 20) && start_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(start_));
    start_ = 0;
  }
  return m;
}

}  // namespace flpl::net
