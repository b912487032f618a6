#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "flpl/net/wire.h"

namespace flpl::net {

// A bidirectional, ordered message pipe between two participants. Send may be
// called concurrently with Recv. Recv throws TransportError once the peer is
// gone and no messages remain.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void Send(const Message& m) = 0;
  virtual Message Recv() = 0;
  virtual void Close() = 0;
};

// Two connected in-process endpoints. Messages cross as encoded frames, so
// the bus exercises the same codec as TCP.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> MakeChannelPair();

// Server side of a session: one channel per client, keyed by client id.
class ServerEndpoint {
 public:
  // Reads the Hello from every channel to learn client ids. Throws
  // TransportError on a missing Hello or a duplicate id.
  static ServerEndpoint Accept(std::vector<std::unique_ptr<Channel>> channels);

  std::vector<uint32_t> client_ids() const;
  const Hello& hello(uint32_t client_id) const;

  void SendTo(uint32_t client_id, const Message& m);
  void Broadcast(const Message& m);
  Message RecvFrom(uint32_t client_id);
  // One message from each listed client, received and returned in ascending
  // client id order regardless of when each client sent.
  std::vector<std::pair<uint32_t, Message>> Gather(std::span<const uint32_t> ids);
  void CloseAll();

 private:
  struct Peer {
    Hello hello;
    std::unique_ptr<Channel> channel;
  };
  Peer& At(uint32_t client_id);
  std::map<uint32_t, Peer> peers_;
};

// Expects a message of type T; an ErrorMessage from the peer or any other
// type becomes a TransportError.
template <typename T>
T Expect(Message m, const char* context) {
  if (auto* v = std::get_if<T>(&m)) return std::move(*v);
  if (auto* e = std::get_if<ErrorMessage>(&m)) {
    throw TransportError(std::string(context) + ": peer reported: " + e->text);
  }
  throw TransportError(std::string(context) + ": unexpected " + MsgTypeName(TypeOf(m)));
}

}  // namespace flpl::net
