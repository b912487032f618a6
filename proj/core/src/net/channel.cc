#include "flpl/net/channel.h"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>

namespace flpl::net {
namespace {

struct Queue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Blob> frames;
  bool closed = false;
};

class LocalChannel : public Channel {
 public:
  LocalChannel(std::shared_ptr<Queue> in, std::shared_ptr<Queue> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~LocalChannel() override { Close(); }

  void Send(const Message& m) override {
    Blob frame = EncodeFrame(m);
    std::lock_guard<std::mutex> lock(out_->mu);
    if (out_->closed) throw TransportError("send: peer disconnected");
    out_->frames.push_back(std::move(frame));
    out_->cv.notify_one();
  }

  Message Recv() override {
    std::unique_lock<std::mutex> lock(in_->mu);
    in_->cv.wait(lock, [&] { return !in_->frames.empty() || in_->closed; });
    if (in_->frames.empty()) throw TransportError("recv: peer disconnected");
    Blob frame = std::move(in_->frames.front());
    in_->frames.pop_front();
    lock.unlock();
    return DecodeFrame(frame);
  }

  void Close() override {
    for (const auto& q : {in_, out_}) {
      std::lock_guard<std::mutex> lock(q->mu);
      q->closed = true;
      q->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<Queue> in_, out_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> MakeChannelPair() {
  auto a_to_b = std::make_shared<Queue>();
  auto b_to_a = std::make_shared<Queue>();
  return {std::make_unique<LocalChannel>(b_to_a, a_to_b),
          std::make_unique<LocalChannel>(a_to_b, b_to_a)};
}

ServerEndpoint ServerEndpoint::Accept(std::vector<std::unique_ptr<Channel>> channels) {
  ServerEndpoint ep;
  for (auto& ch : channels) {
    Hello hello = Expect<Hello>(ch->Recv(), "handshake");
    if (ep.peers_.count(hello.client_id)) {
      throw TransportError("handshake: duplicate client id " + std::to_string(hello.client_id));
    }
    const uint32_t id = hello.client_id;
    ep.peers_.emplace(id, Peer{std::move(hello), std::move(ch)});
  }
  return ep;
}

std::vector<uint32_t> ServerEndpoint::client_ids() const {
  std::vector<uint32_t> ids;
  for (const auto& [id, peer] : peers_) ids.push_back(id);
  return ids;
}

ServerEndpoint::Peer& ServerEndpoint::At(uint32_t client_id) {
  auto it = peers_.find(client_id);
  if (it == peers_.end()) throw TransportError("unknown client " + std::to_string(client_id));
  return it->second;
}

const Hello& ServerEndpoint::hello(uint32_t client_id) const {
  auto it = peers_.find(client_id);
  if (it == peers_.end()) throw TransportError("unknown client " + std::to_string(client_id));
  return it->second.hello;
}

void ServerEndpoint::SendTo(uint32_t client_id, const Message& m) {
  At(client_id).channel->Send(m);
}

void ServerEndpoint::Broadcast(const Message& m) {
  for (auto& [id, peer] : peers_) peer.channel->Send(m);
}

Message ServerEndpoint::RecvFrom(uint32_t client_id) { return At(client_id).channel->Recv(); }

std::vector<std::pair<uint32_t, Message>> ServerEndpoint::Gather(std::span<const uint32_t> ids) {
  std::vector<uint32_t> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<uint32_t, Message>> out;
  out.reserve(sorted.size());
  for (uint32_t id : sorted) out.emplace_back(id, RecvFrom(id));
  return out;
}

void ServerEndpoint::CloseAll() {
  for (auto& [id, peer] : peers_) peer.channel->Close();
}

}  // namespace flpl::net
