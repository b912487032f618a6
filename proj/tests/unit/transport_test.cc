#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "flpl/common/hash.h"
#include "flpl/common/rng.h"
#include "flpl/net/channel.h"
#include "flpl/net/tcp.h"

namespace flpl::net {
namespace {

Blob RandomBlob(Rng& rng, size_t max_len) {
  Blob b(rng.UniformInt(max_len + 1));
  for (uint8_t& x : b) x = static_cast<uint8_t>(rng.NextU64());
  return b;
}

std::vector<double> RandomDoubles(Rng& rng, size_t max_len) {
  std::vector<double> v(rng.UniformInt(max_len + 1));
  for (double& x : v) x = rng.Normal(0.0, 100.0);
  return v;
}

std::vector<Blob> RandomBlobs(Rng& rng) {
  std::vector<Blob> v(rng.UniformInt(5));
  for (Blob& b : v) b = RandomBlob(rng, 64);
  return v;
}

Message RandomMessage(Rng& rng) {
  const uint32_t round = static_cast<uint32_t>(rng.NextU64());
  const uint32_t id = static_cast<uint32_t>(rng.NextU64());
  switch (rng.UniformInt(8)) {
    case 0:
      return Hello{id, RandomBlob(rng, 100)};
    case 1:
      return ModelBroadcast{round, RandomDoubles(rng, 50)};
    case 2:
      return UpdatePlain{round, id, rng.NextU64(), RandomDoubles(rng, 50)};
    case 3:
      return UpdatePaillier{round, id, rng.NextU64(), RandomBlobs(rng)};
    case 4:
      return UpdateCkks{round, id, rng.NextU64(), RandomBlobs(rng)};
    case 5: {
      AggregateResult a{round, static_cast<Backend>(rng.UniformInt(3)), rng.NextU64(),
                        RandomDoubles(rng, 20), RandomBlobs(rng)};
      return a;
    }
    case 6: {
      if (rng.UniformInt(3) == 0) return RoundControl{};
      RoundControl c;
      c.action = rng.UniformInt(2) ? RoundControl::Action::kBegin : RoundControl::Action::kReport;
      c.round = round;
      c.accuracy = rng.Uniform();
      c.params_hash = rng.NextU64();
      return c;
    }
    default: {
      Blob b = RandomBlob(rng, 40);
      return ErrorMessage{std::string(b.begin(), b.end())};
    }
  }
}

TEST(FrameTest, HelloRoundTrips) {
  Message m = Hello{7, {}};
  EXPECT_EQ(DecodeFrame(EncodeFrame(m)), m);
  Blob f = EncodeFrame(m);
  EXPECT_EQ(f, (Blob{0, 0, 0, 9, 0x01, 7, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(FrameTest, EmptyRoundControlIsFiveBytes) {
  Blob f = EncodeFrame(RoundControl{});
  EXPECT_EQ(f, (Blob{0, 0, 0, 1, 0x07}));
  EXPECT_EQ(DecodeFrame(f), Message(RoundControl{}));
}

TEST(FrameTest, PayloadIsLittleEndian) {
  Blob f = EncodeFrame(UpdatePlain{0x01020304, 5, 6, {1.0}});
  // length, type, round LE, client LE, n_k LE, count LE, 1.0 LE
  Blob expected{0, 0, 0, 29, 0x03, 4, 3, 2, 1, 5, 0, 0, 0, 6, 0, 0, 0, 0, 0, 0, 0,
                1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
  EXPECT_EQ(f, expected);
}

TEST(FrameTest, RandomMessagesRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 5000; ++i) {
    Message m = RandomMessage(rng);
    Blob f = EncodeFrame(m);
    EXPECT_EQ(f.size(), EncodePayload(m).size() + 5);
    EXPECT_EQ(DecodeFrame(f), m);
  }
}

TEST(FrameTest, MalformedFramesAreRejected) {
  Blob f = EncodeFrame(UpdatePlain{1, 2, 3, {1.0, 2.0}});
  EXPECT_THROW(DecodeFrame(std::span(f).first(f.size() - 1)), TransportError);
  Blob trailing = f;
  trailing.push_back(0);
  EXPECT_THROW(DecodeFrame(trailing), TransportError);
  Blob unknown = f;
  unknown[4] = 0x42;
  EXPECT_THROW(DecodeFrame(unknown), TransportError);
  Blob zero{0, 0, 0, 0, 0x01};
  EXPECT_THROW(DecodeFrame(zero), TransportError);
  Blob oversize{0x80, 0, 0, 0, 0x01};
  EXPECT_THROW(DecodeFrame(oversize), TransportError);
  Blob bad_action{0, 0, 0, 22, 0x07, 9};
  bad_action.resize(26);
  EXPECT_THROW(DecodeFrame(bad_action), TransportError);
}

TEST(FrameTest, FuzzedInputNeverCrashes) {
  Rng rng(2);
  int decoded = 0;
  for (int i = 0; i < 100000; ++i) {
    Blob b;
    if (i % 2 == 0) {
      b = RandomBlob(rng, 48);
      if (b.size() >= 5 && rng.UniformInt(2)) {
        // Plausible header to reach the payload parsers.
        const uint32_t len = static_cast<uint32_t>(b.size() - 4);
        b[0] = 0;
        b[1] = 0;
        b[2] = static_cast<uint8_t>(len >> 8);
        b[3] = static_cast<uint8_t>(len);
        const uint8_t types[] = {1, 2, 3, 4, 5, 6, 7, 0x7f};
        b[4] = types[rng.UniformInt(8)];
      }
    } else {
      b = EncodeFrame(RandomMessage(rng));
      const int flips = 1 + static_cast<int>(rng.UniformInt(3));
      for (int k = 0; k < flips; ++k) b[rng.UniformInt(b.size())] ^= 1u << rng.UniformInt(8);
    }
    try {
      DecodeFrame(b);
      ++decoded;
    } catch (const TransportError&) {
    }
  }
  EXPECT_GT(decoded, 0);
}

TEST(FrameReaderTest, ReassemblesFrameSplitIntoThreeChunks) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Message m = RandomMessage(rng);
    Blob f = EncodeFrame(m);
    const size_t a = rng.UniformInt(f.size() + 1);
    const size_t b = a + rng.UniformInt(f.size() - a + 1);
    FrameReader reader;
    reader.Feed(std::span(f).subspan(0, a));
    if (a < f.size()) EXPECT_FALSE(reader.Next().has_value());
    reader.Feed(std::span(f).subspan(a, b - a));
    reader.Feed(std::span(f).subspan(b));
    auto got = reader.Next();
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ(*got, m);
    EXPECT_FALSE(reader.Next().has_value());
  }
}

TEST(FrameReaderTest, ByteAtATimeStreamOfManyFrames) {
  Rng rng(4);
  std::vector<Message> sent;
  Blob stream;
  for (int i = 0; i < 50; ++i) {
    sent.push_back(RandomMessage(rng));
    Blob f = EncodeFrame(sent.back());
    stream.insert(stream.end(), f.begin(), f.end());
  }
  FrameReader reader;
  std::vector<Message> got;
  for (uint8_t byte : stream) {
    reader.Feed(std::span(&byte, 1));
    while (auto m = reader.Next()) got.push_back(std::move(*m));
  }
  EXPECT_EQ(got, sent);
  EXPECT_EQ(reader.buffered(), 0u);
}

TEST(FrameReaderTest, RejectsFramesAboveLimit) {
  FrameReader reader(100);
  Blob f = EncodeFrame(ModelBroadcast{0, std::vector<double>(20, 1.0)});
  reader.Feed(f);
  EXPECT_THROW(reader.Next(), TransportError);
}

TEST(BusTest, DeliversInOrderPerPair) {
  auto [a, b] = MakeChannelPair();
  for (uint32_t i = 0; i < 100; ++i) a->Send(ModelBroadcast{i, {static_cast<double>(i)}});
  for (uint32_t i = 0; i < 100; ++i) {
    EXPECT_EQ(std::get<ModelBroadcast>(b->Recv()).round, i);
  }
  b->Send(RoundControl{});
  EXPECT_EQ(a->Recv(), Message(RoundControl{}));
}

TEST(BusTest, CloseSurfacesAsError) {
  auto [a, b] = MakeChannelPair();
  a->Send(RoundControl{});
  a->Close();
  EXPECT_NO_THROW(b->Recv());  // queued message still delivered
  EXPECT_THROW(b->Recv(), TransportError);
  EXPECT_THROW(b->Send(RoundControl{}), TransportError);
}

TEST(BusTest, GatherOrdersByClientIdRegardlessOfSendOrder) {
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::unique_ptr<Channel>> server_side, client_side;
    for (int i = 0; i < 2; ++i) {
      auto [s, c] = MakeChannelPair();
      server_side.push_back(std::move(s));
      client_side.push_back(std::move(c));
    }
    // Client ids deliberately reversed relative to channel order.
    client_side[0]->Send(Hello{9, {}});
    client_side[1]->Send(Hello{4, {}});
    ServerEndpoint ep = ServerEndpoint::Accept(std::move(server_side));
    EXPECT_EQ(ep.client_ids(), (std::vector<uint32_t>{4, 9}));
    std::thread late([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(trial % 3));
      client_side[1]->Send(UpdatePlain{0, 4, 1, {}});
    });
    client_side[0]->Send(UpdatePlain{0, 9, 1, {}});
    const uint32_t ids[] = {9, 4};
    auto got = ep.Gather(ids);
    late.join();
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].first, 4u);
    EXPECT_EQ(std::get<UpdatePlain>(got[0].second).client_id, 4u);
    EXPECT_EQ(got[1].first, 9u);
  }
}

TEST(BusTest, DuplicateClientIdIsRejected) {
  std::vector<std::unique_ptr<Channel>> server_side;
  std::vector<std::unique_ptr<Channel>> keep;
  for (int i = 0; i < 2; ++i) {
    auto [s, c] = MakeChannelPair();
    c->Send(Hello{1, {}});
    server_side.push_back(std::move(s));
    keep.push_back(std::move(c));
  }
  EXPECT_THROW(ServerEndpoint::Accept(std::move(server_side)), TransportError);
}

TEST(ExpectTest, ErrorMessageBecomesTransportError) {
  EXPECT_THROW(Expect<Hello>(ErrorMessage{"boom"}, "ctx"), TransportError);
  EXPECT_THROW(Expect<Hello>(RoundControl{}, "ctx"), TransportError);
  EXPECT_EQ(Expect<Hello>(Hello{3, {}}, "ctx").client_id, 3u);
}

TEST(TcpTest, LoopbackOneMebibyteFrame) {
  TcpListener listener("127.0.0.1", 0);
  Rng rng(5);
  UpdateCkks big{1, 2, 3, {}};
  big.ciphertexts.push_back(Blob(1 << 20));
  for (uint8_t& x : big.ciphertexts[0]) x = static_cast<uint8_t>(rng.NextU64());
  const uint64_t sent_hash = Fnv1a64(big.ciphertexts[0]);
  std::thread client([&] {
    auto ch = TcpConnect("127.0.0.1", listener.port());
    ch->Send(big);
    EXPECT_EQ(ch->Recv(), Message(RoundControl{}));
  });
  auto server = listener.Accept();
  UpdateCkks got = std::get<UpdateCkks>(server->Recv());
  EXPECT_EQ(Fnv1a64(got.ciphertexts[0]), sent_hash);
  EXPECT_EQ(got, big);
  server->Send(RoundControl{});
  client.join();
}

TEST(TcpTest, DisconnectSurfacesAsError) {
  TcpListener listener("127.0.0.1", 0);
  std::thread client([&] {
    auto ch = TcpConnect("127.0.0.1", listener.port());
    ch->Send(Hello{1, {}});
  });
  auto server = listener.Accept();
  client.join();
  EXPECT_EQ(std::get<Hello>(server->Recv()).client_id, 1u);
  EXPECT_THROW(server->Recv(), TransportError);
}

TEST(TcpTest, PortFromEnvironment) {
  unsetenv("FLPL_PORT");
  EXPECT_EQ(PortFromEnvironment(), kDefaultPort);
  setenv("FLPL_PORT", "5555", 1);
  EXPECT_EQ(PortFromEnvironment(), 5555);
  setenv("FLPL_PORT", "70000", 1);
  EXPECT_THROW(PortFromEnvironment(), TransportError);
  unsetenv("FLPL_PORT");
}

}  // namespace
}  // namespace flpl::net
