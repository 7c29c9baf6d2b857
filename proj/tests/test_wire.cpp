#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <set>
#include <thread>

#include "quadrl/wire/rpc.hpp"
#include "wire_gen.hpp"

using namespace quadrl;
using namespace quadrl::wire;
using namespace std::chrono_literals;

namespace {

ErrorCode remote_code(const Frame& f) {
  EXPECT_EQ(f.kind, static_cast<std::uint8_t>(MessageKind::ErrorResponse));
  return static_cast<ErrorCode>(decode_as<ErrorBody>(f.payload).code);
}

ErrorCode decode_error(std::span<const std::uint8_t> bytes) {
  try {
    decode_frame(bytes);
  } catch (const WireError& e) {
    return e.code();
  }
  return ErrorCode{};
}

// Echo server: ReplayStats answers after a delay chosen by the request order,
// so pipelined responses come back out of order.
struct EchoServer {
  Server server{"echo"};
  std::atomic<int> stats_calls{0};

  EchoServer() {
    server.on<MessageKind::SampleBatch>([](const SampleRequest& r) {
      std::this_thread::sleep_for(std::chrono::milliseconds(r.n));
      SampleReply reply;
      reply.ready = r.n % 2 == 0;
      return reply;
    });
    server.on<MessageKind::ReplayStats>([this](const Empty&) {
      const auto n = static_cast<std::uint64_t>(++stats_calls);
      return replay::ReplayStats{n, 0, 0, 0};
    });
    server.on<MessageKind::ResetAll>([](const Empty&) -> Empty { throw std::runtime_error("boom"); });
    server.start("127.0.0.1:0");
  }
};

}  // namespace

TEST(Frame, HealthRequestIsNineBytes) {
  const Bytes f = encode_frame(MessageKind::Health, 0x01020304, {});
  EXPECT_EQ(f, (Bytes{0, 0, 0, 5, 12, 1, 2, 3, 4}));
  const Frame back = decode_frame(f);
  EXPECT_EQ(back.kind, 12);
  EXPECT_EQ(back.request_id, 0x01020304u);
  EXPECT_TRUE(back.payload.empty());
}

TEST(Frame, EachMalformationHasItsOwnCode) {
  const Bytes good = encode_frame(MessageKind::SampleBatch, 9, encode(SampleRequest{32}));
  EXPECT_EQ(decode_error(std::span(good).first(6)), ErrorCode::ShortFrame);
  Bytes small = good;
  store_be32(small.data(), 4);
  EXPECT_EQ(decode_error(small), ErrorCode::BadLength);
  Bytes huge = good;
  store_be32(huge.data(), kMaxLength + 1);
  EXPECT_EQ(decode_error(huge), ErrorCode::BadLength);
  EXPECT_EQ(decode_error(std::span(good).first(good.size() - 1)), ErrorCode::Incomplete);
  Bytes extra = good;
  extra.push_back(0);
  EXPECT_EQ(decode_error(extra), ErrorCode::TrailingBytes);

  std::set<std::uint16_t> codes;
  for (auto c : {ErrorCode::ShortFrame, ErrorCode::Incomplete, ErrorCode::BadLength, ErrorCode::UnknownKind,
                 ErrorCode::SchemaMismatch, ErrorCode::TrailingBytes, ErrorCode::DuplicateRequest,
                 ErrorCode::NotServed, ErrorCode::HandlerError, ErrorCode::Timeout,
                 ErrorCode::ConnectionReset, ErrorCode::ConnectFailed}) {
    codes.insert(static_cast<std::uint16_t>(c));
    EXPECT_FALSE(error_code_name(c).empty());
  }
  EXPECT_EQ(codes.size(), 12u);
}

TEST(Frame, KnownKinds) {
  for (auto k : wiregen::all_kinds()) EXPECT_TRUE(is_known_kind(static_cast<std::uint8_t>(k)));
  EXPECT_FALSE(is_known_kind(0));
  EXPECT_FALSE(is_known_kind(13));
  EXPECT_FALSE(is_known_kind(254));
}

// Property: every kind survives encode -> frame -> decode for random payloads.
TEST(Messages, RoundTripEveryKind) {
  wiregen::Gen g{std::mt19937_64(1)};
  for (auto kind : wiregen::all_kinds()) {
    for (int i = 0; i < 300; ++i) ASSERT_TRUE(wiregen::round_trip_random(kind, g)) << kind_name(kind);
  }
}

TEST(Messages, ByteLayoutIsLittleEndianBody) {
  const Bytes b = encode(ParamsRequest{0x0102030405060708ull});
  EXPECT_EQ(b, (Bytes{8, 7, 6, 5, 4, 3, 2, 1}));
  const Bytes s = encode(StateQuery{{1, 2}});
  EXPECT_EQ(s, (Bytes{2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0}));
  EXPECT_EQ(encode(StatesReply{}).size(), 12u);
  StatesReply one;
  one.states.resize(1);
  EXPECT_EQ(encode(one).size(), 12u + (2 * 1024 + 3) * 4);
}

// Property: any truncation or extension of a valid body is rejected with a typed error.
TEST(Messages, TruncatedAndExtendedBodiesAreRejected) {
  wiregen::Gen g{std::mt19937_64(2)};
  for (int i = 0; i < 50; ++i) {
    const Bytes body = encode(g.push_result());
    for (std::size_t cut = 0; cut < body.size(); cut += 1 + body.size() / 25) {
      try {
        decode_as<replay::PushResult>(std::span(body).first(cut));
        ADD_FAILURE() << "accepted a truncated body";
      } catch (const WireError& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
      }
    }
    Bytes longer = body;
    longer.push_back(1);
    try {
      decode_as<replay::PushResult>(longer);
      ADD_FAILURE() << "accepted trailing bytes";
    } catch (const WireError& e) {
      EXPECT_EQ(e.code(), ErrorCode::TrailingBytes);
    }
  }
  // Out-of-range enums are schema errors.
  Bytes actions = encode(ActionList{{{3, Action::Left}}});
  actions.back() = 2;
  EXPECT_THROW(decode_as<ActionList>(actions), WireError);
  // Absurd counts are caught before allocating.
  Bytes bogus(4, 0xff);
  EXPECT_THROW(decode_as<ExperienceBatch>(bogus), WireError);
}

TEST(Address, Parse) {
  const Address a = Address::parse("127.0.0.1:5000");
  EXPECT_EQ(a.host, "127.0.0.1");
  EXPECT_EQ(a.port, 5000);
  EXPECT_THROW(Address::parse("nohost"), std::invalid_argument);
  EXPECT_THROW(Address::parse("h:99999"), std::invalid_argument);
}

TEST(Rpc, HealthOverLoopbackIsFast) {
  Server server("sim");
  server.start("127.0.0.1:0");
  Client c(server.address());
  const auto t0 = std::chrono::steady_clock::now();
  const HealthReply h = c.call<MessageKind::Health>(Empty{});
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 50ms);
  EXPECT_EQ(h.role, "sim");
}

TEST(Rpc, PipelinedResponsesMatchByRequestId) {
  EchoServer echo;
  Client c(echo.server.address());
  // Descending delays so the first request finishes last.
  std::vector<std::future<Frame>> futs;
  for (std::uint32_t n : {40u, 30u, 20u, 10u, 0u, 1u}) {
    futs.push_back(c.send(MessageKind::SampleBatch, encode(SampleRequest{n})));
  }
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < futs.size(); ++i) {
    const Frame f = futs[i].get();
    ids.push_back(f.request_id);
    const auto r = decode_as<SampleReply>(Client::unwrap(f));
    EXPECT_EQ(r.ready, i != 5);
  }
  EXPECT_EQ(std::set<std::uint32_t>(ids.begin(), ids.end()).size(), ids.size());
}

TEST(Rpc, HundredPipelinedRequestsHaveNoMismatch) {
  EchoServer echo;
  Client c(echo.server.address());
  std::vector<std::future<Frame>> futs;
  for (int i = 0; i < 100; ++i) {
    futs.push_back(c.send(MessageKind::SampleBatch, encode(SampleRequest{static_cast<std::uint32_t>(i % 7)})));
  }
  int mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    const Frame f = futs[i].get();
    mismatches += decode_as<SampleReply>(Client::unwrap(f)).ready != ((i % 7) % 2 == 0);
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Rpc, MalformedFramesGetErrorsAndServerSurvives) {
  EchoServer echo;
  Client c(echo.server.address());

  // Length below the minimum: answered with request_id 0, connection kept.
  Bytes tiny{0, 0, 0, 2, 9, 9};
  EXPECT_EQ(remote_code(c.send_raw(tiny, 0).get()), ErrorCode::BadLength);

  Bytes unknown = encode_frame(static_cast<std::uint8_t>(77), 5000, {});
  EXPECT_EQ(remote_code(c.send_raw(unknown, 5000).get()), ErrorCode::UnknownKind);

  Bytes as_error = encode_frame(MessageKind::ErrorResponse, 5001, encode(ErrorBody{1, "x"}));
  EXPECT_EQ(remote_code(c.send_raw(as_error, 5001).get()), ErrorCode::UnknownKind);

  Bytes not_served = encode_frame(MessageKind::StepPeriod, 5002, {});
  EXPECT_EQ(remote_code(c.send_raw(not_served, 5002).get()), ErrorCode::NotServed);

  Bytes bad_body = encode_frame(MessageKind::SampleBatch, 5003, Bytes{1, 2});
  EXPECT_EQ(remote_code(c.send_raw(bad_body, 5003).get()), ErrorCode::SchemaMismatch);

  Bytes trailing = encode_frame(MessageKind::SampleBatch, 5004, Bytes{1, 0, 0, 0, 0});
  EXPECT_EQ(remote_code(c.send_raw(trailing, 5004).get()), ErrorCode::TrailingBytes);

  Bytes dup = encode_frame(MessageKind::ReplayStats, 5005, {});
  EXPECT_EQ(c.send_raw(dup, 5005).get().kind, static_cast<std::uint8_t>(MessageKind::ReplayStats));
  EXPECT_EQ(remote_code(c.send_raw(dup, 5005).get()), ErrorCode::DuplicateRequest);

  try {
    c.call<MessageKind::ResetAll>(Empty{});
    FAIL() << "handler exception should surface";
  } catch (const RemoteError& e) {
    EXPECT_EQ(e.code(), ErrorCode::HandlerError);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }

  // Still serving on the same connection.
  EXPECT_EQ(c.call<MessageKind::Health>(Empty{}).role, "echo");

  // Oversized length closes that connection only.
  {
    Client victim(echo.server.address());
    Bytes oversized = encode_frame(MessageKind::Health, 1, {});
    store_be32(oversized.data(), kMaxLength + 10);
    EXPECT_EQ(remote_code(victim.send_raw(oversized, 0).get()), ErrorCode::BadLength);
  }
  // A peer that dies mid-frame is dropped quietly.
  {
    Client quitter(echo.server.address());
    Bytes partial = encode_frame(MessageKind::Health, 1, Bytes(20, 0));
    partial.resize(12);
    quitter.send_raw(partial, 999999);
  }
  Client fresh(echo.server.address());
  EXPECT_EQ(fresh.call<MessageKind::Health>(Empty{}).role, "echo");
  EXPECT_GE(echo.server.error_responses(), 8u);
}

TEST(Rpc, DeadPortFailsToConnect) {
  int port = 0;
  {
    Server s("tmp");
    s.start("127.0.0.1:0");
    port = s.port();
  }
  try {
    Client c("127.0.0.1:" + std::to_string(port), 500ms);
    FAIL();
  } catch (const WireError& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConnectFailed);
  }
}

TEST(Rpc, SlowHandlerTimesOut) {
  EchoServer echo;
  Client c(echo.server.address());
  try {
    c.call<MessageKind::SampleBatch>(SampleRequest{300}, 50ms);
    FAIL();
  } catch (const WireError& e) {
    EXPECT_EQ(e.code(), ErrorCode::Timeout);
  }
  // The late answer is dropped and the connection stays usable.
  std::this_thread::sleep_for(300ms);
  EXPECT_EQ(c.call<MessageKind::Health>(Empty{}).role, "echo");
}

TEST(Rpc, ServerStopResetsPendingCalls) {
  auto echo = std::make_unique<EchoServer>();
  Client c(echo->server.address());
  auto fut = c.send(MessageKind::SampleBatch, encode(SampleRequest{200}));
  std::this_thread::sleep_for(20ms);
  echo.reset();
  try {
    Client::unwrap(fut.get());
  } catch (const WireError&) {
    // Either the answer arrived before shutdown or the call was reset; both are typed.
  }
  EXPECT_THROW(c.call<MessageKind::Health>(Empty{}, 500ms), WireError);
}
