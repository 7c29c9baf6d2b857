#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "quadrl/wire/frame.hpp"
#include "quadrl/wire/messages.hpp"

namespace quadrl::wire {

using namespace std::chrono_literals;

struct Address {
  std::string host;
  std::uint16_t port = 0;

  /// "host:port". Port 0 asks the server for an ephemeral port.
  static Address parse(const std::string& text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Takes a request body and returns the response body. May throw: a WireError
/// keeps its code, anything else becomes HandlerError with the exception text.
using Handler = std::function<Bytes(std::span<const std::uint8_t> body)>;

/// TCP RPC server. One reader thread per connection; decoded requests run on
/// a shared worker pool, so pipelined requests may complete out of order.
class Server {
 public:
  explicit Server(std::string role, std::size_t workers = 4);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Register before start(). Health is pre-registered and answers with the role.
  void handle(MessageKind kind, Handler handler);

  template <MessageKind K, typename F>
  void on(F fn) {
    handle(K, [fn = std::move(fn)](std::span<const std::uint8_t> body) {
      return encode(fn(decode_as<typename Rpc<K>::Request>(body)));
    });
  }

  void start(const std::string& address);
  void stop();

  std::uint16_t port() const { return port_; }
  std::string address() const { return Address{host_, port_}.str(); }
  const std::string& role() const { return role_; }

  std::uint64_t error_responses() const { return error_responses_.load(); }

 private:
  struct Connection;

  void accept_loop();
  void read_loop(std::shared_ptr<Connection> conn);
  void dispatch(std::shared_ptr<Connection> conn, Frame frame);
  void send_error(Connection& conn, std::uint32_t request_id, ErrorCode code, const std::string& msg);
  void worker_loop();

  std::string role_;
  std::size_t n_workers_;
  std::unordered_map<std::uint8_t, Handler> handlers_;

  std::string host_;
  std::uint16_t port_ = 0;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;

  std::mutex conns_mu_;
  std::vector<std::shared_ptr<Connection>> conns_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void()>> queue_;
  bool draining_ = false;
  std::vector<std::thread> workers_;

  std::atomic<std::uint64_t> error_responses_{0};
};

/// Connection to one server with pipelined calls matched by request_id.
/// Thread-safe.
class Client {
 public:
  explicit Client(const std::string& address, std::chrono::milliseconds connect_timeout = 2000ms);
  ~Client();

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Sends a request without waiting. The future yields the response frame,
  /// which may be an ErrorResponse.
  std::future<Frame> send(MessageKind kind, std::span<const std::uint8_t> body);

  /// Writes arbitrary bytes and awaits a response carrying `expect_request_id`.
  /// Meant for protocol tests.
  std::future<Frame> send_raw(std::span<const std::uint8_t> bytes, std::uint32_t expect_request_id);

  /// Waits for the response body. Throws RemoteError for an ErrorResponse,
  /// WireError(Timeout) or WireError(ConnectionReset).
  Bytes call(MessageKind kind, std::span<const std::uint8_t> body,
             std::chrono::milliseconds timeout = kDefaultTimeout);

  template <MessageKind K>
  typename Rpc<K>::Response call(const typename Rpc<K>::Request& request,
                                 std::chrono::milliseconds timeout = kDefaultTimeout) {
    const Bytes body = encode(request);
    return decode_as<typename Rpc<K>::Response>(call(K, body, timeout));
  }

  /// Converts a response frame into its body, throwing RemoteError for errors.
  static Bytes unwrap(const Frame& frame);

  bool connected() const { return open_.load(); }
  void close();

  static constexpr std::chrono::milliseconds kDefaultTimeout = 10000ms;

 private:
  std::pair<std::uint32_t, std::future<Frame>> send_with_id(MessageKind kind,
                                                           std::span<const std::uint8_t> body);
  std::future<Frame> register_pending(std::uint32_t id);
  void forget(std::uint32_t id);
  void write_all(std::span<const std::uint8_t> head, std::span<const std::uint8_t> body);
  void read_loop();
  void fail_all(const std::string& why);

  int fd_ = -1;
  std::atomic<bool> open_{false};
  std::atomic<std::uint32_t> next_id_{1};
  std::mutex write_mu_;
  std::mutex pending_mu_;
  std::map<std::uint32_t, std::promise<Frame>> pending_;
  std::thread reader_;
};

/// Fetches the trainer's parameters when they are newer than `have_version`.
ParamsReply get_params_client(Client& trainer, std::uint64_t have_version,
                              std::chrono::milliseconds timeout = Client::kDefaultTimeout);

}  // namespace quadrl::wire
