#include "quadrl/wire/rpc.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <unordered_set>

namespace quadrl::wire {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const Address& a) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(a.host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || res == nullptr) {
    throw WireError(ErrorCode::ConnectFailed, "cannot resolve '" + a.host + "': " + gai_strerror(rc));
  }
  sockaddr_in sa{};
  std::memcpy(&sa, res->ai_addr, sizeof(sa));
  ::freeaddrinfo(res);
  sa.sin_port = htons(a.port);
  return sa;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

// False on orderly EOF before the first byte; throws on errors or EOF mid-buffer.
bool read_exact(int fd, std::uint8_t* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, dst + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw WireError(ErrorCode::ConnectionReset, "peer closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw WireError(ErrorCode::ConnectionReset, errno_text("recv"));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void write_iov(int fd, std::span<const std::uint8_t> head, std::span<const std::uint8_t> body) {
  iovec iov[2] = {{const_cast<std::uint8_t*>(head.data()), head.size()},
                  {const_cast<std::uint8_t*>(body.data()), body.size()}};
  int idx = 0;
  int count = body.empty() ? 1 : 2;
  while (idx < count) {
    msghdr msg{};
    msg.msg_iov = iov + idx;
    msg.msg_iovlen = static_cast<std::size_t>(count - idx);
    ssize_t w = ::sendmsg(fd, &msg, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw WireError(ErrorCode::ConnectionReset, errno_text("send"));
    }
    while (idx < count && static_cast<std::size_t>(w) >= iov[idx].iov_len) {
      w -= static_cast<ssize_t>(iov[idx].iov_len);
      ++idx;
    }
    if (idx < count) {
      iov[idx].iov_base = static_cast<std::uint8_t*>(iov[idx].iov_base) + w;
      iov[idx].iov_len -= static_cast<std::size_t>(w);
    }
  }
}

std::array<std::uint8_t, kHeaderSize> header(std::uint8_t kind, std::uint32_t id, std::size_t payload) {
  std::array<std::uint8_t, kHeaderSize> h{};
  store_be32(h.data(), static_cast<std::uint32_t>(kMinLength + payload));
  h[4] = kind;
  store_be32(h.data() + 5, id);
  return h;
}

struct Header {
  std::uint32_t length;
  std::uint8_t kind;
  std::uint32_t request_id;
};

}  // namespace

Address Address::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw std::invalid_argument("address must look like host:port, got '" + text + "'");
  }
  Address a;
  a.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  std::size_t used = 0;
  unsigned long p = 0;
  try {
    p = std::stoul(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || p > 65535) throw std::invalid_argument("bad port in address '" + text + "'");
  a.port = static_cast<std::uint16_t>(p);
  return a;
}

// ---- server ---------------------------------------------------------------

struct Server::Connection {
  int fd = -1;
  std::mutex write_mu;
  std::mutex seen_mu;
  std::unordered_set<std::uint32_t> seen;
  std::thread reader;
  std::atomic<bool> done{false};

  void send(std::uint8_t kind, std::uint32_t id, std::span<const std::uint8_t> body) {
    const auto h = header(kind, id, body.size());
    std::lock_guard lock(write_mu);
    write_iov(fd, h, body);
  }
};

Server::Server(std::string role, std::size_t workers) : role_(std::move(role)), n_workers_(workers) {
  if (n_workers_ == 0) n_workers_ = 1;
  on<MessageKind::Health>([this](const Empty&) { return HealthReply{role_}; });
}

Server::~Server() { stop(); }

void Server::handle(MessageKind kind, Handler handler) {
  if (running_) throw std::logic_error("Server::handle after start");
  if (kind == MessageKind::ErrorResponse) throw std::invalid_argument("cannot serve ErrorResponse");
  handlers_[static_cast<std::uint8_t>(kind)] = std::move(handler);
}

void Server::start(const std::string& address) {
  if (running_) throw std::logic_error("server already started");
  const Address a = Address::parse(address);
  sockaddr_in sa = resolve(a);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw WireError(ErrorCode::ConnectFailed, errno_text("socket"));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    const std::string why = errno_text(("bind " + address).c_str());
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw WireError(ErrorCode::ConnectFailed, why);
  }
  socklen_t len = sizeof(sa);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  host_ = a.host;
  port_ = ntohs(sa.sin_port);
  running_ = true;
  draining_ = false;
  for (std::size_t i = 0; i < n_workers_; ++i) workers_.emplace_back([this] { worker_loop(); });
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  listen_fd_ = -1;

  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(conns_mu_);
    conns.swap(conns_);
  }
  for (auto& c : conns) ::shutdown(c->fd, SHUT_RDWR);
  for (auto& c : conns) {
    if (c->reader.joinable()) c->reader.join();
  }
  {
    std::lock_guard lock(queue_mu_);
    draining_ = true;
  }
  queue_cv_.notify_all();
  for (auto& w : workers_) w.join();
  workers_.clear();
  for (auto& c : conns) ::close(c->fd);
}

void Server::accept_loop() {
  while (running_) {
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;  // listen socket shut down
    }
    set_nodelay(fd);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(conns_mu_);
    if (!running_) {
      ::close(fd);
      return;
    }
    // Reap connections whose peers went away.
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->done) {
        (*it)->reader.join();
        ::close((*it)->fd);
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
    conn->reader = std::thread([this, conn] { read_loop(conn); });
    conns_.push_back(conn);
  }
}

void Server::send_error(Connection& conn, std::uint32_t request_id, ErrorCode code,
                        const std::string& msg) {
  error_responses_.fetch_add(1);
  const Bytes body = encode(ErrorBody{static_cast<std::uint16_t>(code), msg});
  try {
    conn.send(static_cast<std::uint8_t>(MessageKind::ErrorResponse), request_id, body);
  } catch (const WireError&) {
    // Peer is gone; nothing left to tell it.
  }
}

void Server::read_loop(std::shared_ptr<Connection> conn) {
  try {
    std::array<std::uint8_t, kLengthFieldSize> len_buf{};
    while (running_) {
      if (!read_exact(conn->fd, len_buf.data(), len_buf.size())) break;
      const std::uint32_t length = load_be32(len_buf.data());
      if (length > kMaxLength) {
        // The stream cannot be resynchronised without reading the whole claimed frame.
        send_error(*conn, 0, ErrorCode::BadLength,
                   "frame length " + std::to_string(length) + " exceeds the limit; closing");
        break;
      }
      Bytes buf(length);
      if (length > 0 && !read_exact(conn->fd, buf.data(), length)) break;
      if (length < kMinLength) {
        send_error(*conn, 0, ErrorCode::BadLength,
                   "frame length " + std::to_string(length) + " is below the 5-byte minimum");
        continue;
      }
      Frame f;
      f.kind = buf[0];
      f.request_id = load_be32(buf.data() + 1);
      f.payload.assign(buf.begin() + 5, buf.end());
      dispatch(conn, std::move(f));
    }
  } catch (const WireError&) {
    // Connection reset; drop it.
  }
  conn->done = true;
}

void Server::dispatch(std::shared_ptr<Connection> conn, Frame frame) {
  const std::uint32_t id = frame.request_id;
  if (!is_known_kind(frame.kind) || frame.kind == static_cast<std::uint8_t>(MessageKind::ErrorResponse)) {
    send_error(*conn, id, ErrorCode::UnknownKind, "unknown message kind " + std::to_string(frame.kind));
    return;
  }
  auto it = handlers_.find(frame.kind);
  if (it == handlers_.end()) {
    send_error(*conn, id, ErrorCode::NotServed,
               std::string(kind_name(static_cast<MessageKind>(frame.kind))) + " is not served by " + role_);
    return;
  }
  {
    std::lock_guard lock(conn->seen_mu);
    if (!conn->seen.insert(id).second) {
      send_error(*conn, id, ErrorCode::DuplicateRequest,
                 "request_id " + std::to_string(id) + " already used on this connection");
      return;
    }
  }
  const Handler* handler = &it->second;
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back([this, conn, handler, f = std::move(frame)] {
      try {
        const Bytes body = (*handler)(f.payload);
        conn->send(f.kind, f.request_id, body);
      } catch (const WireError& e) {
        send_error(*conn, f.request_id, e.code(), e.what());
      } catch (const std::exception& e) {
        send_error(*conn, f.request_id, ErrorCode::HandlerError, e.what());
      }
    });
  }
  queue_cv_.notify_one();
}

void Server::worker_loop() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, [this] { return draining_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

// ---- client ---------------------------------------------------------------

Client::Client(const std::string& address, std::chrono::milliseconds connect_timeout) {
  const Address a = Address::parse(address);
  sockaddr_in sa = resolve(a);
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0);
  if (fd_ < 0) throw WireError(ErrorCode::ConnectFailed, errno_text("socket"));
  int rc = ::connect(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa));
  if (rc != 0 && errno == EINPROGRESS) {
    pollfd p{fd_, POLLOUT, 0};
    rc = ::poll(&p, 1, static_cast<int>(connect_timeout.count()));
    if (rc == 0) {
      ::close(fd_);
      throw WireError(ErrorCode::Timeout, "connect to " + address + " timed out");
    }
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd_, SOL_SOCKET, SO_ERROR, &err, &len);
    errno = err;
    rc = err == 0 ? 0 : -1;
  }
  if (rc != 0) {
    const std::string why = errno_text(("connect " + address).c_str());
    ::close(fd_);
    throw WireError(ErrorCode::ConnectFailed, why);
  }
  ::fcntl(fd_, F_SETFL, ::fcntl(fd_, F_GETFL) & ~O_NONBLOCK);
  set_nodelay(fd_);
  open_ = true;
  reader_ = std::thread([this] { read_loop(); });
}

Client::~Client() {
  close();
  if (reader_.joinable()) reader_.join();
  ::close(fd_);
}

void Client::close() {
  if (open_.exchange(false)) ::shutdown(fd_, SHUT_RDWR);
}

std::future<Frame> Client::register_pending(std::uint32_t id) {
  std::lock_guard lock(pending_mu_);
  if (!open_) throw WireError(ErrorCode::ConnectionReset, "connection is closed");
  auto [it, inserted] = pending_.try_emplace(id);
  if (!inserted) throw std::logic_error("request_id already pending");
  return it->second.get_future();
}

void Client::forget(std::uint32_t id) {
  std::lock_guard lock(pending_mu_);
  pending_.erase(id);
}

void Client::write_all(std::span<const std::uint8_t> head, std::span<const std::uint8_t> body) {
  std::lock_guard lock(write_mu_);
  write_iov(fd_, head, body);
}

std::future<Frame> Client::send(MessageKind kind, std::span<const std::uint8_t> body) {
  return send_with_id(kind, body).second;
}

std::pair<std::uint32_t, std::future<Frame>> Client::send_with_id(MessageKind kind,
                                                                  std::span<const std::uint8_t> body) {
  if (body.size() > kMaxLength - kMinLength) {
    throw WireError(ErrorCode::BadLength, "request body exceeds the frame limit");
  }
  const std::uint32_t id = next_id_.fetch_add(1);
  auto fut = register_pending(id);
  try {
    write_all(header(static_cast<std::uint8_t>(kind), id, body.size()), body);
  } catch (...) {
    forget(id);
    throw;
  }
  return {id, std::move(fut)};
}

std::future<Frame> Client::send_raw(std::span<const std::uint8_t> bytes, std::uint32_t expect_request_id) {
  auto fut = register_pending(expect_request_id);
  try {
    write_all(bytes, {});
  } catch (...) {
    forget(expect_request_id);
    throw;
  }
  return fut;
}

Bytes Client::unwrap(const Frame& frame) {
  if (frame.kind == static_cast<std::uint8_t>(MessageKind::ErrorResponse)) {
    const auto err = decode_as<ErrorBody>(frame.payload);
    const auto code = static_cast<ErrorCode>(err.code);
    throw RemoteError(code, std::string(error_code_name(code)) + ": " + err.message);
  }
  return frame.payload;
}

Bytes Client::call(MessageKind kind, std::span<const std::uint8_t> body,
                   std::chrono::milliseconds timeout) {
  auto [id, fut] = send_with_id(kind, body);
  if (fut.wait_for(timeout) != std::future_status::ready) {
    forget(id);  // a late response is dropped by the reader
    throw WireError(ErrorCode::Timeout, std::string(kind_name(kind)) + " timed out after " +
                                            std::to_string(timeout.count()) + " ms");
  }
  return unwrap(fut.get());
}

void Client::read_loop() {
  try {
    std::array<std::uint8_t, kHeaderSize> h{};
    for (;;) {
      if (!read_exact(fd_, h.data(), h.size())) break;
      const std::uint32_t length = load_be32(h.data());
      if (length < kMinLength || length > kMaxLength) {
        throw WireError(ErrorCode::BadLength, "server sent a bad frame length");
      }
      Frame f;
      f.kind = h[4];
      f.request_id = load_be32(h.data() + 5);
      f.payload.resize(length - kMinLength);
      if (!f.payload.empty() && !read_exact(fd_, f.payload.data(), f.payload.size())) {
        throw WireError(ErrorCode::ConnectionReset, "peer closed mid-frame");
      }
      std::lock_guard lock(pending_mu_);
      auto it = pending_.find(f.request_id);
      if (it == pending_.end()) continue;  // caller already timed out
      it->second.set_value(std::move(f));
      pending_.erase(it);
    }
    fail_all("connection closed by peer");
  } catch (const WireError& e) {
    fail_all(e.what());
  }
}

void Client::fail_all(const std::string& why) {
  std::lock_guard lock(pending_mu_);
  open_ = false;
  for (auto& [id, p] : pending_) {
    p.set_exception(std::make_exception_ptr(WireError(ErrorCode::ConnectionReset, why)));
  }
  pending_.clear();
}

ParamsReply get_params_client(Client& trainer, std::uint64_t have_version,
                              std::chrono::milliseconds timeout) {
  return trainer.call<MessageKind::GetParams>(ParamsRequest{have_version}, timeout);
}

}  // namespace quadrl::wire
