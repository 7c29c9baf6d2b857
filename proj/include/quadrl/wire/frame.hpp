#pragma once

// Frame layout (all header fields big-endian):
//   u32 length      bytes that follow the length field (= 5 + |payload|)
//   u8  kind
//   u32 request_id
//   payload         kind-specific body, scalars little-endian

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace quadrl::wire {

using Bytes = std::vector<std::uint8_t>;

enum class MessageKind : std::uint8_t {
  GetBatchStates = 1,
  GetStatesNonBatched = 2,
  ApplyActions = 3,
  StepPeriod = 4,
  ResetVehicle = 5,
  ResetAll = 6,
  PushExperiences = 7,
  SampleBatch = 8,
  ReplayStats = 9,
  GetParams = 10,
  ReportEpisode = 11,
  Health = 12,
  ErrorResponse = 255,
};

bool is_known_kind(std::uint8_t kind);
std::string_view kind_name(MessageKind kind);

/// Codes carried in ErrorResponse bodies. Values are part of the protocol.
enum class ErrorCode : std::uint16_t {
  ShortFrame = 1,       // fewer bytes than a frame header
  Incomplete = 2,       // length field exceeds the bytes available
  BadLength = 3,        // length field below 5 or above the frame limit
  UnknownKind = 4,
  SchemaMismatch = 5,   // body too short or a field out of range for its kind
  TrailingBytes = 6,
  DuplicateRequest = 7, // request_id already seen on this connection
  NotServed = 8,        // valid kind, but this server hosts no handler for it
  HandlerError = 9,
  // Client-side only; never sent on the wire.
  Timeout = 100,
  ConnectionReset = 101,
  ConnectFailed = 102,
};

std::string_view error_code_name(ErrorCode code);

class WireError : public std::runtime_error {
 public:
  WireError(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// The server answered with an ErrorResponse.
class RemoteError : public WireError {
 public:
  using WireError::WireError;
};

inline constexpr std::size_t kLengthFieldSize = 4;
inline constexpr std::size_t kHeaderSize = kLengthFieldSize + 1 + 4;
inline constexpr std::uint32_t kMinLength = 5;
inline constexpr std::uint32_t kMaxLength = 64u << 20;

struct Frame {
  std::uint8_t kind = 0;
  std::uint32_t request_id = 0;
  Bytes payload;

  bool operator==(const Frame&) const = default;
};

Bytes encode_frame(std::uint8_t kind, std::uint32_t request_id, std::span<const std::uint8_t> payload);
inline Bytes encode_frame(MessageKind kind, std::uint32_t request_id,
                          std::span<const std::uint8_t> payload) {
  return encode_frame(static_cast<std::uint8_t>(kind), request_id, payload);
}

/// Decodes exactly one frame occupying all of `bytes`. The kind byte is not
/// checked here, so servers can still answer unknown kinds by request_id.
Frame decode_frame(std::span<const std::uint8_t> bytes);

std::uint32_t load_be32(const std::uint8_t* p);
void store_be32(std::uint8_t* p, std::uint32_t v);

static_assert(std::endian::native == std::endian::little,
              "body encoding assumes a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_floats(std::span<const float> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    out_.insert(out_.end(), p, p + values.size_bytes());
  }
  void put_bytes(std::span<const std::uint8_t> b) {
    put(static_cast<std::uint32_t>(b.size()));
    out_.insert(out_.end(), b.begin(), b.end());
  }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void put_count(std::size_t n) { put(static_cast<std::uint32_t>(n)); }
  void reserve(std::size_t n) { out_.reserve(n); }

  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

/// Bounds-checked reader. Every failure is a WireError(SchemaMismatch).
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_floats(std::span<float> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), in_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }
  Bytes get_bytes();
  std::string get_string();
  /// Count prefix, sanity-checked against the bytes left (each item needs at least `min_item` bytes).
  std::size_t get_count(std::size_t min_item);

  std::size_t remaining() const { return in_.size() - pos_; }
  /// Throws WireError(TrailingBytes) unless every byte was consumed.
  void finish() const;

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace quadrl::wire
