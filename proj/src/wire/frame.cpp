#include "quadrl/wire/frame.hpp"

namespace quadrl::wire {

bool is_known_kind(std::uint8_t kind) {
  return (kind >= 1 && kind <= 12) || kind == 255;
}

std::string_view kind_name(MessageKind kind) {
  switch (kind) {
    case MessageKind::GetBatchStates: return "GetBatchStates";
    case MessageKind::GetStatesNonBatched: return "GetStatesNonBatched";
    case MessageKind::ApplyActions: return "ApplyActions";
    case MessageKind::StepPeriod: return "StepPeriod";
    case MessageKind::ResetVehicle: return "ResetVehicle";
    case MessageKind::ResetAll: return "ResetAll";
    case MessageKind::PushExperiences: return "PushExperiences";
    case MessageKind::SampleBatch: return "SampleBatch";
    case MessageKind::ReplayStats: return "ReplayStats";
    case MessageKind::GetParams: return "GetParams";
    case MessageKind::ReportEpisode: return "ReportEpisode";
    case MessageKind::Health: return "Health";
    case MessageKind::ErrorResponse: return "ErrorResponse";
  }
  return "?";
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShortFrame: return "short-frame";
    case ErrorCode::Incomplete: return "incomplete-frame";
    case ErrorCode::BadLength: return "bad-length";
    case ErrorCode::UnknownKind: return "unknown-kind";
    case ErrorCode::SchemaMismatch: return "schema-mismatch";
    case ErrorCode::TrailingBytes: return "trailing-bytes";
    case ErrorCode::DuplicateRequest: return "duplicate-request";
    case ErrorCode::NotServed: return "not-served";
    case ErrorCode::HandlerError: return "handler-error";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::ConnectionReset: return "connection-reset";
    case ErrorCode::ConnectFailed: return "connect-failed";
  }
  return "unknown-error";
}

std::uint32_t load_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void store_be32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 24);
  p[1] = static_cast<std::uint8_t>(v >> 16);
  p[2] = static_cast<std::uint8_t>(v >> 8);
  p[3] = static_cast<std::uint8_t>(v);
}

Bytes encode_frame(std::uint8_t kind, std::uint32_t request_id,
                   std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxLength - kMinLength) {
    throw WireError(ErrorCode::BadLength, "payload exceeds the frame limit");
  }
  Bytes out(kHeaderSize + payload.size());
  store_be32(out.data(), static_cast<std::uint32_t>(kMinLength + payload.size()));
  out[4] = kind;
  store_be32(out.data() + 5, request_id);
  if (!payload.empty()) std::memcpy(out.data() + kHeaderSize, payload.data(), payload.size());
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) {
    throw WireError(ErrorCode::ShortFrame, "frame shorter than its 9-byte header");
  }
  const std::uint32_t length = load_be32(bytes.data());
  if (length < kMinLength || length > kMaxLength) {
    throw WireError(ErrorCode::BadLength, "frame length field out of range: " + std::to_string(length));
  }
  const std::size_t total = kLengthFieldSize + length;
  if (bytes.size() < total) {
    throw WireError(ErrorCode::Incomplete, "frame length " + std::to_string(length) + " exceeds the " +
                                               std::to_string(bytes.size() - kLengthFieldSize) +
                                               " bytes available");
  }
  if (bytes.size() > total) throw WireError(ErrorCode::TrailingBytes, "bytes after the frame");
  Frame f;
  f.kind = bytes[4];
  f.request_id = load_be32(bytes.data() + 5);
  f.payload.assign(bytes.begin() + kHeaderSize, bytes.end());
  return f;
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw WireError(ErrorCode::SchemaMismatch, "body ends early: need " + std::to_string(n) +
                                                   " bytes, have " + std::to_string(remaining()));
  }
}

Bytes ByteReader::get_bytes() {
  const std::size_t n = get<std::uint32_t>();
  need(n);
  Bytes out(in_.begin() + pos_, in_.begin() + pos_ + n);
  pos_ += n;
  return out;
}

std::string ByteReader::get_string() {
  const std::size_t n = get<std::uint32_t>();
  need(n);
  std::string out(reinterpret_cast<const char*>(in_.data() + pos_), n);
  pos_ += n;
  return out;
}

std::size_t ByteReader::get_count(std::size_t min_item) {
  const std::size_t n = get<std::uint32_t>();
  if (min_item > 0 && n > remaining() / min_item) {
    throw WireError(ErrorCode::SchemaMismatch,
                    "list count " + std::to_string(n) + " cannot fit in the remaining body");
  }
  return n;
}

void ByteReader::finish() const {
  if (remaining() != 0) {
    throw WireError(ErrorCode::TrailingBytes,
                    std::to_string(remaining()) + " unread bytes after the body");
  }
}

}  // namespace quadrl::wire
