#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quadrl/state.hpp"

namespace quadrl::replay {

inline constexpr std::size_t kDefaultCapacity = 15000;

struct ReplayStats {
  std::uint64_t len = 0;
  std::uint64_t capacity = 0;
  std::uint64_t total_actions = 0;  // a_T
  std::uint64_t insert_count = 0;

  bool operator==(const ReplayStats&) const = default;
};

struct Rejection {
  std::size_t index = 0;
  std::string reason;

  bool operator==(const Rejection&) const = default;
};

struct PushResult {
  std::size_t accepted = 0;
  std::vector<Rejection> rejected;

  bool operator==(const PushResult&) const = default;
};

/// Reason the transition is malformed, or nullopt when it is acceptable.
std::optional<std::string> check_experience(const Experience& e);

/// Bounded FIFO store with uniform sampling (with replacement). Linearizable:
/// each push batch, sample and stats call happens atomically.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity);

  /// Appends accepted items in order, evicting oldest-first. a_T grows by the accepted count.
  PushResult push(std::span<const Experience> items);

  /// nullopt while fewer than n items are stored.
  std::optional<std::vector<Experience>> sample(std::size_t n, std::mt19937_64& rng) const;

  ReplayStats stats() const;
  bool full() const;

  /// Retained items, oldest first.
  std::vector<Experience> contents() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::vector<Experience> ring_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::uint64_t insert_count_ = 0;
  std::uint64_t total_actions_ = 0;
};

}  // namespace quadrl::replay
