#include "quadrl/replay.hpp"

#include <stdexcept>

namespace quadrl::replay {

std::optional<std::string> check_experience(const Experience& e) {
  if (e.a != Action::Left && e.a != Action::Right) return "action index out of range";
  if (e.r != static_cast<float>(kCollisionReward) &&
      e.r != static_cast<float>(kSurvivalReward)) {
    return "reward must be -100 or +3";
  }
  if (!e.s.finite() || !e.s_next.finite()) return "state contains non-finite values";
  for (const StackedState* s : {&e.s, &e.s_next}) {
    for (const DepthImage* img : {&s->image_now, &s->image_prev}) {
      for (float d : img->depths) {
        if (d < 0.0f) return "negative depth";
      }
    }
  }
  return std::nullopt;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be > 0");
}

PushResult ReplayBuffer::push(std::span<const Experience> items) {
  PushResult result;
  std::vector<std::size_t> ok;
  ok.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (auto why = check_experience(items[i])) {
      result.rejected.push_back({i, *why});
    } else {
      ok.push_back(i);
    }
  }
  std::lock_guard lock(mutex_);
  for (std::size_t i : ok) {
    if (ring_.size() < capacity_) {
      ring_.push_back(items[i]);
    } else {
      ring_[head_] = items[i];
      head_ = (head_ + 1) % capacity_;
    }
    ++insert_count_;
  }
  total_actions_ += ok.size();
  result.accepted = ok.size();
  return result;
}

std::optional<std::vector<Experience>> ReplayBuffer::sample(std::size_t n,
                                                            std::mt19937_64& rng) const {
  std::lock_guard lock(mutex_);
  if (ring_.size() < n || ring_.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, ring_.size() - 1);
  std::vector<Experience> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(ring_[pick(rng)]);
  return out;
}

ReplayStats ReplayBuffer::stats() const {
  std::lock_guard lock(mutex_);
  return {ring_.size(), capacity_, total_actions_, insert_count_};
}

bool ReplayBuffer::full() const {
  std::lock_guard lock(mutex_);
  return ring_.size() == capacity_;
}

std::vector<Experience> ReplayBuffer::contents() const {
  std::lock_guard lock(mutex_);
  std::vector<Experience> out;
  out.reserve(ring_.size());
  for (std::size_t i = 0; i < ring_.size(); ++i) out.push_back(ring_[(head_ + i) % ring_.size()]);
  return out;
}

}  // namespace quadrl::replay
