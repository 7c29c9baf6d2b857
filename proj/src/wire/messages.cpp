#include "quadrl/wire/messages.hpp"

namespace quadrl::wire {

namespace {

constexpr std::size_t kStateBytes = (2 * kImagePixels + 3) * sizeof(float);
constexpr std::size_t kExperienceBytes = 2 * kStateBytes + 1 + 4 + 1;

void put_state(ByteWriter& w, const StackedState& s) {
  w.put_floats(s.image_now.depths);
  w.put_floats(s.image_prev.depths);
  w.put_floats(s.velocity);
}

void get_state(ByteReader& r, StackedState& s) {
  r.get_floats(s.image_now.depths);
  r.get_floats(s.image_prev.depths);
  r.get_floats(s.velocity);
}

std::uint8_t get_flag(ByteReader& r, const char* field) {
  const auto v = r.get<std::uint8_t>();
  if (v > 1) {
    throw WireError(ErrorCode::SchemaMismatch,
                    std::string(field) + " must be 0 or 1, got " + std::to_string(v));
  }
  return v;
}

Action get_action(ByteReader& r) {
  return static_cast<Action>(get_flag(r, "action"));
}

void put_experience(ByteWriter& w, const Experience& e) {
  put_state(w, e.s);
  w.put(static_cast<std::uint8_t>(e.a));
  put_state(w, e.s_next);
  w.put(e.r);
  w.put(static_cast<std::uint8_t>(e.done ? 1 : 0));
}

void get_experience(ByteReader& r, Experience& e) {
  get_state(r, e.s);
  e.a = get_action(r);
  get_state(r, e.s_next);
  e.r = r.get<float>();
  e.done = get_flag(r, "done") != 0;
}

void put_experiences(ByteWriter& w, const std::vector<Experience>& items) {
  w.reserve(4 + items.size() * kExperienceBytes + 16);
  w.put_count(items.size());
  for (const auto& e : items) put_experience(w, e);
}

void get_experiences(ByteReader& r, std::vector<Experience>& items) {
  items.resize(r.get_count(kExperienceBytes));
  for (auto& e : items) get_experience(r, e);
}

template <typename F>
Bytes write_with(F&& f) {
  ByteWriter w;
  f(w);
  return w.take();
}

template <typename F>
void read_with(std::span<const std::uint8_t> body, F&& f) {
  ByteReader r(body);
  f(r);
  r.finish();
}

}  // namespace

Bytes encode(const Empty&) { return {}; }
void decode(std::span<const std::uint8_t> body, Empty&) {
  read_with(body, [](ByteReader&) {});
}

Bytes encode(const StateQuery& v) {
  return write_with([&](ByteWriter& w) {
    w.put_count(v.agents.size());
    for (auto a : v.agents) w.put(a);
  });
}
void decode(std::span<const std::uint8_t> body, StateQuery& out) {
  read_with(body, [&](ByteReader& r) {
    out.agents.resize(r.get_count(4));
    for (auto& a : out.agents) a = r.get<std::uint32_t>();
  });
}

Bytes encode(const StatesReply& v) {
  return write_with([&](ByteWriter& w) {
    w.reserve(12 + v.states.size() * kStateBytes);
    w.put(v.barrier_waits);
    w.put_count(v.states.size());
    for (const auto& s : v.states) put_state(w, s);
  });
}
void decode(std::span<const std::uint8_t> body, StatesReply& out) {
  read_with(body, [&](ByteReader& r) {
    out.barrier_waits = r.get<std::uint64_t>();
    out.states.resize(r.get_count(kStateBytes));
    for (auto& s : out.states) get_state(r, s);
  });
}

Bytes encode(const ActionList& v) {
  return write_with([&](ByteWriter& w) {
    w.put_count(v.actions.size());
    for (const auto& a : v.actions) {
      w.put(a.agent);
      w.put(static_cast<std::uint8_t>(a.action));
    }
  });
}
void decode(std::span<const std::uint8_t> body, ActionList& out) {
  read_with(body, [&](ByteReader& r) {
    out.actions.resize(r.get_count(5));
    for (auto& a : out.actions) {
      a.agent = r.get<std::uint32_t>();
      a.action = get_action(r);
    }
  });
}

Bytes encode(const StepReply& v) {
  return write_with([&](ByteWriter& w) {
    w.put_count(v.results.size());
    for (const auto& s : v.results) {
      w.put(s.reward);
      w.put(s.kind);
    }
  });
}
void decode(std::span<const std::uint8_t> body, StepReply& out) {
  read_with(body, [&](ByteReader& r) {
    out.results.resize(r.get_count(5));
    for (auto& s : out.results) {
      s.reward = r.get<float>();
      s.kind = r.get<std::uint8_t>();
      if (s.kind > 3) {
        throw WireError(ErrorCode::SchemaMismatch, "terminal kind out of range: " + std::to_string(s.kind));
      }
    }
  });
}

Bytes encode(const ResetVehicleRequest& v) {
  return write_with([&](ByteWriter& w) {
    w.put(v.agent);
    w.put(v.x);
    w.put(v.y);
    w.put(v.z);
    w.put(v.yaw);
  });
}
void decode(std::span<const std::uint8_t> body, ResetVehicleRequest& out) {
  read_with(body, [&](ByteReader& r) {
    out.agent = r.get<std::uint32_t>();
    out.x = r.get<float>();
    out.y = r.get<float>();
    out.z = r.get<float>();
    out.yaw = r.get<float>();
  });
}

Bytes encode(const ExperienceBatch& v) {
  return write_with([&](ByteWriter& w) { put_experiences(w, v.items); });
}
void decode(std::span<const std::uint8_t> body, ExperienceBatch& out) {
  read_with(body, [&](ByteReader& r) { get_experiences(r, out.items); });
}

Bytes encode(const replay::PushResult& v) {
  return write_with([&](ByteWriter& w) {
    w.put(static_cast<std::uint64_t>(v.accepted));
    w.put_count(v.rejected.size());
    for (const auto& j : v.rejected) {
      w.put(static_cast<std::uint32_t>(j.index));
      w.put_string(j.reason);
    }
  });
}
void decode(std::span<const std::uint8_t> body, replay::PushResult& out) {
  read_with(body, [&](ByteReader& r) {
    out.accepted = r.get<std::uint64_t>();
    out.rejected.resize(r.get_count(8));
    for (auto& j : out.rejected) {
      j.index = r.get<std::uint32_t>();
      j.reason = r.get_string();
    }
  });
}

Bytes encode(const SampleRequest& v) {
  return write_with([&](ByteWriter& w) { w.put(v.n); });
}
void decode(std::span<const std::uint8_t> body, SampleRequest& out) {
  read_with(body, [&](ByteReader& r) { out.n = r.get<std::uint32_t>(); });
}

Bytes encode(const SampleReply& v) {
  return write_with([&](ByteWriter& w) {
    w.put(static_cast<std::uint8_t>(v.ready ? 1 : 0));
    put_experiences(w, v.items);
  });
}
void decode(std::span<const std::uint8_t> body, SampleReply& out) {
  read_with(body, [&](ByteReader& r) {
    out.ready = get_flag(r, "ready") != 0;
    get_experiences(r, out.items);
  });
}

Bytes encode(const replay::ReplayStats& v) {
  return write_with([&](ByteWriter& w) {
    w.put(v.len);
    w.put(v.capacity);
    w.put(v.total_actions);
    w.put(v.insert_count);
  });
}
void decode(std::span<const std::uint8_t> body, replay::ReplayStats& out) {
  read_with(body, [&](ByteReader& r) {
    out.len = r.get<std::uint64_t>();
    out.capacity = r.get<std::uint64_t>();
    out.total_actions = r.get<std::uint64_t>();
    out.insert_count = r.get<std::uint64_t>();
  });
}

Bytes encode(const ParamsRequest& v) {
  return write_with([&](ByteWriter& w) { w.put(v.have_version); });
}
void decode(std::span<const std::uint8_t> body, ParamsRequest& out) {
  read_with(body, [&](ByteReader& r) { out.have_version = r.get<std::uint64_t>(); });
}

Bytes encode(const ParamsReply& v) {
  return write_with([&](ByteWriter& w) {
    w.put(static_cast<std::uint8_t>(v.up_to_date ? 1 : 0));
    w.put(v.version);
    w.put_bytes(v.blob);
  });
}
void decode(std::span<const std::uint8_t> body, ParamsReply& out) {
  read_with(body, [&](ByteReader& r) {
    out.up_to_date = get_flag(r, "up_to_date") != 0;
    out.version = r.get<std::uint64_t>();
    out.blob = r.get_bytes();
  });
}

Bytes encode(const EpisodeRecord& v) {
  return write_with([&](ByteWriter& w) {
    w.put(v.agent);
    w.put(v.episode);
    w.put(v.reward);
    w.put(v.steps);
    w.put(v.epsilon);
    w.put(v.t_start_us);
    w.put(v.t_end_us);
  });
}
void decode(std::span<const std::uint8_t> body, EpisodeRecord& out) {
  read_with(body, [&](ByteReader& r) {
    out.agent = r.get<std::uint32_t>();
    out.episode = r.get<std::uint64_t>();
    out.reward = r.get<float>();
    out.steps = r.get<std::uint32_t>();
    out.epsilon = r.get<float>();
    out.t_start_us = r.get<std::uint64_t>();
    out.t_end_us = r.get<std::uint64_t>();
  });
}

Bytes encode(const HealthReply& v) {
  return write_with([&](ByteWriter& w) { w.put_string(v.role); });
}
void decode(std::span<const std::uint8_t> body, HealthReply& out) {
  read_with(body, [&](ByteReader& r) { out.role = r.get_string(); });
}

Bytes encode(const ErrorBody& v) {
  return write_with([&](ByteWriter& w) {
    w.put(v.code);
    w.put_string(v.message);
  });
}
void decode(std::span<const std::uint8_t> body, ErrorBody& out) {
  read_with(body, [&](ByteReader& r) {
    out.code = r.get<std::uint16_t>();
    out.message = r.get_string();
  });
}

}  // namespace quadrl::wire
