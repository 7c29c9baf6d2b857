#pragma once

// Message bodies. Lists are u32 count-prefixed, strings and blobs u32
// length-prefixed, floats 32-bit. A DepthImage is 1024 floats, row-major; a
// StackedState is image_now, image_prev, then 3 velocity floats.
//
//   kind                 request                      response
//   GetBatchStates       [u32 agent]                  u64 barrier_waits, [StackedState]
//   GetStatesNonBatched  [u32 agent]                  u64 barrier_waits, [StackedState]
//   ApplyActions         [u32 agent, u8 action]       -
//   StepPeriod           -                            [f32 reward, u8 terminal kind]
//   ResetVehicle         u32 agent, f32 x y z yaw     -
//   ResetAll             -                            -
//   PushExperiences      [Experience]                 u64 accepted, [u32 index, str reason]
//   SampleBatch          u32 n                        u8 ready, [Experience]
//   ReplayStats          -                            u64 len, capacity, total_actions, inserts
//   GetParams            u64 have_version             u8 up_to_date, u64 version, blob
//   ReportEpisode        EpisodeRecord                -
//   Health               -                            str role
//   ErrorResponse        -                            u16 code, str message
//
// Experience: StackedState s, u8 action, StackedState s_next, f32 reward, u8 done.
// EpisodeRecord: u32 agent, u64 episode, f32 reward, u32 steps, f32 epsilon,
//                u64 t_start_us, u64 t_end_us.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "quadrl/replay.hpp"
#include "quadrl/state.hpp"
#include "quadrl/wire/frame.hpp"

namespace quadrl::wire {

struct Empty {
  bool operator==(const Empty&) const = default;
};

struct StateQuery {
  std::vector<std::uint32_t> agents;
  bool operator==(const StateQuery&) const = default;
};

struct StatesReply {
  std::uint64_t barrier_waits = 0;
  std::vector<StackedState> states;
  bool operator==(const StatesReply&) const = default;
};

struct AgentAction {
  std::uint32_t agent = 0;
  Action action = Action::Left;
  bool operator==(const AgentAction&) const = default;
};

struct ActionList {
  std::vector<AgentAction> actions;
  bool operator==(const ActionList&) const = default;
};

struct StepResult {
  float reward = 0.0f;
  std::uint8_t kind = 0;  // sim::TerminalKind
  bool operator==(const StepResult&) const = default;
};

struct StepReply {
  std::vector<StepResult> results;  // one per agent, in agent order
  bool operator==(const StepReply&) const = default;
};

struct ResetVehicleRequest {
  std::uint32_t agent = 0;
  float x = 0, y = 0, z = 0, yaw = 0;
  bool operator==(const ResetVehicleRequest&) const = default;
};

struct ExperienceBatch {
  std::vector<Experience> items;
  bool operator==(const ExperienceBatch&) const = default;
};

struct SampleRequest {
  std::uint32_t n = 0;
  bool operator==(const SampleRequest&) const = default;
};

struct SampleReply {
  bool ready = false;
  std::vector<Experience> items;
  bool operator==(const SampleReply&) const = default;
};

struct ParamsRequest {
  std::uint64_t have_version = 0;
  bool operator==(const ParamsRequest&) const = default;
};

struct ParamsReply {
  bool up_to_date = false;
  std::uint64_t version = 0;
  Bytes blob;  // empty when up_to_date
  bool operator==(const ParamsReply&) const = default;
};

struct EpisodeRecord {
  std::uint32_t agent = 0;
  std::uint64_t episode = 0;
  float reward = 0.0f;
  std::uint32_t steps = 0;
  float epsilon = 0.0f;
  std::uint64_t t_start_us = 0;
  std::uint64_t t_end_us = 0;
  bool operator==(const EpisodeRecord&) const = default;
};

struct HealthReply {
  std::string role;
  bool operator==(const HealthReply&) const = default;
};

struct ErrorBody {
  std::uint16_t code = 0;
  std::string message;
  bool operator==(const ErrorBody&) const = default;
};

#define QUADRL_WIRE_CODEC(T)  \
  Bytes encode(const T& v);   \
  void decode(std::span<const std::uint8_t> body, T& out);

QUADRL_WIRE_CODEC(Empty)
QUADRL_WIRE_CODEC(StateQuery)
QUADRL_WIRE_CODEC(StatesReply)
QUADRL_WIRE_CODEC(ActionList)
QUADRL_WIRE_CODEC(StepReply)
QUADRL_WIRE_CODEC(ResetVehicleRequest)
QUADRL_WIRE_CODEC(ExperienceBatch)
QUADRL_WIRE_CODEC(replay::PushResult)
QUADRL_WIRE_CODEC(SampleRequest)
QUADRL_WIRE_CODEC(SampleReply)
QUADRL_WIRE_CODEC(replay::ReplayStats)
QUADRL_WIRE_CODEC(ParamsRequest)
QUADRL_WIRE_CODEC(ParamsReply)
QUADRL_WIRE_CODEC(EpisodeRecord)
QUADRL_WIRE_CODEC(HealthReply)
QUADRL_WIRE_CODEC(ErrorBody)

#undef QUADRL_WIRE_CODEC

/// Decodes a whole body; throws WireError(SchemaMismatch / TrailingBytes).
template <typename T>
T decode_as(std::span<const std::uint8_t> body) {
  T out{};
  decode(body, out);
  return out;
}

/// Request/response body types per kind.
template <MessageKind K>
struct Rpc;

#define QUADRL_WIRE_RPC(K, Req, Resp) \
  template <>                         \
  struct Rpc<MessageKind::K> {        \
    using Request = Req;              \
    using Response = Resp;            \
  };

QUADRL_WIRE_RPC(GetBatchStates, StateQuery, StatesReply)
QUADRL_WIRE_RPC(GetStatesNonBatched, StateQuery, StatesReply)
QUADRL_WIRE_RPC(ApplyActions, ActionList, Empty)
QUADRL_WIRE_RPC(StepPeriod, Empty, StepReply)
QUADRL_WIRE_RPC(ResetVehicle, ResetVehicleRequest, Empty)
QUADRL_WIRE_RPC(ResetAll, Empty, Empty)
QUADRL_WIRE_RPC(PushExperiences, ExperienceBatch, replay::PushResult)
QUADRL_WIRE_RPC(SampleBatch, SampleRequest, SampleReply)
QUADRL_WIRE_RPC(ReplayStats, Empty, replay::ReplayStats)
QUADRL_WIRE_RPC(GetParams, ParamsRequest, ParamsReply)
QUADRL_WIRE_RPC(ReportEpisode, EpisodeRecord, Empty)
QUADRL_WIRE_RPC(Health, Empty, HealthReply)

#undef QUADRL_WIRE_RPC

}  // namespace quadrl::wire
