/* Copyright 2026 The pdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string_view>
#include <vector>

#include "pdsim/core.hpp"

namespace pdsim {

enum class EventKind : std::uint8_t {
  Arrival,
  PrefillIterDone,
  DecodeIterDone,
  TransferDone,
  NotifyPrefillReady,
  NotifyKvAllocated,
  SimEnd,
};

inline constexpr std::size_t kNumEventKinds = 7;

std::string_view to_string(EventKind kind);

struct Event {
  TimeUs time_us = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Arrival;
  // Engine instance (pool member, or 0/1 for the prefill/decode side).
  std::int32_t instance = 0;
  RequestId request = -1;
  // Free-form payload: iteration generation, batch size, and so on.
  std::int64_t tag = 0;
};

// Strict (time, seq) order; a min-heap uses the inverse.
inline bool event_before(const Event& a, const Event& b) {
  return a.time_us != b.time_us ? a.time_us < b.time_us : a.seq < b.seq;
}

class EventQueue {
 public:
  void push(const Event& e);
  Event pop();
  const Event& top() const { return heap_.front(); }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  std::vector<Event> heap_;
};

class CausalityError : public Error {
 public:
  using Error::Error;
};

class Simulator {
 public:
  using Handler = std::function<void(const Event&)>;

  explicit Simulator(TimeUs start_us = 0) : now_(start_us) {}

  TimeUs now() const { return now_; }

  // Enqueues with a fresh sequence number. Throws CausalityError when
  // `time_us` precedes the clock.
  std::uint64_t schedule(TimeUs time_us, EventKind kind, std::int32_t instance = 0,
                         RequestId request = -1, std::int64_t tag = 0);
  std::uint64_t schedule_after(TimeUs delay_us, EventKind kind, std::int32_t instance = 0,
                               RequestId request = -1, std::int64_t tag = 0);

  // Dispatches the earliest event. Returns false when the queue is empty.
  bool step(const Handler& handler);
  // Dispatches until the queue is empty or the next event lies past
  // `until_us` (negative: no limit). Returns events dispatched.
  std::uint64_t run(const Handler& handler, TimeUs until_us = -1);

  std::size_t pending() const { return queue_.size(); }
  std::uint64_t dispatched() const { return dispatched_; }
  std::uint64_t dispatched(EventKind kind) const {
    return counts_[static_cast<std::size_t>(kind)];
  }

  // One JSON object per dispatched event.
  void set_trace(std::ostream* out) { trace_ = out; }

 private:
  TimeUs now_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  std::array<std::uint64_t, kNumEventKinds> counts_{};
  EventQueue queue_;
  std::ostream* trace_ = nullptr;
};

}  // namespace pdsim
