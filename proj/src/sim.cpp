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

#include "pdsim/sim.hpp"

#include <algorithm>
#include <string>

namespace pdsim {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Arrival: return "Arrival";
    case EventKind::PrefillIterDone: return "PrefillIterDone";
    case EventKind::DecodeIterDone: return "DecodeIterDone";
    case EventKind::TransferDone: return "TransferDone";
    case EventKind::NotifyPrefillReady: return "NotifyPrefillReady";
    case EventKind::NotifyKvAllocated: return "NotifyKvAllocated";
    case EventKind::SimEnd: return "SimEnd";
  }
  return "?";
}

namespace {
bool heap_less(const Event& a, const Event& b) { return event_before(b, a); }
}  // namespace

void EventQueue::push(const Event& e) {
  heap_.push_back(e);
  std::push_heap(heap_.begin(), heap_.end(), heap_less);
}

Event EventQueue::pop() {
  std::pop_heap(heap_.begin(), heap_.end(), heap_less);
  Event e = heap_.back();
  heap_.pop_back();
  return e;
}

std::uint64_t Simulator::schedule(TimeUs time_us, EventKind kind, std::int32_t instance,
                                  RequestId request, std::int64_t tag) {
  if (time_us < now_) {
    throw CausalityError("event " + std::string(to_string(kind)) + " scheduled at " +
                         std::to_string(time_us) + " before clock " + std::to_string(now_));
  }
  Event e{time_us, next_seq_++, kind, instance, request, tag};
  queue_.push(e);
  return e.seq;
}

std::uint64_t Simulator::schedule_after(TimeUs delay_us, EventKind kind, std::int32_t instance,
                                        RequestId request, std::int64_t tag) {
  return schedule(now_ + delay_us, kind, instance, request, tag);
}

bool Simulator::step(const Handler& handler) {
  if (queue_.empty()) return false;
  const Event e = queue_.pop();
  if (e.time_us < now_) throw CausalityError("event queue returned a past event");
  now_ = e.time_us;
  ++dispatched_;
  ++counts_[static_cast<std::size_t>(e.kind)];
  if (trace_) {
    *trace_ << "{\"t\":" << e.time_us << ",\"seq\":" << e.seq << ",\"kind\":\""
            << to_string(e.kind) << "\",\"instance\":" << e.instance
            << ",\"request\":" << e.request << ",\"tag\":" << e.tag << "}\n";
  }
  handler(e);
  return true;
}

std::uint64_t Simulator::run(const Handler& handler, TimeUs until_us) {
  std::uint64_t n = 0;
  while (!queue_.empty()) {
    if (until_us >= 0 && queue_.top().time_us > until_us) break;
    step(handler);
    ++n;
  }
  return n;
}

}  // namespace pdsim
