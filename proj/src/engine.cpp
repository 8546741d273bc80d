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

#include "pdsim/engine.hpp"

#include <cmath>

namespace pdsim {

std::int64_t post_weight_blocks(const ModelSpec& model, const GpuSpec& gpu, Tokens block_size) {
  const double free_bytes = static_cast<double>(gpu.hbm_capacity - model.weight_bytes);
  const double block_bytes =
      static_cast<double>(block_size) * static_cast<double>(model.kv_bytes_per_token());
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(free_bytes / block_bytes)));
}

void Engine::bind(Simulator* sim, std::vector<Request>* requests, BusyLedger* ledger) {
  sim_ = sim;
  requests_ = requests;
  ledger_ = ledger;
  on_bind();
}

namespace {

constexpr std::size_t kMaxViolationMessages = 50;
constexpr std::uint64_t kDeepAuditEvery = 4096;

void note(RunResult& out, std::string msg) {
  ++out.violation_count;
  if (out.violations.size() < kMaxViolationMessages) out.violations.push_back(std::move(msg));
}

}  // namespace

RunResult run_simulation(Engine& engine, std::vector<Request> trace, const RunOptions& opts) {
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].id != static_cast<RequestId>(i)) throw Error("trace ids must be 0..n-1 in order");
    if (trace[i].state != RequestState::Arrived) throw Error("trace requests must be fresh");
  }
  RunResult out;
  Simulator sim;
  sim.set_trace(opts.event_trace);
  BusyLedger ledger;
  out.requests = std::move(trace);
  engine.bind(&sim, &out.requests, &ledger);

  for (const auto& r : out.requests) sim.schedule(r.arrival_us, EventKind::Arrival, 0, r.id);
  const auto horizon = static_cast<TimeUs>(std::llround((opts.duration_s + opts.drain_s) * 1e6));
  sim.schedule(horizon, EventKind::SimEnd);

  auto handler = [&](const Event& e) {
    switch (e.kind) {
      case EventKind::Arrival:
        engine.on_arrival(e.request);
        break;
      case EventKind::SimEnd:
        engine.on_horizon();
        break;
      default:
        engine.on_event(e);
        break;
    }
    if (!opts.audit) return;
    const bool deep = sim.dispatched() % kDeepAuditEvery == 0;
    for (auto& v : deep ? engine.deep_audit() : engine.audit()) {
      note(out, "t=" + std::to_string(e.time_us) + " after " + std::string(to_string(e.kind)) +
                    ": " + v);
    }
  };
  sim.run(handler);
  out.end_us = sim.now();
  if (opts.audit) {
    for (auto& v : engine.deep_audit()) note(out, "at end: " + v);
  }
  for (std::size_t k = 0; k < kNumEventKinds; ++k) {
    out.event_counts[k] = sim.dispatched(static_cast<EventKind>(k));
  }
  for (const auto& r : out.requests) {
    if (!is_terminal(r.state)) {
      note(out, "request " + std::to_string(r.id) + " stranded in " +
                    std::string(to_string(r.state)));
    }
  }

  const auto window = measurement_window(opts.duration_s, opts.warmup_fraction);
  std::vector<RequestRecord> records;
  records.reserve(out.requests.size());
  for (const auto& r : out.requests) records.push_back(make_record(r, opts.slo));
  out.summary = summarize(std::move(records), opts.slo, window, ledger.utilization(window),
                          engine.pool_stats(window));
  out.summary.engine = engine.label();
  out.summary.qps = opts.qps;
  out.summary.counters = engine.counters();
  for (std::size_t k = 0; k < kNumEventKinds; ++k) {
    out.summary.counters["events." + std::string(to_string(static_cast<EventKind>(k)))] =
        static_cast<std::int64_t>(out.event_counts[k]);
  }
  return out;
}

}  // namespace pdsim
