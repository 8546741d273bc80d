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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pdsim/core.hpp"
#include "pdsim/costmodel.hpp"
#include "pdsim/kvcache.hpp"
#include "pdsim/metrics.hpp"
#include "pdsim/sim.hpp"

namespace pdsim {

// Shared inputs of every engine. `gpu` describes one physical device; each
// engine aggregates it to its tensor-parallel width.
struct EngineSetup {
  ModelSpec model;
  GpuSpec gpu;
  CostParams cost;
  BlockPoolConfig kv;
  SloSpec slo;
};

// KV blocks that fit in the device memory left after weights, before the
// activation reserve.
std::int64_t post_weight_blocks(const ModelSpec& model, const GpuSpec& gpu, Tokens block_size);

// An engine is a state machine driven by the event loop. It owns its queues
// and KV pools; requests live in the runner's table and are addressed by id.
class Engine {
 public:
  virtual ~Engine() = default;

  virtual std::string label() const = 0;

  void bind(Simulator* sim, std::vector<Request>* requests, BusyLedger* ledger);

  virtual void on_arrival(RequestId id) = 0;
  virtual void on_event(const Event& e) = 0;
  // Past the horizon: requests that have not started prefill are rejected;
  // in-flight work drains.
  virtual void on_horizon() = 0;

  // Structural invariant violations at the current instant.
  virtual std::vector<std::string> audit() const { return {}; }
  // audit() plus checks too slow to run after every event.
  virtual std::vector<std::string> deep_audit() const { return audit(); }
  virtual std::vector<PoolStats> pool_stats(const MeasurementWindow& window) const = 0;
  virtual std::map<std::string, std::int64_t> counters() const { return {}; }

 protected:
  virtual void on_bind() {}

  Request& req(RequestId id) { return (*requests_)[static_cast<std::size_t>(id)]; }
  const Request& req(RequestId id) const { return (*requests_)[static_cast<std::size_t>(id)]; }
  TimeUs now() const { return sim_->now(); }
  Simulator& sim() { return *sim_; }
  BusyLedger& ledger() { return *ledger_; }

  // Marks a request Finished and records nothing else.
  void finish(Request& r) { r.transition(RequestState::Finished); }

 private:
  Simulator* sim_ = nullptr;
  std::vector<Request>* requests_ = nullptr;
  BusyLedger* ledger_ = nullptr;
};

struct RunOptions {
  double duration_s = 60.0;
  double drain_s = 30.0;
  double warmup_fraction = 0.1;
  double qps = 0.0;
  SloSpec slo;
  // Checks Engine::audit after every event and Engine::deep_audit
  // periodically and at the end.
  bool audit = false;
  std::ostream* event_trace = nullptr;
};

struct RunResult {
  RunSummary summary;
  std::vector<Request> requests;
  std::vector<std::string> violations;
  std::int64_t violation_count = 0;
  std::array<std::uint64_t, kNumEventKinds> event_counts{};
  TimeUs end_us = 0;
};

// Runs one trace to completion. The trace's ids must be 0..n-1 in order.
RunResult run_simulation(Engine& engine, std::vector<Request> trace, const RunOptions& opts);

}  // namespace pdsim
