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

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdsim/engine.hpp"

namespace pdsim {

struct HybridConfig {
  // Tokens per iteration: the chunk size.
  Tokens token_budget = 512;
  std::int64_t max_batch_requests = 256;
  std::int64_t tp = 8;

  std::vector<std::string> validate() const;
};

struct PrefillCandidate {
  RequestId id = 0;
  Tokens remaining = 0;
  bool started = false;
};

struct BatchDescriptor {
  std::vector<RequestId> decode;
  std::vector<std::pair<RequestId, Tokens>> chunks;
  Tokens prefill_tokens = 0;

  std::int64_t requests() const { return static_cast<std::int64_t>(decode.size() + chunks.size()); }
  Tokens tokens() const { return static_cast<Tokens>(decode.size()) + prefill_tokens; }
  bool empty() const { return decode.empty() && chunks.empty(); }
};

// Decode-first fill: one token per running request, then prefill chunks
// FCFS from `waiting` up to the token budget. `admit` is called for a
// candidate that has not started before its first chunk is taken; false
// stops the fill, so a blocked head is never overtaken.
BatchDescriptor hybrid_fill(const HybridConfig& cfg, std::span<const RequestId> running,
                            std::span<const PrefillCandidate> waiting,
                            const std::function<bool(RequestId)>& admit);

class HybridEngine final : public Engine {
 public:
  struct IterationLog {
    TimeUs start_us = 0;
    TimeUs end_us = 0;
    std::int64_t decode = 0;
    Tokens prefill_tokens = 0;
  };

  HybridEngine(const EngineSetup& setup, HybridConfig cfg);

  std::string label() const override;
  void on_arrival(RequestId id) override;
  void on_event(const Event& e) override;
  void on_horizon() override;
  std::vector<std::string> audit() const override;
  std::vector<std::string> deep_audit() const override;
  std::vector<PoolStats> pool_stats(const MeasurementWindow& window) const override;
  std::map<std::string, std::int64_t> counters() const override;

  const CostModel& cost() const { return cost_; }
  const BlockPool& pool() const { return pool_; }
  const HybridConfig& config() const { return cfg_; }
  // Prompt tokens scheduled as chunks for each request, summed over runs.
  const std::vector<Tokens>& chunk_tokens() const { return chunk_tokens_; }
  void set_iteration_log(std::vector<IterationLog>* log) { log_ = log; }

 private:
  void on_bind() override;
  void maybe_start();
  void complete_iteration();
  bool ensure_decode_slot(RequestId id);
  void enqueue_waiting(RequestId id);
  void track();

  HybridConfig cfg_;
  SloSpec slo_;
  CostModel cost_;
  BlockPool pool_;
  OccupancyTracker occupancy_;
  std::int32_t device_ = 0;

  std::deque<RequestId> waiting_;
  std::vector<RequestId> running_;
  bool busy_ = false;
  BatchDescriptor batch_;
  TimeUs batch_start_ = 0;

  std::vector<Tokens> chunk_tokens_;
  std::vector<IterationLog>* log_ = nullptr;
  std::int64_t iterations_ = 0;
  std::int64_t preemptions_ = 0;
  std::int64_t rejected_ = 0;
};

}  // namespace pdsim
