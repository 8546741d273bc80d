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
#include <string>
#include <vector>

#include "pdsim/engine.hpp"

namespace pdsim {

struct DisaggConfig {
  std::int64_t prefill_instances = 1;
  std::int64_t prefill_tp = 4;
  std::int64_t decode_instances = 1;
  std::int64_t decode_tp = 4;
  // Bytes per second between pools; 0 takes the device's interconnect rate.
  double interconnect_bandwidth = 0.0;
  // Share of the transfer hidden under prompt compute.
  double transfer_overlap_fraction = 0.5;
  std::int64_t max_decode_batch = 256;

  std::vector<std::string> validate() const;
};

// Exposed part of a KV transfer: (1 - overlap) * bytes / bandwidth.
double transfer_delay_us(const ModelSpec& model, Tokens tokens, double bandwidth,
                         double overlap_fraction);

class DisaggEngine final : public Engine {
 public:
  DisaggEngine(const EngineSetup& setup, DisaggConfig cfg);

  std::string label() const override { return "disagg"; }
  void on_arrival(RequestId id) override;
  void on_event(const Event& e) override;
  void on_horizon() override;
  std::vector<std::string> audit() const override;
  std::vector<std::string> deep_audit() const override;
  std::vector<PoolStats> pool_stats(const MeasurementWindow& window) const override;
  std::map<std::string, std::int64_t> counters() const override;

  const DisaggConfig& config() const { return cfg_; }
  double bandwidth() const { return bandwidth_; }
  const CostModel& decode_cost() const { return decode_.front().cost; }
  const CostModel& prefill_cost() const { return prefill_.front().cost; }
  // Per request, -1 until known.
  const std::vector<TimeUs>& transfer_done_us() const { return transfer_done_; }
  const std::vector<TimeUs>& recompute_us() const { return recompute_us_; }
  // Prefill-pool KV holding windows [prefill start, TransferDone].
  const std::vector<std::pair<TimeUs, TimeUs>>& prefill_hold() const { return prefill_hold_; }

 private:
  struct PrefillInstance {
    PrefillInstance(CostModel c, BlockPool p) : cost(std::move(c)), pool(std::move(p)) {}
    CostModel cost;
    BlockPool pool;
    std::deque<RequestId> queue;
    RequestId running = -1;
    Tokens load_tokens = 0;
    std::int32_t device = 0;
  };
  enum class Step : std::uint8_t { Idle, Decode, Recompute };
  struct DecodeInstance {
    DecodeInstance(CostModel c, BlockPool p) : cost(std::move(c)), pool(std::move(p)) {}
    CostModel cost;
    BlockPool pool;
    // Prefilled requests waiting for decode-pool blocks.
    std::deque<RequestId> awaiting_kv;
    std::vector<RequestId> in_transfer;
    std::deque<RequestId> recompute;
    std::vector<RequestId> running;
    Step step = Step::Idle;
    Step last = Step::Idle;
    std::vector<RequestId> batch;
    std::int32_t device = 0;
  };

  void on_bind() override;
  void route(RequestId id);
  void maybe_start_prefill(std::size_t i);
  void on_prefill_done(std::size_t i, RequestId id);
  void try_admit(std::size_t j);
  void start_transfer(std::size_t j, RequestId id);
  void on_transfer_done(std::size_t j, RequestId id);
  void maybe_start_decode(std::size_t j, bool from_idle);
  void on_decode_done(std::size_t j);
  bool ensure_decode_slot(DecodeInstance& d, RequestId id);
  void track();

  DisaggConfig cfg_;
  ModelSpec model_;
  double bandwidth_;
  std::vector<PrefillInstance> prefill_;
  std::vector<DecodeInstance> decode_;
  OccupancyTracker prefill_occ_;
  OccupancyTracker decode_occ_;

  std::vector<std::int32_t> prefill_of_;
  std::vector<TimeUs> prefill_start_;
  std::vector<TimeUs> transfer_done_;
  std::vector<TimeUs> recompute_us_;
  std::vector<std::pair<TimeUs, TimeUs>> prefill_hold_;

  std::int64_t transfers_ = 0;
  std::int64_t recomputes_ = 0;
  std::int64_t decode_steps_ = 0;
  std::int64_t preemptions_ = 0;
  std::int64_t rejected_ = 0;
};

}  // namespace pdsim
