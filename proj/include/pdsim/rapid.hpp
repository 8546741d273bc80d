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
#include <optional>
#include <set>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "pdsim/allocator.hpp"
#include "pdsim/engine.hpp"

namespace pdsim {

struct RapidConfig {
  std::int64_t tp = 8;
  double safety_margin = 0.9;
  // Per-request context for the offline profile; 0 derives it from the
  // workload (mean prompt + mean output / 2).
  Tokens reference_context = 0;
  double notify_latency_us = 0.0;
  std::vector<std::int64_t> profile_batch_grid;
  // Loaded instead of built when set.
  std::string profile_path;

  std::vector<std::string> validate() const;
};

// Prefill and decode share one logical device. The decode side owns the KV
// pool and the running batch; the prefill side runs one whole prompt at a
// time. The two sides talk only through notification events.
class RapidEngine final : public Engine {
 public:
  struct Decision {
    TimeUs time_us = 0;
    std::int64_t batch = 0;
    Tokens prefill_pending = 0;
    Tokens kv_tokens = 0;
    AllocationDecision alloc;
    double decode_us = 0.0;
  };

  RapidEngine(const EngineSetup& setup, RapidConfig cfg, std::optional<Profile> profile = {});

  std::string label() const override { return "rapid"; }
  void on_arrival(RequestId id) override;
  void on_event(const Event& e) override;
  void on_horizon() override;
  std::vector<std::string> audit() const override;
  std::vector<std::string> deep_audit() const override;
  std::vector<PoolStats> pool_stats(const MeasurementWindow& window) const override;
  std::map<std::string, std::int64_t> counters() const override;

  const CostModel& cost() const { return cost_; }
  const Profile& profile() const { return profile_; }
  const BlockPool& pool() const { return pool_; }
  void set_decision_log(std::vector<Decision>* log) { decisions_ = log; }

 private:
  struct DecodeStep {
    bool active = false;
    TimeUs start_us = 0;
    TimeUs end_us = 0;
    double gpu_us = 0.0;
    std::vector<RequestId> batch;
    std::vector<char> delivering;
    AllocationDecision alloc;
    std::int64_t size = 0;
    Tokens kv = 0;
  };
  // Fluid prefill: progress phi runs from 1 to 0 at a piecewise-constant
  // rate that is re-derived whenever the decode side changes regime.
  struct PrefillJob {
    RequestId id = -1;
    Tokens tokens = 0;
    TimeUs gpu_start_us = 0;
    TimeUs anchor_us = 0;
    double phi_anchor = 1.0;
    // (segment start, phi per microsecond, cu fraction)
    std::vector<std::tuple<TimeUs, double, double>> segments;
    TimeUs finish_us = 0;
  };

  void on_bind() override;
  void try_admit_kv();
  void on_kv_allocated(RequestId id);
  void maybe_start_prefill();
  void on_prefill_done(std::int64_t gen);
  void on_prefill_ready(RequestId id);
  void maybe_start_decode();
  void on_decode_done(std::int64_t gen);
  bool ensure_decode_slot(RequestId id);
  void preempt(RequestId victim);

  double phi_at(TimeUs t) const;
  void accrue_prefill_busy(TimeUs until);
  void retime_prefill();
  Tokens prefill_pending_tokens() const;
  TimeUs gap_after(TimeUs last_end, double last_gpu_us) const;
  void insert_by_arrival(std::deque<RequestId>& q, RequestId id);
  void track();

  RapidConfig cfg_;
  CostModel cost_;
  BlockPool pool_;
  Profile profile_;
  OccupancyTracker occupancy_;
  std::int32_t device_ = 0;
  TimeUs notify_us_ = 0;

  // Decode side.
  std::deque<RequestId> waiting_;
  std::set<RequestId> awaiting_prefill_;
  std::deque<RequestId> prefill_finished_;
  std::vector<RequestId> running_;
  std::vector<char> extra_;
  DecodeStep step_;
  std::int64_t decode_gen_ = 0;
  TimeUs decode_last_end_ = -1;
  double decode_last_gpu_ = 0.0;

  // Prefill side.
  std::deque<RequestId> pending_kv_;
  std::deque<RequestId> waiting_prefill_;
  std::optional<PrefillJob> job_;
  std::int64_t prefill_gen_ = 0;
  TimeUs prefill_accrued_until_ = 0;
  TimeUs prefill_last_end_ = -1;
  double prefill_last_gpu_ = 0.0;

  std::vector<TimeUs> ready_us_;
  std::vector<Decision>* decisions_ = nullptr;
  std::int64_t decode_steps_ = 0;
  std::int64_t prefill_jobs_ = 0;
  std::int64_t partition_steps_ = 0;
  std::int64_t overallocate_steps_ = 0;
  std::int64_t contended_steps_ = 0;
  std::int64_t slo_risk_steps_ = 0;
  std::int64_t partition_breaches_ = 0;
  std::int64_t below_profile_ = 0;
  std::int64_t preemptions_ = 0;
  std::int64_t notifications_ = 0;
  std::int64_t rejected_ = 0;
  TimeUs max_admission_wait_ = 0;
  TimeUs max_step_span_ = 0;
};

}  // namespace pdsim
