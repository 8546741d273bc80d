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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pdsim {

// Simulated time is integer microseconds everywhere.
using TimeUs = std::int64_t;
using RequestId = std::int64_t;
using Tokens = std::int64_t;
using Bytes = std::int64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Analytical description of a dense or sparse transformer. The KV-cache
// geometry (layers, kv_heads, head_dim, bytes_per_element) feeds
// kv_cache_bytes; flops_per_token and weight_bytes feed the cost model.
struct ModelSpec {
  std::string name = "llama70b-like";
  std::int64_t layers = 80;
  std::int64_t kv_heads = 8;
  std::int64_t head_dim = 128;
  std::int64_t bytes_per_element = 2;
  double flops_per_token = 1.4e11;
  Bytes weight_bytes = 140'000'000'000;

  static ModelSpec llama70b_like();
  // Mixtral-8x7B-like: full expert weights resident, ~13B active parameters
  // per token.
  static ModelSpec moe_like();
  static ModelSpec preset(std::string_view name);

  // Bytes of KV cache written per token of context.
  Bytes kv_bytes_per_token() const;
};

// One logical device. A tensor-parallel group is represented by a single
// GpuSpec whose rates and capacity are the group aggregate (see aggregate()).
struct GpuSpec {
  std::string name = "mi300x-like";
  std::int64_t num_cus = 304;
  double peak_flops = 1.3074e15;
  double hbm_bandwidth = 5.3e12;
  Bytes hbm_capacity = 192'000'000'000;
  double kernel_launch_overhead_us = 10.0;
  double interconnect_bandwidth = 50e9;

  static GpuSpec mi300x_like();
  static GpuSpec preset(std::string_view name);

  // Logical device made of `devices` identical GPUs. Launch overhead and the
  // inter-pool link are not aggregated.
  GpuSpec aggregate(std::int64_t devices) const;
};

// KV cache bytes of one sequence: 2 (keys and values) x L x S x H x D x E.
Bytes kv_cache_bytes(const ModelSpec& model, Tokens seq_len);

// Every violated invariant of the pair, one message per violation, each
// naming the offending field. Empty means the specs are usable together.
std::vector<std::string> validate_specs(const ModelSpec& model, const GpuSpec& gpu);

struct AllocationDecision {
  enum class Mode : std::uint8_t { Overallocate, Partition };

  Mode mode = Mode::Overallocate;
  double cu_fraction_decode = 1.0;
  double cu_fraction_prefill = 1.0;
  // Set when the profile could not certify the decode SLO.
  bool slo_risk = false;

  static AllocationDecision overallocate();
  // Throws std::invalid_argument unless both fractions are positive and sum
  // to at most one.
  static AllocationDecision partition(double cu_decode, double cu_prefill);

  bool is_partition() const { return mode == Mode::Partition; }
  bool valid() const;
};

enum class RequestState : std::uint8_t {
  Arrived,
  PendingKv,
  WaitingPrefill,
  Prefilling,
  PrefillFinished,
  Decoding,
  Finished,
  Rejected,
};

std::string_view to_string(RequestState state);

// Forward edges of the request lifecycle. The graph is acyclic; Finished and
// Rejected are the only terminal states.
bool is_valid_transition(RequestState from, RequestState to);
bool is_terminal(RequestState state);

struct Request {
  RequestId id = 0;
  TimeUs arrival_us = 0;
  Tokens prompt_tokens = 1;
  Tokens output_tokens = 1;
  RequestState state = RequestState::Arrived;
  std::vector<TimeUs> token_times_us;
  TimeUs first_token_us = -1;

  // Engine bookkeeping, not part of any file schema.
  TimeUs prefill_done_us = -1;
  std::int64_t decode_participations = 0;
  std::int64_t preemptions = 0;
  // Prompt tokens processed by prefill since the last (re)start.
  Tokens prefill_tokens_done = 0;

  // Throws std::logic_error on an edge is_valid_transition rejects.
  void transition(RequestState next);

  // Records one delivered output token. Throws std::logic_error if `t` does
  // not strictly follow the previous token or the output target is reached.
  void deliver_token(TimeUs t);

  // Recompute-on-resume after a KV preemption: delivered tokens are kept
  // and the request re-enters the queue at `resume_state`. This is the one
  // sanctioned way back up the lifecycle and is counted in `preemptions`.
  void restart_after_preemption(RequestState resume_state);

  Tokens delivered() const { return static_cast<Tokens>(token_times_us.size()); }
  bool done_generating() const { return delivered() >= output_tokens; }
  // Tokens with KV entries once the prompt and every delivered token are in
  // the cache: the amount a prefill must recompute after preemption.
  Tokens context_tokens() const { return prompt_tokens + delivered(); }
};

}  // namespace pdsim
