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

#include "pdsim/core.hpp"

#include <cmath>

namespace pdsim {

ModelSpec ModelSpec::llama70b_like() { return ModelSpec{}; }

ModelSpec ModelSpec::moe_like() {
  ModelSpec m;
  m.name = "moe-like";
  m.layers = 32;
  m.kv_heads = 8;
  m.head_dim = 128;
  m.bytes_per_element = 2;
  m.flops_per_token = 2.0 * 12.9e9;
  m.weight_bytes = 93'400'000'000;
  return m;
}

ModelSpec ModelSpec::preset(std::string_view name) {
  if (name == "llama70b-like") return llama70b_like();
  if (name == "moe-like") return moe_like();
  throw Error("unknown model preset '" + std::string(name) + "'");
}

Bytes ModelSpec::kv_bytes_per_token() const { return kv_cache_bytes(*this, 1); }

GpuSpec GpuSpec::mi300x_like() { return GpuSpec{}; }

GpuSpec GpuSpec::preset(std::string_view name) {
  if (name == "mi300x-like") return mi300x_like();
  throw Error("unknown gpu preset '" + std::string(name) + "'");
}

GpuSpec GpuSpec::aggregate(std::int64_t devices) const {
  if (devices < 1) throw std::invalid_argument("aggregate: devices must be >= 1");
  GpuSpec g = *this;
  if (devices > 1) g.name = name + "-x" + std::to_string(devices);
  g.num_cus = num_cus * devices;
  g.peak_flops = peak_flops * static_cast<double>(devices);
  g.hbm_bandwidth = hbm_bandwidth * static_cast<double>(devices);
  g.hbm_capacity = hbm_capacity * devices;
  return g;
}

Bytes kv_cache_bytes(const ModelSpec& model, Tokens seq_len) {
  if (seq_len < 0) throw std::invalid_argument("kv_cache_bytes: seq_len must be >= 0");
  return 2 * model.layers * seq_len * model.kv_heads * model.head_dim *
         model.bytes_per_element;
}

std::vector<std::string> validate_specs(const ModelSpec& model, const GpuSpec& gpu) {
  std::vector<std::string> errors;
  auto positive = [&errors](bool ok, const char* field) {
    if (!ok) errors.push_back(std::string(field) + " must be > 0");
  };
  positive(model.layers > 0, "model.layers");
  positive(model.kv_heads > 0, "model.kv_heads");
  positive(model.head_dim > 0, "model.head_dim");
  positive(model.bytes_per_element > 0, "model.bytes_per_element");
  positive(model.flops_per_token > 0, "model.flops_per_token");
  positive(model.weight_bytes > 0, "model.weight_bytes");

  if (gpu.num_cus < 2) errors.push_back("gpu.num_cus must be >= 2");
  positive(gpu.peak_flops > 0, "gpu.peak_flops");
  positive(gpu.hbm_bandwidth > 0, "gpu.hbm_bandwidth");
  positive(gpu.hbm_capacity > 0, "gpu.hbm_capacity");
  positive(gpu.kernel_launch_overhead_us > 0, "gpu.kernel_launch_overhead_us");
  positive(gpu.interconnect_bandwidth > 0, "gpu.interconnect_bandwidth");

  if (model.weight_bytes >= gpu.hbm_capacity) {
    errors.push_back("weights do not fit: model.weight_bytes >= gpu.hbm_capacity");
  }
  return errors;
}

AllocationDecision AllocationDecision::overallocate() { return {}; }

AllocationDecision AllocationDecision::partition(double cu_decode, double cu_prefill) {
  AllocationDecision d;
  d.mode = Mode::Partition;
  d.cu_fraction_decode = cu_decode;
  d.cu_fraction_prefill = cu_prefill;
  if (!d.valid()) {
    throw std::invalid_argument("partition: fractions must be > 0 and sum to <= 1");
  }
  return d;
}

bool AllocationDecision::valid() const {
  if (mode == Mode::Overallocate) {
    return cu_fraction_decode == 1.0 && cu_fraction_prefill == 1.0;
  }
  return cu_fraction_decode > 0.0 && cu_fraction_prefill > 0.0 &&
         cu_fraction_decode + cu_fraction_prefill <= 1.0 + 1e-12;
}

std::string_view to_string(RequestState state) {
  switch (state) {
    case RequestState::Arrived: return "Arrived";
    case RequestState::PendingKv: return "PendingKv";
    case RequestState::WaitingPrefill: return "WaitingPrefill";
    case RequestState::Prefilling: return "Prefilling";
    case RequestState::PrefillFinished: return "PrefillFinished";
    case RequestState::Decoding: return "Decoding";
    case RequestState::Finished: return "Finished";
    case RequestState::Rejected: return "Rejected";
  }
  return "?";
}

bool is_valid_transition(RequestState from, RequestState to) {
  using S = RequestState;
  switch (from) {
    case S::Arrived:
      return to == S::PendingKv || to == S::WaitingPrefill || to == S::Rejected;
    case S::PendingKv:
      return to == S::WaitingPrefill || to == S::Rejected;
    case S::WaitingPrefill:
      return to == S::Prefilling || to == S::Rejected;
    // Engines whose prefill emits the first token move straight to Decoding.
    case S::Prefilling:
      return to == S::PrefillFinished || to == S::Decoding;
    case S::PrefillFinished:
      return to == S::Decoding;
    case S::Decoding:
      return to == S::Finished;
    case S::Finished:
    case S::Rejected:
      return false;
  }
  return false;
}

bool is_terminal(RequestState state) {
  return state == RequestState::Finished || state == RequestState::Rejected;
}

void Request::transition(RequestState next) {
  if (!is_valid_transition(state, next)) {
    throw std::logic_error("request " + std::to_string(id) + ": invalid transition " +
                           std::string(to_string(state)) + " -> " +
                           std::string(to_string(next)));
  }
  state = next;
}

void Request::deliver_token(TimeUs t) {
  if (done_generating()) {
    throw std::logic_error("request " + std::to_string(id) + ": token beyond output target");
  }
  if (!token_times_us.empty() && t <= token_times_us.back()) {
    throw std::logic_error("request " + std::to_string(id) +
                           ": token timestamps must strictly increase");
  }
  if (token_times_us.empty()) first_token_us = t;
  token_times_us.push_back(t);
}

void Request::restart_after_preemption(RequestState resume_state) {
  if (state != RequestState::Decoding && state != RequestState::PrefillFinished) {
    throw std::logic_error("request " + std::to_string(id) + ": preempted outside decode");
  }
  state = resume_state;
  prefill_tokens_done = 0;
  ++preemptions;
}

}  // namespace pdsim
