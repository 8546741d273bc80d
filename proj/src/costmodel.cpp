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

#include "pdsim/costmodel.hpp"

#include <algorithm>
#include <stdexcept>

namespace pdsim {

std::vector<std::string> CostParams::validate() const {
  std::vector<std::string> errors;
  if (!(decode_plateau_fraction > 0.0 && decode_plateau_fraction <= 1.0)) {
    errors.push_back("cost.decode_plateau_fraction must be in (0, 1]");
  }
  if (!(prefill_mem_interference >= 1.0 && prefill_mem_interference <= 1.2)) {
    errors.push_back("cost.prefill_mem_interference must be in [1.0, 1.2]");
  }
  if (!(decode_mem_interference >= 1.0 && decode_mem_interference <= 1.2)) {
    errors.push_back("cost.decode_mem_interference must be in [1.0, 1.2]");
  }
  if (!(cpu_step_overhead_us >= 0.0)) errors.push_back("cost.cpu_step_overhead_us must be >= 0");
  if (!(fixed_iteration_overhead_us >= 0.0)) {
    errors.push_back("cost.fixed_iteration_overhead_us must be >= 0");
  }
  return errors;
}

CostModel::CostModel(ModelSpec model, GpuSpec gpu, CostParams params)
    : model_(std::move(model)), gpu_(std::move(gpu)), params_(params) {
  auto errors = validate_specs(model_, gpu_);
  auto more = params_.validate();
  errors.insert(errors.end(), more.begin(), more.end());
  if (!errors.empty()) {
    std::string msg = "invalid cost model:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
}

double CostModel::compute_us(double flops, double cu_fraction) const {
  return flops / (gpu_.peak_flops * cu_fraction) * 1e6;
}

double CostModel::memory_us(Tokens kv_tokens) const {
  const double bytes = static_cast<double>(model_.weight_bytes) +
                       static_cast<double>(kv_cache_bytes(model_, kv_tokens));
  return bytes / gpu_.hbm_bandwidth * 1e6;
}

static void check_fraction(double cu_fraction) {
  if (!(cu_fraction > 0.0) || cu_fraction > 1.0) {
    throw std::invalid_argument("cu_fraction must be in (0, 1]");
  }
}

double CostModel::prefill_us(Tokens tokens, double cu_fraction, bool concurrent) const {
  if (tokens < 1) throw std::invalid_argument("prefill_us: tokens must be >= 1");
  check_fraction(cu_fraction);
  const double flops = static_cast<double>(tokens) * model_.flops_per_token;
  double t = std::max(compute_us(flops, cu_fraction), memory_us(tokens));
  if (concurrent) t *= params_.prefill_mem_interference;
  return t + params_.fixed_iteration_overhead_us;
}

double CostModel::decode_us(std::int64_t batch, Tokens total_kv_tokens, double cu_fraction,
                            bool concurrent) const {
  if (batch < 1) throw std::invalid_argument("decode_us: batch must be >= 1");
  if (total_kv_tokens < 0) throw std::invalid_argument("decode_us: kv tokens must be >= 0");
  check_fraction(cu_fraction);
  const double flops = static_cast<double>(batch) * model_.flops_per_token;
  double t = std::max(compute_us(flops, cu_fraction), memory_us(total_kv_tokens));
  if (concurrent) t *= params_.decode_mem_interference;
  return t + params_.fixed_iteration_overhead_us;
}

double CostModel::hybrid_us(Tokens prefill_tokens, std::int64_t decode_batch,
                            Tokens total_kv_tokens) const {
  if (prefill_tokens < 0 || decode_batch < 0 || prefill_tokens + decode_batch < 1) {
    throw std::invalid_argument("hybrid_us: empty batch");
  }
  if (total_kv_tokens < 0) throw std::invalid_argument("hybrid_us: kv tokens must be >= 0");
  const double flops =
      static_cast<double>(prefill_tokens + decode_batch) * model_.flops_per_token;
  return std::max(compute_us(flops, 1.0), memory_us(total_kv_tokens)) +
         params_.fixed_iteration_overhead_us;
}

PhaseTimes CostModel::overlapped_us(Tokens prefill_tokens, std::int64_t decode_batch,
                                    Tokens total_kv_tokens,
                                    const AllocationDecision& alloc) const {
  if (!alloc.valid()) throw std::invalid_argument("overlapped_us: invalid allocation");
  if (prefill_tokens < 0 || decode_batch < 0 || prefill_tokens + decode_batch < 1) {
    throw std::invalid_argument("overlapped_us: both phases empty");
  }
  PhaseTimes out;
  if (alloc.is_partition()) {
    if (prefill_tokens > 0) out.prefill_us = prefill_us(prefill_tokens, alloc.cu_fraction_prefill, true);
    if (decode_batch > 0) {
      out.decode_us = decode_us(decode_batch, total_kv_tokens, alloc.cu_fraction_decode, true);
    }
    return out;
  }
  if (decode_batch == 0) {
    out.prefill_us = prefill_us(prefill_tokens, 1.0, false);
    return out;
  }
  if (prefill_tokens == 0) {
    out.decode_us = decode_us(decode_batch, total_kv_tokens, 1.0, false);
    return out;
  }
  const double joint_flops =
      static_cast<double>(prefill_tokens + decode_batch) * model_.flops_per_token;
  const double shared = compute_us(joint_flops, 1.0);
  out.prefill_us = std::max(shared, memory_us(prefill_tokens)) * params_.prefill_mem_interference +
                   params_.fixed_iteration_overhead_us;
  out.decode_us = std::max(shared, memory_us(total_kv_tokens)) * params_.decode_mem_interference +
                  params_.fixed_iteration_overhead_us;
  return out;
}

double CostModel::host_step_us() const {
  return params_.cpu_step_overhead_us + gpu_.kernel_launch_overhead_us;
}

}  // namespace pdsim
