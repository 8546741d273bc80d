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

#include <string>
#include <vector>

#include "pdsim/core.hpp"

namespace pdsim {

struct CostParams {
  // CU fraction below which decode stops being bandwidth-limited. Also the
  // smallest decode share the offline profile will hand out.
  double decode_plateau_fraction = 0.4;
  // Memory-subsystem slowdowns, applied only while both phases are running.
  double prefill_mem_interference = 1.02;
  double decode_mem_interference = 1.04;
  // Host work (scheduling, input prep) per engine step.
  double cpu_step_overhead_us = 2000.0;
  double fixed_iteration_overhead_us = 50.0;

  std::vector<std::string> validate() const;
};

struct PhaseTimes {
  double prefill_us = 0.0;
  double decode_us = 0.0;
};

// Two-term roofline kernel-time model: an iteration takes the longer of its
// compute time (FLOPs over the CU share of peak) and its memory time (weights
// plus attended KV over HBM bandwidth), plus a fixed per-iteration cost.
// All outputs are microseconds. Pure and re-entrant.
class CostModel {
 public:
  CostModel(ModelSpec model, GpuSpec gpu, CostParams params = {});

  const ModelSpec& model() const { return model_; }
  const GpuSpec& gpu() const { return gpu_; }
  const CostParams& params() const { return params_; }

  double prefill_us(Tokens tokens, double cu_fraction, bool concurrent) const;
  double decode_us(std::int64_t batch, Tokens total_kv_tokens, double cu_fraction,
                   bool concurrent) const;
  // One fused iteration over prefill chunk tokens and decode tokens at full
  // device. `total_kv_tokens` counts every attended token of the batch,
  // including the chunk's own prefix.
  double hybrid_us(Tokens prefill_tokens, std::int64_t decode_batch,
                   Tokens total_kv_tokens) const;

  // Concurrent prefill and decode on one device under `alloc`.
  //
  // Partition: each phase runs on its own CU share with memory interference;
  // decode time does not depend on the prefill load.
  // Overallocate: both phases may use every CU. The hardware scheduler splits
  // compute in proportion to each phase's outstanding work, so the compute
  // term of both phases becomes (W_prefill + W_decode) / peak, where
  // W_prefill is the prefill work coinciding with the decode step.
  // An empty phase reports 0; a sole phase runs at full device without
  // interference.
  PhaseTimes overlapped_us(Tokens prefill_tokens, std::int64_t decode_batch,
                           Tokens total_kv_tokens, const AllocationDecision& alloc) const;

  // Host time per scheduler step (CPU work plus launch).
  double host_step_us() const;

 private:
  double compute_us(double flops, double cu_fraction) const;
  double memory_us(Tokens kv_tokens) const;

  ModelSpec model_;
  GpuSpec gpu_;
  CostParams params_;
};

}  // namespace pdsim
