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
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pdsim/core.hpp"
#include "pdsim/costmodel.hpp"

namespace pdsim {

struct ProfileConfig {
  double itl_slo_us = 100'000.0;
  double safety_margin = 0.9;
  // Per-request context assumed when sizing the decode KV footprint.
  Tokens reference_context = 2128;
  // Empty selects the default grid 1, 2, 4, ..., 1024.
  std::vector<std::int64_t> batch_grid;

  std::vector<std::string> validate() const;
};

std::vector<std::int64_t> default_batch_grid();

struct ProfileEntry {
  std::int64_t batch = 0;
  double min_fraction = 1.0;
  bool saturated = false;
};

struct Profile {
  double itl_slo_us = 0.0;
  double safety_margin = 0.0;
  std::int64_t num_cus = 0;
  Tokens reference_context = 0;
  std::vector<ProfileEntry> entries;

  // Smallest grid entry whose batch is >= `batch`; none past the grid.
  const ProfileEntry* lookup(std::int64_t batch) const;
  double grid_step() const { return 1.0 / static_cast<double>(num_cus); }
};

// Lowest grid index k considered: the decode plateau floor.
std::int64_t min_grid_index(const CostModel& cost);

// Smallest fraction k/num_cus (k >= min_grid_index) whose concurrent decode
// time fits `target_us`; nullopt when even the full device misses it.
std::optional<double> min_decode_fraction(const CostModel& cost, std::int64_t batch,
                                          Tokens total_kv_tokens, double target_us);

// Throws std::invalid_argument on an empty or non-increasing grid or a
// non-positive SLO.
Profile build_profile(const CostModel& cost, const ProfileConfig& cfg);

void write_profile(std::ostream& out, const Profile& profile);
Profile read_profile(std::istream& in);
void save_profile(const std::string& path, const Profile& profile);
Profile load_profile(const std::string& path);

// Chooses the compute split for the next decode step. `decode_kv_tokens`
// is the batch's actual KV context, used for the contention prediction and
// to confirm the profile entry.
AllocationDecision allocate(const Profile& profile, const CostModel& cost,
                            std::int64_t decode_batch, Tokens prefill_pending_tokens,
                            Tokens decode_kv_tokens);

}  // namespace pdsim
