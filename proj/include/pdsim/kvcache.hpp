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
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdsim/core.hpp"

namespace pdsim {

using BlockId = std::int32_t;

Tokens blocks_needed(Tokens tokens, Tokens block_size);

struct BlockPoolConfig {
  Tokens block_size = 16;
  // Share of post-weight HBM held back for activations and workspace.
  double activation_reserve = 0.10;
};

enum class AllocStatus : std::uint8_t { Ok, InsufficientCapacity };

// Paged KV-cache block manager. Single owner; never shared across engines.
class BlockPool {
 public:
  BlockPool(std::int64_t total_blocks, Tokens block_size);

  // Largest pool whose KV fits in (capacity - weights) * (1 - reserve).
  static BlockPool for_device(const ModelSpec& model, const GpuSpec& gpu,
                              const BlockPoolConfig& cfg);

  // All-or-nothing: on failure the pool is untouched.
  AllocStatus allocate_prompt(RequestId id, Tokens prompt_tokens);
  // Accounts for one more token of `id`, taking a block only when the token
  // crosses a block boundary.
  AllocStatus extend_for_token(RequestId id);
  // Returns every block of `id` to the free list. Unknown ids free nothing.
  std::int64_t release(RequestId id);

  bool holds(RequestId id) const { return owned_.count(id) != 0; }
  std::span<const BlockId> blocks_of(RequestId id) const;
  Tokens tokens_written(RequestId id) const;

  std::int64_t total_blocks() const { return total_blocks_; }
  std::int64_t free_blocks() const { return static_cast<std::int64_t>(free_.size()); }
  std::int64_t used_blocks() const { return total_blocks_ - free_blocks(); }
  std::int64_t peak_used_blocks() const { return peak_used_; }
  Tokens block_size() const { return block_size_; }
  std::int64_t unknown_releases() const { return unknown_releases_; }
  bool can_fit(Tokens tokens) const { return blocks_needed(tokens, block_size_) <= free_blocks(); }

  // Accounting-invariant violations; empty when consistent. Cost is linear
  // in the number of owners, so it is cheap enough to run after every event.
  std::vector<std::string> audit() const;
  // Full scan of every block id for double ownership and stray ids.
  std::vector<std::string> deep_audit() const;

 private:
  struct Owned {
    std::vector<BlockId> blocks;
    Tokens tokens = 0;
  };

  BlockId take(RequestId id);

  std::int64_t total_blocks_;
  Tokens block_size_;
  std::vector<BlockId> free_;
  // Owner of each block, -1 when free. Checked on every hand-out and return.
  std::vector<RequestId> owner_;
  std::int64_t ownership_faults_ = 0;
  std::unordered_map<RequestId, Owned> owned_;
  std::int64_t peak_used_ = 0;
  std::int64_t unknown_releases_ = 0;
};

}  // namespace pdsim
