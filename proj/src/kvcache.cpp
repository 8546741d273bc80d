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

#include "pdsim/kvcache.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdsim {

Tokens blocks_needed(Tokens tokens, Tokens block_size) {
  if (block_size < 1) throw std::invalid_argument("blocks_needed: block_size must be >= 1");
  if (tokens <= 0) return 0;
  return (tokens + block_size - 1) / block_size;
}

BlockPool::BlockPool(std::int64_t total_blocks, Tokens block_size)
    : total_blocks_(total_blocks), block_size_(block_size) {
  if (total_blocks < 0) throw std::invalid_argument("BlockPool: negative block count");
  if (block_size < 1) throw std::invalid_argument("BlockPool: block_size must be >= 1");
  free_.reserve(static_cast<std::size_t>(total_blocks));
  owner_.assign(static_cast<std::size_t>(total_blocks), -1);
  // Stack of free ids; lowest id is handed out first.
  for (std::int64_t b = total_blocks - 1; b >= 0; --b) free_.push_back(static_cast<BlockId>(b));
}

BlockPool BlockPool::for_device(const ModelSpec& model, const GpuSpec& gpu,
                                const BlockPoolConfig& cfg) {
  if (!(cfg.activation_reserve >= 0.0 && cfg.activation_reserve < 1.0)) {
    throw std::invalid_argument("kv.activation_reserve must be in [0, 1)");
  }
  const double post_weight = static_cast<double>(gpu.hbm_capacity - model.weight_bytes);
  if (post_weight <= 0) throw std::invalid_argument("weights do not fit in device memory");
  const double usable = post_weight * (1.0 - cfg.activation_reserve);
  const double block_bytes =
      static_cast<double>(cfg.block_size) * static_cast<double>(model.kv_bytes_per_token());
  return BlockPool(static_cast<std::int64_t>(std::floor(usable / block_bytes)), cfg.block_size);
}

BlockId BlockPool::take(RequestId id) {
  const BlockId b = free_.back();
  free_.pop_back();
  auto& owner = owner_[static_cast<std::size_t>(b)];
  if (owner != -1) ++ownership_faults_;
  owner = id;
  return b;
}

AllocStatus BlockPool::allocate_prompt(RequestId id, Tokens prompt_tokens) {
  if (owned_.count(id)) {
    throw std::logic_error("allocate_prompt: request " + std::to_string(id) + " already holds blocks");
  }
  const Tokens need = blocks_needed(prompt_tokens, block_size_);
  if (need > free_blocks()) return AllocStatus::InsufficientCapacity;
  Owned o;
  o.tokens = prompt_tokens;
  o.blocks.reserve(static_cast<std::size_t>(need));
  for (Tokens i = 0; i < need; ++i) o.blocks.push_back(take(id));
  owned_.emplace(id, std::move(o));
  peak_used_ = std::max(peak_used_, used_blocks());
  return AllocStatus::Ok;
}

AllocStatus BlockPool::extend_for_token(RequestId id) {
  auto it = owned_.find(id);
  if (it == owned_.end()) {
    throw std::logic_error("extend_for_token: request " + std::to_string(id) + " holds no blocks");
  }
  Owned& o = it->second;
  const Tokens need = blocks_needed(o.tokens + 1, block_size_);
  if (need > static_cast<Tokens>(o.blocks.size())) {
    if (free_.empty()) return AllocStatus::InsufficientCapacity;
    o.blocks.push_back(take(id));
    peak_used_ = std::max(peak_used_, used_blocks());
  }
  ++o.tokens;
  return AllocStatus::Ok;
}

std::int64_t BlockPool::release(RequestId id) {
  auto it = owned_.find(id);
  if (it == owned_.end()) {
    ++unknown_releases_;
    return 0;
  }
  const auto n = static_cast<std::int64_t>(it->second.blocks.size());
  for (auto b : it->second.blocks) {
    auto& owner = owner_[static_cast<std::size_t>(b)];
    if (owner != id) ++ownership_faults_;
    owner = -1;
    free_.push_back(b);
  }
  owned_.erase(it);
  return n;
}

std::span<const BlockId> BlockPool::blocks_of(RequestId id) const {
  auto it = owned_.find(id);
  if (it == owned_.end()) return {};
  return it->second.blocks;
}

Tokens BlockPool::tokens_written(RequestId id) const {
  auto it = owned_.find(id);
  return it == owned_.end() ? 0 : it->second.tokens;
}

std::vector<std::string> BlockPool::audit() const {
  std::vector<std::string> errors;
  if (ownership_faults_ > 0) {
    errors.push_back(std::to_string(ownership_faults_) + " block hand-outs or returns with the wrong owner");
  }
  std::int64_t allocated = 0;
  for (const auto& [id, o] : owned_) {
    allocated += static_cast<std::int64_t>(o.blocks.size());
    if (static_cast<Tokens>(o.blocks.size()) < blocks_needed(o.tokens, block_size_)) {
      errors.push_back("request " + std::to_string(id) + ": fewer blocks than tokens need");
    }
  }
  if (free_blocks() + allocated != total_blocks_) {
    errors.push_back("free + allocated != total");
  }
  return errors;
}

std::vector<std::string> BlockPool::deep_audit() const {
  std::vector<std::string> errors;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(total_blocks_), 0);
  // `who` is -1 for the free list.
  auto mark = [&](BlockId b, RequestId who) {
    const char* fault = nullptr;
    if (b < 0 || b >= total_blocks_) {
      fault = "out of range";
    } else if (seen[static_cast<std::size_t>(b)]++) {
      fault = "owned twice";
    } else if (owner_[static_cast<std::size_t>(b)] != who) {
      fault = "has a different recorded owner";
    }
    if (!fault) return;
    const std::string name = who < 0 ? "free list" : "request " + std::to_string(who);
    errors.push_back(name + ": block " + std::to_string(b) + " " + fault);
  };
  for (auto b : free_) mark(b, -1);
  for (const auto& [id, o] : owned_) {
    for (auto b : o.blocks) mark(b, id);
  }
  return errors;
}

}  // namespace pdsim
