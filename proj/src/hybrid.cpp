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

#include "pdsim/hybrid.hpp"

#include <algorithm>
#include <cmath>

namespace pdsim {

std::vector<std::string> HybridConfig::validate() const {
  std::vector<std::string> errors;
  if (token_budget < 1) errors.push_back("hybrid.token_budget must be >= 1");
  if (max_batch_requests < 1) errors.push_back("hybrid.max_batch_requests must be >= 1");
  if (tp < 1) errors.push_back("hybrid.tp must be >= 1");
  return errors;
}

BatchDescriptor hybrid_fill(const HybridConfig& cfg, std::span<const RequestId> running,
                            std::span<const PrefillCandidate> waiting,
                            const std::function<bool(RequestId)>& admit) {
  BatchDescriptor b;
  const auto cap = std::min<std::int64_t>(cfg.max_batch_requests, cfg.token_budget);
  for (RequestId id : running) {
    if (static_cast<std::int64_t>(b.decode.size()) >= cap) break;
    b.decode.push_back(id);
  }
  Tokens left = cfg.token_budget - static_cast<Tokens>(b.decode.size());
  for (const auto& c : waiting) {
    if (left <= 0 || b.requests() >= cfg.max_batch_requests) break;
    if (c.remaining <= 0) continue;
    if (!c.started && !admit(c.id)) break;
    const Tokens chunk = std::min(left, c.remaining);
    b.chunks.emplace_back(c.id, chunk);
    b.prefill_tokens += chunk;
    left -= chunk;
  }
  return b;
}

HybridEngine::HybridEngine(const EngineSetup& setup, HybridConfig cfg)
    : cfg_(cfg),
      slo_(setup.slo),
      cost_(setup.model, setup.gpu.aggregate(cfg.tp), setup.cost),
      pool_(BlockPool::for_device(setup.model, setup.gpu.aggregate(cfg.tp), setup.kv)),
      occupancy_("device", post_weight_blocks(setup.model, setup.gpu.aggregate(cfg.tp),
                                              setup.kv.block_size)) {
  auto errors = cfg_.validate();
  if (!errors.empty()) throw std::invalid_argument(errors.front());
}

std::string HybridEngine::label() const { return "hybrid-" + std::to_string(cfg_.token_budget); }

void HybridEngine::on_bind() {
  device_ = ledger().add_device(cost_.gpu().num_cus);
  occupancy_.record(0, 0);
}

void HybridEngine::enqueue_waiting(RequestId id) {
  const TimeUs a = req(id).arrival_us;
  auto it = std::upper_bound(waiting_.begin(), waiting_.end(), id, [&](RequestId x, RequestId y) {
    const TimeUs ax = x == id ? a : req(x).arrival_us;
    const TimeUs ay = req(y).arrival_us;
    return ax != ay ? ax < ay : x < y;
  });
  waiting_.insert(it, id);
}

void HybridEngine::on_arrival(RequestId id) {
  Request& r = req(id);
  if (static_cast<std::size_t>(id) >= chunk_tokens_.size()) chunk_tokens_.resize(id + 1, 0);
  r.transition(RequestState::WaitingPrefill);
  waiting_.push_back(id);
  maybe_start();
  track();
}

bool HybridEngine::ensure_decode_slot(RequestId id) {
  while (pool_.extend_for_token(id) != AllocStatus::Ok) {
    // Evict the most recently arrived running request.
    auto victim_it = std::max_element(running_.begin(), running_.end(), [&](RequestId x, RequestId y) {
      const TimeUs ax = req(x).arrival_us, ay = req(y).arrival_us;
      return ax != ay ? ax < ay : x < y;
    });
    const RequestId victim = *victim_it;
    running_.erase(victim_it);
    pool_.release(victim);
    req(victim).restart_after_preemption(RequestState::WaitingPrefill);
    enqueue_waiting(victim);
    ++preemptions_;
    if (victim == id) return false;
  }
  return true;
}

void HybridEngine::maybe_start() {
  if (busy_) return;
  if (running_.empty() && waiting_.empty()) return;

  // Every running request writes one token of KV this step.
  const std::vector<RequestId> snapshot = running_;
  for (RequestId id : snapshot) {
    if (std::find(running_.begin(), running_.end(), id) == running_.end()) continue;
    ensure_decode_slot(id);
  }
  const std::vector<RequestId> decoders = running_;

  std::vector<PrefillCandidate> cands;
  cands.reserve(waiting_.size());
  for (RequestId id : waiting_) {
    const Request& r = req(id);
    cands.push_back({id, r.context_tokens() - r.prefill_tokens_done, pool_.holds(id)});
  }
  auto admit = [&](RequestId id) {
    Request& r = req(id);
    if (pool_.allocate_prompt(id, r.context_tokens()) != AllocStatus::Ok) return false;
    return true;
  };
  batch_ = hybrid_fill(cfg_, decoders, cands, admit);
  if (batch_.empty()) return;

  Tokens kv = 0;
  for (RequestId id : batch_.decode) kv += pool_.tokens_written(id);
  for (const auto& [id, chunk] : batch_.chunks) {
    Request& r = req(id);
    if (r.state == RequestState::WaitingPrefill) r.transition(RequestState::Prefilling);
    kv += r.prefill_tokens_done + chunk;
  }
  const double gpu = cost_.hybrid_us(batch_.prefill_tokens,
                                     static_cast<std::int64_t>(batch_.decode.size()), kv);
  batch_start_ = now() + static_cast<TimeUs>(std::ceil(cost_.host_step_us()));
  const TimeUs end = batch_start_ + static_cast<TimeUs>(std::ceil(gpu));
  busy_ = true;
  ++iterations_;
  ledger().add(device_, batch_start_, end, 1.0);
  sim().schedule(end, EventKind::DecodeIterDone, 0, -1, iterations_);
}

void HybridEngine::on_event(const Event& e) {
  if (e.kind != EventKind::DecodeIterDone) throw Error("hybrid: unexpected event " +
                                                       std::string(to_string(e.kind)));
  complete_iteration();
  maybe_start();
  track();
}

void HybridEngine::complete_iteration() {
  const TimeUs t = now();
  if (log_) {
    log_->push_back({batch_start_, t, static_cast<std::int64_t>(batch_.decode.size()),
                     batch_.prefill_tokens});
  }
  for (RequestId id : batch_.decode) {
    Request& r = req(id);
    ++r.decode_participations;
    r.deliver_token(t);
    if (r.done_generating()) {
      finish(r);
      pool_.release(id);
      running_.erase(std::find(running_.begin(), running_.end(), id));
    }
  }
  for (const auto& [id, chunk] : batch_.chunks) {
    Request& r = req(id);
    r.prefill_tokens_done += chunk;
    chunk_tokens_[static_cast<std::size_t>(id)] += chunk;
    if (r.prefill_tokens_done < r.context_tokens()) continue;
    waiting_.erase(std::find(waiting_.begin(), waiting_.end(), id));
    r.prefill_done_us = t;
    r.transition(RequestState::Decoding);
    r.deliver_token(t);
    if (r.done_generating()) {
      finish(r);
      pool_.release(id);
    } else {
      running_.push_back(id);
    }
  }
  batch_ = {};
  busy_ = false;
}

void HybridEngine::on_horizon() {
  for (auto it = waiting_.begin(); it != waiting_.end();) {
    Request& r = req(*it);
    if (r.state == RequestState::WaitingPrefill && !pool_.holds(*it)) {
      r.transition(RequestState::Rejected);
      ++rejected_;
      it = waiting_.erase(it);
    } else {
      ++it;
    }
  }
  track();
}

void HybridEngine::track() { occupancy_.record(now(), pool_.used_blocks()); }

std::vector<std::string> HybridEngine::deep_audit() const {
  auto out = audit();
  for (auto& v : pool_.deep_audit()) out.push_back(v);
  return out;
}

std::vector<std::string> HybridEngine::audit() const {
  std::vector<std::string> out = pool_.audit();
  std::vector<RequestId> all(waiting_.begin(), waiting_.end());
  all.insert(all.end(), running_.begin(), running_.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    out.push_back("hybrid: request in two queues");
  }
  for (RequestId id : running_) {
    if (req(id).state != RequestState::Decoding) out.push_back("hybrid: running request not Decoding");
  }
  if (!busy_ && (!running_.empty())) out.push_back("hybrid: idle with running decodes");
  return out;
}

std::vector<PoolStats> HybridEngine::pool_stats(const MeasurementWindow& window) const {
  return {PoolStats{occupancy_.name(), occupancy_.capacity_blocks(), pool_.peak_used_blocks(),
                    occupancy_.time_average_fraction(window)}};
}

std::map<std::string, std::int64_t> HybridEngine::counters() const {
  return {{"iterations", iterations_},
          {"preemptions", preemptions_},
          {"rejected_at_horizon", rejected_},
          {"peak_used_blocks", pool_.peak_used_blocks()},
          {"total_blocks", pool_.total_blocks()}};
}

}  // namespace pdsim
