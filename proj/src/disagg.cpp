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

#include "pdsim/disagg.hpp"

#include <algorithm>
#include <cmath>

namespace pdsim {

std::vector<std::string> DisaggConfig::validate() const {
  std::vector<std::string> errors;
  if (prefill_instances < 1) errors.push_back("disagg.prefill_instances must be >= 1");
  if (decode_instances < 1) errors.push_back("disagg.decode_instances must be >= 1");
  if (prefill_tp < 1) errors.push_back("disagg.prefill_tp must be >= 1");
  if (decode_tp < 1) errors.push_back("disagg.decode_tp must be >= 1");
  if (interconnect_bandwidth < 0) errors.push_back("disagg.interconnect_bandwidth must be > 0");
  if (!(transfer_overlap_fraction >= 0 && transfer_overlap_fraction <= 1)) {
    errors.push_back("disagg.transfer_overlap_fraction must be in [0, 1]");
  }
  if (max_decode_batch < 1) errors.push_back("disagg.max_decode_batch must be >= 1");
  return errors;
}

double transfer_delay_us(const ModelSpec& model, Tokens tokens, double bandwidth,
                         double overlap_fraction) {
  if (!(bandwidth > 0)) throw std::invalid_argument("transfer_delay_us: bandwidth must be > 0");
  return (1.0 - overlap_fraction) * static_cast<double>(kv_cache_bytes(model, tokens)) /
         bandwidth * 1e6;
}

namespace {
std::int64_t sum_used(const auto& instances) {
  std::int64_t n = 0;
  for (const auto& x : instances) n += x.pool.used_blocks();
  return n;
}
}  // namespace

DisaggEngine::DisaggEngine(const EngineSetup& setup, DisaggConfig cfg)
    : cfg_(cfg),
      model_(setup.model),
      bandwidth_(cfg.interconnect_bandwidth > 0 ? cfg.interconnect_bandwidth
                                                : setup.gpu.interconnect_bandwidth),
      prefill_occ_("prefill", std::max<std::int64_t>(1, cfg.prefill_instances) *
                                  post_weight_blocks(setup.model, setup.gpu.aggregate(std::max<std::int64_t>(1, cfg.prefill_tp)),
                                                     setup.kv.block_size)),
      decode_occ_("decode", std::max<std::int64_t>(1, cfg.decode_instances) *
                                post_weight_blocks(setup.model, setup.gpu.aggregate(std::max<std::int64_t>(1, cfg.decode_tp)),
                                                   setup.kv.block_size)) {
  auto errors = cfg_.validate();
  if (!errors.empty()) throw std::invalid_argument(errors.front());
  const GpuSpec pg = setup.gpu.aggregate(cfg_.prefill_tp);
  const GpuSpec dg = setup.gpu.aggregate(cfg_.decode_tp);
  for (std::int64_t i = 0; i < cfg_.prefill_instances; ++i) {
    prefill_.emplace_back(CostModel(setup.model, pg, setup.cost),
                          BlockPool::for_device(setup.model, pg, setup.kv));
  }
  for (std::int64_t j = 0; j < cfg_.decode_instances; ++j) {
    decode_.emplace_back(CostModel(setup.model, dg, setup.cost),
                         BlockPool::for_device(setup.model, dg, setup.kv));
  }
}

void DisaggEngine::on_bind() {
  for (auto& p : prefill_) p.device = ledger().add_device(p.cost.gpu().num_cus);
  for (auto& d : decode_) d.device = ledger().add_device(d.cost.gpu().num_cus);
  prefill_occ_.record(0, 0);
  decode_occ_.record(0, 0);
}

void DisaggEngine::on_arrival(RequestId id) {
  const auto n = static_cast<std::size_t>(id) + 1;
  if (prefill_of_.size() < n) {
    prefill_of_.resize(n, -1);
    prefill_start_.resize(n, -1);
    transfer_done_.resize(n, -1);
    recompute_us_.resize(n, -1);
  }
  req(id).transition(RequestState::WaitingPrefill);
  route(id);
  track();
}

void DisaggEngine::route(RequestId id) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < prefill_.size(); ++i) {
    if (prefill_[i].load_tokens < prefill_[best].load_tokens) best = i;
  }
  auto& p = prefill_[best];
  p.queue.push_back(id);
  p.load_tokens += req(id).context_tokens();
  prefill_of_[static_cast<std::size_t>(id)] = static_cast<std::int32_t>(best);
  maybe_start_prefill(best);
}

void DisaggEngine::maybe_start_prefill(std::size_t i) {
  auto& p = prefill_[i];
  if (p.running >= 0 || p.queue.empty()) return;
  const RequestId id = p.queue.front();
  Request& r = req(id);
  if (p.pool.allocate_prompt(id, r.context_tokens()) != AllocStatus::Ok) return;
  p.queue.pop_front();
  p.running = id;
  r.transition(RequestState::Prefilling);
  const TimeUs start = now() + static_cast<TimeUs>(std::ceil(p.cost.host_step_us()));
  const TimeUs end =
      start + static_cast<TimeUs>(std::ceil(p.cost.prefill_us(r.context_tokens(), 1.0, false)));
  prefill_start_[static_cast<std::size_t>(id)] = start;
  ledger().add(p.device, start, end, 1.0);
  sim().schedule(end, EventKind::PrefillIterDone, static_cast<std::int32_t>(i), id);
}

void DisaggEngine::on_event(const Event& e) {
  const auto inst = static_cast<std::size_t>(e.instance);
  switch (e.kind) {
    case EventKind::PrefillIterDone:
      on_prefill_done(inst, e.request);
      break;
    case EventKind::TransferDone:
      on_transfer_done(inst, e.request);
      break;
    case EventKind::DecodeIterDone:
      on_decode_done(inst);
      break;
    default:
      throw Error("disagg: unexpected event " + std::string(to_string(e.kind)));
  }
  track();
}

void DisaggEngine::on_prefill_done(std::size_t i, RequestId id) {
  auto& p = prefill_[i];
  Request& r = req(id);
  p.running = -1;
  p.load_tokens -= r.context_tokens();
  r.prefill_done_us = now();
  r.prefill_tokens_done = r.context_tokens();
  r.transition(RequestState::PrefillFinished);

  std::size_t best = 0;
  for (std::size_t j = 1; j < decode_.size(); ++j) {
    if (decode_[j].pool.free_blocks() > decode_[best].pool.free_blocks()) best = j;
  }
  decode_[best].awaiting_kv.push_back(id);
  try_admit(best);
  maybe_start_prefill(i);
}

void DisaggEngine::try_admit(std::size_t j) {
  auto& d = decode_[j];
  while (!d.awaiting_kv.empty()) {
    const RequestId id = d.awaiting_kv.front();
    if (d.pool.allocate_prompt(id, req(id).context_tokens()) != AllocStatus::Ok) break;
    d.awaiting_kv.pop_front();
    start_transfer(j, id);
  }
}

void DisaggEngine::start_transfer(std::size_t j, RequestId id) {
  auto& d = decode_[j];
  d.in_transfer.push_back(id);
  ++transfers_;
  const double delay = transfer_delay_us(model_, req(id).context_tokens(), bandwidth_,
                                         cfg_.transfer_overlap_fraction);
  sim().schedule(now() + static_cast<TimeUs>(std::ceil(delay)), EventKind::TransferDone,
                 static_cast<std::int32_t>(j), id);
}

void DisaggEngine::on_transfer_done(std::size_t j, RequestId id) {
  auto& d = decode_[j];
  d.in_transfer.erase(std::find(d.in_transfer.begin(), d.in_transfer.end(), id));
  const auto i = static_cast<std::size_t>(prefill_of_[static_cast<std::size_t>(id)]);
  prefill_[i].pool.release(id);
  prefill_hold_.emplace_back(prefill_start_[static_cast<std::size_t>(id)], now());
  transfer_done_[static_cast<std::size_t>(id)] = now();
  d.recompute.push_back(id);
  maybe_start_prefill(i);
  // The recompute step was prepared when the transfer was issued.
  maybe_start_decode(j, true);
}

bool DisaggEngine::ensure_decode_slot(DecodeInstance& d, RequestId id) {
  while (d.pool.extend_for_token(id) != AllocStatus::Ok) {
    auto victim_it = std::max_element(d.running.begin(), d.running.end(), [&](RequestId x, RequestId y) {
      const TimeUs ax = req(x).arrival_us, ay = req(y).arrival_us;
      return ax != ay ? ax < ay : x < y;
    });
    const RequestId victim = *victim_it;
    d.running.erase(victim_it);
    d.pool.release(victim);
    req(victim).restart_after_preemption(RequestState::WaitingPrefill);
    ++preemptions_;
    route(victim);
    if (victim == id) return false;
  }
  return true;
}

void DisaggEngine::maybe_start_decode(std::size_t j, bool from_idle) {
  auto& d = decode_[j];
  if (d.step != Step::Idle) return;
  const bool can_recompute =
      !d.recompute.empty() && static_cast<std::int64_t>(d.running.size()) < cfg_.max_decode_batch;
  const bool alternate = d.last == Step::Recompute && !d.running.empty();
  TimeUs start = now();
  if (can_recompute && !alternate) {
    const RequestId id = d.recompute.front();
    d.recompute.pop_front();
    if (!from_idle) start += static_cast<TimeUs>(std::ceil(d.cost.host_step_us()));
    const double gpu = d.cost.decode_us(1, d.pool.tokens_written(id), 1.0, false);
    recompute_us_[static_cast<std::size_t>(id)] = static_cast<TimeUs>(std::ceil(gpu));
    d.batch = {id};
    d.step = Step::Recompute;
    ++recomputes_;
    const TimeUs end = start + static_cast<TimeUs>(std::ceil(gpu));
    ledger().add(d.device, start, end, 1.0);
    sim().schedule(end, EventKind::DecodeIterDone, static_cast<std::int32_t>(j), id, 1);
    return;
  }
  if (d.running.empty()) return;
  const std::vector<RequestId> snapshot = d.running;
  for (RequestId id : snapshot) {
    if (std::find(d.running.begin(), d.running.end(), id) == d.running.end()) continue;
    ensure_decode_slot(d, id);
  }
  if (d.running.empty()) return;
  Tokens kv = 0;
  for (RequestId id : d.running) kv += d.pool.tokens_written(id);
  const double gpu =
      d.cost.decode_us(static_cast<std::int64_t>(d.running.size()), kv, 1.0, false);
  start += static_cast<TimeUs>(std::ceil(d.cost.host_step_us()));
  d.batch = d.running;
  d.step = Step::Decode;
  ++decode_steps_;
  const TimeUs end = start + static_cast<TimeUs>(std::ceil(gpu));
  ledger().add(d.device, start, end, 1.0);
  sim().schedule(end, EventKind::DecodeIterDone, static_cast<std::int32_t>(j), -1, 0);
}

void DisaggEngine::on_decode_done(std::size_t j) {
  auto& d = decode_[j];
  const TimeUs t = now();
  bool released = false;
  if (d.step == Step::Recompute) {
    const RequestId id = d.batch.front();
    Request& r = req(id);
    r.transition(RequestState::Decoding);
    ++r.decode_participations;
    r.deliver_token(t);
    if (r.done_generating()) {
      finish(r);
      d.pool.release(id);
      released = true;
    } else {
      d.running.push_back(id);
    }
  } else {
    for (RequestId id : d.batch) {
      Request& r = req(id);
      ++r.decode_participations;
      r.deliver_token(t);
      if (r.done_generating()) {
        finish(r);
        d.pool.release(id);
        d.running.erase(std::find(d.running.begin(), d.running.end(), id));
        released = true;
      }
    }
  }
  d.last = d.step;
  d.step = Step::Idle;
  d.batch.clear();
  if (released) try_admit(j);
  maybe_start_decode(j, false);
}

void DisaggEngine::on_horizon() {
  for (auto& p : prefill_) {
    for (auto it = p.queue.begin(); it != p.queue.end();) {
      Request& r = req(*it);
      r.transition(RequestState::Rejected);
      p.load_tokens -= r.context_tokens();
      ++rejected_;
      it = p.queue.erase(it);
    }
  }
  track();
}

void DisaggEngine::track() {
  prefill_occ_.record(now(), sum_used(prefill_));
  decode_occ_.record(now(), sum_used(decode_));
}

std::vector<std::string> DisaggEngine::deep_audit() const {
  auto out = audit();
  for (const auto& p : prefill_) {
    for (auto& v : p.pool.deep_audit()) out.push_back("prefill pool: " + v);
  }
  for (const auto& d : decode_) {
    for (auto& v : d.pool.deep_audit()) out.push_back("decode pool: " + v);
  }
  return out;
}

std::vector<std::string> DisaggEngine::audit() const {
  std::vector<std::string> out;
  std::vector<RequestId> all;
  for (const auto& p : prefill_) {
    for (auto& v : p.pool.audit()) out.push_back("prefill pool: " + v);
    all.insert(all.end(), p.queue.begin(), p.queue.end());
    if (p.running >= 0) all.push_back(p.running);
    if (p.running < 0 && !p.queue.empty() && p.pool.can_fit(req(p.queue.front()).context_tokens())) {
      out.push_back("disagg: prefill instance idle with runnable work");
    }
  }
  for (const auto& d : decode_) {
    for (auto& v : d.pool.audit()) out.push_back("decode pool: " + v);
    all.insert(all.end(), d.awaiting_kv.begin(), d.awaiting_kv.end());
    all.insert(all.end(), d.in_transfer.begin(), d.in_transfer.end());
    all.insert(all.end(), d.recompute.begin(), d.recompute.end());
    all.insert(all.end(), d.running.begin(), d.running.end());
    if (d.step == Step::Idle && !d.running.empty()) out.push_back("disagg: decode idle with work");
  }
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    out.push_back("disagg: request in two queues");
  }
  return out;
}

std::vector<PoolStats> DisaggEngine::pool_stats(const MeasurementWindow& window) const {
  std::int64_t pp = 0, dp = 0;
  for (const auto& p : prefill_) pp += p.pool.peak_used_blocks();
  for (const auto& d : decode_) dp += d.pool.peak_used_blocks();
  return {PoolStats{"prefill", prefill_occ_.capacity_blocks(), pp,
                    prefill_occ_.time_average_fraction(window)},
          PoolStats{"decode", decode_occ_.capacity_blocks(), dp,
                    decode_occ_.time_average_fraction(window)}};
}

std::map<std::string, std::int64_t> DisaggEngine::counters() const {
  return {{"transfers", transfers_},
          {"recompute_steps", recomputes_},
          {"decode_steps", decode_steps_},
          {"preemptions", preemptions_},
          {"rejected_at_horizon", rejected_}};
}

}  // namespace pdsim
