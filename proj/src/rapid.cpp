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

#include "pdsim/rapid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdsim {

std::vector<std::string> RapidConfig::validate() const {
  std::vector<std::string> errors;
  if (tp < 1) errors.push_back("rapid.tp must be >= 1");
  if (!(safety_margin > 0 && safety_margin <= 1)) {
    errors.push_back("rapid.safety_margin must be in (0, 1]");
  }
  if (reference_context < 0) errors.push_back("rapid.reference_context must be >= 0");
  if (!(notify_latency_us >= 0)) errors.push_back("rapid.notify_latency_us must be >= 0");
  return errors;
}

namespace {

Profile make_profile(const CostModel& cost, const RapidConfig& cfg, const SloSpec& slo) {
  if (!cfg.profile_path.empty()) return load_profile(cfg.profile_path);
  ProfileConfig pc;
  pc.itl_slo_us = slo.itl_slo_us;
  pc.safety_margin = cfg.safety_margin;
  pc.reference_context = cfg.reference_context > 0 ? cfg.reference_context : 2128;
  pc.batch_grid = cfg.profile_batch_grid;
  return build_profile(cost, pc);
}

}  // namespace

RapidEngine::RapidEngine(const EngineSetup& setup, RapidConfig cfg, std::optional<Profile> profile)
    : cfg_(std::move(cfg)),
      cost_(setup.model, setup.gpu.aggregate(cfg_.tp), setup.cost),
      pool_(BlockPool::for_device(setup.model, setup.gpu.aggregate(cfg_.tp), setup.kv)),
      profile_(profile ? std::move(*profile) : make_profile(cost_, cfg_, setup.slo)),
      occupancy_("device", post_weight_blocks(setup.model, setup.gpu.aggregate(cfg_.tp),
                                              setup.kv.block_size)),
      notify_us_(static_cast<TimeUs>(std::ceil(cfg_.notify_latency_us))) {
  auto errors = cfg_.validate();
  if (!errors.empty()) throw std::invalid_argument(errors.front());
  if (profile_.num_cus != cost_.gpu().num_cus) {
    throw Error("rapid: profile was built for " + std::to_string(profile_.num_cus) +
                " CUs, device has " + std::to_string(cost_.gpu().num_cus));
  }
  if (std::abs(profile_.itl_slo_us - setup.slo.itl_slo_us) > 1e-6 * setup.slo.itl_slo_us) {
    throw Error("rapid: profile SLO does not match the run SLO");
  }
}

void RapidEngine::on_bind() {
  device_ = ledger().add_device(cost_.gpu().num_cus);
  occupancy_.record(0, 0);
}

void RapidEngine::insert_by_arrival(std::deque<RequestId>& q, RequestId id) {
  const TimeUs a = req(id).arrival_us;
  auto it = std::upper_bound(q.begin(), q.end(), id, [&](RequestId x, RequestId y) {
    const TimeUs ax = x == id ? a : req(x).arrival_us;
    const TimeUs ay = req(y).arrival_us;
    return ax != ay ? ax < ay : x < y;
  });
  q.insert(it, id);
}

TimeUs RapidEngine::gap_after(TimeUs last_end, double last_gpu_us) const {
  const auto host = static_cast<TimeUs>(std::ceil(cost_.host_step_us()));
  if (last_end != now()) return host;
  return std::max<TimeUs>(0, host - static_cast<TimeUs>(std::ceil(last_gpu_us)));
}

void RapidEngine::on_arrival(RequestId id) {
  const auto n = static_cast<std::size_t>(id) + 1;
  if (extra_.size() < n) {
    extra_.resize(n, 0);
    ready_us_.resize(n, -1);
  }
  req(id).transition(RequestState::PendingKv);
  waiting_.push_back(id);
  pending_kv_.push_back(id);
  try_admit_kv();
  track();
}

void RapidEngine::try_admit_kv() {
  while (!waiting_.empty()) {
    const RequestId id = waiting_.front();
    if (pool_.allocate_prompt(id, req(id).context_tokens()) != AllocStatus::Ok) break;
    waiting_.pop_front();
    awaiting_prefill_.insert(id);
    ++notifications_;
    sim().schedule(now() + notify_us_, EventKind::NotifyKvAllocated, 0, id);
  }
}

void RapidEngine::on_event(const Event& e) {
  switch (e.kind) {
    case EventKind::NotifyKvAllocated:
      on_kv_allocated(e.request);
      break;
    case EventKind::PrefillIterDone:
      on_prefill_done(e.tag);
      break;
    case EventKind::NotifyPrefillReady:
      on_prefill_ready(e.request);
      break;
    case EventKind::DecodeIterDone:
      on_decode_done(e.tag);
      break;
    default:
      throw Error("rapid: unexpected event " + std::string(to_string(e.kind)));
  }
  track();
}

void RapidEngine::on_kv_allocated(RequestId id) {
  Request& r = req(id);
  if (r.state != RequestState::PendingKv) return;
  auto it = std::find(pending_kv_.begin(), pending_kv_.end(), id);
  if (it != pending_kv_.end()) pending_kv_.erase(it);
  r.transition(RequestState::WaitingPrefill);
  waiting_prefill_.push_back(id);
  maybe_start_prefill();
}

void RapidEngine::maybe_start_prefill() {
  if (job_ || waiting_prefill_.empty()) return;
  const RequestId id = waiting_prefill_.front();
  waiting_prefill_.pop_front();
  Request& r = req(id);
  r.transition(RequestState::Prefilling);
  PrefillJob job;
  job.id = id;
  job.tokens = r.context_tokens();
  job.gpu_start_us = now() + gap_after(prefill_last_end_, prefill_last_gpu_);
  job.anchor_us = now();
  job.phi_anchor = 1.0;
  job_ = std::move(job);
  prefill_accrued_until_ = now();
  ++prefill_jobs_;
  retime_prefill();
}

double RapidEngine::phi_at(TimeUs t) const {
  const auto& job = *job_;
  double phi = job.phi_anchor;
  for (std::size_t i = 0; i < job.segments.size(); ++i) {
    const auto [s, rate, cu] = job.segments[i];
    const TimeUs e = i + 1 < job.segments.size() ? std::get<0>(job.segments[i + 1])
                                                 : std::numeric_limits<TimeUs>::max();
    const TimeUs lo = std::max(s, job.anchor_us);
    const TimeUs hi = std::min(e, t);
    if (hi > lo) phi -= rate * static_cast<double>(hi - lo);
  }
  return std::max(0.0, phi);
}

void RapidEngine::accrue_prefill_busy(TimeUs until) {
  const auto& job = *job_;
  for (std::size_t i = 0; i < job.segments.size(); ++i) {
    const auto [s, rate, cu] = job.segments[i];
    if (rate <= 0) continue;
    const TimeUs e = i + 1 < job.segments.size() ? std::get<0>(job.segments[i + 1]) : until;
    const TimeUs lo = std::max(s, prefill_accrued_until_);
    const TimeUs hi = std::min({e, until, job.finish_us});
    if (hi > lo) ledger().add(device_, lo, hi, cu);
  }
  prefill_accrued_until_ = std::max(prefill_accrued_until_, until);
}

Tokens RapidEngine::prefill_pending_tokens() const {
  if (!job_) return 0;
  const double phi = phi_at(now());
  return std::max<Tokens>(
      1, static_cast<Tokens>(std::ceil(phi * static_cast<double>(job_->tokens) - 1e-9)));
}

void RapidEngine::retime_prefill() {
  if (!job_) return;
  const TimeUs t = now();
  accrue_prefill_busy(t);
  PrefillJob& job = *job_;
  const double phi = phi_at(t);
  const Tokens pending = prefill_pending_tokens();
  job.phi_anchor = phi;
  job.anchor_us = t;
  job.segments.clear();

  const TimeUs seg_start = std::max(t, job.gpu_start_us);
  if (seg_start > t) job.segments.emplace_back(t, 0.0, 0.0);
  const double solo = cost_.prefill_us(pending, 1.0, false);
  if (!step_.active) {
    job.segments.emplace_back(seg_start, phi / solo, 1.0);
  } else {
    double contended = 0.0;
    double cu = 1.0;
    if (step_.alloc.is_partition()) {
      contended = cost_.prefill_us(pending, step_.alloc.cu_fraction_prefill, true);
      cu = step_.alloc.cu_fraction_prefill;
    } else {
      contended = cost_.overlapped_us(pending, step_.size, step_.kv, step_.alloc).prefill_us;
    }
    const TimeUs cs = std::max(seg_start, step_.start_us);
    if (cs > seg_start) job.segments.emplace_back(seg_start, phi / solo, 1.0);
    job.segments.emplace_back(cs, phi / contended, cu);
  }

  double remaining = phi;
  double finish = static_cast<double>(seg_start);
  for (std::size_t i = 0; i < job.segments.size(); ++i) {
    const auto [s, rate, _] = job.segments[i];
    if (rate <= 0) continue;
    const bool last = i + 1 == job.segments.size();
    const double need = remaining / rate;
    const double end = last ? std::numeric_limits<double>::infinity()
                            : static_cast<double>(std::get<0>(job.segments[i + 1]));
    if (static_cast<double>(s) + need <= end) {
      finish = static_cast<double>(s) + need;
      break;
    }
    remaining -= rate * (end - static_cast<double>(s));
  }
  job.finish_us = std::max(seg_start, static_cast<TimeUs>(std::ceil(finish - 1e-6)));
  ++prefill_gen_;
  sim().schedule(job.finish_us, EventKind::PrefillIterDone, 0, job.id, prefill_gen_);
}

void RapidEngine::on_prefill_done(std::int64_t gen) {
  if (!job_ || gen != prefill_gen_) return;
  accrue_prefill_busy(now());
  const PrefillJob job = *job_;
  job_.reset();
  Request& r = req(job.id);
  r.prefill_done_us = now();
  r.prefill_tokens_done = job.tokens;
  r.transition(RequestState::PrefillFinished);
  prefill_last_end_ = now();
  prefill_last_gpu_ = static_cast<double>(now() - job.gpu_start_us);
  ++notifications_;
  sim().schedule(now() + notify_us_, EventKind::NotifyPrefillReady, 1, job.id);
  maybe_start_prefill();
}

void RapidEngine::on_prefill_ready(RequestId id) {
  ready_us_[static_cast<std::size_t>(id)] = now();
  awaiting_prefill_.erase(id);
  prefill_finished_.push_back(id);
  maybe_start_decode();
}

void RapidEngine::preempt(RequestId victim) {
  running_.erase(std::find(running_.begin(), running_.end(), victim));
  pool_.release(victim);
  req(victim).restart_after_preemption(RequestState::PendingKv);
  insert_by_arrival(waiting_, victim);
  insert_by_arrival(pending_kv_, victim);
  ++preemptions_;
}

bool RapidEngine::ensure_decode_slot(RequestId id) {
  while (pool_.extend_for_token(id) != AllocStatus::Ok) {
    RequestId victim = -1;
    for (RequestId x : running_) {
      if (extra_[static_cast<std::size_t>(x)]) continue;
      if (victim < 0) {
        victim = x;
        continue;
      }
      const TimeUs ax = req(x).arrival_us, av = req(victim).arrival_us;
      if (ax > av || (ax == av && x > victim)) victim = x;
    }
    preempt(victim);
    if (victim == id) return false;
  }
  return true;
}

void RapidEngine::maybe_start_decode() {
  if (step_.active) return;
  std::vector<RequestId> admitted(prefill_finished_.begin(), prefill_finished_.end());
  prefill_finished_.clear();
  for (RequestId id : admitted) {
    req(id).transition(RequestState::Decoding);
    extra_[static_cast<std::size_t>(id)] = 0;
    running_.push_back(id);
  }
  const std::vector<RequestId> snapshot = running_;
  bool preempted = false;
  for (RequestId id : snapshot) {
    if (extra_[static_cast<std::size_t>(id)]) continue;
    if (std::find(running_.begin(), running_.end(), id) == running_.end()) continue;
    const auto before = preemptions_;
    ensure_decode_slot(id);
    preempted |= preemptions_ != before;
  }
  if (running_.empty()) {
    if (preempted) try_admit_kv();
    retime_prefill();
    return;
  }

  DecodeStep s;
  s.batch = running_;
  s.size = static_cast<std::int64_t>(s.batch.size());
  for (RequestId id : s.batch) {
    s.delivering.push_back(extra_[static_cast<std::size_t>(id)] ? 0 : 1);
    s.kv += pool_.tokens_written(id);
  }
  const Tokens pending = prefill_pending_tokens();
  s.alloc = allocate(profile_, cost_, s.size, pending, s.kv);
  s.gpu_us = pending > 0 ? cost_.overlapped_us(pending, s.size, s.kv, s.alloc).decode_us
                         : cost_.decode_us(s.size, s.kv, 1.0, false);
  if (s.alloc.is_partition()) {
    ++partition_steps_;
    if (s.alloc.slo_risk) {
      ++slo_risk_steps_;
    } else if (s.gpu_us > profile_.itl_slo_us * profile_.safety_margin + 1e-9) {
      ++partition_breaches_;
    }
    const ProfileEntry* e = profile_.lookup(s.size);
    if (e && !e->saturated && s.alloc.cu_fraction_decode < e->min_fraction - 1e-12) ++below_profile_;
  } else {
    ++overallocate_steps_;
    if (pending > 0) ++contended_steps_;
  }
  const TimeUs gap = gap_after(decode_last_end_, decode_last_gpu_);
  s.start_us = now() + gap;
  s.end_us = s.start_us + static_cast<TimeUs>(std::ceil(s.gpu_us));
  s.active = true;
  for (RequestId id : admitted) {
    if (std::find(running_.begin(), running_.end(), id) == running_.end()) continue;
    max_admission_wait_ =
        std::max(max_admission_wait_, s.start_us - ready_us_[static_cast<std::size_t>(id)]);
  }
  max_step_span_ = std::max(max_step_span_, s.end_us - now());
  if (decisions_) decisions_->push_back({now(), s.size, pending, s.kv, s.alloc, s.gpu_us});
  ledger().add(device_, s.start_us, s.end_us, s.alloc.cu_fraction_decode);
  step_ = std::move(s);
  ++decode_steps_;
  ++decode_gen_;
  sim().schedule(step_.end_us, EventKind::DecodeIterDone, 1, -1, decode_gen_);
  if (preempted) try_admit_kv();
  retime_prefill();
}

void RapidEngine::on_decode_done(std::int64_t gen) {
  if (gen != decode_gen_ || !step_.active) throw Error("rapid: stale decode completion");
  const TimeUs t = now();
  bool released = false;
  for (std::size_t i = 0; i < step_.batch.size(); ++i) {
    const RequestId id = step_.batch[i];
    Request& r = req(id);
    ++r.decode_participations;
    if (step_.delivering[i]) {
      r.deliver_token(t);
      if (r.done_generating()) extra_[static_cast<std::size_t>(id)] = 1;
    } else {
      finish(r);
      pool_.release(id);
      running_.erase(std::find(running_.begin(), running_.end(), id));
      released = true;
    }
  }
  decode_last_end_ = t;
  decode_last_gpu_ = step_.gpu_us;
  step_.active = false;
  if (released) try_admit_kv();
  maybe_start_decode();
}

void RapidEngine::on_horizon() {
  auto reject = [&](RequestId id) {
    Request& r = req(id);
    pool_.release(id);
    awaiting_prefill_.erase(id);
    auto pk = std::find(pending_kv_.begin(), pending_kv_.end(), id);
    if (pk != pending_kv_.end()) pending_kv_.erase(pk);
    auto wp = std::find(waiting_prefill_.begin(), waiting_prefill_.end(), id);
    if (wp != waiting_prefill_.end()) waiting_prefill_.erase(wp);
    r.transition(RequestState::Rejected);
    ++rejected_;
  };
  for (RequestId id : std::vector<RequestId>(waiting_.begin(), waiting_.end())) reject(id);
  waiting_.clear();
  for (RequestId id : std::vector<RequestId>(awaiting_prefill_.begin(), awaiting_prefill_.end())) {
    const auto s = req(id).state;
    if (s == RequestState::PendingKv || s == RequestState::WaitingPrefill) reject(id);
  }
  track();
}

void RapidEngine::track() { occupancy_.record(now(), pool_.used_blocks()); }

std::vector<std::string> RapidEngine::deep_audit() const {
  auto out = audit();
  for (auto& v : pool_.deep_audit()) out.push_back(v);
  return out;
}

std::vector<std::string> RapidEngine::audit() const {
  std::vector<std::string> out = pool_.audit();
  auto dup = [&](std::vector<RequestId> ids, const char* side) {
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      out.push_back(std::string("rapid: request resident twice on the ") + side + " side");
    }
  };
  std::vector<RequestId> d(waiting_.begin(), waiting_.end());
  d.insert(d.end(), awaiting_prefill_.begin(), awaiting_prefill_.end());
  d.insert(d.end(), prefill_finished_.begin(), prefill_finished_.end());
  d.insert(d.end(), running_.begin(), running_.end());
  dup(d, "decode");
  std::vector<RequestId> p(pending_kv_.begin(), pending_kv_.end());
  p.insert(p.end(), waiting_prefill_.begin(), waiting_prefill_.end());
  if (job_) p.push_back(job_->id);
  dup(p, "prefill");

  for (RequestId id : waiting_) {
    if (req(id).state != RequestState::PendingKv) out.push_back("rapid: waiting request not PendingKv");
    if (pool_.holds(id)) out.push_back("rapid: waiting request holds blocks");
  }
  for (RequestId id : waiting_prefill_) {
    if (req(id).state != RequestState::WaitingPrefill) {
      out.push_back("rapid: waiting_prefill request not WaitingPrefill");
    }
    if (!pool_.holds(id)) out.push_back("rapid: waiting_prefill request without blocks");
  }
  for (RequestId id : pending_kv_) {
    if (req(id).state != RequestState::PendingKv) out.push_back("rapid: pending_kv request not PendingKv");
  }
  for (RequestId id : prefill_finished_) {
    if (req(id).state != RequestState::PrefillFinished) {
      out.push_back("rapid: prefill_finished request not PrefillFinished");
    }
  }
  for (RequestId id : running_) {
    if (req(id).state != RequestState::Decoding) out.push_back("rapid: running request not Decoding");
  }
  if (job_ && req(job_->id).state != RequestState::Prefilling) {
    out.push_back("rapid: prefill job not Prefilling");
  }
  if (!job_ && !waiting_prefill_.empty()) out.push_back("rapid: prefill side idle with work");
  if (!step_.active && (!running_.empty() || !prefill_finished_.empty())) {
    out.push_back("rapid: decode side idle with work");
  }
  return out;
}

std::vector<PoolStats> RapidEngine::pool_stats(const MeasurementWindow& window) const {
  return {PoolStats{occupancy_.name(), occupancy_.capacity_blocks(), pool_.peak_used_blocks(),
                    occupancy_.time_average_fraction(window)}};
}

std::map<std::string, std::int64_t> RapidEngine::counters() const {
  return {{"decode_steps", decode_steps_},
          {"prefill_jobs", prefill_jobs_},
          {"partition_steps", partition_steps_},
          {"overallocate_steps", overallocate_steps_},
          {"contended_steps", contended_steps_},
          {"slo_risk_steps", slo_risk_steps_},
          {"partition_breaches", partition_breaches_},
          {"below_profile", below_profile_},
          {"preemptions", preemptions_},
          {"notifications", notifications_},
          {"rejected_at_horizon", rejected_},
          {"max_admission_wait_us", max_admission_wait_},
          {"max_step_span_us", max_step_span_}};
}

}  // namespace pdsim
