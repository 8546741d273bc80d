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

#include "pdsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace pdsim {

std::string_view to_string(ItlStatistic s) {
  switch (s) {
    case ItlStatistic::Max: return "max";
    case ItlStatistic::P95: return "p95";
    case ItlStatistic::Mean: return "mean";
  }
  return "?";
}

ItlStatistic parse_itl_statistic(std::string_view name) {
  if (name == "max") return ItlStatistic::Max;
  if (name == "p95") return ItlStatistic::P95;
  if (name == "mean") return ItlStatistic::Mean;
  throw Error("unknown itl statistic '" + std::string(name) + "' (max|p95|mean)");
}

std::vector<std::string> SloSpec::validate() const {
  std::vector<std::string> errors;
  if (!(itl_slo_us > 0)) errors.push_back("slo.itl_slo_us must be > 0");
  return errors;
}

TimeUs ttft_ceiling_us(Tokens prompt_tokens) {
  if (prompt_tokens < 1) throw std::invalid_argument("ttft_ceiling_us: prompt_tokens must be >= 1");
  return ((prompt_tokens + 999) / 1000) * 1'000'000;
}

double percentile_sorted(std::span<const double> sorted, double p) {
  if (!(p > 0.0 && p <= 100.0)) throw std::invalid_argument("percentile: p must be in (0, 100]");
  if (sorted.empty()) return 0.0;
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return percentile_sorted(values, p);
}

MeasurementWindow measurement_window(double duration_s, double warmup_fraction) {
  if (!(duration_s > 0)) throw std::invalid_argument("measurement_window: duration must be > 0");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) {
    throw std::invalid_argument("measurement_window: warmup fraction must be in [0, 1)");
  }
  MeasurementWindow w;
  w.end_us = static_cast<TimeUs>(std::llround(duration_s * 1e6));
  w.start_us = static_cast<TimeUs>(std::llround(duration_s * warmup_fraction * 1e6));
  return w;
}

std::pair<bool, bool> request_success(const RequestRecord& rec, const SloSpec& slo) {
  if (!rec.finished || rec.ttft_us < 0) return {false, false};
  const bool ttft_ok = rec.ttft_us <= ttft_ceiling_us(rec.prompt_tokens);
  if (rec.gap_count() == 0) return {ttft_ok, true};
  double stat = rec.itl_max_us;
  if (slo.itl_statistic == ItlStatistic::P95) stat = rec.itl_p95_us;
  if (slo.itl_statistic == ItlStatistic::Mean) stat = rec.itl_mean_us;
  return {ttft_ok, stat <= slo.itl_slo_us};
}

RequestRecord make_record(const Request& req, const SloSpec& slo) {
  RequestRecord rec;
  rec.id = req.id;
  rec.arrival_us = req.arrival_us;
  rec.prompt_tokens = req.prompt_tokens;
  rec.output_tokens = req.output_tokens;
  rec.finished = req.state == RequestState::Finished;
  rec.token_times_us = req.token_times_us;
  rec.decode_participations = req.decode_participations;
  rec.preemptions = req.preemptions;
  if (!rec.token_times_us.empty()) rec.ttft_us = rec.token_times_us.front() - req.arrival_us;
  if (rec.gap_count() > 0) {
    std::vector<double> gaps;
    gaps.reserve(rec.gap_count());
    for (std::size_t i = 1; i < rec.token_times_us.size(); ++i) {
      gaps.push_back(static_cast<double>(rec.token_times_us[i] - rec.token_times_us[i - 1]));
    }
    std::sort(gaps.begin(), gaps.end());
    rec.itl_max_us = gaps.back();
    rec.itl_p95_us = percentile_sorted(gaps, 95.0);
    rec.itl_mean_us = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
  }
  std::tie(rec.meets_ttft, rec.meets_itl) = request_success(rec, slo);
  return rec;
}

std::int32_t BusyLedger::add_device(std::int64_t num_cus) {
  if (num_cus < 1) throw std::invalid_argument("BusyLedger: num_cus must be >= 1");
  devices_.push_back(Device{num_cus, {}});
  return static_cast<std::int32_t>(devices_.size() - 1);
}

void BusyLedger::add(std::int32_t device, TimeUs start_us, TimeUs end_us, double cu_fraction) {
  if (device < 0 || static_cast<std::size_t>(device) >= devices_.size()) {
    throw std::out_of_range("BusyLedger: unknown device");
  }
  if (end_us <= start_us || cu_fraction <= 0.0) return;
  auto& d = devices_[static_cast<std::size_t>(device)];
  d.deltas.emplace_back(start_us, cu_fraction);
  d.deltas.emplace_back(end_us, -cu_fraction);
}

double BusyLedger::busy_cu_seconds(const Device& d, const MeasurementWindow& window) const {
  auto deltas = d.deltas;
  std::sort(deltas.begin(), deltas.end());
  double level = 0.0;
  double busy = 0.0;
  TimeUs prev = window.start_us;
  for (const auto& [t, delta] : deltas) {
    const TimeUs lo = std::max(prev, window.start_us);
    const TimeUs hi = std::min(t, window.end_us);
    if (hi > lo) busy += std::min(1.0, std::max(0.0, level)) * static_cast<double>(hi - lo);
    prev = std::max(prev, t);
    level += delta;
  }
  const TimeUs lo = std::max(prev, window.start_us);
  if (window.end_us > lo) busy += std::min(1.0, std::max(0.0, level)) * static_cast<double>(window.end_us - lo);
  return busy / 1e6 * static_cast<double>(d.num_cus);
}

double BusyLedger::utilization(const MeasurementWindow& window) const {
  const double span = window.seconds();
  if (devices_.empty() || span <= 0) return 0.0;
  double busy = 0.0;
  double total = 0.0;
  for (const auto& d : devices_) {
    busy += busy_cu_seconds(d, window);
    total += span * static_cast<double>(d.num_cus);
  }
  return std::clamp(busy / total, 0.0, 1.0);
}

double BusyLedger::device_utilization(std::int32_t device, const MeasurementWindow& window) const {
  const auto& d = devices_.at(static_cast<std::size_t>(device));
  const double span = window.seconds();
  if (span <= 0) return 0.0;
  return std::clamp(busy_cu_seconds(d, window) / (span * static_cast<double>(d.num_cus)), 0.0, 1.0);
}

OccupancyTracker::OccupancyTracker(std::string name, std::int64_t capacity_blocks)
    : name_(std::move(name)), capacity_(capacity_blocks) {
  if (capacity_ < 1) throw std::invalid_argument("OccupancyTracker: capacity must be >= 1");
}

void OccupancyTracker::record(TimeUs t, std::int64_t used_blocks) {
  peak_ = std::max(peak_, used_blocks);
  if (!steps_.empty() && steps_.back().first == t) {
    steps_.back().second = used_blocks;
    return;
  }
  if (!steps_.empty() && steps_.back().second == used_blocks) return;
  steps_.emplace_back(t, used_blocks);
}

double OccupancyTracker::time_average_fraction(const MeasurementWindow& window) const {
  const double span = static_cast<double>(window.end_us - window.start_us);
  if (span <= 0) return 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const TimeUs t0 = std::max(steps_[i].first, window.start_us);
    const TimeUs t1 = std::min(i + 1 < steps_.size() ? steps_[i + 1].first : window.end_us, window.end_us);
    if (t1 > t0) area += static_cast<double>(steps_[i].second) * static_cast<double>(t1 - t0);
  }
  return std::clamp(area / (span * static_cast<double>(capacity_)), 0.0, 1.0);
}

RunSummary summarize(std::vector<RequestRecord> records, const SloSpec& slo,
                     const MeasurementWindow& window, double compute_util,
                     std::vector<PoolStats> pools) {
  RunSummary s;
  s.window_s = window.seconds();
  s.compute_util = std::clamp(compute_util, 0.0, 1.0);
  double cap_total = 0.0;
  double cap_used = 0.0;
  for (const auto& p : pools) {
    cap_total += static_cast<double>(p.capacity_blocks);
    cap_used += static_cast<double>(p.capacity_blocks) * p.mem_util;
  }
  s.mem_util = cap_total > 0 ? cap_used / cap_total : 0.0;
  s.pools = std::move(pools);

  std::vector<double> ttfts;
  std::vector<double> gaps;
  std::int64_t tokens = 0;
  std::int64_t good = 0;
  std::int64_t itl_good = 0;
  for (auto& rec : records) {
    std::tie(rec.meets_ttft, rec.meets_itl) = request_success(rec, slo);
    for (TimeUs t : rec.token_times_us) {
      if (window.contains(t)) ++tokens;
    }
    if (!window.contains(rec.arrival_us)) continue;
    ++s.requests_in_window;
    if (!rec.finished) {
      ++s.rejected_in_window;
      continue;
    }
    ++s.finished_in_window;
    if (rec.meets_ttft && rec.meets_itl) ++good;
    if (rec.meets_itl) ++itl_good;
    ttfts.push_back(static_cast<double>(rec.ttft_us));
    for (std::size_t i = 1; i < rec.token_times_us.size(); ++i) {
      gaps.push_back(static_cast<double>(rec.token_times_us[i] - rec.token_times_us[i - 1]));
    }
  }
  s.empty = s.requests_in_window == 0;
  if (s.window_s > 0) {
    s.tokens_per_s = static_cast<double>(tokens) / s.window_s;
    s.requests_per_s = static_cast<double>(s.finished_in_window) / s.window_s;
    s.goodput = static_cast<double>(good) / s.window_s;
    s.itl_goodput = static_cast<double>(itl_good) / s.window_s;
  }
  std::sort(ttfts.begin(), ttfts.end());
  std::sort(gaps.begin(), gaps.end());
  s.ttft_p50_us = percentile_sorted(ttfts, 50);
  s.ttft_p95_us = percentile_sorted(ttfts, 95);
  s.ttft_p99_us = percentile_sorted(ttfts, 99);
  s.itl_p50_us = percentile_sorted(gaps, 50);
  s.itl_p95_us = percentile_sorted(gaps, 95);
  s.itl_p99_us = percentile_sorted(gaps, 99);
  if (!gaps.empty()) {
    s.itl_mean_us = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
  }
  s.records = std::move(records);
  return s;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string out(buf);
  // Trim trailing zeros so integral values print compactly.
  if (out.find('.') != std::string::npos) {
    while (out.back() == '0') out.pop_back();
    if (out.back() == '.') out.pop_back();
  }
  if (out == "-0") out = "0";
  return out;
}

void write_requests_csv(std::ostream& out, std::span<const RequestRecord> records) {
  out << kRequestsCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.id << ',' << r.arrival_us << ',' << r.prompt_tokens << ',' << r.output_tokens << ','
        << r.ttft_us << ',' << format_number(r.itl_max_us) << ',' << format_number(r.itl_p95_us)
        << ',' << (r.meets_ttft ? 1 : 0) << ',' << (r.meets_itl ? 1 : 0) << '\n';
  }
}

void write_summary_header(std::ostream& out) { out << kSummaryCsvHeader << '\n'; }

void write_summary_row(std::ostream& out, const RunSummary& s) {
  out << s.engine << ',' << format_number(s.qps) << ',' << format_number(s.tokens_per_s) << ','
      << format_number(s.requests_per_s) << ',' << format_number(s.goodput) << ','
      << format_number(s.itl_goodput) << ',' << format_number(s.ttft_p95_us) << ','
      << format_number(s.itl_p95_us) << ',' << format_number(s.compute_util) << ','
      << format_number(s.mem_util) << '\n';
}

void write_pools_header(std::ostream& out) { out << kPoolsCsvHeader << '\n'; }

void write_pools_rows(std::ostream& out, const RunSummary& s) {
  for (const auto& p : s.pools) {
    out << s.engine << ',' << format_number(s.qps) << ',' << p.name << ',' << p.capacity_blocks
        << ',' << p.peak_used_blocks << ',' << format_number(p.mem_util) << '\n';
  }
}

}  // namespace pdsim
