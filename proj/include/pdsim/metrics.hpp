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
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pdsim/core.hpp"

namespace pdsim {

enum class ItlStatistic : std::uint8_t { Max, P95, Mean };

std::string_view to_string(ItlStatistic s);
ItlStatistic parse_itl_statistic(std::string_view name);

struct SloSpec {
  double itl_slo_us = 100'000.0;
  ItlStatistic itl_statistic = ItlStatistic::Max;

  std::vector<std::string> validate() const;
};

// One second per started thousand prompt tokens.
TimeUs ttft_ceiling_us(Tokens prompt_tokens);

// Nearest-rank percentile, p in (0, 100]. Sorts a copy. Empty input: 0.
double percentile(std::vector<double> values, double p);
double percentile_sorted(std::span<const double> sorted, double p);

struct MeasurementWindow {
  TimeUs start_us = 0;
  TimeUs end_us = 0;
  double seconds() const { return static_cast<double>(end_us - start_us) / 1e6; }
  bool contains(TimeUs t) const { return t >= start_us && t <= end_us; }
};

MeasurementWindow measurement_window(double duration_s, double warmup_fraction);

struct RequestRecord {
  RequestId id = 0;
  TimeUs arrival_us = 0;
  Tokens prompt_tokens = 0;
  Tokens output_tokens = 0;
  bool finished = false;
  // -1 when no token was delivered.
  TimeUs ttft_us = -1;
  std::vector<TimeUs> token_times_us;
  double itl_max_us = 0.0;
  double itl_p95_us = 0.0;
  double itl_mean_us = 0.0;
  bool meets_ttft = false;
  bool meets_itl = false;
  std::int64_t decode_participations = 0;
  std::int64_t preemptions = 0;

  Tokens delivered() const { return static_cast<Tokens>(token_times_us.size()); }
  std::size_t gap_count() const {
    return token_times_us.empty() ? 0 : token_times_us.size() - 1;
  }
};

// Rejected or unfinished requests meet neither target. A request with a
// single output token has no gaps and meets the ITL target.
std::pair<bool, bool> request_success(const RequestRecord& rec, const SloSpec& slo);

RequestRecord make_record(const Request& req, const SloSpec& slo);

// Busy compute. Each device contributes num_cus weight; overlapping
// intervals on one device add their CU fractions, capped at one.
class BusyLedger {
 public:
  // Returns the device index.
  std::int32_t add_device(std::int64_t num_cus);
  void add(std::int32_t device, TimeUs start_us, TimeUs end_us, double cu_fraction);

  std::size_t num_devices() const { return devices_.size(); }
  // Weighted busy-CU time over total CU time inside the window.
  double utilization(const MeasurementWindow& window) const;
  double device_utilization(std::int32_t device, const MeasurementWindow& window) const;

 private:
  struct Device {
    std::int64_t num_cus = 0;
    std::vector<std::pair<TimeUs, double>> deltas;
  };
  double busy_cu_seconds(const Device& d, const MeasurementWindow& window) const;
  std::vector<Device> devices_;
};

// Step function of occupied KV blocks for one pool.
class OccupancyTracker {
 public:
  OccupancyTracker(std::string name, std::int64_t capacity_blocks);

  void record(TimeUs t, std::int64_t used_blocks);
  double time_average_fraction(const MeasurementWindow& window) const;
  const std::string& name() const { return name_; }
  std::int64_t capacity_blocks() const { return capacity_; }
  std::int64_t peak_used() const { return peak_; }

 private:
  std::string name_;
  std::int64_t capacity_;
  std::int64_t peak_ = 0;
  std::vector<std::pair<TimeUs, std::int64_t>> steps_;
};

struct PoolStats {
  std::string name;
  std::int64_t capacity_blocks = 0;
  std::int64_t peak_used_blocks = 0;
  double mem_util = 0.0;
};

struct RunSummary {
  std::string engine;
  double qps = 0.0;
  double window_s = 0.0;
  bool empty = true;

  std::int64_t requests_in_window = 0;
  std::int64_t finished_in_window = 0;
  std::int64_t rejected_in_window = 0;

  double tokens_per_s = 0.0;
  double requests_per_s = 0.0;
  double goodput = 0.0;
  double itl_goodput = 0.0;

  double ttft_p50_us = 0.0;
  double ttft_p95_us = 0.0;
  double ttft_p99_us = 0.0;
  double itl_p50_us = 0.0;
  double itl_p95_us = 0.0;
  double itl_p99_us = 0.0;
  double itl_mean_us = 0.0;

  double compute_util = 0.0;
  double mem_util = 0.0;
  std::vector<PoolStats> pools;

  // Engine counters.
  std::map<std::string, std::int64_t> counters;

  std::vector<RequestRecord> records;
};

// Requests are attributed to the window by arrival time; tokens by their
// delivery timestamp. Pool utilizations are combined weighted by capacity.
RunSummary summarize(std::vector<RequestRecord> records, const SloSpec& slo,
                     const MeasurementWindow& window, double compute_util,
                     std::vector<PoolStats> pools);

inline constexpr std::string_view kRequestsCsvHeader =
    "id,arrival_us,prompt_tokens,output_tokens,ttft_us,itl_max_us,itl_p95_us,meets_ttft,"
    "meets_itl";
inline constexpr std::string_view kSummaryCsvHeader =
    "engine,qps,tokens_per_s,requests_per_s,goodput,itl_goodput,ttft_p95_us,itl_p95_us,"
    "compute_util,mem_util";
inline constexpr std::string_view kPoolsCsvHeader =
    "engine,qps,pool,capacity_blocks,peak_used_blocks,mem_util";

void write_requests_csv(std::ostream& out, std::span<const RequestRecord> records);
void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const RunSummary& s);
void write_pools_header(std::ostream& out);
void write_pools_rows(std::ostream& out, const RunSummary& s);

// Fixed-format number used by every CSV writer.
std::string format_number(double v);

}  // namespace pdsim
