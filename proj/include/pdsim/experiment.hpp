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
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pdsim/config.hpp"

namespace pdsim {

struct RunRequest {
  EngineSpec engine;
  double qps = 0.0;
};

// One simulation of `spec` at `qps` (<= 0 keeps cfg.trace.qps).
RunResult run_one(const RunConfig& cfg, const EngineSpec& spec, double qps = 0.0,
                  bool audit = false, std::ostream* event_trace = nullptr);

// Summaries ordered by engine (config order), then QPS ascending, however
// many worker threads run them.
std::vector<RunSummary> run_sweep(const RunConfig& cfg, std::span<const EngineSpec> engines,
                                  std::vector<double> qps, int parallel = 1);

// requests.csv, summary.csv and pools.csv for one run.
void write_run_outputs(const std::string& dir, const RunSummary& summary);
// Combined summary.csv and pools.csv for a sweep.
void write_sweep_outputs(const std::string& dir, std::span<const RunSummary> summaries);

struct SummaryRow {
  std::string engine;
  double qps = 0.0;
  double tokens_per_s = 0.0;
  double requests_per_s = 0.0;
  double goodput = 0.0;
  double itl_goodput = 0.0;
  double ttft_p95_us = 0.0;
  double itl_p95_us = 0.0;
  double compute_util = 0.0;
  double mem_util = 0.0;
};

std::vector<SummaryRow> parse_summary_csv(std::string_view text);
std::vector<SummaryRow> load_summary_csv(const std::string& path);

struct RatioSeries {
  std::string engine;
  std::vector<double> qps;
  std::vector<double> throughput;
  std::vector<double> goodput;
  std::vector<double> ttft_p95;
  std::vector<double> itl_p95;
  // Largest QPS with goodput / qps >= the attainment target; 0 if none.
  double max_rate = 0.0;
};

struct CompareResult {
  std::string baseline;
  std::vector<RatioSeries> series;
  std::string report;
};

// Ratios of every engine against `baseline` at matching QPS. Division by a
// zero baseline gives inf; geometric means use finite positive ratios only.
CompareResult compare_summaries(std::span<const SummaryRow> rows,
                                const std::string& baseline = "hybrid-512",
                                double attainment_target = 0.9);

}  // namespace pdsim
