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
#include <string_view>
#include <vector>

#include "pdsim/core.hpp"

namespace pdsim {

enum class LengthPreset : std::uint8_t { ShortPrompt, Long, VeryLong };

std::string_view to_string(LengthPreset preset);
LengthPreset parse_length_preset(std::string_view name);

// Log-normal prompt/output length model. `sigma` is shared by both lengths.
struct LengthDistribution {
  double prompt_mean = 2000.0;
  double output_mean = 256.0;
  double sigma = 0.0;
  Tokens prompt_max = 32768;
  Tokens output_max = 4096;
};

// sigma for which p95 / mean == 3 under a log-normal law.
double lognormal_sigma_for_p95_ratio(double ratio);

LengthDistribution length_distribution(LengthPreset preset, double output_mean = 256.0);

struct TraceSpec {
  // Empty for a synthetic trace; otherwise a line-delimited record file.
  std::string source_path;
  double qps = 1.0;
  double duration_s = 60.0;
  std::uint64_t seed = 1;
  LengthPreset preset = LengthPreset::ShortPrompt;
  double output_mean_tokens = 256.0;
  // 0 means unlimited.
  std::int64_t num_requests_cap = 0;

  std::vector<std::string> validate() const;
};

class TraceParseError : public Error {
 public:
  TraceParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// One JSON object per line with arrival_us, prompt_tokens and output_tokens.
// Extra fields are ignored. Requests come back sorted by arrival with ids
// 0..n-1; out-of-order input is sorted and reported through `warnings`.
std::vector<Request> load_trace(const std::string& path,
                                std::vector<std::string>* warnings = nullptr);
std::vector<Request> parse_trace(std::string_view text,
                                 std::vector<std::string>* warnings = nullptr);
void write_trace(const std::string& path, std::span<const Request> requests);

// Poisson arrivals at spec.qps over spec.duration_s with log-normal lengths.
// Arrival gaps and lengths come from independent streams of the same seed,
// so traces that differ only in qps share their length sequence.
std::vector<Request> synthesize(const TraceSpec& spec);

// One spec per rate; only qps differs. Throws std::invalid_argument on an
// empty list or a non-positive rate.
std::vector<TraceSpec> sweep_points(const TraceSpec& base, std::span<const double> qps_list);

// Trace described by `spec`: loaded from source_path or synthesized.
std::vector<Request> materialize(const TraceSpec& spec);

}  // namespace pdsim
