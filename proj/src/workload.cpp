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

#include "pdsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace pdsim {

using nlohmann::json;

std::string_view to_string(LengthPreset preset) {
  switch (preset) {
    case LengthPreset::ShortPrompt: return "short";
    case LengthPreset::Long: return "long";
    case LengthPreset::VeryLong: return "very-long";
  }
  return "?";
}

LengthPreset parse_length_preset(std::string_view name) {
  if (name == "short") return LengthPreset::ShortPrompt;
  if (name == "long") return LengthPreset::Long;
  if (name == "very-long") return LengthPreset::VeryLong;
  throw Error("unknown trace preset '" + std::string(name) + "' (short|long|very-long)");
}

double lognormal_sigma_for_p95_ratio(double ratio) {
  // exp(z95 * s - s^2 / 2) = ratio; smaller root of the quadratic.
  constexpr double z95 = 1.6448536269514722;
  const double disc = z95 * z95 - 2.0 * std::log(ratio);
  if (disc < 0) throw std::invalid_argument("p95/mean ratio not reachable by a log-normal");
  return z95 - std::sqrt(disc);
}

LengthDistribution length_distribution(LengthPreset preset, double output_mean) {
  LengthDistribution d;
  d.sigma = lognormal_sigma_for_p95_ratio(3.0);
  d.output_mean = output_mean;
  switch (preset) {
    case LengthPreset::ShortPrompt:
      d.prompt_mean = 2000.0;
      d.prompt_max = 32768;
      break;
    case LengthPreset::Long:
      d.prompt_mean = 8000.0;
      d.prompt_max = 65536;
      break;
    case LengthPreset::VeryLong:
      d.prompt_mean = 20000.0;
      d.prompt_max = 131072;
      break;
  }
  return d;
}

std::vector<std::string> TraceSpec::validate() const {
  std::vector<std::string> errors;
  if (!(qps > 0)) errors.push_back("trace.qps must be > 0");
  if (!(duration_s > 0)) errors.push_back("trace.duration_s must be > 0");
  if (!(output_mean_tokens >= 1)) errors.push_back("trace.output_mean_tokens must be >= 1");
  if (num_requests_cap < 0) errors.push_back("trace.num_requests must be >= 0");
  return errors;
}

TraceParseError::TraceParseError(std::size_t line, const std::string& what)
    : Error("trace line " + std::to_string(line) + ": " + what), line_(line) {}

std::vector<Request> parse_trace(std::string_view text, std::vector<std::string>* warnings) {
  std::vector<Request> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw TraceParseError(line_no, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) throw TraceParseError(line_no, "record is not an object");
    auto field = [&](const char* key) -> std::int64_t {
      auto it = rec.find(key);
      if (it == rec.end()) throw TraceParseError(line_no, std::string("missing ") + key);
      if (!it->is_number_integer()) {
        throw TraceParseError(line_no, std::string(key) + " must be an integer");
      }
      return it->get<std::int64_t>();
    };
    Request r;
    r.arrival_us = field("arrival_us");
    r.prompt_tokens = field("prompt_tokens");
    r.output_tokens = field("output_tokens");
    if (r.arrival_us < 0) throw TraceParseError(line_no, "arrival_us must be >= 0");
    if (r.prompt_tokens < 1) throw TraceParseError(line_no, "prompt_tokens must be >= 1");
    if (r.output_tokens < 1) throw TraceParseError(line_no, "output_tokens must be >= 1");
    out.push_back(std::move(r));
    if (end == text.size()) break;
  }
  const bool sorted = std::is_sorted(out.begin(), out.end(), [](const Request& a, const Request& b) {
    return a.arrival_us < b.arrival_us;
  });
  if (!sorted) {
    std::stable_sort(out.begin(), out.end(), [](const Request& a, const Request& b) {
      return a.arrival_us < b.arrival_us;
    });
    if (warnings) warnings->push_back("arrivals not monotone; records sorted by arrival_us");
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<RequestId>(i);
  return out;
}

std::vector<Request> load_trace(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trace(ss.str(), warnings);
}

void write_trace(const std::string& path, std::span<const Request> requests) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trace file '" + path + "'");
  for (const auto& r : requests) {
    out << "{\"arrival_us\":" << r.arrival_us << ",\"prompt_tokens\":" << r.prompt_tokens
        << ",\"output_tokens\":" << r.output_tokens << "}\n";
  }
}

namespace {

Tokens draw_length(std::mt19937_64& rng, double mean, double sigma, Tokens max_len) {
  const double mu = std::log(mean) - 0.5 * sigma * sigma;
  std::lognormal_distribution<double> dist(mu, sigma);
  const auto v = static_cast<Tokens>(std::llround(dist(rng)));
  return std::clamp<Tokens>(v, 1, max_len);
}

}  // namespace

std::vector<Request> synthesize(const TraceSpec& spec) {
  auto errors = spec.validate();
  if (!errors.empty()) throw std::invalid_argument(errors.front());
  const LengthDistribution dist = length_distribution(spec.preset, spec.output_mean_tokens);

  std::mt19937_64 arrival_rng(spec.seed);
  std::mt19937_64 length_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::exponential_distribution<double> gap(spec.qps);

  const double horizon_us = spec.duration_s * 1e6;
  std::vector<Request> out;
  double t = 0.0;
  while (true) {
    t += gap(arrival_rng) * 1e6;
    if (t >= horizon_us) break;
    if (spec.num_requests_cap > 0 && static_cast<std::int64_t>(out.size()) >= spec.num_requests_cap) {
      break;
    }
    Request r;
    r.id = static_cast<RequestId>(out.size());
    r.arrival_us = static_cast<TimeUs>(t);
    r.prompt_tokens = draw_length(length_rng, dist.prompt_mean, dist.sigma, dist.prompt_max);
    r.output_tokens = draw_length(length_rng, dist.output_mean, dist.sigma, dist.output_max);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TraceSpec> sweep_points(const TraceSpec& base, std::span<const double> qps_list) {
  if (qps_list.empty()) throw std::invalid_argument("sweep_points: empty qps list");
  std::vector<TraceSpec> out;
  out.reserve(qps_list.size());
  for (double q : qps_list) {
    if (!(q > 0)) throw std::invalid_argument("sweep_points: qps must be > 0");
    TraceSpec s = base;
    s.qps = q;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Request> materialize(const TraceSpec& spec) {
  if (!spec.source_path.empty()) return load_trace(spec.source_path);
  return synthesize(spec);
}

}  // namespace pdsim
