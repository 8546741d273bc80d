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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "pdsim/workload.hpp"

using namespace pdsim;

TEST_CASE("parse a well-formed trace") {
  const auto reqs = parse_trace(
      "{\"arrival_us\": 0, \"prompt_tokens\": 10, \"output_tokens\": 3}\n"
      "{\"arrival_us\": 5, \"prompt_tokens\": 20, \"output_tokens\": 4, \"tag\": \"x\"}\n"
      "\n"
      "{\"arrival_us\": 9, \"prompt_tokens\": 30, \"output_tokens\": 5}\n");
  REQUIRE(reqs.size() == 3);
  CHECK(reqs[0].id == 0);
  CHECK(reqs[2].id == 2);
  CHECK(reqs[1].prompt_tokens == 20);
  CHECK(reqs[2].arrival_us == 9);
}

TEST_CASE("invalid records name their line") {
  try {
    parse_trace(
        "{\"arrival_us\": 0, \"prompt_tokens\": 10, \"output_tokens\": 3}\n"
        "{\"arrival_us\": 1, \"prompt_tokens\": 0, \"output_tokens\": 3}\n");
    FAIL("expected TraceParseError");
  } catch (const TraceParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_trace("not json\n"), TraceParseError);
  CHECK_THROWS_AS(parse_trace("{\"arrival_us\": 1, \"prompt_tokens\": 3}\n"), TraceParseError);
  CHECK_THROWS_AS(parse_trace("{\"arrival_us\": -1, \"prompt_tokens\": 3, \"output_tokens\": 1}\n"),
                  TraceParseError);
  CHECK_THROWS_AS(parse_trace("{\"arrival_us\": 1.5, \"prompt_tokens\": 3, \"output_tokens\": 1}\n"),
                  TraceParseError);
}

TEST_CASE("shuffled arrivals are sorted with a warning") {
  std::vector<std::string> warnings;
  const auto reqs = parse_trace(
      "{\"arrival_us\": 30, \"prompt_tokens\": 1, \"output_tokens\": 1}\n"
      "{\"arrival_us\": 10, \"prompt_tokens\": 2, \"output_tokens\": 1}\n"
      "{\"arrival_us\": 20, \"prompt_tokens\": 3, \"output_tokens\": 1}\n",
      &warnings);
  REQUIRE(reqs.size() == 3);
  CHECK(reqs[0].arrival_us == 10);
  CHECK(reqs[0].prompt_tokens == 2);
  CHECK(reqs[2].arrival_us == 30);
  CHECK(reqs[2].id == 2);
  CHECK(warnings.size() == 1);
}

TEST_CASE("synthesis is a pure function of the spec") {
  TraceSpec spec;
  spec.seed = 7;
  spec.qps = 5;
  spec.duration_s = 30;
  const auto a = synthesize(spec);
  const auto b = synthesize(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].arrival_us == b[i].arrival_us);
    CHECK(a[i].prompt_tokens == b[i].prompt_tokens);
    CHECK(a[i].output_tokens == b[i].output_tokens);
  }
  spec.seed = 8;
  const auto c = synthesize(spec);
  CHECK((c.size() != a.size() || c[0].arrival_us != a[0].arrival_us));
}

TEST_CASE("synthetic traces respect their invariants") {
  for (auto preset : {LengthPreset::ShortPrompt, LengthPreset::Long, LengthPreset::VeryLong}) {
    TraceSpec spec;
    spec.preset = preset;
    spec.qps = 20;
    spec.duration_s = 20;
    const auto dist = length_distribution(preset);
    const auto reqs = synthesize(spec);
    TimeUs prev = 0;
    for (const auto& r : reqs) {
      CHECK(r.arrival_us >= prev);
      CHECK(r.arrival_us < 20'000'000);
      CHECK(r.prompt_tokens >= 1);
      CHECK(r.prompt_tokens <= dist.prompt_max);
      CHECK(r.output_tokens >= 1);
      CHECK(r.output_tokens <= dist.output_max);
      prev = r.arrival_us;
    }
  }
}

TEST_CASE("Poisson request counts stay within three sigma") {
  // Mean 2000, sigma sqrt(2000) for qps 2 over 1000 s.
  const double sigma = std::sqrt(2000.0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TraceSpec spec;
    spec.qps = 2;
    spec.duration_s = 1000;
    spec.seed = seed;
    spec.preset = LengthPreset::ShortPrompt;
    const auto n = static_cast<double>(synthesize(spec).size());
    CHECK(std::abs(n - 2000.0) <= 3 * sigma);
  }
}

TEST_CASE("length model matches preset means and tail ratio") {
  const double sigma = lognormal_sigma_for_p95_ratio(3.0);
  // p95 / mean = exp(1.6449 sigma - sigma^2 / 2) solved independently.
  CHECK(std::exp(1.6448536269514722 * sigma - sigma * sigma / 2) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(length_distribution(LengthPreset::ShortPrompt).prompt_mean == 2000);
  CHECK(length_distribution(LengthPreset::Long).prompt_mean == 8000);
  CHECK(length_distribution(LengthPreset::VeryLong).prompt_mean == 20000);

  TraceSpec spec;
  spec.qps = 100;
  spec.duration_s = 200;
  const auto reqs = synthesize(spec);
  double sum = 0;
  for (const auto& r : reqs) sum += static_cast<double>(r.prompt_tokens);
  CHECK(sum / static_cast<double>(reqs.size()) == doctest::Approx(2000).epsilon(0.10));
  CHECK(parse_length_preset("very-long") == LengthPreset::VeryLong);
  CHECK(to_string(LengthPreset::ShortPrompt) == "short");
  CHECK_THROWS(parse_length_preset("medium"));
}

TEST_CASE("traces sharing a seed share lengths across rates") {
  TraceSpec spec;
  spec.duration_s = 50;
  spec.qps = 4;
  const auto low = synthesize(spec);
  spec.qps = 8;
  const auto high = synthesize(spec);
  REQUIRE(low.size() < high.size());
  for (std::size_t i = 0; i < low.size(); ++i) {
    CHECK(low[i].prompt_tokens == high[i].prompt_tokens);
  }
}

TEST_CASE("sweep points substitute only the rate") {
  TraceSpec base;
  base.seed = 3;
  const std::vector<double> qps{0.5, 1, 2, 4};
  const auto pts = sweep_points(base, qps);
  REQUIRE(pts.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pts[i].qps == qps[i]);
    CHECK(pts[i].seed == 3);
    CHECK(pts[i].duration_s == base.duration_s);
  }
  CHECK_THROWS_AS(sweep_points(base, std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(sweep_points(base, std::vector<double>{1, -1}), std::invalid_argument);
}

TEST_CASE("trace files round trip") {
  TraceSpec spec;
  spec.qps = 3;
  spec.duration_s = 10;
  spec.num_requests_cap = 12;
  const auto reqs = synthesize(spec);
  CHECK(reqs.size() <= 12);
  const auto path = (std::filesystem::temp_directory_path() / "pdsim_trace_roundtrip.jsonl").string();
  write_trace(path, reqs);
  TraceSpec from_file;
  from_file.source_path = path;
  const auto back = materialize(from_file);
  REQUIRE(back.size() == reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    CHECK(back[i].arrival_us == reqs[i].arrival_us);
    CHECK(back[i].output_tokens == reqs[i].output_tokens);
  }
  std::remove(path.c_str());
  from_file.source_path = "/nonexistent/trace.jsonl";
  CHECK_THROWS_AS(materialize(from_file), Error);
}

TEST_CASE("trace spec validation") {
  TraceSpec spec;
  CHECK(spec.validate().empty());
  spec.qps = 0;
  spec.duration_s = -1;
  CHECK(spec.validate().size() == 2);
}
