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

#include <random>

#include "doctest.h"
#include "pdsim/core.hpp"

using namespace pdsim;

namespace {

ModelSpec geometry(std::int64_t l, std::int64_t h, std::int64_t d, std::int64_t e) {
  ModelSpec m;
  m.layers = l;
  m.kv_heads = h;
  m.head_dim = d;
  m.bytes_per_element = e;
  return m;
}

bool has_message(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("kv_cache_bytes unit and empty cases") {
  CHECK(kv_cache_bytes(geometry(1, 1, 1, 1), 1) == 2);
  CHECK(kv_cache_bytes(ModelSpec{}, 0) == 0);
  CHECK(kv_cache_bytes(ModelSpec{}, 2048) == 671'088'640);
  CHECK(ModelSpec{}.kv_bytes_per_token() == 327'680);
  CHECK_THROWS_AS(kv_cache_bytes(ModelSpec{}, -1), std::invalid_argument);
}

TEST_CASE("kv_cache_bytes matches direct arithmetic on random geometries") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> small(1, 128);
  std::uniform_int_distribution<std::int64_t> seq(0, 200'000);
  for (int i = 0; i < 200; ++i) {
    const auto l = small(rng), h = small(rng), d = small(rng), e = 1 + small(rng) % 4;
    const auto s = seq(rng);
    const std::int64_t expected = 2 * l * s * h * d * e;
    CHECK(kv_cache_bytes(geometry(l, h, d, e), s) == expected);
  }
}

TEST_CASE("kv_cache_bytes is linear in length and monotone in every dimension") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> small(1, 64);
  for (int i = 0; i < 100; ++i) {
    const auto base = geometry(small(rng), small(rng), small(rng), 1 + small(rng) % 4);
    const Tokens s = small(rng) * 37;
    CHECK(kv_cache_bytes(base, 2 * s) == 2 * kv_cache_bytes(base, s));
    const Bytes b0 = kv_cache_bytes(base, s);
    CHECK(kv_cache_bytes(base, s + 1) >= b0);
    auto bump = base;
    bump.layers += 1;
    CHECK(kv_cache_bytes(bump, s) >= b0);
    bump = base;
    bump.kv_heads += 1;
    CHECK(kv_cache_bytes(bump, s) >= b0);
    bump = base;
    bump.head_dim += 1;
    CHECK(kv_cache_bytes(bump, s) >= b0);
    bump = base;
    bump.bytes_per_element += 1;
    CHECK(kv_cache_bytes(bump, s) >= b0);
  }
}

TEST_CASE("validate_specs") {
  CHECK(validate_specs(ModelSpec{}, GpuSpec{}).empty());
  CHECK(validate_specs(ModelSpec::moe_like(), GpuSpec::mi300x_like()).empty());

  ModelSpec heavy;
  heavy.weight_bytes = GpuSpec{}.hbm_capacity;
  CHECK(has_message(validate_specs(heavy, GpuSpec{}), "weights do not fit"));

  GpuSpec no_cus;
  no_cus.num_cus = 0;
  CHECK(has_message(validate_specs(ModelSpec{}, no_cus), "num_cus must be >= 2"));

  ModelSpec broken;
  broken.layers = 0;
  broken.head_dim = -3;
  const auto errors = validate_specs(broken, GpuSpec{});
  CHECK(errors.size() == 2);
  CHECK(has_message(errors, "model.layers"));
  CHECK(has_message(errors, "model.head_dim"));
}

TEST_CASE("presets and aggregation") {
  CHECK(ModelSpec::preset("llama70b-like").layers == 80);
  CHECK(ModelSpec::preset("moe-like").name == "moe-like");
  CHECK(GpuSpec::preset("mi300x-like").num_cus == 304);
  CHECK_THROWS_AS(ModelSpec::preset("gpt-9"), Error);
  CHECK_THROWS_AS(GpuSpec::preset("h100"), Error);

  const GpuSpec g = GpuSpec{}.aggregate(8);
  CHECK(g.num_cus == 8 * 304);
  CHECK(g.peak_flops == doctest::Approx(8 * 1.3074e15));
  CHECK(g.hbm_capacity == 8 * GpuSpec{}.hbm_capacity);
  CHECK(g.kernel_launch_overhead_us == GpuSpec{}.kernel_launch_overhead_us);
  CHECK(g.interconnect_bandwidth == GpuSpec{}.interconnect_bandwidth);
  CHECK(GpuSpec{}.aggregate(1).name == "mi300x-like");
  CHECK_THROWS_AS(GpuSpec{}.aggregate(0), std::invalid_argument);
}

TEST_CASE("AllocationDecision invariants") {
  const auto over = AllocationDecision::overallocate();
  CHECK(over.valid());
  CHECK(over.cu_fraction_decode == 1.0);
  CHECK(over.cu_fraction_prefill == 1.0);

  const auto p = AllocationDecision::partition(0.3, 0.7);
  CHECK(p.is_partition());
  CHECK(p.valid());
  CHECK_THROWS_AS(AllocationDecision::partition(0.6, 0.6), std::invalid_argument);
  CHECK_THROWS_AS(AllocationDecision::partition(0.0, 0.5), std::invalid_argument);

  AllocationDecision bad;
  bad.cu_fraction_decode = 0.5;
  CHECK_FALSE(bad.valid());
}

TEST_CASE("request lifecycle follows the forward graph") {
  using S = RequestState;
  const S all[] = {S::Arrived,         S::PendingKv, S::WaitingPrefill, S::Prefilling,
                   S::PrefillFinished, S::Decoding,  S::Finished,       S::Rejected};
  // Reachability must be acyclic: no state reaches itself.
  for (S s : all) CHECK_FALSE(is_valid_transition(s, s));
  for (S s : all) {
    if (is_terminal(s)) {
      for (S t : all) CHECK_FALSE(is_valid_transition(s, t));
    }
  }
  CHECK_FALSE(is_valid_transition(S::WaitingPrefill, S::Decoding));
  CHECK_FALSE(is_valid_transition(S::Decoding, S::Prefilling));

  Request r;
  r.id = 3;
  r.output_tokens = 2;
  r.transition(S::PendingKv);
  r.transition(S::WaitingPrefill);
  r.transition(S::Prefilling);
  CHECK_THROWS_AS(r.transition(S::Finished), std::logic_error);
  r.transition(S::PrefillFinished);
  r.transition(S::Decoding);
  r.deliver_token(10);
  CHECK(r.first_token_us == 10);
  CHECK_THROWS_AS(r.deliver_token(10), std::logic_error);
  r.deliver_token(11);
  CHECK(r.done_generating());
  CHECK_THROWS_AS(r.deliver_token(12), std::logic_error);
  CHECK(r.context_tokens() == r.prompt_tokens + 2);
  r.transition(S::Finished);
  CHECK(is_terminal(r.state));
}

TEST_CASE("preemption restart keeps delivered tokens") {
  Request r;
  r.output_tokens = 5;
  r.state = RequestState::Decoding;
  r.deliver_token(1);
  r.prefill_tokens_done = 40;
  r.restart_after_preemption(RequestState::PendingKv);
  CHECK(r.state == RequestState::PendingKv);
  CHECK(r.delivered() == 1);
  CHECK(r.prefill_tokens_done == 0);
  CHECK(r.preemptions == 1);
  CHECK_THROWS_AS(r.restart_after_preemption(RequestState::PendingKv), std::logic_error);
}
