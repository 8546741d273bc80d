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
#include <limits>
#include <sstream>

#include "doctest.h"
#include "pdsim/allocator.hpp"

using namespace pdsim;

namespace {

CostModel one_gpu() { return CostModel(ModelSpec{}, GpuSpec{}); }

// Direct scan over every grid fraction, then the running maximum.
std::vector<std::optional<std::int64_t>> brute_force_indices(const CostModel& cost,
                                                             const ProfileConfig& cfg) {
  const std::int64_t n = cost.gpu().num_cus;
  const auto kmin = static_cast<std::int64_t>(std::ceil(cost.params().decode_plateau_fraction * n - 1e-9));
  const double target = cfg.itl_slo_us * cfg.safety_margin;
  std::vector<std::optional<std::int64_t>> out;
  std::int64_t floor_k = kmin;
  bool saturated = false;
  for (auto b : cfg.batch_grid.empty() ? default_batch_grid() : cfg.batch_grid) {
    std::optional<std::int64_t> found;
    for (std::int64_t k = kmin; k <= n && !saturated; ++k) {
      if (cost.decode_us(b, b * cfg.reference_context, static_cast<double>(k) / n, true) <= target) {
        found = std::max(k, floor_k);
        break;
      }
    }
    if (!found) saturated = true;
    if (found) floor_k = *found;
    out.push_back(found);
  }
  return out;
}

}  // namespace

TEST_CASE("default batch grid") {
  const auto g = default_batch_grid();
  REQUIRE(g.size() == 11);
  CHECK(g.front() == 1);
  CHECK(g.back() == 1024);
}

TEST_CASE("plateau floor index") {
  CHECK(min_grid_index(one_gpu()) == 122);
  CostParams p;
  p.decode_plateau_fraction = 0.5;
  CHECK(min_grid_index(CostModel(ModelSpec{}, GpuSpec{}, p)) == 152);
}

TEST_CASE("profile equals an exhaustive scan and is monotone") {
  const auto cost = one_gpu();
  for (double slo : {30'000.0, 50'000.0, 100'000.0}) {
    ProfileConfig cfg;
    cfg.itl_slo_us = slo;
    const auto prof = build_profile(cost, cfg);
    const auto oracle = brute_force_indices(cost, cfg);
    REQUIRE(prof.entries.size() == oracle.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      const auto& e = prof.entries[i];
      CHECK(e.saturated == !oracle[i].has_value());
      if (oracle[i]) CHECK(e.min_fraction == static_cast<double>(*oracle[i]) / 304.0);
      CHECK(e.min_fraction >= prev);
      prev = e.min_fraction;
    }
  }
}

TEST_CASE("tiny batches sit at the plateau floor") {
  const auto prof = build_profile(one_gpu(), ProfileConfig{});
  const auto* e = prof.lookup(1);
  REQUIRE(e != nullptr);
  CHECK(e->min_fraction == 122.0 / 304.0);
  CHECK(e->min_fraction < 0.5);
}

TEST_CASE("an unbounded SLO collapses the table to the floor") {
  ProfileConfig cfg;
  cfg.itl_slo_us = std::numeric_limits<double>::max() / 4;
  const auto prof = build_profile(one_gpu(), cfg);
  for (const auto& e : prof.entries) {
    CHECK_FALSE(e.saturated);
    CHECK(e.min_fraction == 122.0 / 304.0);
  }
}

TEST_CASE("lookup takes the next grid point up") {
  const auto prof = build_profile(one_gpu(), ProfileConfig{});
  CHECK(prof.lookup(3)->batch == 4);
  CHECK(prof.lookup(4)->batch == 4);
  CHECK(prof.lookup(1024)->batch == 1024);
  CHECK(prof.lookup(1025) == nullptr);
  CHECK(prof.grid_step() == 1.0 / 304.0);
}

TEST_CASE("profile construction rejects bad input") {
  ProfileConfig cfg;
  cfg.batch_grid = {4, 2};
  CHECK_THROWS_AS(build_profile(one_gpu(), cfg), std::invalid_argument);
  cfg.batch_grid = {};
  cfg.itl_slo_us = 0;
  CHECK_THROWS_AS(build_profile(one_gpu(), cfg), std::invalid_argument);
}

TEST_CASE("min_decode_fraction") {
  const auto cost = one_gpu();
  const auto f = min_decode_fraction(cost, 8, 8 * 2128, 90'000);
  REQUIRE(f.has_value());
  CHECK(*f == 122.0 / 304.0);
  CHECK_FALSE(min_decode_fraction(cost, 8, 8 * 2128, 1.0).has_value());
}

TEST_CASE("allocation modes") {
  const auto cost = one_gpu();
  const auto prof = build_profile(cost, ProfileConfig{});

  // Nothing to overlap with.
  for (std::int64_t b : {1, 64, 1024}) {
    CHECK_FALSE(allocate(prof, cost, b, 0, b * 2128).is_partition());
  }

  // Small batch against a short prefill stays under the SLO when shared.
  const auto small = allocate(prof, cost, 8, 256, 8 * 2128);
  CHECK_FALSE(small.is_partition());
  CHECK(cost.overlapped_us(256, 8, 8 * 2128, small).decode_us <= 100'000);

  // Heavy contention forces a partition that honours the margin.
  const auto big = allocate(prof, cost, 128, 8192, 128 * 2128);
  REQUIRE(big.is_partition());
  CHECK(big.valid());
  CHECK_FALSE(big.slo_risk);
  CHECK(cost.overlapped_us(8192, 128, 128 * 2128, big).decode_us <= 90'000);
  CHECK(big.cu_fraction_decode >= prof.lookup(128)->min_fraction);

  // More KV than the profile assumed moves the split up.
  const auto heavy_kv = allocate(prof, cost, 128, 8192, 128 * 4000);
  REQUIRE(heavy_kv.is_partition());
  CHECK(heavy_kv.cu_fraction_decode >= big.cu_fraction_decode);
  CHECK(cost.decode_us(128, 128 * 4000, heavy_kv.cu_fraction_decode, true) <= 90'000);

  // No split can meet the target.
  const auto hopeless = allocate(prof, cost, 1024, 8192, 1024 * 8000);
  CHECK(hopeless.is_partition());
  CHECK(hopeless.slo_risk);
  CHECK(hopeless.cu_fraction_prefill == 1.0 / 304.0);
}

TEST_CASE("allocation rejects a profile from another device") {
  const auto prof = build_profile(one_gpu(), ProfileConfig{});
  const CostModel eight(ModelSpec{}, GpuSpec{}.aggregate(8));
  CHECK_THROWS_AS(allocate(prof, eight, 512, 8192, 512 * 2128 * 8), std::invalid_argument);
}

TEST_CASE("profile text round trip") {
  ProfileConfig cfg;
  cfg.itl_slo_us = 40'000;
  const auto prof = build_profile(one_gpu(), cfg);
  std::ostringstream out;
  write_profile(out, prof);
  std::istringstream in(out.str());
  const auto back = read_profile(in);
  CHECK(back.num_cus == prof.num_cus);
  CHECK(back.itl_slo_us == prof.itl_slo_us);
  CHECK(back.reference_context == prof.reference_context);
  REQUIRE(back.entries.size() == prof.entries.size());
  bool any_saturated = false;
  for (std::size_t i = 0; i < prof.entries.size(); ++i) {
    CHECK(back.entries[i].batch == prof.entries[i].batch);
    CHECK(back.entries[i].saturated == prof.entries[i].saturated);
    CHECK(back.entries[i].min_fraction == doctest::Approx(prof.entries[i].min_fraction).epsilon(1e-9));
    any_saturated |= prof.entries[i].saturated;
  }
  CHECK(any_saturated);
  std::ostringstream again;
  write_profile(again, back);
  CHECK(again.str() == out.str());

  std::istringstream bad("batch,min_fraction\n1,0.5\n");
  CHECK_THROWS(read_profile(bad));
}
