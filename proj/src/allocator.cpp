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

#include "pdsim/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pdsim {

std::vector<std::string> ProfileConfig::validate() const {
  std::vector<std::string> errors;
  if (!(itl_slo_us > 0)) errors.push_back("profile: itl_slo_us must be > 0");
  if (!(safety_margin > 0 && safety_margin <= 1)) {
    errors.push_back("profile: safety_margin must be in (0, 1]");
  }
  if (reference_context < 0) errors.push_back("profile: reference_context must be >= 0");
  for (std::size_t i = 0; i < batch_grid.size(); ++i) {
    if (batch_grid[i] < 1) errors.push_back("profile: batch grid entries must be >= 1");
    if (i > 0 && batch_grid[i] <= batch_grid[i - 1]) {
      errors.push_back("profile: batch grid must be strictly increasing");
    }
  }
  return errors;
}

std::vector<std::int64_t> default_batch_grid() {
  std::vector<std::int64_t> grid;
  for (std::int64_t b = 1; b <= 1024; b *= 2) grid.push_back(b);
  return grid;
}

const ProfileEntry* Profile::lookup(std::int64_t batch) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), batch,
                             [](const ProfileEntry& e, std::int64_t b) { return e.batch < b; });
  return it == entries.end() ? nullptr : &*it;
}

std::int64_t min_grid_index(const CostModel& cost) {
  const auto n = cost.gpu().num_cus;
  const auto k = static_cast<std::int64_t>(
      std::ceil(cost.params().decode_plateau_fraction * static_cast<double>(n) - 1e-9));
  return std::clamp<std::int64_t>(k, 1, n);
}

std::optional<double> min_decode_fraction(const CostModel& cost, std::int64_t batch,
                                          Tokens total_kv_tokens, double target_us) {
  const auto n = cost.gpu().num_cus;
  const double dn = static_cast<double>(n);
  // decode_us is nonincreasing in the fraction, so bisect on k.
  std::int64_t lo = min_grid_index(cost);
  std::int64_t hi = n;
  if (cost.decode_us(batch, total_kv_tokens, 1.0, true) > target_us) return std::nullopt;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (cost.decode_us(batch, total_kv_tokens, static_cast<double>(mid) / dn, true) <= target_us) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return static_cast<double>(lo) / dn;
}

Profile build_profile(const CostModel& cost, const ProfileConfig& cfg) {
  auto errors = cfg.validate();
  if (!errors.empty()) throw std::invalid_argument(errors.front());
  Profile p;
  p.itl_slo_us = cfg.itl_slo_us;
  p.safety_margin = cfg.safety_margin;
  p.num_cus = cost.gpu().num_cus;
  p.reference_context = cfg.reference_context;
  const auto grid = cfg.batch_grid.empty() ? default_batch_grid() : cfg.batch_grid;
  const double target = cfg.itl_slo_us * cfg.safety_margin;
  bool saturated = false;
  double floor = 0.0;
  for (std::int64_t b : grid) {
    ProfileEntry e;
    e.batch = b;
    if (!saturated) {
      auto f = min_decode_fraction(cost, b, b * cfg.reference_context, target);
      if (f) {
        floor = std::max(floor, *f);
        e.min_fraction = floor;
      } else {
        saturated = true;
      }
    }
    e.saturated = saturated;
    if (saturated) e.min_fraction = 1.0;
    p.entries.push_back(e);
  }
  return p;
}

void write_profile(std::ostream& out, const Profile& profile) {
  char head[256];
  std::snprintf(head, sizeof head, "# itl_slo_us=%.3f margin=%.6f num_cus=%lld ref_context=%lld\n",
                profile.itl_slo_us, profile.safety_margin,
                static_cast<long long>(profile.num_cus),
                static_cast<long long>(profile.reference_context));
  out << head << "batch,min_fraction\n";
  for (const auto& e : profile.entries) {
    out << e.batch << ',';
    if (e.saturated) {
      out << "saturated\n";
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9f", e.min_fraction);
      out << buf << '\n';
    }
  }
}

Profile read_profile(std::istream& in) {
  Profile p;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string ctx = "profile line " + std::to_string(line_no) + ": ";
    if (line[0] == '#') {
      double slo = 0, margin = 0;
      long long cus = 0, ref = 0;
      if (std::sscanf(line.c_str(), "# itl_slo_us=%lf margin=%lf num_cus=%lld ref_context=%lld",
                      &slo, &margin, &cus, &ref) == 4) {
        p.itl_slo_us = slo;
        p.safety_margin = margin;
        p.num_cus = cus;
        p.reference_context = ref;
      }
      continue;
    }
    if (!header_seen) {
      if (line != "batch,min_fraction") throw Error(ctx + "expected header batch,min_fraction");
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ctx + "expected batch,min_fraction");
    ProfileEntry e;
    try {
      e.batch = std::stoll(line.substr(0, comma));
      const std::string v = line.substr(comma + 1);
      if (v == "saturated") {
        e.saturated = true;
        e.min_fraction = 1.0;
      } else {
        e.min_fraction = std::stod(v);
      }
    } catch (const std::exception&) {
      throw Error(ctx + "malformed record");
    }
    if (e.batch < 1 || !(e.min_fraction > 0 && e.min_fraction <= 1)) {
      throw Error(ctx + "value out of range");
    }
    if (!p.entries.empty() && e.batch <= p.entries.back().batch) {
      throw Error(ctx + "batches must be strictly increasing");
    }
    p.entries.push_back(e);
  }
  if (p.num_cus < 2 || !(p.itl_slo_us > 0)) throw Error("profile: missing or invalid metadata line");
  if (p.entries.empty()) throw Error("profile: no records");
  return p;
}

void save_profile(const std::string& path, const Profile& profile) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write profile '" + path + "'");
  write_profile(out, profile);
}

Profile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open profile '" + path + "'");
  return read_profile(in);
}

AllocationDecision allocate(const Profile& profile, const CostModel& cost,
                            std::int64_t decode_batch, Tokens prefill_pending_tokens,
                            Tokens decode_kv_tokens) {
  if (prefill_pending_tokens <= 0 || decode_batch <= 0) return AllocationDecision::overallocate();
  if (profile.num_cus != cost.gpu().num_cus) {
    throw std::invalid_argument("allocate: profile built for a different device");
  }
  const auto over = cost.overlapped_us(prefill_pending_tokens, decode_batch, decode_kv_tokens,
                                       AllocationDecision::overallocate());
  if (over.decode_us <= profile.itl_slo_us) return AllocationDecision::overallocate();

  const std::int64_t n = profile.num_cus;
  const double dn = static_cast<double>(n);
  const double target = profile.itl_slo_us * profile.safety_margin;
  auto saturated = [&] {
    auto d = AllocationDecision::partition(static_cast<double>(n - 1) / dn, 1.0 / dn);
    d.slo_risk = true;
    return d;
  };

  std::int64_t k = 0;
  if (const ProfileEntry* e = profile.lookup(decode_batch)) {
    if (e->saturated) return saturated();
    k = static_cast<std::int64_t>(std::llround(e->min_fraction * dn));
  } else {
    auto f = min_decode_fraction(cost, decode_batch, decode_batch * profile.reference_context,
                                 target);
    if (!f) return saturated();
    k = static_cast<std::int64_t>(std::llround(*f * dn));
  }
  // The profile assumes a reference context; move up the grid when the
  // live batch carries more KV than that.
  while (k < n && cost.decode_us(decode_batch, decode_kv_tokens, static_cast<double>(k) / dn,
                                 true) > target) {
    ++k;
  }
  if (k >= n) return saturated();
  return AllocationDecision::partition(static_cast<double>(k) / dn,
                                       static_cast<double>(n - k) / dn);
}

}  // namespace pdsim
