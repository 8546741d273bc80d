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

// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on
// any failure. Every check recomputes its oracle here rather than reading
// values back from the library under test.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pdsim/allocator.hpp"
#include "pdsim/experiment.hpp"

using namespace pdsim;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(const char* name, double budget_s, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    o.detail += " (over time budget)";
  }
  if (!o.pass) ++g_failures;
  std::printf("[%s] %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const RunSummary* find(const std::vector<RunSummary>& rows, const std::string& engine, double qps) {
  for (const auto& r : rows) {
    if (r.engine == engine && r.qps == qps) return &r;
  }
  return nullptr;
}

std::vector<SummaryRow> to_rows(const std::vector<RunSummary>& sums) {
  std::ostringstream out;
  write_summary_header(out);
  for (const auto& s : sums) write_summary_row(out, s);
  return parse_summary_csv(out.str());
}

RunConfig sweep_config() {
  RunConfig cfg = default_config();
  cfg.engines = parse_engine_list("hybrid-512,hybrid-1024,disagg,rapid");
  return cfg;
}

}  // namespace

int main() {
  const RunConfig cfg = sweep_config();
  std::vector<RunSummary> sweep;
  double sweep_secs = 0;
  {
    const auto t0 = std::chrono::steady_clock::now();
    sweep = run_sweep(cfg, cfg.engines, cfg.sweep_qps, 1);
    sweep_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  std::printf("default sweep: %zu runs in %.2fs\n", sweep.size(), sweep_secs);

  report("kv_cache_bytes exactness", 1.0, [] {
    std::mt19937_64 rng(2026);
    std::uniform_int_distribution<std::int64_t> dim(1, 160);
    std::uniform_int_distribution<std::int64_t> seq(0, 131072);
    int bad = 0;
    for (int i = 0; i < 20; ++i) {
      ModelSpec m;
      Tokens s = 2048;
      if (i > 0) {
        m.layers = dim(rng);
        m.kv_heads = dim(rng);
        m.head_dim = dim(rng);
        m.bytes_per_element = 1 + dim(rng) % 4;
        s = seq(rng);
      }
      const std::int64_t expected = 2 * m.layers * s * m.kv_heads * m.head_dim * m.bytes_per_element;
      bad += kv_cache_bytes(m, s) != expected;
    }
    const bool anchor = kv_cache_bytes(ModelSpec{}, 2048) == 671'088'640;
    return Outcome{bad == 0 && anchor,
                   fmt("20 tuples, %.0f mismatches; 70B-like S=2048 -> %.0f bytes", bad,
                       static_cast<double>(kv_cache_bytes(ModelSpec{}, 2048)))};
  });

  report("compute scaling regimes", 1.0, [] {
    const CostModel c(ModelSpec{}, GpuSpec{});
    const double pr = c.prefill_us(4096, 0.5, false) / c.prefill_us(4096, 1.0, false);
    double worst = 0;
    for (std::int64_t b = 1; b <= 8; ++b) {
      for (Tokens ctx : {128, 2048, 8192}) {
        worst = std::max(worst, c.decode_us(b, b * ctx, 0.5, false) / c.decode_us(b, b * ctx, 1.0, false));
      }
    }
    return Outcome{pr >= 1.8 && pr <= 2.1 && worst <= 1.10,
                   fmt("prefill(0.5)/prefill(1.0) = %.4f in [1.8, 2.1]; worst decode ratio b<=8 = %.4f <= 1.10", pr,
                       worst)};
  });

  report("chunk size tradeoff", 60.0, [&] {
    // Moderate load: the highest swept rate the larger chunk still serves
    // at the attainment target.
    const auto cmp = compare_summaries(to_rows(sweep), "hybrid-512", cfg.attainment_target);
    double qps = 0;
    for (const auto& s : cmp.series) {
      if (s.engine == "hybrid-1024") qps = s.max_rate;
    }
    if (qps <= 0) return Outcome{false, "hybrid-1024 meets the attainment target nowhere"};
    const auto a = run_one(cfg, parse_engine_label("hybrid-512"), qps);
    const auto b = run_one(cfg, parse_engine_label("hybrid-1024"), qps);
    const double tput = b.summary.tokens_per_s / a.summary.tokens_per_s - 1;
    const double itl = b.summary.itl_mean_us / a.summary.itl_mean_us - 1;
    const bool pass = tput > 0 && itl > 0;
    const std::string d = fmt("qps %.0f: throughput %+.1f%% (calibration 20%% +-15pp: ", qps, 100 * tput) +
                          (std::abs(tput - 0.20) <= 0.15 ? "within" : "outside") + "), ";
    const std::string e = fmt("mean ITL %+.1f%% (calibration 30%% +-15pp: ", 100 * itl) +
                          (std::abs(itl - 0.30) <= 0.15 ? "within" : "outside") + ")";
    return Outcome{pass, d + e};
  });

  report("disaggregation overhead", 60.0, [&] {
    int worse = 0, total = 0;
    for (double q : cfg.sweep_qps) {
      const auto* d = find(sweep, "disagg", q);
      const auto* r = find(sweep, "rapid", q);
      ++total;
      worse += d && r && d->ttft_p95_us > r->ttft_p95_us;
    }
    // Sparse trace, no queueing: the first-token path after prefill is the
    // exposed transfer plus the recompute step.
    RunConfig fast = cfg;
    fast.disagg.interconnect_bandwidth = fast.gpu.interconnect_bandwidth * 1e6;
    DisaggEngine eng(engine_setup(fast), fast.disagg);
    std::vector<Request> trace;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 40; ++i) {
      Request r;
      r.id = i;
      r.arrival_us = static_cast<TimeUs>(i) * 5'000'000;
      r.prompt_tokens = 200 + static_cast<Tokens>(rng() % 8000);
      r.output_tokens = 8;
      trace.push_back(r);
    }
    RunOptions opts;
    opts.duration_s = 200;
    opts.warmup_fraction = 0;
    const auto res = run_simulation(eng, trace, opts);
    double worst = 0;
    int checked = 0;
    for (const auto& r : res.requests) {
      if (r.state != RequestState::Finished) continue;
      const double rec = static_cast<double>(eng.recompute_us()[static_cast<std::size_t>(r.id)]);
      const double gap = static_cast<double>(r.first_token_us - r.prefill_done_us);
      worst = std::max(worst, std::abs(gap - rec) / rec);
      ++checked;
    }
    const bool pass = worse == total && checked == 40 && worst <= 0.05;
    return Outcome{pass, fmt("disagg p95 TTFT > rapid at %.0f/%.0f rates; 1e6x bandwidth: gap vs recompute "
                             "worst %.4f%% over %.0f requests",
                             worse, total, 100 * worst, checked)};
  });

  report("allocation modes under a prefill stream", 10.0, [] {
    const CostModel c(ModelSpec{}, GpuSpec{});
    ProfileConfig pc;
    pc.itl_slo_us = 100'000;
    pc.safety_margin = 0.9;
    pc.reference_context = 2128;
    const auto prof = build_profile(c, pc);
    const Tokens prefill = 768;
    double prev = 0;
    bool monotone = true, crossed = false, partition_ok = true;
    std::int64_t cross_at = 0;
    double worst_partition = 0;
    for (std::int64_t b = 8; b <= 256; b += 8) {
      const Tokens kv = b * 2128;
      const double over = c.overlapped_us(prefill, b, kv, AllocationDecision::overallocate()).decode_us;
      monotone &= over >= prev;
      prev = over;
      if (!crossed && over > pc.itl_slo_us) {
        crossed = true;
        cross_at = b;
      }
      const ProfileEntry* e = prof.lookup(b);
      if (!e || e->saturated) {
        partition_ok = false;
        continue;
      }
      const auto part = AllocationDecision::partition(e->min_fraction, 1.0 - e->min_fraction);
      const double d = c.overlapped_us(prefill, b, kv, part).decode_us;
      worst_partition = std::max(worst_partition, d);
      partition_ok &= d <= pc.itl_slo_us * pc.safety_margin;
    }
    return Outcome{monotone && crossed && partition_ok,
                   fmt("overallocate ITL nondecreasing=%.0f, crosses 100 ms at batch %.0f; partition worst %.1f ms "
                       "<= %.1f ms",
                       monotone, static_cast<double>(cross_at), worst_partition / 1000,
                       pc.itl_slo_us * pc.safety_margin / 1000)};
  });

  report("extra decode step per request", 0, [&] {
    RunConfig c = cfg;
    c.trace.qps = 20;
    c.trace.duration_s = 60;
    c.trace.num_requests_cap = 1000;
    const auto res = run_one(c, parse_engine_label("rapid"), 20);
    std::int64_t finished = 0, bad = 0;
    for (const auto& r : res.requests) {
      if (r.state != RequestState::Finished) continue;
      ++finished;
      bad += r.decode_participations != r.output_tokens + 1 || r.delivered() != r.output_tokens;
    }
    return Outcome{res.requests.size() == 1000 && finished == 1000 && bad == 0,
                   fmt("%.0f requests, %.0f finished, %.0f with participations != output + 1",
                       static_cast<double>(res.requests.size()), static_cast<double>(finished),
                       static_cast<double>(bad))};
  });

  report("rapid state machine", 0, [&] {
    std::int64_t requests = 0, violations = 0, transfers = 0, preemptions = 0, runs = 0;
    const LengthPreset presets[] = {LengthPreset::ShortPrompt, LengthPreset::Long, LengthPreset::VeryLong};
    std::uint64_t seed = 100;
    while (requests < 10'000) {
      RunConfig c = cfg;
      c.trace.seed = seed++;
      c.trace.preset = presets[runs % 3];
      c.trace.duration_s = 40;
      const double qps = c.trace.preset == LengthPreset::ShortPrompt ? 45 : (c.trace.preset == LengthPreset::Long ? 8 : 3);
      // Every fourth run squeezes KV memory so that preemption paths run.
      if (runs % 4 == 3) c.kv.activation_reserve = 0.97;
      const auto res = run_one(c, parse_engine_label("rapid"), qps, true);
      requests += static_cast<std::int64_t>(res.requests.size());
      violations += res.violation_count;
      transfers += static_cast<std::int64_t>(res.event_counts[static_cast<std::size_t>(EventKind::TransferDone)]);
      preemptions += res.summary.counters.at("preemptions");
      ++runs;
    }
    return Outcome{violations == 0 && transfers == 0,
                   fmt("%.0f requests over %.0f audited runs: %.0f violations, %.0f transfer events",
                       static_cast<double>(requests), static_cast<double>(runs), static_cast<double>(violations),
                       static_cast<double>(transfers)) +
                       fmt(", %.0f preemptions exercised", static_cast<double>(preemptions))};
  });

  report("sweep determinism", 0, [&] {
    const auto dir = std::filesystem::temp_directory_path() / "pdsim_acceptance_determinism";
    std::filesystem::remove_all(dir);
    write_sweep_outputs((dir / "serial").string(), sweep);
    write_sweep_outputs((dir / "parallel").string(), run_sweep(cfg, cfg.engines, cfg.sweep_qps, 4));
    bool same = true;
    std::size_t bytes = 0;
    for (const char* f : {"summary.csv", "pools.csv"}) {
      const auto a = slurp(dir / "serial" / f);
      same &= !a.empty() && a == slurp(dir / "parallel" / f);
      bytes += a.size();
    }
    std::filesystem::remove_all(dir);
    return Outcome{same, fmt("serial vs 4 threads, %.0f bytes compared", static_cast<double>(bytes))};
  });

  report("goodput ordering", 120.0, [&] {
    int bad = 0;
    for (const auto& s : sweep) bad += !(s.goodput <= s.itl_goodput && s.itl_goodput <= s.requests_per_s);
    const auto cmp = compare_summaries(to_rows(sweep), "hybrid-512", cfg.attainment_target);
    const double sat = cmp.series.front().max_rate;
    if (sat <= 0) return Outcome{false, "hybrid-512 never meets the attainment target"};
    const auto post = run_one(cfg, parse_engine_label("hybrid-512"), 4 * sat).summary;
    const bool collapse = post.goodput <= 0.05 * post.itl_goodput && post.itl_goodput > 0;
    return Outcome{bad == 0 && collapse,
                   fmt("%.0f ordering violations over the sweep; hybrid-512 at 4 x %.0f qps: goodput %.3f, "
                       "ITL-only %.3f req/s",
                       bad, sat, post.goodput, post.itl_goodput)};
  });

  report("rapid vs hybrid-512 goodput", 0, [&] {
    double first = 0;
    for (double q : cfg.sweep_qps) {
      const auto* h = find(sweep, "hybrid-512", q);
      if (h && h->goodput < h->requests_per_s) {
        first = q;
        break;
      }
    }
    if (first == 0) return Outcome{false, "hybrid-512 never violates SLOs on the sweep"};
    int ok = 0, total = 0;
    double min_ratio = 1e300;
    for (double q : cfg.sweep_qps) {
      if (q < first) continue;
      const auto* h = find(sweep, "hybrid-512", q);
      const auto* r = find(sweep, "rapid", q);
      ++total;
      ok += r->goodput >= h->goodput;
      if (h->goodput > 0) min_ratio = std::min(min_ratio, r->goodput / h->goodput);
    }
    return Outcome{ok == total, fmt("hybrid first misses SLOs at %.0f qps; rapid >= hybrid at %.0f/%.0f rates, "
                                    "smallest ratio %.3f",
                                    first, ok, total, min_ratio)};
  });

  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
