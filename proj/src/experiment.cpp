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

#include "pdsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace pdsim {

RunResult run_one(const RunConfig& cfg, const EngineSpec& spec, double qps, bool audit,
                  std::ostream* event_trace) {
  TraceSpec ts = cfg.trace;
  if (qps > 0) ts.qps = qps;
  auto trace = materialize(ts);
  auto engine = make_engine(cfg, spec);
  RunOptions opts;
  double duration = ts.duration_s;
  if (!ts.source_path.empty() && !trace.empty()) {
    duration = std::max(duration, static_cast<double>(trace.back().arrival_us + 1) / 1e6);
  }
  opts.duration_s = duration;
  opts.drain_s = cfg.drain_s;
  opts.warmup_fraction = cfg.warmup_fraction;
  opts.qps = ts.qps;
  opts.slo = cfg.slo;
  opts.audit = audit;
  opts.event_trace = event_trace;
  return run_simulation(*engine, std::move(trace), opts);
}

std::vector<RunSummary> run_sweep(const RunConfig& cfg, std::span<const EngineSpec> engines,
                                  std::vector<double> qps, int parallel) {
  if (engines.empty()) throw std::invalid_argument("run_sweep: no engines");
  if (qps.empty()) throw std::invalid_argument("run_sweep: empty qps list");
  for (double q : qps) {
    if (!(q > 0)) throw std::invalid_argument("run_sweep: qps must be > 0");
  }
  std::sort(qps.begin(), qps.end());
  std::vector<RunRequest> jobs;
  for (const auto& e : engines) {
    for (double q : qps) jobs.push_back({e, q});
  }
  std::vector<RunSummary> out(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        auto r = run_one(cfg, jobs[i].engine, jobs[i].qps);
        out[i] = std::move(r.summary);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, parallel));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n, jobs.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i].empty()) {
      throw Error(jobs[i].engine.label + " @ qps " + format_number(jobs[i].qps) + ": " + errors[i]);
    }
  }
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace

void write_run_outputs(const std::string& dir, const RunSummary& summary) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  {
    auto out = open_out(d / "requests.csv");
    write_requests_csv(out, summary.records);
  }
  {
    auto out = open_out(d / "summary.csv");
    write_summary_header(out);
    write_summary_row(out, summary);
  }
  {
    auto out = open_out(d / "pools.csv");
    write_pools_header(out);
    write_pools_rows(out, summary);
  }
}

void write_sweep_outputs(const std::string& dir, std::span<const RunSummary> summaries) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  {
    auto out = open_out(d / "summary.csv");
    write_summary_header(out);
    for (const auto& s : summaries) write_summary_row(out, s);
  }
  {
    auto out = open_out(d / "pools.csv");
    write_pools_header(out);
    for (const auto& s : summaries) write_pools_rows(out, s);
  }
}

std::vector<SummaryRow> parse_summary_csv(std::string_view text) {
  std::vector<SummaryRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kSummaryCsvHeader) throw Error("summary csv: unexpected header");
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) {
      throw Error("summary csv line " + std::to_string(line_no) + ": expected 10 columns");
    }
    SummaryRow r;
    r.engine = cells[0];
    double* fields[] = {&r.qps, &r.tokens_per_s, &r.requests_per_s, &r.goodput, &r.itl_goodput,
                        &r.ttft_p95_us, &r.itl_p95_us, &r.compute_util, &r.mem_util};
    for (std::size_t k = 0; k < 9; ++k) {
      try {
        std::size_t used = 0;
        *fields[k] = std::stod(cells[k + 1], &used);
        if (used != cells[k + 1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error("summary csv line " + std::to_string(line_no) + ": bad number '" +
                    cells[k + 1] + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  if (line_no == 0) throw Error("summary csv: empty file");
  return rows;
}

std::vector<SummaryRow> load_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open summary '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_summary_csv(ss.str());
}

namespace {

double ratio(double num, double den) {
  if (den == 0.0) return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

double geomean(const std::vector<double>& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x) && x > 0) {
      sum += std::log(x);
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : std::exp(sum / static_cast<double>(n));
}

double maxof(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  return m;
}

std::string fmt4(double v) {
  if (std::isnan(v)) return "n/a";
  if (std::isinf(v)) return "inf";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

CompareResult compare_summaries(std::span<const SummaryRow> rows, const std::string& baseline,
                                double attainment_target) {
  CompareResult res;
  res.baseline = baseline;
  std::map<double, const SummaryRow*> base;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SummaryRow*>> by_engine;
  for (const auto& r : rows) {
    if (r.engine == baseline) base[r.qps] = &r;
    if (!by_engine.count(r.engine)) order.push_back(r.engine);
    by_engine[r.engine].push_back(&r);
  }
  if (base.empty()) throw Error("compare: baseline '" + baseline + "' not in summary");

  std::ostringstream rep;
  rep << "baseline: " << baseline << "\n";
  for (const auto& name : order) {
    auto list = by_engine[name];
    std::stable_sort(list.begin(), list.end(),
                     [](const SummaryRow* a, const SummaryRow* b) { return a->qps < b->qps; });
    RatioSeries s;
    s.engine = name;
    for (const SummaryRow* r : list) {
      if (r->qps > 0 && r->goodput / r->qps >= attainment_target) s.max_rate = std::max(s.max_rate, r->qps);
      auto it = base.find(r->qps);
      if (it == base.end()) continue;
      const SummaryRow& b = *it->second;
      s.qps.push_back(r->qps);
      s.throughput.push_back(ratio(r->tokens_per_s, b.tokens_per_s));
      s.goodput.push_back(ratio(r->goodput, b.goodput));
      s.ttft_p95.push_back(ratio(r->ttft_p95_us, b.ttft_p95_us));
      s.itl_p95.push_back(ratio(r->itl_p95_us, b.itl_p95_us));
    }
    rep << "\nengine: " << name << "\n";
    rep << "  qps  throughput  goodput  ttft_p95  itl_p95\n";
    for (std::size_t i = 0; i < s.qps.size(); ++i) {
      rep << "  " << format_number(s.qps[i]) << "  " << fmt4(s.throughput[i]) << "  "
          << fmt4(s.goodput[i]) << "  " << fmt4(s.ttft_p95[i]) << "  " << fmt4(s.itl_p95[i])
          << "\n";
    }
    if (!s.qps.empty()) {
      rep << "  max: throughput " << fmt4(maxof(s.throughput)) << ", goodput "
          << fmt4(maxof(s.goodput)) << ", ttft_p95 " << fmt4(maxof(s.ttft_p95)) << ", itl_p95 "
          << fmt4(maxof(s.itl_p95)) << "\n";
      rep << "  geomean: throughput " << fmt4(geomean(s.throughput)) << ", goodput "
          << fmt4(geomean(s.goodput)) << ", ttft_p95 " << fmt4(geomean(s.ttft_p95))
          << ", itl_p95 " << fmt4(geomean(s.itl_p95)) << "\n";
    }
    rep << "  max rate at " << format_number(attainment_target * 100) << "% attainment: "
        << format_number(s.max_rate) << " qps\n";
    res.series.push_back(std::move(s));
  }
  res.report = rep.str();
  return res;
}

}  // namespace pdsim
