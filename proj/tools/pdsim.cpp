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

// pdsim: run, sweep, profile and compare serving-engine simulations.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pdsim/allocator.hpp"
#include "pdsim/config.hpp"
#include "pdsim/experiment.hpp"

namespace {

using namespace pdsim;

struct Flags {
  std::string config;
  std::string qps;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string engines;
  int parallel = 1;
  std::string event_trace;
  std::string summary;
  std::string baseline = "hybrid-512";
  std::optional<double> attainment;
  std::string profile_out;
};

std::vector<double> parse_qps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v > 0)) throw ConfigError("bad qps value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty qps list");
  return out;
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? default_config() : load_config(f.config);
  if (f.seed) cfg.trace.seed = *f.seed;
  if (!f.engines.empty()) cfg.engines = parse_engine_list(f.engines);
  if (!f.out_dir.empty()) cfg.output_dir = f.out_dir;
  if (f.attainment) cfg.attainment_target = *f.attainment;
  return cfg;
}

int cmd_run(const Flags& f) {
  RunConfig cfg = resolve(f);
  double qps = cfg.trace.qps;
  if (!f.qps.empty()) {
    auto list = parse_qps_list(f.qps);
    if (list.size() != 1) throw ConfigError("run takes a single --qps value");
    qps = list.front();
  }
  std::vector<RunSummary> all;
  for (const auto& spec : cfg.engines) {
    std::ofstream trace_file;
    std::ostream* trace = nullptr;
    if (!f.event_trace.empty()) {
      std::string path = f.event_trace;
      if (cfg.engines.size() > 1) path += "." + spec.label;
      const auto parent = std::filesystem::path(path).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
      trace_file.open(path);
      if (!trace_file) throw Error("cannot write event trace '" + path + "'");
      trace = &trace_file;
    }
    auto result = run_one(cfg, spec, qps, false, trace);
    const std::string dir =
        cfg.engines.size() == 1 ? cfg.output_dir : cfg.output_dir + "/" + result.summary.engine;
    write_run_outputs(dir, result.summary);
    for (const auto& v : result.violations) std::cerr << "warning: " << v << "\n";
    std::cout << result.summary.engine << " qps=" << format_number(qps)
              << " tokens/s=" << format_number(result.summary.tokens_per_s)
              << " goodput=" << format_number(result.summary.goodput)
              << " itl_goodput=" << format_number(result.summary.itl_goodput) << " -> " << dir
              << "\n";
    all.push_back(std::move(result.summary));
  }
  if (cfg.engines.size() > 1) write_sweep_outputs(cfg.output_dir, all);
  return 0;
}

int cmd_sweep(const Flags& f) {
  RunConfig cfg = resolve(f);
  std::vector<double> qps = f.qps.empty() ? cfg.sweep_qps : parse_qps_list(f.qps);
  if (qps.empty()) throw ConfigError("sweep needs --qps or sweep.qps in the config");
  auto rows = run_sweep(cfg, cfg.engines, qps, f.parallel);
  write_sweep_outputs(cfg.output_dir, rows);
  std::cout << "wrote " << rows.size() << " rows to " << cfg.output_dir << "/summary.csv\n";
  return 0;
}

int cmd_profile(const Flags& f) {
  RunConfig cfg = resolve(f);
  const CostModel cost(cfg.model, cfg.gpu.aggregate(cfg.rapid.tp), cfg.cost);
  ProfileConfig pc;
  pc.itl_slo_us = cfg.slo.itl_slo_us;
  pc.safety_margin = cfg.rapid.safety_margin;
  pc.reference_context = reference_context(cfg);
  pc.batch_grid = cfg.rapid.profile_batch_grid;
  const Profile p = build_profile(cost, pc);
  std::string path = f.profile_out;
  if (path.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    path = cfg.output_dir + "/profile.csv";
  }
  save_profile(path, p);
  std::cout << "wrote " << p.entries.size() << " profile entries to " << path << "\n";
  return 0;
}

int cmd_compare(const Flags& f) {
  if (f.summary.empty()) throw ConfigError("compare needs --summary");
  const double target = f.attainment.value_or(0.9);
  auto rows = load_summary_csv(f.summary);
  auto res = compare_summaries(rows, f.baseline, target);
  std::cout << res.report;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdsim: discrete-event simulator of LLM serving engines"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "Run configuration (JSON)")->envname("PDSIM_CONFIG");
    sub->add_option("--out-dir", f.out_dir, "Output directory")->envname("PDSIM_OUT_DIR");
    sub->add_option("--seed", f.seed, "Trace seed")->envname("PDSIM_SEED");
    sub->add_option("--engines", f.engines, "Comma-separated engine labels")
        ->envname("PDSIM_ENGINES");
  };

  auto* run = app.add_subcommand("run", "Run one simulation per selected engine");
  common(run);
  run->add_option("--qps", f.qps, "Offered load")->envname("PDSIM_QPS");
  run->add_option("--event-trace", f.event_trace, "Write dispatched events (JSON lines)")
      ->envname("PDSIM_EVENT_TRACE");

  auto* sweep = app.add_subcommand("sweep", "Run every engine at every QPS");
  common(sweep);
  sweep->add_option("--qps", f.qps, "Comma-separated offered loads")->envname("PDSIM_QPS");
  sweep->add_option("--parallel", f.parallel, "Worker threads")
      ->envname("PDSIM_PARALLEL")
      ->check(CLI::PositiveNumber);

  auto* profile = app.add_subcommand("profile", "Build the decode CU profile");
  common(profile);
  profile->add_option("--out", f.profile_out, "Profile file (default <out-dir>/profile.csv)")
      ->envname("PDSIM_PROFILE_OUT");

  auto* compare = app.add_subcommand("compare", "Report ratios against a baseline engine");
  compare->add_option("--summary", f.summary, "Sweep summary.csv")
      ->envname("PDSIM_SUMMARY")
      ->required();
  compare->add_option("--baseline", f.baseline, "Baseline engine label")
      ->envname("PDSIM_BASELINE");
  compare->add_option("--attainment", f.attainment, "Goodput attainment target")
      ->envname("PDSIM_ATTAINMENT");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(f);
    if (sweep->parsed()) return cmd_sweep(f);
    if (profile->parsed()) return cmd_profile(f);
    if (compare->parsed()) return cmd_compare(f);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
