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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pdsim/allocator.hpp"
#include "pdsim/experiment.hpp"

namespace py = pybind11;
using namespace pdsim;

namespace {

std::vector<EngineSpec> engines_or_config(const RunConfig& cfg,
                                          const std::optional<std::vector<std::string>>& labels) {
  if (!labels) return cfg.engines;
  std::vector<EngineSpec> out;
  for (const auto& l : *labels) out.push_back(parse_engine_label(l));
  return out;
}

void bind_specs(py::module_& m) {
  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_readwrite("name", &ModelSpec::name)
      .def_readwrite("layers", &ModelSpec::layers)
      .def_readwrite("kv_heads", &ModelSpec::kv_heads)
      .def_readwrite("head_dim", &ModelSpec::head_dim)
      .def_readwrite("bytes_per_element", &ModelSpec::bytes_per_element)
      .def_readwrite("flops_per_token", &ModelSpec::flops_per_token)
      .def_readwrite("weight_bytes", &ModelSpec::weight_bytes)
      .def_static("preset", &ModelSpec::preset, py::arg("name"))
      .def("kv_bytes_per_token", &ModelSpec::kv_bytes_per_token);

  py::class_<GpuSpec>(m, "GpuSpec")
      .def(py::init<>())
      .def_readwrite("name", &GpuSpec::name)
      .def_readwrite("num_cus", &GpuSpec::num_cus)
      .def_readwrite("peak_flops", &GpuSpec::peak_flops)
      .def_readwrite("hbm_bandwidth", &GpuSpec::hbm_bandwidth)
      .def_readwrite("hbm_capacity", &GpuSpec::hbm_capacity)
      .def_readwrite("kernel_launch_overhead_us", &GpuSpec::kernel_launch_overhead_us)
      .def_readwrite("interconnect_bandwidth", &GpuSpec::interconnect_bandwidth)
      .def_static("preset", &GpuSpec::preset, py::arg("name"))
      .def("aggregate", &GpuSpec::aggregate, py::arg("devices"));

  m.def("kv_cache_bytes", &kv_cache_bytes, py::arg("model"), py::arg("seq_len"));
  m.def("validate_specs", &validate_specs, py::arg("model"), py::arg("gpu"));

  py::class_<AllocationDecision>(m, "AllocationDecision")
      .def_static("overallocate", &AllocationDecision::overallocate)
      .def_static("partition", &AllocationDecision::partition, py::arg("cu_decode"), py::arg("cu_prefill"))
      .def_property_readonly("is_partition", &AllocationDecision::is_partition)
      .def_readonly("cu_fraction_decode", &AllocationDecision::cu_fraction_decode)
      .def_readonly("cu_fraction_prefill", &AllocationDecision::cu_fraction_prefill)
      .def_readonly("slo_risk", &AllocationDecision::slo_risk);
}

void bind_cost(py::module_& m) {
  py::class_<CostParams>(m, "CostParams")
      .def(py::init<>())
      .def_readwrite("decode_plateau_fraction", &CostParams::decode_plateau_fraction)
      .def_readwrite("prefill_mem_interference", &CostParams::prefill_mem_interference)
      .def_readwrite("decode_mem_interference", &CostParams::decode_mem_interference)
      .def_readwrite("cpu_step_overhead_us", &CostParams::cpu_step_overhead_us)
      .def_readwrite("fixed_iteration_overhead_us", &CostParams::fixed_iteration_overhead_us);

  py::class_<CostModel>(m, "CostModel")
      .def(py::init<ModelSpec, GpuSpec, CostParams>(), py::arg("model") = ModelSpec{},
           py::arg("gpu") = GpuSpec{}, py::arg("params") = CostParams{})
      .def("prefill_us", &CostModel::prefill_us, py::arg("tokens"), py::arg("cu_fraction") = 1.0,
           py::arg("concurrent") = false)
      .def("decode_us", &CostModel::decode_us, py::arg("batch"), py::arg("total_kv_tokens"),
           py::arg("cu_fraction") = 1.0, py::arg("concurrent") = false)
      .def("hybrid_us", &CostModel::hybrid_us, py::arg("prefill_tokens"), py::arg("decode_batch"),
           py::arg("total_kv_tokens"))
      .def(
          "overlapped_us",
          [](const CostModel& c, Tokens p, std::int64_t b, Tokens kv, const AllocationDecision& a) {
            const auto t = c.overlapped_us(p, b, kv, a);
            return py::make_tuple(t.prefill_us, t.decode_us);
          },
          py::arg("prefill_tokens"), py::arg("decode_batch"), py::arg("total_kv_tokens"), py::arg("alloc"))
      .def("host_step_us", &CostModel::host_step_us);

  py::class_<BlockPool>(m, "BlockPool")
      .def(py::init<std::int64_t, Tokens>(), py::arg("total_blocks"), py::arg("block_size") = 16)
      .def("allocate_prompt",
           [](BlockPool& p, RequestId id, Tokens n) { return p.allocate_prompt(id, n) == AllocStatus::Ok; })
      .def("extend_for_token", [](BlockPool& p, RequestId id) { return p.extend_for_token(id) == AllocStatus::Ok; })
      .def("release", &BlockPool::release)
      .def("blocks_of", [](const BlockPool& p, RequestId id) {
        auto s = p.blocks_of(id);
        return std::vector<BlockId>(s.begin(), s.end());
      })
      .def_property_readonly("total_blocks", &BlockPool::total_blocks)
      .def_property_readonly("free_blocks", &BlockPool::free_blocks)
      .def("audit", &BlockPool::audit);
}

void bind_workload(py::module_& m) {
  py::class_<Request>(m, "Request")
      .def_readonly("id", &Request::id)
      .def_readonly("arrival_us", &Request::arrival_us)
      .def_readonly("prompt_tokens", &Request::prompt_tokens)
      .def_readonly("output_tokens", &Request::output_tokens)
      .def_readonly("token_times_us", &Request::token_times_us)
      .def_readonly("decode_participations", &Request::decode_participations)
      .def_property_readonly("state", [](const Request& r) { return std::string(to_string(r.state)); });

  m.def(
      "synthesize",
      [](double qps, double duration_s, std::uint64_t seed, const std::string& preset,
         double output_mean, std::int64_t cap) {
        TraceSpec s;
        s.qps = qps;
        s.duration_s = duration_s;
        s.seed = seed;
        s.preset = parse_length_preset(preset);
        s.output_mean_tokens = output_mean;
        s.num_requests_cap = cap;
        return synthesize(s);
      },
      py::arg("qps"), py::arg("duration_s"), py::arg("seed") = 1, py::arg("preset") = "short",
      py::arg("output_mean_tokens") = 256.0, py::arg("num_requests") = 0);
  m.def("parse_trace", [](const std::string& text) { return parse_trace(text); }, py::arg("text"));
  m.def("load_trace", [](const std::string& path) { return load_trace(path); }, py::arg("path"));
  m.def("write_trace", [](const std::string& path, const std::vector<Request>& r) { write_trace(path, r); },
        py::arg("path"), py::arg("requests"));
}

void bind_metrics(py::module_& m) {
  m.def("ttft_ceiling_us", &ttft_ceiling_us, py::arg("prompt_tokens"));
  m.def("percentile", &percentile, py::arg("values"), py::arg("p"));
  m.def("transfer_delay_us", &transfer_delay_us, py::arg("model"), py::arg("tokens"),
        py::arg("bandwidth"), py::arg("overlap_fraction") = 0.0);

  py::class_<PoolStats>(m, "PoolStats")
      .def_readonly("name", &PoolStats::name)
      .def_readonly("capacity_blocks", &PoolStats::capacity_blocks)
      .def_readonly("peak_used_blocks", &PoolStats::peak_used_blocks)
      .def_readonly("mem_util", &PoolStats::mem_util);

  py::class_<RunSummary>(m, "RunSummary")
      .def_readonly("engine", &RunSummary::engine)
      .def_readonly("qps", &RunSummary::qps)
      .def_readonly("window_s", &RunSummary::window_s)
      .def_readonly("requests_in_window", &RunSummary::requests_in_window)
      .def_readonly("finished_in_window", &RunSummary::finished_in_window)
      .def_readonly("tokens_per_s", &RunSummary::tokens_per_s)
      .def_readonly("requests_per_s", &RunSummary::requests_per_s)
      .def_readonly("goodput", &RunSummary::goodput)
      .def_readonly("itl_goodput", &RunSummary::itl_goodput)
      .def_readonly("ttft_p50_us", &RunSummary::ttft_p50_us)
      .def_readonly("ttft_p95_us", &RunSummary::ttft_p95_us)
      .def_readonly("ttft_p99_us", &RunSummary::ttft_p99_us)
      .def_readonly("itl_p50_us", &RunSummary::itl_p50_us)
      .def_readonly("itl_p95_us", &RunSummary::itl_p95_us)
      .def_readonly("itl_p99_us", &RunSummary::itl_p99_us)
      .def_readonly("itl_mean_us", &RunSummary::itl_mean_us)
      .def_readonly("compute_util", &RunSummary::compute_util)
      .def_readonly("mem_util", &RunSummary::mem_util)
      .def_readonly("pools", &RunSummary::pools)
      .def_readonly("counters", &RunSummary::counters);
}

void bind_allocator(py::module_& m) {
  py::class_<ProfileEntry>(m, "ProfileEntry")
      .def_readonly("batch", &ProfileEntry::batch)
      .def_readonly("min_fraction", &ProfileEntry::min_fraction)
      .def_readonly("saturated", &ProfileEntry::saturated);

  py::class_<Profile>(m, "Profile")
      .def_readonly("itl_slo_us", &Profile::itl_slo_us)
      .def_readonly("safety_margin", &Profile::safety_margin)
      .def_readonly("num_cus", &Profile::num_cus)
      .def_readonly("reference_context", &Profile::reference_context)
      .def_readonly("entries", &Profile::entries)
      .def("save", [](const Profile& p, const std::string& path) { save_profile(path, p); }, py::arg("path"));

  m.def(
      "build_profile",
      [](const CostModel& cost, double itl_slo_us, double margin, Tokens ref,
         std::vector<std::int64_t> grid) {
        ProfileConfig pc;
        pc.itl_slo_us = itl_slo_us;
        pc.safety_margin = margin;
        pc.reference_context = ref;
        pc.batch_grid = std::move(grid);
        return build_profile(cost, pc);
      },
      py::arg("cost"), py::arg("itl_slo_us") = 100'000.0, py::arg("safety_margin") = 0.9,
      py::arg("reference_context") = 2128, py::arg("batch_grid") = std::vector<std::int64_t>{});
  m.def("load_profile", &load_profile, py::arg("path"));
  m.def("allocate", &allocate, py::arg("profile"), py::arg("cost"), py::arg("decode_batch"),
        py::arg("prefill_pending_tokens"), py::arg("decode_kv_tokens"));
}

void bind_experiment(py::module_& m) {
  py::class_<RunConfig>(m, "RunConfig")
      .def_property_readonly("engines",
                             [](const RunConfig& c) {
                               std::vector<std::string> out;
                               for (const auto& e : c.engines) out.push_back(e.label);
                               return out;
                             })
      .def_readwrite("sweep_qps", &RunConfig::sweep_qps)
      .def_readwrite("output_dir", &RunConfig::output_dir)
      .def_readwrite("warmup_fraction", &RunConfig::warmup_fraction)
      .def_property(
          "qps", [](const RunConfig& c) { return c.trace.qps; }, [](RunConfig& c, double q) { c.trace.qps = q; })
      .def_property(
          "duration_s", [](const RunConfig& c) { return c.trace.duration_s; },
          [](RunConfig& c, double d) { c.trace.duration_s = d; })
      .def_property(
          "seed", [](const RunConfig& c) { return c.trace.seed; },
          [](RunConfig& c, std::uint64_t s) { c.trace.seed = s; })
      .def("validate", &RunConfig::validate);

  m.def("parse_config", &parse_config, py::arg("json_text"));
  m.def("load_config", &load_config, py::arg("path"));
  m.def("default_config", &default_config);

  m.def(
      "run",
      [](const RunConfig& cfg, const std::string& engine, double qps, bool audit) {
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_one(cfg, parse_engine_label(engine), qps, audit);
        }
        py::dict out;
        out["summary"] = r.summary;
        out["requests"] = r.requests;
        out["violations"] = r.violation_count;
        return out;
      },
      py::arg("config"), py::arg("engine") = "rapid", py::arg("qps") = 0.0, py::arg("audit") = false);

  m.def(
      "sweep",
      [](const RunConfig& cfg, std::optional<std::vector<std::string>> engines,
         std::optional<std::vector<double>> qps, int parallel) {
        const auto specs = engines_or_config(cfg, engines);
        std::vector<double> rates = qps ? *qps : cfg.sweep_qps;
        py::gil_scoped_release release;
        return run_sweep(cfg, specs, std::move(rates), parallel);
      },
      py::arg("config"), py::arg("engines") = py::none(), py::arg("qps") = py::none(),
      py::arg("parallel") = 1);

  m.def(
      "write_sweep_outputs",
      [](const std::string& dir, const std::vector<RunSummary>& rows) { write_sweep_outputs(dir, rows); },
      py::arg("dir"), py::arg("summaries"));

  m.def(
      "compare",
      [](const std::string& summary_csv, const std::string& baseline, double target) {
        const auto rows = load_summary_csv(summary_csv);
        const auto res = compare_summaries(rows, baseline, target);
        py::dict series;
        for (const auto& s : res.series) {
          py::dict d;
          d["qps"] = s.qps;
          d["throughput"] = s.throughput;
          d["goodput"] = s.goodput;
          d["ttft_p95"] = s.ttft_p95;
          d["itl_p95"] = s.itl_p95;
          d["max_rate"] = s.max_rate;
          series[py::str(s.engine)] = d;
        }
        py::dict out;
        out["baseline"] = res.baseline;
        out["series"] = series;
        out["report"] = res.report;
        return out;
      },
      py::arg("summary_csv"), py::arg("baseline") = "hybrid-512", py::arg("attainment_target") = 0.9);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Discrete-event simulator for prefill/decode LLM serving";

  auto base = py::register_exception<Error>(m, "PdsimError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<TraceParseError>(m, "TraceParseError", base);

  bind_specs(m);
  bind_cost(m);
  bind_workload(m);
  bind_metrics(m);
  bind_allocator(m);
  bind_experiment(m);
}
