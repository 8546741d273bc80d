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

#include "pdsim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pdsim {

using nlohmann::json;

EngineSpec parse_engine_label(std::string_view label) {
  EngineSpec s;
  s.label = std::string(label);
  if (label == "rapid") {
    s.kind = EngineKind::Rapid;
  } else if (label == "disagg") {
    s.kind = EngineKind::Disagg;
  } else if (label == "hybrid") {
    s.kind = EngineKind::Hybrid;
  } else if (label.rfind("hybrid-", 0) == 0) {
    s.kind = EngineKind::Hybrid;
    const std::string num(label.substr(7));
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != num.size() || v < 1) throw ConfigError("bad hybrid engine label '" + s.label + "'");
    s.token_budget = v;
  } else {
    throw ConfigError("unknown engine '" + s.label + "' (hybrid|hybrid-<budget>|disagg|rapid)");
  }
  return s;
}

std::vector<EngineSpec> parse_engine_list(std::string_view comma_separated) {
  std::vector<EngineSpec> out;
  std::size_t pos = 0;
  while (pos <= comma_separated.size()) {
    const auto end = std::min(comma_separated.find(',', pos), comma_separated.size());
    auto item = comma_separated.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.push_back(parse_engine_label(item));
    pos = end + 1;
  }
  if (out.empty()) throw ConfigError("empty engine list");
  return out;
}

namespace {

// Reads an object strictly; every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* raw(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void number(const char* key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) throw ConfigError(at(key) + " must be a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const char* key, Int& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key) + " must be an integer");
      out = static_cast<Int>(v->get<std::int64_t>());
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw ConfigError(at(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  std::string at(const char* key) const { return "'" + (path_.empty() ? "" : path_ + ".") + key + "'"; }
  std::string child_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + at(it.key().c_str()));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config " : "'" + path_ + "' "; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<std::int64_t> int_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError("'" + path + "' must be an array");
  std::vector<std::int64_t> out;
  for (const auto& x : v) {
    if (!x.is_number_integer()) throw ConfigError("'" + path + "' entries must be integers");
    out.push_back(x.get<std::int64_t>());
  }
  return out;
}

std::vector<double> number_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError("'" + path + "' must be an array");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError("'" + path + "' entries must be numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

ModelSpec read_model(const json& v) {
  if (v.is_string()) {
    try {
      return ModelSpec::preset(v.get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(std::string("'model': ") + e.what());
    }
  }
  Reader r(v, "model");
  ModelSpec m;
  if (const json* p = r.raw("preset")) {
    if (!p->is_string()) throw ConfigError("'model.preset' must be a string");
    try {
      m = ModelSpec::preset(p->get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(std::string("'model.preset': ") + e.what());
    }
  }
  r.string("name", m.name);
  r.integer("layers", m.layers);
  r.integer("kv_heads", m.kv_heads);
  r.integer("head_dim", m.head_dim);
  r.integer("bytes_per_element", m.bytes_per_element);
  r.number("flops_per_token", m.flops_per_token);
  if (const json* w = r.raw("weight_bytes")) {
    if (!w->is_number()) throw ConfigError("'model.weight_bytes' must be a number");
    m.weight_bytes = static_cast<Bytes>(std::llround(w->get<double>()));
  }
  r.finish();
  return m;
}

GpuSpec read_gpu(const json& v) {
  if (v.is_string()) {
    try {
      return GpuSpec::preset(v.get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(std::string("'gpu': ") + e.what());
    }
  }
  Reader r(v, "gpu");
  GpuSpec g;
  if (const json* p = r.raw("preset")) {
    if (!p->is_string()) throw ConfigError("'gpu.preset' must be a string");
    try {
      g = GpuSpec::preset(p->get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(std::string("'gpu.preset': ") + e.what());
    }
  }
  r.string("name", g.name);
  r.integer("num_cus", g.num_cus);
  r.number("peak_flops", g.peak_flops);
  r.number("hbm_bandwidth", g.hbm_bandwidth);
  if (const json* c = r.raw("hbm_capacity")) {
    if (!c->is_number()) throw ConfigError("'gpu.hbm_capacity' must be a number");
    g.hbm_capacity = static_cast<Bytes>(std::llround(c->get<double>()));
  }
  r.number("kernel_launch_overhead_us", g.kernel_launch_overhead_us);
  r.number("interconnect_bandwidth", g.interconnect_bandwidth);
  r.finish();
  return g;
}

void read_engines(const json& v, const std::string& path, std::vector<EngineSpec>& out) {
  out.clear();
  if (v.is_string()) {
    out = parse_engine_list(v.get<std::string>());
    return;
  }
  if (!v.is_array()) throw ConfigError("'" + path + "' must be a string or an array");
  for (const auto& x : v) {
    if (!x.is_string()) throw ConfigError("'" + path + "' entries must be strings");
    out.push_back(parse_engine_label(x.get<std::string>()));
  }
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  c.engines = {parse_engine_label("rapid")};
  c.sweep_qps = {5, 10, 15, 20, 25, 30, 35, 40, 50, 60, 80, 100};
  return c;
}

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> errors;
  auto add = [&](std::vector<std::string> more) {
    errors.insert(errors.end(), more.begin(), more.end());
  };
  if (engines.empty()) errors.push_back("engines: at least one engine is required");
  add(validate_specs(model, gpu));
  add(cost.validate());
  if (kv.block_size < 1) errors.push_back("kv_cache.block_size must be >= 1");
  if (!(kv.activation_reserve >= 0 && kv.activation_reserve < 1)) {
    errors.push_back("kv_cache.activation_reserve must be in [0, 1)");
  }
  add(hybrid.validate());
  add(disagg.validate());
  add(rapid.validate());
  add(trace.validate());
  add(slo.validate());
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) {
    errors.push_back("warmup_fraction must be in [0, 1)");
  }
  if (!(drain_s >= 0)) errors.push_back("drain_s must be >= 0");
  for (double q : sweep_qps) {
    if (!(q > 0)) errors.push_back("sweep.qps entries must be > 0");
  }
  if (!(attainment_target > 0 && attainment_target <= 1)) {
    errors.push_back("sweep.attainment_target must be in (0, 1]");
  }
  // Weights must fit on every logical device the selected engines use.
  for (const auto& e : engines) {
    std::vector<std::int64_t> tps;
    if (e.kind == EngineKind::Hybrid) tps = {hybrid.tp};
    if (e.kind == EngineKind::Rapid) tps = {rapid.tp};
    if (e.kind == EngineKind::Disagg) tps = {disagg.prefill_tp, disagg.decode_tp};
    for (auto tp : tps) {
      if (tp < 1) continue;
      if (model.weight_bytes >= gpu.aggregate(tp).hbm_capacity) {
        errors.push_back(e.label + ": weights do not fit on a tp=" + std::to_string(tp) + " device");
      }
    }
  }
  return errors;
}

RunConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  RunConfig c = default_config();
  Reader r(root, "");
  if (r.has("engine") && r.has("engines")) throw ConfigError("give either 'engine' or 'engines'");
  if (const json* v = r.raw("engine")) read_engines(*v, "engine", c.engines);
  if (const json* v = r.raw("engines")) read_engines(*v, "engines", c.engines);
  if (const json* v = r.raw("model")) c.model = read_model(*v);
  if (const json* v = r.raw("gpu")) c.gpu = read_gpu(*v);
  if (const json* v = r.raw("cost")) {
    Reader s(*v, "cost");
    s.number("decode_plateau_fraction", c.cost.decode_plateau_fraction);
    s.number("prefill_mem_interference", c.cost.prefill_mem_interference);
    s.number("decode_mem_interference", c.cost.decode_mem_interference);
    s.number("cpu_step_overhead_us", c.cost.cpu_step_overhead_us);
    s.number("fixed_iteration_overhead_us", c.cost.fixed_iteration_overhead_us);
    s.finish();
  }
  if (const json* v = r.raw("kv_cache")) {
    Reader s(*v, "kv_cache");
    s.integer("block_size", c.kv.block_size);
    s.number("activation_reserve", c.kv.activation_reserve);
    s.finish();
  }
  if (const json* v = r.raw("hybrid")) {
    Reader s(*v, "hybrid");
    s.integer("token_budget", c.hybrid.token_budget);
    s.integer("max_batch_requests", c.hybrid.max_batch_requests);
    s.integer("tp", c.hybrid.tp);
    s.finish();
  }
  if (const json* v = r.raw("disagg")) {
    Reader s(*v, "disagg");
    s.integer("prefill_instances", c.disagg.prefill_instances);
    s.integer("prefill_tp", c.disagg.prefill_tp);
    s.integer("decode_instances", c.disagg.decode_instances);
    s.integer("decode_tp", c.disagg.decode_tp);
    s.number("interconnect_bandwidth", c.disagg.interconnect_bandwidth);
    s.number("transfer_overlap_fraction", c.disagg.transfer_overlap_fraction);
    s.integer("max_decode_batch", c.disagg.max_decode_batch);
    s.finish();
  }
  if (const json* v = r.raw("rapid")) {
    Reader s(*v, "rapid");
    s.integer("tp", c.rapid.tp);
    s.number("safety_margin", c.rapid.safety_margin);
    s.integer("reference_context", c.rapid.reference_context);
    s.number("notify_latency_us", c.rapid.notify_latency_us);
    if (const json* g = s.raw("profile_batch_grid")) {
      c.rapid.profile_batch_grid = int_list(*g, "rapid.profile_batch_grid");
    }
    s.string("profile_path", c.rapid.profile_path);
    s.finish();
  }
  if (const json* v = r.raw("trace")) {
    Reader s(*v, "trace");
    s.string("source", c.trace.source_path);
    if (const json* p = s.raw("preset")) {
      if (!p->is_string()) throw ConfigError("'trace.preset' must be a string");
      try {
        c.trace.preset = parse_length_preset(p->get<std::string>());
      } catch (const Error& e) {
        throw ConfigError(std::string("'trace.preset': ") + e.what());
      }
    }
    s.number("qps", c.trace.qps);
    s.number("duration_s", c.trace.duration_s);
    s.number("output_mean_tokens", c.trace.output_mean_tokens);
    s.integer("num_requests", c.trace.num_requests_cap);
    s.finish();
  }
  if (const json* v = r.raw("slo")) {
    Reader s(*v, "slo");
    s.number("itl_slo_us", c.slo.itl_slo_us);
    if (const json* st = s.raw("itl_statistic")) {
      if (!st->is_string()) throw ConfigError("'slo.itl_statistic' must be a string");
      try {
        c.slo.itl_statistic = parse_itl_statistic(st->get<std::string>());
      } catch (const Error& e) {
        throw ConfigError(std::string("'slo.itl_statistic': ") + e.what());
      }
    }
    s.finish();
  }
  r.integer("seed", c.trace.seed);
  r.number("warmup_fraction", c.warmup_fraction);
  r.number("drain_s", c.drain_s);
  if (const json* v = r.raw("sweep")) {
    Reader s(*v, "sweep");
    if (const json* q = s.raw("qps")) c.sweep_qps = number_list(*q, "sweep.qps");
    s.number("attainment_target", c.attainment_target);
    s.finish();
  }
  r.string("output_dir", c.output_dir);
  r.finish();

  if (auto errors = c.validate(); !errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

EngineSetup engine_setup(const RunConfig& cfg) {
  return EngineSetup{cfg.model, cfg.gpu, cfg.cost, cfg.kv, cfg.slo};
}

Tokens reference_context(const RunConfig& cfg) {
  if (cfg.rapid.reference_context > 0) return cfg.rapid.reference_context;
  const auto d = length_distribution(cfg.trace.preset, cfg.trace.output_mean_tokens);
  return static_cast<Tokens>(std::llround(d.prompt_mean + d.output_mean / 2.0));
}

std::unique_ptr<Engine> make_engine(const RunConfig& cfg, const EngineSpec& spec) {
  const EngineSetup setup = engine_setup(cfg);
  switch (spec.kind) {
    case EngineKind::Hybrid: {
      HybridConfig h = cfg.hybrid;
      if (spec.token_budget > 0) h.token_budget = spec.token_budget;
      return std::make_unique<HybridEngine>(setup, h);
    }
    case EngineKind::Disagg:
      return std::make_unique<DisaggEngine>(setup, cfg.disagg);
    case EngineKind::Rapid: {
      RapidConfig r = cfg.rapid;
      r.reference_context = reference_context(cfg);
      return std::make_unique<RapidEngine>(setup, r);
    }
  }
  throw Error("unknown engine kind");
}

}  // namespace pdsim
