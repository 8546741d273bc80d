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

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "pdsim/disagg.hpp"
#include "pdsim/engine.hpp"
#include "pdsim/hybrid.hpp"
#include "pdsim/rapid.hpp"
#include "pdsim/workload.hpp"

namespace pdsim {

enum class EngineKind : std::uint8_t { Hybrid, Disagg, Rapid };

// One entry of the engine selector. Labels: hybrid, hybrid-<budget>,
// disagg, rapid.
struct EngineSpec {
  EngineKind kind = EngineKind::Rapid;
  // Hybrid only; 0 takes hybrid.token_budget.
  Tokens token_budget = 0;
  std::string label;
};

EngineSpec parse_engine_label(std::string_view label);
std::vector<EngineSpec> parse_engine_list(std::string_view comma_separated);

struct RunConfig {
  std::vector<EngineSpec> engines;
  ModelSpec model;
  GpuSpec gpu;
  CostParams cost;
  BlockPoolConfig kv;
  HybridConfig hybrid;
  DisaggConfig disagg;
  RapidConfig rapid;
  TraceSpec trace;
  SloSpec slo;
  double warmup_fraction = 0.1;
  double drain_s = 30.0;
  std::vector<double> sweep_qps;
  double attainment_target = 0.9;
  std::string output_dir = "out";

  // Every violated constraint, one message each.
  std::vector<std::string> validate() const;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Strict parsing: unknown keys and wrong types raise ConfigError naming the
// dotted key path. The result is validated.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::string& path);
RunConfig default_config();

EngineSetup engine_setup(const RunConfig& cfg);
// Reference context for the RAPID profile under this configuration.
Tokens reference_context(const RunConfig& cfg);
std::unique_ptr<Engine> make_engine(const RunConfig& cfg, const EngineSpec& spec);

}  // namespace pdsim
