# Copyright 2026 The pdsim Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Python bindings for the pdsim serving simulator."""

from pdsim._core import (
    AllocationDecision,
    BlockPool,
    ConfigError,
    CostModel,
    CostParams,
    GpuSpec,
    ModelSpec,
    PdsimError,
    Profile,
    RunConfig,
    RunSummary,
    TraceParseError,
    allocate,
    build_profile,
    compare,
    default_config,
    kv_cache_bytes,
    load_config,
    load_profile,
    load_trace,
    parse_config,
    parse_trace,
    percentile,
    run,
    sweep,
    synthesize,
    transfer_delay_us,
    ttft_ceiling_us,
    validate_specs,
    write_sweep_outputs,
    write_trace,
)

SUMMARY_COLUMNS = (
    "engine",
    "qps",
    "tokens_per_s",
    "requests_per_s",
    "goodput",
    "itl_goodput",
    "ttft_p95_us",
    "itl_p95_us",
    "compute_util",
    "mem_util",
)

__all__ = [name for name in dir() if not name.startswith("_")]
