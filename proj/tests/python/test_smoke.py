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

"""Smoke tests for the pdsim Python module."""

import csv
import json
import os
import random

import pytest

import pdsim

SRC = os.environ.get("PDSIM_SRC", os.path.join(os.path.dirname(__file__), "..", ".."))


def small_config(**trace):
    body = {
        "engines": ["hybrid-512", "disagg", "rapid"],
        "trace": dict({"qps": 8, "duration_s": 8}, **trace),
        "seed": 3,
        "sweep": {"qps": [4, 8]},
    }
    return pdsim.parse_config(json.dumps(body))


def test_kv_cache_bytes_matches_closed_form():
    rng = random.Random(11)
    for _ in range(100):
        m = pdsim.ModelSpec()
        m.layers = rng.randint(1, 128)
        m.kv_heads = rng.randint(1, 64)
        m.head_dim = rng.randint(1, 256)
        m.bytes_per_element = rng.choice([1, 2, 4])
        s = rng.randint(0, 65536)
        want = 2 * m.layers * s * m.kv_heads * m.head_dim * m.bytes_per_element
        assert pdsim.kv_cache_bytes(m, s) == want
    assert pdsim.kv_cache_bytes(pdsim.ModelSpec(), 2048) == 671088640


def test_validate_specs_names_fields():
    g = pdsim.GpuSpec()
    g.num_cus = 1
    errors = pdsim.validate_specs(pdsim.ModelSpec(), g)
    assert any("num_cus" in e for e in errors)
    assert pdsim.validate_specs(pdsim.ModelSpec(), pdsim.GpuSpec()) == []


def test_cost_model_monotone_in_prefill_tokens():
    c = pdsim.CostModel()
    times = [c.prefill_us(n) for n in (128, 512, 2048, 8192)]
    assert times == sorted(times)
    assert c.prefill_us(4096, 0.5) > 1.8 * c.prefill_us(4096, 1.0)


def test_block_pool_conserves_blocks():
    pool = pdsim.BlockPool(64, 16)
    assert pool.allocate_prompt(1, 100)
    assert pool.allocate_prompt(2, 40)
    assert pool.free_blocks == 64 - 7 - 3
    assert not pool.allocate_prompt(3, 16 * 60)
    assert pool.free_blocks == 54
    pool.release(1)
    pool.release(2)
    assert pool.free_blocks == 64
    assert pool.audit() == []


def test_synthesize_is_deterministic_and_sorted():
    a = pdsim.synthesize(10, 20, seed=5)
    b = pdsim.synthesize(10, 20, seed=5)
    assert [(r.arrival_us, r.prompt_tokens, r.output_tokens) for r in a] == [
        (r.arrival_us, r.prompt_tokens, r.output_tokens) for r in b
    ]
    arrivals = [r.arrival_us for r in a]
    assert arrivals == sorted(arrivals)
    assert all(r.prompt_tokens >= 1 and r.output_tokens >= 1 for r in a)


def test_trace_round_trip(tmp_path):
    reqs = pdsim.synthesize(5, 4, seed=2)
    path = str(tmp_path / "trace.jsonl")
    pdsim.write_trace(path, reqs)
    back = pdsim.load_trace(path)
    assert [(r.arrival_us, r.prompt_tokens) for r in back] == [(r.arrival_us, r.prompt_tokens) for r in reqs]
    with pytest.raises(pdsim.TraceParseError):
        pdsim.parse_trace('{"arrival_us": 1}\n')


def test_unknown_config_key_raises():
    with pytest.raises(pdsim.ConfigError, match="trace.burst"):
        pdsim.parse_config('{"trace": {"burst": 1}}')
    assert issubclass(pdsim.ConfigError, RuntimeError)


@pytest.mark.parametrize("engine", ["hybrid-512", "disagg", "rapid"])
def test_audited_run_is_clean(engine):
    out = pdsim.run(small_config(), engine, 8.0, audit=True)
    assert out["violations"] == 0
    s = out["summary"]
    assert s.engine == engine
    assert 0 <= s.goodput <= s.requests_per_s + 1e-9
    assert s.goodput <= s.itl_goodput + 1e-9
    for r in out["requests"]:
        assert r.state == "Finished"
        assert len(r.token_times_us) == r.output_tokens
        assert r.token_times_us == sorted(set(r.token_times_us))


def test_rapid_runs_one_extra_decode_step():
    out = pdsim.run(small_config(), "rapid", 4.0)
    for r in out["requests"]:
        assert r.decode_participations == r.output_tokens + 1


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = small_config()
    serial = pdsim.sweep(cfg, parallel=1)
    threaded = pdsim.sweep(cfg, parallel=3)
    assert len(serial) == 6
    pdsim.write_sweep_outputs(str(tmp_path / "a"), serial)
    pdsim.write_sweep_outputs(str(tmp_path / "b"), threaded)
    for name in ("summary.csv", "pools.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with open(tmp_path / "a" / "summary.csv", newline="") as f:
        reader = csv.reader(f)
        assert tuple(next(reader)) == pdsim.SUMMARY_COLUMNS


def test_compare_against_baseline(tmp_path):
    cfg = small_config()
    pdsim.write_sweep_outputs(str(tmp_path), pdsim.sweep(cfg))
    res = pdsim.compare(str(tmp_path / "summary.csv"), "hybrid-512")
    assert res["baseline"] == "hybrid-512"
    assert set(res["series"]) == {"hybrid-512", "disagg", "rapid"}
    assert all(x == pytest.approx(1.0) for x in res["series"]["hybrid-512"]["throughput"])


def test_profile_is_monotone_and_round_trips(tmp_path):
    prof = pdsim.build_profile(pdsim.CostModel())
    fractions = [e.min_fraction for e in prof.entries]
    assert fractions == sorted(fractions)
    assert all(0 < f <= 1 for f in fractions)
    path = str(tmp_path / "profile.csv")
    prof.save(path)
    back = pdsim.load_profile(path)
    assert [e.batch for e in back.entries] == [e.batch for e in prof.entries]


def test_shipped_configs_parse():
    for name in ("example.json", "smoke.json", "long_prompts.json"):
        cfg = pdsim.load_config(os.path.join(SRC, "configs", name))
        assert cfg.validate() == []
