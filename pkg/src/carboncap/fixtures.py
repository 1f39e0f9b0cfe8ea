"""Bundled deterministic fixtures for experiments and tests.

Three 96-hour carbon regions span the low/medium/high variability range seen
in practice (a near-flat high-intensity grid, a mild diurnal cycle, and a
solar-heavy grid with deep daily swings), plus a 50-job synthetic workload
mix and a small single-migration demo scenario. Everything regenerates
byte-identically from committed seeds; ``materialize`` rewrites the data
directory.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .traces import (
    CarbonTrace,
    WorkloadTrace,
    serialize_carbon_traces,
    serialize_workload_traces,
    synth_carbon_trace,
    synth_workload_trace,
)

CARBON_FIXTURE = "carbon_3regions_96h.csv"
WORKLOAD_FIXTURE = "workload_50jobs_96h.csv"
DEFAULT_CONFIG = "default_config.json"
DEMO_CONFIG = "demo_config.json"
DEMO_CARBON = "demo_carbon.csv"
DEMO_WORKLOAD = "demo_workload.csv"

FIXTURE_START = datetime(2021, 6, 1, tzinfo=timezone.utc)
WORKLOAD_MASTER_SEED = 7
N_JOBS = 50
N_WORKLOAD_SAMPLES = 96 * 12  # 96 hours at 5-minute resolution


def data_path(name: str) -> Path:
    return Path(resources.files("carboncap") / "data" / name)


def bundled_carbon_traces() -> list[CarbonTrace]:
    """Low-CoV (PL), medium-CoV (NL), high-CoV (CA) hourly regions, 96 h."""
    specs = [
        ("PL", {"mean": 700.0, "amplitude": 15.0, "period": 24}),
        ("NL", {"mean": 380.0, "amplitude": 60.0, "period": 24}),
        ("CA", {"mean": 260.0, "amplitude": 170.0, "period": 24}),
    ]
    return [
        synth_carbon_trace("sinusoid", 96, params, region=region,
                           start=FIXTURE_START)
        for region, params in specs
    ]


def bundled_workload_traces() -> list[WorkloadTrace]:
    """50 synthetic jobs mixing constant, diurnal, step, and bursty shapes.

    Parameter ranges lean toward production VM behavior: utilization mostly
    well below the job's own server size, many near-idle jobs, and occasional
    bursts that rarely exceed baseline capacity.
    """
    traces = []
    for i in range(N_JOBS):
        rng = np.random.default_rng((WORKLOAD_MASTER_SEED, i))
        job_id = f"job{i:02d}"
        mem_gb = round(float(rng.uniform(1.0, 8.0)), 2)
        kind = ("constant", "sinusoid", "step", "bursty")[i % 4]
        seed = None
        if kind == "constant":
            params = {"value": round(float(rng.uniform(0.03, 0.7)), 4)}
        elif kind == "sinusoid":
            mean = float(rng.uniform(0.08, 0.45))
            params = {
                "mean": round(mean, 4),
                "amplitude": round(float(rng.uniform(0.3, 0.9)) * mean, 4),
                "period": int(rng.choice([144, 288])),
                "phase": round(float(rng.uniform(0, 2 * np.pi)), 4),
            }
        elif kind == "step":
            params = {
                "low": round(float(rng.uniform(0.02, 0.2)), 4),
                "high": round(float(rng.uniform(0.25, 1.0)), 4),
                "period": int(rng.choice([72, 144, 288])),
            }
        else:
            params = {
                "base": round(float(rng.uniform(0.02, 0.12)), 4),
                "burst": round(float(rng.uniform(0.3, 1.2)), 4),
                "p_up": round(float(rng.uniform(0.015, 0.05)), 4),
                "p_down": round(float(rng.uniform(0.08, 0.25)), 4),
            }
            seed = int(rng.integers(0, 2**31))
        traces.append(synth_workload_trace(
            kind, N_WORKLOAD_SAMPLES, params, job_id=job_id,
            start=FIXTURE_START, mem_gb=mem_gb, seed=seed,
        ))
    return traces


DEMO_DEMANDS = [0.45, 0.48, 0.44, 0.40, 0.30, 0.18, 0.16, 0.15, 0.18, 0.26,
                0.33, 0.35]


def demo_workload_trace() -> WorkloadTrace:
    """One hour of demand that climbs, dips, and climbs again."""
    from .traces import FIVE_MIN, WorkloadSample

    samples = tuple(
        WorkloadSample(FIXTURE_START + k * FIVE_MIN, d, d, d, 0.5)
        for k, d in enumerate(DEMO_DEMANDS)
    )
    return WorkloadTrace("demo-job", samples)


def demo_carbon_trace() -> CarbonTrace:
    """Steady intensity over the sub-hour demo window."""
    return synth_carbon_trace("constant", 2, {"value": 300.91},
                              region="demo", start=FIXTURE_START)


def default_config_doc() -> dict:
    """Experiment config with the full 0.25x..4x proportional server family."""
    sizes = [0.25, 0.5, 1.0, 2.0, 4.0]
    return {
        "fleet": {
            "baseline_id": "s1x",
            "servers": [
                {"id": f"s{m:g}x", "capacity_multiple": m,
                 "cores": int(8 * m), "base_power_w": 100.0 * m,
                 "peak_power_w": 200.0 * m, "memory_gb": 16.0 * m}
                for m in sizes
            ],
        },
        "container": {"c_target_g_per_hr": 40.0, "epsilon": 0.05,
                      "memory_gb": 2.0, "min_dwell_s": 600},
        "policy": {"kind": "cc-efficiency"},
        "sim": {"step_s": 300, "demand_scale": 1.0, "seed": 1,
                "suspend_baseload_attributed": True, "quota_mode": "cores"},
        "migration": {"c0_s": 10.0, "c1_s_per_gb": 15.0,
                      "mode": "stop-and-copy"},
        "availability": {},
    }


def demo_config_doc() -> dict:
    """Two-server scenario: the job starts above target on an 8-core-class
    server, scales down, then migrates to the 2-core class."""
    return {
        "fleet": {
            "baseline_id": "s1x-8core",
            "servers": [
                {"id": "s0.25x-2core", "capacity_multiple": 0.25, "cores": 2,
                 "base_power_w": 25.0, "peak_power_w": 50.0, "memory_gb": 4.0},
                {"id": "s1x-8core", "capacity_multiple": 1.0, "cores": 8,
                 "base_power_w": 100.0, "peak_power_w": 200.0,
                 "memory_gb": 16.0},
            ],
        },
        "container": {"c_target_g_per_hr": 45.0, "epsilon": 0.05,
                      "memory_gb": 0.5, "min_dwell_s": 600},
        "policy": {"kind": "cc-efficiency"},
        "sim": {"step_s": 300, "demand_scale": 1.0, "seed": 1,
                "suspend_baseload_attributed": True, "quota_mode": "cores"},
        "migration": {"c0_s": 10.0, "c1_s_per_gb": 15.0,
                      "mode": "stop-and-copy"},
        "availability": {},
    }


def materialize(directory: Path | str) -> list[Path]:
    """Write all bundled fixtures into a directory; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    def write(name: str, text: str) -> None:
        path = directory / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    write(CARBON_FIXTURE, serialize_carbon_traces(bundled_carbon_traces()))
    write(WORKLOAD_FIXTURE, serialize_workload_traces(bundled_workload_traces()))
    write(DEMO_CARBON, serialize_carbon_traces([demo_carbon_trace()]))
    write(DEMO_WORKLOAD, serialize_workload_traces([demo_workload_trace()]))
    write(DEMO_CONFIG, json.dumps(demo_config_doc(), indent=2, sort_keys=True) + "\n")
    write(DEFAULT_CONFIG,
          json.dumps(default_config_doc(), indent=2, sort_keys=True) + "\n")
    return written


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else str(
        Path(__file__).parent / "data")
    for path in materialize(target):
        print(path)
