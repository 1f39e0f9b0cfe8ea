"""Aggregate simulation results into evaluation metrics.

The headline metrics are the average carbon emissions rate (g CO2e/hr) and
the throttling percentage, normalized to the baseline server: 10% average
throttling means the job would have filled a server with 110% of the
baseline's capacity. Error bars use the population standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import SimConfig
from .sim import SimResult


@dataclass(frozen=True)
class Summary:
    avg_emissions_g_per_hr: float
    total_emissions_g: float
    throttling_pct: float
    suspended_fraction: float
    migration_count: int
    violation_fraction: float  # steps with emissions above the raw target
    time_on_server: dict[float, float]  # capacity_multiple -> fraction of steps

    def to_dict(self) -> dict:
        doc = {
            "avg_emissions_g_per_hr": self.avg_emissions_g_per_hr,
            "total_emissions_g": self.total_emissions_g,
            "throttling_pct": self.throttling_pct,
            "suspended_fraction": self.suspended_fraction,
            "migration_count": self.migration_count,
            "violation_fraction": self.violation_fraction,
            "time_on_server": {f"{m:g}": f for m, f in
                               sorted(self.time_on_server.items())},
        }
        return doc


def summarize(result: SimResult, cfg: SimConfig) -> Summary:
    """Aggregate one run; see Summary for field definitions."""
    records = result.records
    if not records:
        raise ValueError("cannot summarize an empty result")
    n = len(records)
    step_hours = cfg.step_s / 3600.0
    rates = np.array([r.emissions_rate_g_per_hr for r in records])
    throttles = np.array([r.throttle_baseline_units for r in records])
    total_g = float(np.sum(rates) * step_hours)
    total_hours = n * step_hours
    suspended = sum(1 for r in records if r.status == "suspended")
    migrations = sum(1 for a in result.actions if a.kind.value == "MigrateTo")
    target = cfg.container.c_target_g_per_hr
    violations = int(np.sum(rates > target))
    capacity = {s.id: s.capacity_multiple for s in cfg.fleet.servers}
    time_on: dict[float, float] = {}
    for r in records:
        m = capacity[r.server_id]
        time_on[m] = time_on.get(m, 0.0) + 1.0
    time_on = {m: c / n for m, c in time_on.items()}
    return Summary(
        avg_emissions_g_per_hr=total_g / total_hours,
        total_emissions_g=total_g,
        throttling_pct=100.0 * float(np.mean(throttles)),
        suspended_fraction=suspended / n,
        migration_count=migrations,
        violation_fraction=violations / n,
        time_on_server=time_on,
    )


@dataclass(frozen=True)
class ComparisonRow:
    policy: str
    target_g_per_hr: float
    mean_emissions: float
    std_emissions: float
    mean_throttle_pct: float
    std_throttle_pct: float


COMPARISON_CSV_HEADER = [
    "policy", "target_g_per_hr", "mean_emissions", "std_emissions",
    "mean_throttle_pct", "std_throttle_pct",
]


def compare(groups: Mapping[str, Mapping[float, Mapping[str, Summary]]],
            ) -> list[ComparisonRow]:
    """Per-(policy, target) mean and population sigma across a shared job set.

    ``groups[policy][target][job_id]`` holds one job's Summary. Every cell
    must cover the same jobs; rows come back sorted by (policy, target).
    """
    if not groups:
        raise ValueError("nothing to compare")
    job_sets = {
        (policy, target): frozenset(jobs)
        for policy, by_target in groups.items()
        for target, jobs in by_target.items()
    }
    reference = next(iter(job_sets.values()))
    if not reference:
        raise ValueError("nothing to compare")
    for (policy, target), jobs in job_sets.items():
        if jobs != reference:
            raise ValueError(
                f"job set for ({policy}, {target:g}) differs from the others"
            )
    rows = []
    for policy in sorted(groups):
        for target in sorted(groups[policy]):
            cell = groups[policy][target]
            emissions = np.array(
                [cell[j].avg_emissions_g_per_hr for j in sorted(cell)])
            throttle = np.array([cell[j].throttling_pct for j in sorted(cell)])
            rows.append(ComparisonRow(
                policy=policy,
                target_g_per_hr=target,
                mean_emissions=float(np.mean(emissions)),
                std_emissions=float(np.std(emissions)),
                mean_throttle_pct=float(np.mean(throttle)),
                std_throttle_pct=float(np.std(throttle)),
            ))
    return rows


def server_time_distribution(
    groups: Mapping[str, Mapping[float, Mapping[str, Summary]]],
) -> dict[tuple[str, float], dict[float, float]]:
    """Mean fraction of time per server size for each (variant, target).

    Fractions across capacity classes sum to 1 for every key.
    """
    out: dict[tuple[str, float], dict[float, float]] = {}
    for variant, by_target in groups.items():
        for target, cell in by_target.items():
            if not cell:
                raise ValueError(f"empty job set for ({variant}, {target:g})")
            acc: dict[float, float] = {}
            for summary in cell.values():
                for multiple, fraction in summary.time_on_server.items():
                    acc[multiple] = acc.get(multiple, 0.0) + fraction
            out[(variant, target)] = {m: f / len(cell) for m, f in acc.items()}
    return out


def large_server_fraction(distribution: Mapping[float, float],
                          threshold: float = 2.0) -> float:
    """Share of time on servers at or above a capacity multiple."""
    return sum(f for m, f in distribution.items() if m >= threshold)


def population_std(values) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("empty series")
    return float(np.std(arr))


def check_total_matches_integral(summary: Summary, result: SimResult,
                                 cfg: SimConfig, rel_tol: float = 1e-6) -> bool:
    """Re-derive total grams from the per-step series and compare."""
    step_hours = cfg.step_s / 3600.0
    total = math.fsum(r.emissions_rate_g_per_hr * step_hours
                      for r in result.records)
    if total == 0.0 and summary.total_emissions_g == 0.0:
        return True
    return abs(total - summary.total_emissions_g) <= rel_tol * abs(total)
