"""Server size classes, linear power model, and cross-server projection.

All CPU quantities are fractions of the baseline server's capacity.
A job at 40% utilization on the baseline runs at 20% on a 2x server and at
80% on a 0.5x server; the linear model makes those projections exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping


@dataclass(frozen=True)
class ServerSpec:
    id: str
    capacity_multiple: float  # relative to baseline = 1.0
    cores: int
    base_power_w: float
    peak_power_w: float
    memory_gb: float

    def __post_init__(self) -> None:
        if self.capacity_multiple <= 0:
            raise ValueError(f"{self.id}: capacity_multiple must be > 0")
        if self.cores < 1:
            raise ValueError(f"{self.id}: cores must be >= 1")
        if not (self.peak_power_w > self.base_power_w > 0):
            raise ValueError(
                f"{self.id}: need peak_power_w > base_power_w > 0, got "
                f"{self.peak_power_w}/{self.base_power_w}"
            )
        if self.memory_gb <= 0:
            raise ValueError(f"{self.id}: memory_gb must be > 0")


@dataclass(frozen=True)
class Fleet:
    servers: tuple[ServerSpec, ...]  # sorted ascending by capacity_multiple
    baseline_id: str

    def __post_init__(self) -> None:
        if not self.servers:
            raise ValueError("fleet must contain at least one server")
        ordered = tuple(sorted(self.servers, key=lambda s: s.capacity_multiple))
        object.__setattr__(self, "servers", ordered)
        ids = [s.id for s in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("server ids must be unique")
        multiples = [s.capacity_multiple for s in ordered]
        if len(set(multiples)) != len(multiples):
            raise ValueError("capacity multiples must be distinct")
        baseline = self.by_id(self.baseline_id)
        if baseline.capacity_multiple != 1.0:
            raise ValueError("baseline server must have capacity_multiple 1.0")

    def by_id(self, server_id: str) -> ServerSpec:
        for s in self.servers:
            if s.id == server_id:
                return s
        raise KeyError(f"no server {server_id!r} in fleet")

    def baseline(self) -> ServerSpec:
        return self.by_id(self.baseline_id)

    def smallest(self) -> ServerSpec:
        return self.servers[0]

    def largest(self) -> ServerSpec:
        return self.servers[-1]

    def next_smaller(self, server_id: str) -> ServerSpec | None:
        idx = self._index(server_id)
        return self.servers[idx - 1] if idx > 0 else None

    def next_larger(self, server_id: str) -> ServerSpec | None:
        idx = self._index(server_id)
        return self.servers[idx + 1] if idx + 1 < len(self.servers) else None

    def smaller_available(self, server_id: str,
                          availability: Mapping[str, bool] | None = None,
                          ) -> ServerSpec | None:
        """Nearest smaller server that is available; unavailable ones are skipped."""
        candidate = self.next_smaller(server_id)
        while candidate is not None and not _available(candidate.id, availability):
            candidate = self.next_smaller(candidate.id)
        return candidate

    def larger_available(self, server_id: str,
                         availability: Mapping[str, bool] | None = None,
                         ) -> ServerSpec | None:
        candidate = self.next_larger(server_id)
        while candidate is not None and not _available(candidate.id, availability):
            candidate = self.next_larger(candidate.id)
        return candidate

    def _index(self, server_id: str) -> int:
        for i, s in enumerate(self.servers):
            if s.id == server_id:
                return i
        raise KeyError(f"no server {server_id!r} in fleet")


def _available(server_id: str, availability: Mapping[str, bool] | None) -> bool:
    if availability is None:
        return True
    return availability.get(server_id, True)


@dataclass(frozen=True)
class Projection:
    server_id: str
    utilization: float  # in [0, 1]; equals the quota when throttled
    power_w: float
    throttle_baseline_units: float  # unmet demand, fraction of baseline capacity


def power(server: ServerSpec, utilization: float) -> float:
    """Linear power model: base plus (peak - base) scaled by utilization."""
    if not (0.0 <= utilization <= 1.0):
        raise ValueError(f"utilization must be in [0, 1], got {utilization}")
    return server.base_power_w + (server.peak_power_w - server.base_power_w) * utilization


def project(demand: float, server: ServerSpec, quota: float = 1.0) -> Projection:
    """Project a demand (in baseline units) onto a server under a quota.

    Granted capacity is min(demand, capacity * quota); the remainder is
    throttled. Example: demand 0.8 on the baseline at quota 0.5 runs at 50%
    utilization with 0.3 baseline units throttled.
    """
    if demand < 0:
        raise ValueError(f"demand must be >= 0, got {demand}")
    if not (0.0 <= quota <= 1.0):
        raise ValueError(f"quota must be in [0, 1], got {quota}")
    capacity = server.capacity_multiple
    granted = min(demand, capacity * quota)
    utilization = granted / capacity
    throttle = demand - granted
    return Projection(server.id, utilization, power(server, utilization), throttle)


def infer_demand(observed_utilization: float, server: ServerSpec,
                 quota: float = 1.0) -> float:
    """Estimate demand in baseline units from an observed utilization.

    Below the quota ceiling the linear model inverts exactly. At the ceiling
    the container is throttled and reveals only a lower bound, so the estimate
    optimistically doubles the granted capacity (a container pinned at 100% on
    the baseline is assumed to want 50% of a 2x server); a wrong guess
    self-corrects at the next monitoring interval.
    """
    if not (0.0 <= observed_utilization <= 1.0):
        raise ValueError(
            f"observed utilization must be in [0, 1], got {observed_utilization}"
        )
    if not (0.0 <= quota <= 1.0):
        raise ValueError(f"quota must be in [0, 1], got {quota}")
    granted = observed_utilization * server.capacity_multiple
    if observed_utilization < quota:
        return granted
    return 2.0 * granted


def quota_from_cores(cores_granted: int, server: ServerSpec) -> float:
    if not (0 <= cores_granted <= server.cores):
        raise ValueError(
            f"cores_granted must be in [0, {server.cores}], got {cores_granted}"
        )
    return cores_granted / server.cores


def snap_quota(quota: float, server: ServerSpec, core_granular: bool = True) -> float:
    """Round a quota down to a whole number of cores (cgroup-style grants).

    The epsilon guard keeps exact k/cores values from losing a core to float
    noise. Snapping down never raises power, so a target-respecting quota
    stays target-respecting.
    """
    if not core_granular:
        return quota
    cores = math.floor(quota * server.cores + 1e-9)
    return min(cores, server.cores) / server.cores


def default_fleet() -> Fleet:
    """Server family at 0.25x..4x of the baseline with proportional power.

    The baseline draws 100 W idle and 200 W at peak; base and peak power,
    cores, and memory all scale with the capacity multiple.
    """
    sizes = [0.25, 0.5, 1.0, 2.0, 4.0]
    servers = tuple(
        ServerSpec(
            id=f"s{m:g}x",
            capacity_multiple=m,
            cores=int(8 * m),
            base_power_w=100.0 * m,
            peak_power_w=200.0 * m,
            memory_gb=16.0 * m,
        )
        for m in sizes
    )
    return Fleet(servers=servers, baseline_id="s1x")
