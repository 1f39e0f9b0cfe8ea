"""Carbon-rate enforcement policy: quota scaling, migration, suspend/resume.

A container declares a maximum emissions rate (g CO2e/hr). Each monitoring
interval the policy compares the container's current emissions rate against
the enforcement bound ``(1 - epsilon) * c_target`` and emits one action:

1. At or above the bound, scale the quota down to the largest value that
   satisfies the bound; migrate to the next smaller available server instead
   when that server would emit strictly less and throttle no more.
2. If the required quota is zero and no smaller server is reachable, suspend.
3. While suspended, resume once base power fits the bound again (a suspended
   container reveals no demand, so the quota is re-sized after observation).
4. Below the bound, a throttled container gets its quota raised; if it is
   already at full quota and the next larger available server fits under the
   bound, it migrates up.

The efficiency variant additionally migrates down whenever the next smaller
server can host the whole demand unthrottled at strictly lower power. The
performance variant never migrates down on low utilization; it instead keeps
the quota at the bound-limited maximum regardless of demand and migrates up
whenever the larger server fits under the bound, holding reserve capacity.

Migrations are rate-limited by a minimum dwell time to prevent thrashing.
Decisions are pure functions of (config, state, inputs).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Mapping

from .fleet import Fleet, ServerSpec, power, project, snap_quota


def emissions_rate(power_w: float, intensity: float) -> float:
    """Emissions rate in g CO2e/hr from power (W) and intensity (g CO2e/kWh)."""
    if power_w < 0 or intensity < 0:
        raise ValueError("power and intensity must be >= 0")
    return (power_w / 1000.0) * intensity


def emissions_at(server: ServerSpec, demand: float, quota: float,
                 intensity: float) -> float:
    """Projected emissions rate of a demand on a server under a quota."""
    return emissions_rate(project(demand, server, quota).power_w, intensity)


def max_quota_for_target(server: ServerSpec, demand: float, intensity: float,
                         c_target: float, epsilon: float = 0.0) -> float:
    """Largest quota in [0, 1] whose projected emissions stay at or under
    ``(1 - epsilon) * c_target``; 0 if base power alone exceeds the bound.

    Pass ``demand=math.inf`` for the demand-independent cap (the quota that is
    safe no matter how much load arrives).
    """
    if demand < 0:
        raise ValueError(f"demand must be >= 0, got {demand}")
    if intensity <= 0:
        return 1.0
    bound_w = (1.0 - epsilon) * c_target / intensity * 1000.0
    if bound_w < server.base_power_w:
        return 0.0
    u_max = (bound_w - server.base_power_w) / (server.peak_power_w - server.base_power_w)
    if u_max >= 1.0:
        return 1.0
    if demand <= server.capacity_multiple * u_max:
        return 1.0
    return u_max


class Status(enum.Enum):
    RUNNING = "running"
    SUSPENDED = "suspended"
    MIGRATING = "migrating"


@dataclass(frozen=True)
class ContainerConfig:
    c_target_g_per_hr: float
    epsilon: float = 0.05  # enforcement bound is (1 - epsilon) * target
    variant: str = "efficiency"  # "efficiency" | "performance"
    memory_gb: float = 2.0
    min_dwell: timedelta = timedelta(seconds=600)  # minimum time between migrations
    core_granular: bool = True  # snap quotas to whole cores

    def __post_init__(self) -> None:
        if self.c_target_g_per_hr <= 0:
            raise ValueError("c_target_g_per_hr must be > 0")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError("epsilon must be in [0, 1)")
        if self.variant not in ("efficiency", "performance"):
            raise ValueError(f"unknown policy variant {self.variant!r}")
        if self.memory_gb < 0:
            raise ValueError("memory_gb must be >= 0")

    @property
    def bound(self) -> float:
        return (1.0 - self.epsilon) * self.c_target_g_per_hr


@dataclass(frozen=True)
class ContainerState:
    server_id: str
    quota: float = 1.0
    status: Status = Status.RUNNING
    migration_remaining: timedelta = timedelta(0)
    last_migration_at: datetime | None = None

    def __post_init__(self) -> None:
        if self.status is Status.MIGRATING and self.migration_remaining <= timedelta(0):
            raise ValueError("migrating state requires positive remaining time")

    @property
    def effective_quota(self) -> float:
        """Quota as enforced: zero while suspended or mid-migration."""
        return self.quota if self.status is Status.RUNNING else 0.0


@dataclass(frozen=True)
class PolicyInputs:
    demand: float  # estimated demand, baseline units (from fleet.infer_demand)
    intensity: float  # g CO2e/kWh
    now: datetime
    fleet: Fleet
    availability: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not math.isfinite(self.intensity) or self.intensity < 0:
            raise ValueError(f"intensity must be finite and >= 0, got {self.intensity}")
        if not math.isfinite(self.demand) or self.demand < 0:
            raise ValueError(f"demand must be finite and >= 0, got {self.demand}")


class ActionKind(enum.Enum):
    NOOP = "NoOp"
    SET_QUOTA = "SetQuota"
    MIGRATE = "MigrateTo"
    SUSPEND = "Suspend"
    RESUME = "Resume"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    quota: float | None = None  # SetQuota target, or quota applied on Resume
    target: str | None = None  # MigrateTo destination
    reason: str = ""

    def __str__(self) -> str:
        if self.kind is ActionKind.SET_QUOTA:
            return f"SetQuota({self.quota:.10g})"
        if self.kind is ActionKind.MIGRATE:
            return f"MigrateTo({self.target})"
        return self.kind.value


def noop(reason: str = "") -> Action:
    return Action(ActionKind.NOOP, reason=reason)


def _dwell_elapsed(cfg: ContainerConfig, state: ContainerState, now: datetime) -> bool:
    if state.last_migration_at is None:
        return True
    return now - state.last_migration_at >= cfg.min_dwell


def bounded_quota(cfg: ContainerConfig, server: ServerSpec, demand: float,
                  intensity: float) -> float:
    """max_quota_for_target snapped to the configured quota granularity."""
    q = max_quota_for_target(server, demand, intensity, cfg.c_target_g_per_hr,
                             cfg.epsilon)
    return snap_quota(q, server, cfg.core_granular)


def step_general(cfg: ContainerConfig, state: ContainerState,
                 inputs: PolicyInputs) -> Action:
    """General enforcement policy shared by both variants."""
    return _decide(cfg, state, inputs, allow_migration=True,
                   efficiency_down=False, performance_up=False)


def step_efficiency(cfg: ContainerConfig, state: ContainerState,
                    inputs: PolicyInputs) -> Action:
    """General policy plus down-migration on underutilization.

    Never throttles a container whose emissions are below the bound: the extra
    down-migration fires only when the smaller server hosts the full demand
    with zero throttle at strictly lower power.
    """
    return _decide(cfg, state, inputs, allow_migration=True,
                   efficiency_down=True, performance_up=False)


def step_performance(cfg: ContainerConfig, state: ContainerState,
                     inputs: PolicyInputs) -> Action:
    """General policy minus underutilization down-migration, plus eager
    scale-up: quota is held at the bound-limited maximum regardless of demand
    and the container migrates up whenever the larger server fits the bound.
    """
    return _decide(cfg, state, inputs, allow_migration=True,
                   efficiency_down=False, performance_up=True)


def step_vertical_only(cfg: ContainerConfig, state: ContainerState,
                       inputs: PolicyInputs) -> Action:
    """General policy with migration disabled; suspends where it would migrate."""
    return _decide(cfg, state, inputs, allow_migration=False,
                   efficiency_down=False, performance_up=False)


def _decide(cfg: ContainerConfig, state: ContainerState, inputs: PolicyInputs,
            *, allow_migration: bool, efficiency_down: bool,
            performance_up: bool) -> Action:
    fleet = inputs.fleet
    if not fleet.servers:
        raise ValueError("fleet is empty")
    server = fleet.by_id(state.server_id)
    demand = inputs.demand
    intensity = inputs.intensity
    bound = cfg.bound

    if state.status is Status.MIGRATING:
        return noop("migration in progress")

    if state.status is Status.SUSPENDED:
        # A suspended container reveals no demand (the estimate is 0), so
        # this resumes as soon as base power fits the bound; the next
        # interval's observation re-sizes the quota.
        q_resume = bounded_quota(cfg, server, demand, intensity)
        if q_resume > 0:
            return Action(ActionKind.RESUME, quota=q_resume,
                          reason=f"target affords quota {q_resume:.10g} on {server.id}")
        return noop("suspended: base power still exceeds the bound")

    current_rate = emissions_at(server, demand, state.quota, intensity)

    if current_rate >= bound:
        # Rule 1: enforce by scaling down, or by migrating to the next smaller
        # available server when it emits less and throttles no more.
        q_down = bounded_quota(cfg, server, demand, intensity)
        here = project(demand, server, q_down)
        rate_here = emissions_rate(here.power_w, intensity)
        smaller = fleet.smaller_available(server.id, inputs.availability) \
            if allow_migration else None
        if smaller is not None:
            q_small = bounded_quota(cfg, smaller, demand, intensity)
            there = project(demand, smaller, q_small)
            rate_there = emissions_rate(there.power_w, intensity)
            if (rate_there < rate_here
                    and there.throttle_baseline_units <= here.throttle_baseline_units
                    and _dwell_elapsed(cfg, state, inputs.now)):
                return Action(
                    ActionKind.MIGRATE, target=smaller.id,
                    reason=(f"{smaller.id}: {rate_there:.10g} g/hr < "
                            f"{rate_here:.10g} g/hr at no extra throttle"),
                )
        if q_down == 0.0 and smaller is None:
            # Rule 2: floor reached and still over the bound.
            return Action(ActionKind.SUSPEND,
                          reason=f"base power of {server.id} exceeds bound {bound:.10g} g/hr")
        if q_down != state.quota:
            return Action(ActionKind.SET_QUOTA, quota=q_down,
                          reason=f"scale down to keep {server.id} under {bound:.10g} g/hr")
        return noop("at the bound with no better configuration")

    # Below the bound from here on.
    throttled = state.quota == 0.0 or project(demand, server, state.quota).throttle_baseline_units > 0

    if performance_up:
        # Reserve capacity: raise the quota to the level that is safe under
        # any demand, and prefer the larger server whenever it fits the bound.
        q_reserve = bounded_quota(cfg, server, math.inf, intensity)
        if q_reserve > state.quota:
            return Action(ActionKind.SET_QUOTA, quota=q_reserve,
                          reason="raise quota to the bound-limited maximum")
        if state.quota >= 1.0:
            larger = fleet.larger_available(server.id, inputs.availability)
            if larger is not None:
                rate_up = emissions_at(larger, demand, 1.0, intensity)
                if rate_up <= bound and _dwell_elapsed(cfg, state, inputs.now):
                    return Action(ActionKind.MIGRATE, target=larger.id,
                                  reason=f"{larger.id} fits bound at {rate_up:.10g} g/hr")
        return noop("performance: holding largest placement under the bound")

    if throttled:
        # Rule 4: scale up while the bound allows; at full quota, migrate up.
        # A zero quota hides the real demand, so size the raise for any load.
        probe = demand if state.quota > 0 else math.inf
        q_up = min(1.0, bounded_quota(cfg, server, probe, intensity))
        if q_up > state.quota:
            return Action(ActionKind.SET_QUOTA, quota=q_up,
                          reason="scale up to relieve throttling under the bound")
        if state.quota >= 1.0 and allow_migration:
            larger = fleet.larger_available(server.id, inputs.availability)
            if larger is not None:
                rate_up = emissions_at(larger, demand, 1.0, intensity)
                if rate_up <= bound and _dwell_elapsed(cfg, state, inputs.now):
                    return Action(ActionKind.MIGRATE, target=larger.id,
                                  reason=(f"throttled at full quota; {larger.id} "
                                          f"fits bound at {rate_up:.10g} g/hr"))
        elif allow_migration:
            # Still pinned below full quota by the target: the scale-down
            # versus migrate-down comparison from rule 1 stays live, so a
            # smaller server that emits less at no extra throttle wins even
            # though the current placement is compliant.
            smaller = fleet.smaller_available(server.id, inputs.availability)
            if smaller is not None:
                q_small = bounded_quota(cfg, smaller, demand, intensity)
                there = project(demand, smaller, q_small)
                rate_there = emissions_rate(there.power_w, intensity)
                here = project(demand, server, state.quota)
                rate_here = emissions_rate(here.power_w, intensity)
                if (rate_there < rate_here
                        and there.throttle_baseline_units
                        <= here.throttle_baseline_units
                        and _dwell_elapsed(cfg, state, inputs.now)):
                    return Action(
                        ActionKind.MIGRATE, target=smaller.id,
                        reason=(f"pinned at quota {state.quota:.10g}; "
                                f"{smaller.id} emits {rate_there:.10g} g/hr "
                                f"at no extra throttle"))

    if efficiency_down and not throttled:
        smaller = fleet.smaller_available(server.id, inputs.availability)
        if smaller is not None and demand <= smaller.capacity_multiple:
            power_there = power(smaller, demand / smaller.capacity_multiple)
            power_here = project(demand, server, state.quota).power_w
            if power_there < power_here and _dwell_elapsed(cfg, state, inputs.now):
                return Action(
                    ActionKind.MIGRATE, target=smaller.id,
                    reason=(f"{smaller.id} hosts demand unthrottled at "
                            f"{power_there:.10g} W < {power_here:.10g} W"),
                )

    return noop("no enforcement trigger")


def apply_action(state: ContainerState, action: Action, now: datetime,
                 arrival_quota: float | None = None,
                 migration_downtime: timedelta = timedelta(0)) -> ContainerState:
    """State transition for an action (quota changes apply immediately;
    migration enters a transit state resolved by the caller's clock)."""
    if action.kind is ActionKind.NOOP:
        return state
    if action.kind is ActionKind.SET_QUOTA:
        assert action.quota is not None
        return replace(state, quota=action.quota)
    if action.kind is ActionKind.SUSPEND:
        return replace(state, status=Status.SUSPENDED)
    if action.kind is ActionKind.RESUME:
        assert action.quota is not None
        return replace(state, status=Status.RUNNING, quota=action.quota)
    if action.kind is ActionKind.MIGRATE:
        assert action.target is not None
        quota = arrival_quota if arrival_quota is not None else state.quota
        if migration_downtime > timedelta(0):
            return ContainerState(
                server_id=action.target, quota=quota, status=Status.MIGRATING,
                migration_remaining=migration_downtime, last_migration_at=now,
            )
        return ContainerState(server_id=action.target, quota=quota,
                              status=Status.RUNNING, last_migration_at=now)
    raise ValueError(f"unknown action kind {action.kind}")
