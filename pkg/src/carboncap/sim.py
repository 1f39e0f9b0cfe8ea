"""Discrete-time replay of a workload trace against a carbon trace.

Each step the simulator estimates the container's demand from what its
current placement would observe, consults the policy once, applies the action,
and records the step. Vertical scaling and suspend/resume apply instantly;
a stop-and-copy migration imposes downtime ``c0 + c1 * memory_gb`` during
which demand is fully unmet and the source server's base power is attributed.
Downtime shorter than a step is charged fractionally within the step. Live
migration has no downtime but attributes the source's base power for the
transfer duration.

Runs are deterministic: identical traces, config, and seed produce identical
results, and server availability draws depend only on (seed, step, server).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from datetime import datetime, timedelta

import numpy as np

from . import policy as policy_mod
from .config import SimConfig
from .fleet import ServerSpec, infer_demand, project
from .policy import (
    Action,
    ActionKind,
    ContainerState,
    PolicyInputs,
    Status,
    bounded_quota,
    emissions_rate,
    noop,
)
from .provider import TraceCarbonProvider
from .traces import CarbonTrace, WorkloadTrace


@dataclass(frozen=True)
class StepRecord:
    t: datetime
    demand: float  # offered demand, baseline units
    server_id: str
    quota: float
    status: str  # running | suspended | migrating
    utilization: float
    power_w: float
    intensity: float
    emissions_rate_g_per_hr: float
    throttle_baseline_units: float
    action: str
    reason: str


@dataclass(frozen=True)
class SimResult:
    records: tuple[StepRecord, ...]
    actions: tuple[Action, ...]  # one per step, as emitted by the policy


def provision(server_id: str, probability: float, seed: int,
              step_index: int) -> bool:
    """Availability draw for one server at one step.

    Deterministic per (seed, step, server) and independent of evaluation
    order; string-keyed seeding keeps it stable across processes.
    """
    if probability >= 1.0:
        return True
    if probability <= 0.0:
        return False
    rng = random.Random(f"{seed}:{step_index}:{server_id}")
    return rng.random() < probability


def _availability_draws(cfg: SimConfig, step_index: int,
                        current_id: str) -> dict[str, bool]:
    draws = {}
    for server in cfg.fleet.servers:
        p = cfg.availability.get(server.id, 1.0)
        draws[server.id] = provision(server.id, p, cfg.seed, step_index)
    draws[current_id] = True  # the host we already occupy cannot vanish
    return draws


def baseline_carbon_agnostic(demand: float, intensity: float,
                             baseline: ServerSpec) -> Action:
    """Full quota on the baseline server, always; no reaction to carbon."""
    return noop("carbon-agnostic")


def baseline_suspend_resume(demand: float, intensity: float,
                            baseline: ServerSpec, c_target: float,
                            running: bool) -> Action:
    """Suspend whenever full-quota emissions exceed the target, resume once
    they fit again. No vertical scaling, no migration."""
    rate = emissions_rate(project(demand, baseline, 1.0).power_w, intensity)
    if rate <= c_target:
        if running:
            return noop(f"{rate:.10g} g/hr within target")
        return Action(ActionKind.RESUME, quota=1.0,
                      reason=f"{rate:.10g} g/hr within target")
    if running:
        return Action(ActionKind.SUSPEND,
                      reason=f"{rate:.10g} g/hr exceeds target {c_target:.10g}")
    return noop("suspended: still above target")


_POLICY_STEPS = {
    "cc-efficiency": policy_mod.step_efficiency,
    "cc-performance": policy_mod.step_performance,
    "vertical-only": policy_mod.step_vertical_only,
}


def _resample_demand(workload: WorkloadTrace, carbon: CarbonTrace,
                     cfg: SimConfig) -> tuple[datetime, np.ndarray]:
    """Demand per simulation step over the overlap of both traces."""
    step = cfg.step
    res = workload.resolution
    start = max(workload.start, carbon.start)
    end = min(workload.end, carbon.end)
    if start >= end:
        raise ValueError("workload and carbon traces do not overlap")
    if step >= res:
        if (step % res) != timedelta(0):
            raise ValueError("step must divide the workload resolution or vice versa")
    elif (res % step) != timedelta(0):
        raise ValueError("step must divide the workload resolution or vice versa")

    values = workload.cpu_avg_series() * cfg.demand_scale
    first = (start - workload.start) // res
    last = (end - workload.start) // res
    if (end - workload.start) % res != timedelta(0):
        last += 1
    window = values[first:last]
    if step == res:
        demand = window
    elif step < res:
        demand = np.repeat(window, res // step)
    else:
        block = step // res
        usable = (len(window) // block) * block
        demand = window[:usable].reshape(-1, block).mean(axis=1)
    n_steps = (end - start) // step
    if n_steps < 1:
        raise ValueError("workload and carbon traces do not overlap for a full step")
    return start, demand[:n_steps]


def run(workload: WorkloadTrace, carbon: CarbonTrace, cfg: SimConfig,
        provider=None) -> SimResult:
    """Simulate one container under the configured policy.

    ``provider`` overrides the intensity source (e.g. a live client); the
    carbon trace still defines the simulated time window.
    """
    fleet = cfg.fleet
    baseline = fleet.baseline()
    if provider is None:
        provider = TraceCarbonProvider(carbon)
    start, demand_series = _resample_demand(workload, carbon, cfg)
    step = cfg.step
    step_s = float(cfg.step_s)
    container = cfg.container
    stop_and_copy = cfg.migration.mode == "stop-and-copy"

    state = ContainerState(server_id=baseline.id, quota=1.0)
    source_id = baseline.id  # server charged while a checkpoint is in transit
    live_transfer_left = 0.0  # seconds of dual-power attribution (live mode)
    live_transfer_base_w = 0.0
    records: list[StepRecord] = []
    actions: list[Action] = []

    def emit(**kwargs) -> None:
        records.append(StepRecord(**kwargs))

    for k in range(len(demand_series)):
        t = start + k * step
        d_true = float(demand_series[k])
        intensity = provider.intensity_at(t)
        server = fleet.by_id(state.server_id)
        d_est = d_true

        if state.status is Status.MIGRATING:
            action = noop("migration in progress")
        elif cfg.policy_kind == "carbon-agnostic":
            action = baseline_carbon_agnostic(d_true, intensity, baseline)
        elif cfg.policy_kind == "suspend-resume":
            action = baseline_suspend_resume(
                d_true, intensity, baseline, container.c_target_g_per_hr,
                running=state.status is Status.RUNNING,
            )
        else:
            u_obs = project(d_true, server, state.effective_quota).utilization
            d_est = infer_demand(u_obs, server, state.effective_quota)
            inputs = PolicyInputs(
                demand=d_est, intensity=intensity, now=t, fleet=fleet,
                availability=_availability_draws(cfg, k, state.server_id),
            )
            action = _POLICY_STEPS[cfg.policy_kind](container, state, inputs)
        actions.append(action)

        # Apply the action; migrations start their transfer within this step.
        if action.kind is ActionKind.MIGRATE:
            dest = fleet.by_id(action.target)
            arrival_quota = bounded_quota(container, dest, d_est, intensity)
            transfer_s = cfg.migration.downtime_s(container.memory_gb)
            if stop_and_copy:
                source_id = state.server_id
                state = policy_mod.apply_action(
                    state, action, t, arrival_quota=arrival_quota,
                    migration_downtime=timedelta(seconds=transfer_s),
                )
            else:
                live_transfer_left = transfer_s
                live_transfer_base_w = server.base_power_w
                state = policy_mod.apply_action(state, action, t,
                                                arrival_quota=arrival_quota)
        else:
            state = policy_mod.apply_action(state, action, t)

        # Account the step under the post-action state.
        if state.status is Status.MIGRATING:
            remaining = state.migration_remaining.total_seconds()
            down_s = min(remaining, step_s)
            down_frac = down_s / step_s
            remaining -= down_s
            source = fleet.by_id(source_id)
            if down_frac >= 1.0:
                # Whole step in transit: checkpoint charged to the source.
                if remaining > 0:
                    state = replace(
                        state, migration_remaining=timedelta(seconds=remaining))
                else:
                    state = ContainerState(
                        server_id=state.server_id, quota=state.quota,
                        status=Status.RUNNING,
                        last_migration_at=state.last_migration_at,
                    )
                power_w = source.base_power_w
                emit(t=t, demand=d_true, server_id=source.id, quota=0.0,
                     status="migrating", utilization=0.0, power_w=power_w,
                     intensity=intensity,
                     emissions_rate_g_per_hr=emissions_rate(power_w, intensity),
                     throttle_baseline_units=d_true,
                     action=str(action), reason=action.reason)
                continue
            # Completes mid-step: the remainder runs on the destination.
            dest = fleet.by_id(state.server_id)
            state = ContainerState(
                server_id=dest.id, quota=state.quota, status=Status.RUNNING,
                last_migration_at=state.last_migration_at,
            )
            run_proj = project(d_true, dest, state.quota)
            power_w = (down_frac * source.base_power_w
                       + (1.0 - down_frac) * run_proj.power_w)
            granted = (1.0 - down_frac) * (d_true - run_proj.throttle_baseline_units)
            emit(t=t, demand=d_true, server_id=dest.id, quota=state.quota,
                 status="running", utilization=run_proj.utilization,
                 power_w=power_w, intensity=intensity,
                 emissions_rate_g_per_hr=emissions_rate(power_w, intensity),
                 throttle_baseline_units=d_true - granted,
                 action=str(action), reason=action.reason)
            continue

        if state.status is Status.SUSPENDED:
            host = fleet.by_id(state.server_id)
            power_w = host.base_power_w if cfg.suspend_baseload_attributed else 0.0
            emit(t=t, demand=d_true, server_id=host.id, quota=0.0,
                 status="suspended", utilization=0.0, power_w=power_w,
                 intensity=intensity,
                 emissions_rate_g_per_hr=emissions_rate(power_w, intensity),
                 throttle_baseline_units=d_true,
                 action=str(action), reason=action.reason)
            continue

        host = fleet.by_id(state.server_id)
        proj = project(d_true, host, state.quota)
        power_w = proj.power_w
        if live_transfer_left > 0:
            power_w += (min(live_transfer_left, step_s) / step_s) * live_transfer_base_w
            live_transfer_left = max(0.0, live_transfer_left - step_s)
        emit(t=t, demand=d_true, server_id=host.id, quota=state.quota,
             status="running", utilization=proj.utilization, power_w=power_w,
             intensity=intensity,
             emissions_rate_g_per_hr=emissions_rate(power_w, intensity),
             throttle_baseline_units=proj.throttle_baseline_units,
             action=str(action), reason=action.reason)

    return SimResult(records=tuple(records), actions=tuple(actions))
