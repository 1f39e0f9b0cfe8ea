import math
from dataclasses import replace
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from carboncap.config import MigrationModel, SimConfig
from carboncap.fleet import default_fleet
from carboncap.policy import ContainerConfig
from carboncap.sim import provision, run
from carboncap.traces import synth_carbon_trace, synth_workload_trace

T0 = datetime(2021, 6, 1, tzinfo=timezone.utc)


def make_cfg(policy="carbon-agnostic", target=50.0, epsilon=0.05, seed=1,
             **overrides):
    container = ContainerConfig(
        c_target_g_per_hr=target, epsilon=epsilon,
        variant="performance" if policy == "cc-performance" else "efficiency",
        memory_gb=overrides.pop("memory_gb", 2.0),
        min_dwell=overrides.pop("min_dwell", timedelta(seconds=600)),
    )
    return SimConfig(fleet=overrides.pop("fleet", default_fleet()),
                     container=container, policy_kind=policy, seed=seed,
                     **overrides)


def constant_workload(value, n=12, **kwargs):
    return synth_workload_trace("constant", n, {"value": value}, **kwargs)


def constant_carbon(value, hours=2, **kwargs):
    return synth_carbon_trace("constant", hours, {"value": value}, **kwargs)


class TestCarbonAgnostic:
    def test_constant_run_power_and_emissions(self):
        result = run(constant_workload(0.4), constant_carbon(300.91),
                     make_cfg())
        assert len(result.records) == 12
        for record in result.records:
            assert record.power_w == pytest.approx(140.0, abs=1e-12)
            assert record.emissions_rate_g_per_hr == pytest.approx(
                42.1274, abs=1e-9)
            assert record.server_id == "s1x"
            assert record.quota == 1.0

    def test_excess_demand_throttles(self):
        result = run(constant_workload(1.5), constant_carbon(100), make_cfg())
        for record in result.records:
            assert record.utilization == 1.0
            assert record.throttle_baseline_units == pytest.approx(0.5)

    def test_zero_demand_draws_base_power(self):
        result = run(constant_workload(0.0), constant_carbon(100), make_cfg())
        assert all(r.power_w == 100.0 for r in result.records)


class TestOverlap:
    def test_disjoint_traces_error(self):
        late = constant_carbon(2, start=T0 + timedelta(hours=12))
        with pytest.raises(ValueError, match="overlap"):
            run(constant_workload(0.4), late, make_cfg())

    def test_partial_overlap_truncates(self):
        workload = constant_workload(0.4, n=24)  # two hours
        carbon = constant_carbon(300.91, hours=1)
        result = run(workload, carbon, make_cfg())
        assert len(result.records) == 12

    def test_bad_step_ratio(self):
        cfg = make_cfg(step_s=450)
        with pytest.raises(ValueError, match="divide"):
            run(constant_workload(0.4), constant_carbon(100), cfg)


class TestResampling:
    def test_downsampling_block_means(self):
        workload = synth_workload_trace("step", 12,
                                        {"low": 0.2, "high": 0.6, "period": 1})
        cfg = make_cfg(step_s=600)
        result = run(workload, constant_carbon(100), cfg)
        assert len(result.records) == 6
        assert all(r.demand == pytest.approx(0.4) for r in result.records)

    def test_upsampling_repeats(self):
        workload = constant_workload(0.4, n=12)
        cfg = make_cfg(step_s=150)
        result = run(workload, constant_carbon(300.91), cfg)
        assert len(result.records) == 24
        assert all(r.demand == 0.4 for r in result.records)

    def test_demand_scale(self):
        result = run(constant_workload(0.4), constant_carbon(100),
                     make_cfg(demand_scale=2.0))
        assert all(r.demand == 0.8 for r in result.records)


class TestSuspendResume:
    def test_runs_when_under_target(self):
        # 0.4 demand -> 140 W -> 42 g/hr at 300 g/kWh
        result = run(constant_workload(0.4), constant_carbon(300),
                     make_cfg("suspend-resume", target=50.0))
        assert all(r.status == "running" for r in result.records)

    def test_suspends_when_over_target(self):
        result = run(constant_workload(0.4), constant_carbon(300),
                     make_cfg("suspend-resume", target=40.0))
        assert all(r.status == "suspended" for r in result.records)
        assert all(r.power_w == 100.0 for r in result.records)

    def test_unattributed_suspension_emits_nothing(self):
        cfg = make_cfg("suspend-resume", target=40.0,
                       suspend_baseload_attributed=False)
        result = run(constant_workload(0.4), constant_carbon(300), cfg)
        assert all(r.emissions_rate_g_per_hr == 0.0 for r in result.records)

    def test_target_below_base_power_never_resumes(self):
        # base power 100 W at 800 g/kWh emits 80 g/hr > target 50
        result = run(constant_workload(0.6, n=72), constant_carbon(800, 6),
                     make_cfg("suspend-resume", target=50.0))
        assert all(r.status == "suspended" for r in result.records)

    def test_resumes_when_intensity_drops(self):
        carbon = synth_carbon_trace("step", 4, {"low": 800, "high": 100,
                                                "period": 1})
        result = run(constant_workload(0.4, n=48), carbon,
                     make_cfg("suspend-resume", target=50.0))
        by_hour = [result.records[h * 12].status for h in range(4)]
        assert by_hour == ["suspended", "running", "suspended", "running"]


class TestVerticalOnly:
    def test_scales_down_never_migrates(self):
        # 500 g/kWh, bound 57 g/hr -> 114 W -> 1.12 cores -> 1/8 quota
        result = run(constant_workload(0.9, n=24), constant_carbon(500),
                     make_cfg("vertical-only", target=60.0))
        assert all(r.server_id == "s1x" for r in result.records)
        assert result.records[0].action.startswith("SetQuota")
        assert result.records[0].quota == pytest.approx(1 / 8)

    def test_suspends_when_quota_zero_required(self):
        # bound 47.5 g/hr -> 95 W < base power: nothing fits, suspend
        result = run(constant_workload(0.9, n=24), constant_carbon(500),
                     make_cfg("vertical-only", target=50.0))
        assert result.records[0].status == "suspended"
        assert all(r.status == "suspended" for r in result.records)

    def test_resumes_with_recomputed_quota_when_intensity_drops(self):
        carbon = synth_carbon_trace("step", 2, {"low": 500, "high": 125,
                                                "period": 1})
        result = run(constant_workload(0.9, n=24), carbon,
                     make_cfg("vertical-only", target=50.0))
        first_hour = result.records[:12]
        second_hour = result.records[12:]
        assert all(r.status == "suspended" for r in first_hour)
        # 125 g/kWh: bound 47.5 g/hr -> 380 W >= peak, full quota affordable
        assert second_hour[0].status == "running"
        assert second_hour[0].action == "Resume"
        assert second_hour[0].quota == 1.0


class TestMigrationDowntime:
    def test_fractional_downtime_within_step(self):
        # demo-like: 2 GB at 10 + 15 s/GB = 40 s of a 300 s step
        cfg = make_cfg("cc-efficiency", target=1000.0, memory_gb=2.0)
        workload = constant_workload(0.3, n=12)
        result = run(workload, constant_carbon(100), cfg)
        migrate = [r for r in result.records if "MigrateTo" in r.action]
        assert migrate, "expected a down-migration"
        step = migrate[0]
        frac = 40.0 / 300.0
        assert step.status == "running"
        assert step.throttle_baseline_units == pytest.approx(0.3 * frac)
        # blended power: down fraction on the source base, rest on the target
        assert step.power_w < 100.0

    def test_multi_step_downtime(self):
        migration = MigrationModel(c0_s=300.0, c1_s_per_gb=150.0)
        cfg = make_cfg("cc-efficiency", target=1000.0, memory_gb=2.0,
                       migration=migration)  # 600 s = exactly 2 steps
        workload = constant_workload(0.3, n=12)
        result = run(workload, constant_carbon(100), cfg)
        migrating = [r for r in result.records if r.status == "migrating"]
        assert len(migrating) == 2
        for r in migrating:
            assert r.throttle_baseline_units == r.demand
            assert r.utilization == 0.0
            assert r.power_w == 100.0  # source (baseline) base power
            assert r.server_id == "s1x"
        after = result.records[result.records.index(migrating[-1]) + 1]
        assert after.status == "running"
        assert after.server_id == "s0.5x"

    def test_live_migration_no_downtime_dual_power(self):
        migration = MigrationModel(mode="live")  # 40 s transfer for 2 GB
        cfg = make_cfg("cc-efficiency", target=1000.0, memory_gb=2.0,
                       migration=migration)
        workload = constant_workload(0.3, n=12)
        result = run(workload, constant_carbon(100), cfg)
        migrate = [r for r in result.records if "MigrateTo" in r.action]
        assert migrate
        step = migrate[0]
        assert step.status == "running"
        assert step.throttle_baseline_units == 0.0
        # destination power plus transfer fraction of the source base power
        dest_power = 50.0 + 50.0 * 0.6  # s0.5x hosting 0.3 baseline units
        assert step.power_w == pytest.approx(
            dest_power + (40.0 / 300.0) * 100.0)

    def test_first_migration_goes_one_size_down(self):
        cfg = make_cfg("cc-efficiency", target=1000.0)
        workload = constant_workload(0.3, n=2)
        result = run(workload, constant_carbon(100), cfg)
        assert result.actions[0].target == "s0.5x"
        assert result.records[0].server_id == "s0.5x"  # lands within the step


class TestProvision:
    def test_certain(self):
        assert provision("x", 1.0, seed=1, step_index=0) is True
        assert provision("x", 0.0, seed=1, step_index=0) is False

    def test_deterministic(self):
        draws_a = [provision("s2x", 0.5, seed=9, step_index=k) for k in range(50)]
        draws_b = [provision("s2x", 0.5, seed=9, step_index=k) for k in range(50)]
        assert draws_a == draws_b
        assert any(draws_a) and not all(draws_a)

    def test_varies_by_server_and_step(self):
        by_server = {provision(s, 0.5, 1, 0) for s in ("a", "b", "c", "d", "e")}
        assert len(by_server) == 2  # both outcomes appear


class TestAvailability:
    def test_unavailable_candidate_skipped(self):
        cfg = make_cfg("cc-efficiency", target=1000.0,
                       availability={"s0.5x": 0.0})
        # idle demand on the baseline: the 0.5x hop is blocked, so the
        # efficiency variant descends directly to 0.25x
        workload = constant_workload(0.1, n=12)
        result = run(workload, constant_carbon(100), cfg)
        servers = {r.server_id for r in result.records}
        assert "s0.5x" not in servers
        assert "s0.25x" in servers


class TestConservation:
    def test_demand_conservation(self):
        workload = synth_workload_trace(
            "bursty", 96, {"base": 0.1, "burst": 1.8}, seed=5)
        carbon = synth_carbon_trace("step", 8, {"low": 100, "high": 700,
                                                "period": 2})
        for policy in ("cc-efficiency", "cc-performance", "vertical-only",
                       "suspend-resume", "carbon-agnostic"):
            result = run(workload, carbon, make_cfg(policy, target=40.0))
            for r in result.records:
                granted = r.demand - r.throttle_baseline_units
                assert granted >= -1e-12
                if r.status in ("suspended", "migrating"):
                    assert granted == pytest.approx(0.0, abs=1e-12)

    def test_floor_law(self):
        workload = synth_workload_trace(
            "bursty", 96, {"base": 0.05, "burst": 2.2}, seed=8)
        carbon = synth_carbon_trace("step", 8, {"low": 150, "high": 900,
                                                "period": 2})
        fleet = default_fleet()
        min_base = min(s.base_power_w for s in fleet.servers)
        for policy in ("cc-efficiency", "cc-performance", "vertical-only",
                       "suspend-resume", "carbon-agnostic"):
            result = run(workload, carbon, make_cfg(policy, target=30.0))
            for r in result.records:
                floor = min_base / 1000.0 * r.intensity
                assert r.emissions_rate_g_per_hr >= floor - 1e-9

    def test_emissions_identity(self):
        result = run(constant_workload(0.7), constant_carbon(421.5),
                     make_cfg("cc-efficiency", target=45.0))
        for r in result.records:
            assert r.emissions_rate_g_per_hr == pytest.approx(
                r.power_w / 1000.0 * r.intensity, rel=1e-12)


class TestDeterminism:
    def test_identical_runs(self):
        workload = synth_workload_trace(
            "bursty", 288, {"base": 0.1, "burst": 1.5}, seed=3)
        carbon = synth_carbon_trace("sinusoid", 24,
                                    {"mean": 400, "amplitude": 250,
                                     "period": 24})
        cfg = make_cfg("cc-efficiency", target=35.0,
                       availability={"s2x": 0.7, "s0.5x": 0.7}, seed=42)
        first = run(workload, carbon, cfg)
        second = run(workload, carbon, cfg)
        assert first == second

    def test_throttling_invariant_to_step_subdivision(self):
        from carboncap.metrics import summarize

        workload = synth_workload_trace("step", 24,
                                        {"low": 0.15, "high": 0.45,
                                         "period": 6})
        carbon = constant_carbon(300.91)
        coarse_cfg = make_cfg("cc-efficiency", target=45.0, step_s=300)
        fine_cfg = make_cfg("cc-efficiency", target=45.0, step_s=150)
        coarse = summarize(run(workload, carbon, coarse_cfg), coarse_cfg)
        fine = summarize(run(workload, carbon, fine_cfg), fine_cfg)
        assert abs(coarse.throttling_pct - fine.throttling_pct) < 1e-9


class TestVariantOrdering:
    def test_performance_capacity_dominates_outside_dwell_transients(self):
        # on identical inputs the performance variant holds at least the
        # efficiency variant's server size; dwell phase can invert the order
        # for at most one migration window while one variant's move is still
        # rate-limited, so steps within a dwell of a migration are exempt
        from test_acceptance import _oracle_instance

        for seed in range(200):
            workload, carbon, cfg = _oracle_instance(seed)
            capacity = {s.id: s.capacity_multiple for s in cfg.fleet.servers}
            dwell_steps = math.ceil(
                cfg.container.min_dwell.total_seconds() / cfg.step_s)
            runs = {}
            for policy in ("cc-efficiency", "cc-performance"):
                variant_cfg = replace(
                    cfg, policy_kind=policy,
                    container=replace(
                        cfg.container,
                        variant=policy.removeprefix("cc-")))
                runs[policy] = run(workload, carbon, variant_cfg)
            eff, perf = runs["cc-efficiency"], runs["cc-performance"]
            for k in range(len(eff.records)):
                if (capacity[perf.records[k].server_id]
                        >= capacity[eff.records[k].server_id] - 1e-12):
                    continue
                window = range(max(0, k - dwell_steps), k + 1)
                migrated_nearby = any(
                    "MigrateTo" in trace.records[j].action
                    for trace in (eff, perf) for j in window)
                assert migrated_nearby, (
                    f"seed {seed} step {k}: performance on "
                    f"{perf.records[k].server_id} below efficiency on "
                    f"{eff.records[k].server_id} outside any dwell transient")
