import io
import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from carboncap.traces import (
    CarbonSample,
    CarbonTrace,
    TraceParseError,
    WorkloadSample,
    WorkloadTrace,
    carbon_region_report,
    compute_stats,
    parse_carbon_trace,
    parse_workload_trace,
    parse_workload_traces,
    serialize_carbon_traces,
    serialize_workload_traces,
    synth_carbon_trace,
    synth_series,
    synth_workload_trace,
    workload_cov_histogram,
)

T0 = datetime(2021, 6, 1, tzinfo=timezone.utc)
HOUR = timedelta(hours=1)
FIVE_MIN = timedelta(minutes=5)


def carbon_csv(rows):
    lines = ["timestamp,region,carbon_intensity_gco2_per_kwh"]
    lines += [",".join(str(c) for c in row) for row in rows]
    return io.BytesIO(("\n".join(lines) + "\n").encode())


def workload_csv(rows):
    lines = ["timestamp,job_id,cpu_avg_pct,cpu_min_pct,cpu_max_pct,mem_gb"]
    lines += [",".join(str(c) for c in row) for row in rows]
    return io.BytesIO(("\n".join(lines) + "\n").encode())


def ts(hours=0, minutes=0):
    return (T0 + timedelta(hours=hours, minutes=minutes)).strftime(
        "%Y-%m-%dT%H:%M:%SZ")


class TestCarbonParsing:
    def test_round_trip_two_rows(self):
        trace = parse_carbon_trace(
            carbon_csv([(ts(0), "NL", 300.91), (ts(1), "NL", 412.5)]))
        assert trace.region == "NL"
        assert len(trace) == 2
        assert trace.samples[0].intensity == 300.91
        assert trace.samples[1].intensity == 412.5

    def test_negative_intensity_names_line(self):
        with pytest.raises(TraceParseError, match="line 3"):
            parse_carbon_trace(
                carbon_csv([(ts(0), "NL", 100), (ts(1), "NL", -5)]))

    def test_region_filter_among_three_regions(self):
        rows = []
        for h in range(48):
            for region in ("PL", "NL", "CA"):
                rows.append((ts(h), region, 100 + h))
        trace = parse_carbon_trace(carbon_csv(rows), region_filter="NL")
        assert len(trace) == 48
        assert all(s.intensity == 100 + h for h, s in enumerate(trace.samples))

    def test_multiple_regions_without_filter_rejected(self):
        source = carbon_csv([(ts(0), "PL", 1), (ts(0), "NL", 2)])
        with pytest.raises(TraceParseError, match="region filter"):
            parse_carbon_trace(source)

    def test_gap_rejected_and_forward_fill(self):
        rows = [(ts(0), "NL", 100), (ts(3), "NL", 400)]
        with pytest.raises(TraceParseError):
            parse_carbon_trace(carbon_csv(rows))
        trace = parse_carbon_trace(carbon_csv(rows), fill="forward")
        assert [s.intensity for s in trace.samples] == [100, 100, 100, 400]

    def test_non_monotonic_rejected(self):
        with pytest.raises(TraceParseError, match="strictly increasing"):
            parse_carbon_trace(
                carbon_csv([(ts(1), "NL", 1), (ts(0), "NL", 2)]))

    def test_empty_and_missing_region(self):
        with pytest.raises(TraceParseError):
            parse_carbon_trace(io.BytesIO(b""))
        with pytest.raises(TraceParseError, match="'XX'"):
            parse_carbon_trace(carbon_csv([(ts(0), "NL", 1)]),
                               region_filter="XX")

    def test_bad_header(self):
        source = io.BytesIO(b"time,zone,ci\n2021-06-01T00:00:00Z,NL,1\n")
        with pytest.raises(TraceParseError, match="header"):
            parse_carbon_trace(source)

    def test_serialize_parse_identity(self):
        trace = parse_carbon_trace(
            carbon_csv([(ts(0), "NL", 300.91), (ts(1), "NL", 287.4)]))
        text = serialize_carbon_traces([trace])
        again = parse_carbon_trace(io.BytesIO(text.encode()))
        assert again == trace
        assert serialize_carbon_traces([again]) == text


class TestWorkloadParsing:
    def test_percent_to_fraction(self):
        trace = parse_workload_trace(
            workload_csv([(ts(0), "job1", 40, 40, 40, 2.0)]))
        sample = trace.samples[0]
        assert sample.cpu_avg == 0.40
        assert sample.mem_gb == 2.0

    def test_four_minute_spacing_rejected(self):
        rows = [(ts(0), "j", 10, 10, 10, 1),
                (ts(0, 4), "j", 10, 10, 10, 1)]
        with pytest.raises(TraceParseError):
            parse_workload_trace(workload_csv(rows))

    def test_thirty_days_of_rows(self):
        rows = [
            ((T0 + k * FIVE_MIN).strftime("%Y-%m-%dT%H:%M:%SZ"),
             "j", 25, 20, 30, 1.5)
            for k in range(30 * 288)
        ]
        trace = parse_workload_trace(workload_csv(rows))
        assert len(trace) == 8640

    def test_min_above_max_rejected(self):
        with pytest.raises(TraceParseError, match="cpu_min_pct > cpu_max_pct"):
            parse_workload_trace(
                workload_csv([(ts(0), "j", 50, 60, 40, 1)]))

    def test_invariant_ordering_rejected(self):
        with pytest.raises(TraceParseError):
            parse_workload_trace(
                workload_csv([(ts(0), "j", 10, 20, 30, 1)]))

    def test_multi_job_split(self):
        rows = [(ts(0), "a", 10, 10, 10, 1), (ts(0), "b", 20, 20, 20, 1),
                (ts(0, 5), "a", 12, 12, 12, 1), (ts(0, 5), "b", 22, 22, 22, 1)]
        traces = parse_workload_traces(workload_csv(rows))
        assert [t.job_id for t in traces] == ["a", "b"]
        assert all(len(t) == 2 for t in traces)

    def test_serialize_round_trip(self):
        trace = synth_workload_trace("sinusoid", 24,
                                     {"mean": 0.4, "amplitude": 0.2, "period": 12})
        text = serialize_workload_traces([trace])
        again = parse_workload_trace(io.BytesIO(text.encode()))
        assert serialize_workload_traces([again]) == text


class TestComputeStats:
    def test_constant(self):
        stats = compute_stats([5, 5, 5, 5])
        assert stats.mean == 5
        assert stats.stddev == 0
        assert stats.cov == 0

    def test_one_two_three(self):
        stats = compute_stats([1, 2, 3])
        assert stats.mean == pytest.approx(2.0, abs=1e-12)
        assert stats.stddev == pytest.approx(math.sqrt(2.0 / 3.0), abs=1e-12)
        assert stats.cov == pytest.approx(math.sqrt(2.0 / 3.0) / 2.0, abs=1e-12)

    def test_constant_year(self):
        stats = compute_stats([800.0] * 8760)
        assert stats.mean == 800
        assert stats.cov == 0

    def test_errors(self):
        with pytest.raises(ValueError):
            compute_stats([])
        with pytest.raises(ValueError):
            compute_stats([0.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            series = rng.uniform(0.1, 5.0, size=rng.integers(2, 200))
            k = rng.uniform(0.01, 100.0)
            assert compute_stats(series * k).cov == pytest.approx(
                compute_stats(series).cov, rel=1e-9, abs=1e-12)


class TestRegionReport:
    def test_constant_zero_cov_both_modes(self):
        trace = synth_carbon_trace("constant", 48, {"value": 400}, region="X")
        for mode in ("whole", "daily"):
            report = carbon_region_report([trace], mode=mode)
            assert report[0].cov == 0
            assert report[0].mean == 400

    def test_repeated_sinusoid_day(self):
        mean, amp = 300.0, 60.0
        trace = synth_carbon_trace(
            "sinusoid", 240, {"mean": mean, "amplitude": amp, "period": 24})
        # closed form for a full-period 24-point sinusoid: std = amp / sqrt(2)
        expected = amp / math.sqrt(2) / mean
        daily = carbon_region_report([trace], mode="daily")[0].cov
        single = carbon_region_report(
            [synth_carbon_trace("sinusoid", 24,
                                {"mean": mean, "amplitude": amp, "period": 24})],
            mode="daily")[0].cov
        assert daily == pytest.approx(single, rel=1e-12)
        assert daily == pytest.approx(expected, rel=1e-9)

    def test_spiky_region_sorts_last(self):
        flat = synth_carbon_trace("constant", 24, {"value": 100}, region="flat")
        samples = [800.0] * 24
        samples[7] = 1000.0  # one +200 spike
        spiky = CarbonTrace("spiky", tuple(
            CarbonSample(T0 + k * HOUR, v) for k, v in enumerate(samples)))
        # hand CoV: mean = (23*800 + 1000)/24, var = (23*(800-m)^2+(1000-m)^2)/24
        m = (23 * 800 + 1000) / 24
        var = (23 * (800 - m) ** 2 + (1000 - m) ** 2) / 24
        expected = math.sqrt(var) / m
        report = carbon_region_report([spiky, flat], mode="whole")
        assert [r.region for r in report] == ["flat", "spiky"]
        assert report[1].cov == pytest.approx(expected, rel=1e-12)

    def test_sorted_non_decreasing(self):
        rng = np.random.default_rng(3)
        traces = [
            synth_carbon_trace(
                "sinusoid", 48,
                {"mean": rng.uniform(100, 800),
                 "amplitude": rng.uniform(0, 90), "period": 24},
                region=f"r{i}")
            for i in range(8)
        ]
        report = carbon_region_report(traces, mode="whole")
        covs = [r.cov for r in report]
        assert covs == sorted(covs)

    def test_short_trace_daily_mode_error(self):
        trace = synth_carbon_trace("constant", 12, {"value": 100})
        with pytest.raises(ValueError, match="24 samples"):
            carbon_region_report([trace], mode="daily")


class TestCovHistogram:
    def test_constant_jobs_first_bucket(self):
        traces = [
            synth_workload_trace("constant", 12, {"value": 0.3},
                                 job_id=f"j{i}")
            for i in range(10)
        ]
        hist = workload_cov_histogram(traces, [0.25, 0.4, 1.0])
        assert hist["<0.25"] == 100.0
        assert sum(hist.values()) == pytest.approx(100.0, abs=0.01)

    def test_alternating_job_cov_one(self):
        constant = synth_workload_trace("constant", 288, {"value": 0.4},
                                        job_id="flat")
        alternating = synth_workload_trace(
            "step", 288, {"low": 0.0, "high": 0.8, "period": 1},
            job_id="alt")
        hist = workload_cov_histogram([constant, alternating], [0.25, 0.4, 1.0])
        assert hist["<0.25"] == 50.0
        assert hist[">=1"] == 50.0
        from carboncap.traces import compute_stats as cs
        assert cs(alternating.cpu_avg_series()).cov == pytest.approx(1.0, rel=1e-12)

    def test_eight_percent_share(self):
        # 2 of 25 jobs constant -> 8% below 0.25
        traces = [
            synth_workload_trace("constant", 48, {"value": 0.5}, job_id=f"c{i}")
            for i in range(2)
        ]
        traces += [
            synth_workload_trace("step", 48, {"low": 0.0, "high": 0.9, "period": 1},
                                 job_id=f"v{i}")
            for i in range(23)
        ]
        hist = workload_cov_histogram(traces, [0.25, 0.4, 1.0])
        assert hist["<0.25"] == pytest.approx(8.0, abs=0.01)

    def test_thirty_percent_high_variance_share(self):
        # 3 of 10 jobs alternate 0/0.8 (cov exactly 1) -> 30% at or above 1
        traces = [
            synth_workload_trace("step", 48, {"low": 0.0, "high": 0.8,
                                              "period": 1}, job_id=f"v{i}")
            for i in range(3)
        ]
        traces += [
            synth_workload_trace("constant", 48, {"value": 0.4},
                                 job_id=f"c{i}")
            for i in range(7)
        ]
        hist = workload_cov_histogram(traces, [0.25, 0.4, 1.0])
        assert hist[">=1"] == pytest.approx(30.0, abs=0.01)

    def test_zero_mean_job_in_undefined_bucket(self):
        zero = synth_workload_trace("constant", 12, {"value": 0.0}, job_id="z")
        busy = synth_workload_trace("constant", 12, {"value": 0.5}, job_id="b")
        hist = workload_cov_histogram([zero, busy], [0.5])
        assert hist["undefined"] == 50.0

    def test_bad_edges(self):
        trace = synth_workload_trace("constant", 4, {"value": 0.5})
        with pytest.raises(ValueError):
            workload_cov_histogram([trace], [0.4, 0.4])
        with pytest.raises(ValueError):
            workload_cov_histogram([trace], [])


class TestSynth:
    def test_constant(self):
        trace = synth_carbon_trace("constant", 24, {"value": 300})
        assert len(trace) == 24
        assert all(s.intensity == 300 for s in trace.samples)

    def test_step_blocks(self):
        values = synth_series("step", 48, {"low": 100, "high": 700, "period": 12})
        assert list(values[:12]) == [100.0] * 12
        assert list(values[12:24]) == [700.0] * 12
        assert list(values[24:36]) == [100.0] * 12

    def test_bursty_deterministic(self):
        a = synth_series("bursty", 96, {"base": 0.1, "burst": 1.0}, seed=7)
        b = synth_series("bursty", 96, {"base": 0.1, "burst": 1.0}, seed=7)
        assert np.array_equal(a, b)
        with pytest.raises(ValueError, match="seed"):
            synth_series("bursty", 8, {"base": 0.1, "burst": 1.0})

    def test_negative_values_rejected_not_clamped(self):
        with pytest.raises(ValueError, match="negative"):
            synth_series("sinusoid", 24,
                         {"mean": 100, "amplitude": 200, "period": 24})

    def test_unknown_kind_and_params(self):
        with pytest.raises(ValueError, match="kind"):
            synth_series("sawtooth", 4, {})
        with pytest.raises(ValueError, match="unexpected"):
            synth_series("constant", 4, {"value": 1, "bogus": 2})


class TestTypes:
    def test_sample_invariants(self):
        with pytest.raises(ValueError):
            CarbonSample(T0, -1.0)
        with pytest.raises(ValueError):
            WorkloadSample(T0, 0.5, 0.6, 0.7, 1.0)

    def test_trace_requires_samples(self):
        with pytest.raises(ValueError):
            CarbonTrace("x", ())
        with pytest.raises(ValueError):
            WorkloadTrace("x", ())

    def test_trace_span(self):
        trace = synth_carbon_trace("constant", 3, {"value": 1})
        assert trace.end - trace.start == 3 * HOUR
