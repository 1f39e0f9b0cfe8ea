"""Carbon-intensity and workload traces: parsing, validation, statistics, synthesis.

Traces are immutable once constructed. CSV formats:

* carbon:   ``timestamp,region,carbon_intensity_gco2_per_kwh``
* workload: ``timestamp,job_id,cpu_avg_pct,cpu_min_pct,cpu_max_pct,mem_gb``

Timestamps are ISO-8601 UTC (``2021-06-01T13:00:00Z``). CPU columns are
percentages on disk and fractions of baseline-server capacity in memory.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Sequence

import numpy as np

HOUR = timedelta(hours=1)
FIVE_MIN = timedelta(minutes=5)

CARBON_CSV_HEADER = ["timestamp", "region", "carbon_intensity_gco2_per_kwh"]
WORKLOAD_CSV_HEADER = [
    "timestamp", "job_id", "cpu_avg_pct", "cpu_min_pct", "cpu_max_pct", "mem_gb",
]


class TraceParseError(ValueError):
    """Malformed trace input; message includes the offending line number."""


def parse_timestamp(text: str, line_no: int = 1) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise TraceParseError(f"line {line_no}: bad timestamp {text!r}") from None
    if ts.tzinfo is None:
        raise TraceParseError(f"line {line_no}: timestamp {text!r} has no timezone")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _fmt(value: float) -> str:
    """Serialize a float at 6 significant digits (round-trip format)."""
    return format(value, ".6g")


@dataclass(frozen=True)
class CarbonSample:
    timestamp: datetime
    intensity: float  # g CO2e per kWh

    def __post_init__(self) -> None:
        if not math.isfinite(self.intensity) or self.intensity < 0:
            raise ValueError(f"carbon intensity must be >= 0, got {self.intensity}")


@dataclass(frozen=True)
class CarbonTrace:
    region: str
    samples: tuple[CarbonSample, ...]
    resolution: timedelta = HOUR

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("carbon trace must contain at least one sample")
        _check_spacing(tuple(s.timestamp for s in self.samples), self.resolution)

    @property
    def start(self) -> datetime:
        return self.samples[0].timestamp

    @property
    def end(self) -> datetime:
        """Exclusive end of the span covered by the trace."""
        return self.samples[-1].timestamp + self.resolution

    def intensities(self) -> np.ndarray:
        return np.array([s.intensity for s in self.samples], dtype=float)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class WorkloadSample:
    timestamp: datetime
    cpu_avg: float  # fraction of baseline capacity, may exceed 1
    cpu_min: float
    cpu_max: float
    mem_gb: float

    def __post_init__(self) -> None:
        if not (0 <= self.cpu_min <= self.cpu_avg <= self.cpu_max):
            raise ValueError(
                f"need 0 <= cpu_min <= cpu_avg <= cpu_max, got "
                f"({self.cpu_min}, {self.cpu_avg}, {self.cpu_max})"
            )
        if self.mem_gb < 0:
            raise ValueError(f"mem_gb must be >= 0, got {self.mem_gb}")


@dataclass(frozen=True)
class WorkloadTrace:
    job_id: str
    samples: tuple[WorkloadSample, ...]
    resolution: timedelta = FIVE_MIN

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("workload trace must contain at least one sample")
        _check_spacing(tuple(s.timestamp for s in self.samples), self.resolution)

    @property
    def start(self) -> datetime:
        return self.samples[0].timestamp

    @property
    def end(self) -> datetime:
        return self.samples[-1].timestamp + self.resolution

    def cpu_avg_series(self) -> np.ndarray:
        return np.array([s.cpu_avg for s in self.samples], dtype=float)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class TraceStats:
    mean: float
    stddev: float
    cov: float


def _check_spacing(timestamps: Sequence[datetime], resolution: timedelta) -> None:
    for i in range(1, len(timestamps)):
        gap = timestamps[i] - timestamps[i - 1]
        if gap != resolution:
            raise ValueError(
                f"samples at {format_timestamp(timestamps[i - 1])} and "
                f"{format_timestamp(timestamps[i])} are {gap} apart, "
                f"expected {resolution}"
            )


def _text_lines(source: IO[bytes] | IO[str] | Iterable[str]) -> Iterable[str]:
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return io.StringIO(data)
    return source


def _forward_fill(rows: list[tuple[datetime, tuple]], resolution: timedelta,
                  ) -> list[tuple[datetime, tuple]]:
    """Fill gaps that are exact multiples of the resolution with the prior row."""
    filled = [rows[0]]
    for ts, values in rows[1:]:
        prev_ts = filled[-1][0]
        gap = ts - prev_ts
        if gap > resolution and (gap % resolution) == timedelta(0):
            missing = gap // resolution - 1
            for k in range(1, missing + 1):
                filled.append((prev_ts + k * resolution, filled[-1][1]))
        filled.append((ts, values))
    return filled


def parse_carbon_trace(source, region_filter: str | None = None,
                       resolution: timedelta = HOUR,
                       fill: str | None = None) -> CarbonTrace:
    """Parse a carbon-intensity CSV into a single-region trace.

    With ``region_filter``, rows for other regions are skipped. Without it the
    file must contain exactly one region. Gaps are an error unless
    ``fill="forward"`` repeats the last sample across exact-multiple gaps.
    """
    traces = parse_carbon_traces(source, resolution=resolution, fill=fill,
                                 region_filter=region_filter)
    if region_filter is not None:
        return traces[0]
    if len(traces) > 1:
        regions = ", ".join(t.region for t in traces)
        raise TraceParseError(
            f"multiple regions in input ({regions}); pass a region filter"
        )
    return traces[0]


def parse_carbon_traces(source, resolution: timedelta = HOUR,
                        fill: str | None = None,
                        region_filter: str | None = None) -> list[CarbonTrace]:
    """Parse a carbon CSV into one trace per region, ordered by first appearance."""
    if fill not in (None, "forward"):
        raise ValueError(f"unknown fill mode {fill!r}")
    reader = csv.reader(_text_lines(source))
    per_region: dict[str, list[tuple[datetime, tuple]]] = {}
    header_seen = False
    for line_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if not header_seen:
            if [c.strip() for c in row] != CARBON_CSV_HEADER:
                raise TraceParseError(
                    f"line {line_no}: expected header {','.join(CARBON_CSV_HEADER)}"
                )
            header_seen = True
            continue
        if len(row) != 3:
            raise TraceParseError(f"line {line_no}: expected 3 columns, got {len(row)}")
        ts = parse_timestamp(row[0].strip(), line_no)
        region = row[1].strip()
        if region_filter is not None and region != region_filter:
            continue
        try:
            intensity = float(row[2])
        except ValueError:
            raise TraceParseError(
                f"line {line_no}: bad intensity {row[2]!r}"
            ) from None
        if not math.isfinite(intensity) or intensity < 0:
            raise TraceParseError(
                f"line {line_no}: intensity must be >= 0, got {row[2]}"
            )
        rows = per_region.setdefault(region, [])
        if rows and ts <= rows[-1][0]:
            raise TraceParseError(
                f"line {line_no}: timestamps for region {region!r} must be "
                f"strictly increasing"
            )
        rows.append((ts, (intensity,)))
    if not header_seen:
        raise TraceParseError("empty input")
    if not per_region:
        if region_filter is not None:
            raise TraceParseError(f"no rows for region {region_filter!r}")
        raise TraceParseError("no data rows")
    traces = []
    for region, rows in per_region.items():
        if fill == "forward":
            rows = _forward_fill(rows, resolution)
        try:
            samples = tuple(CarbonSample(ts, v[0]) for ts, v in rows)
            traces.append(CarbonTrace(region, samples, resolution))
        except ValueError as exc:
            raise TraceParseError(f"region {region!r}: {exc}") from None
    return traces


def parse_workload_trace(source, job_filter: str | None = None,
                         resolution: timedelta = FIVE_MIN,
                         fill: str | None = None) -> WorkloadTrace:
    """Parse a workload CSV into a single-job trace (see parse_carbon_trace)."""
    traces = parse_workload_traces(source, resolution=resolution, fill=fill,
                                   job_filter=job_filter)
    if job_filter is not None:
        return traces[0]
    if len(traces) > 1:
        raise TraceParseError(
            f"multiple jobs in input ({len(traces)}); pass a job filter"
        )
    return traces[0]


def parse_workload_traces(source, resolution: timedelta = FIVE_MIN,
                          fill: str | None = None,
                          job_filter: str | None = None) -> list[WorkloadTrace]:
    """Parse a workload CSV into one trace per job, ordered by first appearance."""
    if fill not in (None, "forward"):
        raise ValueError(f"unknown fill mode {fill!r}")
    reader = csv.reader(_text_lines(source))
    per_job: dict[str, list[tuple[datetime, tuple]]] = {}
    header_seen = False
    for line_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if not header_seen:
            if [c.strip() for c in row] != WORKLOAD_CSV_HEADER:
                raise TraceParseError(
                    f"line {line_no}: expected header {','.join(WORKLOAD_CSV_HEADER)}"
                )
            header_seen = True
            continue
        if len(row) != 6:
            raise TraceParseError(f"line {line_no}: expected 6 columns, got {len(row)}")
        ts = parse_timestamp(row[0].strip(), line_no)
        job_id = row[1].strip()
        if job_filter is not None and job_id != job_filter:
            continue
        try:
            avg, low, high, mem = (float(c) for c in row[2:6])
        except ValueError:
            raise TraceParseError(f"line {line_no}: bad numeric column") from None
        if low > high:
            raise TraceParseError(f"line {line_no}: cpu_min_pct > cpu_max_pct")
        if not (0 <= low <= avg <= high):
            raise TraceParseError(
                f"line {line_no}: need 0 <= cpu_min_pct <= cpu_avg_pct <= cpu_max_pct"
            )
        if mem < 0:
            raise TraceParseError(f"line {line_no}: mem_gb must be >= 0")
        rows = per_job.setdefault(job_id, [])
        if rows and ts <= rows[-1][0]:
            raise TraceParseError(
                f"line {line_no}: timestamps for job {job_id!r} must be "
                f"strictly increasing"
            )
        rows.append((ts, (avg / 100.0, low / 100.0, high / 100.0, mem)))
    if not header_seen:
        raise TraceParseError("empty input")
    if not per_job:
        if job_filter is not None:
            raise TraceParseError(f"no rows for job {job_filter!r}")
        raise TraceParseError("no data rows")
    traces = []
    for job_id, rows in per_job.items():
        if fill == "forward":
            rows = _forward_fill(rows, resolution)
        try:
            samples = tuple(
                WorkloadSample(ts, v[0], v[1], v[2], v[3]) for ts, v in rows
            )
            traces.append(WorkloadTrace(job_id, samples, resolution))
        except ValueError as exc:
            raise TraceParseError(f"job {job_id!r}: {exc}") from None
    return traces


def serialize_carbon_traces(traces: Sequence[CarbonTrace]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CARBON_CSV_HEADER)
    for trace in traces:
        for s in trace.samples:
            writer.writerow([format_timestamp(s.timestamp), trace.region,
                             _fmt(s.intensity)])
    return out.getvalue()


def serialize_workload_traces(traces: Sequence[WorkloadTrace]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(WORKLOAD_CSV_HEADER)
    for trace in traces:
        for s in trace.samples:
            writer.writerow([
                format_timestamp(s.timestamp), trace.job_id,
                _fmt(s.cpu_avg * 100.0), _fmt(s.cpu_min * 100.0),
                _fmt(s.cpu_max * 100.0), _fmt(s.mem_gb),
            ])
    return out.getvalue()


def compute_stats(series) -> TraceStats:
    """Mean, population standard deviation, and coefficient of variation.

    Raises on an empty series and on a zero mean (CoV undefined).
    """
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        raise ValueError("cannot compute statistics of an empty series")
    mean = float(np.mean(values))
    stddev = float(np.std(values))  # population, ddof=0
    if mean == 0:
        raise ValueError("coefficient of variation undefined for zero-mean series")
    return TraceStats(mean=mean, stddev=stddev, cov=stddev / mean)


@dataclass(frozen=True)
class RegionReport:
    region: str
    mean: float
    cov: float


def carbon_region_report(traces: Sequence[CarbonTrace],
                         mode: str = "daily") -> list[RegionReport]:
    """Per-region mean intensity and CoV, sorted by increasing CoV.

    ``whole`` computes one CoV over the full series. ``daily`` computes a CoV
    per consecutive 24-sample day and averages them across days (a trailing
    partial day is ignored).
    """
    if mode not in ("whole", "daily"):
        raise ValueError(f"unknown report mode {mode!r}")
    rows = []
    for trace in traces:
        if trace.resolution != HOUR:
            raise ValueError(f"region {trace.region!r}: report requires hourly traces")
        values = trace.intensities()
        mean = float(np.mean(values))
        if mode == "whole":
            cov = compute_stats(values).cov
        else:
            days = len(values) // 24
            if days < 1:
                raise ValueError(
                    f"region {trace.region!r}: daily mode needs at least 24 samples"
                )
            daily = values[: days * 24].reshape(days, 24)
            covs = [compute_stats(day).cov for day in daily]
            cov = float(np.mean(covs))
        rows.append(RegionReport(trace.region, mean, cov))
    return sorted(rows, key=lambda r: (r.cov, r.region))


UNDEFINED_BUCKET = "undefined"


def cov_bucket_labels(bucket_edges: Sequence[float]) -> list[str]:
    edges = list(bucket_edges)
    labels = [f"<{_fmt(edges[0])}"]
    labels += [f"[{_fmt(a)},{_fmt(b)})" for a, b in zip(edges, edges[1:])]
    labels.append(f">={_fmt(edges[-1])}")
    return labels


def workload_cov_histogram(traces: Sequence[WorkloadTrace],
                           bucket_edges: Sequence[float]) -> dict[str, float]:
    """Histogram of per-job CPU CoV as percentages of jobs per bucket.

    Jobs with a zero-mean CPU series land in a trailing ``undefined`` bucket
    rather than being dropped. Percentages sum to 100.
    """
    edges = list(bucket_edges)
    if not edges:
        raise ValueError("need at least one bucket edge")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be strictly increasing")
    if not traces:
        raise ValueError("need at least one workload trace")
    labels = cov_bucket_labels(edges)
    counts = {label: 0 for label in labels}
    counts[UNDEFINED_BUCKET] = 0
    for trace in traces:
        values = trace.cpu_avg_series()
        if float(np.mean(values)) == 0:
            counts[UNDEFINED_BUCKET] += 1
            continue
        cov = compute_stats(values).cov
        idx = int(np.searchsorted(edges, cov, side="right"))
        counts[labels[idx]] += 1
    total = len(traces)
    return {label: 100.0 * n / total for label, n in counts.items()}


DEFAULT_START = datetime(2021, 6, 1, tzinfo=timezone.utc)


def synth_series(kind: str, n: int, params: dict, seed: int | None = None) -> np.ndarray:
    """Deterministic synthetic series; negative values are an error, never clamped."""
    if n < 1:
        raise ValueError("need at least one sample")
    p = dict(params)
    if kind == "constant":
        values = np.full(n, float(p.pop("value")))
    elif kind == "sinusoid":
        mean = float(p.pop("mean"))
        amplitude = float(p.pop("amplitude"))
        period = int(p.pop("period"))
        phase = float(p.pop("phase", 0.0))
        if amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if period < 1:
            raise ValueError("period must be >= 1 sample")
        k = np.arange(n)
        values = mean + amplitude * np.sin(2 * np.pi * k / period + phase)
    elif kind == "step":
        low = float(p.pop("low"))
        high = float(p.pop("high"))
        period = int(p.pop("period"))
        if period < 1:
            raise ValueError("period must be >= 1 sample")
        k = np.arange(n)
        values = np.where((k // period) % 2 == 0, low, high)
    elif kind == "bursty":
        base = float(p.pop("base"))
        burst = float(p.pop("burst"))
        p_up = float(p.pop("p_up", 0.1))
        p_down = float(p.pop("p_down", 0.3))
        if seed is None:
            raise ValueError("bursty series requires an explicit seed")
        rng = np.random.default_rng(seed)
        values = np.empty(n)
        bursting = False
        for k in range(n):
            r = rng.random()
            if bursting:
                bursting = r >= p_down
            else:
                bursting = r < p_up
            values[k] = burst if bursting else base
    else:
        raise ValueError(f"unknown synthetic trace kind {kind!r}")
    if p:
        raise ValueError(f"unexpected parameters for {kind!r}: {sorted(p)}")
    if np.any(values < 0):
        raise ValueError(f"{kind!r} parameters produce negative values")
    return values


def synth_carbon_trace(kind: str, n: int, params: dict, *,
                       region: str = "synthetic",
                       start: datetime = DEFAULT_START,
                       resolution: timedelta = HOUR,
                       seed: int | None = None) -> CarbonTrace:
    values = synth_series(kind, n, params, seed=seed)
    samples = tuple(
        CarbonSample(start + k * resolution, float(v)) for k, v in enumerate(values)
    )
    return CarbonTrace(region, samples, resolution)


def synth_workload_trace(kind: str, n: int, params: dict, *,
                         job_id: str = "synthetic",
                         start: datetime = DEFAULT_START,
                         resolution: timedelta = FIVE_MIN,
                         mem_gb: float = 2.0,
                         seed: int | None = None) -> WorkloadTrace:
    values = synth_series(kind, n, params, seed=seed)
    samples = tuple(
        WorkloadSample(start + k * resolution, float(v), float(v), float(v), mem_gb)
        for k, v in enumerate(values)
    )
    return WorkloadTrace(job_id, samples, resolution)
