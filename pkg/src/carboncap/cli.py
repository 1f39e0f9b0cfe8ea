"""Command-line front end: trace analysis, single runs, comparisons, sweeps.

Exit codes: 0 success, 2 usage or input error, 1 internal error. Every
subcommand is deterministic given its flags; sampled-job experiments require
an explicit --seed so results are reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import timedelta
from pathlib import Path

from . import metrics as metrics_mod
from . import sim as sim_mod
from .config import POLICY_KINDS, ConfigError, SimConfig, load_sim_config_file
from .metrics import COMPARISON_CSV_HEADER, Summary
from .provider import CarbonProviderConfig, LiveCarbonProvider
from .traces import (
    TraceParseError,
    carbon_region_report,
    format_timestamp,
    parse_carbon_traces,
    parse_workload_traces,
    workload_cov_histogram,
)


class InputError(Exception):
    """User-facing input problem; reported and mapped to exit code 2."""


def _fmt(value: float) -> str:
    return format(value, ".10g")


def _parse_floats(text: str, flag: str) -> list[float]:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise InputError(f"{flag} must list at least one value")
    try:
        return [float(p) for p in items]
    except ValueError as exc:
        raise InputError(f"{flag}: {exc}") from None


def _read_carbon(path: str, region: str | None, fill: str | None = None):
    try:
        with open(path, "rb") as handle:
            traces = parse_carbon_traces(handle, fill=fill)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except TraceParseError as exc:
        raise InputError(f"{path}: {exc}") from None
    if region is None:
        if len(traces) > 1:
            names = ", ".join(t.region for t in traces)
            raise InputError(
                f"{path} holds several regions ({names}); pass --region")
        return traces[0]
    for trace in traces:
        if trace.region == region:
            return trace
    raise InputError(f"{path}: no region {region!r}")


def _read_workloads(path: str, fill: str | None = None):
    try:
        with open(path, "rb") as handle:
            return parse_workload_traces(handle, fill=fill)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except TraceParseError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_config(path: str) -> SimConfig:
    try:
        return load_sim_config_file(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except ConfigError as exc:
        raise InputError(f"{path}: {exc}") from None


def _sample_jobs(traces, n: int, seed: int):
    ids = sorted(t.job_id for t in traces)
    if n > len(ids):
        raise InputError(f"--jobs {n} exceeds the {len(ids)} jobs in the trace")
    chosen = set(random.Random(seed).sample(ids, n))
    return [t for t in traces if t.job_id in chosen]


def _variant_config(cfg: SimConfig, policy_kind: str, target: float) -> SimConfig:
    variant = "performance" if policy_kind == "cc-performance" else "efficiency"
    container = replace(cfg.container, c_target_g_per_hr=target, variant=variant)
    return replace(cfg, policy_kind=policy_kind, container=container)


def _run_one(args) -> tuple[tuple[str, float, str], Summary]:
    policy_kind, target, workload, carbon, cfg = args
    run_cfg = _variant_config(cfg, policy_kind, target)
    result = sim_mod.run(workload, carbon, run_cfg)
    return (policy_kind, target, workload.job_id), metrics_mod.summarize(result, run_cfg)


def _run_grid(policies, targets, workloads, carbon, cfg, jobs_parallel: int):
    tasks = [
        (policy, target, workload, carbon, cfg)
        for policy in policies
        for target in targets
        for workload in workloads
    ]
    groups: dict[str, dict[float, dict[str, Summary]]] = {}
    if jobs_parallel > 1:
        with ProcessPoolExecutor(max_workers=jobs_parallel) as pool:
            outcomes = list(pool.map(_run_one, tasks, chunksize=4))
    else:
        outcomes = [_run_one(task) for task in tasks]
    for (policy, target, job_id), summary in sorted(
            outcomes, key=lambda item: item[0]):
        groups.setdefault(policy, {}).setdefault(target, {})[job_id] = summary
    return groups


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_analyze_carbon(args) -> int:
    traces = []
    try:
        with open(args.trace, "rb") as handle:
            traces = parse_carbon_traces(handle, fill=args.fill)
        report = carbon_region_report(traces, mode=args.mode)
    except OSError as exc:
        raise InputError(f"cannot read {args.trace}: {exc}") from None
    except (TraceParseError, ValueError) as exc:
        raise InputError(str(exc)) from None
    print(f"# carbon-intensity report (mode={args.mode}, ordered by CoV)")
    print(f"{'region':<12} {'mean_gco2_per_kwh':>18} {'cov':>10}")
    for row in report:
        print(f"{row.region:<12} {_fmt(row.mean):>18} {_fmt(row.cov):>10}")
    if args.out:
        _write_csv(Path(args.out), ["region", "mean_gco2_per_kwh", "cov", "mode"],
                   [[r.region, _fmt(r.mean), _fmt(r.cov), args.mode]
                    for r in report])
    return 0


def cmd_analyze_workload(args) -> int:
    traces = _read_workloads(args.trace, fill=args.fill)
    if args.sample is not None:
        if args.seed is None:
            raise InputError("--sample requires --seed")
        traces = _sample_jobs(traces, args.sample, args.seed)
    edges = _parse_floats(args.buckets, "--buckets")
    try:
        histogram = workload_cov_histogram(traces, edges)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    print(f"# workload CoV histogram over {len(traces)} jobs")
    print(f"{'bucket':<16} {'percent':>8}")
    for label, pct in histogram.items():
        print(f"{label:<16} {_fmt(pct):>8}")
    if args.out:
        _write_csv(Path(args.out), ["bucket", "percent"],
                   [[label, _fmt(pct)] for label, pct in histogram.items()])
    return 0


RECORDS_CSV_HEADER = [
    "t", "demand", "server_id", "quota", "status", "utilization", "power_w",
    "intensity", "emissions_rate_g_per_hr", "throttle_baseline_units",
    "action", "reason",
]


def _write_run_outputs(out_dir: Path, result, cfg: SimConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        [
            format_timestamp(r.t), _fmt(r.demand), r.server_id, _fmt(r.quota),
            r.status, _fmt(r.utilization), _fmt(r.power_w), _fmt(r.intensity),
            _fmt(r.emissions_rate_g_per_hr), _fmt(r.throttle_baseline_units),
            r.action, r.reason,
        ]
        for r in result.records
    ]
    _write_csv(out_dir / "records.csv", RECORDS_CSV_HEADER, rows)
    summary = metrics_mod.summarize(result, cfg)
    doc = summary.to_dict()
    doc["policy"] = cfg.policy_kind
    doc["c_target_g_per_hr"] = cfg.container.c_target_g_per_hr
    doc["suspend_baseload_attributed"] = cfg.suspend_baseload_attributed
    (out_dir / "summary.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    carbon = _read_carbon(args.carbon, args.region, fill=args.fill)
    workloads = _read_workloads(args.workload, fill=args.fill)
    matches = [t for t in workloads if t.job_id == args.job]
    if not matches:
        raise InputError(f"{args.workload}: no job {args.job!r}")
    provider = None
    if args.live:
        url = os.environ.get("CARBON_API_URL")
        token = os.environ.get("CARBON_API_TOKEN")
        if not url or not token:
            raise InputError(
                "--live requires CARBON_API_URL and CARBON_API_TOKEN")
        provider = LiveCarbonProvider(CarbonProviderConfig(
            mode="live", region=carbon.region, endpoint_url=url,
            auth_token=token,
            refresh=timedelta(seconds=cfg.step_s),
        ))
    try:
        result = sim_mod.run(matches[0], carbon, cfg, provider=provider)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write_run_outputs(Path(args.out), result, cfg)
    summary = metrics_mod.summarize(result, cfg)
    print(f"steps={len(result.records)} "
          f"avg_emissions={_fmt(summary.avg_emissions_g_per_hr)} g/hr "
          f"throttling={_fmt(summary.throttling_pct)}% "
          f"migrations={summary.migration_count}")
    return 0


def _parse_policies(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    if not names:
        raise InputError("--policies must list at least one policy")
    for name in names:
        if name not in POLICY_KINDS:
            raise InputError(
                f"unknown policy {name!r}; valid: {', '.join(POLICY_KINDS)}")
    return names


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    policies = _parse_policies(args.policies)
    targets = _parse_floats(args.targets, "--targets")
    carbon = _read_carbon(args.carbon, args.region, fill=args.fill)
    workloads = _sample_jobs(_read_workloads(args.workload, fill=args.fill),
                             args.jobs, args.seed)
    try:
        groups = _run_grid(policies, targets, workloads, carbon, cfg,
                           args.jobs_parallel)
        rows = metrics_mod.compare(groups)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write_csv(Path(args.out), COMPARISON_CSV_HEADER, [
        [r.policy, _fmt(r.target_g_per_hr), _fmt(r.mean_emissions),
         _fmt(r.std_emissions), _fmt(r.mean_throttle_pct),
         _fmt(r.std_throttle_pct)]
        for r in rows
    ])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    if args.variant == "both":
        policies = ["cc-efficiency", "cc-performance"]
    else:
        policies = [f"cc-{args.variant}"]
    targets = _parse_floats(args.targets, "--targets")
    carbon = _read_carbon(args.carbon, args.region, fill=args.fill)
    workloads = _sample_jobs(_read_workloads(args.workload, fill=args.fill),
                             args.jobs, args.seed)
    try:
        groups = _run_grid(policies, targets, workloads, carbon, cfg,
                           args.jobs_parallel)
        rows = metrics_mod.compare(groups)
        distribution = metrics_mod.server_time_distribution(groups)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out_dir = Path(args.out)
    _write_csv(out_dir / "sweep_emissions.csv",
               ["variant", "target_g_per_hr", "mean_emissions", "std_emissions"],
               [[r.policy, _fmt(r.target_g_per_hr), _fmt(r.mean_emissions),
                 _fmt(r.std_emissions)] for r in rows])
    _write_csv(out_dir / "sweep_throttle.csv",
               ["variant", "target_g_per_hr", "mean_throttle_pct",
                "std_throttle_pct"],
               [[r.policy, _fmt(r.target_g_per_hr), _fmt(r.mean_throttle_pct),
                 _fmt(r.std_throttle_pct)] for r in rows])
    server_rows = []
    for (variant, target) in sorted(distribution):
        for multiple, fraction in sorted(distribution[(variant, target)].items()):
            server_rows.append(
                [variant, _fmt(target), _fmt(multiple), _fmt(fraction)])
    _write_csv(out_dir / "server_time.csv",
               ["variant", "target_g_per_hr", "capacity_multiple",
                "mean_fraction"], server_rows)
    print(f"wrote sweep data for {len(targets)} targets to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carboncap",
        description="Carbon emissions rate enforcement: trace analytics and "
                    "trace-driven policy evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-carbon",
                       help="per-region mean intensity and CoV report")
    p.add_argument("--trace", required=True, help="carbon CSV path")
    p.add_argument("--mode", choices=["whole", "daily"], default="daily",
                   help="CoV over the whole series or averaged per day")
    p.add_argument("--fill", choices=["forward"], default=None,
                   help="forward-fill gaps instead of rejecting them")
    p.add_argument("--out", help="also write the report as CSV")
    p.set_defaults(fn=cmd_analyze_carbon)

    p = sub.add_parser("analyze-workload",
                       help="per-job CPU CoV histogram")
    p.add_argument("--trace", required=True, help="workload CSV path")
    p.add_argument("--sample", type=int, default=None,
                   help="sample this many jobs (requires --seed)")
    p.add_argument("--seed", type=int, default=None, help="sampling seed")
    p.add_argument("--buckets", default="0.25,0.4,1.0",
                   help="comma-separated CoV bucket edges")
    p.add_argument("--fill", choices=["forward"], default=None)
    p.add_argument("--out", help="also write the histogram as CSV")
    p.set_defaults(fn=cmd_analyze_workload)

    p = sub.add_parser("simulate", help="run one job under one policy")
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--workload", required=True, help="workload CSV path")
    p.add_argument("--carbon", required=True, help="carbon CSV path")
    p.add_argument("--job", required=True, help="job id to replay")
    p.add_argument("--region", default=None,
                   help="carbon region (required for multi-region files)")
    p.add_argument("--out", required=True,
                   help="output directory for records.csv and summary.json")
    p.add_argument("--live", action="store_true",
                   help="read intensity from the live API "
                        "(CARBON_API_URL / CARBON_API_TOKEN)")
    p.add_argument("--fill", choices=["forward"], default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("compare",
                       help="policies x targets x sampled jobs -> comparison.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--workload", required=True)
    p.add_argument("--carbon", required=True)
    p.add_argument("--region", default=None)
    p.add_argument("--policies", required=True,
                   help=f"comma-separated subset of: {', '.join(POLICY_KINDS)}")
    p.add_argument("--targets", required=True,
                   help="comma-separated carbon targets in g/hr")
    p.add_argument("--jobs", type=int, required=True,
                   help="number of jobs to sample")
    p.add_argument("--seed", type=int, required=True, help="sampling seed")
    p.add_argument("--jobs-parallel", type=int, default=1,
                   help="parallel worker processes")
    p.add_argument("--out", required=True, help="comparison CSV path")
    p.add_argument("--fill", choices=["forward"], default=None)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("sweep",
                       help="variant sweep incl. server-size time fractions")
    p.add_argument("--config", required=True)
    p.add_argument("--workload", required=True)
    p.add_argument("--carbon", required=True)
    p.add_argument("--region", default=None)
    p.add_argument("--targets", required=True)
    p.add_argument("--variant", choices=["both", "efficiency", "performance"],
                   default="both")
    p.add_argument("--jobs", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs-parallel", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fill", choices=["forward"], default=None)
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
