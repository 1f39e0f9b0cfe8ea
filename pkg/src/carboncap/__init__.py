"""Carbon emissions rate enforcement for containerized jobs.

A container declares a maximum emissions rate; the policy enforces it through
vertical scaling, migration across server size classes, and suspend/resume.
The package bundles trace analytics, a deterministic trace-driven simulator
with baseline policies, evaluation metrics, and a CLI (``carboncap``).
"""

from .config import MigrationModel, SimConfig, load_sim_config, load_sim_config_file
from .fleet import (
    Fleet,
    Projection,
    ServerSpec,
    default_fleet,
    infer_demand,
    power,
    project,
    quota_from_cores,
)
from .metrics import Summary, compare, server_time_distribution, summarize
from .policy import (
    Action,
    ActionKind,
    ContainerConfig,
    ContainerState,
    PolicyInputs,
    Status,
    emissions_rate,
    max_quota_for_target,
    step_efficiency,
    step_general,
    step_performance,
)
from .provider import (
    CarbonProviderConfig,
    LiveCarbonProvider,
    TraceCarbonProvider,
    make_provider,
)
from .sim import SimResult, StepRecord, run
from .traces import (
    CarbonSample,
    CarbonTrace,
    TraceParseError,
    TraceStats,
    WorkloadSample,
    WorkloadTrace,
    carbon_region_report,
    compute_stats,
    parse_carbon_trace,
    parse_carbon_traces,
    parse_workload_trace,
    parse_workload_traces,
    synth_carbon_trace,
    synth_workload_trace,
    workload_cov_histogram,
)

__version__ = "0.1.0"
