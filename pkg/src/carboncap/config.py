"""Simulation configuration: JSON schema, validation, defaults.

A config document has sections ``fleet``, ``container``, ``policy``, ``sim``,
``migration``, and ``availability``. Unknown keys are errors; validation
failures name the JSON path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import timedelta

from .fleet import Fleet, ServerSpec
from .policy import ContainerConfig

POLICY_KINDS = (
    "cc-efficiency",
    "cc-performance",
    "vertical-only",
    "suspend-resume",
    "carbon-agnostic",
)

MIGRATION_MODES = ("stop-and-copy", "live")
QUOTA_MODES = ("cores", "continuous")

# Stop-and-copy downtime model d = c0 + c1 * memory_gb. Defaults put a 7 GB
# container at 115 s, matching measured uncompressed-image migrations that
# stay under two minutes at that footprint.
DEFAULT_MIGRATION_C0_S = 10.0
DEFAULT_MIGRATION_C1_S_PER_GB = 15.0


class ConfigError(ValueError):
    """Invalid configuration; the message carries the JSON path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class MigrationModel:
    c0_s: float = DEFAULT_MIGRATION_C0_S
    c1_s_per_gb: float = DEFAULT_MIGRATION_C1_S_PER_GB
    mode: str = "stop-and-copy"

    def downtime_s(self, memory_gb: float) -> float:
        """Transfer time for a memory footprint; downtime only when stop-and-copy."""
        return self.c0_s + self.c1_s_per_gb * memory_gb


@dataclass(frozen=True)
class SimConfig:
    fleet: Fleet
    container: ContainerConfig
    policy_kind: str
    step_s: int = 300
    migration: MigrationModel = field(default_factory=MigrationModel)
    demand_scale: float = 1.0
    availability: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    suspend_baseload_attributed: bool = True
    quota_mode: str = "cores"

    def __post_init__(self) -> None:
        if self.policy_kind not in POLICY_KINDS:
            raise ValueError(
                f"unknown policy kind {self.policy_kind!r}; "
                f"valid: {', '.join(POLICY_KINDS)}"
            )
        if self.step_s <= 0:
            raise ValueError("step_s must be > 0")
        if self.demand_scale <= 0:
            raise ValueError("demand_scale must be > 0")
        for sid, p in self.availability.items():
            self.fleet.by_id(sid)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"availability[{sid}] must be in [0, 1]")

    @property
    def step(self) -> timedelta:
        return timedelta(seconds=self.step_s)


_REQUIRED = object()


def _take(section: dict, key: str, path: str, default=_REQUIRED):
    if key in section:
        return section.pop(key)
    if default is _REQUIRED:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return default


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _string(value, path: str, choices: tuple[str, ...] | None = None) -> str:
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a string, got {value!r}")
    if choices and value not in choices:
        raise ConfigError(path, f"expected one of {', '.join(choices)}; got {value!r}")
    return value


def _boolean(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    return value


def _reject_unknown(section: dict, path: str) -> None:
    if section:
        raise ConfigError(f"{path}.{sorted(section)[0]}", "unknown field")


def _parse_server(doc, path: str) -> ServerSpec:
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    doc = dict(doc)
    try:
        spec = ServerSpec(
            id=_string(_take(doc, "id", path), f"{path}.id"),
            capacity_multiple=_number(_take(doc, "capacity_multiple", path),
                                      f"{path}.capacity_multiple"),
            cores=_integer(_take(doc, "cores", path), f"{path}.cores"),
            base_power_w=_number(_take(doc, "base_power_w", path),
                                 f"{path}.base_power_w"),
            peak_power_w=_number(_take(doc, "peak_power_w", path),
                                 f"{path}.peak_power_w"),
            memory_gb=_number(_take(doc, "memory_gb", path), f"{path}.memory_gb"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None
    _reject_unknown(doc, path)
    return spec


def load_sim_config(doc: dict) -> SimConfig:
    """Build a validated SimConfig from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("$", "config root must be an object")
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}

    fleet_doc = _take(doc, "fleet", "$")
    if not isinstance(fleet_doc, dict):
        raise ConfigError("fleet", "expected an object")
    servers_doc = _take(fleet_doc, "servers", "fleet")
    if not isinstance(servers_doc, list) or not servers_doc:
        raise ConfigError("fleet.servers", "expected a non-empty array")
    servers = tuple(
        _parse_server(s, f"fleet.servers[{i}]") for i, s in enumerate(servers_doc)
    )
    baseline_id = _string(_take(fleet_doc, "baseline_id", "fleet"),
                          "fleet.baseline_id")
    _reject_unknown(fleet_doc, "fleet")
    try:
        fleet = Fleet(servers=servers, baseline_id=baseline_id)
    except (ValueError, KeyError) as exc:
        raise ConfigError("fleet", str(exc)) from None

    policy_doc = _take(doc, "policy", "$")
    if not isinstance(policy_doc, dict):
        raise ConfigError("policy", "expected an object")
    policy_kind = _string(_take(policy_doc, "kind", "policy"), "policy.kind",
                          POLICY_KINDS)
    _reject_unknown(policy_doc, "policy")

    sim_doc = _take(doc, "sim", "$", {})
    if not isinstance(sim_doc, dict):
        raise ConfigError("sim", "expected an object")
    step_s = _integer(_take(sim_doc, "step_s", "sim", 300), "sim.step_s")
    demand_scale = _number(_take(sim_doc, "demand_scale", "sim", 1.0),
                           "sim.demand_scale")
    seed = _integer(_take(sim_doc, "seed", "sim", 0), "sim.seed")
    suspend_attr = _boolean(
        _take(sim_doc, "suspend_baseload_attributed", "sim", True),
        "sim.suspend_baseload_attributed",
    )
    quota_mode = _string(_take(sim_doc, "quota_mode", "sim", "cores"),
                         "sim.quota_mode", QUOTA_MODES)
    _reject_unknown(sim_doc, "sim")

    container_doc = _take(doc, "container", "$")
    if not isinstance(container_doc, dict):
        raise ConfigError("container", "expected an object")
    c_target = _number(_take(container_doc, "c_target_g_per_hr", "container"),
                       "container.c_target_g_per_hr")
    epsilon = _number(_take(container_doc, "epsilon", "container", 0.05),
                      "container.epsilon")
    memory_gb = _number(_take(container_doc, "memory_gb", "container", 2.0),
                        "container.memory_gb")
    min_dwell_s = _number(
        _take(container_doc, "min_dwell_s", "container", 2.0 * step_s),
        "container.min_dwell_s",
    )
    _reject_unknown(container_doc, "container")
    variant = "performance" if policy_kind == "cc-performance" else "efficiency"
    try:
        container = ContainerConfig(
            c_target_g_per_hr=c_target,
            epsilon=epsilon,
            variant=variant,
            memory_gb=memory_gb,
            min_dwell=timedelta(seconds=min_dwell_s),
            core_granular=(quota_mode == "cores"),
        )
    except ValueError as exc:
        raise ConfigError("container", str(exc)) from None

    migration_doc = _take(doc, "migration", "$", {})
    if not isinstance(migration_doc, dict):
        raise ConfigError("migration", "expected an object")
    c0_s = _number(
        _take(migration_doc, "c0_s", "migration", DEFAULT_MIGRATION_C0_S),
        "migration.c0_s",
    )
    c1 = _number(
        _take(migration_doc, "c1_s_per_gb", "migration",
              DEFAULT_MIGRATION_C1_S_PER_GB),
        "migration.c1_s_per_gb",
    )
    mode = _string(_take(migration_doc, "mode", "migration", "stop-and-copy"),
                   "migration.mode", MIGRATION_MODES)
    if c0_s < 0 or c1 < 0:
        raise ConfigError("migration", "coefficients must be >= 0")
    _reject_unknown(migration_doc, "migration")
    migration = MigrationModel(c0_s=c0_s, c1_s_per_gb=c1, mode=mode)

    availability_doc = _take(doc, "availability", "$", {})
    if not isinstance(availability_doc, dict):
        raise ConfigError("availability", "expected an object")
    availability = {}
    for sid, p in availability_doc.items():
        availability[sid] = _number(p, f"availability.{sid}")
    _reject_unknown(doc, "$")

    try:
        return SimConfig(
            fleet=fleet,
            container=container,
            policy_kind=policy_kind,
            step_s=step_s,
            migration=migration,
            demand_scale=demand_scale,
            availability=availability,
            seed=seed,
            suspend_baseload_attributed=suspend_attr,
            quota_mode=quota_mode,
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError("$", str(exc)) from None


def load_sim_config_file(path) -> SimConfig:
    with open(path, "rb") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON: {exc}") from None
    return load_sim_config(doc)
