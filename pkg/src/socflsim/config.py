"""Experiment configuration: strict JSON schema -> domain objects.

Unknown keys are errors (a typo silently reverting to a default would poison
a whole experiment), `seed` is mandatory, and every message carries the field
path that caused it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

from .engine import EnginePolicy
from .soc import CoreClass, SocSpec, WorkloadModel

MAH_TO_COULOMBS = 3.6

POLICY_GREEDY = "greedy_baseline"
POLICY_ADAPTIVE = "adaptive"
KNOWN_POLICIES = (POLICY_GREEDY, POLICY_ADAPTIVE)


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the field path."""


@dataclass(frozen=True)
class SocConfig:
    name: str
    low_power_cores: int
    low_latency_cores: int
    prime_cores: int
    class_speed: dict[str, float]
    class_power: dict[str, float]
    battery_capacity_mah: float
    nominal_voltage: float
    idle_power_watts: float

    def to_spec(self) -> SocSpec:
        return SocSpec.from_counts(
            self.name, self.low_power_cores, self.low_latency_cores,
            self.prime_cores,
            battery_capacity_coulombs=self.battery_capacity_mah * MAH_TO_COULOMBS,
            nominal_voltage=self.nominal_voltage,
            idle_power_watts=self.idle_power_watts)


@dataclass(frozen=True)
class WorkloadConfig:
    name: str
    base_work_units: float
    memory_intensity: float


@dataclass(frozen=True)
class EnergyConfig:
    critical_level_percent: float = 20.0
    daily_budget_joules_min: float = 2000.0
    daily_budget_joules_max: float = 6000.0
    seed: int | None = None  # defaults to the experiment seed + 1


@dataclass(frozen=True)
class FlConfig:
    workload: str
    socs: tuple[str, ...]
    clients_per_round: int = 10
    round_deadline_seconds: float = 600.0
    local_steps: int = 20
    lr: float = 0.05
    batch: int = 16
    max_rounds: int = 50
    shard_size: int = 128
    min_real_batches: int = 2
    inflation_factor: float = 2.0
    target_accuracy: float | None = None
    eval_samples: int = 1000
    n_features: int = 32
    n_classes: int = 10
    dirichlet_alpha: float = 0.5
    data_mean_scale: float = 1.0
    data_noise: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    socs: tuple[SocConfig, ...]
    workloads: tuple[WorkloadConfig, ...]
    fl: FlConfig
    engine_policy: EnginePolicy = EnginePolicy()
    energy: EnergyConfig = EnergyConfig()
    policies: tuple[str, ...] = KNOWN_POLICIES
    corpus: str | None = None

    def soc_config(self, name: str) -> SocConfig:
        for sc in self.socs:
            if sc.name == name:
                return sc
        raise ConfigError(f"unknown soc {name!r}")

    def workload_config(self, name: str) -> WorkloadConfig:
        for wc in self.workloads:
            if wc.name == name:
                return wc
        raise ConfigError(f"unknown workload {name!r}")

    def build_workload(self, workload_name: str, soc_name: str) -> WorkloadModel:
        """Workload model realized on a SoC (speeds/powers are SoC properties)."""
        wc = self.workload_config(workload_name)
        sc = self.soc_config(soc_name)
        speed = {c: sc.class_speed[c.value] for c in CoreClass}
        power = {c: sc.class_power[c.value] for c in CoreClass}
        return WorkloadModel(wc.name, wc.base_work_units, speed,
                             wc.memory_intensity, power)

    @property
    def energy_seed(self) -> int:
        return self.energy.seed if self.energy.seed is not None else self.seed + 1


# ---------------------------------------------------------------------------
# strict parsing helpers

def _check_keys(obj: Mapping[str, Any], allowed: set[str], required: set[str],
                path: str) -> None:
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{path}: expected an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{path}.{key}: missing required key")


def _number(obj: Mapping[str, Any], key: str, path: str, default=None,
            integer: bool = False, allow_none: bool = False):
    if key not in obj:
        return default
    value = obj[key]
    if value is None and allow_none:
        return None
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if not ok or isinstance(value, bool):
        kind = "integer" if integer else "number"
        raise ConfigError(f"{path}.{key}: expected {kind}, got {value!r}")
    return value


def _string(obj: Mapping[str, Any], key: str, path: str, default=None):
    if key not in obj:
        return default
    value = obj[key]
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{path}.{key}: expected non-empty string")
    return value


def _class_map(obj: Mapping[str, Any], key: str, path: str) -> dict[str, float]:
    value = obj.get(key)
    classes = {c.value for c in CoreClass}
    _check_keys(value if isinstance(value, Mapping) else {}, classes, classes,
                f"{path}.{key}")
    return {c: _number(value, c, f"{path}.{key}") for c in classes}


def _parse_soc(obj: Mapping[str, Any], path: str) -> SocConfig:
    allowed = {"name", "low_power_cores", "low_latency_cores", "prime_cores",
               "class_speed", "class_power", "battery_capacity_mah",
               "nominal_voltage", "idle_power_watts"}
    required = allowed - {"prime_cores", "idle_power_watts"}
    _check_keys(obj, allowed, required, path)
    return SocConfig(
        name=_string(obj, "name", path),
        low_power_cores=_number(obj, "low_power_cores", path, integer=True),
        low_latency_cores=_number(obj, "low_latency_cores", path, integer=True),
        prime_cores=_number(obj, "prime_cores", path, default=0, integer=True),
        class_speed=_class_map(obj, "class_speed", path),
        class_power=_class_map(obj, "class_power", path),
        battery_capacity_mah=_number(obj, "battery_capacity_mah", path),
        nominal_voltage=_number(obj, "nominal_voltage", path),
        idle_power_watts=_number(obj, "idle_power_watts", path, default=0.5),
    )


def _parse_workload(obj: Mapping[str, Any], path: str) -> WorkloadConfig:
    allowed = {"name", "base_work_units", "memory_intensity"}
    _check_keys(obj, allowed, allowed, path)
    return WorkloadConfig(
        name=_string(obj, "name", path),
        base_work_units=_number(obj, "base_work_units", path),
        memory_intensity=_number(obj, "memory_intensity", path),
    )


def _parse_engine_policy(obj: Mapping[str, Any], path: str) -> EnginePolicy:
    defaults = EnginePolicy()
    names = {f.name for f in fields(EnginePolicy)}
    _check_keys(obj, names, set(), path)
    kwargs = {}
    for f in fields(EnginePolicy):
        integer = f.name in ("downgrade_window", "upgrade_cooldown", "benchmark_batches")
        kwargs[f.name] = _number(obj, f.name, path, default=getattr(defaults, f.name),
                                 integer=integer)
    try:
        return EnginePolicy(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_energy(obj: Mapping[str, Any], path: str) -> EnergyConfig:
    defaults = EnergyConfig()
    names = {f.name for f in fields(EnergyConfig)}
    _check_keys(obj, names, set(), path)
    cfg = EnergyConfig(
        critical_level_percent=_number(obj, "critical_level_percent", path,
                                       default=defaults.critical_level_percent),
        daily_budget_joules_min=_number(obj, "daily_budget_joules_min", path,
                                        default=defaults.daily_budget_joules_min),
        daily_budget_joules_max=_number(obj, "daily_budget_joules_max", path,
                                        default=defaults.daily_budget_joules_max),
        seed=_number(obj, "seed", path, default=None, integer=True, allow_none=True),
    )
    if not 0 <= cfg.daily_budget_joules_min <= cfg.daily_budget_joules_max:
        raise ConfigError(f"{path}: need 0 <= daily_budget_joules_min <= max")
    if not 0 <= cfg.critical_level_percent < 100:
        raise ConfigError(f"{path}.critical_level_percent: must be in [0, 100)")
    return cfg


def _parse_fl(obj: Mapping[str, Any], path: str, soc_names: list[str],
              workload_names: list[str]) -> FlConfig:
    defaults = {f.name: f.default for f in fields(FlConfig)}
    names = set(defaults)
    _check_keys(obj, names, {"workload"}, path)

    workload = _string(obj, "workload", path)
    if workload not in workload_names:
        raise ConfigError(f"{path}.workload: unknown workload {workload!r}")
    socs = obj.get("socs", soc_names)
    if (not isinstance(socs, list) or not socs
            or any(not isinstance(s, str) for s in socs)):
        raise ConfigError(f"{path}.socs: expected a non-empty list of soc names")
    for s in socs:
        if s not in soc_names:
            raise ConfigError(f"{path}.socs: unknown soc {s!r}")

    ints = {"clients_per_round", "local_steps", "batch", "max_rounds",
            "shard_size", "min_real_batches", "eval_samples", "n_features",
            "n_classes"}
    kwargs: dict[str, Any] = {"workload": workload, "socs": tuple(socs)}
    for name in names - {"workload", "socs", "target_accuracy"}:
        kwargs[name] = _number(obj, name, path, default=defaults[name],
                               integer=name in ints)
    kwargs["target_accuracy"] = _number(obj, "target_accuracy", path,
                                        default=None, allow_none=True)
    cfg = FlConfig(**kwargs)
    positives = ("clients_per_round", "round_deadline_seconds", "local_steps",
                 "lr", "batch", "max_rounds", "shard_size", "min_real_batches",
                 "eval_samples", "n_features", "n_classes", "dirichlet_alpha",
                 "data_noise")
    for name in positives:
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{path}.{name}: must be positive")
    if cfg.inflation_factor < 1:
        raise ConfigError(f"{path}.inflation_factor: must be >= 1")
    if cfg.n_classes < 2:
        raise ConfigError(f"{path}.n_classes: need at least 2 classes")
    return cfg


def parse_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    top_allowed = {"seed", "corpus", "socs", "workloads", "engine_policy",
                   "energy", "fl", "policies"}
    _check_keys(raw, top_allowed, {"seed", "socs", "workloads", "fl"}, "config")
    seed = _number(raw, "seed", "config", integer=True)

    socs_raw = raw["socs"]
    if not isinstance(socs_raw, list) or not socs_raw:
        raise ConfigError("config.socs: expected a non-empty list")
    socs = tuple(_parse_soc(o, f"config.socs[{i}]") for i, o in enumerate(socs_raw))
    if len({s.name for s in socs}) != len(socs):
        raise ConfigError("config.socs: duplicate soc names")

    loads_raw = raw["workloads"]
    if not isinstance(loads_raw, list) or not loads_raw:
        raise ConfigError("config.workloads: expected a non-empty list")
    workloads = tuple(_parse_workload(o, f"config.workloads[{i}]")
                      for i, o in enumerate(loads_raw))
    if len({w.name for w in workloads}) != len(workloads):
        raise ConfigError("config.workloads: duplicate workload names")

    policies = raw.get("policies", list(KNOWN_POLICIES))
    if not isinstance(policies, list) or not policies:
        raise ConfigError("config.policies: expected a non-empty list")
    for p in policies:
        if p not in KNOWN_POLICIES:
            raise ConfigError(f"config.policies: unknown policy {p!r}")
    if len(set(policies)) != len(policies):
        raise ConfigError("config.policies: duplicate policies")

    cfg = ExperimentConfig(
        seed=seed,
        socs=socs,
        workloads=workloads,
        fl=_parse_fl(raw["fl"], "config.fl", [s.name for s in socs],
                     [w.name for w in workloads]),
        engine_policy=_parse_engine_policy(raw.get("engine_policy", {}),
                                           "config.engine_policy"),
        energy=_parse_energy(raw.get("energy", {}), "config.energy"),
        policies=tuple(policies),
        corpus=_string(raw, "corpus", "config", default=None),
    )
    # Building every (workload, soc) pair validates speeds/powers eagerly.
    for soc in cfg.fl.socs:
        try:
            cfg.build_workload(cfg.fl.workload, soc)
            cfg.soc_config(soc).to_spec()
        except ValueError as exc:
            raise ConfigError(f"config: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw)
