"""Shared builders for the test suite.

The desk scenario used across the simulation tests: an 8-core SoC with a
small battery, a memory-bound workload whose single-fast-core choice is 6x
faster per step than the all-fast-cores default, and office-hours battery
traces. Numbers are chosen so hand calculation is easy (0.6 s / 1.2 J per
step on one fast core, 3.6 s / 28.8 J on four).
"""

from __future__ import annotations

import numpy as np

from socflsim.config import ExperimentConfig, parse_config
from socflsim.soc import CoreClass, SocSpec, WorkloadModel
from socflsim.trace import DeviceTrace, RawSample, derive_battery_state

GRID = 600


def pixel3ish(name: str = "pixel3ish") -> SocSpec:
    """4 low-power + 4 low-latency cores, no prime cluster."""
    return SocSpec.from_counts(name, 4, 4, 0, battery_capacity_coulombs=10440.0,
                               nominal_voltage=3.85, idle_power_watts=0.5)


def sd865ish(name: str = "sd865ish") -> SocSpec:
    """4 low-power + 3 low-latency + 1 prime core."""
    return SocSpec.from_counts(name, 4, 3, 1, battery_capacity_coulombs=14400.0,
                               nominal_voltage=3.85, idle_power_watts=0.5)


def make_workload(memory_intensity: float, base: float = 100.0,
                  lp_speed: float = 2.0) -> WorkloadModel:
    speed = {CoreClass.LOW_POWER: lp_speed, CoreClass.LOW_LATENCY: 10.0,
             CoreClass.PRIME: 12.0}
    power = {CoreClass.LOW_POWER: 0.5, CoreClass.LOW_LATENCY: 2.0,
             CoreClass.PRIME: 3.5}
    return WorkloadModel("bench", base, speed, memory_intensity, power)


def desk_trace(device_id: str, start_level: float = 90.0, days: int = 2,
               start_hour: int = 8) -> DeviceTrace:
    """Office-pattern trace: slow drain 08-23 local, charging overnight."""
    t0 = start_hour * 3600
    ts = np.arange(t0, t0 + days * 86400 + 1, GRID)
    level, levels = float(start_level), []
    for t in ts:
        hour = (t % 86400) / 3600
        rate = -3.0 if 8 <= hour < 23 else 5.0   # percent per hour
        levels.append(level)
        level = min(95.0, max(45.0, level + rate * GRID / 3600))
    samples = tuple(RawSample(int(t), lv, None, 30.0, None)
                    for t, lv in zip(ts, levels))
    return derive_battery_state(DeviceTrace(device_id, samples, GRID))


def desk_corpus(n_clients: int) -> list[DeviceTrace]:
    return [desk_trace(f"dev{i:03d}", start_level=60.0 + (i * 7) % 36)
            for i in range(n_clients)]


def desk_config_dict(**fl_overrides) -> dict:
    """Two-arm experiment over the desk corpus; see module docstring."""
    fl = {
        "workload": "dwconv",
        "socs": ["octa"],
        "clients_per_round": 10,
        "round_deadline_seconds": 600.0,
        "local_steps": 40,
        "lr": 0.05,
        "batch": 16,
        "max_rounds": 40,
        "shard_size": 128,
        "min_real_batches": 2,
        "data_noise": 2.5,
    }
    fl.update(fl_overrides)
    return {
        "seed": 7,
        "socs": [{
            "name": "octa",
            "low_power_cores": 4,
            "low_latency_cores": 4,
            "class_speed": {"low_power": 6.6666667, "low_latency": 10.0,
                            "prime": 12.0},
            "class_power": {"low_power": 0.5, "low_latency": 2.0, "prime": 3.5},
            "battery_capacity_mah": 300.0,
            "nominal_voltage": 3.85,
            "idle_power_watts": 0.3,
        }],
        "workloads": [{"name": "dwconv", "base_work_units": 6.0,
                       "memory_intensity": 7.6666667}],
        "energy": {"daily_budget_joules_min": 400.0,
                   "daily_budget_joules_max": 800.0},
        "fl": fl,
    }


def desk_config(**fl_overrides) -> ExperimentConfig:
    return parse_config(desk_config_dict(**fl_overrides))
