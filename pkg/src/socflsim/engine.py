"""Per-device training engine.

The engine decides whether a training request is admitted (thermal and
battery gates), benchmarks unexplored execution choices while the device is
idle and discharging, prunes the measured profiles into a migration ladder,
and at run time migrates along that ladder: downgrade to a cheaper choice
when the latency EMA shows sustained interference, upgrade back after a
sustained calm streak.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .energy import level_drop_energy
from .soc import (CoreClass, ExecutionChoice, PerfProfile, SocSpec,
                  WorkloadModel, prune_dominated, simulate_profile)
from .trace import DISCHARGING, CHARGING, RawSample

DECLINE_HOT = "hot"
DECLINE_BATTERY = "battery"

# Background subtraction never erases a measurement entirely.
MIN_RECORDED_POWER_FRACTION = 0.01


@dataclass(frozen=True)
class DeviceStatus:
    battery_level: float
    battery_state: int                 # -1 discharging, 0 steady, 1 charging
    temperature_celsius: float
    is_idle: bool
    contended_classes: frozenset[CoreClass] = frozenset()


@dataclass(frozen=True)
class TrainingRequest:
    workload_name: str
    min_real_batches: int = 1      # batches that must train the live model
    steps_requested: int = 1

    def __post_init__(self) -> None:
        if self.min_real_batches < 1:
            raise ValueError("min_real_batches must be at least 1")
        if self.steps_requested < self.min_real_batches:
            raise ValueError("steps_requested must cover min_real_batches")


@dataclass(frozen=True)
class EnginePolicy:
    max_temp_celsius: float = 35.0
    min_battery_percent: float = 40.0
    downgrade_ratio: float = 1.25     # EMA above ratio * expected counts as a breach
    downgrade_window: int = 3         # consecutive breaches before downgrading
    upgrade_ratio: float = 1.05       # EMA at or below ratio * expected counts as calm
    upgrade_cooldown: int = 30        # consecutive calm steps before upgrading
    ema_alpha: float = 0.3
    benchmark_batches: int = 8        # batches benchmarked per explored choice

    def __post_init__(self) -> None:
        if not 0 < self.ema_alpha <= 1:
            raise ValueError("ema_alpha must be in (0, 1]")
        if self.downgrade_ratio <= self.upgrade_ratio or self.upgrade_ratio < 1:
            raise ValueError("need downgrade_ratio > upgrade_ratio >= 1")
        if self.downgrade_window < 1 or self.upgrade_cooldown < 1:
            raise ValueError("window and cooldown must be at least 1")
        if self.benchmark_batches < 1:
            raise ValueError("benchmark_batches must be at least 1")
        if self.max_temp_celsius <= 0 or not 0 <= self.min_battery_percent <= 100:
            raise ValueError("bad thermal or battery threshold")


class AdmissionKind(Enum):
    ACCEPT_TRAIN = "accept_train"
    ACCEPT_EXPLORE = "accept_explore"
    DECLINE = "decline"


@dataclass(frozen=True)
class Admission:
    kind: AdmissionKind
    reason: str | None = None


class ControlAction(Enum):
    STAY = "stay"
    DOWNGRADE = "downgrade"
    UPGRADE = "upgrade"


@dataclass
class EngineState:
    explored: dict[ExecutionChoice, PerfProfile] = field(default_factory=dict)
    unexplored: list[ExecutionChoice] = field(default_factory=list)
    pruned_ladder: list[PerfProfile] = field(default_factory=list)
    current_rung: int = 0
    latency_ema: float = 0.0
    calm_steps: int = 0
    breach_steps: int = 0
    background_power_watts: float = 0.0

    @classmethod
    def fresh(cls, choices: Iterable[ExecutionChoice],
              background_power_watts: float = 0.0) -> "EngineState":
        return cls(unexplored=list(choices),
                   background_power_watts=background_power_watts)

    @property
    def exploration_complete(self) -> bool:
        return not self.unexplored


def admit(status: DeviceStatus, policy: EnginePolicy,
          exploration_complete: bool) -> Admission:
    """Gate a training request on thermals, exploration state and battery."""
    if status.temperature_celsius > policy.max_temp_celsius:
        return Admission(AdmissionKind.DECLINE, DECLINE_HOT)
    if (not exploration_complete and status.is_idle
            and status.battery_state == DISCHARGING):
        return Admission(AdmissionKind.ACCEPT_EXPLORE)
    if status.battery_state == CHARGING or status.battery_level >= policy.min_battery_percent:
        return Admission(AdmissionKind.ACCEPT_TRAIN)
    return Admission(AdmissionKind.DECLINE, DECLINE_BATTERY)


def estimate_background_power(window: Sequence[RawSample], soc: SocSpec) -> float:
    """Average non-training draw over an idle, discharging trace window.

    Battery-level drops are converted to joules at the nominal voltage and
    divided by the window duration. An empty or zero-length window falls back
    to the SoC's configured idle power.
    """
    if len(window) < 2:
        return soc.idle_power_watts
    duration = window[-1].timestamp - window[0].timestamp
    if duration <= 0:
        return soc.idle_power_watts
    joules = 0.0
    for prev, cur in zip(window, window[1:]):
        drop = prev.battery_level - cur.battery_level
        if drop > 0:
            joules += level_drop_energy(drop, soc.battery_capacity_coulombs,
                                        soc.nominal_voltage)
    return joules / duration


def _install_ladder(state: EngineState) -> None:
    state.pruned_ladder = prune_dominated(state.explored.values())
    state.current_rung = 0
    state.latency_ema = state.pruned_ladder[0].step_latency_seconds
    state.calm_steps = 0
    state.breach_steps = 0


def install_profiles(state: EngineState, profiles: Iterable[PerfProfile]) -> None:
    """Adopt a merged profile set from the coordinator, skipping exploration."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("cannot install an empty profile set")
    state.explored = {p.choice: p for p in profiles}
    state.unexplored = []
    _install_ladder(state)


def explore_step(state: EngineState, request: TrainingRequest,
                 workload: WorkloadModel, soc: SocSpec,
                 benchmark_batches: int = 8) -> tuple[PerfProfile, int]:
    """Benchmark the next unexplored choice; returns (profile, batches run).

    The measured power includes the device's background draw, which is
    subtracted before the profile is recorded (clamped so a noisy estimate
    cannot erase the measurement). When the last choice is explored the
    pruned ladder is built and the engine starts at rung 0 (fastest).
    """
    if not state.unexplored:
        raise RuntimeError("exploration_complete: no unexplored choices left")
    choice = state.unexplored.pop(0)
    true = simulate_profile(workload, choice, soc)
    measured = true.avg_power_watts + state.background_power_watts
    recorded = max(measured - state.background_power_watts,
                   MIN_RECORDED_POWER_FRACTION * measured)
    profile = PerfProfile.from_latency_power(choice, true.step_latency_seconds, recorded)
    state.explored[choice] = profile
    if not state.unexplored:
        _install_ladder(state)
    return profile, max(request.min_real_batches, benchmark_batches)


def control_loop_step(state: EngineState, observed_latency: float,
                      policy: EnginePolicy) -> ControlAction:
    """Fold one observed step latency into the EMA and migrate if warranted."""
    if not state.pruned_ladder:
        raise RuntimeError("not_explored: ladder is empty")
    expected = state.pruned_ladder[state.current_rung].step_latency_seconds
    a = policy.ema_alpha
    state.latency_ema = a * observed_latency + (1.0 - a) * state.latency_ema

    if state.latency_ema > policy.downgrade_ratio * expected:
        state.breach_steps += 1
        state.calm_steps = 0
    elif state.latency_ema <= policy.upgrade_ratio * expected:
        state.calm_steps += 1
        state.breach_steps = 0
    else:
        state.calm_steps = 0
        state.breach_steps = 0

    if (state.breach_steps >= policy.downgrade_window
            and state.current_rung + 1 < len(state.pruned_ladder)):
        _migrate(state, state.current_rung + 1)
        return ControlAction.DOWNGRADE
    if state.current_rung > 0 and state.calm_steps >= policy.upgrade_cooldown:
        _migrate(state, state.current_rung - 1)
        return ControlAction.UPGRADE
    return ControlAction.STAY


def _migrate(state: EngineState, rung: int) -> None:
    # Re-seed the EMA at the new rung's expectation so a stale average cannot
    # trigger a migration faster than the window/cooldown bounds allow.
    state.current_rung = rung
    state.latency_ema = state.pruned_ladder[rung].step_latency_seconds
    state.calm_steps = 0
    state.breach_steps = 0


def current_choice(state: EngineState) -> tuple[ExecutionChoice, PerfProfile]:
    """The choice/profile at the engine's current ladder rung."""
    if not state.pruned_ladder:
        raise RuntimeError("not_explored: ladder is empty")
    profile = state.pruned_ladder[state.current_rung]
    return profile.choice, profile
