"""Heterogeneous SoC model: core classes, execution choices, a synthetic
performance/power model and the cost-ordered dominance pruning that turns
per-choice profiles into a migration ladder.

An execution choice pins one training thread per selected core. Choices are
canonically identified by their per-class core counts; the concrete core ids
only matter for display labels (e.g. "4567" = all four low-latency cores on
an 8-core part numbered 0-3 low-power, 4-7 low-latency).

Cost ordering: a choice is costlier the more prime cores it uses, then the
more low-latency cores, then the more low-power cores. Lexicographic
comparison of (prime, low_latency, low_power) encodes exactly that.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping


class CoreClass(Enum):
    LOW_POWER = "low_power"
    LOW_LATENCY = "low_latency"
    PRIME = "prime"


@dataclass(frozen=True, order=False)
class ExecutionChoice:
    low_power: int = 0
    low_latency: int = 0
    prime: int = 0

    def __post_init__(self) -> None:
        if min(self.low_power, self.low_latency, self.prime) < 0:
            raise ValueError("core counts must be non-negative")
        if self.total == 0:
            raise ValueError("an execution choice must select at least one core")

    @property
    def total(self) -> int:
        return self.low_power + self.low_latency + self.prime

    def count(self, core_class: CoreClass) -> int:
        return getattr(self, core_class.value)

    def uses(self, core_class: CoreClass) -> bool:
        return self.count(core_class) > 0

    @property
    def cost_key(self) -> tuple[int, int, int]:
        return (self.prime, self.low_latency, self.low_power)


def cost_key(choice: ExecutionChoice) -> tuple[int, int, int]:
    return choice.cost_key


def compare_cost(a: ExecutionChoice, b: ExecutionChoice) -> int:
    """Total cost order over choices: -1 if a cheaper, 0 if equal, 1 if costlier."""
    ka, kb = a.cost_key, b.cost_key
    return -1 if ka < kb else 1 if ka > kb else 0


@dataclass(frozen=True)
class SocSpec:
    name: str
    cores: tuple[tuple[int, CoreClass], ...]  # (core id, class), ids contiguous from 0
    battery_capacity_coulombs: float
    nominal_voltage: float
    idle_power_watts: float

    def __post_init__(self) -> None:
        ids = [cid for cid, _ in self.cores]
        if not ids:
            raise ValueError(f"{self.name}: need at least one core")
        if sorted(ids) != list(range(len(ids))):
            raise ValueError(f"{self.name}: core ids must be unique and contiguous from 0")
        prime_ids = sorted(cid for cid, cls in self.cores if cls is CoreClass.PRIME)
        if prime_ids and prime_ids != list(range(prime_ids[0], prime_ids[0] + len(prime_ids))):
            raise ValueError(f"{self.name}: prime cores must form one contiguous cluster")
        if self.battery_capacity_coulombs <= 0 or self.nominal_voltage <= 0:
            raise ValueError(f"{self.name}: battery capacity and voltage must be positive")
        if self.idle_power_watts < 0:
            raise ValueError(f"{self.name}: idle power must be non-negative")

    @classmethod
    def from_counts(cls, name: str, low_power: int, low_latency: int, prime: int,
                    battery_capacity_coulombs: float, nominal_voltage: float,
                    idle_power_watts: float) -> "SocSpec":
        """Number cores low-power first, then low-latency, then prime."""
        cores: list[tuple[int, CoreClass]] = []
        for core_class, count in ((CoreClass.LOW_POWER, low_power),
                                  (CoreClass.LOW_LATENCY, low_latency),
                                  (CoreClass.PRIME, prime)):
            for _ in range(count):
                cores.append((len(cores), core_class))
        return cls(name, tuple(cores), battery_capacity_coulombs,
                   nominal_voltage, idle_power_watts)

    def count(self, core_class: CoreClass) -> int:
        return sum(1 for _, cls in self.cores if cls is core_class)

    def ids_for(self, core_class: CoreClass) -> list[int]:
        return [cid for cid, cls in self.cores if cls is core_class]

    def fits(self, choice: ExecutionChoice) -> bool:
        return all(choice.count(c) <= self.count(c) for c in CoreClass)


def enumerate_choices(soc: SocSpec, allow_cross_cluster: bool = False) -> list[ExecutionChoice]:
    """All execution choices for a SoC, sorted cheapest first.

    Without cross-cluster mixing the space is: every low-power-only count,
    plus every (low-latency, prime) count combination. With mixing it is the
    full per-class cross product. The empty choice is never included.
    """
    n_lp, n_ll, n_pr = (soc.count(c) for c in
                        (CoreClass.LOW_POWER, CoreClass.LOW_LATENCY, CoreClass.PRIME))
    choices: list[ExecutionChoice] = []
    if allow_cross_cluster:
        for lp in range(n_lp + 1):
            for ll in range(n_ll + 1):
                for pr in range(n_pr + 1):
                    if lp + ll + pr:
                        choices.append(ExecutionChoice(lp, ll, pr))
    else:
        choices.extend(ExecutionChoice(low_power=lp) for lp in range(1, n_lp + 1))
        for ll in range(n_ll + 1):
            for pr in range(n_pr + 1):
                if ll + pr:
                    choices.append(ExecutionChoice(low_latency=ll, prime=pr))
    choices.sort(key=cost_key)
    return choices


def choice_label(choice: ExecutionChoice, soc: SocSpec) -> str:
    """Concatenated core ids for display, lowest ids of each class first."""
    if not soc.fits(choice):
        raise ValueError(f"choice {choice} does not fit {soc.name}")
    selected: list[int] = []
    for core_class in CoreClass:
        selected.extend(soc.ids_for(core_class)[: choice.count(core_class)])
    return "".join(str(cid) for cid in sorted(selected))


def greedy_choice(soc: SocSpec) -> ExecutionChoice:
    """The stock-runtime default: one thread per fast (low-latency or prime) core."""
    ll, pr = soc.count(CoreClass.LOW_LATENCY), soc.count(CoreClass.PRIME)
    if ll + pr == 0:
        return ExecutionChoice(low_power=soc.count(CoreClass.LOW_POWER))
    return ExecutionChoice(low_latency=ll, prime=pr)


@dataclass(frozen=True)
class WorkloadModel:
    """Synthetic training-step model calibrated per SoC.

    step latency = base_work_units / (sum of selected core speeds)
                   * (1 + memory_intensity * (cores - 1))

    The second factor models shared-cache contention: memory-bound kernels
    (memory_intensity > 1) run fastest on a single fast core, compute-bound
    ones (memory_intensity ~ 0) scale with added cores.
    """
    name: str
    base_work_units: float
    class_speed: Mapping[CoreClass, float]   # work units per second per core
    memory_intensity: float                  # dimensionless contention factor
    class_power: Mapping[CoreClass, float]   # active watts per core

    def __post_init__(self) -> None:
        if self.base_work_units <= 0:
            raise ValueError("base_work_units must be positive")
        if self.memory_intensity < 0:
            raise ValueError("memory_intensity must be non-negative")
        speeds = {c: self.class_speed[c] for c in CoreClass}
        if min(speeds.values()) <= 0 or min(self.class_power[c] for c in CoreClass) <= 0:
            raise ValueError("class speeds and powers must be positive")
        if not (speeds[CoreClass.PRIME] >= speeds[CoreClass.LOW_LATENCY]
                >= speeds[CoreClass.LOW_POWER]):
            raise ValueError("class speeds must order prime >= low_latency >= low_power")


@dataclass(frozen=True)
class PerfProfile:
    choice: ExecutionChoice
    step_latency_seconds: float
    avg_power_watts: float
    energy_per_step_joules: float

    def __post_init__(self) -> None:
        if min(self.step_latency_seconds, self.avg_power_watts,
               self.energy_per_step_joules) <= 0:
            raise ValueError("profile quantities must be positive")
        product = self.step_latency_seconds * self.avg_power_watts
        if abs(self.energy_per_step_joules - product) > 1e-9 * max(product, self.energy_per_step_joules):
            raise ValueError("energy_per_step must equal latency * power")

    @classmethod
    def from_latency_power(cls, choice: ExecutionChoice, latency: float,
                           power: float) -> "PerfProfile":
        return cls(choice, latency, power, latency * power)


def simulate_profile(workload: WorkloadModel, choice: ExecutionChoice,
                     soc: SocSpec) -> PerfProfile:
    """Latency/power/energy of one training step for a choice on a SoC."""
    if not soc.fits(choice):
        raise ValueError(f"choice {choice} does not fit {soc.name}")
    speed = sum(choice.count(c) * workload.class_speed[c] for c in CoreClass)
    latency = (workload.base_work_units / speed
               * (1.0 + workload.memory_intensity * (choice.total - 1)))
    power = sum(choice.count(c) * workload.class_power[c] for c in CoreClass)
    return PerfProfile.from_latency_power(choice, latency, power)


def prune_dominated(profiles: Iterable[PerfProfile]) -> list[PerfProfile]:
    """Keep only profiles where paying more buys speed (the migration ladder).

    Profiles are scanned fastest first (cost breaking latency ties, cheaper
    first); one is kept only if it is strictly cheaper than everything kept
    before it. The result is latency-ascending with strictly decreasing
    costs: the Pareto frontier over (latency, cost). Idempotent.
    """
    ordered = sorted(profiles, key=lambda p: (p.step_latency_seconds, p.choice.cost_key))
    if not ordered:
        raise ValueError("cannot prune an empty profile set")
    kept = [ordered[0]]
    for profile in ordered[1:]:
        if profile.choice.cost_key < kept[-1].choice.cost_key:
            kept.append(profile)
    return kept
