"""Trace-driven federated learning simulation.

Each round the coordinator determines which clients are online (engine
admission plus energy-loan availability at the current trace state), samples
a cohort uniformly, and has every selected client train locally; updates that
finish inside the round deadline while the device is still available are
FedAvg-aggregated into the global model, which is then evaluated on a fixed
held-out split. The clock advances by the slowest completing client's wall
time, capped at the deadline.

Two scheduling policies share this loop:

* greedy_baseline: every client always trains with one thread per fast core.
* adaptive: clients benchmark execution choices while idle and discharging
  (the coordinator spreads the choice list across devices and broadcasts the
  merged profiles once complete), then train on the pruned ladder, migrating
  rungs when foreground interference inflates step latency.

All randomness flows from one generator seeded by the experiment seed, with
a fixed draw order (task data, per-client shards, session seeds, then one
selection draw per round), so runs are bit-reproducible.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import fltask
from .config import ExperimentConfig, POLICY_ADAPTIVE, POLICY_GREEDY
from .energy import EnergyLedger, accrue_loan, is_available, settle_day
from .engine import (Admission, AdmissionKind, DeviceStatus, EnginePolicy,
                     EngineState, TrainingRequest, admit, control_loop_step,
                     estimate_background_power, explore_step, install_profiles)
from .soc import (CoreClass, ExecutionChoice, PerfProfile, choice_label,
                  cost_key, enumerate_choices, greedy_choice, simulate_profile)
from .trace import DISCHARGING, DEFAULT_TEMPERATURE_C, DeviceTrace, timezone_shift_seconds

# Foreground model: screen sessions contend for the fast cores.
CONTENDED_CLASSES = frozenset({CoreClass.LOW_LATENCY, CoreClass.PRIME})
DAY_BUSY_PROBABILITY = 0.35
NIGHT_BUSY_PROBABILITY = 0.05
DAY_START_HOUR, DAY_END_HOUR = 8, 23

SECONDS_PER_DAY = 86400


class SchedulingPolicy(Enum):
    GREEDY_BASELINE = POLICY_GREEDY
    ADAPTIVE = POLICY_ADAPTIVE


def derive_foreground_sessions(trace: DeviceTrace, rng_seed: int) -> list[tuple[int, int]]:
    """Busy [start, end) intervals from screen_on, else a seeded diurnal model.

    Without screen data each grid sample is busy with a probability that is
    higher during local daytime (08-23); consecutive busy samples merge into
    one session covering their grid slots.
    """
    grid = trace.grid_seconds or 600
    if any(s.screen_on is not None for s in trace.samples):
        busy = [bool(s.screen_on) for s in trace.samples]
    else:
        rng = np.random.default_rng(rng_seed)
        busy = []
        for s in trace.samples:
            hour = (s.timestamp % SECONDS_PER_DAY) // 3600
            p = (DAY_BUSY_PROBABILITY if DAY_START_HOUR <= hour < DAY_END_HOUR
                 else NIGHT_BUSY_PROBABILITY)
            busy.append(rng.random() < p)
    sessions: list[tuple[int, int]] = []
    for flag, s in zip(busy, trace.samples):
        if not flag:
            continue
        if sessions and sessions[-1][1] == s.timestamp:
            sessions[-1] = (sessions[-1][0], s.timestamp + grid)
        else:
            sessions.append((s.timestamp, s.timestamp + grid))
    return sessions


def latency_inflation(choice: ExecutionChoice, busy: bool,
                      contended: frozenset[CoreClass],
                      factor: float = 2.0) -> float:
    """Slowdown while a foreground session contends the choice's core classes."""
    if busy and any(choice.uses(c) for c in contended):
        return factor
    return 1.0


def assign_exploration(device_ids: Sequence[str],
                       choices: Sequence[ExecutionChoice],
                       ) -> dict[str, list[ExecutionChoice]]:
    """Round-robin partition of a SoC's choice list across its clients."""
    if not device_ids:
        raise ValueError("cannot assign exploration without clients")
    ids = sorted(device_ids)
    out: dict[str, list[ExecutionChoice]] = {d: [] for d in ids}
    for i, choice in enumerate(choices):
        out[ids[i % len(ids)]].append(choice)
    return out


@dataclass
class ClientSim:
    device_id: str
    trace: DeviceTrace
    soc: SocSpec
    workload: WorkloadModel
    engine: EngineState
    ledger: EnergyLedger
    shard_x: np.ndarray
    shard_y: np.ndarray
    sessions: list[tuple[int, int]]
    greedy_profile: PerfProfile
    n_classes: int
    tz_shift_seconds: int = 0
    _session_starts: list[int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._session_starts = [s for s, _ in self.sessions]

    def busy_at(self, t: float) -> bool:
        i = bisect_right(self._session_starts, t) - 1
        return i >= 0 and t < self.sessions[i][1]

    def local_day(self, t: float) -> int:
        return math.floor((t - self.tz_shift_seconds) / SECONDS_PER_DAY)

    def status_at(self, t: float) -> DeviceStatus | None:
        """Device status from the trace; None while t is outside the trace."""
        if not self.trace.covers(t):
            return None
        sample = self.trace.sample_at(t)
        busy = self.busy_at(t)
        return DeviceStatus(
            battery_level=sample.battery_level,
            battery_state=sample.battery_state if sample.battery_state is not None else DISCHARGING,
            temperature_celsius=(sample.temperature if sample.temperature is not None
                                 else DEFAULT_TEMPERATURE_C),
            is_idle=not busy,
            contended_classes=CONTENDED_CLASSES if busy else frozenset(),
        )


@dataclass(frozen=True)
class RoundReport:
    round_index: int
    sim_time_seconds: float       # elapsed since simulation start, at round end
    selected: int
    online: int
    completed: int
    round_duration_seconds: float
    round_energy_joules: float
    eval_accuracy: float

    def __post_init__(self) -> None:
        if not 0 <= self.completed <= self.selected <= self.online:
            raise ValueError("need completed <= selected <= online")
        if self.round_duration_seconds < 0 or self.round_energy_joules < 0:
            raise ValueError("duration and energy must be non-negative")


@dataclass(frozen=True)
class ClientRoundRecord:
    round_index: int
    device_id: str
    choice: str       # display label of the execution choice used
    steps: int
    wall_seconds: float
    joules: float
    completed: bool


@dataclass
class SimulationResult:
    policy: str
    reports: list[RoundReport]
    client_records: list[ClientRoundRecord]
    final_accuracy: float
    total_energy_joules: float


def _fastest_known(engine: EngineState) -> PerfProfile | None:
    if not engine.explored:
        return None
    return min(engine.explored.values(),
               key=lambda p: (p.step_latency_seconds, p.choice.cost_key))


def local_training(client: ClientSim, global_params: np.ndarray, steps: int,
                   lr: float, batch: int, policy: SchedulingPolicy,
                   start_time: float, inflation_factor: float,
                   engine_policy: EnginePolicy,
                   ) -> tuple[np.ndarray, int, float, float]:
    """Run local SGD steps; returns (delta, samples processed, wall s, joules).

    Adaptive clients with a ladder feed every observed step latency into the
    engine's control loop and follow its migrations mid-round; before the
    ladder exists they fall back to the fastest profile explored so far, or
    the greedy default. Foreground sessions inflate both latency and energy
    of choices touching contended core classes.
    """
    if steps == 0:
        return np.zeros_like(global_params), 0, 0.0, 0.0
    use_ladder = policy is SchedulingPolicy.ADAPTIVE and bool(client.engine.pruned_ladder)
    static_profile = None
    if not use_ladder:
        if policy is SchedulingPolicy.ADAPTIVE:
            static_profile = _fastest_known(client.engine)
        if static_profile is None:
            static_profile = client.greedy_profile

    params = global_params.copy()
    x, y, n = client.shard_x, client.shard_y, len(client.shard_x)
    wall = 0.0
    joules = 0.0
    for step in range(steps):
        if use_ladder:
            profile = client.engine.pruned_ladder[client.engine.current_rung]
        else:
            profile = static_profile
        busy = client.busy_at(start_time + wall)
        inflation = latency_inflation(profile.choice, busy, CONTENDED_CLASSES,
                                      inflation_factor)
        observed = profile.step_latency_seconds * inflation
        wall += observed
        joules += profile.energy_per_step_joules * inflation
        if use_ladder:
            control_loop_step(client.engine, observed, engine_policy)
        idx = np.arange(step * batch, (step + 1) * batch) % n
        _, grad = fltask.loss_and_grad(params, x[idx], y[idx], client.n_classes)
        params -= lr * grad
    return params - global_params, steps * batch, wall, joules


# ---------------------------------------------------------------------------
# simulation setup

def _background_window(client_trace: DeviceTrace, sessions: list[tuple[int, int]]):
    """First idle, discharging stretch of the trace (up to 6 samples)."""
    starts = [s for s, _ in sessions]

    def busy(t: float) -> bool:
        i = bisect_right(starts, t) - 1
        return i >= 0 and t < sessions[i][1]

    run: list = []
    for s in client_trace.samples:
        if s.battery_state == DISCHARGING and not busy(s.timestamp):
            run.append(s)
            if len(run) == 6:
                return run
        else:
            if len(run) >= 3:
                return run
            run = []
    return run if len(run) >= 3 else []


def _build_clients(corpus: Sequence[DeviceTrace], config: ExperimentConfig,
                   policy: SchedulingPolicy, rng: np.random.Generator,
                   means: np.ndarray) -> list[ClientSim]:
    fl = config.fl
    traces = sorted(corpus, key=lambda t: t.device_id)
    if not traces:
        raise ValueError("corpus is empty")
    shards = [fltask.make_shard(rng, means, fl.shard_size, fl.dirichlet_alpha,
                                fl.data_noise) for _ in traces]
    session_seeds = [int(rng.integers(2 ** 63)) for _ in traces]
    budget_rng = np.random.default_rng(config.energy_seed)
    budgets = [float(budget_rng.uniform(config.energy.daily_budget_joules_min,
                                        config.energy.daily_budget_joules_max))
               for _ in traces]

    specs = {name: config.soc_config(name).to_spec() for name in fl.socs}
    workloads = {name: config.build_workload(fl.workload, name) for name in fl.socs}

    clients: list[ClientSim] = []
    for i, trace in enumerate(traces):
        soc = specs[fl.socs[i % len(fl.socs)]]
        workload = workloads[soc.name]
        sessions = derive_foreground_sessions(trace, session_seeds[i])
        if policy is SchedulingPolicy.ADAPTIVE:
            window = _background_window(trace, sessions)
            background = estimate_background_power(window, soc)
        else:
            background = soc.idle_power_watts
        clients.append(ClientSim(
            device_id=trace.device_id,
            trace=trace,
            soc=soc,
            workload=workload,
            engine=EngineState.fresh([], background_power_watts=background),
            ledger=EnergyLedger(
                daily_budget_joules=budgets[i],
                nominal_voltage=soc.nominal_voltage,
                capacity_coulombs=soc.battery_capacity_coulombs,
                critical_level_percent=config.energy.critical_level_percent),
            shard_x=shards[i][0],
            shard_y=shards[i][1],
            sessions=sessions,
            greedy_profile=simulate_profile(workload, greedy_choice(soc), soc),
            n_classes=fl.n_classes,
            tz_shift_seconds=timezone_shift_seconds(trace.device_id),
        ))

    if policy is SchedulingPolicy.ADAPTIVE:
        by_soc: dict[str, list[ClientSim]] = {}
        for c in clients:
            by_soc.setdefault(c.soc.name, []).append(c)
        for group in by_soc.values():
            choices = enumerate_choices(group[0].soc)
            assignment = assign_exploration([c.device_id for c in group], choices)
            for c in group:
                c.engine.unexplored = assignment[c.device_id]
    return clients


# ---------------------------------------------------------------------------
# round loop

def _reassign_missing_choices(avail: Sequence[tuple[ClientSim, DeviceStatus]],
                              profile_db: dict[str, dict[ExecutionChoice, PerfProfile]],
                              full_choice_sets: dict[str, set[ExecutionChoice]],
                              merged_socs: set[str],
                              engine_policy: EnginePolicy) -> None:
    """Hand unreported choices to devices that can benchmark them right now.

    The initial spread assigns each choice to one device; if that device goes
    offline before benchmarking, the merge would stall forever. Each round the
    coordinator re-issues any choice that is neither reported nor pending on a
    currently explore-eligible device, one per idle device, so a single dead
    assignee cannot block the rest of its SoC group.
    """
    eligible_idle: dict[str, list[ClientSim]] = {}
    pending: dict[str, set[ExecutionChoice]] = {}
    for c, status in avail:
        if c.soc.name in merged_socs:
            continue
        if admit(status, engine_policy, False).kind is not AdmissionKind.ACCEPT_EXPLORE:
            continue
        if c.engine.unexplored:
            pending.setdefault(c.soc.name, set()).update(c.engine.unexplored)
        else:
            eligible_idle.setdefault(c.soc.name, []).append(c)
    for soc_name, takers in eligible_idle.items():
        reported = set(profile_db.get(soc_name, {}))
        covered = reported | pending.get(soc_name, set())
        missing = sorted((ch for ch in full_choice_sets[soc_name] if ch not in covered),
                         key=cost_key)
        for taker, choice in zip(takers, missing):
            taker.engine.unexplored.append(choice)


def run_simulation(corpus: Sequence[DeviceTrace], config: ExperimentConfig,
                   policy: SchedulingPolicy | str) -> SimulationResult:
    """Simulate federated training over the corpus under one policy."""
    policy = SchedulingPolicy(policy)
    fl = config.fl
    rng = np.random.default_rng(config.seed)
    means = fltask.make_class_means(rng, fl.n_classes, fl.n_features,
                                    fl.data_mean_scale)
    eval_x, eval_y = fltask.make_eval_set(rng, means, fl.eval_samples, fl.data_noise)
    clients = _build_clients(corpus, config, policy, rng, means)

    sim_time = float(min(c.trace.first_timestamp for c in clients))
    start_clock = sim_time
    horizon = float(max(c.trace.last_timestamp for c in clients))
    for c in clients:
        c.ledger.last_settlement_day = c.local_day(sim_time)

    request = TrainingRequest(fl.workload, min_real_batches=fl.min_real_batches,
                              steps_requested=max(fl.local_steps, fl.min_real_batches))
    # Coordinator-side profile store; once a SoC's choice list is fully
    # covered every client of that SoC adopts the merged set.
    profile_db: dict[str, dict[ExecutionChoice, PerfProfile]] = {}
    merged_socs: set[str] = set()
    full_choice_sets = {name: set(enumerate_choices(spec)) for name, spec in
                        {c.soc.name: c.soc for c in clients}.items()}

    def merge_profiles() -> None:
        for soc_name, recorded in profile_db.items():
            if soc_name in merged_socs or set(recorded) != full_choice_sets[soc_name]:
                continue
            merged_socs.add(soc_name)
            for c in clients:
                if c.soc.name == soc_name:
                    install_profiles(c.engine, recorded.values())

    params = fltask.init_params(fl.n_classes, fl.n_features)
    last_accuracy = fltask.accuracy(params, eval_x, eval_y, fl.n_classes)
    reports: list[RoundReport] = []
    records: list[ClientRoundRecord] = []
    total_energy = 0.0

    for round_index in range(1, fl.max_rounds + 1):
        if sim_time > horizon:
            break
        t = sim_time

        avail: list[tuple[ClientSim, DeviceStatus]] = []
        for c in clients:  # clients are device_id-sorted
            status = c.status_at(t)
            if status is None or not is_available(c.ledger, status.battery_level):
                continue
            avail.append((c, status))

        if policy is SchedulingPolicy.ADAPTIVE:
            _reassign_missing_choices(avail, profile_db, full_choice_sets,
                                      merged_socs, config.engine_policy)

        online: list[tuple[ClientSim, Admission]] = []
        for c, status in avail:
            admission = admit(status, config.engine_policy,
                              c.engine.exploration_complete)
            if admission.kind is not AdmissionKind.DECLINE:
                online.append((c, admission))

        if not online:
            sim_time = t + fl.round_deadline_seconds
            _settle_all(clients, sim_time)
            reports.append(RoundReport(round_index, sim_time - start_clock, 0, 0, 0,
                                       fl.round_deadline_seconds, 0.0, last_accuracy))
            continue

        k = min(fl.clients_per_round, len(online))
        picked = set(rng.choice(len(online), size=k, replace=False).tolist())
        round_energy = 0.0

        if policy is SchedulingPolicy.ADAPTIVE:
            # Coordinator-driven exploration on eligible non-selected clients.
            for i, (c, admission) in enumerate(online):
                if i in picked or admission.kind is not AdmissionKind.ACCEPT_EXPLORE:
                    continue
                if not c.engine.unexplored:
                    continue
                profile, bench = explore_step(
                    c.engine, request, c.workload, c.soc,
                    benchmark_batches=config.engine_policy.benchmark_batches)
                joules = bench * profile.energy_per_step_joules
                accrue_loan(c.ledger, joules)
                round_energy += joules
                profile_db.setdefault(c.soc.name, {}).setdefault(profile.choice, profile)
                records.append(ClientRoundRecord(
                    round_index, c.device_id, choice_label(profile.choice, c.soc),
                    bench, bench * profile.step_latency_seconds, joules, False))
            merge_profiles()

        updates: list[tuple[np.ndarray, int]] = []
        walls: list[float] = []
        n_completed = 0
        for i in sorted(picked):
            c, admission = online[i]
            if (policy is SchedulingPolicy.ADAPTIVE
                    and admission.kind is AdmissionKind.ACCEPT_EXPLORE
                    and c.engine.unexplored):
                profile, bench = explore_step(
                    c.engine, request, c.workload, c.soc,
                    benchmark_batches=config.engine_policy.benchmark_batches)
                profile_db.setdefault(c.soc.name, {}).setdefault(profile.choice, profile)
                # Work-conserving benchmark: the minimum real batches train
                # the live model, the rest run on a throwaway copy.
                trained = fltask.sgd_steps(params, c.shard_x, c.shard_y,
                                           fl.min_real_batches, fl.lr, fl.batch,
                                           fl.n_classes)
                delta = trained - params
                n_samples = fl.min_real_batches * fl.batch
                steps_done = bench
                wall = bench * profile.step_latency_seconds
                joules = bench * profile.energy_per_step_joules
                label = choice_label(profile.choice, c.soc)
            else:
                delta, n_samples, wall, joules = local_training(
                    c, params, fl.local_steps, fl.lr, fl.batch, policy, t,
                    fl.inflation_factor, config.engine_policy)
                steps_done = fl.local_steps
                if policy is SchedulingPolicy.ADAPTIVE and c.engine.pruned_ladder:
                    used = c.engine.pruned_ladder[c.engine.current_rung].choice
                elif policy is SchedulingPolicy.ADAPTIVE and _fastest_known(c.engine):
                    used = _fastest_known(c.engine).choice
                else:
                    used = c.greedy_profile.choice
                label = choice_label(used, c.soc)

            accrue_loan(c.ledger, joules)
            round_energy += joules
            walls.append(wall)
            end_time = t + wall
            end_status = c.trace.sample_at(end_time) if c.trace.covers(end_time) else None
            completed = (wall <= fl.round_deadline_seconds
                         and end_status is not None
                         and is_available(c.ledger, end_status.battery_level))
            if completed:
                updates.append((delta, n_samples))
                n_completed += 1
            records.append(ClientRoundRecord(round_index, c.device_id, label,
                                             steps_done, wall, joules, completed))
        if policy is SchedulingPolicy.ADAPTIVE:
            merge_profiles()

        if updates:
            params = params + fltask.fedavg_aggregate(updates)
        last_accuracy = fltask.accuracy(params, eval_x, eval_y, fl.n_classes)

        duration = min(fl.round_deadline_seconds, max(walls)) if walls else fl.round_deadline_seconds
        sim_time = t + duration
        _settle_all(clients, sim_time)
        total_energy += round_energy
        reports.append(RoundReport(round_index, sim_time - start_clock, k,
                                   len(online), n_completed, duration,
                                   round_energy, last_accuracy))
        if fl.target_accuracy is not None and last_accuracy >= fl.target_accuracy:
            break

    return SimulationResult(policy.value, reports, records, last_accuracy,
                            total_energy)


def _settle_all(clients: Iterable[ClientSim], sim_time: float) -> None:
    for c in clients:
        day = c.local_day(sim_time)
        if day > c.ledger.last_settlement_day:
            settle_day(c.ledger, day)


# ---------------------------------------------------------------------------
# comparison

@dataclass(frozen=True)
class TimeToAccuracy:
    target_accuracy: float
    seconds_a: float            # math.inf if never reached
    seconds_b: float
    speedup: float | None       # seconds_b / seconds_a; None if either is inf
    winner: str | None          # "a" / "b" when one side is strictly faster


def _first_reach(reports: Sequence[RoundReport], target: float) -> float:
    for r in reports:
        if r.eval_accuracy >= target - 1e-12:
            return r.sim_time_seconds
    return math.inf


def time_to_accuracy(reports_a: Sequence[RoundReport],
                     reports_b: Sequence[RoundReport]) -> TimeToAccuracy:
    """Time for each arm to reach the shared target accuracy.

    The target is the highest accuracy both arms can reach (the min of their
    maxima). The speedup is arm a's advantage: seconds_b / seconds_a.
    """
    if not reports_a or not reports_b:
        raise ValueError("need at least one round per arm")
    target = min(max(r.eval_accuracy for r in reports_a),
                 max(r.eval_accuracy for r in reports_b))
    seconds_a = _first_reach(reports_a, target)
    seconds_b = _first_reach(reports_b, target)
    speedup = None
    if math.isfinite(seconds_a) and math.isfinite(seconds_b) and seconds_a > 0:
        speedup = seconds_b / seconds_a
    winner = None
    if seconds_a < seconds_b:
        winner = "a"
    elif seconds_b < seconds_a:
        winner = "b"
    return TimeToAccuracy(target, seconds_a, seconds_b, speedup, winner)


def energy_to_target(reports: Sequence[RoundReport], target: float) -> float:
    """Cumulative energy up to and including the round that reaches target."""
    total = 0.0
    for r in reports:
        total += r.round_energy_joules
        if r.eval_accuracy >= target - 1e-12:
            return total
    return math.inf
