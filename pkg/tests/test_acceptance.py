"""End-to-end acceptance checks, one test per shipped guarantee.

Each test prints a [PASS] line so a plain `pytest -s tests/test_acceptance.py`
reads as a checklist. Timed checks assert their own budgets.
"""

import time

import numpy as np
import pytest
from scipy.interpolate import PchipInterpolator

from helpers import (desk_config, desk_corpus, make_workload, pixel3ish,
                     sd865ish)
from test_cli import write_config, write_raw_traces
from test_soc import oracle_frontier
from socflsim.cli import main
from socflsim.energy import (BatteryInterval, EnergyLedger, accrue_loan,
                             average_power, interval_energy_sum, is_available,
                             joules_per_battery_percent, settle_day)
from socflsim.engine import (ControlAction, EnginePolicy, EngineState,
                             control_loop_step, current_choice,
                             install_profiles)
from socflsim.flsim import (SchedulingPolicy, energy_to_target,
                            run_simulation, time_to_accuracy)
from socflsim.fltask import (fedavg_aggregate, loss_and_grad, make_class_means,
                             make_shard, param_count)
from socflsim.pchip import MonotoneCubicInterpolator
from socflsim.soc import (CoreClass, PerfProfile, choice_label, cost_key,
                          enumerate_choices, prune_dominated,
                          simulate_profile)
from socflsim.trace import (REASON_GAP, REASON_LARGE_GAPS, REASON_SPAN,
                            REASON_SPARSE, DeviceTrace, RawSample,
                            augment_timezones, filter_traces)

DAY = 86400


def steady_trace(device_id, timestamps):
    samples = tuple(RawSample(int(t), 50.0 + (i % 9) * 0.5, None, 25.0, None)
                    for i, t in enumerate(timestamps))
    return DeviceTrace(device_id, samples)


def test_01_filter_rejects_exactly_the_violating_traces():
    traces = [steady_trace(f"good{i}", range(0, 29 * DAY + 1, 600))
              for i in range(6)]
    traces.append(steady_trace("span27", range(0, 27 * DAY + 1, 600)))
    traces.append(steady_trace("sparse", range(0, 2796 * 896, 896)))
    traces.append(steady_trace(
        "gap25h", list(range(0, 864000, 600))
        + list(range(863400 + 25 * 3600, 29 * DAY + 1, 600))))
    segments, t = [], 0
    for _ in range(17):                      # 16 inter-segment gaps of 6h10m
        segments.extend(range(t, t + 240 * 600, 600))
        t = segments[-1] + 6 * 3600 + 600
    traces.append(steady_trace("gaps16", segments))

    t0 = time.perf_counter()
    accepted, rejected = filter_traces(traces)
    elapsed = time.perf_counter() - t0

    assert [tr.device_id for tr in accepted] == [f"good{i}" for i in range(6)]
    assert rejected == {"span27": REASON_SPAN, "sparse": REASON_SPARSE,
                        "gap25h": REASON_GAP, "gaps16": REASON_LARGE_GAPS}
    assert elapsed < 1.0
    print(f"\n[PASS] trace filter rejects the 4 violators with correct "
          f"reasons ({elapsed:.3f}s)")


def test_02_interpolator_matches_reference_pchip_without_overshoot():
    rng = np.random.default_rng(20260814)
    t0 = time.perf_counter()
    for case in range(50):
        n = int(rng.integers(10, 201))
        x = np.cumsum(rng.uniform(300.0, 7200.0, n)) + 1000.0
        steps = rng.uniform(0.0, 3.0, n - 1)
        steps[rng.random(n - 1) < 0.2] = 0.0       # flat stretches
        sign = 1.0 if case % 2 == 0 else -1.0
        y = 50.0 + sign * np.concatenate([[0.0], np.cumsum(steps)])
        ours = MonotoneCubicInterpolator(x, y)
        grid = np.arange(x[0], x[-1], 600.0)
        got = ours(grid)
        assert np.allclose(got, PchipInterpolator(x, y)(grid), atol=1e-6)
        assert np.allclose(ours(x), y, atol=1e-9)
        hi = np.searchsorted(x, grid, side="right") - 1
        lo_y, hi_y = np.minimum(y[hi], y[hi + 1]), np.maximum(y[hi], y[hi + 1])
        assert np.all(got >= lo_y - 1e-9) and np.all(got <= hi_y + 1e-9)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(f"\n[PASS] interpolation matches scipy PCHIP on 50 monotone series "
          f"within 1e-6, no overshoot ({elapsed:.2f}s)")


def test_03_timezone_augmentation_yields_2400_clients():
    base = steady_trace("proto", range(0, 29 * DAY + 1, 600))
    traces = [DeviceTrace(f"dev{i:03d}", base.samples) for i in range(100)]
    accepted, rejected = filter_traces(traces)
    assert len(accepted) == 100 and not rejected
    clients = augment_timezones(accepted, shifts=23)
    assert len(clients) == 2400
    assert len({tr.device_id for tr in clients}) == 2400
    print("\n[PASS] 100 accepted traces x 23 shifts expand to exactly "
          "2400 clients")


def test_04_cost_order_ranks_low_latency_cores_above_low_power():
    soc = pixel3ish()
    by_cost = sorted(enumerate_choices(soc), key=cost_key, reverse=True)
    assert [choice_label(c, soc) for c in by_cost] == \
        ["4567", "456", "45", "4", "0123", "012", "01", "0"]

    sd = sd865ish()
    labels = {choice_label(c, sd): c for c in enumerate_choices(sd)}
    assert cost_key(labels["47"]) > cost_key(labels["45"])
    print("\n[PASS] cost order descends 4567>456>45>4>0123>012>01>0; "
          "prime beats an extra low-latency core")


def test_05_pruning_keeps_exactly_the_pareto_frontier():
    soc = pixel3ish()
    choices = enumerate_choices(soc)

    compute_bound = make_workload(0.0)
    kept = prune_dominated(simulate_profile(compute_bound, c, soc)
                           for c in choices)
    assert len(kept) == 8

    memory_bound = make_workload(7.6666667, base=6.0, lp_speed=6.6666667)
    ladder = prune_dominated(simulate_profile(memory_bound, c, soc)
                             for c in choices)
    ladder_labels = [choice_label(p.choice, soc) for p in ladder]
    assert "4567" not in ladder_labels
    assert ladder_labels == ["4", "0"]

    rng = np.random.default_rng(5)
    pool = enumerate_choices(sd865ish())
    t0 = time.perf_counter()
    for _ in range(1000):
        k = int(rng.integers(1, 12))
        idx = rng.choice(len(pool), size=min(k, len(pool)), replace=False)
        profiles = [PerfProfile.from_latency_power(
            pool[i], float(rng.uniform(0.5, 20.0)), float(rng.uniform(0.3, 8.0)))
            for i in idx]
        kept = prune_dominated(profiles)
        assert [p.choice for p in kept] == \
            [p.choice for p in oracle_frontier(profiles)]
        assert prune_dominated(kept) == kept
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(f"\n[PASS] pruning = brute-force Pareto frontier on 1000 random "
          f"sets, idempotent ({elapsed:.2f}s)")


def test_06_average_power_hand_value_and_partition_additivity():
    interval = BatteryInterval(v_start=4.0, v_end=3.9, delta_t=426.6,
                               capacity_coulombs=10800.0)
    assert average_power(interval) == pytest.approx(1.0, abs=1e-6)

    rng = np.random.default_rng(6)
    t, chain = 0.0, []
    for _ in range(40):
        dt = float(rng.uniform(60.0, 900.0))
        chain.append(BatteryInterval(4.1, 3.8, dt, 10800.0, t_start=t))
        t += dt + float(rng.uniform(0.0, 300.0))
    whole = interval_energy_sum(chain, (0.0, t))
    for _ in range(100):
        cuts = np.sort(rng.uniform(0.0, t, size=int(rng.integers(1, 12))))
        edges = [0.0, *cuts.tolist(), t]
        pieces = sum(interval_energy_sum(chain, (a, b))
                     for a, b in zip(edges, edges[1:]))
        assert pieces == pytest.approx(whole, abs=1e-9)
    print("\n[PASS] average power = 1.000 W on the hand case; energy sums "
          "are partition-additive to 1e-9")


def test_07_loan_blocks_borderline_device_and_never_goes_negative():
    per_percent = joules_per_battery_percent(10800.0, 4.0)
    ledger = EnergyLedger(daily_budget_joules=500.0, nominal_voltage=4.0,
                          capacity_coulombs=10800.0, critical_level_percent=20.0,
                          loan_joules=2.0 * per_percent)
    assert not is_available(ledger, 21.0)

    rng = np.random.default_rng(7)
    for _ in range(10_000):
        ledger = EnergyLedger(daily_budget_joules=float(rng.uniform(50, 900)),
                              nominal_voltage=3.85, capacity_coulombs=10440.0)
        day = 0
        for _ in range(int(rng.integers(1, 9))):
            if rng.random() < 0.6:
                accrue_loan(ledger, float(rng.uniform(0.0, 400.0)))
            else:
                day += int(rng.integers(1, 4))
                settle_day(ledger, day)
            assert ledger.loan_joules >= 0.0
    print("\n[PASS] 21% - 2% loan is unavailable at critical 20%; loan "
          "non-negative over 10,000 random sequences")


def test_08_control_loop_downgrades_off_contended_cores_then_recovers():
    soc = pixel3ish()
    workload = make_workload(0.2)          # all 8 choices on the ladder
    policy = EnginePolicy()
    state = EngineState.fresh([])
    install_profiles(state, [simulate_profile(workload, c, soc)
                             for c in enumerate_choices(soc)])
    assert len(state.pruned_ladder) == 8
    contended = (CoreClass.LOW_LATENCY, CoreClass.PRIME)

    downgrade_steps, costs = [], [cost_key(current_choice(state)[0])]
    step = 0
    while any(current_choice(state)[0].uses(k) for k in contended):
        choice, profile = current_choice(state)
        step += 1
        assert step < 100
        action = control_loop_step(
            state, 2.0 * profile.step_latency_seconds, policy)
        if action is ControlAction.DOWNGRADE:
            downgrade_steps.append(step)
            costs.append(cost_key(current_choice(state)[0]))

    budget = policy.downgrade_window + 2
    gaps = np.diff([0, *downgrade_steps])
    assert len(downgrade_steps) >= 1 and np.all(gaps <= budget)
    assert all(b < a for a, b in zip(costs, costs[1:]))
    settled, settled_profile = current_choice(state)
    assert not any(settled.uses(k) for k in contended)

    for recovery in range(1, policy.upgrade_cooldown + 3):
        action = control_loop_step(
            state, settled_profile.step_latency_seconds, policy)
        if action is ControlAction.UPGRADE:
            break
    assert action is ControlAction.UPGRADE
    assert recovery <= policy.upgrade_cooldown + 2
    assert cost_key(current_choice(state)[0]) > cost_key(settled)
    print(f"\n[PASS] sustained 2.0x interference forces downgrades (each "
          f"within {budget} steps, cost strictly falling) onto low-power "
          f"cores; calm traffic upgrades back within "
          f"{policy.upgrade_cooldown + 2} steps")


def test_09_fedavg_matches_weighted_mean_and_analytic_gradients_hold():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        k, dim = int(rng.integers(1, 9)), int(rng.integers(3, 51))
        updates = [(rng.normal(size=dim), int(rng.integers(1, 500)))
                   for _ in range(k)]
        got = fedavg_aggregate(updates)
        want = np.average(np.stack([u for u, _ in updates]), axis=0,
                          weights=[n for _, n in updates])
        assert np.allclose(got, want, atol=1e-12)

    n_classes, n_features = 5, 12
    means = make_class_means(rng, n_classes, n_features, 2.0)
    x, y = make_shard(rng, means, 64, 0.5, 1.0)
    params = rng.normal(scale=0.3, size=param_count(n_classes, n_features))
    _, grad = loss_and_grad(params, x, y, n_classes)
    eps = 1e-6
    for i in rng.choice(params.size, size=24, replace=False):
        probe = params.copy()
        probe[i] += eps
        up, _ = loss_and_grad(probe, x, y, n_classes)
        probe[i] -= 2 * eps
        down, _ = loss_and_grad(probe, x, y, n_classes)
        numeric = (up - down) / (2 * eps)
        assert abs(numeric - grad[i]) <= 1e-5 * max(1.0, abs(numeric))
    print("\n[PASS] FedAvg equals the centralized weighted mean to 1e-12; "
          "gradients match finite differences to 1e-5")


def test_10_adaptive_scheduling_beats_greedy_baseline_at_desk_scale():
    soc = pixel3ish()
    workload = make_workload(7.6666667, base=6.0, lp_speed=6.6666667)
    by_label = {choice_label(c, soc): c for c in enumerate_choices(soc)}
    fast = simulate_profile(workload, by_label["4"], soc)
    greedy = simulate_profile(workload, by_label["4567"], soc)
    assert greedy.step_latency_seconds / fast.step_latency_seconds == \
        pytest.approx(6.0, rel=1e-6)

    corpus = desk_corpus(200)
    config = desk_config()
    t0 = time.perf_counter()
    baseline = run_simulation(corpus, config, SchedulingPolicy.GREEDY_BASELINE)
    adaptive = run_simulation(corpus, config, SchedulingPolicy.ADAPTIVE)
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0

    tta = time_to_accuracy(adaptive.reports, baseline.reports)
    assert tta.speedup >= 3.0

    paired = list(zip(adaptive.reports, baseline.reports))
    assert all(a.online >= b.online for a, b in paired)
    first20 = [r.online for r in baseline.reports[:20]]
    assert all(later <= earlier for earlier, later in zip(first20, first20[1:]))

    adaptive_j = energy_to_target(adaptive.reports, tta.target_accuracy)
    baseline_j = energy_to_target(baseline.reports, tta.target_accuracy)
    assert adaptive_j < baseline_j
    print(f"\n[PASS] 200-client desk run: {tta.speedup:.1f}x time-to-target "
          f"speedup (>=3x), online count never below baseline, baseline "
          f"non-increasing over rounds 1-20, energy to target "
          f"{adaptive_j:.0f} J vs {baseline_j:.0f} J ({elapsed:.1f}s)")


def test_11_full_pipeline_reruns_are_byte_identical(tmp_path):
    def run_pipeline(root):
        root.mkdir()
        write_raw_traces(root / "raw.csv")
        write_config(root / "config.json")
        assert main(["preprocess", "--input", str(root / "raw.csv"),
                     "--out", str(root / "corpus"), "--shifts", "1"]) == 0
        assert main(["profile", "--config", str(root / "config.json"),
                     "--out", str(root / "profiles.json")]) == 0
        assert main(["simulate", "--config", str(root / "config.json"),
                     "--out", str(root / "sim")]) == 0
        assert main(["report", str(root / "sim"),
                     "--out", str(root / "rep")]) == 0
        return {p.relative_to(root): p.read_bytes()
                for p in sorted(root.rglob("*")) if p.is_file()}

    first = run_pipeline(tmp_path / "run1")
    second = run_pipeline(tmp_path / "run2")
    assert list(first) == list(second)
    for rel in first:
        assert first[rel] == second[rel], f"{rel} differs between reruns"
    assert any(p.name == "compare.csv" for p in first)
    print(f"\n[PASS] two end-to-end pipeline runs produced byte-identical "
          f"outputs ({len(first)} files)")
