"""simctl: preprocess traces, profile execution choices, simulate, report.

Exit codes: 0 on success, 1 when a simulation invariant is violated, 2 for
usage or configuration errors. All outputs are deterministic: running a
command twice over the same inputs produces byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .config import (ConfigError, ExperimentConfig, KNOWN_POLICIES,
                     POLICY_ADAPTIVE, POLICY_GREEDY, load_config)
from .flsim import (RoundReport, SimulationResult, energy_to_target,
                    run_simulation, time_to_accuracy)
from .soc import choice_label, cost_key, enumerate_choices, prune_dominated, simulate_profile
from .trace import (FilterCriteria, TraceFormatError, augment_timezones,
                    derive_battery_state, filter_traces, pchip_resample,
                    read_corpus_csv, read_trace_csv, write_corpus_csv,
                    write_rejections_csv)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# preprocess

def cmd_preprocess(args: argparse.Namespace) -> int:
    criteria = FilterCriteria(
        min_period_days=args.min_period_days,
        min_avg_samples_per_day=args.min_samples_per_day,
        max_gap_hours=args.max_gap_hours,
        large_gap_hours=args.large_gap_hours,
        max_large_gaps=args.max_large_gaps,
    )
    traces = read_trace_csv(args.input)
    accepted, rejected = filter_traces(traces, criteria)
    resampled = [derive_battery_state(pchip_resample(t, args.grid_seconds))
                 for t in accepted]
    corpus = augment_timezones(resampled, shifts=args.shifts)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus_csv(corpus, out_dir / "corpus.csv")
    write_rejections_csv(rejected, out_dir / "rejections.csv")
    print(f"parsed {len(traces)} traces: {len(accepted)} accepted, "
          f"{len(rejected)} rejected; corpus has {len(corpus)} clients")
    return 0


# ---------------------------------------------------------------------------
# profile

def _profile_rows(config: ExperimentConfig) -> list[dict]:
    rows: list[dict] = []
    for sc in config.socs:
        soc = sc.to_spec()
        choices = enumerate_choices(soc)
        # rank 0 = costliest choice on this SoC
        by_cost = sorted(choices, key=cost_key, reverse=True)
        rank = {choice: i for i, choice in enumerate(by_cost)}
        for wc in config.workloads:
            workload = config.build_workload(wc.name, sc.name)
            profiles = [simulate_profile(workload, choice, soc) for choice in choices]
            ladder = {p.choice for p in prune_dominated(profiles)}
            for p in sorted(profiles, key=lambda p: rank[p.choice]):
                rows.append({
                    "soc": sc.name,
                    "workload": wc.name,
                    "choice": choice_label(p.choice, soc),
                    "low_power": p.choice.low_power,
                    "low_latency": p.choice.low_latency,
                    "prime": p.choice.prime,
                    "step_latency_s": p.step_latency_seconds,
                    "avg_power_w": p.avg_power_watts,
                    "energy_per_step_j": p.energy_per_step_joules,
                    "cost_rank": rank[p.choice],
                    "on_ladder": p.choice in ladder,
                })
    return rows


def cmd_profile(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    rows = _profile_rows(config)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    _json_dump({"profiles": rows}, out)
    print(f"profiled {len(rows)} (soc, workload, choice) combinations -> {out}")
    return 0


# ---------------------------------------------------------------------------
# simulate

def _write_rounds_csv(reports: list[RoundReport], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("round", "sim_time_s", "selected", "online",
                         "completed", "duration_s", "energy_j", "accuracy"))
        for r in reports:
            writer.writerow((r.round_index, _fmt(r.sim_time_seconds), r.selected,
                             r.online, r.completed, _fmt(r.round_duration_seconds),
                             _fmt(r.round_energy_joules), _fmt(r.eval_accuracy)))


def _write_clients_csv(result: SimulationResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("round", "device_id", "choice", "steps", "wall_s",
                         "joules", "completed"))
        for rec in result.client_records:
            writer.writerow((rec.round_index, rec.device_id, rec.choice,
                             rec.steps, _fmt(rec.wall_seconds), _fmt(rec.joules),
                             int(rec.completed)))


def _or_null(x: float) -> float | None:
    return None if not math.isfinite(x) else x


def _summary(config: ExperimentConfig,
             results: dict[str, SimulationResult]) -> dict:
    summary: dict = {"seed": config.seed, "policies": sorted(results)}
    for name, result in results.items():
        summary[name] = {
            "rounds": len(result.reports),
            "final_accuracy": result.final_accuracy,
            "total_energy_joules": result.total_energy_joules,
            "total_time_s": result.reports[-1].sim_time_seconds if result.reports else 0.0,
        }
    if POLICY_ADAPTIVE in results and POLICY_GREEDY in results:
        tta = time_to_accuracy(results[POLICY_ADAPTIVE].reports,
                               results[POLICY_GREEDY].reports)
        e_adaptive = energy_to_target(results[POLICY_ADAPTIVE].reports,
                                      tta.target_accuracy)
        e_greedy = energy_to_target(results[POLICY_GREEDY].reports,
                                    tta.target_accuracy)
        efficiency = (e_greedy / e_adaptive
                      if math.isfinite(e_greedy) and math.isfinite(e_adaptive)
                      and e_adaptive > 0 else None)
        winner = {POLICY_ADAPTIVE: "a", POLICY_GREEDY: "b"}
        summary.update({
            "target_accuracy": tta.target_accuracy,
            "time_to_target_s": {POLICY_ADAPTIVE: _or_null(tta.seconds_a),
                                 POLICY_GREEDY: _or_null(tta.seconds_b)},
            "speedup": tta.speedup,
            "winner": next((p for p, tag in winner.items() if tag == tta.winner), None),
            "energy_to_target_j": {POLICY_ADAPTIVE: _or_null(e_adaptive),
                                   POLICY_GREEDY: _or_null(e_greedy)},
            "energy_efficiency": efficiency,
        })
    return summary


def cmd_simulate(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    config = load_config(config_path)
    if config.corpus is None:
        raise ConfigError("config.corpus: missing (simulate needs a corpus)")
    corpus_path = Path(config.corpus)
    if not corpus_path.is_absolute():
        corpus_path = config_path.parent / corpus_path
    if not corpus_path.exists():
        raise ConfigError(f"corpus not found: {corpus_path}")
    corpus = read_corpus_csv(corpus_path)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[str, SimulationResult] = {}
    for policy in config.policies:
        result = run_simulation(corpus, config, policy)
        results[policy] = result
        policy_dir = out_dir / policy
        policy_dir.mkdir(exist_ok=True)
        _write_rounds_csv(result.reports, policy_dir / "rounds.csv")
        _write_clients_csv(result, policy_dir / "clients.csv")
        print(f"{policy}: {len(result.reports)} rounds, "
              f"final accuracy {result.final_accuracy:.4f}, "
              f"{result.total_energy_joules:.1f} J")

    _json_dump(_summary(config, results), out_dir / "summary.json")
    # Echo the exact config bytes so report can check run compatibility.
    (out_dir / "config.json").write_bytes(config_path.read_bytes())
    return 0


# ---------------------------------------------------------------------------
# report

def cmd_report(args: argparse.Namespace) -> int:
    dirs = [Path(d) for d in args.dirs]
    for d in dirs:
        if not (d / "summary.json").exists():
            raise ConfigError(f"{d}: no summary.json (not a simulate output dir)")
    config_bytes = [(d / "config.json").read_bytes() for d in dirs]
    if any(b != config_bytes[0] for b in config_bytes[1:]):
        raise ConfigError("report inputs were produced with different configs")

    out_dir = Path(args.out) if args.out else dirs[0]
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for d in dirs:
        summary = json.loads((d / "summary.json").read_text())
        rows.append((d.name, summary))

    with open(out_dir / "compare.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("run", "target_accuracy", "baseline_time_s",
                         "adaptive_time_s", "speedup", "energy_efficiency"))
        for name, summary in rows:
            tt = summary.get("time_to_target_s", {})
            writer.writerow((
                name,
                _fmt(summary["target_accuracy"]) if "target_accuracy" in summary else "",
                _fmt(tt[POLICY_GREEDY]) if tt.get(POLICY_GREEDY) is not None else "",
                _fmt(tt[POLICY_ADAPTIVE]) if tt.get(POLICY_ADAPTIVE) is not None else "",
                _fmt(summary["speedup"]) if summary.get("speedup") is not None else "",
                _fmt(summary["energy_efficiency"]) if summary.get("energy_efficiency") is not None else "",
            ))

    acc_path = out_dir / "accuracy_vs_time.csv"
    online_path = out_dir / "online_vs_round.csv"
    with open(acc_path, "w", newline="") as acc_fh, \
            open(online_path, "w", newline="") as online_fh:
        acc = csv.writer(acc_fh, lineterminator="\n")
        online = csv.writer(online_fh, lineterminator="\n")
        acc.writerow(("run", "policy", "round", "sim_time_s", "accuracy"))
        online.writerow(("run", "policy", "round", "online"))
        for d in dirs:
            for policy in KNOWN_POLICIES:
                rounds_csv = d / policy / "rounds.csv"
                if not rounds_csv.exists():
                    continue
                with open(rounds_csv, newline="") as fh:
                    for row in csv.DictReader(fh):
                        acc.writerow((d.name, policy, row["round"],
                                      row["sim_time_s"], row["accuracy"]))
                        online.writerow((d.name, policy, row["round"], row["online"]))

    header = f"{'run':<20} {'target':>8} {'baseline_s':>12} {'adaptive_s':>12} {'speedup':>8} {'energy_x':>9}"
    print(header)
    for name, summary in rows:
        tt = summary.get("time_to_target_s", {})

        def cell(value, width):
            return f"{value:>{width}.3f}" if isinstance(value, (int, float)) else " " * (width - 1) + "-"

        print(f"{name:<20} {cell(summary.get('target_accuracy'), 8)} "
              f"{cell(tt.get(POLICY_GREEDY), 12)} {cell(tt.get(POLICY_ADAPTIVE), 12)} "
              f"{cell(summary.get('speedup'), 8)} {cell(summary.get('energy_efficiency'), 9)}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simctl",
        description="Trace-driven on-device training simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("preprocess", help="filter, resample and augment raw traces")
    pre.add_argument("--input", required=True, help="raw trace CSV")
    pre.add_argument("--out", required=True, help="output directory")
    pre.add_argument("--shifts", type=int, default=23,
                     help="time-zone copies per trace (default 23)")
    pre.add_argument("--grid-seconds", type=int, default=600)
    defaults = FilterCriteria()
    pre.add_argument("--min-period-days", type=float, default=defaults.min_period_days)
    pre.add_argument("--min-samples-per-day", type=float,
                     default=defaults.min_avg_samples_per_day)
    pre.add_argument("--max-gap-hours", type=float, default=defaults.max_gap_hours)
    pre.add_argument("--large-gap-hours", type=float, default=defaults.large_gap_hours)
    pre.add_argument("--max-large-gaps", type=int, default=defaults.max_large_gaps)
    pre.set_defaults(func=cmd_preprocess)

    prof = sub.add_parser("profile", help="profile execution choices per SoC/workload")
    prof.add_argument("--config", required=True)
    prof.add_argument("--out", required=True, help="profile database JSON")
    prof.set_defaults(func=cmd_profile)

    sim = sub.add_parser("simulate", help="run the federated simulation")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="compare simulate output directories")
    rep.add_argument("dirs", nargs="+", help="simulate output directories")
    rep.add_argument("--out", default=None,
                     help="directory for compare/plot CSVs (default: first dir)")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
