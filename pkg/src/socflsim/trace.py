"""Battery trace ingestion, quality filtering, resampling and augmentation.

Raw traces are irregular per-device logs of battery level, charge state,
temperature and screen state. The preprocessing pipeline is:

    parse -> filter -> pchip_resample -> derive_battery_state -> augment

Every step is pure and deterministic, so running the pipeline twice over the
same input produces byte-identical corpora.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .pchip import MonotoneCubicInterpolator

TRACE_COLUMNS = ("device_id", "timestamp", "battery_level",
                 "battery_state", "temperature", "screen_on")
DEFAULT_GRID_SECONDS = 600
DEFAULT_TEMPERATURE_C = 30.0

# battery_state encoding: sign of the level trend
CHARGING = 1
STEADY = 0
DISCHARGING = -1

# rejection reasons, in the order the criteria are checked
REASON_TOO_SHORT = "too_short"
REASON_SPAN = "span_too_short"
REASON_SPARSE = "sampling_too_sparse"
REASON_GAP = "gap_too_large"
REASON_LARGE_GAPS = "too_many_large_gaps"


class TraceFormatError(ValueError):
    """Malformed trace CSV; the message names the offending line."""


@dataclass(frozen=True)
class RawSample:
    timestamp: int                     # unix seconds
    battery_level: float               # percent in [0, 100]
    battery_state: int | None = None   # -1 discharging, 0 steady, 1 charging
    temperature: float | None = None   # celsius
    screen_on: bool | None = None


@dataclass(frozen=True)
class DeviceTrace:
    device_id: str
    samples: tuple[RawSample, ...]
    grid_seconds: int = 0  # 0 = raw/irregular, >0 = uniform grid spacing

    def __post_init__(self) -> None:
        ts = [s.timestamp for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"{self.device_id}: timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def first_timestamp(self) -> int:
        return self.samples[0].timestamp

    @property
    def last_timestamp(self) -> int:
        return self.samples[-1].timestamp

    @property
    def span_seconds(self) -> int:
        return self.last_timestamp - self.first_timestamp

    @property
    def span_days(self) -> float:
        return self.span_seconds / 86400.0

    @cached_property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.samples], dtype=float)

    @cached_property
    def levels(self) -> np.ndarray:
        return np.array([s.battery_level for s in self.samples], dtype=float)

    def covers(self, t: float) -> bool:
        return self.first_timestamp <= t <= self.last_timestamp

    def sample_at(self, t: float) -> RawSample | None:
        """Latest sample at or before t (zero-order hold); None if t precedes the trace."""
        if not self.samples or t < self.first_timestamp:
            return None
        if self.grid_seconds:
            idx = min(int((t - self.first_timestamp) // self.grid_seconds),
                      len(self.samples) - 1)
        else:
            idx = int(np.searchsorted(self.timestamps, t, side="right")) - 1
        return self.samples[idx]


@dataclass(frozen=True)
class FilterCriteria:
    min_period_days: float = 28.0        # minimum span between first and last sample
    min_avg_samples_per_day: float = 100.0
    max_gap_hours: float = 24.0          # largest tolerated adjacent gap
    large_gap_hours: float = 6.0         # gaps above this count toward the cap below
    max_large_gaps: int = 15

    def __post_init__(self) -> None:
        if min(self.min_period_days, self.min_avg_samples_per_day,
               self.max_gap_hours, self.large_gap_hours) <= 0:
            raise ValueError("filter thresholds must be positive")
        if self.large_gap_hours > self.max_gap_hours:
            raise ValueError("large_gap_hours cannot exceed max_gap_hours")
        if self.max_large_gaps < 0:
            raise ValueError("max_large_gaps must be non-negative")


# ---------------------------------------------------------------------------
# parsing

def _parse_row(row: list[str], lineno: int) -> tuple[str, RawSample]:
    if len(row) != len(TRACE_COLUMNS):
        raise TraceFormatError(f"line {lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
    device_id, ts_s, level_s, state_s, temp_s, screen_s = (f.strip() for f in row)
    if not device_id:
        raise TraceFormatError(f"line {lineno}: empty device_id")
    try:
        ts = int(ts_s)
    except ValueError:
        raise TraceFormatError(f"line {lineno}: bad timestamp {ts_s!r}") from None
    try:
        level = float(level_s)
    except ValueError:
        raise TraceFormatError(f"line {lineno}: bad battery_level {level_s!r}") from None
    if not np.isfinite(level) or not 0.0 <= level <= 100.0:
        raise TraceFormatError(f"line {lineno}: battery_level {level_s} outside [0, 100]")
    state: int | None = None
    if state_s:
        try:
            state = int(state_s)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: bad battery_state {state_s!r}") from None
        if state not in (-1, 0, 1):
            raise TraceFormatError(f"line {lineno}: battery_state {state} not in {{-1, 0, 1}}")
    temp: float | None = None
    if temp_s:
        try:
            temp = float(temp_s)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: bad temperature {temp_s!r}") from None
    screen: bool | None = None
    if screen_s:
        if screen_s not in ("0", "1"):
            raise TraceFormatError(f"line {lineno}: bad screen_on {screen_s!r}")
        screen = screen_s == "1"
    return device_id, RawSample(ts, level, state, temp, screen)


def parse_traces(stream: Iterable[str] | IO[str]) -> list[DeviceTrace]:
    """Parse trace CSV into per-device traces sorted by device_id.

    Samples are sorted by timestamp within each device; duplicate timestamps
    keep the last row in file order.
    """
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(f.strip() for f in header) != TRACE_COLUMNS:
        raise TraceFormatError(f"line 1: header must be {','.join(TRACE_COLUMNS)}")
    by_device: dict[str, list[RawSample]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        device_id, sample = _parse_row(row, lineno)
        by_device.setdefault(device_id, []).append(sample)

    traces = []
    for device_id in sorted(by_device):
        samples = sorted(by_device[device_id], key=lambda s: s.timestamp)
        deduped: list[RawSample] = []
        for s in samples:  # stable sort: last entry per timestamp wins
            if deduped and deduped[-1].timestamp == s.timestamp:
                deduped[-1] = s
            else:
                deduped.append(s)
        traces.append(DeviceTrace(device_id, tuple(deduped)))
    return traces


# ---------------------------------------------------------------------------
# filtering

def _rejection_reason(trace: DeviceTrace, criteria: FilterCriteria) -> str | None:
    if len(trace) < 2:
        return REASON_TOO_SHORT
    if trace.span_days < criteria.min_period_days:
        return REASON_SPAN
    if len(trace) / trace.span_days < criteria.min_avg_samples_per_day:
        return REASON_SPARSE
    gaps = np.diff(trace.timestamps)
    if gaps.max() > criteria.max_gap_hours * 3600.0:
        return REASON_GAP
    if int(np.sum(gaps > criteria.large_gap_hours * 3600.0)) > criteria.max_large_gaps:
        return REASON_LARGE_GAPS
    return None


def filter_traces(
    traces: Sequence[DeviceTrace],
    criteria: FilterCriteria = FilterCriteria(),
) -> tuple[list[DeviceTrace], dict[str, str]]:
    """Split traces into (accepted, rejection report by device_id).

    A trace failing several criteria reports the first failure in the
    documented order: too_short, span, sampling rate, max gap, large gaps.
    """
    accepted: list[DeviceTrace] = []
    rejected: dict[str, str] = {}
    for trace in traces:
        reason = _rejection_reason(trace, criteria)
        if reason is None:
            accepted.append(trace)
        else:
            rejected[trace.device_id] = reason
    return accepted, rejected


# ---------------------------------------------------------------------------
# resampling

def pchip_resample(trace: DeviceTrace, grid_seconds: int = DEFAULT_GRID_SECONDS) -> DeviceTrace:
    """Resample battery level onto a uniform grid with monotone cubic interpolation.

    The grid starts at the first input timestamp and steps by grid_seconds up
    to the last input timestamp. Levels are clamped to [0, 100]; battery_state
    is dropped (re-derive it from the resampled levels). Temperature is
    linearly interpolated over the samples that have it; screen_on follows the
    nearest earlier sample that has it.
    """
    if grid_seconds <= 0:
        raise ValueError("grid_seconds must be positive")
    if len(trace) < 2:
        raise ValueError(f"insufficient_samples: {trace.device_id} has {len(trace)} samples")
    interp = MonotoneCubicInterpolator(trace.timestamps, trace.levels)
    n_points = trace.span_seconds // grid_seconds + 1
    grid = trace.first_timestamp + np.arange(n_points, dtype=np.int64) * grid_seconds
    levels = np.clip(interp(grid.astype(float)), 0.0, 100.0)

    temp_pts = [(s.timestamp, s.temperature) for s in trace.samples if s.temperature is not None]
    if temp_pts:
        tx, ty = (np.array(v, dtype=float) for v in zip(*temp_pts))
        temps: list[float | None] = list(np.interp(grid.astype(float), tx, ty))
    else:
        temps = [None] * len(grid)

    screen_pts = [(s.timestamp, s.screen_on) for s in trace.samples if s.screen_on is not None]
    if screen_pts:
        sx = np.array([p[0] for p in screen_pts], dtype=float)
        sv = [p[1] for p in screen_pts]
        idx = np.clip(np.searchsorted(sx, grid.astype(float), side="right") - 1, 0, len(sv) - 1)
        screens: list[bool | None] = [sv[i] for i in idx]
    else:
        screens = [None] * len(grid)

    samples = tuple(
        RawSample(int(t), float(v), None, temps[i], screens[i])
        for i, (t, v) in enumerate(zip(grid, levels))
    )
    return DeviceTrace(trace.device_id, samples, grid_seconds)


def derive_battery_state(trace: DeviceTrace) -> DeviceTrace:
    """Fill battery_state from level deltas: sign(level[i] - level[i-1]).

    The first sample copies the second's state (there is no earlier delta).
    The dead band is exactly zero: only an identical level maps to steady.
    """
    n = len(trace)
    if n == 0:
        return trace
    levels = [s.battery_level for s in trace.samples]
    states = [0] * n
    for i in range(1, n):
        delta = levels[i] - levels[i - 1]
        states[i] = CHARGING if delta > 0 else DISCHARGING if delta < 0 else STEADY
    if n > 1:
        states[0] = states[1]
    samples = tuple(
        RawSample(s.timestamp, s.battery_level, states[i], s.temperature, s.screen_on)
        for i, s in enumerate(trace.samples)
    )
    return DeviceTrace(trace.device_id, samples, trace.grid_seconds)


# ---------------------------------------------------------------------------
# augmentation

def augment_timezones(
    traces: Sequence[DeviceTrace],
    shifts: int = 23,
    shift_step_seconds: int = 3600,
) -> list[DeviceTrace]:
    """Expand the corpus with time-shifted copies emulating other time zones.

    Each trace yields itself plus `shifts` copies shifted by k * step seconds
    (k = 1..shifts) with device_id suffixed `+kh`.
    """
    if shifts < 0 or shift_step_seconds <= 0:
        raise ValueError("shifts must be >= 0 and shift_step_seconds positive")
    out: list[DeviceTrace] = []
    for trace in traces:
        out.append(trace)
        for k in range(1, shifts + 1):
            delta = k * shift_step_seconds
            samples = tuple(
                RawSample(s.timestamp + delta, s.battery_level, s.battery_state,
                          s.temperature, s.screen_on)
                for s in trace.samples
            )
            out.append(DeviceTrace(f"{trace.device_id}+{k}h", samples, trace.grid_seconds))
    return out


def timezone_shift_seconds(device_id: str) -> int:
    """Shift encoded in an augmented device id (`...+5h` -> 18000), else 0."""
    base, plus, tail = device_id.rpartition("+")
    if plus and tail.endswith("h") and tail[:-1].isdigit():
        return int(tail[:-1]) * 3600
    return 0


# ---------------------------------------------------------------------------
# CSV i/o

def _format_sample(device_id: str, s: RawSample) -> list[str]:
    return [
        device_id,
        str(s.timestamp),
        f"{s.battery_level:.4f}",
        "" if s.battery_state is None else str(s.battery_state),
        "" if s.temperature is None else f"{s.temperature:.2f}",
        "" if s.screen_on is None else str(int(s.screen_on)),
    ]


def write_corpus_csv(traces: Sequence[DeviceTrace], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for trace in traces:
            for s in trace.samples:
                writer.writerow(_format_sample(trace.device_id, s))


def write_rejections_csv(report: Mapping[str, str], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("device_id", "reason"))
        for device_id in sorted(report):
            writer.writerow((device_id, report[device_id]))


def read_trace_csv(path) -> list[DeviceTrace]:
    with open(path, newline="") as fh:
        return parse_traces(fh)


def read_corpus_csv(path) -> list[DeviceTrace]:
    """Read a preprocessed corpus, inferring the uniform grid spacing."""
    traces = read_trace_csv(path)
    out = []
    for t in traces:
        deltas = np.diff(t.timestamps)
        if len(deltas) and np.all(deltas == deltas[0]):
            t = DeviceTrace(t.device_id, t.samples, int(deltas[0]))
        out.append(t)
    return out
