"""Battery energy accounting.

Power over a battery interval that drains exactly one percentage point:

    average_power = (v_start + v_end) / 2 * (capacity_coulombs / 100) / delta_t

Training energy is tracked as a loan against the battery: joules accrue as
training runs and a fixed daily budget is repaid at each local midnight.
A device is available only while its trace level minus the loan (expressed
in battery percent) stays above the critical level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

VOLTAGE_MIN, VOLTAGE_MAX = 2.5, 5.0  # sane Li-ion terminal range


@dataclass(frozen=True)
class BatteryInterval:
    """One observed 1%-drop interval. t_start places it on the trace clock."""
    v_start: float
    v_end: float
    delta_t: float               # seconds
    capacity_coulombs: float
    t_start: float = 0.0

    def __post_init__(self) -> None:
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        for v in (self.v_start, self.v_end):
            if not VOLTAGE_MIN < v < VOLTAGE_MAX:
                raise ValueError(f"voltage {v} outside ({VOLTAGE_MIN}, {VOLTAGE_MAX})")
        if self.capacity_coulombs <= 0:
            raise ValueError("capacity must be positive")

    @property
    def t_end(self) -> float:
        return self.t_start + self.delta_t


def average_power(interval: BatteryInterval) -> float:
    """Watts drawn while the interval drained one battery percent."""
    charge = interval.capacity_coulombs / 100.0
    return (interval.v_start + interval.v_end) / 2.0 * charge / interval.delta_t


def interval_energy_sum(intervals: Sequence[BatteryInterval],
                        window: tuple[float, float]) -> float:
    """Energy drawn within a time window, summed piecewise over intervals.

    Intervals must be time-ordered and non-overlapping; each contributes its
    average power times the length of its intersection with the window.
    """
    start, end = window
    if end < start:
        raise ValueError("window end precedes start")
    total = 0.0
    prev_end = None
    for interval in intervals:
        if prev_end is not None and interval.t_start < prev_end:
            raise ValueError("intervals must be non-overlapping and time-ordered")
        prev_end = interval.t_end
        overlap = min(end, interval.t_end) - max(start, interval.t_start)
        if overlap > 0:
            total += average_power(interval) * overlap
    return total


def joules_per_battery_percent(capacity_coulombs: float, voltage: float) -> float:
    """Energy stored in one battery percent at the given terminal voltage."""
    return capacity_coulombs * voltage / 100.0


def level_drop_energy(drop_percent: float, capacity_coulombs: float,
                      voltage: float) -> float:
    """Energy corresponding to a level drop, at a fixed nominal voltage."""
    if drop_percent < 0:
        raise ValueError("drop_percent must be non-negative")
    return drop_percent * joules_per_battery_percent(capacity_coulombs, voltage)


@dataclass
class EnergyLedger:
    daily_budget_joules: float
    nominal_voltage: float
    capacity_coulombs: float
    critical_level_percent: float = 20.0
    loan_joules: float = 0.0
    last_settlement_day: int = 0

    def __post_init__(self) -> None:
        if self.daily_budget_joules < 0 or self.loan_joules < 0:
            raise ValueError("budget and loan must be non-negative")
        if self.capacity_coulombs <= 0 or self.nominal_voltage <= 0:
            raise ValueError("capacity and voltage must be positive")
        if not 0 <= self.critical_level_percent < 100:
            raise ValueError("critical level must be in [0, 100)")


def accrue_loan(ledger: EnergyLedger, training_energy_joules: float) -> EnergyLedger:
    """Add training energy to the outstanding loan."""
    if training_energy_joules < 0:
        raise ValueError("training energy must be non-negative")
    ledger.loan_joules += training_energy_joules
    return ledger


def settle_day(ledger: EnergyLedger, day_index: int) -> EnergyLedger:
    """Repay one daily budget per elapsed day; the loan never goes negative."""
    if day_index <= ledger.last_settlement_day:
        raise ValueError(
            f"day_index {day_index} not after last settlement {ledger.last_settlement_day}")
    for _ in range(day_index - ledger.last_settlement_day):
        ledger.loan_joules = max(0.0, ledger.loan_joules - ledger.daily_budget_joules)
    ledger.last_settlement_day = day_index
    return ledger


def loan_percent(ledger: EnergyLedger) -> float:
    """Outstanding loan expressed in battery percentage points."""
    return ledger.loan_joules / joules_per_battery_percent(
        ledger.capacity_coulombs, ledger.nominal_voltage)


def is_available(ledger: EnergyLedger, trace_level_percent: float) -> bool:
    """True while the loan-adjusted level stays strictly above critical."""
    return trace_level_percent - loan_percent(ledger) > ledger.critical_level_percent
