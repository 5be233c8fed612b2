"""Hourly vitals matrices: resampling, cleaning, imputation, right-aligned
windowing.

Missing cells are NaN until imputation; ``imputed_mask`` marks every cell
whose value was filled rather than observed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .variables import VariableSpec, spec_index

__all__ = ["VitalsMatrix", "InsufficientHistoryError", "resample_hourly",
           "blank_outliers", "impute", "align_right"]

HISTORY_SPAN_HOURS = 30  # window covers the span plus the anchor hour


class InsufficientHistoryError(ValueError):
    pass


@dataclass
class VitalsMatrix:
    """N variables x T hours; ``start_hour`` anchors column 0 in stay time."""

    values: np.ndarray
    imputed_mask: np.ndarray
    start_hour: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.imputed_mask = np.asarray(self.imputed_mask, dtype=bool)
        if self.values.shape != self.imputed_mask.shape:
            raise ValueError("values and imputed_mask shapes differ")

    @classmethod
    def empty(cls, n_variables: int, n_hours: int, start_hour: int = 0) -> "VitalsMatrix":
        return cls(values=np.full((n_variables, n_hours), np.nan),
                   imputed_mask=np.zeros((n_variables, n_hours), dtype=bool),
                   start_hour=start_hour)

    @property
    def n_variables(self) -> int:
        return self.values.shape[0]

    @property
    def n_hours(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "VitalsMatrix":
        return VitalsMatrix(self.values.copy(), self.imputed_mask.copy(), self.start_hour)

    def missing_fraction(self) -> float:
        """Fraction of cells not directly observed (filled or still NaN)."""
        return float((self.imputed_mask | np.isnan(self.values)).mean())

    def validate(self, specs: Sequence[VariableSpec]) -> None:
        if np.isnan(self.values).any():
            raise ValueError("matrix contains missing cells after imputation")
        for i, spec in enumerate(specs):
            lo, hi = spec.plausible_range
            row = self.values[i]
            if (row < lo).any() or (row > hi).any():
                raise ValueError(f"{spec.name}: value outside plausible range")


def resample_hourly(events: Iterable[tuple[str, float, float]],
                    specs: Sequence[VariableSpec],
                    n_hours: Optional[int] = None,
                    start_hour: int = 0) -> VitalsMatrix:
    """Collapse timestamped events onto an hourly grid.

    Events are (variable, hour, value) triples in file order. Multiple
    measurements within one hour collapse to the latest timestamp; exact
    timestamp ties resolve to the later event in input order. Unknown
    variables are ignored here (ingest reports them).
    """
    index = spec_index(specs)
    events = [(index[name], float(hour), float(value))
              for name, hour, value in events if name in index]
    if n_hours is None:
        last = max((hour for _, hour, _ in events), default=float(start_hour))
        n_hours = int(np.floor(last)) - start_hour + 1
    matrix = VitalsMatrix.empty(len(specs), n_hours, start_hour)
    best = np.full((len(specs), n_hours), -np.inf)
    for var, hour, value in events:
        col = int(np.floor(hour)) - start_hour
        if not 0 <= col < n_hours:
            continue
        if hour >= best[var, col]:
            best[var, col] = hour
            matrix.values[var, col] = value
    return matrix


def blank_outliers(matrix: VitalsMatrix, specs: Sequence[VariableSpec]) -> int:
    """Treat values outside the plausible range as missing. Returns count."""
    blanked = 0
    for i, spec in enumerate(specs):
        lo, hi = spec.plausible_range
        row = matrix.values[i]
        bad = ~np.isnan(row) & ((row < lo) | (row > hi))
        row[bad] = np.nan
        blanked += int(bad.sum())
    return blanked


def impute(matrix: VitalsMatrix, specs: Sequence[VariableSpec]) -> VitalsMatrix:
    """Fill missing cells: carry forward, then backward for leading gaps,
    then the normal-range midpoint for entirely missing variables.

    Idempotent; the returned mask marks every filled cell.
    """
    out = matrix.copy()
    for i, spec in enumerate(specs):
        row = out.values[i]
        missing = np.isnan(row)
        if not missing.any():
            continue
        out.imputed_mask[i] |= missing
        observed = np.flatnonzero(~missing)
        if observed.size == 0:
            row[:] = spec.normal_midpoint
            continue
        # forward fill
        last = np.nan
        for t in range(row.size):
            if np.isnan(row[t]):
                row[t] = last
            else:
                last = row[t]
        # leading gap: backward fill from the first observation
        first = observed[0]
        row[:first] = row[first]
    return out


def align_right(matrix: VitalsMatrix, anchor_hour: int, offset_hours: int,
                span_hours: int = HISTORY_SPAN_HOURS) -> VitalsMatrix:
    """History available at evaluation hour ``anchor - offset``.

    Returns the sub-matrix over hours [anchor - span, anchor - offset]
    inclusive. The anchor column itself is included only at offset 0.
    """
    if offset_hours < 0:
        raise ValueError("offset_hours must be >= 0")
    window_start = anchor_hour - span_hours
    window_end = anchor_hour - offset_hours
    if window_end < window_start:
        raise InsufficientHistoryError(
            f"offset {offset_hours} exceeds the {span_hours}h history span")
    lo = window_start - matrix.start_hour
    hi = window_end - matrix.start_hour
    if lo < 0 or hi >= matrix.n_hours:
        raise InsufficientHistoryError(
            f"window [{window_start}, {window_end}] outside recorded hours")
    return VitalsMatrix(values=matrix.values[:, lo:hi + 1].copy(),
                        imputed_mask=matrix.imputed_mask[:, lo:hi + 1].copy(),
                        start_hour=window_start)
