"""Price-series ingestion, chronological splitting, normalization, and
sliding-window construction.

The canonical input format is a UTF-8 CSV with header ``date,close``,
ISO-8601 dates in strictly increasing order, and positive decimal prices.
Out-of-order or malformed rows are errors, never silently repaired: a data
problem should surface at load time, not as a mysteriously bad model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ContractError, DataError

CSV_HEADER = ("date", "close")


@dataclass
class PriceSeries:
    """A dated sequence of daily closing prices.

    Dates are strictly increasing; closes are positive and finite.
    """

    dates: list
    closes: np.ndarray

    def __post_init__(self):
        self.closes = np.asarray(self.closes, dtype=np.float64)
        if len(self.dates) != len(self.closes):
            raise DataError(
                f"dates ({len(self.dates)}) and closes ({len(self.closes)}) differ in length"
            )
        if not np.isfinite(self.closes).all():
            raise DataError("closes contain non-finite values")
        if (self.closes <= 0).any():
            bad = int(np.argmax(self.closes <= 0))
            raise DataError(f"non-positive close {self.closes[bad]} at position {bad}")
        for i in range(1, len(self.dates)):
            if self.dates[i] <= self.dates[i - 1]:
                raise DataError(
                    f"dates not strictly increasing at position {i}: "
                    f"{self.dates[i - 1]} -> {self.dates[i]}"
                )

    def __len__(self) -> int:
        return len(self.closes)

    def slice(self, start: int, stop: int) -> "PriceSeries":
        return PriceSeries(self.dates[start:stop], self.closes[start:stop].copy())


def load_csv(path) -> PriceSeries:
    """Parse a canonical ``date,close`` CSV into a validated PriceSeries."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    dates: list = []
    closes: list = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [c.strip().lower() for c in header] != list(CSV_HEADER):
            raise DataError(f"{path}: expected header 'date,close', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad ISO date {row[0]!r}") from None
            try:
                close = float(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad close {row[1]!r}") from None
            if not math.isfinite(close) or close <= 0:
                raise DataError(f"{path}:{lineno}: close must be a positive finite number, got {row[1]}")
            if dates and day <= dates[-1]:
                raise DataError(
                    f"{path}:{lineno}: date {day} not after previous {dates[-1]} "
                    "(input must be sorted, duplicates are invalid)"
                )
            dates.append(day)
            closes.append(close)
    if not dates:
        raise DataError(f"{path}: no data rows")
    return PriceSeries(dates, np.array(closes))


def write_csv(series: PriceSeries, path) -> None:
    """Write the canonical CSV. Floats use shortest exact repr so a
    write/load round trip reproduces values bit-for-bit."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for day, close in zip(series.dates, series.closes):
            writer.writerow([day.isoformat(), repr(float(close))])


def chronological_split(series: PriceSeries, train_fraction: float = 0.7):
    """First ``floor(train_fraction * N)`` points for training, rest for test."""
    n = len(series)
    if n < 10:
        raise ContractError(f"series too short to split: {n} < 10")
    if not 0.0 < train_fraction < 1.0:
        raise ContractError(f"train_fraction must be in (0, 1), got {train_fraction}")
    cut = int(math.floor(train_fraction * n))
    return series.slice(0, cut), series.slice(cut, n)


class MinMaxNormalizer(BaseEstimator, TransformerMixin):
    """Affine map of prices onto [0, 1] using the training split's extremes.

    Fit on training data only; test values may land outside [0, 1] when the
    test period exceeds the training range, which is expected for a rising
    index.
    """

    def fit(self, values, y=None):
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size < 2:
            raise ContractError(f"need at least 2 values to fit, got {values.size}")
        self.min_ = float(values.min())
        self.max_ = float(values.max())
        if not self.max_ > self.min_:
            raise ContractError(
                f"degenerate range: min == max == {self.min_}; constant series cannot be scaled"
            )
        self.scale_ = self.max_ - self.min_
        return self

    def transform(self, values):
        values = np.asarray(values, dtype=np.float64)
        return (values - self.min_) / self.scale_

    def inverse_transform(self, values):
        values = np.asarray(values, dtype=np.float64)
        return values * self.scale_ + self.min_


@dataclass
class WindowedDataset:
    """Supervised pairs: each input row is ``w`` consecutive values, its
    target the following ``h`` values. Row i reads source indices
    [i, i+w) for inputs and [i+w, i+w+h) for targets — never overlapping."""

    inputs: np.ndarray
    targets: np.ndarray
    window: int
    horizon: int
    start_index: int = 0
    target_dates: Optional[list] = None
    first_targets_raw: Optional[np.ndarray] = None  # unnormalized step-1 targets

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ContractError(
                f"inputs ({self.inputs.shape[0]}) and targets ({self.targets.shape[0]}) row counts differ"
            )
        if self.inputs.shape[1] != self.window or self.targets.shape[1] != self.horizon:
            raise ContractError(
                f"shape mismatch: inputs {self.inputs.shape} vs window {self.window}, "
                f"targets {self.targets.shape} vs horizon {self.horizon}"
            )

    def __len__(self) -> int:
        return self.inputs.shape[0]


def make_windows(
    values: np.ndarray,
    window: int,
    horizon: int,
    dates: Optional[Sequence] = None,
    start_index: int = 0,
    raw_values: Optional[np.ndarray] = None,
) -> WindowedDataset:
    """Slice a (already normalized) series into sliding supervised pairs.

    ``raw_values``, when given, must align with ``values`` and is sliced the
    same way to preserve exact unnormalized step-1 targets for reporting.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    n = values.size
    if window < 1 or horizon < 1:
        raise ContractError(f"window and horizon must be >= 1, got w={window} h={horizon}")
    needed = window + horizon
    if n < needed:
        raise ContractError(
            f"series of length {n} too short for window={window} + horizon={horizon} "
            f"(needs at least {needed})"
        )
    count = n - window - horizon + 1
    inputs = np.empty((count, window))
    targets = np.empty((count, horizon))
    for i in range(count):
        inputs[i] = values[i : i + window]
        targets[i] = values[i + window : i + window + horizon]
    target_dates = None
    if dates is not None:
        target_dates = [dates[i + window] for i in range(count)]
    first_targets_raw = None
    if raw_values is not None:
        raw_values = np.asarray(raw_values, dtype=np.float64).reshape(-1)
        first_targets_raw = raw_values[window : window + count].copy()
    return WindowedDataset(
        inputs, targets, window, horizon, start_index, target_dates, first_targets_raw
    )


def prepare_cell_data(series: PriceSeries, window: int, horizon: int, train_fraction: float = 0.7):
    """Split chronologically, fit the normalizer on train only, and window
    each split independently so no test value can reach a training input.

    Returns (train_windows, test_windows, normalizer).
    """
    train, test = chronological_split(series, train_fraction)
    norm = MinMaxNormalizer().fit(train.closes)
    train_ds = make_windows(
        norm.transform(train.closes), window, horizon,
        dates=train.dates, start_index=0, raw_values=train.closes,
    )
    test_ds = make_windows(
        norm.transform(test.closes), window, horizon,
        dates=test.dates, start_index=len(train), raw_values=test.closes,
    )
    return train_ds, test_ds, norm


def synth_series(kind: str, n: int, seed: int = 0) -> PriceSeries:
    """Deterministic synthetic price series for tests and smoke runs.

    ``sine_trend``: 100 + 0.05 t + 5 sin(2 pi t / 20);
    ``random_walk``: unit Gaussian steps from 100, floored at 1;
    ``constant``: all 100.
    """
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    t = np.arange(n, dtype=np.float64)
    if kind == "sine_trend":
        closes = 100.0 + 0.05 * t + 5.0 * np.sin(2.0 * np.pi * t / 20.0)
    elif kind == "random_walk":
        rng = np.random.default_rng(seed)
        closes = np.empty(n)
        level = 100.0
        for i in range(n):
            level = max(level + rng.normal(), 1.0)
            closes[i] = level
    elif kind == "constant":
        closes = np.full(n, 100.0)
    else:
        raise ContractError(f"unknown synthetic kind {kind!r}")
    start = date(2000, 1, 3)
    dates = [start + timedelta(days=i) for i in range(n)]
    return PriceSeries(dates, closes)
