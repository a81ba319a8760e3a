"""Hourly toxicity series and directed information flow between them.

The flow measure is the escort-distribution (tail-weighted) generalization of
transfer entropy on symbolized series, estimated from empirical transition
frequencies; q below 1 emphasizes rare symbols. Significance comes from
regenerating the source series from its own transition structure, which
preserves its dynamics while severing any cross-series dependence.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Optional, Sequence

import numpy as np

HOUR = timedelta(hours=1)


class InsufficientData(Exception):
    """Raised when a series offers too few complete transitions."""


@dataclass(frozen=True)
class HourlySeries:
    start_hour: datetime
    values: tuple[Optional[float], ...]
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.counts):
            raise ValueError("values and counts must have equal length")
        for value, count in zip(self.values, self.counts):
            if (count == 0) != (value is None):
                raise ValueError("count 0 must pair with an absent value")

    def hour_at(self, index: int) -> datetime:
        return self.start_hour + index * HOUR


def floor_hour(ts: datetime) -> datetime:
    return ts.astimezone(timezone.utc).replace(minute=0, second=0, microsecond=0)


def hourly_series(
    posts: Iterable[tuple[datetime, float]],
    window: tuple[datetime, datetime],
) -> HourlySeries:
    """Mean value per hour over a half-open, hour-aligned [start, end) window."""
    start, end = window
    if floor_hour(start) != start or floor_hour(end) != end:
        raise ValueError("window bounds must be hour-aligned")
    if end <= start:
        raise ValueError("window must be nonempty")
    n_hours = int((end - start) / HOUR)
    sums = [0.0] * n_hours
    counts = [0] * n_hours
    for ts, value in posts:
        if ts.tzinfo is None:
            raise ValueError("timestamps must be timezone-aware")
        if not start <= ts < end:
            continue
        idx = int((floor_hour(ts) - start) / HOUR)
        sums[idx] += value
        counts[idx] += 1
    values = tuple((sums[i] / counts[i]) if counts[i] else None for i in range(n_hours))
    return HourlySeries(start_hour=start, values=values, counts=tuple(counts))


def quantile_bins(
    values: Sequence[float],
    probs: Sequence[float] = (0.05, 0.5, 0.95),
) -> list[int]:
    """Symbolize values against their own interpolated quantile bounds.

    A value's symbol is the number of bounds strictly below it, giving
    len(probs) + 1 symbols. Duplicate bounds (degenerate data) collapse bins;
    this warns but still symbolizes.
    """
    data = np.asarray(values, dtype=float)
    if data.ndim != 1 or len(data) == 0:
        raise ValueError("values must be a nonempty 1-d sequence")
    probs_arr = np.asarray(probs, dtype=float)
    if np.any(probs_arr <= 0) or np.any(probs_arr >= 1) or np.any(np.diff(probs_arr) <= 0):
        raise ValueError("probs must be strictly increasing within (0, 1)")
    bounds = np.quantile(data, probs_arr)
    if len(np.unique(bounds)) < len(bounds):
        warnings.warn("quantile bounds collapsed (near-constant values)", stacklevel=2)
    return [int(np.searchsorted(bounds, v, side="left")) for v in data]


def symbolize_series(series: HourlySeries, probs: Sequence[float] = (0.05, 0.5, 0.95)) -> list[Optional[int]]:
    present = [v for v in series.values if v is not None]
    if not present:
        raise ValueError("series has no observations")
    symbols = quantile_bins(present, probs)
    out: list[Optional[int]] = []
    it = iter(symbols)
    for value in series.values:
        out.append(next(it) if value is not None else None)
    return out


@dataclass(frozen=True)
class TransferEntropyResult:
    te: float
    n_transitions: int
    skipped_patterns: int


def _complete_transitions(
    x: Sequence[Optional[int]],
    y: Sequence[Optional[int]],
    history: int,
) -> list[tuple[int, tuple[int, ...], tuple[int, ...]]]:
    if len(x) != len(y):
        raise ValueError("series must be aligned to equal length")
    out: list[tuple[int, tuple[int, ...], tuple[int, ...]]] = []
    for t in range(history, len(y)):
        window_y = y[t - history : t]
        window_x = x[t - history : t]
        if y[t] is None or any(v is None for v in window_y) or any(v is None for v in window_x):
            continue
        out.append((y[t], tuple(window_y), tuple(window_x)))
    return out


def _entropy_ratio(joint: dict, marginal: dict, q: float) -> float:
    """log2 of (sum joint^q / sum marginal^q) over observed patterns.

    Zero-mass conditioning patterns carry no term here, which is exactly the
    renormalization over observed patterns; the caller reports how many were
    dropped relative to the full pattern space seen in the other table.
    """
    num = sum(c**q for c in joint.values())
    den = sum(c**q for c in marginal.values())
    if den <= 0 or num <= 0:
        raise InsufficientData("no observed conditioning patterns")
    return math.log2(num / den)


def renyi_te(
    x: Sequence[Optional[int]],
    y: Sequence[Optional[int]],
    q: float = 0.5,
    history: int = 1,
) -> TransferEntropyResult:
    """Tail-weighted transfer entropy from x to y on symbol series.

    Estimated as the difference of two escort-distribution conditional
    entropies, H_q(y_next | y_hist) - H_q(y_next | y_hist, x_hist), from the
    empirical joint frequencies of complete transitions. Time steps with an
    absent observation are dropped along with any transition spanning them.
    """
    if q <= 0 or q == 1.0:
        raise ValueError(f"q must be positive and different from 1, got {q}")
    if history < 1:
        raise ValueError("history must be >= 1")
    transitions = _complete_transitions(x, y, history)
    if len(transitions) < 25:
        raise InsufficientData(f"only {len(transitions)} complete transitions (need >= 25)")
    joint_next_yh: dict[tuple, int] = {}
    marg_yh: dict[tuple, int] = {}
    joint_next_yh_xh: dict[tuple, int] = {}
    marg_yh_xh: dict[tuple, int] = {}
    for y_next, y_hist, x_hist in transitions:
        joint_next_yh[(y_next, y_hist)] = joint_next_yh.get((y_next, y_hist), 0) + 1
        marg_yh[y_hist] = marg_yh.get(y_hist, 0) + 1
        joint_next_yh_xh[(y_next, y_hist, x_hist)] = joint_next_yh_xh.get((y_next, y_hist, x_hist), 0) + 1
        marg_yh_xh[(y_hist, x_hist)] = marg_yh_xh.get((y_hist, x_hist), 0) + 1
    # Conditioning patterns never observed have zero mass on both sides of
    # each ratio; they are skipped by construction and counted for reporting.
    symbols = {s for s, _ in joint_next_yh}
    patterns_x = {xh for _, xh in marg_yh_xh}
    skipped = (len(symbols) * len(marg_yh) - len(joint_next_yh)) + (
        len(marg_yh) * len(patterns_x) - len(marg_yh_xh)
    )
    coef = 1.0 / (1.0 - q)
    h_y = _entropy_ratio(joint_next_yh, marg_yh, q)
    h_yx = _entropy_ratio(joint_next_yh_xh, marg_yh_xh, q)
    te = coef * h_y - coef * h_yx
    return TransferEntropyResult(te=te, n_transitions=len(transitions), skipped_patterns=skipped)


@dataclass(frozen=True)
class SignificanceResult:
    te_observed: float
    p_value: float
    n_transitions: int
    bootstraps: int


def _markov_transitions(x: Sequence[Optional[int]], order: int) -> tuple[dict, list[int]]:
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    marginal: list[int] = []
    run: list[int] = []
    for value in list(x) + [None]:
        if value is None:
            run = []
            continue
        marginal.append(value)
        if len(run) >= order:
            pattern = tuple(run[-order:])
            counts.setdefault(pattern, {})[value] = counts.setdefault(pattern, {}).get(value, 0) + 1
        run.append(value)
    return counts, marginal


def _simulate_source(
    x: Sequence[Optional[int]],
    counts: dict,
    marginal: Sequence[int],
    order: int,
    rng: np.random.Generator,
) -> list[Optional[int]]:
    """Redraw the present entries of x from its own transition structure.

    Gaps are preserved in place; each contiguous run restarts from the
    marginal symbol distribution, then follows the empirical conditionals
    (falling back to the marginal on patterns never observed).
    """
    marginal_arr = np.asarray(sorted(marginal), dtype=int)
    cond: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}
    for pattern in sorted(counts):
        nexts = counts[pattern]
        symbols = np.asarray(sorted(nexts), dtype=int)
        weights = np.asarray([nexts[s] for s in symbols], dtype=float)
        cond[pattern] = (symbols, np.cumsum(weights / weights.sum()))
    uniforms = rng.random(len(x))
    out: list[Optional[int]] = []
    run: list[int] = []
    for pos, value in enumerate(x):
        if value is None:
            out.append(None)
            run = []
            continue
        pattern = tuple(run[-order:]) if len(run) >= order else None
        if pattern is not None and pattern in cond:
            symbols, cum = cond[pattern]
            drawn = int(symbols[min(np.searchsorted(cum, uniforms[pos], side="right"), len(symbols) - 1)])
        else:
            drawn = int(marginal_arr[min(int(uniforms[pos] * len(marginal_arr)), len(marginal_arr) - 1)])
        out.append(drawn)
        run.append(drawn)
    return out


def te_significance(
    x: Sequence[Optional[int]],
    y: Sequence[Optional[int]],
    q: float = 0.5,
    history: int = 1,
    bootstraps: int = 300,
    block: Optional[int] = None,
    seed: int = 0,
) -> SignificanceResult:
    """Bootstrap p-value for the x -> y flow.

    Each replicate regenerates the source as a Markov chain of order ``block``
    (defaults to ``history``) and re-estimates the flow; the p-value is the
    add-one-smoothed fraction of replicates reaching the observed value.
    Replicate i draws from a generator seeded with seed + i.
    """
    observed = renyi_te(x, y, q=q, history=history)
    order = history if block is None else block
    if order < 1:
        raise ValueError("block must be >= 1")
    counts, marginal = _markov_transitions(x, order)
    if not marginal:
        raise InsufficientData("source series has no observations")
    hits = 0
    for i in range(bootstraps):
        rng = np.random.default_rng(seed + i)
        simulated = _simulate_source(x, counts, marginal, order, rng)
        replicate = renyi_te(simulated, y, q=q, history=history)
        if replicate.te >= observed.te:
            hits += 1
    p_value = (1 + hits) / (bootstraps + 1)
    return SignificanceResult(
        te_observed=observed.te,
        p_value=p_value,
        n_transitions=observed.n_transitions,
        bootstraps=bootstraps,
    )


def write_series_csv(series: HourlySeries, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["hour", "mean_toxicity", "count"])
        for i, (value, count) in enumerate(zip(series.values, series.counts)):
            hour = series.hour_at(i).strftime("%Y-%m-%dT%H:%M:%S+00:00")
            writer.writerow([hour, "" if value is None else repr(value), count])


def read_series_csv(path: str) -> HourlySeries:
    rows: list[tuple[datetime, Optional[float], int]] = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["hour", "mean_toxicity", "count"]:
            raise ValueError(f"unexpected series CSV header in {path}: {header}")
        for row in reader:
            ts = datetime.fromisoformat(row[0])
            value = None if row[1] == "" else float(row[1])
            rows.append((ts, value, int(row[2])))
    if not rows:
        raise ValueError(f"series CSV {path} is empty")
    return HourlySeries(
        start_hour=rows[0][0],
        values=tuple(r[1] for r in rows),
        counts=tuple(r[2] for r in rows),
    )
