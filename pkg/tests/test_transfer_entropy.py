from __future__ import annotations

import math
from collections import Counter
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordnet.transfer_entropy import (
    HOUR,
    HourlySeries,
    InsufficientData,
    hourly_series,
    quantile_bins,
    read_series_csv,
    renyi_te,
    symbolize_series,
    te_significance,
    write_series_csv,
)

T0 = datetime(2019, 11, 12, tzinfo=timezone.utc)


def shannon_te(x, y, history=1):
    """Independent plug-in Shannon transfer entropy (bits)."""
    transitions = []
    for t in range(history, len(y)):
        if y[t] is None:
            continue
        wy = tuple(y[t - history : t])
        wx = tuple(x[t - history : t])
        if any(v is None for v in wy) or any(v is None for v in wx):
            continue
        transitions.append((y[t], wy, wx))
    n = len(transitions)
    c_full = Counter(transitions)
    c_yh = Counter(t[1] for t in transitions)
    c_next_yh = Counter((t[0], t[1]) for t in transitions)
    c_yh_xh = Counter((t[1], t[2]) for t in transitions)
    te = 0.0
    for (y_next, yh, xh), c in c_full.items():
        p = c / n
        te += p * math.log2((c / c_yh_xh[(yh, xh)]) / (c_next_yh[(y_next, yh)] / c_yh[yh]))
    return te


class TestHourlySeries:
    def test_hour_mean(self):
        posts = [(T0 + timedelta(minutes=10), 0.2), (T0 + timedelta(minutes=50), 0.4)]
        series = hourly_series(posts, (T0, T0 + 2 * HOUR))
        assert series.values == (pytest.approx(0.3), None)
        assert series.counts == (2, 0)

    def test_boundary_belongs_to_starting_hour(self):
        posts = [(T0 + HOUR, 1.0)]
        series = hourly_series(posts, (T0, T0 + 2 * HOUR))
        assert series.values[0] is None
        assert series.values[1] == 1.0

    def test_outside_window_ignored(self):
        posts = [(T0 - timedelta(minutes=1), 1.0), (T0 + 3 * HOUR, 1.0)]
        series = hourly_series(posts, (T0, T0 + 2 * HOUR))
        assert series.counts == (0, 0)

    def test_unaligned_window_rejected(self):
        with pytest.raises(ValueError):
            hourly_series([], (T0 + timedelta(minutes=30), T0 + 2 * HOUR))

    def test_csv_round_trip(self, tmp_path):
        series = hourly_series([(T0 + timedelta(minutes=5), 0.7)], (T0, T0 + 3 * HOUR))
        path = tmp_path / "series.csv"
        write_series_csv(series, str(path))
        loaded = read_series_csv(str(path))
        assert loaded.start_hour == series.start_hour
        assert loaded.counts == series.counts
        assert loaded.values[0] == pytest.approx(series.values[0])


class TestQuantileBins:
    def test_interpolated_bounds(self):
        values = list(range(1, 101))
        symbols = quantile_bins(values)
        assert symbols[49] == 1  # value 50 sits between 5.95 and 50.5
        assert symbols[0] == 0
        assert symbols[99] == 3

    def test_below_and_above_all_bounds(self):
        values = [float(v) for v in range(10)]
        symbols = quantile_bins(values, probs=(0.25, 0.5, 0.75))
        assert symbols[0] == 0  # below every bound
        assert symbols[-1] == 3  # above every bound

    def test_degenerate_values_warn(self):
        with pytest.warns(UserWarning):
            quantile_bins([1.0] * 10)

    def test_bad_probs(self):
        with pytest.raises(ValueError):
            quantile_bins([1.0, 2.0], probs=(0.5, 0.5))
        with pytest.raises(ValueError):
            quantile_bins([1.0, 2.0], probs=(0.0, 0.5))

    @given(st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=60))
    @settings(max_examples=50)
    def test_order_preserving(self, values):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            symbols = quantile_bins(values)
        pairs = sorted(zip(values, symbols))
        for (v1, s1), (v2, s2) in zip(pairs, pairs[1:]):
            if v1 <= v2:
                assert s1 <= s2

    def test_symbolize_series_keeps_gaps(self):
        series = HourlySeries(T0, (0.1, None, 0.9), (1, 0, 2))
        symbols = symbolize_series(series)
        assert symbols[1] is None
        assert symbols[0] is not None and symbols[2] is not None


def coupled_chain(n, seed, symbols=4):
    rng = np.random.default_rng(seed)
    x = [int(v) for v in rng.integers(0, symbols, size=n)]
    y = [0] + [x[i - 1] for i in range(1, n)]
    return x, y


class TestRenyiTE:
    def test_deterministic_coupling_direction(self):
        x, y = coupled_chain(4000, seed=1)
        forward = renyi_te(x, y, q=0.5).te
        backward = renyi_te(y, x, q=0.5).te
        assert forward > 0.5
        assert abs(backward) < 0.05

    def test_q_one_limit_matches_shannon(self):
        x, y = coupled_chain(10000, seed=2)
        oracle = shannon_te(x, y)
        for q in (0.999, 1.001):
            assert renyi_te(x, y, q=q).te == pytest.approx(oracle, abs=1e-3)
        rng = np.random.default_rng(3)
        a = [int(v) for v in rng.integers(0, 3, size=10000)]
        b = [int(v) for v in rng.integers(0, 3, size=10000)]
        assert renyi_te(a, b, q=0.9999).te == pytest.approx(shannon_te(a, b), abs=1e-3)

    def test_relabeling_invariance(self):
        x, y = coupled_chain(3000, seed=4)
        base = renyi_te(x, y, q=0.5).te
        relabel = {0: 3, 1: 2, 2: 0, 3: 1}
        assert renyi_te([relabel[v] for v in x], y, q=0.5).te == pytest.approx(base)
        assert renyi_te(x, [relabel[v] for v in y], q=0.5).te == pytest.approx(base)

    def test_independent_series_near_zero(self):
        rng = np.random.default_rng(5)
        x = [int(v) for v in rng.integers(0, 4, size=10000)]
        y = [int(v) for v in rng.integers(0, 4, size=10000)]
        observed = renyi_te(x, y, q=0.5).te
        # Compare against this draw's own shuffle null.
        nulls = []
        for i in range(40):
            shuffle_rng = np.random.default_rng(100 + i)
            xs = list(x)
            shuffle_rng.shuffle(xs)
            nulls.append(renyi_te(xs, y, q=0.5).te)
        assert observed <= sorted(nulls)[int(0.95 * len(nulls))]

    def test_gaps_drop_spanning_transitions(self):
        x = [0, 1, None, 1, 0] * 30
        y = [1, 0, 1, None, 0] * 30
        result = renyi_te(x, y, q=0.5)
        # A transition at t needs the target value plus both one-step
        # histories; x[t] itself is not part of it.
        expected = sum(
            1 for t in range(1, 150) if None not in (y[t], y[t - 1], x[t - 1])
        )
        assert result.n_transitions == expected

    def test_insufficient_transitions(self):
        with pytest.raises(InsufficientData):
            renyi_te([0, 1] * 10, [1, 0] * 10, q=0.5)

    def test_q_domain(self):
        x, y = coupled_chain(200, seed=6)
        with pytest.raises(ValueError):
            renyi_te(x, y, q=1.0)
        with pytest.raises(ValueError):
            renyi_te(x, y, q=-0.5)

    def test_self_shift_is_best_among_shifts(self):
        rng = np.random.default_rng(7)
        # Persistent chain so the series carries temporal structure.
        x = [0]
        for _ in range(4999):
            x.append(x[-1] if rng.random() < 0.7 else int(rng.integers(0, 4)))
        y = [0] + x[:-1]  # y is x shifted by one step
        te_by_shift = {}
        for shift in (1, 2, 3):
            ys = [0] * shift + x[:-shift]
            te_by_shift[shift] = renyi_te(x, ys, q=0.5).te
        assert te_by_shift[1] == max(te_by_shift.values())


class TestSignificance:
    def test_coupled_significant(self):
        x, y = coupled_chain(2000, seed=8)
        result = te_significance(x, y, q=0.5, bootstraps=200, seed=11)
        assert result.p_value <= 0.01

    def test_independent_not_significant(self):
        rng = np.random.default_rng(9)
        x = [int(v) for v in rng.integers(0, 4, size=2000)]
        y = [int(v) for v in rng.integers(0, 4, size=2000)]
        result = te_significance(x, y, q=0.5, bootstraps=200, seed=12)
        assert result.p_value > 0.01

    def test_reproducible(self):
        x, y = coupled_chain(600, seed=10)
        a = te_significance(x, y, q=0.5, bootstraps=60, seed=3)
        b = te_significance(x, y, q=0.5, bootstraps=60, seed=3)
        assert a == b

    def test_block_parameter(self):
        x, y = coupled_chain(600, seed=13)
        result = te_significance(x, y, q=0.5, bootstraps=40, block=2, seed=4)
        assert 0.0 < result.p_value <= 1.0
        with pytest.raises(ValueError):
            te_significance(x, y, q=0.5, bootstraps=10, block=0, seed=4)
