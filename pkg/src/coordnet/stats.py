"""Statistical primitives used by the analysis stages.

Everything randomized takes an explicit seed and is reproducible; heavy
resampling loops are chunked numpy operations so the default replicate counts
stay tractable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .network import WeightedNetwork

_CHUNK = 2048


@dataclass(frozen=True)
class BootstrapSummary:
    mean: float
    ci_low: float
    ci_high: float
    replicates: int
    seed: int


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    ci_low: float
    ci_high: float


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("degenerate variance")
    return float(dx @ dy) / math.sqrt(vx * vy)


def spearman(
    x: Sequence[float],
    y: Sequence[float],
    replicates: int = 10000,
    seed: int = 0,
) -> SpearmanResult:
    """Rank correlation with a percentile-bootstrap 95% CI over index resamples."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1 or len(xa) < 3:
        raise ValueError("x and y must be equal-length 1-d sequences with >= 3 values")
    rho = _pearson(rankdata(xa), rankdata(ya))
    n = len(xa)
    rhos: list[np.ndarray] = []
    rng = np.random.default_rng(seed)
    remaining = replicates
    while remaining > 0:
        batch = min(_CHUNK, remaining)
        idx = rng.integers(0, n, size=(batch, n))
        rx = rankdata(xa[idx], axis=1)
        ry = rankdata(ya[idx], axis=1)
        rx = rx - rx.mean(axis=1, keepdims=True)
        ry = ry - ry.mean(axis=1, keepdims=True)
        num = (rx * ry).sum(axis=1)
        den = np.sqrt((rx * rx).sum(axis=1) * (ry * ry).sum(axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = num / den
        rhos.append(vals)
        remaining -= batch
    pooled = np.concatenate(rhos)
    pooled = pooled[np.isfinite(pooled)]
    if len(pooled) == 0:
        raise ValueError("all bootstrap resamples were degenerate")
    lo, hi = np.percentile(pooled, [2.5, 97.5])
    return SpearmanResult(rho=rho, ci_low=float(lo), ci_high=float(hi))


def bootstrap_replicate_means(values: Sequence[float], replicates: int = 50000, seed: int = 0) -> np.ndarray:
    """Bootstrap replicate means, chunked to bound memory."""
    data = np.asarray(values, dtype=float)
    if data.ndim != 1 or len(data) == 0:
        raise ValueError("values must be a nonempty 1-d sequence")
    rng = np.random.default_rng(seed)
    n = len(data)
    means = np.empty(replicates, dtype=float)
    done = 0
    while done < replicates:
        batch = min(_CHUNK, replicates - done)
        idx = rng.integers(0, n, size=(batch, n))
        means[done : done + batch] = data[idx].mean(axis=1)
        done += batch
    return means


def summarize_replicates(
    values: Sequence[float], means: np.ndarray, replicates: int, seed: int
) -> BootstrapSummary:
    """Percentile 95% summary around the sample mean, given replicate means."""
    data = np.asarray(values, dtype=float)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return BootstrapSummary(
        mean=float(data.mean()),
        ci_low=float(lo),
        ci_high=float(hi),
        replicates=replicates,
        seed=seed,
    )


def bootstrap_mean(values: Sequence[float], replicates: int = 50000, seed: int = 0) -> BootstrapSummary:
    """Sample mean with percentile 95% bounds over bootstrap replicate means."""
    means = bootstrap_replicate_means(values, replicates, seed)
    return summarize_replicates(values, means, replicates, seed)


def _edge_attr_arrays(net: WeightedNetwork, attr: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
    left: list[float] = []
    right: list[float] = []
    for u, v, _ in net.sorted_edges():
        if u in attr and v in attr:
            left.append(attr[u])
            right.append(attr[v])
    if len(left) < 2:
        raise ValueError("need >= 2 edges with the attribute on both endpoints")
    return np.asarray(left, dtype=float), np.asarray(right, dtype=float)


def assortativity(net: WeightedNetwork, attr: Mapping[str, float]) -> float:
    """Pearson correlation of a node attribute across edge endpoints.

    Every undirected edge contributes both orientations; edge weights do not
    enter the correlation.
    """
    a, b = _edge_attr_arrays(net, attr)
    x = np.concatenate([a, b])
    y = np.concatenate([b, a])
    return _pearson(x, y)


def shuffle_zscore(
    net: WeightedNetwork,
    attr: Mapping[str, float],
    shuffles: int = 10000,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Z-score of the observed assortativity against attribute permutations."""
    observed = assortativity(net, attr)
    nodes = sorted(n for n in net.nodes if n in attr)
    values = np.asarray([attr[n] for n in nodes], dtype=float)
    index = {n: i for i, n in enumerate(nodes)}
    iu: list[int] = []
    iv: list[int] = []
    for u, v, _ in net.sorted_edges():
        if u in index and v in index:
            iu.append(index[u])
            iv.append(index[v])
    iu_arr = np.asarray(iu)
    iv_arr = np.asarray(iv)
    rng = np.random.default_rng(seed)
    null = np.empty(shuffles, dtype=float)
    for i in range(shuffles):
        perm = rng.permutation(values)
        a = perm[iu_arr]
        b = perm[iv_arr]
        x = np.concatenate([a, b])
        mean = x.mean()
        da = a - mean
        db = b - mean
        var = float(da @ da + db @ db)
        null[i] = 2.0 * float(da @ db) / var if var > 0 else np.nan
    null = null[np.isfinite(null)]
    null_mean = float(null.mean())
    null_sd = float(null.std(ddof=1))
    if null_sd == 0.0:
        raise ValueError("degenerate null distribution (zero spread)")
    return (observed - null_mean) / null_sd, null_mean, null_sd


def _ad_precompute(pooled_sorted: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Distinct-value layout shared by every permutation of the same pool."""
    n_total = len(pooled_sorted)
    change = np.empty(n_total, dtype=bool)
    change[0] = True
    change[1:] = pooled_sorted[1:] != pooled_sorted[:-1]
    group_index = np.cumsum(change) - 1
    lengths = np.bincount(group_index).astype(float)
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    b_mid = starts + lengths / 2.0
    denom = b_mid * (n_total - b_mid) - n_total * lengths / 4.0
    return group_index, lengths, b_mid, denom


def _ad_statistic(
    labels_sorted: np.ndarray,
    sizes: Sequence[int],
    group_index: np.ndarray,
    lengths: np.ndarray,
    b_mid: np.ndarray,
    denom: np.ndarray,
) -> float:
    """Tie-adjusted k-sample Anderson-Darling statistic (midrank form)."""
    n_total = int(lengths.sum())
    n_groups = len(lengths)
    total = 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        for sample_id, size in enumerate(sizes):
            counts = np.bincount(group_index[labels_sorted == sample_id], minlength=n_groups).astype(float)
            m_mid = np.cumsum(counts) - counts / 2.0
            contrib = (lengths / n_total) * (n_total * m_mid - size * b_mid) ** 2 / denom
            total += np.nansum(contrib) / size
    return (n_total - 1) / n_total * total


def anderson_darling_k(
    samples: Sequence[Sequence[float]],
    simulations: int = 10000,
    seed: int = 0,
) -> float:
    """Permutation p-value of the k-sample Anderson-Darling test.

    The p-value is the add-one-smoothed fraction of label permutations whose
    statistic reaches the observed one.
    """
    if len(samples) < 2 or any(len(s) < 2 for s in samples):
        raise ValueError("need k >= 2 samples with >= 2 values each")
    arrays = [np.asarray(s, dtype=float) for s in samples]
    pooled = np.concatenate(arrays)
    if np.all(pooled == pooled[0]):
        raise ValueError("all values identical across samples")
    sizes = [len(a) for a in arrays]
    labels = np.concatenate([np.full(size, i) for i, size in enumerate(sizes)])
    order = np.argsort(pooled, kind="stable")
    pooled_sorted = pooled[order]
    layout = _ad_precompute(pooled_sorted)
    observed = _ad_statistic(labels[order], sizes, *layout)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(simulations):
        permuted = rng.permutation(labels)
        if _ad_statistic(permuted[order], sizes, *layout) >= observed:
            hits += 1
    return (1 + hits) / (simulations + 1)


def loess(
    x: Sequence[float],
    y: Sequence[float],
    span: float = 0.75,
) -> list[tuple[float, float, float, float]]:
    """Local linear regression with tricube weights and pointwise 95% bands.

    Returns (x, fitted, ci_low, ci_high) rows sorted by x. The bands come from
    the local weighted residual variance and the equivalent-kernel norm.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1 or len(xa) < 5:
        raise ValueError("x and y must be equal-length 1-d sequences with >= 5 values")
    if not 0 < span <= 1:
        raise ValueError(f"span must be in (0, 1], got {span}")
    if np.all(xa == xa[0]):
        raise ValueError("x is degenerate (all values equal)")
    order = np.argsort(xa, kind="stable")
    xs = xa[order]
    ys = ya[order]
    n = len(xs)
    k = max(2, int(np.ceil(span * n)))
    rows: list[tuple[float, float, float, float]] = []
    for i in range(n):
        x0 = xs[i]
        lo_idx, hi_idx = _nearest_window(xs, i, k)
        wx = xs[lo_idx : hi_idx + 1]
        wy = ys[lo_idx : hi_idx + 1]
        d = np.abs(wx - x0)
        dmax = d.max()
        if dmax > 0:
            w = (1.0 - (d / dmax) ** 3) ** 3
            w = np.maximum(w, 0.0)
        else:
            w = np.ones_like(d)
        if w.sum() <= 0:
            w = np.ones_like(d)
        dx = wx - x0
        s0 = w.sum()
        s1 = float(w @ dx)
        s2 = float(w @ (dx * dx))
        det = s0 * s2 - s1 * s1
        if det > 1e-12 * max(s0 * s2, 1e-300):
            l_vec = w * (s2 - s1 * dx) / det
        else:
            l_vec = w / s0
        fit = float(l_vec @ wy)
        # Residuals of the local fit over its own window.
        if det > 1e-12 * max(s0 * s2, 1e-300):
            beta1 = (s0 * float(w @ (dx * wy)) - s1 * float(w @ wy)) / det
            local = fit + beta1 * dx
        else:
            local = np.full_like(wy, fit)
        resid = wy - local
        dof = s0 - 2.0
        sigma2 = float(w @ (resid * resid)) / dof if dof > 0 else float(w @ (resid * resid)) / s0
        sigma2 = max(sigma2, 0.0)
        se = float(np.sqrt(sigma2 * float(l_vec @ l_vec)))
        rows.append((float(x0), fit, fit - 1.96 * se, fit + 1.96 * se))
    return rows


def _nearest_window(xs: np.ndarray, i: int, k: int) -> tuple[int, int]:
    """Inclusive bounds of the k nearest neighbors of xs[i] in sorted data."""
    n = len(xs)
    lo = hi = i
    while hi - lo + 1 < k:
        if lo == 0:
            hi += 1
        elif hi == n - 1:
            lo -= 1
        elif xs[i] - xs[lo - 1] <= xs[hi + 1] - xs[i]:
            lo -= 1
        else:
            hi += 1
    return lo, hi
