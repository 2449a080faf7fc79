"""Blocking, jackknife and exactly-mergeable moment accumulators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

N_BLOCKS = 64


def _msum_add(partials, x):
    # Shewchuk's exact partial sums
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


@dataclass
class Moments:
    """Exact running (sum, sum of squares, count); merging is associative
    and commutative bit-for-bit because sums are kept as exact partials."""

    n: int = 0
    _s: list = field(default_factory=list)
    _q: list = field(default_factory=list)

    def add(self, x):
        for v in np.atleast_1d(np.asarray(x, dtype=float)).tolist():
            _msum_add(self._s, v)
            _msum_add(self._q, v * v)
            self.n += 1
        return self

    def merge(self, other: "Moments") -> "Moments":
        out = Moments(self.n + other.n, list(self._s), list(self._q))
        for v in other._s:
            _msum_add(out._s, v)
        for v in other._q:
            _msum_add(out._q, v)
        return out

    @property
    def sum(self) -> float:
        return math.fsum(self._s)

    @property
    def sumsq(self) -> float:
        return math.fsum(self._q)

    @property
    def mean(self) -> float:
        return self.sum / self.n if self.n else math.nan

    @property
    def variance(self) -> float:
        if self.n < 2:
            return math.nan
        return max(self.sumsq - self.n * self.mean ** 2, 0.0) / (self.n - 1)


def block_sums(series: np.ndarray, n_blocks: int = N_BLOCKS) -> np.ndarray:
    """Sum consecutive rows of ``series`` into ``n_blocks`` near-equal blocks."""
    series = np.asarray(series)
    n = len(series)
    nb = min(n_blocks, n)
    if nb < 1:
        raise ValueError("empty series")
    edges = np.linspace(0, n, nb + 1).astype(np.int64)
    return np.add.reduceat(series, edges[:-1], axis=0)


def jackknife(blocks: np.ndarray, fn):
    """Estimate fn(sum over blocks) and its delete-one jackknife error.

    ``blocks`` has shape (B, ...); ``fn`` maps a summed array to a scalar or
    array.  Returns (estimate, stdError).
    """
    blocks = np.asarray(blocks, dtype=float)
    tot = blocks.sum(axis=0)
    est = np.asarray(fn(tot), dtype=float)
    B = len(blocks)
    if B < 2:
        return est, np.full_like(est, np.inf)
    reps = np.array([fn(tot - blocks[i]) for i in range(B)], dtype=float)
    with np.errstate(invalid="ignore"):
        se = np.sqrt((B - 1) / B * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return est, se


def tau_from_blocks(series: np.ndarray, n_blocks: int = N_BLOCKS) -> float:
    """Integrated autocorrelation time (iid = 0.5) from block variances."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    nb = min(n_blocks, n)
    if nb < 2 or n < 4:
        return math.nan
    var = x.var(ddof=1)
    if var == 0:
        return 0.5
    L = n // nb
    bm = x[: nb * L].reshape(nb, L).mean(axis=1)
    return float(0.5 * L * bm.var(ddof=1) / var)


def ratio_estimate(num: np.ndarray, den: np.ndarray, n_blocks: int = N_BLOCKS):
    """Ratio of sums with jackknife error and autocorrelation time.

    ``num`` and ``den`` are per-sweep series (same length).
    """
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    bl = block_sums(np.stack([num, den], axis=1), n_blocks)
    with np.errstate(divide="ignore", invalid="ignore"):
        est, se = jackknife(bl, lambda t: t[0] / t[1])
        r = num.sum() / den.sum() if den.sum() else math.nan
        tau = tau_from_blocks(num - r * den, n_blocks) if np.isfinite(r) else math.nan
    return float(est), float(se), tau


def mean_estimate(x: np.ndarray, n_blocks: int = N_BLOCKS):
    """Mean with blocked standard error and autocorrelation time."""
    x = np.asarray(x, dtype=float)
    bl = block_sums(np.stack([x, np.ones_like(x)], axis=1), n_blocks)
    est, se = jackknife(bl, lambda t: t[0] / t[1])
    return float(est), float(se), tau_from_blocks(x, n_blocks)
