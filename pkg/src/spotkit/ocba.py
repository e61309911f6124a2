"""Optimal computing budget allocation for picking the best of noisy designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

VAR_FLOOR = 1e-12
DELTA_FLOOR = 1e-12


@dataclass
class OcbaInput:
    means: np.ndarray
    variances: np.ndarray
    counts: np.ndarray
    delta: int

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        self.counts = np.asarray(self.counts, dtype=int)
        m = self.means.size
        if m < 2:
            raise ValueError("OCBA needs at least two designs")
        if self.variances.size != m or self.counts.size != m:
            raise ValueError("means, variances and counts must have equal length")
        if np.any(self.variances < 0) or not np.all(np.isfinite(self.means)):
            raise ValueError("variances must be >= 0 and means finite")
        if np.any(self.counts < 0):
            raise ValueError("counts must be >= 0")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")


def ocba_weights(means, variances) -> np.ndarray:
    """Asymptotically optimal replication fractions (sum to 1), minimization."""
    means = np.asarray(means, dtype=float)
    var = np.maximum(np.asarray(variances, dtype=float), VAR_FLOOR)
    b = int(np.argmin(means))  # first index wins ties
    others = np.arange(means.size) != b
    gap = np.maximum(means - means[b], DELTA_FLOOR)
    ratio = np.zeros_like(means)
    ratio[others] = var[others] / gap[others] ** 2
    ratio[b] = np.sqrt(var[b] * np.sum(ratio[others] ** 2 / var[others]))
    return ratio / ratio.sum()


def _water_fill(w: np.ndarray, counts: np.ndarray, delta: float) -> np.ndarray:
    """Continuous extra budget x >= 0 with sum delta and x_i = max(0, T w_i - c_i)."""
    pos = w > 0
    order = np.argsort(np.where(pos, counts / np.where(pos, w, 1.0), np.inf), kind="stable")
    brk = np.where(pos, counts / np.where(pos, w, 1.0), np.inf)[order]
    wsum = csum = 0.0
    T = 0.0
    for j, i in enumerate(order):
        if not pos[i]:
            break
        wsum += w[i]
        csum += counts[i]
        T = (delta + csum) / wsum
        nxt = brk[j + 1] if j + 1 < len(order) else np.inf
        if T <= nxt:
            break
    return np.maximum(0.0, T * w - counts)


def _largest_remainder(x: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(x + 1e-12).astype(int)
    short = total - int(base.sum())
    if short > 0:
        rem = x - base
        for i in np.argsort(-rem, kind="stable")[:short]:
            base[i] += 1
    elif short < 0:
        for i in np.argsort(x - base, kind="stable")[: -short]:
            base[i] -= 1
    return base


def allocate(means, variances, counts=None, delta: int = 1) -> np.ndarray:
    """Additional replications per design; the result sums to ``delta``.

    With ``counts`` the allocation steers the *totals* toward the optimal
    proportions, never taking replications away from a design.  Without
    ``counts`` the whole budget is split by the proportions alone.
    """
    if counts is None:
        counts = np.zeros(len(means), dtype=int)
    inp = OcbaInput(means, variances, counts, int(delta))
    w = ocba_weights(inp.means, inp.variances)
    extra = _water_fill(w, inp.counts.astype(float), float(inp.delta))
    return _largest_remainder(extra, inp.delta)


def apcs(means, variances, totals) -> float:
    """Bonferroni lower bound on the probability of correct selection."""
    means = np.asarray(means, dtype=float)
    var = np.maximum(np.asarray(variances, dtype=float), VAR_FLOOR)
    totals = np.asarray(totals, dtype=float)
    if np.any(totals <= 0):
        return -np.inf
    b = int(np.argmin(means))
    others = np.arange(means.size) != b
    se = np.sqrt(var[b] / totals[b] + var[others] / totals[others])
    return float(1.0 - np.sum(ndtr(-(means[others] - means[b]) / se)))
