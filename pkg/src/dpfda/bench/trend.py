"""Ordered-alternative trend tests for Monte Carlo output."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class TrendResult:
    statistic: float
    z: float
    p_value: float
    decreasing: bool


def jonckheere_decreasing(groups: Sequence[Sequence[float]], level: float = 0.05) -> TrendResult:
    """One-sided Jonckheere-Terpstra test against a decreasing trend across ordered groups.

    ``groups[0]`` is the first level of the ordering.  The statistic counts pairs
    (earlier, later) with the earlier value larger (ties count 1/2); its null
    mean and tie-corrected variance give a normal approximation.
    """
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise ValueError("need at least two non-empty groups")
    stat = 0.0
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            diff = groups[i][:, None] - groups[j][None, :]
            stat += float(np.sum(diff > 0) + 0.5 * np.sum(diff == 0))
    sizes = np.array([g.size for g in groups], dtype=float)
    N = sizes.sum()
    mean = (N * N - np.sum(sizes**2)) / 4.0
    _, tie_counts = np.unique(np.concatenate(groups), return_counts=True)
    t = tie_counts.astype(float)

    def part(x):
        return np.sum(x * (x - 1) * (2 * x + 5))

    var = (N * (N - 1) * (2 * N + 5) - part(sizes) - part(t)) / 72.0
    var += np.sum(sizes * (sizes - 1) * (sizes - 2)) * np.sum(t * (t - 1) * (t - 2)) / (36.0 * N * (N - 1) * (N - 2))
    var += np.sum(sizes * (sizes - 1)) * np.sum(t * (t - 1)) / (8.0 * N * (N - 1))
    z = (stat - mean) / math.sqrt(var) if var > 0 else 0.0
    p = float(stats.norm.sf(z))
    return TrendResult(stat, float(z), p, p < level)


def isotonic_decreasing(values: Sequence[float], weights: Sequence[float] | None = None) -> np.ndarray:
    """Least-squares non-increasing fit (pool adjacent violators)."""
    y = np.asarray(values, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    blocks = []  # (mean, weight, count)
    for yi, wi in zip(y, w):
        blocks.append([yi, wi, 1])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            m2, w2, c2 = blocks.pop()
            m1, w1, c1 = blocks.pop()
            blocks.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, c1 + c2])
    return np.concatenate([np.full(c, m) for m, _, c in blocks])
