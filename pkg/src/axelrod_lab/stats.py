"""Small statistical helpers shared across experiments and tests."""

from __future__ import annotations

import math

import numpy as np


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion k/n at z sigmas."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


def mean_se(values) -> tuple[float, float]:
    """Sample mean and its standard error (ddof=1; SE 0 for n < 2)."""
    a = np.asarray(values, dtype=float)
    m = float(a.mean())
    se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0
    return m, se


def combined_se(se_a: float, se_b: float) -> float:
    return math.hypot(se_a, se_b)
