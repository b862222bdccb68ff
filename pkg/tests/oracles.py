"""Independent reference computations used by several test modules."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm


def simplex_grid(m: int, steps: int = 100) -> np.ndarray:
    """All w >= 0 with sum(w) <= 1 on a 1/steps lattice, shape (K, m)."""
    pts = np.zeros((1, 0), dtype=np.int16)
    for _ in range(m):
        used = pts.sum(axis=1)
        nxt = [np.column_stack([pts[used <= steps - k], np.full((int((used <= steps - k).sum()), 1), k, np.int16)]) for k in range(steps + 1)]
        pts = np.concatenate(nxt)
    return pts.astype(float) / steps


def grid_risk(grid: np.ndarray, sample: np.ndarray, measure: str, alpha: float = 0.95, chunk: int = 200_000) -> np.ndarray:
    """Definitional risk of every grid portfolio on ``sample``."""
    dev = sample - sample.mean(axis=0)
    t = sample.shape[0]
    if measure == "MV":
        cov = dev.T @ dev / (t - 1)
        return np.einsum("ki,ij,kj->k", grid, cov, grid)
    if measure == "CVaR":
        cov = dev.T @ dev / (t - 1)
        sd = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", grid, cov, grid), 0.0))
        return -(grid @ sample.mean(axis=0)) + sd * norm.pdf(norm.ppf(alpha)) / (1 - alpha)
    out = np.empty(len(grid))
    for lo in range(0, len(grid), chunk):
        out[lo : lo + chunk] = np.abs(grid[lo : lo + chunk] @ dev.T).mean(axis=1)
    return out


class GridOracle:
    """Minimum grid risk among portfolios whose mean return reaches a target."""

    def __init__(self, grid: np.ndarray, sample: np.ndarray, measure: str, alpha: float = 0.95):
        ret = grid @ sample.mean(axis=0)
        risk = grid_risk(grid, sample, measure, alpha)
        order = np.argsort(-ret, kind="stable")
        self.ret = ret[order]
        self.best = np.minimum.accumulate(risk[order])

    def min_risk(self, target: float, slack: float = 1e-12) -> float:
        # ret is descending; the prefix with ret >= target - slack is feasible
        k = int(np.searchsorted(-self.ret, -(target - slack), side="right"))
        return float(self.best[k - 1]) if k else float("inf")


def brute_mad(w, sample) -> float:
    series = [sum(wi * ri for wi, ri in zip(w, row)) for row in sample]
    mean = sum(series) / len(series)
    return sum(abs(x - mean) for x in series) / len(series)


def brute_variance(w, sample) -> float:
    series = [sum(wi * ri for wi, ri in zip(w, row)) for row in sample]
    mean = sum(series) / len(series)
    return sum((x - mean) ** 2 for x in series) / (len(series) - 1)
