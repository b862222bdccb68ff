"""Single-period benchmark allocators: MV, MAD and parametric-normal CVaR.

Frontier portfolios are long-only with ``sum(w) <= 1``; whatever is not
invested is lent out, so the zero portfolio is always feasible. A point is
picked by maximizing ``expected_return - risk_aversion * risk`` and the
strategy falls back to lending everything when no point beats the lending
rate.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import cvxpy as cp
import numpy as np
from scipy.stats import norm

from .env import HOURS_PER_YEAR, WeightVector, project_action

log = logging.getLogger(__name__)

MEASURES = ("MV", "MAD", "CVaR")
# tried in order; the interior-point default occasionally stalls next to a corner
SOLVERS = ("CLARABEL", "CVXOPT", "SCS")


class DegenerateSample(ValueError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SppoConfig:
    measure: str = "MV"
    alpha: float = 0.95
    risk_aversion: float = 4.0
    window: int = 180
    frontier_points: int = 50
    mad_form: str = "portfolio"
    lend_rate: float = 0.03
    interval_hours: float = 4.0

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"measure must be one of {MEASURES}, got {self.measure!r}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.risk_aversion > 0:
            raise ValueError("risk_aversion must be positive")
        if self.window < 2 or self.frontier_points < 2:
            raise ValueError("window and frontier_points must be >= 2")
        if self.mad_form not in ("portfolio", "per_asset"):
            raise ValueError(f"mad_form must be 'portfolio' or 'per_asset', got {self.mad_form!r}")

    @property
    def cash_utility(self) -> float:
        return self.lend_rate * self.interval_hours / HOURS_PER_YEAR


@dataclass(frozen=True, eq=False)
class FrontierPoint:
    weights: np.ndarray
    expected_return: float
    risk: float


def _sample(sample) -> np.ndarray:
    r = np.asarray(sample, dtype=float)
    if r.ndim != 2:
        raise ValueError(f"return sample must be 2-D (T, m), got shape {r.shape}")
    if r.shape[0] < 2:
        raise DegenerateSample(f"estimation window needs >= 2 rows, got {r.shape[0]}")
    if not np.all(np.isfinite(r)):
        raise ValueError("return sample has non-finite entries")
    return r


def _weights(weights, m: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (m,):
        raise ValueError(f"weights have shape {w.shape}, sample has {m} assets")
    return w


def portfolio_variance(weights, sample) -> float:
    """Double sum of w_i w_j sigma_i sigma_j rho_ij over sample statistics."""
    r = _sample(sample)
    w = _weights(weights, r.shape[1])
    sd = r.std(axis=0, ddof=1)
    cov = np.cov(r, rowvar=False, ddof=1).reshape(len(w), len(w))
    m = len(w)
    total = 0.0
    for i in range(m):
        total += w[i] ** 2 * sd[i] ** 2
        for j in range(m):
            if j == i or sd[i] == 0 or sd[j] == 0:
                continue
            rho = cov[i, j] / (sd[i] * sd[j])
            total += w[i] * w[j] * sd[i] * sd[j] * rho
    return float(total)


def portfolio_mad(weights, sample, form: str = "portfolio") -> float:
    """Mean absolute deviation of the weighted return series around its mean.

    ``form="per_asset"`` instead averages ``|r_i(t) - mean(r_P)|`` over assets
    and time, i.e. unweighted asset returns around the portfolio mean.
    """
    r = _sample(sample)
    w = _weights(weights, r.shape[1])
    rp = r @ w
    if form == "per_asset":
        return float(np.mean(np.abs(r - rp.mean())))
    return float(np.mean(np.abs(rp - rp.mean())))


def normal_var_cvar(mu: float, sigma: float, alpha: float) -> tuple[float, float]:
    """Loss-side VaR and CVaR at confidence ``alpha`` for N(mu, sigma^2) returns."""
    z = norm.ppf(alpha)
    return float(sigma * z - mu), float(-mu + sigma * norm.pdf(z) / (1.0 - alpha))


def portfolio_cvar(weights, sample, alpha: float = 0.95) -> float:
    r = _sample(sample)
    w = _weights(weights, r.shape[1])
    rp = r @ w
    return normal_var_cvar(rp.mean(), rp.std(ddof=1), alpha)[1]


def risk(weights, sample, config: SppoConfig) -> float:
    if config.measure == "MV":
        return portfolio_variance(weights, sample)
    if config.measure == "MAD":
        return portfolio_mad(weights, sample, config.mad_form)
    return portfolio_cvar(weights, sample, config.alpha)


@lru_cache(maxsize=64)
def _problem(measure: str, t: int, m: int, mad_form: str, alpha: float, targeted: bool):
    w = cp.Variable(m, nonneg=True)
    mu = cp.Parameter(m)
    dev = cp.Parameter((t, m))
    raw = cp.Parameter((t, m))
    tau = cp.Parameter()
    if measure == "MV":
        obj = cp.sum_squares(dev @ w) / (t - 1)
    elif measure == "MAD":
        if mad_form == "per_asset":
            obj = cp.sum(cp.abs(raw - mu @ w)) / (t * m)
        else:
            obj = cp.sum(cp.abs(dev @ w)) / t
    else:
        k = norm.pdf(norm.ppf(alpha)) / (1.0 - alpha)
        obj = -(mu @ w) + k * cp.norm(dev @ w, 2) / np.sqrt(t - 1)
    cons = [cp.sum(w) <= 1]
    if targeted:
        cons.append(mu @ w >= tau)
    return cp.Problem(cp.Minimize(obj), cons), w, mu, dev, raw, tau


def _tie_groups(r: np.ndarray) -> list[list[int]]:
    groups: list[list[int]] = []
    for i in range(r.shape[1]):
        for g in groups:
            if np.array_equal(r[:, g[0]], r[:, i]):
                g.append(i)
                break
        else:
            groups.append([i])
    return [g for g in groups if len(g) > 1]


def _clean(w: np.ndarray, ties: list[list[int]]) -> np.ndarray:
    w = np.clip(np.asarray(w, dtype=float), 0.0, None)
    for g in ties:
        w[g] = w[g].mean()
    s = w.sum()
    return w / s if s > 1 else w


def efficient_frontier(sample, config: SppoConfig) -> list[FrontierPoint]:
    """Minimum-risk portfolios for return targets from the minimum-risk point up to the best asset mean."""
    r = _sample(sample)
    t, m = r.shape
    if np.all(np.ptp(r, axis=0) == 0):
        raise DegenerateSample("every asset has zero dispersion over the window")
    mu_raw = r.mean(axis=0)
    scale = float(r.std())
    ties = _tie_groups(r)

    def solve(target: float | None) -> np.ndarray:
        prob, w, mu, dev, raw, tau = _problem(config.measure, t, m, config.mad_form, config.alpha, target is not None)
        mu.value = mu_raw / scale
        dev.value = (r - mu_raw) / scale
        raw.value = r / scale
        tau.value = 0.0 if target is None else target / scale
        fallback = None
        for solver in SOLVERS:
            try:
                with warnings.catch_warnings():
                    # inaccurate statuses are handled below
                    warnings.simplefilter("ignore", UserWarning)
                    prob.solve(solver=solver)
            except cp.SolverError as exc:
                log.debug("%s failed at target %r: %s", solver, target, exc)
                continue
            if prob.status == cp.OPTIMAL and w.value is not None:
                return _clean(w.value, ties)
            if prob.status == cp.OPTIMAL_INACCURATE and w.value is not None and fallback is None:
                fallback = w.value.copy()
        if fallback is None:
            raise SolverError(f"{config.measure} frontier: no solver reached optimality at target {target!r}")
        log.warning("%s frontier: inaccurate solution accepted at target %r", config.measure, target)
        return _clean(fallback, ties)

    def point(weights: np.ndarray) -> FrontierPoint:
        return FrontierPoint(weights, float(mu_raw @ weights), risk(weights, r, config))

    first = point(solve(None))
    top = float(mu_raw.max())
    # no asset beats the minimum-risk point (e.g. all means negative): nothing to sweep
    if top <= first.expected_return + 1e-12 * scale:
        return [first]
    points = [first]
    for target in np.linspace(first.expected_return, top, config.frontier_points)[1:-1]:
        points.append(point(solve(float(target))))
    best = np.flatnonzero(mu_raw == mu_raw.max())
    corner = np.zeros(m)
    corner[best] = 1.0 / len(best)
    points.append(point(corner))
    return points


def utility(pt: FrontierPoint, risk_aversion: float) -> float:
    return pt.expected_return - risk_aversion * pt.risk


def cash_action(m: int) -> WeightVector:
    """Lend everything: loan weight 1 with the zero asset block projected to equal weights."""
    return project_action(np.append(np.zeros(m), 1.0))


def select_weights(frontier: list[FrontierPoint], config: SppoConfig, cash_utility: float | None = None) -> WeightVector:
    if not frontier:
        raise ValueError("frontier is empty")
    u_cash = config.cash_utility if cash_utility is None else cash_utility
    # order-independent: highest utility, then lowest risk, then lexicographic weights
    best = min(frontier, key=lambda p: (-utility(p, config.risk_aversion), p.risk, tuple(p.weights)))
    invested = float(best.weights.sum())
    m = len(best.weights)
    if utility(best, config.risk_aversion) < u_cash or invested <= 1e-12:
        return cash_action(m)
    return WeightVector(best.weights / invested, 1.0 - invested)


def equal_weight_action(m: int) -> WeightVector:
    if m < 1:
        raise ValueError("need at least one asset")
    return WeightVector(np.full(m, 1.0 / m), 0.0)


def frontier_to_csv(frontier: list[FrontierPoint], path: str | Path, symbols=None) -> None:
    m = len(frontier[0].weights)
    names = [f"w_{s}" for s in symbols] if symbols else [f"w_{i + 1}" for i in range(m)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target_return", "risk", *names])
        for p in frontier:
            w.writerow([repr(p.expected_return), repr(p.risk), *(repr(float(x)) for x in p.weights)])
