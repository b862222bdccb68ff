"""Rebalancing environment for signed asset weights plus a lending/borrowing leg.

Per step, for value ``p`` and action ``(w, l)`` with ``sum(|w|) == 1``:

* deployable capital ``c = p * (1 - l)``; ``l > 0`` lends, ``l < 0`` borrows
* interest ``p * l * rate * hours / 8760`` (lend rate if ``l > 0`` else borrow rate)
* cost ``fee * |c * w - previous positions|`` per asset
* positions after trading ``c * w`` reduced by cost, then grown by close-to-close returns

``accounting_mode="strict"`` deducts cost from the portfolio value and shrinks
each position's magnitude by its own cost (short legs included).
``accounting_mode="paper"`` takes cost out of the positions only: they
become ``c * w - cost`` and the value update carries no cost term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .data import DataError, MarketFrame
from .preprocess import NoiseSpec, StateTensor, build_state, inject_noise
from .trace import EpisodeTrace

HOURS_PER_YEAR = 8760.0
WEIGHT_TOL = 1e-9


class InfeasibleAction(ValueError):
    pass


class EpisodeFinished(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class WeightVector:
    asset_weights: np.ndarray
    loan_weight: float

    def __post_init__(self):
        a = np.array(self.asset_weights, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "asset_weights", a)
        object.__setattr__(self, "loan_weight", float(self.loan_weight))
        if a.ndim != 1 or a.size < 1:
            raise InfeasibleAction(f"asset weights must be a non-empty vector, got shape {a.shape}")
        allw = np.append(a, self.loan_weight)
        if not np.all(np.isfinite(allw)):
            raise InfeasibleAction("weights must be finite")
        if np.any(np.abs(allw) > 1 + WEIGHT_TOL):
            raise InfeasibleAction(f"weights outside [-1, 1]: {allw}")
        if abs(np.abs(a).sum() - 1.0) > WEIGHT_TOL:
            raise InfeasibleAction(f"sum of |asset weights| is {np.abs(a).sum()!r}, expected 1")

    @property
    def m(self) -> int:
        return len(self.asset_weights)

    def as_array(self) -> np.ndarray:
        return np.append(self.asset_weights, self.loan_weight)

    @classmethod
    def from_array(cls, arr) -> "WeightVector":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[:-1], arr[-1])


@dataclass(frozen=True)
class EnvConfig:
    fee: float = 0.0005
    borrow_rate: float = 0.05
    lend_rate: float = 0.03
    penalty: float = 25.0
    cost_reward_factor: float = 0.2
    interval_hours: float = 4.0
    initial_value: float = 1000.0
    accounting_mode: str = "strict"
    reward: str = "pnl"
    interest_in_reward: bool = True
    history: int = 49

    def __post_init__(self):
        if self.fee < 0 or self.borrow_rate < 0 or self.lend_rate < 0:
            raise ValueError("fee and interest rates must be non-negative")
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")
        if not self.initial_value > 0 or not self.interval_hours > 0:
            raise ValueError("initial_value and interval_hours must be positive")
        if self.accounting_mode not in ("strict", "paper"):
            raise ValueError(f"accounting_mode must be 'strict' or 'paper', got {self.accounting_mode!r}")
        if self.reward not in ("pnl", "return"):
            raise ValueError(f"reward must be 'pnl' or 'return', got {self.reward!r}")
        if self.history < 1:
            raise ValueError("history must be >= 1")

    def interval_rate(self, loan_weight: float) -> float:
        annual = self.lend_rate if loan_weight > 0 else self.borrow_rate
        return annual * self.interval_hours / HOURS_PER_YEAR


@dataclass
class PortfolioState:
    value: float
    positions: np.ndarray
    t: int = 0


@dataclass(frozen=True, eq=False)
class StepResult:
    reward: float
    next_observation: StateTensor | None
    diagnostics: dict[str, Any] = field(default_factory=dict)
    done: bool = False


def rebalancing_capital(p: float, loan_weight: float) -> float:
    return p * (1.0 - loan_weight)


def accrue_interest(p: float, loan_weight: float, config: EnvConfig) -> float:
    return p * loan_weight * config.interval_rate(loan_weight)


def transaction_costs(target_positions, prev_positions, fee: float) -> np.ndarray:
    return fee * np.abs(np.asarray(target_positions, float) - np.asarray(prev_positions, float))


def split_pnl(positions, returns) -> tuple[np.ndarray, np.ndarray]:
    """Per-asset step PnL split into (profits, losses), both non-negative."""
    x = np.asarray(positions, float) * np.asarray(returns, float)
    return np.maximum(x, 0.0), np.maximum(-x, 0.0)


def pnl_reward(profits, losses, costs, interest: float, c: float, config: EnvConfig) -> float:
    """Profit minus penalized losses and costs, per unit of deployed capital.

    Positive interest counts as profit and negative interest as loss when
    ``config.interest_in_reward`` is set.
    """
    if not c > 0:
        raise ValueError(f"reward denominator must be positive, got {c}")
    gain = float(np.sum(profits))
    loss = float(np.sum(losses))
    if config.interest_in_reward:
        if interest > 0:
            gain += interest
        else:
            loss -= interest
    return (gain - config.penalty * (loss + config.cost_reward_factor * float(np.sum(costs)))) / c


def return_reward(p_next: float, p: float) -> float:
    if not p > 0:
        raise ValueError(f"portfolio value must be positive, got {p}")
    return p_next / p - 1.0


def project_action(raw) -> WeightVector:
    """Clip to [-1, 1] and L1-normalize the asset block; an all-zero block becomes equal weights."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or raw.size < 2:
        raise ValueError(f"raw action must be a vector of length m + 1 >= 2, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw action has non-finite components")
    x = np.clip(raw, -1.0, 1.0)
    a, loan = x[:-1], x[-1]
    s = np.abs(a).sum()
    a = np.full(a.size, 1.0 / a.size) if s < np.finfo(float).tiny else a / s
    return WeightVector(a, loan)


class PortfolioEnv:
    """Episode over decision rows ``start .. stop - 2`` of the interval frame.

    Observations come from ``hourly`` (the source-resolution frame) ending at
    the last source row inside each decision row's bucket; without it the
    interval frame itself is used. With ``project=True`` raw vectors are
    projected onto the feasible set; otherwise they must already be feasible.
    """

    def __init__(
        self,
        config: EnvConfig,
        interval: MarketFrame,
        hourly: MarketFrame | None = None,
        *,
        noise: NoiseSpec | None = None,
        rng: np.random.Generator | None = None,
        project: bool = True,
    ):
        if hourly is not None and hourly.symbols != interval.symbols:
            raise DataError(f"frame symbols differ: {hourly.symbols} vs {interval.symbols}")
        self.config = config
        self.interval = interval
        self.hourly = hourly
        self.noise = noise
        self.rng = rng if rng is not None else np.random.default_rng(noise.seed if noise else 0)
        self.project = project
        self._closes = interval.close
        self.state: PortfolioState | None = None
        self.row = -1
        self.stop = len(interval)
        self.done = True
        self._records: list[tuple] = []

    @property
    def m(self) -> int:
        return self.interval.n_assets

    @property
    def action_dim(self) -> int:
        return self.m + 1

    def first_valid_row(self) -> int:
        for j in range(len(self.interval)):
            try:
                self._clean_obs(j)
                return j
            except DataError:
                continue
        raise DataError("no row has enough history for an observation")

    def _clean_obs(self, j: int) -> StateTensor:
        n = self.config.history
        if self.hourly is None:
            return build_state(self.interval, int(self.interval.timestamps[j]), n)
        span = int(round(self.interval.interval * 3600)) - int(round(self.hourly.interval * 3600))
        return build_state(self.hourly, int(self.interval.timestamps[j]) + span, n)

    def observe(self, j: int | None = None) -> StateTensor:
        obs = self._clean_obs(self.row if j is None else j)
        if self.noise is not None:
            obs = inject_noise(obs, self.noise, self.rng)
        return obs

    def reset(self, start: int | None = None, stop: int | None = None) -> StateTensor:
        stop = len(self.interval) if stop is None else stop
        if not 0 < stop <= len(self.interval):
            raise DataError(f"stop row {stop} outside frame of {len(self.interval)} rows")
        start = self.first_valid_row() if start is None else start
        if start < 0 or start > stop - 2:
            raise DataError(f"start row {start} leaves no step before stop row {stop}")
        obs = self.observe(start)
        self.row, self.stop, self.done = start, stop, False
        self.state = PortfolioState(self.config.initial_value, np.zeros(self.m), 0)
        self._records = [
            (
                int(self.interval.timestamps[start]),
                np.zeros(self.m), 0.0, 0.0, 0.0, np.zeros(self.m), 0.0, self.config.initial_value,
            )
        ]
        return obs

    def history_returns(self, window: int) -> np.ndarray:
        """Trailing close-to-close returns up to the current row, shape (<= window, m)."""
        lo = max(0, self.row - window)
        c = self._closes[:, lo : self.row + 1]
        return (c[:, 1:] / c[:, :-1] - 1.0).T

    def _as_action(self, action) -> WeightVector:
        if isinstance(action, WeightVector):
            return action
        arr = np.asarray(action, dtype=float)
        if arr.shape != (self.action_dim,):
            raise InfeasibleAction(f"action must have length {self.action_dim}, got {arr.shape}")
        return project_action(arr) if self.project else WeightVector.from_array(arr)

    def step(self, action) -> StepResult:
        if self.done or self.state is None:
            raise EpisodeFinished("episode is finished; call reset()")
        act = self._as_action(action)
        if act.m != self.m:
            raise InfeasibleAction(f"action has {act.m} assets, environment has {self.m}")
        cfg = self.config
        j = self.row
        p = self.state.value
        w, loan = act.asset_weights, act.loan_weight

        c = rebalancing_capital(p, loan)
        interest = accrue_interest(p, loan, cfg)
        target = c * w
        cost = transaction_costs(target, self.state.positions, cfg.fee)
        if cfg.accounting_mode == "paper":
            port = target - cost
        else:
            port = np.sign(target) * np.maximum(np.abs(target) - cost, 0.0)
        r = self._closes[:, j + 1] / self._closes[:, j] - 1.0
        pnl = port * r
        p_next = p + pnl.sum() + interest
        if cfg.accounting_mode == "strict":
            p_next -= cost.sum()

        degenerate = not c > 0
        if cfg.reward == "pnl":
            profits, losses = split_pnl(port, r)
            reward = pnl_reward(profits, losses, cost, interest, p if degenerate else c, cfg)
        else:
            reward = return_reward(p_next, p)

        ruined = not p_next > 0
        self.row = j + 1
        self.state = PortfolioState(p_next, port * (1.0 + r), self.state.t + 1)
        self.done = ruined or self.row >= self.stop - 1
        self._records.append(
            (int(self.interval.timestamps[self.row]), w.copy(), loan, c, interest, cost, reward, p_next)
        )
        diagnostics = {
            "capital": c,
            "interest": interest,
            "cost": cost,
            "profit": np.maximum(pnl, 0.0),
            "loss": np.maximum(-pnl, 0.0),
            "positions_after_trade": port,
            "returns": r,
            "p_next": p_next,
            "degenerate_capital": degenerate,
            "ruined": ruined,
            "truncated": self.done and not ruined,
        }
        obs = None
        if not ruined:
            try:
                obs = self.observe()
            except DataError:
                obs = None
        return StepResult(float(reward), obs, diagnostics, self.done)

    def trace(self) -> EpisodeTrace:
        cols = list(zip(*self._records))
        return EpisodeTrace(
            symbols=self.interval.symbols,
            timestamps=np.array(cols[0], dtype=np.int64),
            weights=np.array(cols[1], dtype=float),
            loan_weight=np.array(cols[2], dtype=float),
            capital=np.array(cols[3], dtype=float),
            interest=np.array(cols[4], dtype=float),
            cost=np.array(cols[5], dtype=float),
            reward=np.array(cols[6], dtype=float),
            p=np.array(cols[7], dtype=float),
        )


def reset(config: EnvConfig, frames: tuple[MarketFrame | None, MarketFrame], start: int | None = None, **kwargs):
    """Build an environment over ``(hourly, interval)`` frames and return ``(env, first_observation)``."""
    hourly, interval = frames
    env = PortfolioEnv(config, interval, hourly, **kwargs)
    return env, env.reset(start)


def run_episode(env: PortfolioEnv, policy, start: int | None = None, stop: int | None = None) -> EpisodeTrace:
    """Roll ``policy(env, obs) -> action`` through one episode and return its trace."""
    obs = env.reset(start, stop)
    done = False
    while not done:
        res = env.step(policy(env, obs))
        obs, done = res.next_observation, res.done
    return env.trace()

