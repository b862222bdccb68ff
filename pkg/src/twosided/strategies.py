"""Allocation policies that drive a :class:`~twosided.env.PortfolioEnv` episode.

A policy is a callable ``policy(env, obs) -> action`` where the action is a
:class:`WeightVector` or a raw vector for the environment to project.
"""

from __future__ import annotations

import logging

import numpy as np

from .data import MarketFrame
from .env import PortfolioEnv, WeightVector
from .sppo import DegenerateSample, SppoConfig, cash_action, efficient_frontier, equal_weight_action, select_weights

log = logging.getLogger(__name__)


class EqualWeight:
    name = "equal_weight"

    def __call__(self, env: PortfolioEnv, obs) -> WeightVector:
        return equal_weight_action(env.m)


class SppoStrategy:
    """Re-solve the frontier every step on the trailing ``config.window`` returns.

    ``frame`` is the interval frame the window is drawn from. It may extend
    before the episode's own frame so the first test steps see a full window;
    only rows at or before the current decision time are used.
    """

    def __init__(self, config: SppoConfig, frame: MarketFrame | None = None):
        self.config = config
        self.frame = frame
        self.name = f"sppo_{config.measure.lower()}"
        self.cash_steps = 0

    def window(self, env: PortfolioEnv) -> np.ndarray:
        frame = self.frame if self.frame is not None else env.interval
        now = int(env.interval.timestamps[env.row])
        j = frame.index_at_or_before(now)
        if j < 0 or int(frame.timestamps[j]) != now:
            raise ValueError(f"decision time {now} is not a row of the return frame")
        c = frame.close[:, max(0, j - self.config.window) : j + 1]
        return (c[:, 1:] / c[:, :-1] - 1.0).T

    def __call__(self, env: PortfolioEnv, obs) -> WeightVector:
        sample = self.window(env)
        try:
            frontier = efficient_frontier(sample, self.config)
        except DegenerateSample as exc:
            log.debug("cash at row %d: %s", env.row, exc)
            self.cash_steps += 1
            return cash_action(env.m)
        return select_weights(frontier, self.config)


class AgentPolicy:
    """Most likely action of a trained agent (the Gaussian mean, squashed)."""

    def __init__(self, agent, name: str = "rl"):
        self.agent = agent
        self.name = name

    def __call__(self, env: PortfolioEnv, obs) -> np.ndarray:
        return self.agent.act(obs.values, deterministic=True)
