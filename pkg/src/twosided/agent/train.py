"""Interaction loop: act, step, store, update."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .sac import ReplayBuffer, SacAgent, Transition

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("episode", "cumulative_reward", "critic_loss", "actor_loss", "alpha")


@dataclass(frozen=True)
class CurvePoint:
    episode: int
    cumulative_reward: float
    critic_loss: float | None
    actor_loss: float | None
    alpha: float


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    curve: list[CurvePoint]
    updates: int
    steps: int

    def to_csv(self, path: str | Path) -> None:
        write_curve(self.curve, path)


def write_curve(curve: list[CurvePoint], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for pt in curve:
            w.writerow(["" if v is None else repr(v) for v in (pt.episode, pt.cumulative_reward, pt.critic_loss, pt.actor_loss, pt.alpha)])


def train(
    env_factory: Callable[[int], object],
    agent: SacAgent,
    episodes: int,
    seed: int = 0,
    *,
    max_updates: int | None = None,
    max_seconds: float | None = None,
    buffer: ReplayBuffer | None = None,
    start: int | None = None,
    stop: int | None = None,
) -> TrainResult:
    """Train ``agent`` for ``episodes`` episodes of ``env_factory(episode)``.

    Hitting the end of the data truncates an episode without marking the
    transition terminal; only ruin is terminal. Updates stop once
    ``max_updates`` is reached while interaction continues to the end of
    the episode in progress, after which training ends. ``max_seconds`` is
    checked between episodes and makes the result timing-dependent.
    ``start``/``stop`` are passed to ``env.reset``.
    """
    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    cfg = agent.config
    buffer = buffer or ReplayBuffer(cfg.buffer_capacity)
    act_rng = np.random.default_rng([seed, 1])
    upd_rng = np.random.default_rng([seed, 2])
    curve: list[CurvePoint] = []
    steps = 0
    began = time.monotonic()
    for ep in range(episodes):
        if max_updates is not None and agent.updates >= max_updates:
            break
        if max_seconds is not None and time.monotonic() - began >= max_seconds:
            log.info("wall-clock budget reached after %d episodes", ep)
            break
        env = env_factory(ep)
        obs = env.reset(start, stop)
        done, total = False, 0.0
        critic_losses, actor_losses = [], []
        while not done:
            state = obs.values
            if steps < cfg.warmup_steps:
                action = act_rng.uniform(-1.0, 1.0, env.action_dim)
            else:
                action = agent.act(state, act_rng)
            res = env.step(action)
            steps += 1
            total += res.reward
            terminal = bool(res.diagnostics["ruined"])
            nxt = state if res.next_observation is None else res.next_observation.values
            buffer.append(Transition(state, action, res.reward, nxt, terminal))
            if len(buffer) >= cfg.batch_size:
                for _ in range(cfg.updates_per_step):
                    if max_updates is not None and agent.updates >= max_updates:
                        break
                    rep = agent.update(buffer, upd_rng)
                    critic_losses.append(rep.critic_loss)
                    actor_losses.append(rep.actor_loss)
            obs, done = res.next_observation, res.done
        curve.append(
            CurvePoint(
                ep,
                total,
                float(np.mean(critic_losses)) if critic_losses else None,
                float(np.mean(actor_losses)) if actor_losses else None,
                agent.alpha,
            )
        )
        log.info("episode %d reward %.6f updates %d alpha %.4f", ep, total, agent.updates, agent.alpha)
    return TrainResult(agent.get_params(), curve, agent.updates, steps)


def evaluate(env, agent: SacAgent, start: int | None = None, stop: int | None = None):
    """Deterministic rollout; returns the episode trace."""
    from ..env import run_episode

    return run_episode(env, lambda _env, obs: agent.act(obs.values, deterministic=True), start, stop)
