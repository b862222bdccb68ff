"""SAC sanity run on a two-asset market where one asset gains 1% and the other loses 1% per step.

Prints the best constant-action mean reward (grid search) and, per seed, the
deterministic policy's average weights and its fraction of that optimum.
"""

import argparse
import math
import time

import numpy as np

from twosided.agent import NetworkSpec, SacAgent, SacConfig, evaluate, train
from twosided.env import EnvConfig, PortfolioEnv, WeightVector
from twosided.synthetic import trend_market


def mean_reward(cfg: EnvConfig, frame, action) -> float:
    env = PortfolioEnv(cfg, frame)
    env.reset()
    rewards, done = [], False
    while not done:
        res = env.step(action)
        rewards.append(res.reward)
        done = res.done
    return float(np.mean(rewards))


def grid_optimum(cfg: EnvConfig, frame) -> tuple[float, np.ndarray]:
    best, arg = -math.inf, None
    for w1 in np.linspace(-1, 1, 21):
        for side in (-1.0, 1.0):
            if abs(w1) == 1 and side < 0:
                continue
            w = np.array([w1, side * (1 - abs(w1))])
            for loan in np.linspace(-1, 0.9, 20):
                v = mean_reward(cfg, frame, WeightVector(w, float(loan)))
                if v > best:
                    best, arg = v, np.array([*w, loan])
    return best, arg


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--updates", type=int, default=5000)
    ap.add_argument("--rows", type=int, default=120)
    ap.add_argument("--reward", choices=("pnl", "return"), default="pnl")
    ap.add_argument("--interest-in-reward", action="store_true")
    args = ap.parse_args()

    cfg = EnvConfig(history=16, reward=args.reward, interest_in_reward=args.interest_in_reward)
    frame = trend_market([0.01, -0.01], args.rows, symbols=("UP", "DOWN"))
    best, arg = grid_optimum(cfg, frame)
    print(f"grid optimum mean reward {best:.6f} at w1, w2, loan = {np.round(arg, 3).tolist()}")
    for seed in args.seeds:
        t0 = time.perf_counter()
        agent = SacAgent((2, 4, cfg.history), 3, NetworkSpec(), SacConfig(), seed=seed)
        res = train(lambda ep: PortfolioEnv(cfg, frame), agent, episodes=10**6, seed=seed, max_updates=args.updates)
        tr = evaluate(PortfolioEnv(cfg, frame), agent)
        w = tr.weights[1:].mean(axis=0)
        ratio = tr.reward[1:].mean() / best
        print(
            f"seed {seed}: w={np.round(w, 3).tolist()} loan={tr.loan_weight[1:].mean():.3f} "
            f"reward/optimum={ratio:.3f} episodes={len(res.curve)} {time.perf_counter() - t0:.0f}s",
            flush=True,
        )


if __name__ == "__main__":
    main()
