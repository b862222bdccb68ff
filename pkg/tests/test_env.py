from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twosided.data import DataError
from twosided.env import (
    EnvConfig,
    EpisodeFinished,
    InfeasibleAction,
    PortfolioEnv,
    WeightVector,
    accrue_interest,
    pnl_reward,
    project_action,
    rebalancing_capital,
    reset,
    return_reward,
    run_episode,
    split_pnl,
    transaction_costs,
)
from twosided.trace import EpisodeTrace

from .conftest import frame_from_closes, random_frame

FRICTIONLESS = EnvConfig(fee=0.0, borrow_rate=0.0, lend_rate=0.0, history=1)


def test_reset_initial_state(rng):
    f = random_frame(rng, 2, 10)
    env, obs = reset(EnvConfig(history=3), (None, f))
    assert env.state.value == 1000.0
    assert np.array_equal(env.state.positions, np.zeros(2))
    assert obs.shape == (2, 4, 3)
    assert env.row == 2  # first row with three rows of history


def test_last_start_done_after_one_step_and_bounds(rng):
    f = random_frame(rng, 1, 6)
    env = PortfolioEnv(EnvConfig(history=1), f)
    env.reset(start=4)
    res = env.step(np.array([1.0, 0.0]))
    assert res.done and res.diagnostics["truncated"]
    with pytest.raises(EpisodeFinished):
        env.step(np.array([1.0, 0.0]))
    with pytest.raises(DataError):
        env.reset(start=5)
    with pytest.raises(DataError):
        env.reset(start=0, stop=7)


def test_capital_examples():
    assert rebalancing_capital(1000, 0) == 1000
    assert rebalancing_capital(1000, 0.5) == 500
    assert rebalancing_capital(1000, -1) == 2000


def test_interest_examples():
    cfg = EnvConfig()
    assert accrue_interest(1000, 0, cfg) == 0
    assert accrue_interest(1000, 0.5, cfg) == pytest.approx(1000 * 0.5 * 0.03 * 4 / 8760, rel=1e-15)
    assert accrue_interest(1000, 0.5, cfg) == pytest.approx(0.006849, abs=5e-7)
    assert accrue_interest(1000, -0.5, cfg) == pytest.approx(-0.011416, abs=5e-7)


def test_cost_examples():
    assert not transaction_costs([3.0, -2.0], [3.0, -2.0], 0.0005).any()
    assert transaction_costs([500.0], [0.0], 0.0005)[0] == pytest.approx(0.25, rel=1e-15)
    assert transaction_costs([-500.0], [500.0], 0.0005)[0] == pytest.approx(0.50, rel=1e-15)


def _one_step(mode):
    f = frame_from_closes([100.0, 102.0, 103.0])
    cfg = EnvConfig(borrow_rate=0.0, lend_rate=0.0, accounting_mode=mode, history=1)
    env = PortfolioEnv(cfg, f)
    env.reset(start=0)
    return env.step(WeightVector([1.0], 0.0))


def test_strict_step_hand_example():
    res = _one_step("strict")
    d = res.diagnostics
    assert d["cost"][0] == pytest.approx(0.5, rel=1e-15)
    assert d["positions_after_trade"][0] == pytest.approx(999.5, rel=1e-15)
    assert d["p_next"] == pytest.approx(1019.49, rel=1e-13)


def test_paper_step_hand_example():
    assert _one_step("paper").diagnostics["p_next"] == pytest.approx(1019.99, rel=1e-13)


def test_frictionless_ten_percent():
    env = PortfolioEnv(FRICTIONLESS, frame_from_closes([10.0, 11.0, 12.0]))
    env.reset(start=0)
    assert env.step(WeightVector([1.0], 0.0)).diagnostics["p_next"] == pytest.approx(1100.0, rel=1e-15)


def test_diagnostics_match_state(rng):
    env = PortfolioEnv(EnvConfig(history=2), random_frame(rng, 3, 8))
    env.reset()
    res = env.step(rng.uniform(-1, 1, 4))
    assert res.diagnostics["p_next"] == env.state.value
    assert env.trace().p[-1] == env.state.value


def test_reward_examples():
    cfg = EnvConfig(interest_in_reward=False)
    z = np.zeros(2)
    assert pnl_reward(z, z, z, 0.0, 1000, cfg) == 0.0
    assert pnl_reward([10.0], [0.0], [0.0], 0.0, 1000, cfg) == 0.01
    assert pnl_reward([0.0], [10.0], [5.0], 0.0, 1000, cfg) == pytest.approx(-0.275, rel=1e-15)
    with pytest.raises(ValueError):
        pnl_reward(z, z, z, 0.0, 0.0, cfg)


def test_interest_joins_profit_or_loss():
    on = EnvConfig()
    assert pnl_reward([0.0], [0.0], [0.0], 2.0, 100.0, on) == 0.02
    assert pnl_reward([0.0], [0.0], [0.0], -2.0, 100.0, on) == -0.5
    assert pnl_reward([0.0], [0.0], [0.0], -2.0, 100.0, EnvConfig(interest_in_reward=False)) == 0.0


def test_return_reward_examples():
    assert return_reward(1000, 1000) == 0
    assert return_reward(1100, 1000) == pytest.approx(0.10, abs=1e-15)
    assert return_reward(900, 1000) == pytest.approx(-0.10, abs=1e-15)


def test_split_pnl_signs():
    prof, loss = split_pnl([100.0, -100.0, 50.0], [0.1, 0.1, -0.2])
    assert np.allclose(prof, [10.0, 0.0, 0.0]) and np.allclose(loss, [0.0, 10.0, 10.0])


@given(
    st.lists(st.floats(0, 100), min_size=1, max_size=4),
    st.floats(0, 100), st.floats(0, 100), st.floats(1e-3, 10), st.floats(1, 1e4),
)
def test_reward_monotone(prof, loss, cost, delta, c):
    cfg = EnvConfig(interest_in_reward=False)
    base = pnl_reward(prof, [loss], [cost], 0.0, c, cfg)
    assert pnl_reward(prof + [delta], [loss], [cost], 0.0, c, cfg) > base
    assert pnl_reward(prof, [loss + delta], [cost], 0.0, c, cfg) < base
    assert pnl_reward(prof, [loss], [cost + delta], 0.0, c, cfg) < base


def test_projection_examples():
    w = project_action([2.0, -2.0, 0.0])
    assert list(w.asset_weights) == [0.5, -0.5] and w.loan_weight == 0.0
    feasible = np.array([0.2, -0.3, 0.5, -0.7])
    np.testing.assert_allclose(project_action(feasible).as_array(), feasible, atol=1e-12)
    z = project_action([0.0, 0.0, 0.3])
    assert list(z.asset_weights) == [0.5, 0.5] and z.loan_weight == 0.3


def test_projection_bulk_extremes():
    rng = np.random.default_rng(0)
    scales = 10.0 ** rng.uniform(-8, 6, (10**5, 1))
    raw = rng.standard_normal((10**5, 4)) * scales
    raw[::97] = np.sign(raw[::97]) * 1e6
    for r in raw:
        w = project_action(r)  # constructor validates the invariants
        assert abs(np.abs(w.asset_weights).sum() - 1.0) <= 1e-9


def test_weight_vector_invariants():
    with pytest.raises(InfeasibleAction):
        WeightVector([0.5, 0.4], 0.0)
    with pytest.raises(InfeasibleAction):
        WeightVector([1.0], 1.5)
    with pytest.raises(InfeasibleAction):
        WeightVector([np.nan], 0.0)


def test_unprojected_env_rejects_infeasible(rng):
    env = PortfolioEnv(EnvConfig(history=1), random_frame(rng, 2, 5), project=False)
    env.reset()
    with pytest.raises(InfeasibleAction):
        env.step(np.array([2.0, 0.0, 0.0]))


def test_degenerate_capital_uses_value_denominator(rng):
    env = PortfolioEnv(EnvConfig(history=1), random_frame(rng, 2, 5))
    env.reset()
    res = env.step(WeightVector([0.5, 0.5], 1.0))
    d = res.diagnostics
    assert d["degenerate_capital"] and d["capital"] == 0
    assert res.reward == pytest.approx(d["interest"] / 1000.0, rel=1e-15)


@given(st.integers(0, 10**6), st.integers(1, 4), st.sampled_from(["strict", "paper"]))
def test_leverage_bound_and_conservation(seed, m, mode):
    rng = np.random.default_rng(seed)
    cfg = EnvConfig(fee=rng.uniform(0, 0.01), accounting_mode=mode, history=1)
    env = PortfolioEnv(cfg, random_frame(rng, m, 12))
    env.reset()
    done = False
    while not done:
        p = env.state.value
        res = env.step(rng.uniform(-1.5, 1.5, m + 1))
        d = res.diagnostics
        if mode == "strict":
            # paper mode subtracts cost from a short leg, which enlarges it
            assert np.abs(d["positions_after_trade"]).sum() <= d["capital"] * (1 + 1e-12)
        expect = p + (d["positions_after_trade"] * d["returns"]).sum() + d["interest"]
        if mode == "strict":
            expect -= d["cost"].sum()
        assert d["p_next"] == pytest.approx(expect, rel=1e-12)
        done = res.done


@given(st.integers(0, 10**6), st.integers(3, 30))
def test_short_mirrors_long(seed, t):
    f = random_frame(np.random.default_rng(seed), 1, t)
    per_unit = {}
    for sign in (1.0, -1.0):
        env = PortfolioEnv(FRICTIONLESS, f)
        env.reset(start=0)
        out, done = [], False
        while not done:
            p = env.state.value
            res = env.step(WeightVector([sign], 0.0))
            out.append((res.diagnostics["p_next"] - p) / p)
            done = res.done
        per_unit[sign] = np.array(out)
    np.testing.assert_allclose(per_unit[-1.0], -per_unit[1.0], rtol=1e-12, atol=1e-15)
    r = f.close[0, 1:] / f.close[0, :-1] - 1.0
    np.testing.assert_allclose(per_unit[1.0], r, rtol=1e-12, atol=1e-15)


def test_trace_csv_round_trip(tmp_path, rng):
    env = PortfolioEnv(EnvConfig(history=2), random_frame(rng, 2, 10))
    tr = run_episode(env, lambda e, o: rng.uniform(-1, 1, 3))
    tr.to_csv(tmp_path / "t.csv")
    back = EpisodeTrace.from_csv(tmp_path / "t.csv")
    for name in ("timestamps", "weights", "loan_weight", "capital", "interest", "cost", "reward", "p"):
        assert np.array_equal(getattr(back, name), getattr(tr, name))
    assert back.symbols == tr.symbols
    assert tr.steps == len(tr) - 1 == 10 - 1 - 1
