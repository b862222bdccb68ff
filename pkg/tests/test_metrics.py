from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twosided.metrics import (
    REPORT_COLUMNS,
    MetricsReport,
    compute_report,
    max_drawdown,
    step_returns,
    weight_return_distribution,
    weight_return_values,
)
from twosided.trace import EpisodeTrace, TraceError

from .conftest import frame_from_closes


def _trace(p, weights=None, loan=None, symbols=("S0",), t0=1_600_000_000):
    p = np.asarray(p, float)
    n, m = len(p), len(symbols)
    return EpisodeTrace(
        symbols=symbols,
        timestamps=t0 + 14400 * np.arange(n),
        weights=np.zeros((n, m)) if weights is None else np.asarray(weights, float),
        loan_weight=np.zeros(n) if loan is None else np.asarray(loan, float),
        capital=np.zeros(n),
        interest=np.zeros(n),
        cost=np.zeros((n, m)),
        reward=np.zeros(n),
        p=p,
    )


def test_step_return_examples():
    assert step_returns(np.array([1000.0, 1100.0])) == pytest.approx([0.10], abs=1e-15)
    assert not step_returns(np.full(5, 3.0)).any()
    assert step_returns(np.array([1000.0, 500.0, 750.0])).tolist() == [-0.5, 0.5]
    with pytest.raises(TraceError):
        step_returns(np.array([1.0]))


def test_hand_report():
    rep = compute_report(np.array([1.0, 0.5, 0.75]), annualization_factor=4.0)
    assert rep.max_drawdown == 50.0
    assert rep.total_return == -25.0
    assert rep.win_rate == 50.0
    assert rep.average_return == 0.0
    assert rep.standard_deviation == pytest.approx(100 * math.sqrt(0.5), rel=1e-15)
    assert rep.downside_deviation == pytest.approx(100 * math.sqrt(0.125), rel=1e-15)
    assert rep.sharpe == 0.0 and rep.sortino == 0.0
    assert rep.calmar == pytest.approx((0.75 ** (4 / 2) - 1) / 0.5, rel=1e-15)
    assert rep.steps == 2


def test_ties_count_as_losses_and_undefined_ratios():
    rep = compute_report(np.array([1.0, 1.0, 1.1]))
    assert rep.win_rate == 50.0
    up = compute_report(1.01 ** np.arange(6))
    assert up.win_rate == 100.0
    assert up.downside_deviation == 0.0
    assert up.sortino is None and up.max_drawdown == 0.0 and up.calmar is None
    flat = compute_report(np.full(4, 1000.0))
    assert flat.sharpe is None and flat.sortino is None


def test_geometric_average_flag():
    p = np.array([1.0, 2.0, 1.0])
    assert compute_report(p).average_return == pytest.approx(25.0)
    assert compute_report(p, geometric=True).average_return == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 10**6), st.integers(3, 200))
def test_ratio_identity_and_compounding(seed, n):
    rng = np.random.default_rng(seed)
    r = rng.normal(rng.uniform(-0.01, 0.01), 0.02, n)
    if not (r < 0).any():
        r[0] = -0.01
    p = 1000.0 * np.concatenate([[1.0], np.cumprod(1 + r)])
    rep = compute_report(p)
    if rep.average_return != 0:
        assert rep.sortino / rep.sharpe == pytest.approx(rep.standard_deviation / rep.downside_deviation, rel=1e-12)
    assert np.prod(1 + step_returns(p)) - 1 == pytest.approx(rep.total_return / 100, rel=1e-9, abs=1e-12)
    assert 0 <= rep.max_drawdown <= 100


@given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
def test_drawdown_scale_invariant(seed, k):
    p = np.exp(np.cumsum(np.random.default_rng(seed).normal(0, 0.05, 50)))
    assert max_drawdown(k * p) == pytest.approx(max_drawdown(p), rel=1e-12, abs=1e-15)


def test_timestamp_offset_invariance():
    p = [1000.0, 990.0, 1010.0, 1005.0]
    a = compute_report(_trace(p))
    b = compute_report(_trace(p, t0=42))
    assert a == b


def test_report_round_trips(tmp_path):
    rng = np.random.default_rng(4)
    for k in range(20):
        p = 1000 * np.cumprod(1 + rng.normal(0, 0.02, 30))
        rep = compute_report(p)
        rep.to_csv(tmp_path / f"r{k}.csv")
        rep.to_json(tmp_path / f"r{k}.json")
        assert MetricsReport.from_csv(tmp_path / f"r{k}.csv") == rep
        assert MetricsReport.from_json(tmp_path / f"r{k}.json") == rep
    undefined = compute_report(np.full(3, 1.0))
    undefined.to_csv(tmp_path / "u.csv")
    assert MetricsReport.from_csv(tmp_path / "u.csv") == undefined
    header = (tmp_path / "u.csv").read_text().splitlines()[0].split(",")
    assert tuple(header[:9]) == REPORT_COLUMNS


def test_weight_return_values_and_degenerate_case():
    f = frame_from_closes([[100.0, 110.0, 99.0], [50.0, 50.0, 55.0]])
    w = np.array([[0, 0], [0.5, -0.5], [1.0, 0.0]])
    tr = EpisodeTrace(("S0", "S1"), f.timestamps, w, np.array([0, 0.5, 0.0]), np.zeros(3), np.zeros(3), np.zeros((3, 2)), np.zeros(3), np.ones(3))
    x = weight_return_values(tr, f)
    np.testing.assert_allclose(x, [0.25 * 0.1, -0.25 * 0.0, 1.0 * -0.1, 0.0 * 0.1], atol=1e-15)
    zero = EpisodeTrace(("S0", "S1"), f.timestamps, np.zeros((3, 2)), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros((3, 2)), np.zeros(3), np.ones(3))
    d = weight_return_distribution(zero, f)
    assert d.degenerate and d.std == 0.0 and d.counts.sum() == 4
    bad = frame_from_closes([[100.0, 110.0, 99.0], [50.0, 50.0, 55.0]], start=7)
    with pytest.raises(TraceError):
        weight_return_values(tr, bad)


def test_distribution_fit_and_symmetry(tmp_path):
    rng = np.random.default_rng(0)
    n = 20_000
    closes = np.concatenate([[100.0], 100 * np.cumprod(1 + rng.normal(0, 0.01, n))])
    f = frame_from_closes(closes)
    tr = _trace(np.ones(n + 1), weights=np.ones((n + 1, 1)), t0=int(f.timestamps[0]))
    d = weight_return_distribution(tr, f)
    x = weight_return_values(tr, f)
    assert d.mean == x.mean()
    assert d.std == x.std()
    assert abs(d.skew) < 3 * math.sqrt(6 / x.size)
    assert abs(d.kurtosis) < 3 * math.sqrt(24 / x.size)
    assert d.skew_positive > 0 > d.skew_negative
    d.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "bin_left,bin_right,count,normal_pdf_at_center"
    assert len(lines) == 102
