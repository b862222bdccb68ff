"""Synthetic markets for tests, examples and the bundled dataset."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import AssetSeries, MarketFrame

START = 1_672_531_200  # 2023-01-01 00:00 UTC


def _ohlc_from_close(close: np.ndarray, first_open: float, wick: np.ndarray) -> np.ndarray:
    o = np.concatenate([[first_open], close[:-1]])
    hi = np.maximum(o, close) * (1.0 + wick[0])
    lo = np.minimum(o, close) / (1.0 + wick[1])
    return np.stack([o, hi, lo, close])


def trend_market(step_returns: Sequence[float], rows: int, interval: float = 4.0, symbols=None, start: int = START) -> MarketFrame:
    """Every asset compounds at its own constant per-row return."""
    r = np.asarray(step_returns, dtype=float)
    symbols = tuple(symbols or (f"A{i + 1}" for i in range(r.size)))
    t = np.arange(rows)
    close = 100.0 * (1.0 + r[:, None]) ** t[None, :]
    first = close[:, 0] / (1.0 + r)
    ohlc = np.stack([_ohlc_from_close(close[i], first[i], np.zeros((2, rows))) for i in range(r.size)])
    ts = start + t * int(round(interval * 3600))
    return MarketFrame(symbols, interval, ts, ohlc)


def gbm_series(
    symbols: Sequence[str],
    rows: int,
    seed: int,
    annual_drift: Sequence[float],
    annual_vol: Sequence[float],
    correlation: float = 0.3,
    interval: float = 1.0,
    start: int = START,
) -> list[AssetSeries]:
    """Correlated geometric Brownian motion candles at ``interval`` hours.

    Drift and volatility are per asset, or per row and asset (shape (rows, m))
    for regime changes.
    """
    rng = np.random.default_rng(seed)
    m = len(symbols)
    dt = interval / 8760.0
    mu = np.broadcast_to(np.asarray(annual_drift, float), (rows, m))
    sig = np.broadcast_to(np.asarray(annual_vol, float), (rows, m))
    corr = np.full((m, m), correlation) + (1.0 - correlation) * np.eye(m)
    z = rng.standard_normal((rows, m)) @ np.linalg.cholesky(corr).T
    logret = (mu - 0.5 * sig**2) * dt + sig * np.sqrt(dt) * z
    close = 100.0 * np.exp(np.cumsum(logret, axis=0))
    wick = np.abs(rng.standard_normal((2, rows, m))) * sig[None] * np.sqrt(dt) * 0.5
    vol = np.round(rng.lognormal(8.0, 0.5, (rows, m)), 3)
    ts = start + np.arange(rows) * int(round(interval * 3600))
    out = []
    for i, s in enumerate(symbols):
        o, h, l, c = _ohlc_from_close(close[:, i], 100.0, wick[:, :, i])
        out.append(AssetSeries(s, interval, ts, np.round(o, 6), np.round(h, 6), np.round(l, 6), np.round(c, 6), vol[:, i]))
    return out


def write_series_csv(series: AssetSeries, path: str | Path) -> None:
    """Candle file with the default column names (unix seconds, OHLCV)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unix", "symbol", "open", "high", "low", "close", "volume"])
        for j in range(len(series)):
            w.writerow([
                int(series.timestamps[j]), series.symbol,
                repr(float(series.open[j])), repr(float(series.high[j])),
                repr(float(series.low[j])), repr(float(series.close[j])), repr(float(series.volume[j])),
            ])


def _synth3_regimes(rows: int, calm_until: int) -> tuple[np.ndarray, np.ndarray]:
    """AAA and BBB are plain GBM; CCC trends quietly, then turns volatile and falls."""
    drift = np.tile([0.8, 0.1, 0.3], (rows, 1))
    vol = np.tile([0.6, 0.45, 0.001], (rows, 1))
    drift[calm_until:, 2] = -1.5
    vol[calm_until:, 2] = 0.5
    return drift, vol


_SYNTH3_ROWS = 1728
_drift, _vol = _synth3_regimes(_SYNTH3_ROWS, calm_until=1500)

# parameters of the bundled three-asset dataset
SYNTH3 = dict(
    symbols=("AAA", "BBB", "CCC"),
    rows=_SYNTH3_ROWS,
    seed=20230101,
    annual_drift=_drift,
    annual_vol=_vol,
    correlation=0.3,
)


def bundled_dir() -> Path:
    return Path(__file__).parent / "datasets"


def make_synth3(out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in gbm_series(**SYNTH3):
        p = out_dir / f"{s.symbol}.csv"
        write_series_csv(s, p)
        paths.append(p)
    return paths
