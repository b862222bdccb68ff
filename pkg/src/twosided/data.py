"""Candle ingestion, resampling, multi-asset alignment and train/test splitting.

Timestamps are integer UTC seconds everywhere and intervals are expressed in
hours. Every container here is immutable once built: arrays are flagged
read-only and slicing returns new objects.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

FEATURES = ("open", "high", "low", "close")
MS_THRESHOLD = 1e11

DEFAULT_SCHEMA: dict[str, tuple[str, ...]] = {
    "timestamp": ("unix", "timestamp", "time", "open_time", "date"),
    "symbol": ("symbol", "ticker", "pair"),
    "open": ("open",),
    "high": ("high",),
    "low": ("low",),
    "close": ("close",),
    "volume": ("volume",),
}


class DataError(ValueError):
    """Raised for malformed, inconsistent or insufficient market data."""


class GapError(DataError):
    """A series is missing one or more rows at its sampling interval."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _interval_seconds(hours: float) -> int:
    secs = hours * 3600.0
    if secs <= 0 or abs(secs - round(secs)) > 1e-6:
        raise DataError(f"interval must be a positive whole number of seconds, got {hours} h")
    return int(round(secs))


@dataclass(frozen=True)
class Candle:
    timestamp: int
    open: float
    high: float
    low: float
    close: float
    volume: float | None = None

    def __post_init__(self):
        _check_ohlc(self.open, self.high, self.low, self.close, where=f"t={self.timestamp}")


def _check_ohlc(o, h, l, c, where: str) -> None:
    for name, v in (("open", o), ("high", h), ("low", l), ("close", c)):
        if not (math.isfinite(v) and v > 0):
            raise DataError(f"{where}: non-positive or non-finite {name} price {v!r}")
    if l > min(o, c) or h < max(o, c):
        raise DataError(f"{where}: inconsistent candle O={o} H={h} L={l} C={c}")


@dataclass(frozen=True, eq=False)
class AssetSeries:
    """One asset's candles on a fixed grid (arrays, not Candle objects)."""

    symbol: str
    interval: float
    timestamps: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        ts = _frozen(self.timestamps, np.int64)
        n = len(ts)
        object.__setattr__(self, "timestamps", ts)
        for name in (*FEATURES, "volume"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (n,):
                raise DataError(f"{self.symbol}: {name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        _interval_seconds(self.interval)
        if n and np.any(np.diff(ts) <= 0):
            raise DataError(f"{self.symbol}: timestamps must be strictly increasing")
        px = np.stack([self.open, self.high, self.low, self.close])
        if not np.all(np.isfinite(px) & (px > 0)):
            raise DataError(f"{self.symbol}: all prices must be strictly positive")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def interval_seconds(self) -> int:
        return _interval_seconds(self.interval)

    @property
    def candles(self) -> list[Candle]:
        vol = [None if math.isnan(v) else float(v) for v in self.volume]
        return [
            Candle(int(t), float(o), float(h), float(l), float(c), v)
            for t, o, h, l, c, v in zip(self.timestamps, self.open, self.high, self.low, self.close, vol)
        ]

    @classmethod
    def from_candles(cls, symbol: str, interval: float, candles: Iterable[Candle]) -> "AssetSeries":
        rows = list(candles)
        return cls(
            symbol=symbol,
            interval=interval,
            timestamps=[c.timestamp for c in rows],
            open=[c.open for c in rows],
            high=[c.high for c in rows],
            low=[c.low for c in rows],
            close=[c.close for c in rows],
            volume=[np.nan if c.volume is None else c.volume for c in rows],
        )

    def gaps(self) -> np.ndarray:
        """Indices ``i`` where row ``i + 1`` is not exactly one interval after row ``i``."""
        return np.flatnonzero(np.diff(self.timestamps) != self.interval_seconds)

    def equals(self, other: "AssetSeries") -> bool:
        return (
            self.symbol == other.symbol
            and self.interval == other.interval
            and np.array_equal(self.timestamps, other.timestamps)
            and all(np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True) for f in (*FEATURES, "volume"))
        )


def _resolve_columns(header: Sequence[str], schema: Mapping[str, str | Sequence[str]] | None) -> dict[str, int]:
    lookup = {h.strip().lower(): i for i, h in enumerate(header)}
    merged: dict[str, tuple[str, ...]] = dict(DEFAULT_SCHEMA)
    for role, names in (schema or {}).items():
        merged[role] = (names,) if isinstance(names, str) else tuple(names)
    cols: dict[str, int] = {}
    for role, names in merged.items():
        for name in names:
            if name.lower() in lookup:
                cols[role] = lookup[name.lower()]
                break
        else:
            if role in ("timestamp", *FEATURES):
                raise DataError(f"no column for {role!r}; tried {list(names)} in header {list(header)}")
    return cols


def _parse_timestamp(raw: str) -> int:
    v = float(raw)
    if not math.isfinite(v):
        raise ValueError(f"timestamp {raw!r} is not finite")
    if abs(v) > MS_THRESHOLD:
        v /= 1000.0
    return int(round(v))


def load_csv(
    path: str | Path,
    schema: Mapping[str, str | Sequence[str]] | None = None,
    *,
    delimiter: str = ",",
    symbol: str | None = None,
    interval: float | None = None,
    fill_gaps: bool = False,
) -> AssetSeries:
    """Read one asset's candles from a headed CSV file.

    ``schema`` maps a role (timestamp, symbol, open, high, low, close, volume)
    to a column name or a list of candidate names; unmapped roles fall back to
    :data:`DEFAULT_SCHEMA`. Leading banner lines without the delimiter are
    skipped. Rows are sorted by timestamp. Gaps raise :class:`GapError` unless
    ``fill_gaps`` is set, in which case the previous close is carried forward
    as a flat zero-volume candle.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    first = 0
    while first < len(lines) and delimiter not in lines[first]:
        first += 1
    if first >= len(lines):
        raise DataError(f"{path}: no header row found")
    reader = csv.reader(lines[first:], delimiter=delimiter)
    header = next(reader)
    cols = _resolve_columns(header, schema)

    rows: list[tuple[int, float, float, float, float, float]] = []
    file_symbol = None
    for offset, rec in enumerate(reader):
        lineno = first + offset + 2
        if not rec or all(not c.strip() for c in rec):
            continue
        try:
            ts = _parse_timestamp(rec[cols["timestamp"]])
            o, h, l, c = (float(rec[cols[f]]) for f in FEATURES)
            vol = float(rec[cols["volume"]]) if "volume" in cols and rec[cols["volume"]].strip() else math.nan
        except (IndexError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: malformed row {rec!r} ({exc})") from None
        _check_ohlc(o, h, l, c, where=f"{path}:{lineno}")
        if file_symbol is None and "symbol" in cols and cols["symbol"] < len(rec):
            file_symbol = rec[cols["symbol"]].strip() or None
        rows.append((ts, o, h, l, c, vol))
    if not rows:
        raise DataError(f"{path}: no data rows")

    rows.sort(key=lambda r: r[0])
    ts = np.array([r[0] for r in rows], dtype=np.int64)
    dup = np.flatnonzero(np.diff(ts) == 0)
    if dup.size:
        raise DataError(f"{path}: duplicate timestamp {int(ts[dup[0]])}")

    if interval is None:
        interval = float(np.diff(ts).min()) / 3600.0 if len(ts) > 1 else 1.0
    data = np.array([r[1:] for r in rows], dtype=float)
    series = AssetSeries(
        symbol=symbol or file_symbol or path.stem,
        interval=interval,
        timestamps=ts,
        open=data[:, 0],
        high=data[:, 1],
        low=data[:, 2],
        close=data[:, 3],
        volume=data[:, 4],
    )
    gaps = series.gaps()
    if gaps.size:
        if not fill_gaps:
            t0 = int(series.timestamps[gaps[0]])
            raise GapError(
                f"{path}: {gaps.size} gap(s) at interval {interval} h, first after t={t0}"
            )
        series = forward_fill(series)
    return series


def forward_fill(series: AssetSeries) -> AssetSeries:
    """Insert flat candles (O=H=L=C=previous close, volume 0) into every gap."""
    step = series.interval_seconds
    ts = series.timestamps
    if np.any((ts - ts[0]) % step):
        raise DataError(f"{series.symbol}: timestamps are off the {series.interval} h grid")
    full = np.arange(ts[0], ts[-1] + 1, step, dtype=np.int64)
    pos = np.searchsorted(full, ts)
    have = np.zeros(len(full), dtype=bool)
    have[pos] = True
    prev_close = series.close[np.cumsum(have) - 1]
    out = {}
    for f in FEATURES:
        out[f] = prev_close.copy()
        out[f][pos] = getattr(series, f)
    vol = np.zeros(len(full))
    vol[pos] = series.volume
    log.info("%s: forward-filled %d missing rows", series.symbol, len(full) - len(ts))
    return AssetSeries(series.symbol, series.interval, full, out["open"], out["high"], out["low"], out["close"], vol)


def resample(series: AssetSeries, target_interval: float) -> AssetSeries:
    """Aggregate to a coarser interval; buckets start at the first timestamp.

    A trailing partial bucket is dropped.
    """
    ratio = target_interval / series.interval
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise DataError(
            f"{series.symbol}: target {target_interval} h is not an integer multiple of {series.interval} h"
        )
    gaps = series.gaps()
    if gaps.size:
        raise GapError(f"{series.symbol}: gap after t={int(series.timestamps[gaps[0]])}")
    if k == 1:
        return series
    n = len(series) // k
    if n == 0:
        raise DataError(f"{series.symbol}: {len(series)} rows cannot fill one {target_interval} h bucket")
    cut = n * k
    return AssetSeries(
        symbol=series.symbol,
        interval=float(target_interval),
        timestamps=series.timestamps[:cut:k],
        open=series.open[:cut:k],
        high=series.high[:cut].reshape(n, k).max(axis=1),
        low=series.low[:cut].reshape(n, k).min(axis=1),
        close=series.close[k - 1 : cut : k],
        volume=series.volume[:cut].reshape(n, k).sum(axis=1),
    )


@dataclass(frozen=True, eq=False)
class MarketFrame:
    """M assets on a shared timestamp grid.

    ``ohlc`` has shape (M, 4, T) with features ordered open, high, low, close.
    ``dropped`` records, per symbol, how many rows alignment discarded.
    """

    symbols: tuple[str, ...]
    interval: float
    timestamps: np.ndarray
    ohlc: np.ndarray
    volume: np.ndarray | None = None
    dropped: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        ts = _frozen(self.timestamps, np.int64)
        object.__setattr__(self, "timestamps", ts)
        ohlc = _frozen(self.ohlc)
        m, t = len(self.symbols), len(ts)
        if m < 1:
            raise DataError("a frame needs at least one asset")
        if ohlc.shape != (m, 4, t):
            raise DataError(f"ohlc shape {ohlc.shape} does not match ({m}, 4, {t})")
        object.__setattr__(self, "ohlc", ohlc)
        vol = np.full((m, t), np.nan) if self.volume is None else self.volume
        object.__setattr__(self, "volume", _frozen(vol))
        object.__setattr__(self, "dropped", dict(self.dropped))
        if t and np.any(np.diff(ts) <= 0):
            raise DataError("frame timestamps must be strictly increasing")
        if not np.all(np.isfinite(ohlc) & (ohlc > 0)):
            raise DataError("frame prices must be finite and strictly positive")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_assets(self) -> int:
        return len(self.symbols)

    @property
    def close(self) -> np.ndarray:
        return self.ohlc[:, 3, :]

    def slice(self, start: int, stop: int) -> "MarketFrame":
        return MarketFrame(
            self.symbols,
            self.interval,
            self.timestamps[start:stop],
            self.ohlc[:, :, start:stop],
            self.volume[:, start:stop],
        )

    def series(self, i: int) -> AssetSeries:
        o, h, l, c = self.ohlc[i]
        return AssetSeries(self.symbols[i], self.interval, self.timestamps, o, h, l, c, self.volume[i])

    def index_at_or_before(self, t: int) -> int:
        """Row index of the last timestamp <= t, or -1."""
        return int(np.searchsorted(self.timestamps, t, side="right")) - 1

    def equals(self, other: "MarketFrame") -> bool:
        return (
            self.symbols == other.symbols
            and self.interval == other.interval
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.ohlc, other.ohlc)
        )

    def to_csv(self, path: str | Path) -> None:
        header = ["timestamp"] + [f"{s}_{f}" for s in self.symbols for f in FEATURES]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            flat = self.ohlc.reshape(-1, len(self))
            for j, t in enumerate(self.timestamps):
                w.writerow([int(t)] + [repr(float(v)) for v in flat[:, j]])

    @classmethod
    def from_csv(cls, path: str | Path, interval: float | None = None) -> "MarketFrame":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        if header[0] != "timestamp" or (len(header) - 1) % 4:
            raise DataError(f"{path}: not a frame file (header {header[:5]}...)")
        symbols = []
        for j in range(1, len(header), 4):
            sym, feat = header[j].rsplit("_", 1)
            if [h.rsplit("_", 1)[1] for h in header[j : j + 4]] != list(FEATURES) or feat != "open":
                raise DataError(f"{path}: column group at {j} is not open/high/low/close")
            symbols.append(sym)
        try:
            ts = np.array([int(r[0]) for r in rows], dtype=np.int64)
            vals = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
        except ValueError as exc:
            raise DataError(f"{path}: malformed frame row ({exc})") from None
        if interval is None:
            if len(ts) < 2:
                raise DataError(f"{path}: cannot infer interval from {len(ts)} row(s)")
            interval = float(np.diff(ts).min()) / 3600.0
        ohlc = vals.T.reshape(len(symbols), 4, len(ts))
        return cls(tuple(symbols), interval, ts, ohlc)


def align(series_list: Sequence[AssetSeries]) -> MarketFrame:
    """Restrict all series to their common timestamps."""
    if not series_list:
        raise DataError("align needs at least one series")
    intervals = {s.interval for s in series_list}
    if len(intervals) != 1:
        raise DataError(f"series have mixed intervals {sorted(intervals)}")
    symbols = [s.symbol for s in series_list]
    if len(set(symbols)) != len(symbols):
        raise DataError(f"duplicate symbols in {symbols}")
    common = reduce(np.intersect1d, [s.timestamps for s in series_list])
    if common.size == 0:
        raise DataError("series share no timestamps")
    ohlc = np.empty((len(series_list), 4, common.size))
    vol = np.empty((len(series_list), common.size))
    dropped = {}
    for i, s in enumerate(series_list):
        idx = np.searchsorted(s.timestamps, common)
        for f, name in enumerate(FEATURES):
            ohlc[i, f] = getattr(s, name)[idx]
        vol[i] = s.volume[idx]
        dropped[s.symbol] = len(s) - common.size
        if dropped[s.symbol]:
            log.warning("%s: alignment dropped %d rows", s.symbol, dropped[s.symbol])
    return MarketFrame(tuple(symbols), series_list[0].interval, common, ohlc, vol, dropped)


def resample_frame(frame: MarketFrame, target_interval: float) -> MarketFrame:
    return align([resample(frame.series(i), target_interval) for i in range(frame.n_assets)])


def warmup_rows(history: int, source_interval: float, target_interval: float) -> int:
    """Interval rows needed before a decision row so ``history`` source rows exist.

    Observations end at the last source row inside the decision row's bucket,
    so the bucket itself contributes ``k`` source rows.
    """
    k = int(round(target_interval / source_interval))
    return max(0, math.ceil((history - k) / k))


@dataclass(frozen=True, eq=False)
class EpisodeSplit:
    """Train/test slices, each carrying ``warmup`` history rows in front.

    ``train_range`` and ``test_range`` are (start, stop) row indices into the
    source frame, warmup included.
    """

    train: MarketFrame
    test: MarketFrame
    warmup: int
    train_range: tuple[int, int]
    test_range: tuple[int, int]


def split(frame: MarketFrame, train_steps: int, test_steps: int, warmup: int) -> EpisodeSplit:
    if min(train_steps, test_steps) < 1 or warmup < 0:
        raise DataError(f"invalid split sizes train={train_steps} test={test_steps} warmup={warmup}")
    need = warmup + train_steps + test_steps
    if len(frame) < need:
        raise DataError(f"frame has {len(frame)} rows, split needs {need} (warmup {warmup} + {train_steps} + {test_steps})")
    tr = (0, warmup + train_steps)
    te = (train_steps, train_steps + warmup + test_steps)
    return EpisodeSplit(frame.slice(*tr), frame.slice(*te), warmup, tr, te)
