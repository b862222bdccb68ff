"""Relative-price state tensors and training-time observation noise."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FEATURES, DataError, MarketFrame


@dataclass(frozen=True, eq=False)
class StateTensor:
    """Observation of shape (M, 4, N): assets x (open, high, low, close) x history."""

    values: np.ndarray
    t: int

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["asset", "feature", "k", "value"])
            for (i, f, k), v in np.ndenumerate(self.values):
                w.writerow([i, FEATURES[f], k, repr(float(v))])


@dataclass(frozen=True)
class NoiseSpec:
    scale: float = 0.01
    enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.scale >= 0:
            raise ValueError(f"noise scale must be >= 0, got {self.scale}")


def build_state(frame: MarketFrame, t: int, n: int) -> StateTensor:
    """Window of the last ``n`` rows at or before ``t``, each divided by the window's first row, minus one."""
    if n < 1:
        raise ValueError(f"history length must be >= 1, got {n}")
    end = frame.index_at_or_before(t)
    start = end - n + 1
    if end < 0 or start < 0:
        raise DataError(f"need {n} rows at or before t={t}, have {end + 1}")
    window = frame.ohlc[:, :, start : end + 1]
    base = window[:, :, :1]
    if np.any(base == 0):
        raise DataError(f"zero base price at t={int(frame.timestamps[start])}")
    return StateTensor(window / base - 1.0, int(frame.timestamps[end]))


def inject_noise(tensor: StateTensor, spec: NoiseSpec, rng: np.random.Generator) -> StateTensor:
    """Add i.i.d. normal noise scaled by each (asset, feature) row's own standard deviation."""
    if not spec.enabled or spec.scale == 0:
        return tensor
    row_std = tensor.values.std(axis=-1, keepdims=True)
    eps = rng.standard_normal(tensor.values.shape)
    return StateTensor(tensor.values + spec.scale * row_std * eps, tensor.t)
