"""Performance report over an episode trace, plus weight x return distributions."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .data import MarketFrame
from .trace import EpisodeTrace, TraceError

PERIODS_PER_YEAR_4H = 2190.0

# column order of the comparison table
REPORT_COLUMNS = (
    "total_return",
    "win_rate",
    "average_return",
    "standard_deviation",
    "sharpe",
    "downside_deviation",
    "sortino",
    "max_drawdown",
    "calmar",
)
COLUMN_TITLES = {
    "total_return": "Total Return(%)",
    "win_rate": "Win Rate(%)",
    "average_return": "Average Return(%)",
    "standard_deviation": "Standard Deviation(%)",
    "sharpe": "Sharpe Ratio",
    "downside_deviation": "Downside Deviation(%)",
    "sortino": "Sortino Ratio",
    "max_drawdown": "Max Drawdown(%)",
    "calmar": "Calmar Ratio",
}


@dataclass(frozen=True)
class MetricsReport:
    """Percent fields are in percent; ``None`` marks an undefined ratio."""

    total_return: float
    win_rate: float
    average_return: float
    standard_deviation: float
    sharpe: float | None
    downside_deviation: float
    sortino: float | None
    max_drawdown: float
    calmar: float | None
    annualization_factor: float
    steps: int

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "steps":
                object.__setattr__(self, f.name, int(v))
            elif v is not None:
                object.__setattr__(self, f.name, float(v))

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=False) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "MetricsReport":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def row(self) -> list[str]:
        return ["" if v is None else repr(v) for v in (getattr(self, c) for c in (*REPORT_COLUMNS, "annualization_factor", "steps"))]

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*REPORT_COLUMNS, "annualization_factor", "steps"])
            w.writerow(self.row())

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricsReport":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        rec = dict(zip(rows[0], rows[1]))
        kw = {}
        for f in fields(cls):
            raw = rec[f.name]
            kw[f.name] = int(raw) if f.name == "steps" else (None if raw == "" else float(raw))
        return cls(**kw)


def step_returns(trace: EpisodeTrace | np.ndarray) -> np.ndarray:
    p = np.asarray(trace.p if isinstance(trace, EpisodeTrace) else trace, dtype=float)
    if p.size < 2:
        raise TraceError(f"need at least 2 portfolio values, got {p.size}")
    return p[1:] / p[:-1] - 1.0


def max_drawdown(p) -> float:
    """Largest peak-to-date relative decline, as a fraction in [0, 1]."""
    p = np.asarray(p, dtype=float)
    peak = np.maximum.accumulate(p)
    return float(np.max((peak - p) / peak))


# a denominator this small relative to its numerator is float noise around zero
RATIO_TOLERANCE = 1e-10


def _ratio(num: float, den: float) -> float | None:
    if not math.isfinite(den) or den <= RATIO_TOLERANCE * abs(num) or den == 0:
        return None
    return num / den


def compute_report(
    trace: EpisodeTrace | np.ndarray,
    annualization_factor: float = PERIODS_PER_YEAR_4H,
    *,
    geometric: bool = False,
) -> MetricsReport:
    """Risk-free rate is zero; ``geometric=True`` reports the geometric mean step return."""
    p = np.asarray(trace.p if isinstance(trace, EpisodeTrace) else trace, dtype=float)
    r = step_returns(p)
    if np.any(p <= 0):
        raise TraceError("portfolio value must stay positive")
    n = r.size
    total = p[-1] / p[0] - 1.0
    mean = float(r.mean())
    std = float(r.std(ddof=1)) if n > 1 else 0.0
    downside = float(np.sqrt(np.mean(np.minimum(r, 0.0) ** 2)))
    root = math.sqrt(annualization_factor)
    sharpe = _ratio(mean, std)
    sortino = _ratio(mean, downside)
    mdd = max_drawdown(p)
    annual = (1.0 + total) ** (annualization_factor / n) - 1.0
    avg = (1.0 + total) ** (1.0 / n) - 1.0 if geometric else mean
    return MetricsReport(
        total_return=100.0 * total,
        win_rate=100.0 * float(np.mean(r > 0)),
        average_return=100.0 * avg,
        standard_deviation=100.0 * std,
        sharpe=None if sharpe is None else sharpe * root,
        downside_deviation=100.0 * downside,
        sortino=None if sortino is None else sortino * root,
        max_drawdown=100.0 * mdd,
        calmar=_ratio(annual, mdd),
        annualization_factor=float(annualization_factor),
        steps=n,
    )


@dataclass(frozen=True, eq=False)
class Distribution:
    """Histogram of weight x return products with a normal fit."""

    values: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    std: float
    degenerate: bool
    skew: float | None
    kurtosis: float | None
    skew_positive: float | None
    kurtosis_positive: float | None
    skew_negative: float | None
    kurtosis_negative: float | None

    def pdf_at_centers(self) -> np.ndarray:
        centers = 0.5 * (self.edges[:-1] + self.edges[1:])
        if self.degenerate:
            return np.where(np.isclose(centers, self.mean, atol=0), np.inf, 0.0)
        return stats.norm.pdf(centers, self.mean, self.std)

    def to_csv(self, path: str | Path) -> None:
        pdf = self.pdf_at_centers()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count", "normal_pdf_at_center"])
            for i, c in enumerate(self.counts):
                w.writerow([repr(float(self.edges[i])), repr(float(self.edges[i + 1])), int(c), repr(float(pdf[i]))])

    def summary(self) -> dict:
        return {
            "n": int(self.values.size),
            "mean": self.mean,
            "std": self.std,
            "degenerate": self.degenerate,
            "skew": self.skew,
            "kurtosis": self.kurtosis,
            "skew_positive": self.skew_positive,
            "kurtosis_positive": self.kurtosis_positive,
            "skew_negative": self.skew_negative,
            "kurtosis_negative": self.kurtosis_negative,
        }


def _shape(x: np.ndarray) -> tuple[float | None, float | None]:
    if x.size < 3 or np.all(x == x[0]):
        return None, None
    return float(stats.skew(x)), float(stats.kurtosis(x))


def weight_return_values(trace: EpisodeTrace, frame: MarketFrame) -> np.ndarray:
    """Deployed weight ``(1 - loan) * w_i`` times the asset's step return, every asset and step."""
    if tuple(trace.symbols) != tuple(frame.symbols):
        raise TraceError(f"trace symbols {trace.symbols} do not match frame {frame.symbols}")
    idx = np.searchsorted(frame.timestamps, trace.timestamps)
    if np.any(idx >= len(frame)) or not np.array_equal(frame.timestamps[np.minimum(idx, len(frame) - 1)], trace.timestamps):
        raise TraceError("trace timestamps are not rows of the frame")
    close = frame.close[:, idx]
    r = (close[:, 1:] / close[:, :-1] - 1.0).T
    deployed = trace.weights[1:] * (1.0 - trace.loan_weight[1:, None])
    return (deployed * r).ravel()


def weight_return_distribution(trace: EpisodeTrace, frame: MarketFrame, bins: int = 101) -> Distribution:
    x = weight_return_values(trace, frame)
    half = float(np.max(np.abs(x))) if x.size else 0.0
    degenerate = half == 0.0 or float(x.std()) == 0.0
    edges = np.linspace(-half, half, bins + 1) if half > 0 else np.linspace(-0.5, 0.5, bins + 1) * 1e-12
    counts, _ = np.histogram(x, bins=edges)
    sk, ku = _shape(x)
    sp, kp = _shape(x[x > 0])
    sn, kn = _shape(x[x < 0])
    return Distribution(x, edges, counts, float(x.mean()), float(x.std()), degenerate, sk, ku, sp, kp, sn, kn)
