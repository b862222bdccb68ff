"""Per-step episode records shared by the environment, metrics and the CLI.

Row 0 is the starting point (initial value, no position). Row k >= 1 holds
the action chosen at the previous decision time, the accounting of that step
and the portfolio value reached at ``timestamps[k]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class TraceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    symbols: tuple[str, ...]
    timestamps: np.ndarray  # (S+1,)
    weights: np.ndarray  # (S+1, m)
    loan_weight: np.ndarray
    capital: np.ndarray
    interest: np.ndarray
    cost: np.ndarray  # (S+1, m)
    reward: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        n = len(self.p)
        m = len(self.symbols)
        for name in ("timestamps", "loan_weight", "capital", "interest", "reward", "p"):
            if np.shape(getattr(self, name)) != (n,):
                raise TraceError(f"{name} must have length {n}")
        for name in ("weights", "cost"):
            if np.shape(getattr(self, name)) != (n, m):
                raise TraceError(f"{name} must have shape ({n}, {m})")
        if n and np.any(np.diff(self.timestamps) <= 0):
            raise TraceError("trace timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.p)

    @property
    def steps(self) -> int:
        return len(self.p) - 1

    @property
    def cost_total(self) -> np.ndarray:
        return self.cost.sum(axis=1)

    def columns(self) -> list[str]:
        return (
            ["step", "timestamp"]
            + [f"w_{s}" for s in self.symbols]
            + ["loan_weight", "c", "interest"]
            + [f"cost_{s}" for s in self.symbols]
            + ["cost_total", "reward", "p"]
        )

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            ct = self.cost_total
            for k in range(len(self)):
                row = [k, int(self.timestamps[k])]
                row += [repr(float(v)) for v in self.weights[k]]
                row += [repr(float(self.loan_weight[k])), repr(float(self.capital[k])), repr(float(self.interest[k]))]
                row += [repr(float(v)) for v in self.cost[k]]
                row += [repr(float(ct[k])), repr(float(self.reward[k])), repr(float(self.p[k]))]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path) -> "EpisodeTrace":
        path = Path(path)
        if not path.exists():
            raise TraceError(f"trace file not found: {path}")
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
        if not header or header[:2] != ["step", "timestamp"]:
            raise TraceError(f"{path}: not a trace file")
        symbols = tuple(h[2:] for h in header if h.startswith("w_"))
        col = {h: i for i, h in enumerate(header)}
        try:
            arr = np.array([[float(v) for v in r] for r in rows], dtype=float)
        except ValueError as exc:
            raise TraceError(f"{path}: malformed row ({exc})") from None
        if arr.size == 0:
            raise TraceError(f"{path}: empty trace")

        def get(name):
            return arr[:, col[name]]

        return cls(
            symbols=symbols,
            timestamps=np.array([int(r[1]) for r in rows], dtype=np.int64),
            weights=np.stack([get(f"w_{s}") for s in symbols], axis=1),
            loan_weight=get("loan_weight"),
            capital=get("c"),
            interest=get("interest"),
            cost=np.stack([get(f"cost_{s}") for s in symbols], axis=1),
            reward=get("reward"),
            p=get("p"),
        )
