from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from twosided.data import MarketFrame

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_frame(rng: np.random.Generator, m: int, t: int, interval: float = 4.0, vol: float = 0.02, start: int = 1_600_000_000) -> MarketFrame:
    """Random-walk candles with consistent high/low wicks."""
    close = 100.0 * np.exp(np.cumsum(rng.normal(0.0, vol, (m, t)), axis=1))
    open_ = np.concatenate([close[:, :1] * np.exp(rng.normal(0, vol, (m, 1))), close[:, :-1]], axis=1)
    hi = np.maximum(open_, close) * (1.0 + rng.uniform(0, vol, (m, t)))
    lo = np.minimum(open_, close) / (1.0 + rng.uniform(0, vol, (m, t)))
    ts = start + np.arange(t) * int(interval * 3600)
    return MarketFrame(tuple(f"S{i}" for i in range(m)), interval, ts, np.stack([open_, hi, lo, close], axis=1))


def frame_from_closes(closes, interval: float = 4.0, start: int = 1_600_000_000) -> MarketFrame:
    """Flat candles (O=H=L=C) at the given closes; returns are close-to-close."""
    c = np.atleast_2d(np.asarray(closes, dtype=float))
    ts = start + np.arange(c.shape[1]) * int(interval * 3600)
    return MarketFrame(tuple(f"S{i}" for i in range(c.shape[0])), interval, ts, np.repeat(c[:, None, :], 4, axis=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, printed once at the end of the session
VERDICTS: dict[str, tuple[bool, str]] = {}


def record(key: str, ok: bool, detail: str = "") -> None:
    VERDICTS[key] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} {key} {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS, key=lambda k: (int(k.split()[0].rstrip("ab")), k)):
        ok, detail = VERDICTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key} {detail}".rstrip())
