"""Finite-difference verification of the reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, record_branches

FD_STEP = 1e-5
# Gradients smaller than ERROR_FLOOR * max(1, scale) sit below what a 1e-5
# central difference resolves in double precision, so they are compared
# against that floor instead of their own magnitude.
ERROR_FLOOR = 1e-6
# smaller steps tried when a probe straddles a leaky-relu or min kink
FALLBACK_STEPS = (1e-6, 1e-7)


@dataclass(frozen=True)
class GradcheckResult:
    max_error: float
    checked: int
    skipped: int  # coordinates whose probes crossed a kink at every step

    def __float__(self) -> float:
        return self.max_error


def relative_error(analytic, numeric, floor: float = ERROR_FLOOR) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero gradients from dominating."""
    a, n = np.asarray(analytic, float), np.asarray(numeric, float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def _eval(loss_fn) -> tuple[float, list]:
    with record_branches() as masks:
        value = float(loss_fn().data)
    return value, masks


def _same(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradcheck_report(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    rng: np.random.Generator | None = None,
    samples_per_param: int | None = 8,
    step: float = FD_STEP,
    scale: float | None = None,
) -> GradcheckResult:
    """Compare backprop against central differences of a scalar loss.

    ``loss_fn`` must rebuild the graph from the current ``params`` on each call.
    ``samples_per_param=None`` checks every coordinate. A probe whose branch
    pattern differs from the base point is retried with smaller steps and
    skipped if it never stays on one side of the kink. ``scale`` is the
    magnitude of the terms summed into the loss (roundoff grows with it); it
    defaults to ``loss_fn.scale`` when present, else ``|loss|``.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        if not np.all(np.isfinite(p.data)):
            raise ValueError("parameters must be finite")
        p.grad = None
    with record_branches() as base:
        loss = loss_fn()
    loss.backward()
    if scale is None:
        scale = getattr(loss_fn, "scale", None) or abs(float(loss.data))
    floor = ERROR_FLOOR * max(1.0, scale)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst, checked, skipped = 0.0, 0, 0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if samples_per_param is None or samples_per_param >= n:
            picks = np.arange(n)
        else:
            picks = rng.choice(n, samples_per_param, replace=False)
        for i in picks:
            orig = flat[i]
            numeric = None
            for h in (step, *FALLBACK_STEPS):
                flat[i] = orig + h
                up, mu = _eval(loss_fn)
                flat[i] = orig - h
                down, md = _eval(loss_fn)
                flat[i] = orig
                if _same(base, mu) and _same(base, md):
                    numeric = (up - down) / (2.0 * h)
                    break
            if numeric is None:
                skipped += 1
                continue
            checked += 1
            worst = max(worst, float(relative_error(g.reshape(-1)[i], numeric, floor)))
    for p in params:
        p.grad = None
    return GradcheckResult(worst, checked, skipped)


def gradcheck(loss_fn, params, rng=None, samples_per_param: int | None = 8, step: float = FD_STEP) -> float:
    """Max relative error over the checked coordinates; see :func:`gradcheck_report`."""
    return gradcheck_report(loss_fn, params, rng, samples_per_param, step).max_error


class random_projection_loss:
    """Scalar ``sum(fn() * P)`` with a fixed random ``P`` drawn on first call.

    ``scale`` is ``sum(|fn() * P|)`` at the first evaluation.
    """

    def __init__(self, fn: Callable[[], Tensor], rng: np.random.Generator):
        self.fn, self.rng = fn, rng
        self.proj: np.ndarray | None = None
        self.scale: float | None = None

    def __call__(self) -> Tensor:
        out = self.fn()
        if self.proj is None:
            self.proj = self.rng.standard_normal(out.shape)
            self.scale = float(np.abs(out.data * self.proj).sum())
        return (out * self.proj).sum()
