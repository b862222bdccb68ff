"""Parameterized layers built on :mod:`.autodiff`."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Layer:
    """Base class: owns named parameter tensors."""

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, Tensor] = {}

    def param(self, key: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True)
        self.params[key] = t
        return t

    def named_parameters(self):
        for k, v in self.params.items():
            yield f"{self.name}.{k}", v


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


class Linear(Layer):
    def __init__(self, name: str, n_in: int, n_out: int, rng: np.random.Generator, zero: bool = False):
        super().__init__(name)
        w = np.zeros((n_in, n_out)) if zero else _glorot(rng, n_in, n_out, (n_in, n_out))
        self.w = self.param("w", w)
        self.b = self.param("b", np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class Conv1d(Layer):
    def __init__(self, name: str, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        super().__init__(name)
        self.w = self.param("w", _glorot(rng, c_in * kernel, c_out * kernel, (c_out, c_in, kernel)))
        self.b = self.param("b", np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d(x, self.w, self.b)


class MultiHeadAttention(Layer):
    """Self-attention over axis 1 of a (B, L, D) input; no positional terms."""

    def __init__(self, name: str, d_model: int, heads: int, head_dim: int, rng: np.random.Generator):
        super().__init__(name)
        self.heads, self.head_dim = heads, head_dim
        inner = heads * head_dim
        self.wq = self.param("wq", _glorot(rng, d_model, inner, (d_model, inner)))
        self.wk = self.param("wk", _glorot(rng, d_model, inner, (d_model, inner)))
        self.wv = self.param("wv", _glorot(rng, d_model, inner, (d_model, inner)))
        self.wo = self.param("wo", _glorot(rng, inner, d_model, (inner, d_model)))
        self.bo = self.param("bo", np.zeros(d_model))

    def _split(self, x: Tensor, b: int, n: int) -> Tensor:
        return x.reshape(b, n, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        q = self._split(x @ self.wq, b, n)
        k = self._split(x @ self.wk, b, n)
        v = self._split(x @ self.wv, b, n)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.head_dim))
        att = ad.softmax(scores, axis=-1) @ v  # (B, H, L, hd)
        merged = att.transpose(0, 2, 1, 3).reshape(b, n, self.heads * self.head_dim)
        return merged @ self.wo + self.bo
