"""Actor and critic networks: per-asset convolutions over history, self-attention, dense stack."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Conv1d, Layer, Linear, MultiHeadAttention

STD_MIN = 1e-4
STD_MAX = 2.0
LOG_STD_MIN = float(np.log(STD_MIN))
LOG_STD_MAX = float(np.log(STD_MAX))


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of both actor and critic.

    Empty ``conv_filters`` and ``attention_heads == 0`` give a plain dense
    network over the flattened observation. ``per_layer_lrf`` scales the base
    learning rate per layer, in :meth:`layer_names` order.
    """

    conv_filters: tuple[int, ...] = (16, 32)
    kernel_size: int = 3
    attention_heads: int = 2
    attention_dim: int = 8
    fc_widths: tuple[int, ...] = (64, 32)
    activation: float = 0.01
    per_layer_lrf: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "conv_filters", tuple(int(f) for f in self.conv_filters))
        object.__setattr__(self, "fc_widths", tuple(int(f) for f in self.fc_widths))
        if self.per_layer_lrf is not None:
            object.__setattr__(self, "per_layer_lrf", tuple(float(x) for x in self.per_layer_lrf))
        widths = (*self.conv_filters, *self.fc_widths, self.kernel_size)
        if any(w < 1 for w in widths) or self.attention_heads < 0 or self.attention_dim < 1:
            raise ValueError(f"all widths must be >= 1: {self}")
        if self.activation < 0:
            raise ValueError("leaky slope must be non-negative")
        if self.per_layer_lrf is not None:
            if len(self.per_layer_lrf) != len(self.layer_names()):
                raise ValueError(
                    f"per_layer_lrf has {len(self.per_layer_lrf)} entries, spec has layers {self.layer_names()}"
                )
            if any(not x > 0 for x in self.per_layer_lrf):
                raise ValueError("learning rate factors must be positive")

    @classmethod
    def paper(cls) -> "NetworkSpec":
        """Full-width variant: 64/128 convolution filters with wider attention and dense layers."""
        return cls(conv_filters=(64, 128), attention_heads=4, attention_dim=32, fc_widths=(256, 128))

    @classmethod
    def dense(cls, *widths: int, activation: float = 0.01) -> "NetworkSpec":
        return cls(conv_filters=(), attention_heads=0, fc_widths=widths, activation=activation)

    def layer_names(self) -> list[str]:
        names = [f"conv{i}" for i in range(len(self.conv_filters))]
        if self.attention_heads:
            names.append("attention")
        names += [f"fc{i}" for i in range(len(self.fc_widths))]
        return names + ["head"]

    def lrf(self, layer: str) -> float:
        if self.per_layer_lrf is None:
            return 1.0
        return self.per_layer_lrf[self.layer_names().index(layer)]

    def to_dict(self) -> dict:
        return {
            "conv_filters": list(self.conv_filters),
            "kernel_size": self.kernel_size,
            "attention_heads": self.attention_heads,
            "attention_dim": self.attention_dim,
            "fc_widths": list(self.fc_widths),
            "activation": self.activation,
            "per_layer_lrf": None if self.per_layer_lrf is None else list(self.per_layer_lrf),
        }


@dataclass(frozen=True, eq=False)
class PolicyOutput:
    mean: np.ndarray
    std: np.ndarray


class Network:
    """Holds layers and exposes parameters by dotted name."""

    def __init__(self, spec: NetworkSpec, obs_shape: tuple[int, ...], action_dim: int):
        self.spec = spec
        self.obs_shape = tuple(obs_shape)
        self.action_dim = action_dim
        self.layers: list[Layer] = []

    def _add(self, layer: Layer) -> Layer:
        self.layers.append(layer)
        return layer

    def named_parameters(self):
        for layer in self.layers:
            yield from layer.named_parameters()

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def layer_of(self, name: str) -> str:
        base = name.split(".", 1)[0]
        return "head" if base in ("mean", "log_std", "q") else base

    def get_params(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(params):
            raise ShapeError(f"parameter names differ: {sorted(set(own) ^ set(params))}")
        for k, t in own.items():
            v = np.asarray(params[k], dtype=np.float64)
            if v.shape != t.shape:
                raise ShapeError(f"{k}: shape {v.shape} != {t.shape}")
            t.data = v.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Encoder:
    """Shared feature extractor layout, instantiated separately per network."""

    def __init__(self, net: Network, rng: np.random.Generator):
        spec = net.spec
        self.spec = spec
        shape = net.obs_shape
        self.structured = bool(spec.conv_filters or spec.attention_heads)
        if self.structured:
            if len(shape) != 3:
                raise ShapeError(f"convolution/attention body needs (M, F, N) observations, got {shape}")
            m, c, n = shape
            self.convs = []
            for i, f in enumerate(spec.conv_filters):
                self.convs.append(net._add(Conv1d(f"conv{i}", c, f, spec.kernel_size, rng)))
                c = f
                n -= spec.kernel_size - 1
            if n < 1:
                raise ShapeError(f"history {shape[2]} too short for {len(spec.conv_filters)} conv layers")
            self.attn = None
            if spec.attention_heads:
                self.attn = net._add(MultiHeadAttention("attention", c, spec.attention_heads, spec.attention_dim, rng))
            self.m, self.channels = m, c
            self.out_dim = m * 2 * c
        else:
            self.out_dim = int(np.prod(shape))

    def __call__(self, x: Tensor) -> Tensor:
        slope = self.spec.activation
        b = x.shape[0]
        if not self.structured:
            return x.reshape(b, self.out_dim)
        _, m, c, n = x.shape
        h = x.reshape(b * m, c, n)
        for conv in self.convs:
            h = ad.leaky_relu(conv(h), slope)
        h = h.transpose(0, 2, 1)  # (B*M, L, C)
        if self.attn is not None:
            h = ad.leaky_relu(h + self.attn(h), slope)
        pooled = ad.concat([h.mean(axis=1), h[:, -1, :]], axis=-1)
        return pooled.reshape(b, self.out_dim)


def _batch(state, obs_shape) -> Tensor:
    x = state if isinstance(state, Tensor) else Tensor(np.asarray(getattr(state, "values", state), dtype=np.float64))
    if x.shape == tuple(obs_shape):
        x = x.reshape(1, *obs_shape)
    if x.shape[1:] != tuple(obs_shape):
        raise ShapeError(f"state shape {x.shape} does not match observation shape {obs_shape}")
    return x


class Actor(Network):
    """Gaussian policy: returns mean and log-std pre-activations of the action distribution."""

    def __init__(self, spec, obs_shape, action_dim, rng: np.random.Generator, zero_head: bool = False):
        super().__init__(spec, obs_shape, action_dim)
        self.encoder = Encoder(self, rng)
        width = self.encoder.out_dim
        self.fcs = []
        for i, h in enumerate(spec.fc_widths):
            self.fcs.append(self._add(Linear(f"fc{i}", width, h, rng)))
            width = h
        self.mean_head = self._add(Linear("mean", width, action_dim, rng, zero=zero_head))
        self.log_std_head = self._add(Linear("log_std", width, action_dim, rng, zero=zero_head))

    def forward(self, state) -> tuple[Tensor, Tensor]:
        x = _batch(state, self.obs_shape)
        h = self.encoder(x)
        for fc in self.fcs:
            h = ad.leaky_relu(fc(h), self.spec.activation)
        mean = self.mean_head(h)
        squashed = ad.tanh(self.log_std_head(h))
        log_std = (squashed + 1.0) * (0.5 * (LOG_STD_MAX - LOG_STD_MIN)) + LOG_STD_MIN
        return mean, log_std


class Critic(Network):
    def __init__(self, spec, obs_shape, action_dim, rng: np.random.Generator, zero_head: bool = False):
        super().__init__(spec, obs_shape, action_dim)
        self.encoder = Encoder(self, rng)
        width = self.encoder.out_dim + action_dim
        self.fcs = []
        for i, h in enumerate(spec.fc_widths):
            self.fcs.append(self._add(Linear(f"fc{i}", width, h, rng)))
            width = h
        self.q_head = self._add(Linear("q", width, 1, rng, zero=zero_head))

    def forward(self, state, action) -> Tensor:
        x = _batch(state, self.obs_shape)
        a = action if isinstance(action, Tensor) else Tensor(np.asarray(action, dtype=np.float64))
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.shape != (x.shape[0], self.action_dim):
            raise ShapeError(f"action shape {a.shape} does not match ({x.shape[0]}, {self.action_dim})")
        h = ad.concat([self.encoder(x), a], axis=-1)
        for fc in self.fcs:
            h = ad.leaky_relu(fc(h), self.spec.activation)
        return self.q_head(h).reshape(x.shape[0])


def actor_forward(actor: Actor, state) -> PolicyOutput:
    mean, log_std = actor.forward(state)
    squeeze = mean.shape[0] == 1 and np.shape(getattr(state, "values", state)) == actor.obs_shape
    mu, sd = mean.data, np.exp(log_std.data)
    return PolicyOutput(mu[0], sd[0]) if squeeze else PolicyOutput(mu, sd)


def critic_forward(critic: Critic, state, action) -> np.ndarray | float:
    q = critic.forward(state, action).data
    return float(q[0]) if q.shape == (1,) else q


def squash_log_prob(mean: Tensor, log_std: Tensor, eps: np.ndarray) -> tuple[Tensor, Tensor]:
    """Reparameterized sample ``tanh(mean + std * eps)`` and its log-density.

    The tanh Jacobian uses ``log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))``.
    """
    u = mean + ad.exp(log_std) * eps
    action = ad.tanh(u)
    log_normal = -0.5 * eps * eps - 0.5 * np.log(2.0 * np.pi)
    jac = (np.log(2.0) - u - ad.softplus(u * -2.0)) * 2.0
    logp = (log_normal - log_std - jac).sum(axis=-1)
    return action, logp


def sample_action(policy: PolicyOutput, rng: np.random.Generator, deterministic: bool = False) -> np.ndarray:
    """Pre-squash Gaussian sample; the mean in deterministic mode."""
    if deterministic:
        return np.array(policy.mean, dtype=float, copy=True)
    return policy.mean + policy.std * rng.standard_normal(np.shape(policy.mean))
