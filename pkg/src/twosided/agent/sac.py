"""Soft actor-critic with twin critics, learned temperature and a replay buffer."""

from __future__ import annotations

import math
import threading
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .networks import Actor, Critic, Network, NetworkSpec, PolicyOutput, actor_forward, sample_action, squash_log_prob


class BufferUnderflow(RuntimeError):
    pass


@dataclass(frozen=True)
class SacConfig:
    """Optimizer and update settings.

    ``sample_time`` and ``lookahead_steps`` are fixed at 1: one environment
    step per decision and one-step TD targets. ``entropy_weight`` is the
    starting temperature; it is learned unless ``learn_entropy`` is off.
    """

    actor_lr: float = 2e-4
    critic_lr: float = 6e-4
    discount: float = 0.99
    entropy_weight: float = 0.08
    entropy_lr: float = 6e-4
    l2_reg: float = 1e-8
    batch_size: int = 16
    sample_time: int = 1
    lookahead_steps: int = 1
    target_smoothing: float = 0.005
    buffer_capacity: int = 100_000
    updates_per_step: int = 1
    twin_critics: bool = True
    learn_entropy: bool = True
    target_entropy: float | None = None  # None: minus the action dimension
    warmup_steps: int = 0  # uniform random actions before the policy is used

    def __post_init__(self):
        if not 0 < self.discount <= 1:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        for name in ("actor_lr", "critic_lr", "entropy_lr", "entropy_weight"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("need batch_size >= 1 and buffer_capacity >= batch_size")
        if self.l2_reg < 0 or not 0 < self.target_smoothing <= 1:
            raise ValueError("l2_reg must be >= 0 and target_smoothing in (0, 1]")
        if self.sample_time != 1 or self.lookahead_steps != 1:
            raise ValueError("only sample_time=1 and lookahead_steps=1 are supported")
        if self.updates_per_step < 0 or self.warmup_steps < 0:
            raise ValueError("updates_per_step and warmup_steps must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        for name in ("state", "action", "next_state"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"transition {name} has non-finite entries")
            object.__setattr__(self, name, v)
        if not math.isfinite(self.reward):
            raise ValueError("transition reward must be finite")
        object.__setattr__(self, "reward", float(self.reward))
        object.__setattr__(self, "done", bool(self.done))


@dataclass(frozen=True)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer; appends and sampling are serialized by a lock."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._lock = threading.Lock()
        self._arrays: dict[str, np.ndarray] | None = None
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def append(self, tr: Transition) -> None:
        with self._lock:
            if self._arrays is None:
                c = self.capacity
                self._arrays = {
                    "states": np.empty((c, *tr.state.shape)),
                    "actions": np.empty((c, *tr.action.shape)),
                    "rewards": np.empty(c),
                    "next_states": np.empty((c, *tr.next_state.shape)),
                    "dones": np.empty(c),
                }
            a = self._arrays
            if tr.state.shape != a["states"].shape[1:] or tr.action.shape != a["actions"].shape[1:]:
                raise ValueError("transition shape differs from buffered transitions")
            i = self._next
            a["states"][i] = tr.state
            a["actions"][i] = tr.action
            a["rewards"][i] = tr.reward
            a["next_states"][i] = tr.next_state
            a["dones"][i] = float(tr.done)
            self._next = (i + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def oldest(self) -> int:
        """Ring index of the oldest stored transition."""
        return self._next if self._size == self.capacity else 0

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        with self._lock:
            if self._size < batch_size:
                raise BufferUnderflow(f"buffer holds {self._size} transitions, batch needs {batch_size}")
            idx = rng.integers(0, self._size, size=batch_size)
            a = self._arrays
            return Batch(*(a[k][idx].copy() for k in ("states", "actions", "rewards", "next_states", "dones")))

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        with self._lock:
            if self._arrays is None:
                return []
            order = [(self.oldest() + k) % self.capacity for k in range(self._size)]
            a = self._arrays
            return [
                Transition(a["states"][i], a["actions"][i], a["rewards"][i], a["next_states"][i], bool(a["dones"][i]))
                for i in order
            ]


class Adam:
    """Adam with per-parameter learning-rate factors and L2 added to the gradient."""

    def __init__(self, params: list[Tensor], lr: float, factors: list[float] | None = None, l2: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.factors = factors or [1.0] * len(params)
        self.l2 = l2
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v, f in zip(self.params, self.m, self.v, self.factors):
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            if self.l2:
                g = g + self.l2 * p.data
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * f * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {"t": np.array([float(self.t)])}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m.copy()
            out[f"v{i}"] = v.copy()
        return out

    def load_state(self, st: dict[str, np.ndarray]) -> None:
        self.t = int(st["t"][0])
        for i in range(len(self.params)):
            self.m[i] = np.array(st[f"m{i}"], dtype=np.float64)
            self.v[i] = np.array(st[f"v{i}"], dtype=np.float64)


def _optimizer(net: Network, lr: float, l2: float) -> Adam:
    named = list(net.named_parameters())
    factors = [net.spec.lrf(net.layer_of(k)) for k, _ in named]
    return Adam([p for _, p in named], lr, factors, l2)


@dataclass(frozen=True)
class LossReport:
    critic_loss: float
    actor_loss: float
    entropy_term: float  # alpha * mean(-log pi)
    alpha: float
    entropy: float  # mean(-log pi) over the batch


class SacAgent:
    def __init__(self, obs_shape: tuple[int, ...], action_dim: int, spec: NetworkSpec | None = None,
                 config: SacConfig | None = None, seed: int = 0, zero_actor_head: bool = False):
        self.spec = spec or NetworkSpec()
        self.config = config or SacConfig()
        self.obs_shape = tuple(obs_shape)
        self.action_dim = int(action_dim)
        init = np.random.default_rng([seed, 0])
        self.actor = Actor(self.spec, obs_shape, action_dim, init, zero_head=zero_actor_head)
        n_critics = 2 if self.config.twin_critics else 1
        self.critics = [Critic(self.spec, obs_shape, action_dim, init) for _ in range(n_critics)]
        self.targets = [Critic(self.spec, obs_shape, action_dim, init) for _ in range(n_critics)]
        for c, t in zip(self.critics, self.targets):
            t.set_params(c.get_params())
        cfg = self.config
        self.actor_opt = _optimizer(self.actor, cfg.actor_lr, cfg.l2_reg)
        self.critic_opts = [_optimizer(c, cfg.critic_lr, cfg.l2_reg) for c in self.critics]
        self.log_alpha = Tensor(np.array([math.log(cfg.entropy_weight)]), requires_grad=True)
        self.alpha_opt = Adam([self.log_alpha], cfg.entropy_lr)
        self.target_entropy = -float(action_dim) if cfg.target_entropy is None else float(cfg.target_entropy)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.data[0]))

    # acting

    def policy(self, state) -> PolicyOutput:
        return actor_forward(self.actor, state)

    def act(self, state, rng: np.random.Generator | None = None, deterministic: bool = False) -> np.ndarray:
        """Squashed action in (-1, 1)^d; the environment projects it onto the feasible set."""
        if not deterministic and rng is None:
            raise ValueError("stochastic acting needs an rng")
        return np.tanh(sample_action(self.policy(state), rng, deterministic))

    # learning

    def _min_q(self, nets: list[Critic], states, actions) -> Tensor:
        qs = [c.forward(states, actions) for c in nets]
        out = qs[0]
        for q in qs[1:]:
            out = ad.minimum(out, q)
        return out

    def td_targets(self, batch: Batch, rng: np.random.Generator) -> np.ndarray:
        mean, log_std = self.actor.forward(batch.next_states)
        eps = rng.standard_normal(mean.shape)
        a2, logp2 = squash_log_prob(mean, log_std, eps)
        q_next = self._min_q(self.targets, batch.next_states, a2.data).data
        soft = q_next - self.alpha * logp2.data
        return batch.rewards + self.config.discount * (1.0 - batch.dones) * soft

    def critic_loss(self, states, actions, targets) -> list[Tensor]:
        """Per-critic mean squared TD error against fixed ``targets``."""
        y = np.asarray(targets, dtype=np.float64)
        losses = []
        for c in self.critics:
            diff = c.forward(states, actions) - y
            losses.append(ad.square(diff).mean())
        return losses

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> LossReport:
        cfg = self.config
        batch = buffer.sample(cfg.batch_size, rng)
        y = self.td_targets(batch, rng)

        for c in self.critics:
            c.zero_grad()
        losses = self.critic_loss(batch.states, batch.actions, y)
        total = losses[0]
        for extra in losses[1:]:
            total = total + extra
        total.backward()
        for opt in self.critic_opts:
            opt.step()

        self.actor.zero_grad()
        mean, log_std = self.actor.forward(batch.states)
        eps = rng.standard_normal(mean.shape)
        a_pi, logp = squash_log_prob(mean, log_std, eps)
        q_pi = self._min_q(self.critics, batch.states, a_pi)
        actor_loss = (logp * self.alpha - q_pi).mean()
        actor_loss.backward()
        self.actor_opt.step()
        for c in self.critics:
            c.zero_grad()

        entropy = float(-logp.data.mean())
        if cfg.learn_entropy:
            self.log_alpha.grad = np.array([entropy - self.target_entropy])
            self.alpha_opt.step()
            self.log_alpha.grad = None

        tau = cfg.target_smoothing
        for c, t in zip(self.critics, self.targets):
            for (_, src), (_, dst) in zip(c.named_parameters(), t.named_parameters()):
                dst.data = (1.0 - tau) * dst.data + tau * src.data
        self.updates += 1
        return LossReport(
            critic_loss=float(np.mean([float(l.data) for l in losses])),
            actor_loss=float(actor_loss.data),
            entropy_term=self.alpha * entropy,
            alpha=self.alpha,
            entropy=entropy,
        )

    # parameters

    def networks(self) -> dict[str, Network]:
        nets: dict[str, Network] = {"actor": self.actor}
        for i, (c, t) in enumerate(zip(self.critics, self.targets)):
            nets[f"critic{i}"] = c
            nets[f"target{i}"] = t
        return nets

    def get_params(self) -> dict[str, np.ndarray]:
        out = {"log_alpha": self.log_alpha.data.copy()}
        for prefix, net in self.networks().items():
            for k, v in net.get_params().items():
                out[f"{prefix}/{k}"] = v
        return out

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        expected = set(self.get_params())
        if set(params) != expected:
            raise ValueError(f"parameter names differ: {sorted(set(params) ^ expected)[:5]}")
        for prefix, net in self.networks().items():
            net.set_params({k.split("/", 1)[1]: v for k, v in params.items() if k.split("/", 1)[0] == prefix})
        la = np.asarray(params["log_alpha"], dtype=np.float64)
        if la.shape != (1,):
            raise ValueError("log_alpha must have shape (1,)")
        self.log_alpha.data = la.copy()
