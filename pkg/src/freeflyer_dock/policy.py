"""Actor-critic MLP with a tanh-squashed diagonal Gaussian head.

Forward passes, log-densities and exact reverse-mode gradients are all
hand-rolled in float64 numpy so the finite-difference oracle can pin them
down tightly. The actor and critic are separate two-hidden-layer tanh
networks; the action log-standard-deviation is a free state-independent
parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NonFiniteOutput",
    "Layer",
    "PolicyParams",
    "ActionDistribution",
    "ForwardCache",
    "init_policy_params",
    "policy_forward",
    "forward_cached",
    "policy_backward",
    "sample_action",
    "deterministic_action",
    "log_prob_and_entropy",
    "zeros_like_params",
]

# tanh outputs are clipped here so actions stay strictly inside (-1, 1)
# and the atanh in the density recomputation matches sampling exactly
ACTION_CLIP = 1.0 - 1e-6
ATANH_CLIP = 1.0 - 1e-6
EPS_NUM = 1e-8
_LOG_2PI = float(np.log(2.0 * np.pi))


class NonFiniteOutput(FloatingPointError):
    """The network produced NaN or infinity."""


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)


@dataclass
class PolicyParams:
    actor: list[Layer]
    critic: list[Layer]
    log_std: np.ndarray  # (8,)

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Deterministic (name, array) traversal used by the optimizer and checkpoints."""
        out = []
        for net_name, layers in (("actor", self.actor), ("critic", self.critic)):
            for i, layer in enumerate(layers):
                out.append((f"{net_name}.{i}.W", layer.W))
                out.append((f"{net_name}.{i}.b", layer.b))
        out.append(("log_std", self.log_std))
        return out

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            actor=[Layer(l.W.copy(), l.b.copy()) for l in self.actor],
            critic=[Layer(l.W.copy(), l.b.copy()) for l in self.critic],
            log_std=self.log_std.copy(),
        )

    @property
    def act_dim(self) -> int:
        return self.log_std.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.actor[0].W.shape[1]


@dataclass
class ActionDistribution:
    """Diagonal Gaussian over pre-squash actions; mean may be batched."""

    mean: np.ndarray
    log_std: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


@dataclass
class ForwardCache:
    obs: np.ndarray
    actor_acts: list[np.ndarray]
    critic_acts: list[np.ndarray]


def _orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def init_policy_params(
    rng: np.random.Generator,
    obs_dim: int = 23,
    act_dim: int = 8,
    hidden: tuple[int, ...] = (128, 128),
    log_std_init: float = float(np.log(0.5)),
) -> PolicyParams:
    """Orthogonal-initialized actor/critic with conventional output gains."""

    def make(sizes: list[int], out_gain: float) -> list[Layer]:
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
            layers.append(Layer(W=_orthogonal(n_out, n_in, gain, rng), b=np.zeros(n_out)))
        return layers

    sizes = [obs_dim, *hidden]
    return PolicyParams(
        actor=make([*sizes, act_dim], 0.01),
        critic=make([*sizes, 1], 1.0),
        log_std=np.full(act_dim, log_std_init),
    )


def zeros_like_params(params: PolicyParams) -> PolicyParams:
    return PolicyParams(
        actor=[Layer(np.zeros_like(l.W), np.zeros_like(l.b)) for l in params.actor],
        critic=[Layer(np.zeros_like(l.W), np.zeros_like(l.b)) for l in params.critic],
        log_std=np.zeros_like(params.log_std),
    )


def _mlp_forward(layers: list[Layer], x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Hidden layers use tanh, the output layer is linear; caches activations."""
    acts = [x]
    h = x
    for layer in layers[:-1]:
        h = np.tanh(h @ layer.W.T + layer.b)
        acts.append(h)
    out = h @ layers[-1].W.T + layers[-1].b
    return out, acts


def _mlp_backward(
    layers: list[Layer], acts: list[np.ndarray], d_out: np.ndarray
) -> list[Layer]:
    grads: list[Layer] = [None] * len(layers)  # type: ignore[list-item]
    d = d_out
    for i in range(len(layers) - 1, -1, -1):
        grads[i] = Layer(W=d.T @ acts[i], b=d.sum(axis=0))
        if i > 0:
            d = (d @ layers[i].W) * (1.0 - acts[i] ** 2)  # tanh'(z) = 1 - tanh(z)^2
    return grads


def forward_cached(
    params: PolicyParams, obs: np.ndarray
) -> tuple[ActionDistribution, np.ndarray, ForwardCache]:
    """Batched forward pass returning the cache needed for backprop."""
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    mean, actor_acts = _mlp_forward(params.actor, obs)
    value_col, critic_acts = _mlp_forward(params.critic, obs)
    value = value_col[:, 0]
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(value))):
        raise NonFiniteOutput("policy forward pass produced non-finite outputs")
    dist = ActionDistribution(mean=mean, log_std=params.log_std)
    return dist, value, ForwardCache(obs=obs, actor_acts=actor_acts, critic_acts=critic_acts)


def policy_forward(params: PolicyParams, obs: np.ndarray) -> tuple[ActionDistribution, np.ndarray]:
    """Action distribution and value estimate for a batch of observations."""
    dist, value, _ = forward_cached(params, obs)
    return dist, value


def policy_backward(
    params: PolicyParams,
    cache: ForwardCache,
    d_mean: np.ndarray,
    d_value: np.ndarray,
    d_log_std: np.ndarray | None = None,
) -> PolicyParams:
    """Exact gradients of a scalar loss given its head gradients.

    ``d_mean``/``d_value`` are dL/d(actor mean) and dL/d(value) for every
    sample in the cached batch; ``d_log_std`` is the direct dL/d(log_std)
    accumulated by the caller. Returns a parameter-shaped container of
    gradients.
    """
    d_mean = np.atleast_2d(np.asarray(d_mean, dtype=np.float64))
    d_value = np.asarray(d_value, dtype=np.float64).reshape(-1, 1)
    actor_grads = _mlp_backward(params.actor, cache.actor_acts, d_mean)
    critic_grads = _mlp_backward(params.critic, cache.critic_acts, d_value)
    if d_log_std is None:
        d_log_std = np.zeros_like(params.log_std)
    return PolicyParams(actor=actor_grads, critic=critic_grads, log_std=np.asarray(d_log_std))


def _log_prob_from_raw(dist: ActionDistribution, raw: np.ndarray, action: np.ndarray) -> np.ndarray:
    std = dist.std
    z = (raw - dist.mean) / std
    gauss = -0.5 * np.sum(z**2, axis=-1) - np.sum(dist.log_std) - 0.5 * raw.shape[-1] * _LOG_2PI
    correction = np.sum(np.log(1.0 - action**2 + EPS_NUM), axis=-1)
    return gauss - correction


def sample_action(
    dist: ActionDistribution, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw tanh-squashed actions and their exact log-density."""
    raw = dist.mean + dist.std * rng.standard_normal(dist.mean.shape)
    action = np.clip(np.tanh(raw), -ACTION_CLIP, ACTION_CLIP)
    log_prob, _ = log_prob_and_entropy(dist, action)
    return action, log_prob


def deterministic_action(dist: ActionDistribution) -> np.ndarray:
    """Mode of the squashed distribution; no RNG draw."""
    return np.clip(np.tanh(dist.mean), -ACTION_CLIP, ACTION_CLIP)


def log_prob_and_entropy(
    dist: ActionDistribution, action: np.ndarray
) -> tuple[np.ndarray, float]:
    """Log-density of ``action`` under ``dist`` and the base Gaussian entropy.

    The action is clamped to ``1 - 1e-6`` in magnitude before the inverse
    tanh; the change-of-variables correction uses the clamped action. The
    entropy is that of the underlying Gaussian and is independent of the
    mean.
    """
    action = np.clip(np.asarray(action, dtype=np.float64), -ATANH_CLIP, ATANH_CLIP)
    raw = np.arctanh(action)
    log_prob = _log_prob_from_raw(dist, raw, action)
    act_dim = dist.log_std.shape[0]
    entropy = float(np.sum(dist.log_std) + 0.5 * act_dim * (1.0 + _LOG_2PI))
    return log_prob, entropy
