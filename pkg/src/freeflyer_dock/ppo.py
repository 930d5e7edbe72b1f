"""Clipped-surrogate PPO with GAE on the vectorized docking environment.

Everything is seeded: environment streams, action sampling and minibatch
shuffling each draw from their own per-update seed sequences, so a run is
reproducible from (configs, seed) alone regardless of scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .env import EnvConfig, NoiseConfig, VecDockEnv
from .policy import (
    ATANH_CLIP,
    PolicyParams,
    forward_cached,
    init_policy_params,
    log_prob_and_entropy,
    policy_backward,
    policy_forward,
    sample_action,
)
from .propulsion import PropulsionConfig
from .rewards import RewardConfig

__all__ = [
    "NonFiniteLoss",
    "PPOConfig",
    "RolloutBuffer",
    "UpdateStats",
    "TrainedRun",
    "compute_gae",
    "Adam",
    "clip_grad_norm",
    "ppo_loss_and_grads",
    "ppo_update",
    "collect_rollouts",
    "train",
]


class NonFiniteLoss(FloatingPointError):
    """A loss or gradient went NaN/inf; the update is aborted."""


@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    anneal_lr: bool = True
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    horizon: int = 128
    n_envs: int = 16
    total_steps: int = 2_000_000
    max_grad_norm: float = 0.5
    checkpoint_interval: int = 200
    hidden: tuple[int, int] = (128, 128)
    log_std_init: float = float(np.log(0.5))
    # when set, the exploration log-std follows a fixed linear schedule from
    # log_std_init to this value instead of being learned
    log_std_anneal_to: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be > 0")
        for name in ("epochs", "minibatches", "horizon", "n_envs", "total_steps", "checkpoint_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class RolloutBuffer:
    """(horizon, n_envs) time series plus the bootstrap values at the end."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap_value: np.ndarray

    def __post_init__(self):
        t, n = self.rewards.shape
        for name in ("obs", "actions", "log_probs", "values", "dones"):
            arr = getattr(self, name)
            if arr.shape[:2] != (t, n):
                raise ValueError(f"buffer field {name} has shape {arr.shape}, expected ({t}, {n}, ...)")
        if self.bootstrap_value.shape != (n,):
            raise ValueError("bootstrap_value must have one entry per environment")


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


@dataclass
class TrainedRun:
    out_dir: Path
    log_path: Path
    checkpoint_paths: list[Path]
    final_checkpoint: Path
    params: PolicyParams
    updates: int
    env_steps: int


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_value: np.ndarray | float,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets.

    ``delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t`` with
    ``A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}``; the series
    beyond the horizon is represented by ``bootstrap_value``. Returns are
    ``A + V``. Accepts ``(T,)`` or ``(T, n_envs)`` series.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(dones, dtype=np.float64)
    horizon = rewards.shape[0]
    if values.shape[0] != horizon or nonterminal.shape[0] != horizon:
        raise ValueError("rewards, values and dones must share the time dimension")
    advantages = np.zeros_like(rewards)
    last = np.zeros_like(np.asarray(bootstrap_value, dtype=np.float64))
    for t in range(horizon - 1, -1, -1):
        v_next = bootstrap_value if t == horizon - 1 else values[t + 1]
        delta = rewards[t] + gamma * v_next * nonterminal[t] - values[t]
        last = delta + gamma * lam * nonterminal[t] * last
        advantages[t] = last
    return advantages, advantages + values


class Adam:
    """Per-parameter adaptive moments, bias-corrected."""

    def __init__(self, params: PolicyParams, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}

    def step(self, params: PolicyParams, grads: PolicyParams) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        grad_map = dict(grads.named_arrays())
        for name, arr in params.named_arrays():
            g = grad_map[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_grad_norm(grads: PolicyParams, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(a * a)) for _, a in grads.named_arrays()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for _, arr in grads.named_arrays():
            arr *= scale
    return total


def ppo_loss_and_grads(
    params: PolicyParams,
    obs: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    clip_eps: float,
    value_coef: float,
    entropy_coef: float,
) -> tuple[float, PolicyParams, UpdateStats]:
    """Minibatch loss, exact parameter gradients and summary statistics.

    Loss per sample is ``-min(ratio*A, clip(ratio)*A)`` plus the weighted
    squared value error minus the entropy bonus; all three parts are
    averaged over the minibatch (the entropy is state-independent).
    """
    dist, value, cache = forward_cached(params, obs)
    log_probs, entropy = log_prob_and_entropy(dist, actions)
    ratio = np.exp(log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    policy_loss = float(np.mean(-np.minimum(unclipped, clipped)))
    value_err = value - returns
    value_loss = float(np.mean(value_err**2))
    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy

    batch = obs.shape[0]
    # the min() passes gradient only where the unclipped branch is active
    active = unclipped <= clipped
    d_log_prob = -(ratio * advantages) * active / batch
    clamped = np.clip(actions, -ATANH_CLIP, ATANH_CLIP)
    z = (np.arctanh(clamped) - dist.mean) / dist.std
    d_mean = d_log_prob[:, None] * (z / dist.std)
    d_log_std = np.sum(d_log_prob[:, None] * (z**2 - 1.0), axis=0) - entropy_coef
    d_value = 2.0 * value_coef * value_err / batch
    grads = policy_backward(params, cache, d_mean, d_value, d_log_std)

    stats = UpdateStats(
        policy_loss=policy_loss,
        value_loss=value_loss,
        entropy=float(entropy),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
    )
    return float(loss), grads, stats


def ppo_update(
    params: PolicyParams,
    optimizer: Adam,
    buffer: RolloutBuffer,
    cfg: PPOConfig,
    rng: np.random.Generator,
) -> tuple[PolicyParams, UpdateStats]:
    """One full PPO update: GAE, normalization, shuffled minibatch epochs."""
    advantages, returns = compute_gae(
        buffer.rewards, buffer.values, buffer.dones, buffer.bootstrap_value, cfg.gamma, cfg.lam
    )
    batch = buffer.rewards.size
    obs = buffer.obs.reshape(batch, -1)
    actions = buffer.actions.reshape(batch, -1)
    old_log_probs = buffer.log_probs.reshape(batch)
    advantages = advantages.reshape(batch)
    returns = returns.reshape(batch)
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    stat_list: list[UpdateStats] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(batch)
        for mb_index, idx in enumerate(np.array_split(perm, cfg.minibatches)):
            loss, grads, stats = ppo_loss_and_grads(
                params,
                obs[idx],
                actions[idx],
                old_log_probs[idx],
                advantages[idx],
                returns[idx],
                cfg.clip_eps,
                cfg.value_coef,
                cfg.entropy_coef,
            )
            if not np.isfinite(loss) or not all(
                np.all(np.isfinite(a)) for _, a in grads.named_arrays()
            ):
                raise NonFiniteLoss(f"non-finite loss/gradient in epoch {epoch}, minibatch {mb_index}")
            clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(params, grads)
            stat_list.append(stats)
    return params, UpdateStats(
        policy_loss=float(np.mean([s.policy_loss for s in stat_list])),
        value_loss=float(np.mean([s.value_loss for s in stat_list])),
        entropy=float(np.mean([s.entropy for s in stat_list])),
        clip_fraction=float(np.mean([s.clip_fraction for s in stat_list])),
    )


def collect_rollouts(
    vec_env: VecDockEnv,
    params: PolicyParams,
    last_obs: np.ndarray,
    horizon: int,
    gamma: float,
    action_rng: np.random.Generator,
) -> tuple[RolloutBuffer, list[dict], dict[str, float], np.ndarray]:
    """Step ``horizon`` transitions, returning the buffer and episode stats.

    Episodes here only ever end by time limit, which is not a task
    failure, so the terminal observation's value is folded into the last
    reward (``r += gamma * V(final_obs)``) before the done mask cuts the
    advantage chain.
    """
    n_envs = vec_env.n_envs
    obs_buf = np.empty((horizon, n_envs, last_obs.shape[-1]))
    act_buf = np.empty((horizon, n_envs, params.act_dim))
    logp_buf = np.empty((horizon, n_envs))
    rew_buf = np.empty((horizon, n_envs))
    val_buf = np.empty((horizon, n_envs))
    done_buf = np.zeros((horizon, n_envs))
    episodes: list[dict] = []
    term_sums: dict[str, float] = {}
    obs = last_obs
    for t in range(horizon):
        dist, value, _ = forward_cached(params, obs)
        action, log_prob = sample_action(dist, action_rng)
        next_obs, rewards, dones, info = vec_env.step(action)
        for name, arr in info["reward_terms"].items():
            term_sums[name] = term_sums.get(name, 0.0) + float(arr.sum())
        term_sums["total"] = term_sums.get("total", 0.0) + float(rewards.sum())
        episodes.extend(info.get("episodes", ()))
        done_idx = info.get("done_indices")
        if done_idx is not None:
            _, final_value = policy_forward(params, info["final_observation"])
            rewards = rewards.copy()
            rewards[done_idx] += gamma * final_value
        obs_buf[t] = obs
        act_buf[t] = action
        logp_buf[t] = log_prob
        rew_buf[t] = rewards
        val_buf[t] = value
        done_buf[t] = dones.astype(np.float64)
        obs = next_obs
    _, bootstrap = policy_forward(params, obs)
    n_steps = horizon * n_envs
    term_means = {name: val / n_steps for name, val in term_sums.items()}
    buffer = RolloutBuffer(
        obs=obs_buf,
        actions=act_buf,
        log_probs=logp_buf,
        rewards=rew_buf,
        values=val_buf,
        dones=done_buf,
        bootstrap_value=bootstrap,
    )
    return buffer, episodes, term_means, obs


def _log_record(
    update: int, env_steps: int, episodes: list[dict], term_means: dict, stats: UpdateStats
) -> dict:
    returns = [e["return"] for e in episodes]
    return {
        "update": update,
        "env_steps": env_steps,
        "ep_count": len(episodes),
        "ep_return_mean": float(np.mean(returns)) if returns else None,
        "ep_return_min": float(np.min(returns)) if returns else None,
        "ep_return_max": float(np.max(returns)) if returns else None,
        "stable_success_rate": (
            float(np.mean([e["stable_success"] for e in episodes])) if episodes else None
        ),
        "reward_term_means": {k: term_means[k] for k in sorted(term_means)},
        "policy_loss": stats.policy_loss,
        "value_loss": stats.value_loss,
        "entropy": stats.entropy,
        "clip_fraction": stats.clip_fraction,
    }


def train(
    env_cfg: EnvConfig,
    prop_cfg: PropulsionConfig,
    reward_cfg: RewardConfig,
    noise_cfg: NoiseConfig,
    ppo_cfg: PPOConfig,
    seed: int,
    out_dir: str | Path,
    fingerprint: str = "",
    progress: bool = False,
) -> TrainedRun:
    """Run the full collect / GAE / update loop and persist its artifacts.

    Writes ``train_log.jsonl`` (one record per update) and periodic plus
    final checkpoints under ``checkpoints/``. Fully reproducible from the
    configs and ``seed``.
    """
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"

    vec_env = VecDockEnv(
        env_cfg, prop_cfg, reward_cfg, noise_cfg, n_envs=ppo_cfg.n_envs,
        seed=np.random.SeedSequence((seed, 0)).generate_state(1)[0],
    )
    params = init_policy_params(
        np.random.default_rng(np.random.SeedSequence((seed, 1))),
        hidden=tuple(ppo_cfg.hidden),
        log_std_init=ppo_cfg.log_std_init,
    )
    optimizer = Adam(params, lr=ppo_cfg.lr)
    obs = vec_env.reset()

    steps_per_update = ppo_cfg.horizon * ppo_cfg.n_envs
    n_updates = math.ceil(ppo_cfg.total_steps / steps_per_update)
    checkpoint_paths: list[Path] = []
    env_steps = 0
    with log_path.open("w") as log_file:
        for update in range(1, n_updates + 1):
            if ppo_cfg.anneal_lr:
                optimizer.lr = ppo_cfg.lr * (1.0 - (update - 1) / n_updates)
            if ppo_cfg.log_std_anneal_to is not None:
                frac = (update - 1) / max(1, n_updates - 1)
                params.log_std[:] = (1.0 - frac) * ppo_cfg.log_std_init + frac * ppo_cfg.log_std_anneal_to
            try:
                action_rng = np.random.default_rng(np.random.SeedSequence((seed, 2, update)))
                buffer, episodes, term_means, obs = collect_rollouts(
                    vec_env, params, obs, ppo_cfg.horizon, ppo_cfg.gamma, action_rng
                )
                update_rng = np.random.default_rng(np.random.SeedSequence((seed, 3, update)))
                params, stats = ppo_update(params, optimizer, buffer, ppo_cfg, update_rng)
            except (NonFiniteLoss, FloatingPointError) as exc:
                raise type(exc)(f"update {update} (seed {seed}): {exc}") from exc
            env_steps += steps_per_update
            record = _log_record(update, env_steps, episodes, term_means, stats)
            log_file.write(json.dumps(record, sort_keys=True) + "\n")
            if progress and (update % 10 == 0 or update == n_updates):
                rate = record["stable_success_rate"]
                print(
                    f"update {update}/{n_updates} steps {env_steps} "
                    f"ret {record['ep_return_mean']} success {rate}",
                    flush=True,
                )
            if update % ppo_cfg.checkpoint_interval == 0 and update != n_updates:
                path = ckpt_dir / f"ckpt_{update:05d}.json"
                save_checkpoint(path, params, fingerprint, {"update": update, "env_steps": env_steps})
                checkpoint_paths.append(path)
    final_path = ckpt_dir / "ckpt_final.json"
    save_checkpoint(final_path, params, fingerprint, {"update": n_updates, "env_steps": env_steps})
    checkpoint_paths.append(final_path)
    return TrainedRun(
        out_dir=out_dir,
        log_path=log_path,
        checkpoint_paths=checkpoint_paths,
        final_checkpoint=final_path,
        params=params,
        updates=n_updates,
        env_steps=env_steps,
    )
