"""Deterministic batch evaluation: episode records, metrics, usage stats.

Evaluation runs the policy at its distribution mode under the training
observation-noise model; every metric below is computed from the clean
logged errors, never from the policy's noisy view.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .env import EnvConfig, NoiseConfig, VecDockEnv
from .policy import deterministic_action, policy_forward
from .propulsion import NUM_PROPELLERS, PropulsionConfig
from .rewards import RewardConfig

__all__ = [
    "FingerprintMismatch",
    "EpisodeRecord",
    "MetricsSummary",
    "run_eval",
    "docking_point",
    "summarize",
    "propeller_usage",
    "METRICS_COLUMNS",
    "summary_csv_row",
    "usage_csv_row",
    "write_records",
    "read_records",
]

ORI_WINDOW = 5  # +/- steps around the docking point for orientation

METRICS_COLUMNS = [
    "Config",
    "Final Pos Err (m)",
    "Final Ori Err (deg)",
    "% Pos < thresh",
    "% Ori < thresh",
    "% Momentary Achievement",
    "% Stable Docking Success",
    "% Time Pos < thresh",
    "% Time Ori < thresh",
]

USAGE_COLUMNS = ["Config"] + [f"u{i + 1}" for i in range(NUM_PROPELLERS)]


class FingerprintMismatch(ValueError):
    """Checkpoint was trained under a different configuration."""


@dataclass
class EpisodeRecord:
    """Clean per-timestep errors and commands of one evaluation episode."""

    pos_err: np.ndarray  # (T,) meters
    ori_err: np.ndarray  # (T,) radians
    commands: np.ndarray  # (T, 8)
    stable_success: bool
    seed: int
    episode: int
    fingerprint: str

    def __post_init__(self):
        t = len(self.pos_err)
        if len(self.ori_err) != t or len(self.commands) != t:
            raise ValueError("record series must share the episode length")


@dataclass
class MetricsSummary:
    final_pos_err_m: float
    final_ori_err_deg: float
    pct_pos_below: float
    pct_ori_below: float
    pct_momentary: float
    pct_stable_success: float
    pct_time_pos_below: float
    pct_time_ori_below: float
    n_episodes: int


def run_eval(
    checkpoint: Checkpoint,
    env_cfg: EnvConfig,
    prop_cfg: PropulsionConfig,
    reward_cfg: RewardConfig,
    noise_cfg: NoiseConfig,
    n_envs: int,
    seed: int,
    expected_fingerprint: str | None = None,
    allow_mismatch: bool = False,
) -> list[EpisodeRecord]:
    """One deterministic episode per environment, recorded step by step."""
    if expected_fingerprint is not None and checkpoint.fingerprint != expected_fingerprint:
        if not allow_mismatch:
            raise FingerprintMismatch(
                f"checkpoint fingerprint {checkpoint.fingerprint!r} does not match "
                f"configuration fingerprint {expected_fingerprint!r}"
            )
    vec_env = VecDockEnv(env_cfg, prop_cfg, reward_cfg, noise_cfg, n_envs=n_envs, seed=seed)
    obs = vec_env.reset()
    length = env_cfg.episode_length
    pos = np.empty((length, n_envs))
    ori = np.empty((length, n_envs))
    cmds = np.empty((length, n_envs, NUM_PROPELLERS))
    stable = np.zeros(n_envs, dtype=bool)
    params = checkpoint.params
    for t in range(length):
        dist, _ = policy_forward(params, obs)
        action = deterministic_action(dist)
        obs, _, _, info = vec_env.step(action)
        pos[t] = info["pos_err"]
        ori[t] = info["ori_err"]
        cmds[t] = info["u"]
        stable |= info["stable_success"]
    return [
        EpisodeRecord(
            pos_err=pos[:, i].copy(),
            ori_err=ori[:, i].copy(),
            commands=cmds[:, i].copy(),
            stable_success=bool(stable[i]),
            seed=seed,
            episode=i,
            fingerprint=checkpoint.fingerprint,
        )
        for i in range(n_envs)
    ]


def docking_point(record: EpisodeRecord) -> tuple[int, float, float]:
    """Evaluated docking point of an episode.

    ``t*`` is the position-error argmin over the final half of the episode
    (ties resolved to the latest step); the reported orientation error is
    the minimum over a +/-5-step window around ``t*`` clipped to episode
    bounds.
    """
    length = len(record.pos_err)
    if length == 0:
        raise ValueError("empty episode record")
    start = length // 2
    segment = record.pos_err[start:]
    # argmin returns the first minimum; scan the reversed segment to get the latest
    t_star = start + (len(segment) - 1 - int(np.argmin(segment[::-1])))
    lo = max(0, t_star - ORI_WINDOW)
    hi = min(length, t_star + ORI_WINDOW + 1)
    return t_star, float(record.pos_err[t_star]), float(np.min(record.ori_err[lo:hi]))


def summarize(
    records: list[EpisodeRecord],
    pos_threshold: float = 0.02,
    ori_threshold: float = float(np.deg2rad(2.0)),
) -> MetricsSummary:
    """Aggregate docking metrics over a batch of episode records."""
    if not records:
        raise ValueError("summarize needs at least one record")
    dock_pos = []
    dock_ori = []
    time_pos = []
    time_ori = []
    stable = []
    for rec in records:
        _, p_err, o_err = docking_point(rec)
        dock_pos.append(p_err)
        dock_ori.append(o_err)
        time_pos.append(float(np.mean(rec.pos_err < pos_threshold)))
        time_ori.append(float(np.mean(rec.ori_err < ori_threshold)))
        stable.append(rec.stable_success)
    dock_pos_arr = np.array(dock_pos)
    dock_ori_arr = np.array(dock_ori)
    pos_ok = dock_pos_arr < pos_threshold
    ori_ok = dock_ori_arr < ori_threshold
    return MetricsSummary(
        final_pos_err_m=float(np.mean(dock_pos_arr)),
        final_ori_err_deg=float(np.rad2deg(np.mean(dock_ori_arr))),
        pct_pos_below=100.0 * float(np.mean(pos_ok)),
        pct_ori_below=100.0 * float(np.mean(ori_ok)),
        pct_momentary=100.0 * float(np.mean(pos_ok & ori_ok)),
        pct_stable_success=100.0 * float(np.mean(stable)),
        pct_time_pos_below=100.0 * float(np.mean(time_pos)),
        pct_time_ori_below=100.0 * float(np.mean(time_ori)),
        n_episodes=len(records),
    )


def propeller_usage(records: list[EpisodeRecord]) -> np.ndarray:
    """Mean per-propeller |u| over the docking-point window, across episodes."""
    if not records:
        raise ValueError("propeller_usage needs at least one record")
    usages = []
    for rec in records:
        t_star, _, _ = docking_point(rec)
        lo = max(0, t_star - ORI_WINDOW)
        hi = min(len(rec.pos_err), t_star + ORI_WINDOW + 1)
        usages.append(np.mean(np.abs(rec.commands[lo:hi]), axis=0))
    return np.mean(usages, axis=0)


def summary_csv_row(label: str, summary: MetricsSummary) -> str:
    values = [
        summary.final_pos_err_m,
        summary.final_ori_err_deg,
        summary.pct_pos_below,
        summary.pct_ori_below,
        summary.pct_momentary,
        summary.pct_stable_success,
        summary.pct_time_pos_below,
        summary.pct_time_ori_below,
    ]
    return ",".join([label] + [f"{v:.6g}" for v in values])


def usage_csv_row(label: str, usage: np.ndarray) -> str:
    return ",".join([label] + [f"{v:.6g}" for v in usage])


def write_records(path: str | Path, records: list[EpisodeRecord]) -> None:
    """Line-delimited JSON export, one record per line."""
    with Path(path).open("w") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "episode": rec.episode,
                        "seed": rec.seed,
                        "fingerprint": rec.fingerprint,
                        "stable_success": rec.stable_success,
                        "pos_err": rec.pos_err.tolist(),
                        "ori_err": rec.ori_err.tolist(),
                        "commands": rec.commands.tolist(),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_records(path: str | Path) -> list[EpisodeRecord]:
    records = []
    with Path(path).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            records.append(
                EpisodeRecord(
                    pos_err=np.asarray(doc["pos_err"], dtype=np.float64),
                    ori_err=np.asarray(doc["ori_err"], dtype=np.float64),
                    commands=np.asarray(doc["commands"], dtype=np.float64),
                    stable_success=bool(doc["stable_success"]),
                    seed=int(doc["seed"]),
                    episode=int(doc["episode"]),
                    fingerprint=str(doc["fingerprint"]),
                )
            )
    return records
