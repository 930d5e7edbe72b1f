"""Shaped reward for the docking task: eight weighted terms.

Positive-formulated penalty terms (velocity, action rate, torque) carry
negative weights in the defaults; the cuboid and drag terms already carry
their own minus sign and keep positive weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .dynamics import RigidBodyState
from .propulsion import PropulsionConfig, residual_drag_scalar
from .rotations import orientation_error_angle, quat_conj, quat_mul, quat_to_rotmat

__all__ = ["RewardWeights", "RewardConfig", "RewardBreakdown", "compute_reward"]


@dataclass
class RewardWeights:
    pose: float = 1.0
    vel: float = -0.5
    boundary: float = 0.2
    prog: float = 1.0
    cuboid: float = 1.0
    drag: float = 10.0
    act: float = -0.05
    torque: float = -0.1


@dataclass
class RewardConfig:
    """Scales, bands and weights of the reward terms.

    ``kappa_p/kappa_o/kappa_b`` are exponential shaping scales [m, rad, m];
    the velocity band penalizes speeds above ``v_min``/``omega_min`` up to
    a saturation at ``v_max``/``omega_max``; ``d_max`` normalizes the
    progress term; ``r_op`` is the operational radius around the goal
    beyond which the boundary distance grows; the cuboid is the safe
    docking envelope in world frame.
    """

    kappa_p: float = 0.5
    kappa_o: float = 0.5
    kappa_b: float = 0.5
    v_min: float = 0.0
    v_max: float = 0.3
    omega_min: float = 0.0
    omega_max: float = 0.5
    d_max: float = 5.0
    r_op: float = 1.5
    cuboid_center: tuple[float, float, float] = (1.25, 0.0, 0.0)
    cuboid_half_extents: tuple[float, float, float] = (1.75, 1.25, 1.25)
    weights: RewardWeights = field(default_factory=RewardWeights)


@dataclass
class RewardBreakdown:
    """Unweighted per-term values plus the weighted total."""

    pose: float
    vel: float
    boundary: float
    prog: float
    cuboid: float
    drag: float
    act: float
    torque: float
    total: float

    def terms(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "total"}


def cuboid_violation(p: np.ndarray, center: np.ndarray, half_extents: np.ndarray) -> float:
    """Euclidean norm of the per-axis overshoot outside the box (0 inside)."""
    overshoot = np.maximum(np.abs(p - center) - half_extents, 0.0)
    return float(np.sqrt(np.sum(overshoot**2)))


def compute_reward(
    prev_state: RigidBodyState,
    state: RigidBodyState,
    goal_p: np.ndarray,
    goal_q: np.ndarray,
    u: np.ndarray,
    u_prev: np.ndarray,
    per_prop_torques: np.ndarray,
    cfg: RewardConfig,
    prop_cfg: PropulsionConfig,
) -> RewardBreakdown:
    """Evaluate every reward term for the transition ``prev_state -> state``."""
    w = cfg.weights
    center = np.asarray(cfg.cuboid_center, dtype=np.float64)
    half = np.asarray(cfg.cuboid_half_extents, dtype=np.float64)

    pos_err = float(np.linalg.norm(goal_p - state.p))
    rel_rot = quat_to_rotmat(quat_mul(quat_conj(state.q), goal_q))
    ori_err = float(orientation_error_angle(rel_rot))
    r_pose = np.exp(-pos_err / cfg.kappa_p) + np.exp(-ori_err / cfg.kappa_o)

    speed = float(np.linalg.norm(state.v))
    spin = float(np.linalg.norm(state.omega))
    r_vel = np.clip(speed - cfg.v_min, 0.0, cfg.v_max - cfg.v_min) + np.clip(
        spin - cfg.omega_min, 0.0, cfg.omega_max - cfg.omega_min
    )

    d_boundary = max(0.0, pos_err - cfg.r_op)
    r_boundary = np.exp(-d_boundary / cfg.kappa_b)

    d_prev = float(np.linalg.norm(goal_p - prev_state.p))
    r_prog = (d_prev - pos_err) * (cfg.d_max - pos_err)

    r_cuboid = -cuboid_violation(state.p, center, half)
    r_drag = -abs(residual_drag_scalar(prop_cfg, u))
    r_act = float(np.sum((u - u_prev) ** 2))
    r_torque = float(np.sum(np.abs(per_prop_torques)))

    total = (
        w.pose * r_pose
        + w.vel * r_vel
        + w.boundary * r_boundary
        + w.prog * r_prog
        + w.cuboid * r_cuboid
        + w.drag * r_drag
        + w.act * r_act
        + w.torque * r_torque
    )
    return RewardBreakdown(
        pose=float(r_pose),
        vel=float(r_vel),
        boundary=float(r_boundary),
        prog=float(r_prog),
        cuboid=float(r_cuboid),
        drag=float(r_drag),
        act=float(r_act),
        torque=float(r_torque),
        total=float(total),
    )
