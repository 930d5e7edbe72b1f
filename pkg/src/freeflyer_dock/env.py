"""The docking MDP: observations, noise, episode lifecycle, success logic.

An episode spawns the free-flyer at a random pose inside a box offset from
the goal along the approach axis and runs for a fixed number of control
steps; leaving the safe cuboid is penalized but never terminates the
episode. Success bookkeeping always uses clean, noise-free errors; the
policy only ever sees the noised observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import InertialParams, RigidBodyState, step_dynamics
from .propulsion import (
    NUM_PROPELLERS,
    PropulsionConfig,
    map_action_to_command,
    per_propeller_torques,
    propeller_wrench,
)
from .rewards import RewardBreakdown, RewardConfig, compute_reward, cuboid_violation
from .rotations import (
    integrate_quaternion,
    orientation_error_angle,
    quat_conj,
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_rotmat,
    rotmat_to_6d,
)

__all__ = [
    "StepAfterDone",
    "GoalPose",
    "Observation",
    "NoiseConfig",
    "SuccessTracker",
    "EnvConfig",
    "StepInfo",
    "DockEnv",
    "VecDockEnv",
    "build_observation",
    "apply_observation_noise",
    "OBS_DIM",
]

OBS_DIM = 23  # 15 state entries + 8 previous commands


class StepAfterDone(RuntimeError):
    """step() was called on an environment whose episode already ended."""


@dataclass
class GoalPose:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.q = quat_normalize(self.q)


@dataclass
class Observation:
    """Policy input, all quantities in the robot body frame.

    Flattens to 23 entries in the order: goal-relative position (3), 6D
    orientation error (6), linear velocity (3), angular velocity (3),
    previous thrust commands (8).
    """

    delta_p: np.ndarray
    rot6d_err: np.ndarray
    v_lin: np.ndarray
    v_ang: np.ndarray
    u_prev: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.delta_p, self.rot6d_err, self.v_lin, self.v_ang, self.u_prev])


@dataclass
class NoiseConfig:
    """Bounds of the uniform observation perturbations, one per slice."""

    pos: float = 0.03
    rot6d: float = 0.01
    vlin: float = 0.03
    vang: float = 0.03
    enabled: bool = True

    def __post_init__(self):
        for name in ("pos", "rot6d", "vlin", "vang"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"noise bound {name} must be >= 0")

    def scale_vector(self) -> np.ndarray:
        return np.repeat([self.pos, self.rot6d, self.vlin, self.vang], [3, 6, 3, 3])


@dataclass
class SuccessTracker:
    """Dwell counter over the clean pose errors.

    The counter increments only while position and orientation errors are
    both strictly below their thresholds and resets to zero otherwise;
    success means holding for ``dwell`` consecutive steps.
    """

    pos_threshold: float = 0.02
    ori_threshold: float = np.deg2rad(2.0)
    dwell: int = 5
    consecutive_count: int = 0

    def update(self, pos_err: float, ori_err: float) -> bool:
        if pos_err < 0.0 or ori_err < 0.0:
            raise ValueError("errors must be >= 0")
        if pos_err < self.pos_threshold and ori_err < self.ori_threshold:
            self.consecutive_count += 1
        else:
            self.consecutive_count = 0
        return self.succeeded

    @property
    def succeeded(self) -> bool:
        return self.consecutive_count >= self.dwell

    def reset(self):
        self.consecutive_count = 0


@dataclass
class EnvConfig:
    """Episode timing, mass properties, spawn region and success thresholds."""

    dt: float = 0.05
    episode_length: int = 400
    mass: float = 3.2
    inertia_diag: tuple[float, float, float] = (0.0128, 0.0128, 0.0128)
    goal_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    goal_quat: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    spawn_center: tuple[float, float, float] = (1.5, 0.0, 0.0)
    spawn_half_extents: tuple[float, float, float] = (1.0, 1.0, 1.0)
    spawn_max_angle_deg: float = 60.0
    success_pos_threshold: float = 0.02
    success_ori_threshold_deg: float = 2.0
    success_dwell: int = 5


@dataclass
class StepInfo:
    """Clean per-step diagnostics, independent of observation noise."""

    t: int
    pos_err: float
    ori_err: float
    u: np.ndarray
    success_streak: int
    stable_success: bool
    episode_success: bool


def build_observation(state: RigidBodyState, goal: GoalPose, u_prev: np.ndarray) -> Observation:
    """Goal-relative observation in the body frame."""
    rot_t = quat_to_rotmat(state.q).T
    delta_p = rot_t @ (goal.p - state.p)
    rel_rot = quat_to_rotmat(quat_mul(quat_conj(state.q), goal.q))
    return Observation(
        delta_p=delta_p,
        rot6d_err=rotmat_to_6d(rel_rot),
        v_lin=rot_t @ state.v,
        v_ang=state.omega.copy(),
        u_prev=np.asarray(u_prev, dtype=np.float64).copy(),
    )


def apply_observation_noise(
    obs: Observation, noise: NoiseConfig, rng: np.random.Generator
) -> Observation:
    """Additive independent uniform noise on the 15 state entries.

    The previous-command slice is never perturbed, and the noised 6D slice
    is emitted raw: re-orthogonalization happens only where a rotation
    matrix is actually reconstructed.
    """
    if not noise.enabled:
        return obs
    eps = rng.uniform(-1.0, 1.0, size=15) * noise.scale_vector()
    return Observation(
        delta_p=obs.delta_p + eps[0:3],
        rot6d_err=obs.rot6d_err + eps[3:9],
        v_lin=obs.v_lin + eps[9:12],
        v_ang=obs.v_ang + eps[12:15],
        u_prev=obs.u_prev,
    )


def _pose_errors(state: RigidBodyState, goal: GoalPose) -> tuple[float, float]:
    pos_err = float(np.linalg.norm(state.p - goal.p))
    rel_rot = quat_to_rotmat(quat_mul(quat_conj(state.q), goal.q))
    ori_err = float(orientation_error_angle(rel_rot))
    return pos_err, ori_err


class DockEnv:
    """Single docking environment owning its RNG stream."""

    def __init__(
        self,
        env_cfg: EnvConfig,
        prop_cfg: PropulsionConfig,
        reward_cfg: RewardConfig,
        noise_cfg: NoiseConfig,
        rng: np.random.Generator,
    ):
        self.cfg = env_cfg
        self.prop_cfg = prop_cfg
        self.reward_cfg = reward_cfg
        self.noise_cfg = noise_cfg
        self.rng = rng
        self.inertia = InertialParams(mass=env_cfg.mass, inertia=np.diag(env_cfg.inertia_diag))
        self.goal = GoalPose(p=np.array(env_cfg.goal_position), q=np.array(env_cfg.goal_quat))
        self.tracker = SuccessTracker(
            pos_threshold=env_cfg.success_pos_threshold,
            ori_threshold=np.deg2rad(env_cfg.success_ori_threshold_deg),
            dwell=env_cfg.success_dwell,
        )
        self._spawn_lo = np.asarray(env_cfg.spawn_center) - np.asarray(env_cfg.spawn_half_extents)
        self._spawn_hi = np.asarray(env_cfg.spawn_center) + np.asarray(env_cfg.spawn_half_extents)
        self.state: RigidBodyState | None = None
        self.t = 0
        self._done = True
        self.u_prev = np.zeros(NUM_PROPELLERS)
        self.episode_success = False

    def reset(self) -> tuple[RigidBodyState, Observation]:
        p = self.rng.uniform(self._spawn_lo, self._spawn_hi)
        axis = self.rng.standard_normal(3)
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            axis = np.array([1.0, 0.0, 0.0])
            norm = 1.0
        angle = self.rng.uniform(0.0, np.deg2rad(self.cfg.spawn_max_angle_deg))
        q = quat_mul(self.goal.q, quat_from_axis_angle(axis / norm, angle))
        self.state = RigidBodyState(p=p, q=q, v=np.zeros(3), omega=np.zeros(3))
        self.t = 0
        self._done = False
        self.u_prev = np.zeros(NUM_PROPELLERS)
        self.tracker.reset()
        self.episode_success = False
        obs = apply_observation_noise(
            build_observation(self.state, self.goal, self.u_prev), self.noise_cfg, self.rng
        )
        return self.state, obs

    @property
    def done(self) -> bool:
        return self._done

    def step(self, action: np.ndarray) -> tuple[Observation, RewardBreakdown, bool, StepInfo]:
        if self._done or self.state is None:
            raise StepAfterDone("reset() the environment before stepping again")
        u = map_action_to_command(action)
        wrench = propeller_wrench(self.prop_cfg, u)
        torques = per_propeller_torques(self.prop_cfg, u)
        prev_state = self.state
        self.state = step_dynamics(prev_state, wrench, self.inertia, self.cfg.dt)

        pos_err, ori_err = _pose_errors(self.state, self.goal)
        self.tracker.update(pos_err, ori_err)
        self.episode_success = self.episode_success or self.tracker.succeeded

        reward = compute_reward(
            prev_state,
            self.state,
            self.goal.p,
            self.goal.q,
            u,
            self.u_prev,
            torques,
            self.reward_cfg,
            self.prop_cfg,
        )
        obs = apply_observation_noise(
            build_observation(self.state, self.goal, u), self.noise_cfg, self.rng
        )
        self.u_prev = u
        self.t += 1
        self._done = self.t >= self.cfg.episode_length
        info = StepInfo(
            t=self.t,
            pos_err=pos_err,
            ori_err=ori_err,
            u=u,
            success_streak=self.tracker.consecutive_count,
            stable_success=self.tracker.succeeded,
            episode_success=self.episode_success,
        )
        return obs, reward, self._done, info

    def spawn_inside_cuboid(self) -> bool:
        """Whether the whole spawn box sits inside the safe cuboid."""
        center = np.asarray(self.reward_cfg.cuboid_center)
        half = np.asarray(self.reward_cfg.cuboid_half_extents)
        for corner in (self._spawn_lo, self._spawn_hi):
            if cuboid_violation(corner, center, half) > 0.0:
                return False
        return True


_TERM_NAMES = ("pose", "vel", "boundary", "prog", "cuboid", "drag", "act", "torque")


class VecDockEnv:
    """A batch of independent environments stepped as one array program.

    Semantics mirror :class:`DockEnv` per environment: each one owns a
    child RNG stream spawned from the batch seed, so results are
    independent of any stepping schedule. Finished episodes auto-reset;
    ``step`` returns ``(obs, rewards, dones, info)`` where ``info`` holds
    batched arrays (clean ``pos_err``/``ori_err``, commands ``u``, success
    flags, per-term rewards) plus, when episodes finished, the pre-reset
    ``final_observation`` rows for time-limit bootstrapping and one
    ``episodes`` aggregate dict per finished environment.
    """

    def __init__(
        self,
        env_cfg: EnvConfig,
        prop_cfg: PropulsionConfig,
        reward_cfg: RewardConfig,
        noise_cfg: NoiseConfig,
        n_envs: int,
        seed: int,
    ):
        if n_envs < 1:
            raise ValueError("n_envs must be >= 1")
        self.cfg = env_cfg
        self.prop_cfg = prop_cfg
        self.reward_cfg = reward_cfg
        self.noise_cfg = noise_cfg
        self.n_envs = n_envs
        self.rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_envs)]

        self._inertia = InertialParams(mass=env_cfg.mass, inertia=np.diag(env_cfg.inertia_diag))
        self.goal = GoalPose(p=np.array(env_cfg.goal_position), q=np.array(env_cfg.goal_quat))
        self._spawn_lo = np.asarray(env_cfg.spawn_center) - np.asarray(env_cfg.spawn_half_extents)
        self._spawn_hi = np.asarray(env_cfg.spawn_center) + np.asarray(env_cfg.spawn_half_extents)
        self._pos_threshold = env_cfg.success_pos_threshold
        self._ori_threshold = np.deg2rad(env_cfg.success_ori_threshold_deg)
        self._noise_scale = noise_cfg.scale_vector()

        # per-unit-command actuation maps; commands enter everything linearly
        self._force_per_u = -prop_cfg.f_max_vec[:, None] * prop_cfg.thrust_dirs  # (8, 3)
        torque_per_u = np.cross(prop_cfg.positions, self._force_per_u)
        if prop_cfg.drag_dynamics_enabled:
            drag_per_u = (prop_cfg.polarities * prop_cfg.k_drag * prop_cfg.f_max_vec)[:, None]
            torque_per_u = torque_per_u + drag_per_u * prop_cfg.spin_axes
        self._torque_per_u = torque_per_u
        self._torque_l1_per_u = np.abs(torque_per_u).sum(axis=1)  # (8,)
        self._drag_scalar_per_u = prop_cfg.polarities * prop_cfg.k_drag * prop_cfg.f_max_vec

        shape3 = (n_envs, 3)
        self.p = np.zeros(shape3)
        self.q = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n_envs, 1))
        self.v = np.zeros(shape3)
        self.omega = np.zeros(shape3)
        self.u_prev = np.zeros((n_envs, NUM_PROPELLERS))
        self.t = np.zeros(n_envs, dtype=int)
        self.streak = np.zeros(n_envs, dtype=int)
        self.episode_success = np.zeros(n_envs, dtype=bool)
        self._d_prev = np.zeros(n_envs)
        self._ep_return = np.zeros(n_envs)
        self._ep_terms = {name: np.zeros(n_envs) for name in _TERM_NAMES}

    def _reset_rows(self, idx: np.ndarray) -> np.ndarray:
        """Respawn the given environments; returns their noised observations."""
        for i in idx:
            rng = self.rngs[i]
            self.p[i] = rng.uniform(self._spawn_lo, self._spawn_hi)
            axis = rng.standard_normal(3)
            norm = np.linalg.norm(axis)
            if norm < 1e-12:
                axis = np.array([1.0, 0.0, 0.0])
                norm = 1.0
            angle = rng.uniform(0.0, np.deg2rad(self.cfg.spawn_max_angle_deg))
            self.q[i] = quat_mul(self.goal.q, quat_from_axis_angle(axis / norm, angle))
        self.v[idx] = 0.0
        self.omega[idx] = 0.0
        self.u_prev[idx] = 0.0
        self.t[idx] = 0
        self.streak[idx] = 0
        self.episode_success[idx] = False
        self._d_prev[idx] = np.linalg.norm(self.p[idx] - self.goal.p, axis=1)
        self._ep_return[idx] = 0.0
        for name in _TERM_NAMES:
            self._ep_terms[name][idx] = 0.0
        obs, _ = self._observe(idx)
        return self._noise_rows(obs, idx)

    def _observe(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Clean observations and orientation errors for the given rows."""
        rot = quat_to_rotmat(self.q[idx])
        rel_rot = quat_to_rotmat(quat_mul(quat_conj(self.q[idx]), self.goal.q))
        delta_p = np.einsum("nji,nj->ni", rot, self.goal.p - self.p[idx])
        rot6d = np.concatenate([rel_rot[..., :, 0], rel_rot[..., :, 1]], axis=-1)
        v_lin = np.einsum("nji,nj->ni", rot, self.v[idx])
        obs = np.concatenate([delta_p, rot6d, v_lin, self.omega[idx], self.u_prev[idx]], axis=1)
        return obs, orientation_error_angle(rel_rot)

    def _noise_rows(self, obs: np.ndarray, idx: np.ndarray) -> np.ndarray:
        if not self.noise_cfg.enabled:
            return obs
        eps = np.stack([self.rngs[i].uniform(-1.0, 1.0, size=15) for i in idx])
        obs[:, :15] += eps * self._noise_scale
        return obs

    def reset(self) -> np.ndarray:
        return self._reset_rows(np.arange(self.n_envs))

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
        if np.any(self.t >= self.cfg.episode_length):
            raise StepAfterDone("internal error: unreset terminated environment")
        cfg = self.cfg
        rew = self.reward_cfg
        u = map_action_to_command(np.asarray(actions, dtype=np.float64).reshape(self.n_envs, -1))

        force_body = u @ self._force_per_u
        torque = u @ self._torque_per_u
        force_world = quat_rotate(self.q, force_body)
        self.v += force_world * (cfg.dt / cfg.mass)
        self.p += self.v * cfg.dt
        gyro = np.cross(self.omega, self.omega @ self._inertia.inertia.T)
        self.omega += (torque - gyro) @ self._inertia.inertia_inv.T * cfg.dt
        self.q = integrate_quaternion(self.q, self.omega, cfg.dt)
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.omega)) and np.all(np.isfinite(self.q))):
            raise NonFiniteState("vectorized dynamics produced non-finite state")

        old_u_prev = self.u_prev
        # the observation carries this step's commands; keep a private copy
        # so auto-reset zeroing cannot leak into the info dict's view of u
        self.u_prev = u.copy()
        obs, ori_err = self._observe(np.arange(self.n_envs))
        pos_err = np.linalg.norm(self.p - self.goal.p, axis=1)
        ok = (pos_err < self._pos_threshold) & (ori_err < self._ori_threshold)
        self.streak = np.where(ok, self.streak + 1, 0)
        stable_now = self.streak >= cfg.success_dwell
        self.episode_success |= stable_now

        terms = {
            "pose": np.exp(-pos_err / rew.kappa_p) + np.exp(-ori_err / rew.kappa_o),
            "vel": (
                np.clip(np.linalg.norm(self.v, axis=1) - rew.v_min, 0.0, rew.v_max - rew.v_min)
                + np.clip(np.linalg.norm(self.omega, axis=1) - rew.omega_min, 0.0, rew.omega_max - rew.omega_min)
            ),
            "boundary": np.exp(-np.maximum(0.0, pos_err - rew.r_op) / rew.kappa_b),
            "prog": (self._d_prev - pos_err) * (rew.d_max - pos_err),
            "cuboid": -np.sqrt(
                np.sum(
                    np.maximum(
                        np.abs(self.p - np.asarray(rew.cuboid_center)) - np.asarray(rew.cuboid_half_extents),
                        0.0,
                    )
                    ** 2,
                    axis=1,
                )
            ),
            "drag": -np.abs(u @ self._drag_scalar_per_u),
            "act": np.sum((u - old_u_prev) ** 2, axis=1),
            "torque": u @ self._torque_l1_per_u,
        }
        w = rew.weights
        rewards = sum(getattr(w, name) * terms[name] for name in _TERM_NAMES)

        obs = self._noise_rows(obs, np.arange(self.n_envs))
        # copy: _reset_rows writes respawn distances through _d_prev, and
        # the info dict must keep terminal errors of finished episodes
        self._d_prev = pos_err.copy()
        self.t += 1
        dones = self.t >= cfg.episode_length

        self._ep_return += rewards
        for name in _TERM_NAMES:
            self._ep_terms[name] += terms[name]

        info: dict = {
            "pos_err": pos_err,
            "ori_err": ori_err,
            "u": u,
            "success_streak": self.streak.copy(),
            "stable_success": stable_now,
            "episode_success": self.episode_success.copy(),
            "reward_terms": terms,
        }
        if dones.any():
            idx = np.flatnonzero(dones)
            info["done_indices"] = idx
            info["final_observation"] = obs[idx].copy()
            info["episodes"] = [
                {
                    "return": float(self._ep_return[i]),
                    "length": int(self.t[i]),
                    "stable_success": bool(self.episode_success[i]),
                    "term_sums": {name: float(self._ep_terms[name][i]) for name in _TERM_NAMES},
                }
                for i in idx
            ]
            obs[idx] = self._reset_rows(idx)
        return obs, rewards, dones, info
