"""Rigid-body state and microgravity integration step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .propulsion import BodyWrench
from .rotations import integrate_quaternion, quat_normalize, quat_rotate

__all__ = ["NonFiniteState", "RigidBodyState", "InertialParams", "step_dynamics"]


class NonFiniteState(FloatingPointError):
    """The integrator produced NaN or infinity; the simulation blew up."""


@dataclass
class RigidBodyState:
    """Pose and twist of the free-flyer.

    ``p``: world position [m]; ``q``: body-to-world unit quaternion;
    ``v``: world linear velocity [m/s]; ``omega``: body angular velocity
    [rad/s].
    """

    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.q = quat_normalize(self.q)
        for name, arr in (("p", self.p), ("q", self.q), ("v", self.v), ("omega", self.omega)):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteState(f"state component {name} is not finite: {arr}")


@dataclass
class InertialParams:
    """Mass [kg] and body-frame inertia tensor [kg·m²]."""

    mass: float
    inertia: np.ndarray

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=np.float64)
        if not self.mass > 0.0:
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if self.inertia.shape != (3, 3):
            raise ValueError(f"inertia must be 3x3, got {self.inertia.shape}")
        if np.max(np.abs(self.inertia - self.inertia.T)) > 1e-12:
            raise ValueError("inertia tensor must be symmetric")
        if np.min(np.linalg.eigvalsh(self.inertia)) <= 0.0:
            raise ValueError("inertia tensor must be positive definite")
        self.inertia_inv = np.linalg.inv(self.inertia)


def step_dynamics(
    state: RigidBodyState, wrench: BodyWrench, inertia: InertialParams, dt: float
) -> RigidBodyState:
    """One semi-implicit Euler step under a body-frame wrench.

    Velocities update first and the new velocities advance the pose. No
    gravity and no hull drag: the vehicle floats in a cabin. Raises
    :class:`NonFiniteState` if the result is not finite.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    force_world = quat_rotate(state.q, wrench.force)
    v_new = state.v + (force_world / inertia.mass) * dt
    p_new = state.p + v_new * dt
    gyro = np.cross(state.omega, inertia.inertia @ state.omega)
    omega_new = state.omega + (inertia.inertia_inv @ (wrench.torque - gyro)) * dt
    q_new = integrate_quaternion(state.q, omega_new, dt)
    return RigidBodyState(p=p_new, q=q_new, v=v_new, omega=omega_new)
