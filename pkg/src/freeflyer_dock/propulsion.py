"""Eight-propeller actuation model with spin-polarity drag torque.

Each propeller thrusts opposite its airflow direction and, while spinning,
reacts a small aerodynamic drag torque about its spin axis whose sign is
the rotor's spin polarity. With alternating polarity and symmetric
commands those drag torques cancel; with uniform polarity they add up into
a parasitic torque channel that the controller has to fight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "CommandOutOfRange",
    "PolarityMode",
    "Propeller",
    "PropulsionConfig",
    "BodyWrench",
    "propeller_wrench",
    "per_propeller_torques",
    "residual_drag_scalar",
    "map_action_to_command",
    "wrench_matrix",
    "default_layout",
    "NUM_PROPELLERS",
]

NUM_PROPELLERS = 8
_UNIT_TOL = 1e-9


class CommandOutOfRange(ValueError):
    """A thrust command component left the valid [0, 1] interval."""


class PolarityMode(str, Enum):
    ALTERNATING = "alternating"
    SAME_SIGN = "same_sign"


@dataclass
class Propeller:
    """Geometry and scaling of a single propeller, body frame.

    ``r`` is the mount position [m], ``n`` the unit airflow direction
    (thrust force is ``-u * f_max * n``), ``a`` the unit spin axis,
    ``f_max`` the maximum thrust [N] including any per-propeller scaling,
    and ``s`` the spin polarity (+1 or -1).
    """

    r: np.ndarray
    n: np.ndarray
    a: np.ndarray
    f_max: float
    s: int

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.n = np.asarray(self.n, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        for name, vec in (("r", self.r), ("n", self.n), ("a", self.a)):
            if vec.shape != (3,):
                raise ValueError(f"propeller {name} must have shape (3,), got {vec.shape}")
        for name, vec in (("n", self.n), ("a", self.a)):
            if abs(np.linalg.norm(vec) - 1.0) > _UNIT_TOL:
                raise ValueError(f"propeller {name} must be unit length")
        if not self.f_max > 0.0:
            raise ValueError(f"f_max must be > 0, got {self.f_max}")
        if self.s not in (-1, 1):
            raise ValueError(f"spin polarity must be -1 or +1, got {self.s}")


@dataclass
class BodyWrench:
    """Net force [N] and torque [N·m] on the body, body frame."""

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=np.float64)
        self.torque = np.asarray(self.torque, dtype=np.float64)
        if not (np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque))):
            raise ValueError("wrench components must be finite")


@dataclass
class PropulsionConfig:
    """Full actuation model: 8 propellers plus the drag-torque mechanism.

    ``k_drag`` converts thrust magnitude into drag torque [m]. When
    ``drag_dynamics_enabled`` is False the drag torque is excluded from
    the applied wrench (the scalar residual used for reward penalties is
    unaffected).
    """

    propellers: list[Propeller]
    k_drag: float = 0.005
    drag_dynamics_enabled: bool = True
    polarity_mode: PolarityMode = PolarityMode.ALTERNATING

    # cached batched views of the propeller list, built in __post_init__
    positions: np.ndarray = field(init=False, repr=False)
    thrust_dirs: np.ndarray = field(init=False, repr=False)
    spin_axes: np.ndarray = field(init=False, repr=False)
    f_max_vec: np.ndarray = field(init=False, repr=False)
    polarities: np.ndarray = field(init=False, repr=False)
    _moment_per_u: np.ndarray = field(init=False, repr=False)
    _drag_per_u: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.polarity_mode = PolarityMode(self.polarity_mode)
        if len(self.propellers) != NUM_PROPELLERS:
            raise ValueError(f"exactly {NUM_PROPELLERS} propellers required, got {len(self.propellers)}")
        if self.k_drag < 0.0:
            raise ValueError(f"k_drag must be >= 0, got {self.k_drag}")
        self.positions = np.stack([p.r for p in self.propellers])
        self.thrust_dirs = np.stack([p.n for p in self.propellers])
        self.spin_axes = np.stack([p.a for p in self.propellers])
        self.f_max_vec = np.array([p.f_max for p in self.propellers])
        self.polarities = np.array([float(p.s) for p in self.propellers])
        if self.polarity_mode is PolarityMode.ALTERNATING:
            if self.polarities.sum() != 0.0:
                raise ValueError("alternating polarity requires the spin polarities to sum to 0")
        else:
            if not np.all(self.polarities == 1.0):
                raise ValueError("same-sign polarity requires every spin polarity to be +1")
        # torque per unit command from the moment arm: r x (-f_max n)
        self._moment_per_u = np.cross(self.positions, -self.f_max_vec[:, None] * self.thrust_dirs)
        # drag torque per unit command along the spin axis: s * k_drag * f_max
        self._drag_per_u = self.polarities * self.k_drag * self.f_max_vec
        _check_controllability(wrench_matrix(self))

    def with_drag_dynamics(self, enabled: bool) -> "PropulsionConfig":
        return PropulsionConfig(
            propellers=self.propellers,
            k_drag=self.k_drag,
            drag_dynamics_enabled=enabled,
            polarity_mode=self.polarity_mode,
        )


def wrench_matrix(cfg: PropulsionConfig) -> np.ndarray:
    """6x8 map from unit commands to (force, moment-arm torque), drag excluded."""
    forces = (-cfg.f_max_vec[:, None] * cfg.thrust_dirs).T
    torques = cfg._moment_per_u.T
    return np.concatenate([forces, torques], axis=0)


def _positive_null_vector(b_mat: np.ndarray) -> np.ndarray | None:
    """A strictly positive null-space vector of ``b_mat``, or None.

    Feasibility LP: find x >= 1 componentwise with B x = 0; any solution
    scales to a strictly positive null vector.
    """
    n = b_mat.shape[1]
    res = linprog(
        c=np.zeros(n),
        A_eq=b_mat,
        b_eq=np.zeros(b_mat.shape[0]),
        bounds=[(1.0, None)] * n,
        method="highs",
    )
    return res.x if res.success else None


def _check_controllability(b_mat: np.ndarray) -> None:
    rank = np.linalg.matrix_rank(b_mat)
    if rank != 6:
        raise ValueError(f"wrench matrix rank is {rank}, need 6: layout cannot span wrench space")
    if _positive_null_vector(b_mat) is None:
        raise ValueError(
            "wrench matrix null space has no strictly positive vector: "
            "nonnegative commands cannot cover all of wrench space"
        )


def _validate_commands(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (NUM_PROPELLERS,):
        raise CommandOutOfRange(f"expected {NUM_PROPELLERS} commands, got shape {u.shape}")
    if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise CommandOutOfRange(f"commands must lie in [0, 1], got {u}")
    return u


def per_propeller_torques(cfg: PropulsionConfig, u: np.ndarray) -> np.ndarray:
    """(8, 3) torque of each propeller: moment arm plus drag when enabled."""
    u = _validate_commands(u)
    torques = u[:, None] * cfg._moment_per_u
    if cfg.drag_dynamics_enabled:
        torques = torques + (cfg._drag_per_u * u)[:, None] * cfg.spin_axes
    return torques


def propeller_wrench(cfg: PropulsionConfig, u: np.ndarray) -> BodyWrench:
    """Net body wrench for commands ``u`` in [0, 1] per propeller."""
    u = _validate_commands(u)
    force = np.add.reduce((-u * cfg.f_max_vec)[:, None] * cfg.thrust_dirs, axis=0)
    torque = np.add.reduce(u[:, None] * cfg._moment_per_u, axis=0)
    if cfg.drag_dynamics_enabled:
        torque = torque + np.add.reduce((cfg._drag_per_u * u)[:, None] * cfg.spin_axes, axis=0)
    return BodyWrench(force=force, torque=torque)


def residual_drag_scalar(cfg: PropulsionConfig, u: np.ndarray) -> float:
    """Signed net drag torque scalar ``sum_j s_j k_drag |D_j|`` [N·m].

    ``D_j = u_j f_max,j`` is the commanded thrust after scaling; callers
    take the absolute value for penalty terms.
    """
    u = _validate_commands(u)
    return float(np.add.reduce(cfg._drag_per_u * u))


def map_action_to_command(action: np.ndarray) -> np.ndarray:
    """Map policy actions in [-1, 1] linearly onto commands in [0, 1].

    Out-of-range actions are clamped first; stochastic policies may
    overshoot the nominal bounds.
    """
    action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    return (action + 1.0) * 0.5


# Corner pairs of the default layout. Within each pair the two propellers
# share a spin-axis direction, so alternating polarity cancels their drag
# torques exactly under equal commands.
_CORNER_PAIRS = (
    ((1, 1, 1), (-1, 1, 1)),
    ((1, -1, -1), (1, 1, -1)),
    ((-1, 1, -1), (-1, -1, -1)),
    ((-1, -1, 1), (1, -1, 1)),
)


def _twisted_inward(corner: tuple[int, int, int], handedness: float) -> np.ndarray:
    # inward corner-to-center direction twisted 45 deg about body z;
    # pure inward thrust would leave the moment arm identically zero
    h = np.sqrt(0.5)
    rhat = np.asarray(corner, dtype=np.float64) / np.sqrt(3.0)
    rz = np.array([[h, -handedness * h, 0.0], [handedness * h, h, 0.0], [0.0, 0.0, 1.0]])
    n = rz @ (-rhat)
    return n / np.linalg.norm(n)


def default_layout(
    polarity_mode: PolarityMode = PolarityMode.ALTERNATING,
    *,
    f_max: float = 0.1,
    k_drag: float = 0.005,
    cube_half_width: float = 0.09,
    drag_dynamics_enabled: bool = True,
) -> PropulsionConfig:
    """Symmetric 8-propeller arrangement on a body-centered cube.

    Propellers sit at the cube corners; each corner tetrad (alternate
    corners) twists its inward thrust direction 45 degrees about body z
    with its own handedness. The resulting wrench matrix has rank 6 and an
    all-ones null vector, and geometric mirror pairs fall in opposite
    tetrads so alternating polarity assigns them opposite spin.
    """
    props: list[Propeller] = []
    for corner_a, corner_b in _CORNER_PAIRS:
        axis = _twisted_inward(corner_a, +1.0)
        for corner, polarity in ((corner_a, 1), (corner_b, -1)):
            s = polarity if polarity_mode is PolarityMode.ALTERNATING else 1
            props.append(
                Propeller(
                    r=np.asarray(corner, dtype=np.float64) * cube_half_width,
                    n=axis.copy(),
                    a=axis.copy(),
                    f_max=f_max,
                    s=s,
                )
            )
    return PropulsionConfig(
        propellers=props,
        k_drag=k_drag,
        drag_dynamics_enabled=drag_dynamics_enabled,
        polarity_mode=polarity_mode,
    )
