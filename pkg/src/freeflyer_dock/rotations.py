"""Quaternion and rotation-matrix algebra shared by the whole stack.

Conventions, used everywhere in this package:

* quaternions are scalar-first ``(w, x, y, z)`` unit quaternions,
* rotations compose with the Hamilton product,
* ``R(q)`` rotates body-frame vectors into the world frame,
* stored quaternions are canonicalized to ``w >= 0`` (``q`` and ``-q``
  encode the same rotation).

All functions are pure and broadcast over leading batch dimensions unless
noted otherwise.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DegenerateInput",
    "quat_normalize",
    "quat_conj",
    "quat_mul",
    "quat_from_axis_angle",
    "quat_to_rotmat",
    "quat_rotate",
    "quat_rotate_inv",
    "rotmat_to_6d",
    "sixd_to_rotmat",
    "orientation_error_angle",
    "integrate_quaternion",
]

# Columns of a 6D encoding closer to (anti)parallel than this are unusable.
SIXD_PARALLEL_TOL = 1e-6


class DegenerateInput(ValueError):
    """6D rotation encoding whose columns are (anti)parallel or zero."""


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Normalize to unit length and pick the ``w >= 0`` representative."""
    q = np.asarray(q, dtype=np.float64)
    out = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return out * np.where(out[..., :1] < 0.0, -1.0, 1.0)


def quat_conj(q: np.ndarray) -> np.ndarray:
    """Conjugate (inverse for unit quaternions)."""
    return np.asarray(q, dtype=np.float64) * np.array([1.0, -1.0, -1.0, -1.0])


def _hamilton(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a ⊗ b`` of unit quaternions, renormalized."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return quat_normalize(_hamilton(a, b))


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Unit quaternion for a rotation of ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    w = np.cos(half)[..., None] if np.ndim(angle) else np.array([np.cos(half)])
    xyz = np.sin(half)[..., None] * axis if np.ndim(angle) else np.sin(half) * axis
    return quat_normalize(np.concatenate([w, xyz], axis=-1))


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of ``q``; shape ``(..., 3, 3)``."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = (q[..., i] for i in range(4))
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    row0 = np.stack([1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)], axis=-1)
    row1 = np.stack([2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)], axis=-1)
    row2 = np.stack([2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate body-frame vector(s) ``v`` into the world frame."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    u = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_rotate_inv(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate world-frame vector(s) ``v`` into the body frame."""
    return quat_rotate(quat_conj(q), v)


def rotmat_to_6d(rotmat: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix, column-major, shape ``(..., 6)``."""
    rotmat = np.asarray(rotmat, dtype=np.float64)
    return np.concatenate([rotmat[..., :, 0], rotmat[..., :, 1]], axis=-1)


def sixd_to_rotmat(r6: np.ndarray) -> np.ndarray:
    """Rebuild a rotation matrix from its 6D encoding via Gram-Schmidt.

    Column 1 is normalized, column 2 orthogonalized against it, column 3
    is their cross product. Raises :class:`DegenerateInput` when the two
    embedded columns are shorter than numerical noise or closer than
    ``SIXD_PARALLEL_TOL`` radians to (anti)parallel, which signals a
    corrupted encoding rather than mere sensor noise.
    """
    r6 = np.asarray(r6, dtype=np.float64)
    if r6.shape != (6,):
        raise ValueError(f"expected shape (6,), got {r6.shape}")
    c1, c2 = r6[:3], r6[3:]
    n1 = np.linalg.norm(c1)
    n2 = np.linalg.norm(c2)
    if n1 < 1e-12 or n2 < 1e-12:
        raise DegenerateInput("6D columns have (near-)zero length")
    u1 = c1 / n1
    u2 = c2 / n2
    angle = np.arctan2(np.linalg.norm(np.cross(u1, u2)), np.dot(u1, u2))
    if angle < SIXD_PARALLEL_TOL or angle > np.pi - SIXD_PARALLEL_TOL:
        raise DegenerateInput(f"6D columns are parallel within tolerance (angle={angle:.2e} rad)")
    b1 = u1
    v2 = c2 - np.dot(b1, c2) * b1
    b2 = v2 / np.linalg.norm(v2)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def orientation_error_angle(rotmat: np.ndarray) -> np.ndarray:
    """Geodesic rotation angle of ``rotmat`` in ``[0, pi]`` radians.

    The trace argument is clamped to ``[-1, 1]`` so float drift in nearly
    exact rotations cannot push ``arccos`` out of domain.
    """
    rotmat = np.asarray(rotmat, dtype=np.float64)
    tr = rotmat[..., 0, 0] + rotmat[..., 1, 1] + rotmat[..., 2, 2]
    return np.arccos(np.clip(0.5 * (tr - 1.0), -1.0, 1.0))


def integrate_quaternion(q: np.ndarray, omega_body: np.ndarray, dt: float) -> np.ndarray:
    """One explicit attitude-kinematics step, renormalized.

    ``q <- normalize(q + 0.5 * q ⊗ (0, omega_body) * dt)`` with
    body-frame angular velocity ``omega_body`` in rad/s.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    q = np.asarray(q, dtype=np.float64)
    omega_body = np.asarray(omega_body, dtype=np.float64)
    omega_quat = np.concatenate(
        [np.zeros_like(omega_body[..., :1]), omega_body], axis=-1
    )
    return quat_normalize(q + 0.5 * _hamilton(q, omega_quat) * dt)
