"""Rotation helpers shared by forward kinematics, resampling and transitions.

Euler angles follow the BVH convention: degrees, intrinsic, composed in the
order the channels are declared (``"ZXY"`` means ``Rz @ Rx @ Ry``).
Quaternions use scipy's scalar-last ``(x, y, z, w)`` layout.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation


def axis_matrices(axis: str, radians: np.ndarray) -> np.ndarray:
    """Elementary rotation matrices about a principal axis, shape (..., 3, 3)."""
    c = np.cos(radians)
    s = np.sin(radians)
    out = np.zeros(np.shape(radians) + (3, 3))
    if axis == "X":
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = c
        out[..., 1, 2] = -s
        out[..., 2, 1] = s
        out[..., 2, 2] = c
    elif axis == "Y":
        out[..., 0, 0] = c
        out[..., 0, 2] = s
        out[..., 1, 1] = 1.0
        out[..., 2, 0] = -s
        out[..., 2, 2] = c
    elif axis == "Z":
        out[..., 0, 0] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
        out[..., 1, 1] = c
        out[..., 2, 2] = 1.0
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return out


def euler_to_matrix(degrees: np.ndarray, order: str) -> np.ndarray:
    """Compose intrinsic Euler angles, shape (..., 3) -> (..., 3, 3)."""
    rad = np.deg2rad(np.asarray(degrees, dtype=float))
    m = axis_matrices(order[0], rad[..., 0])
    for k in (1, 2):
        m = m @ axis_matrices(order[k], rad[..., k])
    return m


def euler_to_quat(degrees: np.ndarray, order: str) -> np.ndarray:
    return Rotation.from_euler(order.upper(), degrees, degrees=True).as_quat()


def slerp(q0: np.ndarray, q1: np.ndarray, s: np.ndarray | float) -> np.ndarray:
    """Shortest-arc spherical interpolation between unit quaternions.

    Written in the symmetric form so that ``slerp(a, b, s)`` and
    ``slerp(b, a, 1 - s)`` describe the same rotation. ``s`` must broadcast
    against ``q0[..., :1]``.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    s = np.asarray(s, dtype=float)
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0.0, -q1, q1)
    dot = np.abs(dot)
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    small = sin_theta < 1e-12
    safe = np.where(small, 1.0, sin_theta)
    w0 = np.where(small, 1.0 - s, np.sin((1.0 - s) * theta) / safe)
    w1 = np.where(small, s, np.sin(s * theta) / safe)
    q = w0 * q0 + w1 * q1
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def _wrap_near(angles: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return angles + 360.0 * np.round((ref - angles) / 360.0)


def quat_to_euler_near(quat: np.ndarray, order: str, ref_degrees: np.ndarray) -> np.ndarray:
    """Euler angles (degrees) for ``quat`` chosen closest to ``ref_degrees``.

    Every Tait-Bryan triple has a mirrored twin ``(a+180, 180-b, c+180)``
    plus 360 degree shifts per angle; picking the candidate nearest the
    reference keeps channel curves free of branch jumps.
    """
    base = Rotation.from_quat(quat).as_euler(order.upper(), degrees=True)
    ref = np.asarray(ref_degrees, dtype=float)
    twin = np.stack([base[..., 0] + 180.0, 180.0 - base[..., 1], base[..., 2] + 180.0], axis=-1)
    base = _wrap_near(base, ref)
    twin = _wrap_near(twin, ref)
    d_base = np.sum((base - ref) ** 2, axis=-1, keepdims=True)
    d_twin = np.sum((twin - ref) ** 2, axis=-1, keepdims=True)
    return np.where(d_twin < d_base, twin, base)


def geodesic_angle(m0: np.ndarray, m1: np.ndarray) -> np.ndarray:
    """Angle in radians of the relative rotation between matrix stacks."""
    rel = np.swapaxes(m0, -1, -2) @ m1
    cos = (np.trace(rel, axis1=-2, axis2=-1) - 1.0) / 2.0
    return np.arccos(np.clip(cos, -1.0, 1.0))
