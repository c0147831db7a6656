"""Quaternion and small-vector helpers.

Quaternions are float64 arrays in (w, x, y, z) order, kept unit-norm.
The canonical tool axis of the end-effector is -z (pointing down), so the
identity quaternion corresponds to a downward-facing gripper.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])
TOOL_AXIS = np.array([0.0, 0.0, -1.0])


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise InvalidInputError("cannot normalize zero or non-finite vector")
    return v / n


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return normalize(np.asarray(q, dtype=float))


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    out = quat_mul(quat_mul(q, qv), quat_conj(q))
    return out[1:]


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle in radians between two unit quaternions."""
    dot = abs(float(np.dot(a, b)))
    return 2.0 * float(np.arccos(min(1.0, dot)))


def slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation from a to b, shortest arc."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + t * (b - a))
    theta = np.arccos(dot)
    s = np.sin(theta)
    return quat_normalize((np.sin((1 - t) * theta) / s) * a + (np.sin(t * theta) / s) * b)


def rotate_towards(a: np.ndarray, b: np.ndarray, max_angle: float) -> np.ndarray:
    """Move from quaternion a toward b by at most max_angle radians."""
    ang = quat_angle(a, b)
    if ang <= max_angle or ang == 0.0:
        return quat_normalize(b)
    return slerp(a, b, max_angle / ang)


def pointat2quat(vector: np.ndarray) -> np.ndarray:
    """Quaternion rotating the tool axis (-z) onto the given direction.

    The roll about the tool axis is the one of minimal total rotation
    angle from identity, i.e. the axis of rotation is perpendicular to
    both the tool axis and the target direction.
    """
    b = normalize(vector)
    a = TOOL_AXIS
    cross = np.cross(a, b)
    dot = float(np.dot(a, b))
    cn = float(np.linalg.norm(cross))
    if cn < 1e-12:
        if dot > 0.0:
            return IDENTITY_QUAT.copy()
        # Antiparallel: 180 degrees about x.
        return np.array([0.0, 1.0, 0.0, 0.0])
    axis = cross / cn
    theta = float(np.arctan2(cn, dot))
    half = theta / 2.0
    return quat_normalize(
        np.array([np.cos(half), *(np.sin(half) * axis)])
    )
