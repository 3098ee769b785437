"""Quaternion and 3x3 matrix helpers.

Conventions used everywhere in the package:

* Quaternions are numpy arrays stored as ``[qx, qy, qz, qw]`` (vector part
  first, scalar part last).
* ``rotation_from_quat(q)`` maps body-frame vectors into the inertial frame.
* ``quat_multiply(q1, q2)`` is the product whose rotation matrix is
  ``A(q2) @ A(q1)``. In Hamilton notation this is ``q2 * q1``.
"""

from __future__ import annotations

import numpy as np

from .errors import DivergenceError, InvalidArgumentError

UNIT_TOL = 1e-9

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


def identity_quat() -> np.ndarray:
    return IDENTITY.copy()


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise InvalidArgumentError(f"quaternion must have shape (4,), got {q.shape}")
    return q


def check_unit(q, tol: float = UNIT_TOL) -> np.ndarray:
    q = _as_quat(q)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or abs(n - 1.0) > tol:
        raise InvalidArgumentError(f"quaternion is not unit norm (|q| = {n!r})")
    return q


def normalize(q) -> np.ndarray:
    """Scale ``q`` to unit norm. The sign of the scalar part is preserved."""
    q = _as_quat(q)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise InvalidArgumentError("cannot normalize a zero or non-finite quaternion")
    return q / n


def canonicalize(q) -> np.ndarray:
    """Return the representative of ``q`` with a non-negative scalar part."""
    q = _as_quat(q)
    return -q if q[3] < 0.0 else q.copy()


def conjugate(q) -> np.ndarray:
    q = _as_quat(q)
    return np.array([-q[0], -q[1], -q[2], q[3]])


def cross_matrix(v) -> np.ndarray:
    """Skew-symmetric matrix ``[v x]`` such that ``cross_matrix(v) @ u == v x u``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def omega_matrix(w) -> np.ndarray:
    """4x4 matrix ``[[-[w x], w], [-w^T, 0]]``; ``q (x) p == (q_o I4 + Omega(q_v)) p``."""
    w = np.asarray(w, dtype=float)
    om = np.zeros((4, 4))
    om[:3, :3] = -cross_matrix(w)
    om[:3, 3] = w
    om[3, :3] = -w
    return om


def rotation_from_quat(q) -> np.ndarray:
    """Rotation matrix ``(2 qo^2 - 1) I + 2 qo [qv x] + 2 qv qv^T`` of a unit quaternion."""
    q = check_unit(q)
    qv, qo = q[:3], q[3]
    return (2.0 * qo * qo - 1.0) * np.eye(3) + 2.0 * qo * cross_matrix(qv) + 2.0 * np.outer(qv, qv)


def quat_multiply(q1, q2) -> np.ndarray:
    q1 = check_unit(q1)
    q2 = check_unit(q2)
    return _mul(q1, q2)


def _mul(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    x1, y1, z1, s1 = q1
    x2, y2, z2, s2 = q2
    # vector part s1 v2 + s2 v1 - v1 x v2
    return np.array(
        [
            s1 * x2 + s2 * x1 - (y1 * z2 - z1 * y2),
            s1 * y2 + s2 * y1 - (z1 * x2 - x1 * z2),
            s1 * z2 + s2 * z1 - (x1 * y2 - y1 * x2),
            s1 * s2 - (x1 * x2 + y1 * y2 + z1 * z2),
        ]
    )


def quat_from_error(dqv) -> np.ndarray:
    """Unit quaternion ``[dqv, sqrt(1 - |dqv|^2)]`` built from an error vector part.

    Raises
    ------
    DivergenceError
        If ``|dqv| > 1``; the correction cannot be a rotation.
    """
    dqv = np.asarray(dqv, dtype=float)
    n2 = float(dqv @ dqv)
    if not np.isfinite(n2) or n2 > 1.0:
        raise DivergenceError(f"error quaternion vector part has norm {np.sqrt(n2)!r} > 1")
    return np.array([dqv[0], dqv[1], dqv[2], np.sqrt(1.0 - n2)])


def error_quat(q, q_hat) -> np.ndarray:
    """``q (x) conj(q_hat)``: the small rotation taking ``q_hat`` to ``q``."""
    return _mul(_as_quat(q), conjugate(q_hat))


def quat_from_rotation(A) -> np.ndarray:
    """Inverse of :func:`rotation_from_quat` (Shepperd's method), scalar part >= 0."""
    A = np.asarray(A, dtype=float)
    tr = np.trace(A)
    d = np.array([A[0, 0], A[1, 1], A[2, 2], tr])
    i = int(np.argmax(d))
    if i == 3:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array([(A[2, 1] - A[1, 2]) / s, (A[0, 2] - A[2, 0]) / s, (A[1, 0] - A[0, 1]) / s, 0.25 * s])
    else:
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(1.0 + A[i, i] - A[j, j] - A[k, k])
        q = np.empty(4)
        q[i] = 0.25 * s
        q[j] = (A[j, i] + A[i, j]) / s
        q[k] = (A[k, i] + A[i, k]) / s
        q[3] = (A[k, j] - A[j, k]) / s
    return canonicalize(normalize(q))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([np.sin(0.5 * angle) * axis, [np.cos(0.5 * angle)]])


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Body-to-inertial attitude from z-y-x (yaw, pitch, roll) angles."""
    qz = np.array([0.0, 0.0, np.sin(0.5 * yaw), np.cos(0.5 * yaw)])
    qy = np.array([0.0, np.sin(0.5 * pitch), 0.0, np.cos(0.5 * pitch)])
    qx = np.array([np.sin(0.5 * roll), 0.0, 0.0, np.cos(0.5 * roll)])
    # A = Rz Ry Rx; with A(q1 (x) q2) = A(q2) A(q1) the rightmost factor goes first
    return _mul(_mul(qx, qy), qz)


def rotation_angle(q) -> float:
    """Rotation angle in [0, pi] represented by a unit quaternion."""
    q = _as_quat(q)
    return 2.0 * float(np.arctan2(np.linalg.norm(q[:3]), abs(q[3])))


def random_quat(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)
