"""Measurement and process models of the dual-antenna GPS/IMU system.

Error-state ordering used by every Jacobian: ``[dq_v, dr, dv, db]`` (12 entries),
where ``dq_v`` is the vector part of the multiplicative attitude error
``dq = q (x) conj(q_hat)``. Process noise ordering is ``[w_g, w_a, w_b]``.

The inertial frame is z-up, so a level accelerometer at rest reads
``A^T g`` with ``g = (0, 0, 9.81)``. The gyro model is ``omega = u_g + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .quat import check_unit, cross_matrix, identity_quat, omega_matrix, rotation_from_quat

N_ERR = 12
N_NOISE = 9

ATT = slice(0, 3)
POS = slice(3, 6)
VEL = slice(6, 9)
BIAS = slice(9, 12)

DEFAULT_GRAVITY = (0.0, 0.0, 9.81)


def _vec3(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise InvalidArgumentError(f"{name} must have 3 components, got {a.shape}")
    return a


@dataclass
class StateEstimate:
    """Full navigation state: attitude ``q`` (body to inertial), position, velocity, gyro bias."""

    q: np.ndarray = field(default_factory=identity_quat)
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = check_unit(np.array(self.q, dtype=float))
        self.r = _vec3(self.r, "r")
        self.v = _vec3(self.v, "v")
        self.b = _vec3(self.b, "b")
        for name in ("r", "v", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidArgumentError(f"state field {name} is not finite")

    @property
    def A(self) -> np.ndarray:
        return rotation_from_quat(self.q)

    def copy(self) -> "StateEstimate":
        return StateEstimate(self.q.copy(), self.r.copy(), self.v.copy(), self.b.copy())


@dataclass
class ImuSample:
    t: float
    u_g: np.ndarray
    u_a: np.ndarray

    def __post_init__(self):
        self.t = float(self.t)
        self.u_g = _vec3(self.u_g, "u_g")
        self.u_a = _vec3(self.u_a, "u_a")


@dataclass
class GpsFix:
    t: float
    p1: np.ndarray
    p2: np.ndarray
    valid1: bool = True
    valid2: bool = True

    def __post_init__(self):
        self.t = float(self.t)
        self.p1 = _vec3(self.p1, "p1")
        self.p2 = _vec3(self.p2, "p2")
        self.valid1 = bool(self.valid1)
        self.valid2 = bool(self.valid2)
        for flag, p, name in ((self.valid1, self.p1, "p1"), (self.valid2, self.p2, "p2")):
            if flag and not np.all(np.isfinite(p)):
                raise InvalidArgumentError(f"valid antenna position {name} is not finite")

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.p1, self.p2])

    @property
    def valid_rows(self) -> np.ndarray:
        rows = []
        if self.valid1:
            rows += [0, 1, 2]
        if self.valid2:
            rows += [3, 4, 5]
        return np.array(rows, dtype=int)


@dataclass
class SensorGeometry:
    """Antenna lever arms ``e1``, ``e2`` in the body frame and inertial gravity ``g``."""

    e1: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.0, 0.0]))
    e2: np.ndarray = field(default_factory=lambda: np.array([-0.5, 0.0, 0.0]))
    g: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))
    allow_any_gravity: bool = False

    def __post_init__(self):
        self.e1 = _vec3(self.e1, "e1")
        self.e2 = _vec3(self.e2, "e2")
        self.g = _vec3(self.g, "g")
        if np.linalg.norm(self.e1 - self.e2) < 1e-3:
            raise InvalidArgumentError("antenna baseline |e1 - e2| must be at least 1 mm")
        gn = np.linalg.norm(self.g)
        if not self.allow_any_gravity and not 9.7 <= gn <= 9.9:
            raise InvalidArgumentError(f"|g| = {gn:.4f} outside [9.7, 9.9]; pass allow_any_gravity=True")

    @property
    def baseline(self) -> np.ndarray:
        return self.e1 - self.e2


@dataclass(frozen=True)
class NoiseSpec:
    """Continuous noise densities: gyro (rad/s/sqrt(Hz)), accel (m/s^2/sqrt(Hz)), bias walk (rad/s^2/sqrt(Hz))."""

    sigma_g: float = 1e-3
    sigma_a: float = 1e-2
    sigma_b: float = 1e-5

    def __post_init__(self):
        for name in ("sigma_g", "sigma_a", "sigma_b"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0.0):
                raise InvalidArgumentError(f"{name} must be strictly positive, got {val!r}")

    def covariance(self) -> np.ndarray:
        """``Sigma_imu = diag(sg^2 I3, sa^2 I3, sb^2 I3)``."""
        return np.diag(np.repeat([self.sigma_g**2, self.sigma_a**2, self.sigma_b**2], 3))


def predict_measurement(x: StateEstimate, geom: SensorGeometry) -> np.ndarray:
    """Stacked antenna positions ``[r + A e1; r + A e2]``."""
    A = x.A
    return np.concatenate([x.r + A @ geom.e1, x.r + A @ geom.e2])


def measurement_jacobian(x: StateEstimate, geom: SensorGeometry) -> np.ndarray:
    """6x12 sensitivity of the antenna positions to the error state."""
    A = x.A
    H = np.zeros((6, N_ERR))
    H[0:3, ATT] = -2.0 * A @ cross_matrix(geom.e1)
    H[3:6, ATT] = -2.0 * A @ cross_matrix(geom.e2)
    H[0:3, POS] = np.eye(3)
    H[3:6, POS] = np.eye(3)
    return H


def continuous_dynamics(x: StateEstimate, u: ImuSample, geom: SensorGeometry):
    """Noise-free state derivative ``(q_dot, r_dot, v_dot, b_dot)``."""
    w = u.u_g + x.b
    q_dot = 0.5 * omega_matrix(w) @ x.q
    v_dot = x.A @ u.u_a - geom.g
    return q_dot, x.v.copy(), v_dot, np.zeros(3)


def linearized_F(x: StateEstimate, u: ImuSample) -> np.ndarray:
    """12x12 error-dynamics matrix evaluated at ``omega = u_g + b`` and ``a = u_a``."""
    w = u.u_g + x.b
    F = np.zeros((N_ERR, N_ERR))
    F[ATT, ATT] = -cross_matrix(w)
    F[ATT, BIAS] = 0.5 * np.eye(3)
    F[POS, VEL] = np.eye(3)
    F[VEL, ATT] = -2.0 * x.A @ cross_matrix(u.u_a)
    return F


def noise_jacobian_G(x: StateEstimate) -> np.ndarray:
    """12x9 map from ``[w_g, w_a, w_b]`` into the error state."""
    G = np.zeros((N_ERR, N_NOISE))
    G[ATT, 0:3] = 0.5 * np.eye(3)
    G[VEL, 3:6] = x.A
    G[BIAS, 6:9] = np.eye(3)
    return G
