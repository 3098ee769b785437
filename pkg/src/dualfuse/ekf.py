"""Adaptive error-state EKF fusing one IMU with two GPS antennas.

The nominal state is integrated at the IMU rate; the 12x12 error covariance
is propagated once per GPS interval with the transition matrix evaluated at
the interval-averaged IMU input. The GPS noise covariance is re-estimated
from a sliding window of innovations.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from math import sqrt
from typing import Sequence

import numpy as np

from .discretize import process_noise_closed, process_noise_quadrature, process_noise_van_loan, state_transition
from .errors import DivergenceError, InitializationError, InvalidArgumentError, MissingDataError
from .models import (
    ATT,
    BIAS,
    N_ERR,
    POS,
    VEL,
    GpsFix,
    ImuSample,
    NoiseSpec,
    SensorGeometry,
    StateEstimate,
    measurement_jacobian,
    predict_measurement,
)
from .quat import _mul, quat_from_error, quat_from_rotation

log = logging.getLogger(__name__)

INIT_MIN_ANGLE = 0.05
MAX_INNOVATION_COND = 1e12
# gaps longer than this many GPS periods interrupt the residual window
MAX_ADAPT_GAP = 1.5
PROCESS_NOISE_MODES = ("exact", "closed", "quadrature")
# "innovation": R = S(rho) - H P_prior H^T with pre-update innovations rho;
# "residual": R = S(eps) + H P_post H^T with post-update residuals eps
R_ESTIMATORS = ("residual", "innovation")


@dataclass
class FilterConfig:
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    geom: SensorGeometry = field(default_factory=SensorGeometry)
    window_w: int = 30
    imu_rate: float = 100.0
    gps_rate: float = 5.0
    r_floor: float = 1e-6
    adapt_enabled: bool = True
    r_init: float = 0.02**2
    min_adapt_samples: int = 30
    antennas: tuple = (1, 2)
    process_noise: str = "exact"
    p0_attitude: float = 0.05
    p0_position: float = 0.05
    p0_velocity: float = 0.1
    p0_bias: float = 0.01
    theta_warn: float = 0.05
    r_estimator: str = "residual"

    def __post_init__(self):
        if self.window_w < 6:
            raise InvalidArgumentError("window_w must be at least 6")
        if not self.imu_rate >= self.gps_rate >= 0.1:
            raise InvalidArgumentError("rates must satisfy imu_rate >= gps_rate >= 0.1 Hz")
        if not self.r_floor > 0.0:
            raise InvalidArgumentError("r_floor must be positive")
        if not self.r_init > 0.0:
            raise InvalidArgumentError("r_init must be positive")
        self.antennas = tuple(sorted(set(int(a) for a in self.antennas)))
        if not self.antennas or not set(self.antennas) <= {1, 2}:
            raise InvalidArgumentError(f"antennas must be a subset of (1, 2), got {self.antennas}")
        if self.r_estimator not in R_ESTIMATORS:
            raise InvalidArgumentError(f"r_estimator must be one of {R_ESTIMATORS}")
        if self.process_noise not in PROCESS_NOISE_MODES:
            raise InvalidArgumentError(f"process_noise must be one of {PROCESS_NOISE_MODES}")

    @property
    def active_rows(self) -> np.ndarray:
        rows = []
        for a in self.antennas:
            rows += [3 * (a - 1) + i for i in range(3)]
        return np.array(rows, dtype=int)


@dataclass
class FilterState:
    x_hat: StateEstimate
    P: np.ndarray
    R_hat: np.ndarray
    S_hat: np.ndarray
    residual_window: deque
    k: int = 0
    t: float = 0.0
    skipped_updates: int = 0
    last_residual: np.ndarray = field(default_factory=lambda: np.full(6, np.nan))
    last_full_update: float | None = None

    def copy(self) -> "FilterState":
        return replace(
            self,
            x_hat=self.x_hat.copy(),
            P=self.P.copy(),
            R_hat=self.R_hat.copy(),
            S_hat=self.S_hat.copy(),
            residual_window=deque(self.residual_window, maxlen=self.residual_window.maxlen),
            last_residual=self.last_residual.copy(),
        )


def initial_covariance(cfg: FilterConfig) -> np.ndarray:
    # attitude std is an angle; the error state holds the half-angle vector part
    d = np.concatenate(
        [
            np.full(3, (0.5 * cfg.p0_attitude) ** 2),
            np.full(3, cfg.p0_position**2),
            np.full(3, cfg.p0_velocity**2),
            np.full(3, cfg.p0_bias**2),
        ]
    )
    return np.diag(d)


def new_filter(x0: StateEstimate, cfg: FilterConfig, t0: float = 0.0) -> FilterState:
    m = len(cfg.active_rows)
    return FilterState(
        x_hat=x0.copy(),
        P=initial_covariance(cfg),
        R_hat=cfg.r_init * np.eye(6),
        S_hat=np.zeros((m, m)),
        residual_window=deque(maxlen=cfg.window_w),
        k=0,
        t=float(t0),
    )


# -- initialization ---------------------------------------------------------


def initialize(fix0: GpsFix, imu0: ImuSample, geom: SensorGeometry) -> StateEstimate:
    """Static alignment from one dual-antenna fix and one accelerometer sample.

    Builds ``M = [dp, g, dp x g]`` and ``N = [de, u_a, de x u_a]``, solves
    ``A = M N^-1`` and projects it onto the rotation group with an SVD.
    """
    if not (fix0.valid1 and fix0.valid2):
        raise MissingDataError("initialization needs both antennas valid")
    dp = fix0.p1 - fix0.p2
    g = geom.g
    cos_dp_g = abs(dp @ g) / (np.linalg.norm(dp) * np.linalg.norm(g))
    if np.arccos(min(1.0, cos_dp_g)) < INIT_MIN_ANGLE:
        raise InitializationError("antenna baseline is nearly parallel to gravity")
    de = geom.baseline
    ua = imu0.u_a
    M = np.column_stack([dp, g, np.cross(dp, g)])
    N = np.column_stack([de, ua, np.cross(de, ua)])
    if abs(np.linalg.det(N)) < 1e-12 * np.linalg.norm(N) ** 3:
        raise InitializationError("lever-arm baseline is parallel to the measured specific force")
    U, _, Vt = np.linalg.svd(M @ np.linalg.inv(N))
    if np.linalg.det(U @ Vt) < 0.0:
        U[:, -1] = -U[:, -1]
    A0 = U @ Vt
    r0 = 0.5 * (fix0.p1 + fix0.p2) - 0.5 * A0 @ (geom.e1 + geom.e2)
    return StateEstimate(q=quat_from_rotation(A0), r=r0)


# -- propagation ------------------------------------------------------------


def _interp(samples: Sequence[ImuSample], t: float):
    """Linear interpolation of the IMU signal, held constant outside the samples."""
    if t <= samples[0].t:
        return samples[0].u_g, samples[0].u_a
    if t >= samples[-1].t:
        return samples[-1].u_g, samples[-1].u_a
    lo, hi = 0, len(samples) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if samples[mid].t <= t:
            lo = mid
        else:
            hi = mid
    s0, s1 = samples[lo], samples[hi]
    a = (t - s0.t) / (s1.t - s0.t)
    return s0.u_g + a * (s1.u_g - s0.u_g), s0.u_a + a * (s1.u_a - s0.u_a)


def _check_monotonic(samples: Sequence[ImuSample]):
    for a, b in zip(samples, samples[1:]):
        if not b.t > a.t:
            raise InvalidArgumentError(f"IMU timestamps not strictly increasing at t = {b.t!r}")


def _breakpoints(samples: Sequence[ImuSample], t0: float, t1: float) -> list:
    knots = [t0]
    knots += [s.t for s in samples if t0 < s.t < t1]
    knots.append(t1)
    return knots


def average_inputs(
    samples: Sequence[ImuSample], t_start: float | None = None, t_end: float | None = None
) -> ImuSample:
    """Time average of the piecewise-linear IMU signal over ``[t_start, t_end]``.

    Without explicit bounds the samples' own time span is used; a single
    sample is returned unchanged.
    """
    if len(samples) == 0:
        raise MissingDataError("no IMU samples in the averaging interval")
    samples = list(samples)
    _check_monotonic(samples)
    t0 = samples[0].t if t_start is None else float(t_start)
    t1 = samples[-1].t if t_end is None else float(t_end)
    if t1 <= t0:
        ug, ua = _interp(samples, t0)
        return ImuSample(t0, ug, ua)
    knots = _breakpoints(samples, t0, t1)
    vals = [_interp(samples, t) for t in knots]
    sg = np.zeros(3)
    sa = np.zeros(3)
    for (ta, (ga, aa)), (tb, (gb, ab)) in zip(zip(knots, vals), zip(knots[1:], vals[1:])):
        sg += 0.5 * (tb - ta) * (ga + gb)
        sa += 0.5 * (tb - ta) * (aa + ab)
    return ImuSample(t0, sg / (t1 - t0), sa / (t1 - t0))


def _rk4_step(q, r, v, b, ug0, ua0, ug1, ua1, h, g):
    """One classical RK4 step of the noise-free kinematics with linear input interpolation.

    Plain float arithmetic: this is the inner loop of every run.
    """
    gx, gy, gz = g
    bx, by, bz = b

    def deriv(q, v, ug, ua):
        x, y, z, w = q
        ox, oy, oz = ug[0] + bx, ug[1] + by, ug[2] + bz
        # 0.5 * Omega(omega) q
        dx = 0.5 * (w * ox - (oy * z - oz * y))
        dy = 0.5 * (w * oy - (oz * x - ox * z))
        dz = 0.5 * (w * oz - (ox * y - oy * x))
        dw = -0.5 * (ox * x + oy * y + oz * z)
        ax, ay, az = ua
        c = 2.0 * w * w - 1.0
        d = 2.0 * (x * ax + y * ay + z * az)
        cx = y * az - z * ay
        cy = z * ax - x * az
        cz = x * ay - y * ax
        fx = c * ax + 2.0 * w * cx + d * x - gx
        fy = c * ay + 2.0 * w * cy + d * y - gy
        fz = c * az + 2.0 * w * cz + d * z - gz
        return (dx, dy, dz, dw), v, (fx, fy, fz)

    ugm = [0.5 * (ug0[i] + ug1[i]) for i in range(3)]
    uam = [0.5 * (ua0[i] + ua1[i]) for i in range(3)]

    def add(a, k, s):
        return tuple(a[i] + s * k[i] for i in range(len(a)))

    k1q, k1r, k1v = deriv(q, v, ug0, ua0)
    q2, v2 = add(q, k1q, 0.5 * h), add(v, k1v, 0.5 * h)
    k2q, k2r, k2v = deriv(q2, v2, ugm, uam)
    q3, v3 = add(q, k2q, 0.5 * h), add(v, k2v, 0.5 * h)
    k3q, k3r, k3v = deriv(q3, v3, ugm, uam)
    q4, v4 = add(q, k3q, h), add(v, k3v, h)
    k4q, k4r, k4v = deriv(q4, v4, ug1, ua1)

    s = h / 6.0
    qn = tuple(q[i] + s * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]) for i in range(4))
    rn = tuple(r[i] + s * (k1r[i] + 2.0 * k2r[i] + 2.0 * k3r[i] + k4r[i]) for i in range(3))
    vn = tuple(v[i] + s * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]) for i in range(3))
    n = sqrt(sum(c * c for c in qn))
    return tuple(c / n for c in qn), rn, vn


def integrate_state(
    x: StateEstimate, samples: Sequence[ImuSample], t0: float, t1: float, g
) -> StateEstimate:
    """Integrate the nominal state from ``t0`` to ``t1`` over every IMU sample interval."""
    if t1 < t0:
        raise InvalidArgumentError("cannot integrate backwards in time")
    q = tuple(x.q)
    r = tuple(x.r)
    v = tuple(x.v)
    b = tuple(x.b)
    g = tuple(float(c) for c in g)
    knots = _breakpoints(samples, t0, t1)
    u_prev = _interp(samples, knots[0])
    for ta, tb in zip(knots, knots[1:]):
        h = tb - ta
        if h <= 0.0:
            continue
        u_next = _interp(samples, tb)
        q, r, v = _rk4_step(q, r, v, b, u_prev[0], u_prev[1], u_next[0], u_next[1], h, g)
        u_prev = u_next
    return StateEstimate(q=np.array(q), r=np.array(r), v=np.array(v), b=x.b.copy())


def propagate(f: FilterState, samples: Sequence[ImuSample], t_delta: float, cfg: FilterConfig) -> FilterState:
    """Advance the filter by ``t_delta`` seconds of IMU data.

    The nominal state follows every IMU sample; the covariance takes one
    ``P <- Phi P Phi^T + Q`` step using the interval-averaged input.
    """
    if t_delta < 0.0:
        raise InvalidArgumentError("t_delta must be non-negative")
    samples = list(samples)
    if not samples:
        raise MissingDataError("no IMU samples to propagate with")
    _check_monotonic(samples)
    out = f.copy()
    if t_delta == 0.0:
        return out
    t0, t1 = f.t, f.t + t_delta
    u_avg = average_inputs(samples, t0, t1)
    Phi = state_transition(f.x_hat, u_avg, t_delta)
    if cfg.process_noise == "exact":
        _, Q = process_noise_van_loan(f.x_hat, u_avg, t_delta, cfg.noise)
    elif cfg.process_noise == "closed":
        Q = process_noise_closed(f.x_hat, u_avg, t_delta, cfg.noise)
    else:
        Q = process_noise_quadrature(f.x_hat, u_avg, t_delta, cfg.noise)
    P = Phi @ f.P @ Phi.T + Q
    out.P = 0.5 * (P + P.T)
    out.x_hat = integrate_state(f.x_hat, samples, t0, t1, cfg.geom.g)
    out.t = t1
    return out


# -- correction ---------------------------------------------------------------


def residual(z: GpsFix, f: FilterState, geom: SensorGeometry) -> np.ndarray:
    """Innovation ``z - h(x_prior)`` for both antennas (6-vector)."""
    return z.z - predict_measurement(f.x_hat, geom)


def recursive_S(S_prev: np.ndarray, rho_new: np.ndarray, rho_old, k: int, w: int) -> np.ndarray:
    """Window covariance recursion: growing mean for ``k <= w``, sliding window after.

    ``rho_old`` is the residual leaving the window (ignored while ``k <= w``).
    """
    new = np.outer(rho_new, rho_new)
    if k <= w:
        return (k - 1) / k * S_prev + new / k
    return S_prev + (new - np.outer(rho_old, rho_old)) / w


def batch_S(residuals) -> np.ndarray:
    R = np.asarray(residuals, dtype=float)
    return R.T @ R / len(R)


def floor_psd(M: np.ndarray, floor: float) -> np.ndarray:
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def adapt_noise(f: FilterState, rho: np.ndarray, correction: np.ndarray, cfg: FilterConfig) -> np.ndarray:
    """Push ``rho`` into the window, update ``S_hat`` and return ``S_hat + correction`` floored.

    The correction is ``-H P_prior H^T`` for innovations and ``+H P_post H^T``
    for post-fit residuals. Mutates the window, counter and ``S_hat`` of ``f``.
    """
    f.k += 1
    old = f.residual_window[0] if len(f.residual_window) == f.residual_window.maxlen else None
    f.S_hat = recursive_S(f.S_hat, rho, old, f.k, cfg.window_w)
    f.residual_window.append(np.array(rho, dtype=float))
    return floor_psd(f.S_hat + correction, cfg.r_floor)


def update(f: FilterState, z: GpsFix, cfg: FilterConfig) -> FilterState:
    """Kalman correction with whichever configured antennas are valid in ``z``.

    The quaternion is corrected multiplicatively, everything else additively.
    With no usable antenna the state is returned unchanged (coasting).
    """
    valid = set(z.valid_rows.tolist())
    rows = np.array([i for i in cfg.active_rows if i in valid], dtype=int)
    out = f.copy()
    out.last_residual = np.full(6, np.nan)
    if rows.size == 0:
        return out

    x = f.x_hat
    H = measurement_jacobian(x, cfg.geom)[rows]
    rho = residual(z, f, cfg.geom)[rows]
    out.last_residual[rows] = rho
    R = f.R_hat[np.ix_(rows, rows)]
    P = f.P
    S = H @ P @ H.T + R
    if np.linalg.cond(S) > MAX_INNOVATION_COND:
        log.warning("t=%.3f: innovation covariance ill-conditioned; update skipped", z.t)
        out.skipped_updates += 1
        return out
    K = np.linalg.solve(S, H @ P).T
    dx = K @ rho

    try:
        dq = quat_from_error(dx[ATT])
    except DivergenceError as exc:
        raise DivergenceError(str(exc), t=z.t) from None
    q = _mul(dq, x.q)
    q = q / np.linalg.norm(q)
    out.x_hat = StateEstimate(q=q, r=x.r + dx[POS], v=x.v + dx[VEL], b=x.b + dx[BIAS])

    Pn = (np.eye(N_ERR) - K @ H) @ P
    out.P = 0.5 * (Pn + Pn.T)

    full = np.array_equal(rows, cfg.active_rows)
    # the first residual after a coast carries the whole outage in its prior
    # covariance and says nothing about the receiver noise
    after_gap = f.last_full_update is not None and z.t - f.last_full_update > MAX_ADAPT_GAP / cfg.gps_rate
    if full:
        out.last_full_update = z.t
    if cfg.adapt_enabled and full and not after_gap:
        if cfg.r_estimator == "residual":
            eps = residual(z, out, cfg.geom)[rows]
            H_post = measurement_jacobian(out.x_hat, cfg.geom)[rows]
            R_new = adapt_noise(out, eps, H_post @ out.P @ H_post.T, cfg)
        else:
            R_new = adapt_noise(out, rho, -H @ P @ H.T, cfg)
        if out.k >= cfg.min_adapt_samples:
            out.R_hat[np.ix_(rows, rows)] = R_new
    return out


def nees(x_true: StateEstimate, x_hat: StateEstimate, P: np.ndarray) -> float:
    e = error_state(x_true, x_hat)
    return float(e @ np.linalg.solve(P, e))


def error_state(x_true: StateEstimate, x_hat: StateEstimate) -> np.ndarray:
    """12-vector ``[dq_v, dr, dv, db]`` of the truth relative to the estimate."""
    dq = _mul(x_true.q, np.array([-x_hat.q[0], -x_hat.q[1], -x_hat.q[2], x_hat.q[3]]))
    if dq[3] < 0.0:
        dq = -dq
    return np.concatenate([dq[:3], x_true.r - x_hat.r, x_true.v - x_hat.v, x_true.b - x_hat.b])
