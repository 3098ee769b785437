"""Synthetic ground truth and sensor data.

Trajectories are level-ish ground-vehicle motions whose heading follows the
path tangent, optionally with a sinusoidal roll/pitch wobble. Kinematics are
closed-form for every kind except ``scripted``, which is integrated at ten
times the output rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import atan2, cos, pi, sin

import numpy as np

from .errors import InvalidArgumentError
from .models import GpsFix, ImuSample, NoiseSpec, SensorGeometry
from .quat import _mul, quat_from_axis_angle, quat_from_euler, rotation_from_quat

KINDS = ("static", "straight", "circle", "figure8", "scripted")


@dataclass
class TrajectorySpec:
    """Parameters of a synthetic trajectory.

    ``segments`` is only used by ``scripted``: a list of
    ``(duration, body_rate, body_accel)`` where ``body_accel`` is the
    vehicle's inertial acceleration resolved in the body frame.
    """

    kind: str = "figure8"
    duration: float = 120.0
    speed: float = 1.0
    radius: float = 10.0
    yaw0: float = 0.0
    roll_amp: float = 0.0
    pitch_amp: float = 0.0
    wobble_freq: float = 0.1
    ramp: float = 5.0
    start: tuple = (0.0, 0.0, 0.0)
    segments: list = field(default_factory=list)
    seed: int = 0

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown trajectory kind {self.kind!r}")
        if not self.duration > 0.0:
            raise InvalidArgumentError("duration must be positive")
        if self.kind in ("circle", "figure8") and not self.radius > 0.0:
            raise InvalidArgumentError("radius must be positive")
        if self.kind in ("circle", "figure8", "straight") and self.speed < 0.0:
            raise InvalidArgumentError("speed must be non-negative")
        if self.kind == "scripted" and not self.segments:
            raise InvalidArgumentError("scripted trajectory needs at least one segment")


@dataclass
class TruthSample:
    t: float
    q: np.ndarray
    r: np.ndarray
    v: np.ndarray
    a_inertial: np.ndarray
    omega: np.ndarray


@dataclass
class TruthSeries:
    """Ground truth sampled on a uniform grid; arrays are indexed by sample."""

    t: np.ndarray
    q: np.ndarray
    r: np.ndarray
    v: np.ndarray
    a_inertial: np.ndarray
    omega: np.ndarray

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i) -> TruthSample:
        return TruthSample(self.t[i], self.q[i], self.r[i], self.v[i], self.a_inertial[i], self.omega[i])

    @property
    def rate(self) -> float:
        return 1.0 / float(self.t[1] - self.t[0])


@dataclass
class Outage:
    start: float
    end: float
    antenna: str = "both"

    def covers(self, t: float, antenna: int) -> bool:
        if not self.start <= t < self.end:
            return False
        return self.antenna == "both" or int(self.antenna) == antenna


def validate_outages(outages):
    per = {1: [], 2: []}
    for o in outages:
        if o.antenna not in ("both", "1", "2", 1, 2):
            raise InvalidArgumentError(f"bad outage antenna {o.antenna!r}")
        if not o.end > o.start:
            raise InvalidArgumentError("outage end must follow its start")
        for a in (1, 2):
            if o.antenna == "both" or int(o.antenna) == a:
                per[a].append((o.start, o.end))
    for spans in per.values():
        spans.sort()
        for (s0, e0), (s1, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise InvalidArgumentError("outage intervals overlap")


def _euler_body_rate(roll, pitch, droll, dpitch, dyaw):
    return np.array(
        [
            droll - dyaw * sin(pitch),
            dpitch * cos(roll) + dyaw * cos(pitch) * sin(roll),
            -dpitch * sin(roll) + dyaw * cos(pitch) * cos(roll),
        ]
    )


def _figure8_phase(t, omega, ramp):
    if ramp <= 0.0:
        return omega * t, omega, 0.0
    if t < ramp:
        phase = omega * (0.5 * t - ramp / (2.0 * pi) * sin(pi * t / ramp))
        rate = 0.5 * omega * (1.0 - cos(pi * t / ramp))
        acc = 0.5 * omega * pi / ramp * sin(pi * t / ramp)
        return phase, rate, acc
    return omega * (0.5 * ramp + (t - ramp)), omega, 0.0


def _analytic_sample(spec: TrajectorySpec, t: float):
    """Return (yaw, dyaw, r, v, a) for the planar part of the motion."""
    start = np.asarray(spec.start, dtype=float)
    if spec.kind == "static":
        return spec.yaw0, 0.0, start.copy(), np.zeros(3), np.zeros(3)
    if spec.kind == "straight":
        d = np.array([cos(spec.yaw0), sin(spec.yaw0), 0.0])
        return spec.yaw0, 0.0, start + spec.speed * t * d, spec.speed * d, np.zeros(3)
    if spec.kind == "circle":
        rho, w = spec.radius, spec.speed / spec.radius
        c0, s0 = cos(spec.yaw0), sin(spec.yaw0)
        rot = np.array([[c0, -s0, 0.0], [s0, c0, 0.0], [0.0, 0.0, 1.0]])
        p = rho * np.array([sin(w * t), 1.0 - cos(w * t), 0.0])
        v = spec.speed * np.array([cos(w * t), sin(w * t), 0.0])
        a = rho * w * w * np.array([-sin(w * t), cos(w * t), 0.0])
        return spec.yaw0 + w * t, w, start + rot @ p, rot @ v, rot @ a
    if spec.kind == "figure8":
        R = spec.radius
        phase, dphase, ddphase = _figure8_phase(t, spec.speed / spec.radius, spec.ramp)
        s1, c1 = sin(phase), cos(phase)
        s2, c2 = sin(2.0 * phase), cos(2.0 * phase)
        p = np.array([R * s1, 0.5 * R * s2, 0.0])
        d1 = np.array([R * c1, R * c2, 0.0])
        d2 = np.array([-R * s1, -2.0 * R * s2, 0.0])
        yaw = atan2(d1[1], d1[0])
        dyaw = (d1[0] * d2[1] - d1[1] * d2[0]) / (d1[0] ** 2 + d1[1] ** 2) * dphase
        return yaw, dyaw, start + p, d1 * dphase, d2 * dphase**2 + d1 * ddphase
    raise InvalidArgumentError(f"no analytic form for {spec.kind!r}")


def _analytic_truth(spec: TrajectorySpec, times: np.ndarray) -> TruthSeries:
    n = len(times)
    q = np.empty((n, 4))
    r = np.empty((n, 3))
    v = np.empty((n, 3))
    a = np.empty((n, 3))
    om = np.empty((n, 3))
    wf = 2.0 * pi * spec.wobble_freq
    for i, t in enumerate(times):
        yaw, dyaw, r[i], v[i], a[i] = _analytic_sample(spec, t)
        roll = spec.roll_amp * sin(wf * t)
        droll = spec.roll_amp * wf * cos(wf * t)
        pitch = spec.pitch_amp * cos(wf * t)
        dpitch = -spec.pitch_amp * wf * sin(wf * t)
        q[i] = quat_from_euler(roll, pitch, yaw)
        om[i] = _euler_body_rate(roll, pitch, droll, dpitch, dyaw)
    return TruthSeries(times, q, r, v, a, om)


def _scripted_truth(spec: TrajectorySpec, rate: float) -> TruthSeries:
    fine = 10
    h = 1.0 / (rate * fine)
    q = quat_from_euler(0.0, 0.0, spec.yaw0)
    r = np.asarray(spec.start, dtype=float).copy()
    v = np.zeros(3)
    seg_ends = np.cumsum([s[0] for s in spec.segments])
    n_out = int(round(spec.duration * rate)) + 1
    out_q, out_r, out_v, out_a, out_w = [], [], [], [], []

    def segment(t):
        i = int(np.searchsorted(seg_ends, t, side="right"))
        i = min(i, len(spec.segments) - 1)
        _, w, ab = spec.segments[i]
        return np.asarray(w, dtype=float), np.asarray(ab, dtype=float)

    for k in range(n_out * fine):
        t = k * h
        w, ab = segment(t)
        A = rotation_from_quat(q)
        if k % fine == 0:
            out_q.append(q.copy())
            out_r.append(r.copy())
            out_v.append(v.copy())
            out_a.append(A @ ab)
            out_w.append(w.copy())
        # exact attitude step for a constant body rate
        wn = np.linalg.norm(w)
        dq = quat_from_axis_angle(w, wn * h) if wn > 0 else np.array([0.0, 0.0, 0.0, 1.0])
        q_next = _mul(dq, q)
        a0 = A @ ab
        a1 = rotation_from_quat(q_next) @ ab
        r = r + v * h + h * h * (a0 / 3.0 + a1 / 6.0)
        v = v + 0.5 * h * (a0 + a1)
        q = q_next / np.linalg.norm(q_next)
    times = np.arange(n_out) / rate
    return TruthSeries(times, np.array(out_q), np.array(out_r), np.array(out_v), np.array(out_a), np.array(out_w))


def generate_truth(spec: TrajectorySpec, rate: float) -> TruthSeries:
    """Sample the trajectory at ``rate`` Hz over ``[0, duration]``."""
    spec.validate()
    if rate < 10.0:
        raise InvalidArgumentError("truth rate must be at least 10 Hz")
    if spec.kind == "scripted":
        return _scripted_truth(spec, rate)
    n = int(round(spec.duration * rate)) + 1
    return _analytic_truth(spec, np.arange(n) / rate)


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator; distinct ``stream`` ids give independent draws."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def _stride(truth: TruthSeries, rate: float) -> int:
    ratio = truth.rate / rate
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-6:
        raise InvalidArgumentError(f"rate {rate} Hz must divide the truth rate {truth.rate:.6g} Hz")
    return k


def synthesize_imu(
    truth: TruthSeries,
    n: NoiseSpec | None,
    bias_true,
    rate: float,
    seed: int,
    g=(0.0, 0.0, 9.81),
) -> list[ImuSample]:
    """Invert the sensor models: ``u_a = A^T (a + g) + w_a``, ``u_g = omega - b + w_g``.

    Discrete noise standard deviation is ``sigma * sqrt(rate)``. ``n=None``
    gives noise-free output.
    """
    k = _stride(truth, rate)
    idx = np.arange(0, len(truth), k)
    g = np.asarray(g, dtype=float)
    b = np.asarray(bias_true, dtype=float)
    rng = make_rng(seed, 1)
    m = len(idx)
    if n is None:
        wg = np.zeros((m, 3))
        wa = np.zeros((m, 3))
    else:
        wg = rng.normal(scale=n.sigma_g * np.sqrt(rate), size=(m, 3))
        wa = rng.normal(scale=n.sigma_a * np.sqrt(rate), size=(m, 3))
    out = []
    for j, i in enumerate(idx):
        A = rotation_from_quat(truth.q[i])
        ua = A.T @ (truth.a_inertial[i] + g) + wa[j]
        ug = truth.omega[i] - b + wg[j]
        out.append(ImuSample(truth.t[i], ug, ua))
    return out


def _sqrtm_psd(R) -> np.ndarray:
    vals, vecs = np.linalg.eigh(np.asarray(R, dtype=float))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def synthesize_gps(
    truth: TruthSeries,
    geom: SensorGeometry,
    R_true,
    rate: float,
    outages=(),
    seed: int = 0,
) -> list[GpsFix]:
    """Antenna fixes ``p_i = r + A e_i + v`` with ``v ~ N(0, R_true)``.

    ``R_true`` is a 6x6 matrix or a callable ``t -> 6x6`` for time-varying noise.
    Fixes inside a scripted outage are flagged invalid.
    """
    outages = list(outages)
    validate_outages(outages)
    k = _stride(truth, rate)
    rng = make_rng(seed, 2)
    fixes = []
    for i in range(0, len(truth), k):
        t = float(truth.t[i])
        R = R_true(t) if callable(R_true) else R_true
        noise = _sqrtm_psd(R) @ rng.normal(size=6)
        A = rotation_from_quat(truth.q[i])
        p1 = truth.r[i] + A @ geom.e1 + noise[:3]
        p2 = truth.r[i] + A @ geom.e2 + noise[3:]
        v1 = not any(o.covers(t, 1) for o in outages)
        v2 = not any(o.covers(t, 2) for o in outages)
        fixes.append(GpsFix(t, p1, p2, v1, v2))
    return fixes


def isotropic_R(sigma: float) -> np.ndarray:
    return sigma**2 * np.eye(6)
