"""End-to-end fusion runs, per-epoch records and summary statistics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import chi2

from . import ekf
from .errors import DivergenceError, InitializationError, MissingDataError
from .models import GpsFix, ImuSample, StateEstimate
from .observability import DUAL, SINGLE, alignment_angle, numeric_rank, observability_matrix
from .sim import TrajectorySpec, generate_truth, isotropic_R, synthesize_gps, synthesize_imu

log = logging.getLogger(__name__)

INIT_WINDOW = 5.0
TRANSIENT = 5.0
NEES_DOF = 12


@dataclass
class EpochRecord:
    t: float
    x: StateEstimate
    P_diag: np.ndarray
    trace_P: float
    residual: np.ndarray
    R_diag: np.ndarray
    theta: float
    rank: int
    valid1: bool
    valid2: bool
    att_err: float = float("nan")
    pos_err: float = float("nan")
    vel_err: float = float("nan")
    bias_err: float = float("nan")
    nees: float = float("nan")


@dataclass
class Summary:
    rmse_attitude: float = float("nan")
    rmse_position: float = float("nan")
    rmse_velocity: float = float("nan")
    bias_final_error: float = float("nan")
    bias_final_relative: float = float("nan")
    nees_fraction: float = float("nan")
    epochs: int = 0
    skipped_updates: int = 0
    low_theta_epochs: int = 0


@dataclass
class RunReport:
    epochs: list = field(default_factory=list)
    summary: Summary = field(default_factory=Summary)
    diverged: bool = False
    message: str = ""
    final: ekf.FilterState | None = None


def nees_bounds(dof: int = NEES_DOF, level: float = 0.95):
    a = 1.0 - level
    return float(chi2.ppf(a / 2.0, dof)), float(chi2.ppf(1.0 - a / 2.0, dof))


def truth_at(truth, t: float) -> StateEstimate | None:
    i = int(np.searchsorted(truth.t, t))
    for j in (i - 1, i):
        if 0 <= j < len(truth.t) and abs(truth.t[j] - t) < 1e-6:
            return StateEstimate(truth.q[j], truth.r[j], truth.v[j], np.zeros(3))
    return None


def _first_dual_fix(gps, t_origin: float):
    for fix in gps:
        if fix.t > t_origin + INIT_WINDOW:
            break
        if fix.valid1 and fix.valid2:
            return fix
    return None


def _imu_at(imu, times, t):
    i = int(np.searchsorted(times, t, side="right")) - 1
    return imu[max(i, 0)]


def run_filter(
    imu: list[ImuSample],
    gps: list[GpsFix],
    cfg: ekf.FilterConfig,
    truth=None,
    bias_true=None,
    x0: StateEstimate | None = None,
) -> RunReport:
    """Initialize from the first dual-antenna fix, then alternate propagate/update.

    Raises :class:`InitializationError` when no usable fix appears within the
    first five seconds. Divergence is reported in the returned run report.
    """
    if not imu:
        raise MissingDataError("empty IMU log")
    if not gps:
        raise MissingDataError("empty GPS log")
    times = np.array([s.t for s in imu])
    t_origin = min(times[0], gps[0].t)
    fix0 = _first_dual_fix(gps, t_origin)
    if fix0 is None:
        raise InitializationError(f"no valid dual-antenna fix within the first {INIT_WINDOW:g} s")
    if x0 is None:
        x0 = ekf.initialize(fix0, _imu_at(imu, times, fix0.t), cfg.geom)
    f = ekf.new_filter(x0, cfg, t0=fix0.t)
    mode = DUAL if len(cfg.antennas) == 2 else SINGLE
    bias_true = None if bias_true is None else np.asarray(bias_true, dtype=float)

    report = RunReport()
    start = gps.index(fix0) + 1
    for n_epoch, fix in enumerate(gps[start:], start=start):
        if fix.t <= f.t:
            continue
        lo = max(int(np.searchsorted(times, f.t, side="right")) - 1, 0)
        hi = min(int(np.searchsorted(times, fix.t, side="left")) + 1, len(imu))
        window = imu[lo:hi]
        u_avg = ekf.average_inputs(window, f.t, fix.t)
        f = ekf.propagate(f, window, fix.t - f.t, cfg)
        try:
            f = ekf.update(f, fix, cfg)
        except DivergenceError as exc:
            report.diverged = True
            report.message = f"filter diverged at epoch {n_epoch} (t = {fix.t:.3f} s): {exc}"
            log.error(report.message)
            break
        report.epochs.append(_record(f, fix, u_avg, cfg, mode, truth, bias_true))
    report.final = f
    report.summary = summarize(report.epochs, bias_true, skipped=f.skipped_updates, theta_warn=cfg.theta_warn)
    return report


def _record(f, fix, u_avg, cfg, mode, truth, bias_true) -> EpochRecord:
    try:
        theta = alignment_angle(cfg.geom, u_avg.u_a)
    except ValueError:
        theta = 0.0
    if theta < cfg.theta_warn and mode == DUAL:
        log.warning("t=%.3f: degraded observability, theta = %.4f rad", fix.t, theta)
    O = observability_matrix(f.x_hat, u_avg, cfg.geom, mode)
    rec = EpochRecord(
        t=fix.t,
        x=f.x_hat.copy(),
        P_diag=np.diag(f.P).copy(),
        trace_P=float(np.trace(f.P)),
        residual=f.last_residual.copy(),
        R_diag=np.diag(f.R_hat).copy(),
        theta=theta,
        rank=numeric_rank(O),
        valid1=fix.valid1,
        valid2=fix.valid2,
    )
    if truth is not None:
        xt = truth_at(truth, fix.t)
        if xt is not None:
            if bias_true is not None:
                xt.b = bias_true.copy()
            e = ekf.error_state(xt, f.x_hat)
            rec.att_err = 2.0 * float(np.arcsin(min(1.0, np.linalg.norm(e[0:3]))))
            rec.pos_err = float(np.linalg.norm(e[3:6]))
            rec.vel_err = float(np.linalg.norm(e[6:9]))
            if bias_true is not None:
                rec.bias_err = float(np.linalg.norm(e[9:12]))
                rec.nees = float(e @ np.linalg.solve(f.P, e))
    return rec


def summarize(epochs, bias_true=None, skipped: int = 0, transient: float = TRANSIENT, theta_warn: float = 0.05) -> Summary:
    if not epochs:
        return Summary(skipped_updates=skipped)
    cols = {
        name: np.array([getattr(e, name) for e in epochs], dtype=float)
        for name in ("t", "theta", "att_err", "pos_err", "vel_err", "bias_err", "nees")
    }
    bias_norm = None if bias_true is None else float(np.linalg.norm(bias_true))
    return summarize_columns(cols, bias_norm, skipped, transient, theta_warn)


def _rms(x, mask) -> float:
    return float(np.sqrt(np.mean(np.asarray(x, dtype=float)[mask] ** 2)))


def summarize_columns(
    cols, bias_norm=None, skipped: int = 0, transient: float = TRANSIENT, theta_warn: float = 0.05
) -> Summary:
    """Summary from per-epoch columns ``t, theta, att_err, pos_err, vel_err, bias_err, nees``.

    RMSEs skip the first ``transient`` seconds; NEES counts every finite epoch.
    """
    t = np.asarray(cols["t"], dtype=float)
    s = Summary(epochs=len(t), skipped_updates=skipped)
    if not len(t):
        return s
    s.low_theta_epochs = int(np.count_nonzero(np.asarray(cols["theta"]) < theta_warn))
    pos = np.asarray(cols["pos_err"], dtype=float)
    late = (t - t[0] >= transient) & np.isfinite(pos)
    if late.any():
        s.rmse_attitude = _rms(cols["att_err"], late)
        s.rmse_position = _rms(pos, late)
        s.rmse_velocity = _rms(cols["vel_err"], late)
    bias_err = np.asarray(cols["bias_err"], dtype=float)
    if bias_norm is not None and np.isfinite(bias_err[-1]):
        s.bias_final_error = float(bias_err[-1])
        if bias_norm > 0.0:
            s.bias_final_relative = s.bias_final_error / bias_norm
    vals = np.asarray(cols["nees"], dtype=float)
    vals = vals[np.isfinite(vals)]
    if vals.size:
        lo, hi = nees_bounds()
        s.nees_fraction = float(np.mean((vals >= lo) & (vals <= hi)))
    return s


# -- simulated scenarios -----------------------------------------------------


@dataclass
class Scenario:
    """A simulated run: trajectory, sensor truth parameters and filter config."""

    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    imu_rate: float = 100.0
    gps_rate: float = 5.0
    gps_sigma: float = 0.02
    gps_sigma_after: float | None = None
    noise_change_t: float | None = None
    bias_true: tuple = (0.01, 0.01, 0.01)
    outages: list = field(default_factory=list)
    noise_free: bool = False

    def R_true(self):
        base = isotropic_R(self.gps_sigma)
        if self.gps_sigma_after is None or self.noise_change_t is None:
            return base
        after = isotropic_R(self.gps_sigma_after)
        tc = self.noise_change_t
        return lambda t: after if t >= tc else base


def simulate(scenario: Scenario, cfg: ekf.FilterConfig, seed: int):
    truth = generate_truth(scenario.trajectory, scenario.imu_rate)
    noise = None if scenario.noise_free else cfg.noise
    imu = synthesize_imu(truth, noise, scenario.bias_true, scenario.imu_rate, seed, g=cfg.geom.g)
    R = 0.0 * np.eye(6) if scenario.noise_free else scenario.R_true()
    gps = synthesize_gps(truth, cfg.geom, R, scenario.gps_rate, scenario.outages, seed)
    return truth, imu, gps


def run_scenario(scenario: Scenario, cfg: ekf.FilterConfig, seed: int) -> RunReport:
    truth, imu, gps = simulate(scenario, cfg, seed)
    return run_filter(imu, gps, cfg, truth=truth, bias_true=scenario.bias_true)


def _run_one(args):
    scenario, cfg, seed = args
    rep = run_scenario(scenario, cfg, seed)
    rep.final = None
    return rep


def monte_carlo(scenario: Scenario, cfg: ekf.FilterConfig, seeds, workers: int | None = None) -> list[RunReport]:
    """Independent seeded runs; ``workers > 1`` fans out to a process pool."""
    jobs = [(scenario, cfg, int(s)) for s in seeds]
    if workers is None or workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def aggregate(reports) -> dict:
    keys = [k for k in asdict(Summary()) if k not in ("epochs", "skipped_updates", "low_theta_epochs")]
    out = {"runs": len(reports), "diverged": int(sum(r.diverged for r in reports))}
    for k in keys:
        vals = np.array([getattr(r.summary, k) for r in reports], dtype=float)
        vals = vals[np.isfinite(vals)]
        out[k + "_mean"] = float(vals.mean()) if vals.size else float("nan")
        out[k + "_max"] = float(vals.max()) if vals.size else float("nan")
    return out
