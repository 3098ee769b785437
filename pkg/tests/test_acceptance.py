"""Acceptance checks. Each test prints one PASS/FAIL line with its runtime.

Run with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import random_input, random_state  # noqa: E402
from oracles import fd_error_dynamics, fd_measurement_jacobian  # noqa: E402
from scipy.linalg import expm  # noqa: E402

from dualfuse import ekf, pipeline  # noqa: E402
from dualfuse.discretize import process_noise_closed, process_noise_quadrature, state_transition  # noqa: E402
from dualfuse.ekf import batch_S, initialize, recursive_S  # noqa: E402
from dualfuse.models import (  # noqa: E402
    GpsFix,
    ImuSample,
    NoiseSpec,
    SensorGeometry,
    linearized_F,
    measurement_jacobian,
)
from dualfuse.observability import (  # noqa: E402
    DUAL,
    SINGLE,
    mro_reduction,
    numeric_rank,
    observability_matrix,
    single_gps_null_vector,
)
from dualfuse.quat import quat_from_euler, rotation_from_quat  # noqa: E402
from dualfuse.sim import Outage, TrajectorySpec  # noqa: E402

GEOM = SensorGeometry()
R_TRUE = 0.02**2
MC_SEEDS = range(20)


@pytest.fixture
def emit(capsys):
    def _emit(line):
        with capsys.disabled():
            print("\n" + line)

    return _emit


def _check(emit, num, title, parts, elapsed, limit):
    """Print the verdict line, then fail the test if any part or the time limit failed."""
    ok_time = elapsed < limit
    ok = all(p for p, _ in parts.values()) and ok_time
    detail = "; ".join(f"{k} {'ok' if p else 'FAIL'} ({d})" for k, (p, d) in parts.items())
    line = f"[{'PASS' if ok else 'FAIL'}] {num}. {title}: {detail}; runtime {elapsed:.2f} s (limit {limit:g} s)"
    emit(line)
    assert ok, line


def test_01_jacobians_match_finite_differences(emit):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    eh, ef = [], []
    for _ in range(100):
        x, u = random_state(rng), random_input(rng)
        H, Hfd = measurement_jacobian(x, GEOM), fd_measurement_jacobian(x, GEOM)
        F, Ffd = linearized_F(x, u), fd_error_dynamics(x, u, GEOM)
        eh.append(np.linalg.norm(H - Hfd) / np.linalg.norm(Hfd))
        ef.append(np.linalg.norm(F - Ffd) / np.linalg.norm(Ffd))
    elapsed = time.perf_counter() - t0
    parts = {
        "H": (max(eh) <= 1e-4, f"max rel err {max(eh):.1e}"),
        "F": (max(ef) <= 1e-4, f"max rel err {max(ef):.1e}"),
    }
    _check(emit, 1, "linearization", parts, elapsed, 5.0)


def test_02_discretization(emit):
    rng = np.random.default_rng(2)
    n = NoiseSpec()
    t0 = time.perf_counter()
    phi_err, q_err, monotone = [], [], True
    for _ in range(50):
        x, u = random_state(rng), random_input(rng)
        E = expm(linearized_F(x, u) * 0.1)
        phi_err.append(np.abs(state_transition(x, u, 0.1) - E).max())
        errs = []
        for tau in (0.1, 0.05, 0.025):
            Qc = process_noise_closed(x, u, tau, n)
            Qq = process_noise_quadrature(x, u, tau, n)
            errs.append(np.linalg.norm(Qc - Qq) / np.linalg.norm(Qq))
        q_err.append(errs[1])
        monotone &= errs[0] > errs[1] > errs[2]
    elapsed = time.perf_counter() - t0
    parts = {
        "Phi vs expm": (max(phi_err) <= 1e-8, f"max entry err {max(phi_err):.1e}"),
        "closed Q at 0.05 s": (max(q_err) <= 0.10, f"max rel Frobenius err {max(q_err):.3f}"),
        "Q improves as tau shrinks": (monotone, "0.1 > 0.05 > 0.025 on every state"),
    }
    _check(emit, 2, "discretization", parts, elapsed, 30.0)


def _degenerate_input(rng):
    return ImuSample(0.0, rng.normal(size=3) * 0.5, GEOM.baseline * rng.uniform(2.0, 15.0) * rng.choice([-1, 1]))


def test_03_observability(emit):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    dual, single, eta_res, mro_reg = [], [], [], []
    for _ in range(100):
        x, u = random_state(rng), random_input(rng)
        O = observability_matrix(x, u, GEOM, DUAL)
        dual.append(numeric_rank(O))
        Os = observability_matrix(x, u, GEOM, SINGLE)
        single.append(numeric_rank(Os))
        eta = single_gps_null_vector(x, u, GEOM)
        eta_res.append(np.linalg.norm(Os @ eta) / (np.linalg.norm(Os, 2) * np.linalg.norm(eta)))
        mro_reg.append(numeric_rank(mro_reduction(x, u, GEOM)[0]) == dual[-1])
    par, mro_deg = [], []
    for _ in range(20):
        x, u = random_state(rng), _degenerate_input(rng)
        par.append(numeric_rank(observability_matrix(x, u, GEOM, DUAL)))
        mro_deg.append(numeric_rank(mro_reduction(x, u, GEOM)[0]) == par[-1])
    elapsed = time.perf_counter() - t0
    parts = {
        "dual rank 12": (min(dual) == 12, f"{dual.count(12)}/100"),
        "parallel rank < 12": (max(par) < 12, f"ranks {sorted(set(par))}"),
        "single rank <= 11": (max(single) <= 11, f"ranks {sorted(set(single))}"),
        "null vector": (max(eta_res) <= 1e-10, f"max residual {max(eta_res):.1e}"),
        "MRO rank-equivalent": (
            all(mro_reg) and all(mro_deg),
            f"{sum(mro_reg)}/100 regular, {sum(mro_deg)}/20 degenerate",
        ),
    }
    _check(emit, 3, "observability", parts, elapsed, 10.0)


def _mean_diag(rep, i):
    return float(np.mean(rep.epochs[i].R_diag))


def test_04_adaptive_noise(emit):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    w = 30
    res = rng.normal(size=(200, 6))
    S, worst = np.zeros((6, 6)), 0.0
    for k in range(1, len(res) + 1):
        S = recursive_S(S, res[k - 1], res[k - 1 - w] if k > w else None, k, w)
        worst = max(worst, np.abs(S - batch_S(res[max(0, k - w) : k])).max())

    cfg = ekf.FilterConfig(window_w=w)
    static = TrajectorySpec(kind="static", duration=60.0)
    rep = pipeline.run_scenario(pipeline.Scenario(trajectory=static), cfg, 0)
    Rd = np.array([e.R_diag for e in rep.epochs])
    ratio = Rd[2 * w :].mean(axis=0) / R_TRUE

    step = pipeline.Scenario(
        trajectory=TrajectorySpec(kind="static", duration=60.0), gps_sigma_after=0.2, noise_change_t=40.0
    )
    rep2 = pipeline.run_scenario(step, cfg, 0)
    i0 = next(i for i, e in enumerate(rep2.epochs) if e.t >= 40.0)
    before = _mean_diag(rep2, i0 - 1)
    rise = next((i - i0 + 1 for i in range(i0, len(rep2.epochs)) if _mean_diag(rep2, i) >= 10 * before), None)
    elapsed = time.perf_counter() - t0
    parts = {
        "recursive S": (worst <= 1e-12, f"max diff {worst:.1e}"),
        "stationary R": (
            len(Rd) == 300 and np.all(np.abs(ratio - 1) <= 0.3),
            f"{len(Rd)} epochs, mean diag over epochs {2 * w}-300 / 4e-4 in [{ratio.min():.2f}, {ratio.max():.2f}]",
        ),
        "noise step": (rise is not None and rise <= 2 * w, f"10x rise after {rise} epochs"),
    }
    _check(emit, 4, "adaptive R", parts, elapsed, 20.0)


def _pooled(reports, name, transient=pipeline.TRANSIENT):
    vals = []
    for r in reports:
        t0 = r.epochs[0].t
        vals += [getattr(e, name) for e in r.epochs if e.t - t0 >= transient]
    return np.asarray(vals)


def test_05_monte_carlo(emit):
    t0 = time.perf_counter()
    reports = pipeline.monte_carlo(pipeline.Scenario(), ekf.FilterConfig(), MC_SEEDS)
    elapsed = time.perf_counter() - t0
    att = float(np.sqrt(np.mean(_pooled(reports, "att_err") ** 2)))
    pos = float(np.sqrt(np.mean(_pooled(reports, "pos_err") ** 2)))
    bias = max(r.summary.bias_final_relative for r in reports)
    nees = _pooled(reports, "nees", transient=0.0)
    lo, hi = pipeline.nees_bounds()
    frac = float(np.mean((nees >= lo) & (nees <= hi)))
    parts = {
        "diverged": (not any(r.diverged for r in reports), f"{sum(r.diverged for r in reports)}/20"),
        "attitude RMSE": (att <= 0.02, f"{att:.4f} rad"),
        "position RMSE": (pos <= 0.05, f"{pos:.4f} m"),
        "bias": (bias <= 0.10, f"worst final rel err {bias:.3f}"),
        "NEES": (frac >= 0.90, f"{frac:.3f} of epochs in [{lo:.2f}, {hi:.2f}]"),
    }
    _check(emit, 5, "20-run Monte Carlo", parts, elapsed, 120.0)


def test_06_single_antenna(emit):
    seeds = range(5)
    t0 = time.perf_counter()
    dual = pipeline.monte_carlo(pipeline.Scenario(), ekf.FilterConfig(), seeds)
    single = pipeline.monte_carlo(pipeline.Scenario(), ekf.FilterConfig(antennas=(1,)), seeds)
    elapsed = time.perf_counter() - t0
    bias = [r.summary.bias_final_relative for r in single]
    ratio = [s.summary.rmse_attitude / d.summary.rmse_attitude for s, d in zip(single, dual)]
    parts = {
        "bias unresolved": (min(bias) > 0.5, f"final rel err {min(bias):.3f}-{max(bias):.3f}"),
        "attitude degraded": (min(ratio) >= 5.0, f"single/dual RMSE {min(ratio):.1f}-{max(ratio):.1f}x"),
    }
    _check(emit, 6, "single antenna", parts, elapsed, 120.0)


def _rms_between(rep, a, b):
    e = [x.pos_err for x in rep.epochs if a <= x.t < b]
    return float(np.sqrt(np.mean(np.square(e))))


def test_07_outage(emit):
    t_out, t_ret = 60.0, 70.0
    sc = pipeline.Scenario(outages=[Outage(t_out, t_ret)])
    t0 = time.perf_counter()
    reports = [pipeline.run_scenario(sc, ekf.FilterConfig(), s) for s in range(5)]
    elapsed = time.perf_counter() - t0
    bounded, recov = [], []
    for rep in reports:
        last = [e for e in rep.epochs if e.t < t_ret][-1]
        bounded.append(last.pos_err / (3.0 * np.sqrt(last.P_diag[3:6].sum())))
        recov.append(_rms_between(rep, t_ret + 5.0, t_ret + 10.0) / _rms_between(rep, t_out - 10.0, t_out))
    parts = {
        "no divergence": (not any(r.diverged for r in reports), "5 seeds"),
        "error within 3 sigma": (max(bounded) <= 1.0, f"|e| / 3 sigma up to {max(bounded):.2f}"),
        "recovery in 5 s": (max(recov) <= 2.0, f"RMSE ratio {min(recov):.2f}-{max(recov):.2f}"),
    }
    _check(emit, 7, "10 s outage", parts, elapsed, 60.0)


def test_08_initialization(emit):
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    exact_err, noisy_err, ortho = 0.0, [], 0.0
    for i in range(200):
        q = quat_from_euler(*rng.uniform(-0.2, 0.2, 2), rng.uniform(-np.pi, np.pi))
        A = rotation_from_quat(q)
        r = rng.normal(size=3) * 10.0
        u = ImuSample(0.0, np.zeros(3), A.T @ GEOM.g)
        x = initialize(GpsFix(0.0, r + A @ GEOM.e1, r + A @ GEOM.e2), u, GEOM)
        exact_err = max(exact_err, np.abs(rotation_from_quat(x.q) - A).max(), np.abs(x.r - r).max())
        n1, n2 = rng.normal(scale=0.01, size=(2, 3))
        xn = initialize(GpsFix(0.0, r + A @ GEOM.e1 + n1, r + A @ GEOM.e2 + n2), u, GEOM)
        An = rotation_from_quat(xn.q)
        noisy_err.append(np.arccos(np.clip((np.trace(A.T @ An) - 1.0) / 2.0, -1.0, 1.0)))
        ortho = max(ortho, np.abs(An.T @ An - np.eye(3)).max())
    elapsed = time.perf_counter() - t0
    rms = float(np.sqrt(np.mean(np.square(noisy_err))))
    parts = {
        "noise-free": (exact_err <= 1e-10, f"max err {exact_err:.1e}"),
        "1 cm noise": (rms <= 0.02, f"RMS attitude err {rms:.4f} rad over 200 trials"),
        "orthogonal": (ortho <= 1e-12, f"max |A^T A - I| {ortho:.1e}"),
    }
    _check(emit, 8, "initialization", parts, elapsed, 1.0)


def test_09_adaptive_beats_fixed(emit):
    wrong = 100.0 * R_TRUE
    t0 = time.perf_counter()
    adaptive = pipeline.monte_carlo(pipeline.Scenario(), ekf.FilterConfig(r_init=wrong), MC_SEEDS)
    fixed = pipeline.monte_carlo(pipeline.Scenario(), ekf.FilterConfig(r_init=wrong, adapt_enabled=False), MC_SEEDS)
    elapsed = time.perf_counter() - t0
    a = np.array([r.summary.rmse_position for r in adaptive])
    f = np.array([r.summary.rmse_position for r in fixed])
    wins = int(np.sum(a < f))
    parts = {
        "adaptive lower on every seed": (wins == len(a), f"{wins}/{len(a)}, mean {a.mean():.4f} vs {f.mean():.4f} m"),
    }
    _check(emit, 9, "mis-specified R", parts, elapsed, 240.0)


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn(print)
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
