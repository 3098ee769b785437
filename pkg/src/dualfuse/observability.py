"""Local observability of the piecewise-constant error dynamics.

The observability matrix stacks ``H F^k`` for ``k = 0..order``. With two
antennas it has rank 12 unless the measured specific force is parallel to
the antenna baseline; with one antenna it is always rank deficient, the
kernel containing the vector returned by :func:`single_gps_null_vector`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .models import ImuSample, SensorGeometry, StateEstimate, linearized_F, measurement_jacobian
from .quat import cross_matrix

DEFAULT_RANK_TOL = 1e-8
DEFAULT_THETA_WARN = 0.05

DUAL = "dual"
SINGLE = "single"


class DegradedObservabilityWarning(UserWarning):
    pass


@dataclass
class ObservabilityReport:
    rank: int
    full_rank: bool
    theta: float
    smallest_singular_value: float
    mode: str


def observability_matrix(
    x: StateEstimate, u: ImuSample, geom: SensorGeometry, mode: str = DUAL, order: int = 3
) -> np.ndarray:
    """Stack ``[H; H F; ...; H F^order]``. Single mode keeps only antenna 1 rows."""
    if order < 3:
        raise InvalidArgumentError("order must be at least 3")
    if mode not in (DUAL, SINGLE):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    H = measurement_jacobian(x, geom)
    if mode == SINGLE:
        H = H[:3]
    F = linearized_F(x, u)
    blocks = [H]
    for _ in range(order):
        blocks.append(blocks[-1] @ F)
    return np.vstack(blocks)


def numeric_rank(M, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values at or above ``rel_tol * sigma_max``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise InvalidArgumentError("rank of an empty matrix is undefined")
    if not 0.0 < rel_tol < 1.0:
        raise InvalidArgumentError("rel_tol must lie in (0, 1)")
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= rel_tol * s[0]))


def pi_matrix(geom: SensorGeometry, a_hat) -> np.ndarray:
    """``de de^T [a x] + [a x]`` for baseline ``de = e1 - e2``.

    This equals ``(I + de de^T) [a x]``, so ``a_hat`` is always in its kernel
    and the matrix is singular for every acceleration. The attitude block that
    :func:`mro_reduction` actually produces, ``[de x] + de de^T [a x]``, is
    singular as well (``de`` is in its kernel).
    """
    de = geom.baseline
    Ca = cross_matrix(a_hat)
    return np.outer(de, de) @ Ca + Ca


def alignment_angle(geom: SensorGeometry, a_hat) -> float:
    """Acute angle in [0, pi/2] between the baseline and the specific force."""
    de = geom.baseline
    a_hat = np.asarray(a_hat, dtype=float)
    nd, na = np.linalg.norm(de), np.linalg.norm(a_hat)
    if nd == 0.0 or na == 0.0:
        raise InvalidArgumentError("alignment angle needs non-zero baseline and acceleration")
    c = min(1.0, abs(float(de @ a_hat)) / (nd * na))
    return float(np.arccos(c))


def single_gps_null_vector(x: StateEstimate, u: ImuSample, geom: SensorGeometry) -> np.ndarray:
    """Kernel vector ``[a; 2 A (e1 x a); 0; 2 omega x a]`` of the single-antenna matrix."""
    a = np.asarray(u.u_a, dtype=float)
    if np.linalg.norm(a) == 0.0:
        raise InvalidArgumentError("null vector is undefined for zero specific force")
    w = u.u_g + x.b
    return np.concatenate([a, 2.0 * x.A @ np.cross(geom.e1, a), np.zeros(3), 2.0 * np.cross(w, a)])


def mro_reduction(x: StateEstimate, u: ImuSample, geom: SensorGeometry):
    """Row-reduce the dual-antenna observability matrix to its 12x12 reduced form.

    Every row of the result is an explicit linear combination of rows of
    ``H``, ``H F``, ``H F^2`` and ``H F^3``. Returns ``(reduced, intermediate)``
    where ``intermediate`` is the 16-row matrix before the baseline
    projections are folded in.
    """
    O = observability_matrix(x, u, geom, DUAL, order=3)
    H, HF, HF2, HF3 = (O[6 * k : 6 * k + 6] for k in range(4))
    At = x.A.T
    Ae1 = x.A @ geom.e1
    Ae2 = x.A @ geom.e2
    de = geom.baseline

    # -2 [de x] in the attitude columns
    r1 = At @ (H[0:3] - H[3:6])
    # e1^T [a x] and -e2^T [a x] in the attitude columns
    r2 = -0.5 * Ae1 @ HF2[0:3]
    r3 = 0.5 * Ae2 @ HF2[3:6]
    r4 = At @ H[0:3]
    r5 = At @ HF[0:3]
    # -[de x] in the bias columns
    r6 = At @ (HF[0:3] - HF[3:6])
    r7 = Ae1 @ HF3[0:3]
    r8 = -Ae2 @ HF3[3:6]
    intermediate = np.vstack([r1, r2, r3, r4, r5, r6, r7, r8])

    top = -0.5 * r1 + np.outer(de, r2 + r3)
    bottom = -(r6 + np.outer(de, r7 + r8))
    reduced = np.vstack([top, r4, r5, bottom])
    return reduced, intermediate


def mro_reduced_rank_check(
    x: StateEstimate, u: ImuSample, geom: SensorGeometry, rel_tol: float = DEFAULT_RANK_TOL
) -> bool:
    """True when the row-reduced matrix has the same numeric rank as the full one."""
    reduced, _ = mro_reduction(x, u, geom)
    O = observability_matrix(x, u, geom, DUAL, order=3)
    return numeric_rank(reduced, rel_tol) == numeric_rank(O, rel_tol)


def block_triangularize(reduced: np.ndarray, geom: SensorGeometry, a_hat) -> np.ndarray:
    """Add ``[e1 x] Pi^-1`` times the fourth block row to the third one.

    Requires an invertible ``Pi``; the third block row then has a zero bias block.

    Raises
    ------
    InvalidArgumentError
        If ``Pi`` is numerically singular (condition number above 1e12).
    """
    Pi = pi_matrix(geom, a_hat)
    if np.linalg.cond(Pi) > 1e12:
        raise InvalidArgumentError("Pi is singular; the reduced matrix cannot be block-triangularized")
    out = reduced.copy()
    out[6:9] += cross_matrix(geom.e1) @ np.linalg.solve(Pi, reduced[9:12])
    return out


def analyze(
    x: StateEstimate,
    u: ImuSample,
    geom: SensorGeometry,
    mode: str = DUAL,
    order: int = 3,
    rel_tol: float = DEFAULT_RANK_TOL,
    theta_warn: float = DEFAULT_THETA_WARN,
) -> ObservabilityReport:
    O = observability_matrix(x, u, geom, mode, order)
    s = np.linalg.svd(O, compute_uv=False)
    rank = int(np.count_nonzero(s >= rel_tol * s[0])) if s[0] > 0 else 0
    theta = alignment_angle(geom, u.u_a) if np.linalg.norm(u.u_a) > 0 else 0.0
    if mode == DUAL and theta < theta_warn:
        warnings.warn(
            f"baseline nearly parallel to specific force (theta = {theta:.4f} rad)",
            DegradedObservabilityWarning,
            stacklevel=2,
        )
    return ObservabilityReport(
        rank=rank,
        full_rank=rank == O.shape[1],
        theta=theta,
        smallest_singular_value=float(s[-1]) if len(s) >= O.shape[1] else 0.0,
        mode=mode,
    )
