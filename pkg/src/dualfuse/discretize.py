"""Discrete transition matrix and process-noise covariance over one GPS interval.

With ``W = [omega x]`` constant over the interval, the attitude block of
``expm(F tau)`` and its repeated time integrals all have the form::

    Lambda_n(tau) = sum_k (-tau W)^k tau^n / (k + n)!
                  = tau^n / n! I + b_n W + c_n W^2

``Lambda_0`` is the attitude-attitude block and ``Lambda_1`` its integral.
The exact transition matrix needs ``Lambda_0`` through ``Lambda_3``:

====================  ==========================
attitude / attitude   Lambda_0
attitude / bias       Lambda_1 / 2
position / attitude   C Lambda_2
position / position   I
position / velocity   tau I
position / bias       C Lambda_3 / 2
velocity / attitude   C Lambda_1
velocity / velocity   I
velocity / bias       C Lambda_2 / 2
bias / bias           I
====================  ==========================

with ``C = -2 A [a x]``. A compact block form that drops the
position/position and velocity/velocity identities, the position/attitude
and the two bias couplings, and uses ``-A [a x] Lambda_1`` for the
velocity/attitude block, disagrees with ``expm(F tau)``; the exact form above
is what :func:`state_transition` returns.
"""

from __future__ import annotations

from math import cos, factorial, sin

import numpy as np
from scipy.linalg import expm

from .models import (
    ATT,
    BIAS,
    N_ERR,
    POS,
    VEL,
    ImuSample,
    NoiseSpec,
    StateEstimate,
    linearized_F,
    noise_jacobian_G,
)
from .quat import cross_matrix

SERIES_THRESHOLD = 1.0
_SERIES_TERMS = 16


def _s(j: int, x: float) -> float:
    """``sum_m (-x^2)^m / (2m + j)!`` for j in 1..5."""
    if x < SERIES_THRESHOLD:
        x2 = x * x
        term = 1.0 / factorial(j)
        total = term
        for m in range(1, _SERIES_TERMS):
            term *= -x2 / ((2 * m + j - 1) * (2 * m + j))
            total += term
        return total
    if j == 1:
        return sin(x) / x
    if j == 2:
        return (1.0 - cos(x)) / x**2
    if j == 3:
        return (x - sin(x)) / x**3
    if j == 4:
        return (x * x / 2.0 - 1.0 + cos(x)) / x**4
    if j == 5:
        return (x**3 / 6.0 - x + sin(x)) / x**5
    raise ValueError(f"unsupported series index {j}")


def lambda_n(omega, tau: float, n: int) -> np.ndarray:
    """n-th repeated time integral of ``expm(-[omega x] tau)`` (n = 0..3)."""
    omega = np.asarray(omega, dtype=float)
    W = cross_matrix(omega)
    x = float(np.linalg.norm(omega)) * tau
    a = tau**n / factorial(n)
    b = -(tau ** (n + 1)) * _s(n + 1, x)
    c = tau ** (n + 2) * _s(n + 2, x)
    return a * np.eye(3) + b * W + c * (W @ W)


def lambda_matrix(omega, tau: float) -> np.ndarray:
    """``I - sin(|w| t)/|w| [w x] + (1 - cos(|w| t))/|w|^2 [w x]^2``."""
    return lambda_n(omega, tau, 0)


def lambda_prime(omega, tau: float) -> np.ndarray:
    """``I t + (cos(|w| t) - 1)/|w|^2 [w x] + (|w| t - sin(|w| t))/|w|^3 [w x]^2``."""
    return lambda_n(omega, tau, 1)


def _operating_point(x: StateEstimate, u_avg: ImuSample):
    return u_avg.u_g + x.b, u_avg.u_a, x.A


def transition_from(omega, a_hat, A_hat, tau: float) -> np.ndarray:
    L0, L1, L2, L3 = (lambda_n(omega, tau, n) for n in range(4))
    C = -2.0 * A_hat @ cross_matrix(a_hat)
    Phi = np.eye(N_ERR)
    Phi[ATT, ATT] = L0
    Phi[ATT, BIAS] = 0.5 * L1
    Phi[POS, ATT] = C @ L2
    Phi[POS, VEL] = tau * np.eye(3)
    Phi[POS, BIAS] = 0.5 * C @ L3
    Phi[VEL, ATT] = C @ L1
    Phi[VEL, BIAS] = 0.5 * C @ L2
    return Phi


def state_transition(x: StateEstimate, u_avg: ImuSample, tau: float) -> np.ndarray:
    """Exact ``expm(F tau)`` for the error dynamics linearized at ``x`` and ``u_avg``."""
    omega, a_hat, A_hat = _operating_point(x, u_avg)
    return transition_from(omega, a_hat, A_hat, tau)


def process_noise_closed(x: StateEstimate, u_avg: ImuSample, tau: float, n: NoiseSpec) -> np.ndarray:
    """First-order closed-form process noise covariance over ``tau``.

    Only the lower blocks are defined by the closed form; the upper blocks are
    their transposes and the result is symmetrized.
    """
    omega, a_hat, A = _operating_point(x, u_avg)
    sg2, sa2, sb2 = n.sigma_g**2, n.sigma_a**2, n.sigma_b**2
    I3 = np.eye(3)
    W = cross_matrix(omega)
    Ca = cross_matrix(a_hat)
    ACa = A @ Ca
    t, t2, t3 = tau, tau * tau, tau**3

    q11 = (sb2 * t3 / 12.0 + sg2 * t / 6.0) * I3 - sg2 * t3 / 12.0 * (W @ W)
    q31 = sg2 * t / 4.0 * I3 + sg2 * t2 / 8.0 * (W - 2.0 * ACa) - sg2 * t3 / 6.0 * (ACa @ W)
    q33 = (sa2 + sg2 / 4.0) * t * I3 - sg2 * t3 / 3.0 * (ACa @ A.T) + sg2 * t2 / 4.0 * (Ca @ A.T - ACa)
    q41 = 0.25 * sb2 * t2 * I3
    q44 = sb2 * t * I3

    Q = np.zeros((N_ERR, N_ERR))
    Q[ATT, ATT] = q11
    Q[VEL, ATT] = q31
    Q[ATT, VEL] = q31.T
    Q[VEL, VEL] = q33
    Q[BIAS, ATT] = q41
    Q[ATT, BIAS] = q41.T
    Q[BIAS, BIAS] = q44
    return 0.5 * (Q + Q.T)


def process_noise_quadrature(
    x: StateEstimate, u_avg: ImuSample, tau: float, n: NoiseSpec, steps: int = 64
) -> np.ndarray:
    """Composite Simpson evaluation of ``int_0^tau Phi(s) G Sigma G^T Phi(s)^T ds``."""
    if steps < 16:
        raise ValueError("quadrature needs at least 16 steps")
    if steps % 2:
        steps += 1
    omega, a_hat, A_hat = _operating_point(x, u_avg)
    G = noise_jacobian_G(x)
    GSG = G @ n.covariance() @ G.T
    h = tau / steps
    Q = np.zeros((N_ERR, N_ERR))
    for i in range(steps + 1):
        w = 1.0 if i in (0, steps) else (4.0 if i % 2 else 2.0)
        Phi = transition_from(omega, a_hat, A_hat, i * h)
        Q += w * (Phi @ GSG @ Phi.T)
    Q *= h / 3.0
    return 0.5 * (Q + Q.T)


def process_noise_van_loan(x: StateEstimate, u_avg: ImuSample, tau: float, n: NoiseSpec):
    """Exact ``(Phi, Q)`` from one matrix exponential of the Van Loan block matrix."""
    F = linearized_F(x, u_avg)
    G = noise_jacobian_G(x)
    M = np.zeros((2 * N_ERR, 2 * N_ERR))
    M[:N_ERR, :N_ERR] = -F
    M[:N_ERR, N_ERR:] = G @ n.covariance() @ G.T
    M[N_ERR:, N_ERR:] = F.T
    E = expm(M * tau)
    Phi = E[N_ERR:, N_ERR:].T
    Q = Phi @ E[:N_ERR, N_ERR:]
    return Phi, 0.5 * (Q + Q.T)
