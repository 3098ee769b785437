import numpy as np
import pytest
from conftest import random_input, random_state
from oracles import fd_error_dynamics, fd_measurement_jacobian

from dualfuse.errors import InvalidArgumentError
from dualfuse.models import (
    GpsFix,
    ImuSample,
    NoiseSpec,
    SensorGeometry,
    StateEstimate,
    continuous_dynamics,
    linearized_F,
    measurement_jacobian,
    noise_jacobian_G,
    predict_measurement,
)
from dualfuse.quat import cross_matrix, quat_from_axis_angle, quat_from_error


def test_predict_measurement_identity_pose():
    geom = SensorGeometry()
    x = StateEstimate()
    assert np.allclose(predict_measurement(x, geom), np.concatenate([geom.e1, geom.e2]))
    x.r = np.array([1.0, 2.0, 3.0])
    assert np.allclose(predict_measurement(x, geom), np.concatenate([geom.e1 + x.r, geom.e2 + x.r]))


def test_antenna_difference_is_rotated_baseline(rng):
    geom = SensorGeometry()
    for _ in range(20):
        x = random_state(rng)
        h = predict_measurement(x, geom)
        assert np.allclose(h[:3] - h[3:], x.A @ geom.baseline, atol=1e-12)
        assert np.linalg.norm(h[:3] - h[3:]) == pytest.approx(np.linalg.norm(geom.baseline), abs=1e-12)


def test_jacobian_blocks(rng):
    geom = SensorGeometry()
    H = measurement_jacobian(random_state(rng), geom)
    assert np.array_equal(H[:, 3:6], np.vstack([np.eye(3), np.eye(3)]))
    assert not H[:, 6:].any()
    zero_arm = SensorGeometry(e1=np.zeros(3), e2=np.array([-1.0, 0.0, 0.0]))
    assert not measurement_jacobian(random_state(rng), zero_arm)[0:3, 0:3].any()


def test_jacobian_matches_finite_differences(rng):
    geom = SensorGeometry(e1=[0.7, 0.2, -0.1], e2=[-0.4, 0.3, 0.2])
    for _ in range(20):
        x = random_state(rng)
        H = measurement_jacobian(x, geom)
        J = fd_measurement_jacobian(x, geom)
        assert np.linalg.norm(H - J) <= 1e-5 * np.linalg.norm(H)


def test_equilibrium_dynamics():
    geom = SensorGeometry()
    b = np.array([0.01, -0.02, 0.03])
    x = StateEstimate(q=quat_from_axis_angle([0, 0, 1], 0.7), b=b)
    u = ImuSample(0.0, -b, x.A.T @ geom.g)
    q_dot, r_dot, v_dot, b_dot = continuous_dynamics(x, u, geom)
    for d in (q_dot, r_dot, v_dot, b_dot):
        assert np.allclose(d, 0.0, atol=1e-15)


def test_free_fall():
    geom = SensorGeometry()
    _, _, v_dot, _ = continuous_dynamics(StateEstimate(), ImuSample(0.0, [0, 0, 0], [0, 0, 0]), geom)
    assert np.allclose(v_dot, -geom.g)


def test_quaternion_rate_is_tangent(rng):
    geom = SensorGeometry()
    for _ in range(10):
        x = random_state(rng)
        q_dot, *_ = continuous_dynamics(x, random_input(rng), geom)
        assert abs(q_dot @ x.q) < 1e-14


def test_F_zero_motion():
    x = StateEstimate()
    F = linearized_F(x, ImuSample(0.0, [0, 0, 0], [0, 0, 0]))
    expected = np.zeros((12, 12))
    expected[3:6, 6:9] = np.eye(3)
    expected[0:3, 9:12] = 0.5 * np.eye(3)
    assert np.array_equal(F, expected)


def test_F_matches_finite_differences(rng):
    geom = SensorGeometry()
    for _ in range(20):
        x, u = random_state(rng), random_input(rng)
        F = linearized_F(x, u)
        J = fd_error_dynamics(x, u, geom)
        assert np.linalg.norm(F - J) <= 1e-5 * np.linalg.norm(F)


def test_velocity_block_acts_on_attitude_error(rng):
    for _ in range(10):
        x, u = random_state(rng), random_input(rng)
        dq = rng.normal(size=3) * 1e-6
        direct = (x.A @ _rot(dq) - x.A) @ u.u_a
        lin = linearized_F(x, u)[6:9, 0:3] @ dq
        assert np.linalg.norm(lin - direct) <= 1e-4 * np.linalg.norm(direct)


def _rot(dqv):
    from dualfuse.quat import rotation_from_quat

    return rotation_from_quat(quat_from_error(dqv))


def test_noise_jacobian(rng):
    G = noise_jacobian_G(StateEstimate())
    assert np.array_equal(G[6:9, 3:6], np.eye(3))
    x = random_state(rng)
    G = noise_jacobian_G(x)
    GtG = G.T @ G
    assert np.allclose(GtG, np.diag([0.25] * 3 + [1.0] * 6), atol=1e-14)
    Q = G @ NoiseSpec().covariance() @ G.T
    assert np.allclose(Q, Q.T)
    assert np.linalg.eigvalsh(Q).min() >= -1e-18


def test_geometry_validation():
    with pytest.raises(InvalidArgumentError):
        SensorGeometry(e1=[0.1, 0, 0], e2=[0.1, 0, 0.0005])
    with pytest.raises(InvalidArgumentError):
        SensorGeometry(g=[0, 0, 1.62])
    assert SensorGeometry(g=[0, 0, 1.62], allow_any_gravity=True).g[2] == 1.62


def test_noise_spec_validation():
    with pytest.raises(InvalidArgumentError):
        NoiseSpec(sigma_g=0.0)


def test_gps_fix_rows():
    fix = GpsFix(0.0, [1, 0, 0], [np.nan] * 3, valid1=True, valid2=False)
    assert list(fix.valid_rows) == [0, 1, 2]
    with pytest.raises(InvalidArgumentError):
        GpsFix(0.0, [np.nan] * 3, [0, 0, 0])


def test_cross_matrix_consistency_in_H(rng):
    geom = SensorGeometry()
    x = random_state(rng)
    H = measurement_jacobian(x, geom)
    assert np.allclose(H[0:3, 0:3], -2 * x.A @ cross_matrix(geom.e1))
