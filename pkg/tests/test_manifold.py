import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from vlio.manifold import (POS, ROT, STATE_DIM, RigidTransform, boxplus_jacobian, from_small_angles,
                           is_rotation, nearest_rotation, skew, so3_exp, so3_log, so3_right_jacobian,
                           so3_right_jacobian_inv, state_boxminus, state_boxplus, vee)
from vlio.propagation import NavState


def random_state(rng):
    return NavState(rot=so3_exp(rng.normal(size=3)), pos=rng.normal(size=3), vel=rng.normal(size=3),
                    bias_gyro=0.01*rng.normal(size=3), bias_accel=0.1*rng.normal(size=3))


def test_skew_vee():
    v = np.array([1., -2., 3.])
    S = skew(v)
    np.testing.assert_array_equal(S, -S.T)
    np.testing.assert_allclose(S @ np.array([0.5, 4., -1.]), np.cross(v, [0.5, 4., -1.]))
    np.testing.assert_allclose(vee(S), v)


def test_skew_batched():
    v = np.arange(12.).reshape(4, 3)
    S = skew(v)
    assert S.shape == (4, 3, 3)
    np.testing.assert_allclose(S[2], skew(v[2]))


@pytest.mark.parametrize(
    "phi",
    [
        np.zeros(3),
        np.array([1.e-10, 0., 0.]),
        np.array([0.3, -0.2, 0.1]),
        np.array([0., 0., 3.]),
        np.array([1., 1., 1.]),
    ],
)
def test_exp_matches_scipy(phi):
    np.testing.assert_allclose(so3_exp(phi), Rotation.from_rotvec(phi).as_matrix(), atol=1.e-12)


def test_exp_zero_is_identity():
    np.testing.assert_array_equal(so3_exp(np.zeros(3)), np.eye(3))


def test_log_of_exp():
    rng = np.random.default_rng(1)
    for _ in range(100):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        phi = axis*rng.uniform(0., np.pi - 1.e-3)
        np.testing.assert_allclose(so3_log(so3_exp(phi)), phi, atol=1.e-9)


def test_log_at_pi():
    R = so3_exp(np.array([0., 0., np.pi]))
    phi = so3_log(R)
    assert np.linalg.norm(phi) == pytest.approx(np.pi)
    np.testing.assert_allclose(so3_exp(phi), R, atol=1.e-9)


def test_exp_is_rotation():
    rng = np.random.default_rng(2)
    R = so3_exp(rng.normal(size=(50, 3)))
    for r in R:
        assert is_rotation(r)


def test_exp_rejects_nonfinite():
    with pytest.raises(Exception):
        so3_exp(np.array([np.nan, 0., 0.]))


def test_small_angles_orthonormalized():
    R = from_small_angles(np.array([0.01, -0.02, 0.005]))
    assert is_rotation(R, tol=1.e-12)


def test_small_angles_close_to_exp():
    """|from_small_angles(d) - Exp(d)|_F <= |d|^2 for |d| <= 0.1"""
    rng = np.random.default_rng(8)
    d = rng.normal(size=(500, 3))
    d *= (0.1*rng.random(500)/np.linalg.norm(d, axis=-1))[:, None]
    diff = np.linalg.norm(from_small_angles(d) - so3_exp(d), axis=(-2, -1))
    assert np.all(diff <= np.sum(d**2, axis=-1))


def test_small_angles_zero():
    np.testing.assert_allclose(from_small_angles(np.zeros(3)), np.eye(3), atol=1.e-15)


def test_small_angles_raw():
    M = from_small_angles(np.array([0.1, 0., 0.]), orthonormalize=False)
    assert not is_rotation(M)


def test_nearest_rotation_of_rotation():
    R = so3_exp(np.array([0.4, 0.1, -0.7]))
    np.testing.assert_allclose(nearest_rotation(R), R, atol=1.e-12)


def test_right_jacobian_inverse():
    for phi in (np.zeros(3), np.array([1.e-9, 0., 0.]), np.array([0.5, -1., 0.3])):
        np.testing.assert_allclose(so3_right_jacobian(phi) @ so3_right_jacobian_inv(phi), np.eye(3),
                                   atol=1.e-9)


def test_right_jacobian_first_order():
    # Exp(phi + d) ~ Exp(phi) Exp(Jr(phi) d)
    phi = np.array([0.3, -0.4, 0.8])
    d = 1.e-6*np.array([1., 2., -1.])
    lhs = so3_exp(phi + d)
    rhs = so3_exp(phi) @ so3_exp(so3_right_jacobian(phi) @ d)
    np.testing.assert_allclose(lhs, rhs, atol=1.e-11)


def test_rotated_point_derivative():
    """d/de [Exp(e u) p] at e = 0 is -skew(p) u"""
    rng = np.random.default_rng(5)
    h = 1.e-6
    for _ in range(20):
        u, p = rng.normal(size=(2, 3))
        fd = (so3_exp(h*u) @ p - so3_exp(-h*u) @ p)/(2*h)
        np.testing.assert_allclose(fd, -skew(p) @ u, atol=1.e-6)


def test_boxplus_zero():
    rng = np.random.default_rng(3)
    x = random_state(rng)
    y = state_boxplus(x, np.zeros(STATE_DIM))
    np.testing.assert_array_equal(y.rot, x.rot)
    np.testing.assert_array_equal(y.pos, x.pos)


def test_boxminus_of_boxplus():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = random_state(rng)
        d = 0.3*rng.normal(size=STATE_DIM)
        np.testing.assert_allclose(state_boxminus(state_boxplus(x, d), x), d, atol=1.e-9)


def test_boxplus_of_boxminus():
    rng = np.random.default_rng(5)
    x = random_state(rng)
    y = state_boxplus(x, 0.5*rng.normal(size=STATE_DIM))
    z = state_boxplus(x, state_boxminus(y, x))
    np.testing.assert_allclose(z.rot, y.rot, atol=1.e-9)
    np.testing.assert_allclose(z.pos, y.pos, atol=1.e-12)


def test_boxplus_rejects_bad_delta():
    x = NavState()
    with pytest.raises(Exception):
        state_boxplus(x, np.zeros(14))
    with pytest.raises(Exception):
        state_boxplus(x, np.full(STATE_DIM, np.inf))


def test_boxplus_jacobian_finite_difference():
    rng = np.random.default_rng(6)
    x = random_state(rng)
    xhat = state_boxplus(x, 0.2*rng.normal(size=STATE_DIM))
    err = state_boxminus(x, xhat)
    J = boxplus_jacobian(err)
    h = 1.e-6
    Jfd = np.zeros((STATE_DIM, STATE_DIM))
    for k in range(STATE_DIM):
        e = np.zeros(STATE_DIM)
        e[k] = h
        Jfd[:, k] = (state_boxminus(state_boxplus(x, e), xhat)
                     - state_boxminus(state_boxplus(x, -e), xhat))/(2*h)
    np.testing.assert_allclose(J, Jfd, atol=1.e-6)
    np.testing.assert_allclose(J[POS, POS], np.eye(3))
    assert J[ROT, ROT].shape == (3, 3)


def test_rigid_transform():
    T = RigidTransform(so3_exp([0., 0., np.pi/2]), [1., 0., 0.])
    np.testing.assert_allclose(T.apply([1., 0., 0.]), [1., 1., 0.], atol=1.e-12)
    np.testing.assert_allclose(T.compose(T.inverse()).as_matrix(), np.eye(4), atol=1.e-12)
    np.testing.assert_allclose(RigidTransform.from_matrix(T.as_matrix()).translation, T.translation)
