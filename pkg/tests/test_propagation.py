import numpy as np
import pytest

from vlio.errors import (DataError, InsufficientSamples, NonMonotonicTimestamps, TimestampOutOfRange,
                         WindowTooShort)
from vlio.manifold import RigidTransform, is_rotation, so3_exp
from vlio.propagation import (GRAVITY, ImuSample, ImuWindow, NavState, NoiseParams, PoseTimeline,
                              RawScan, build_pose_timeline, initialize_state, propagate, undistort)
from vlio.sim import SensorRig, SimWorld, VibrationProfile, VibrationTerm, render_scan, synthesize_imu


def stationary_window(duration=1., rate=200., gyro=(0., 0., 0.)):
    t = np.arange(int(duration*rate) + 1)/rate
    n = len(t)
    return ImuWindow(t, np.tile(gyro, (n, 1)), np.tile([0., 0., GRAVITY], (n, 1)))


def test_from_samples():
    samples = [ImuSample(0.1*i, np.zeros(3), np.array([0., 0., GRAVITY])) for i in range(5)]
    w = ImuWindow.from_samples(samples)
    assert len(w) == 5
    assert w.duration == pytest.approx(0.4)
    assert w[2].t == pytest.approx(0.2)


def test_nonmonotonic_rejected():
    w = ImuWindow([0., 0.1, 0.1], np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(NonMonotonicTimestamps):
        w.check_monotonic()
    with pytest.raises(NonMonotonicTimestamps):
        propagate(NavState(), w, NoiseParams())


def test_between_places_endpoints():
    w = stationary_window()
    sub = w.between(0.1025, 0.2)
    assert sub.t[0] == pytest.approx(0.1025)
    assert sub.t[-1] == pytest.approx(0.2)
    assert np.all(np.diff(sub.t) > 0)
    with pytest.raises(WindowTooShort):
        w.between(0.5, 1.5)


def test_stationary_propagation():
    """zero gyro, accel = -g over 1 s: pose and velocity unchanged"""
    w = stationary_window()
    x0 = NavState()
    x1 = propagate(x0, w, NoiseParams())
    np.testing.assert_allclose(x1.rot, np.eye(3), atol=1.e-12)
    np.testing.assert_allclose(x1.pos, np.zeros(3), atol=1.e-12)
    np.testing.assert_allclose(x1.vel, np.zeros(3), atol=1.e-12)
    assert x1.t == pytest.approx(1.)


def test_constant_acceleration_closed_form():
    """1 m/s^2 along x for 1 s with gravity compensated: pos += 0.5 m, vel += 1 m/s"""
    t = np.arange(201)/200.
    w = ImuWindow(t, np.zeros((201, 3)), np.tile([1., 0., GRAVITY], (201, 1)))
    x0 = NavState(pos=[2., -1., 0.5], vel=[0.3, 0., 0.])
    x1 = propagate(x0, w, NoiseParams())
    np.testing.assert_allclose(x1.pos - x0.pos, [0.5 + 0.3, 0., 0.], atol=1.e-6)
    np.testing.assert_allclose(x1.vel - x0.vel, [1., 0., 0.], atol=1.e-6)
    np.testing.assert_allclose(x1.rot, np.eye(3), atol=1.e-12)


def test_constant_yaw_rate():
    """constant 0.1 rad/s yaw for 10 s: 1 rad about z"""
    w = stationary_window(duration=10., gyro=(0., 0., 0.1))
    x1 = propagate(NavState(), w, NoiseParams())
    np.testing.assert_allclose(x1.rot, so3_exp([0., 0., 1.]), atol=1.e-9)
    np.testing.assert_allclose(x1.pos, np.zeros(3), atol=1.e-9)


def test_covariance_grows_and_stays_symmetric():
    w = stationary_window()
    x0 = NavState()
    x1 = propagate(x0, w, NoiseParams())
    np.testing.assert_allclose(x1.cov, x1.cov.T)
    assert np.all(np.diag(x1.cov) >= np.diag(x0.cov) - 1.e-15)
    assert np.min(np.linalg.eigvalsh(x1.cov)) > 0


def test_gravity_magnitude_checked():
    with pytest.raises(DataError):
        NavState(gravity=[0., 0., -5.])


def test_initialize_level():
    x = initialize_state(stationary_window(gyro=(1.e-3, 0., -2.e-3)))
    np.testing.assert_allclose(x.rot, np.eye(3), atol=1.e-12)
    np.testing.assert_allclose(x.bias_gyro, [1.e-3, 0., -2.e-3])
    np.testing.assert_allclose(x.gravity, [0., 0., -GRAVITY])


def test_initialize_tilted():
    R = so3_exp([0.1, -0.05, 0.])
    t = np.arange(201)/200.
    f = R.T @ np.array([0., 0., GRAVITY])
    w = ImuWindow(t, np.zeros((201, 3)), np.tile(f, (201, 1)))
    x = initialize_state(w)
    # the initial attitude maps the measured specific force back onto +z
    np.testing.assert_allclose(x.rot @ f, [0., 0., GRAVITY], atol=1.e-9)
    assert is_rotation(x.rot)


def test_initialize_needs_samples():
    with pytest.raises(InsufficientSamples):
        initialize_state(ImuWindow([0.], np.zeros((1, 3)), [[0., 0., GRAVITY]]))


def test_timeline_identity():
    tl = PoseTimeline.identity(0., 0.1)
    R, p, v = tl.interpolate([0., 0.05, 0.1])
    np.testing.assert_allclose(R, np.stack([np.eye(3)]*3))
    np.testing.assert_allclose(p, np.zeros((3, 3)))
    with pytest.raises(TimestampOutOfRange):
        tl.interpolate(0.2)


def test_timeline_window_too_short():
    w = stationary_window(duration=0.05)
    with pytest.raises(WindowTooShort):
        build_pose_timeline(NavState(), w, 0.1)


def test_undistort_identity_timeline():
    """identity timeline: undistorted points equal raw points"""
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5., 5., size=(50, 3))
    scan = RawScan(0., pts, np.linspace(0., 0.099, 50))
    und = undistort(scan, PoseTimeline.identity(0., 0.1))
    np.testing.assert_allclose(und.points, pts, atol=1.e-12)


def test_undistort_t0_mismatch():
    scan = RawScan(0.5, np.ones((2, 3)), [0., 0.01])
    with pytest.raises(TimestampOutOfRange):
        undistort(scan, PoseTimeline.identity(0., 0.1))


def test_undistort_constant_translation():
    """pure 1 m/s x translation, point at dt = 0.05 s is shifted by 0.05 m in x"""
    tl = PoseTimeline([0., 0.1], np.stack([np.eye(3)]*2), [[0., 0., 0.], [0.1, 0., 0.]],
                      np.tile([1., 0., 0.], (2, 1)))
    scan = RawScan(0., [[2., 0., 0.]], [0.05])
    und = undistort(scan, tl)
    np.testing.assert_allclose(und.points, [[2.05, 0., 0.]], atol=1.e-12)


def test_timeline_matches_pitch_profile():
    """noiseless 1 kHz imu through a 2 Hz pitch vibration: timeline follows the true relative pose"""
    profile = VibrationProfile(terms=[VibrationTerm('pitch', np.radians(2.), 2.)],
                               lead_in=0., episode=2., lead_out=0., ramp=0.)
    rig = SensorRig(imu_rate=1000.)
    t0 = 0.5
    imu = synthesize_imu(profile, rig, 0., 1., noiseless=True)
    from vlio.sim import trajectory_at
    rot, pos, vel, _, _ = trajectory_at(profile, [t0, t0 + 0.1])
    x = NavState(rot=rot[0], pos=pos[0], vel=vel[0], t=t0)
    tl = build_pose_timeline(x, imu, t0 + 0.1)
    R_rel = rot[0].T @ rot[1]
    p_rel = rot[0].T @ (pos[1] - pos[0])
    np.testing.assert_allclose(tl.rot[-1], R_rel, atol=1.e-6)
    np.testing.assert_allclose(tl.pos[-1], p_rel, atol=1.e-5)


def test_undistort_matches_ground_truth():
    """noiseless 1 kHz imu, noiseless beams: undistorted points match simulator truth within 1 mm"""
    profile = VibrationProfile(terms=[VibrationTerm('pitch', np.radians(2.), 2.),
                                      VibrationTerm('z', 0.02, 1.)],
                               lead_in=0., episode=2., lead_out=0., ramp=0.)
    rig = SensorRig(imu_rate=1000., channels=4, columns=90)
    world = SimWorld.room()
    t0 = 0.3
    imu = synthesize_imu(profile, rig, 0., 1., noiseless=True)
    from vlio.sim import trajectory_at
    rot, pos, vel, _, _ = trajectory_at(profile, t0)
    x = NavState(rot=rot[0], pos=pos[0], vel=vel[0], t=t0)
    raw, truth = render_scan(world, profile, rig, t0, noiseless=True)
    tl = build_pose_timeline(x, imu, t0 + rig.scan_period)
    und = undistort(raw, tl, rig.extrinsics)
    assert len(und) > 100
    err = np.linalg.norm(und.points - truth.points, axis=-1)
    assert np.max(err) < 1.e-3


def test_raw_scan_subsample():
    scan = RawScan(0., np.arange(30.).reshape(10, 3), np.arange(10)*0.01)
    sub = scan.subsample(4)
    assert len(sub) == 3
    np.testing.assert_allclose(sub.dt, [0., 0.04, 0.08])
    with pytest.raises(DataError):
        scan.subsample(0)


def test_extrinsics_roundtrip_static():
    """static timeline with extrinsics leaves points unchanged"""
    ext = RigidTransform(so3_exp([0., 0., 0.3]), [0.1, -0.2, 0.05])
    scan = RawScan(0., [[1., 2., 3.], [-1., 0., 2.]], [0., 0.05])
    und = undistort(scan, PoseTimeline.identity(0., 0.1), ext)
    np.testing.assert_allclose(und.points, scan.points, atol=1.e-12)
    np.testing.assert_allclose(und.rot, np.stack([np.eye(3)]*2), atol=1.e-12)
