# IMU forward propagation of the filter state and its covariance, the
# intra-scan pose timeline and point undistortion to scan start
#
# the integrator is the midpoint rule between consecutive IMU samples, shared
# by propagate() and build_pose_timeline() so both see the same kinematics

import logging
from dataclasses import dataclass

import numpy as np

from vlio.errors import (DataError, InsufficientSamples, NonMonotonicTimestamps,
                         TimestampOutOfRange, WindowTooShort)
from vlio.manifold import (BA, BG, POS, ROT, STATE_DIM, VEL, RigidTransform, skew,
                           so3_exp, so3_log, so3_right_jacobian)

logger = logging.getLogger(__name__)

GRAVITY = 9.81
GRAVITY_RANGE = (9.5, 10.1)
TTOL = 1.e-9  # timestamp tolerance, s
INIT_DURATION = 1.  # stationary averaging window, s

# initial error covariance diagonal, [dtheta, dp, dv, dbg, dba]
INIT_COV_ROT = 1.e-4
INIT_COV_POS = 1.e-4
INIT_COV_VEL = 1.e-2
INIT_COV_BG = 1.e-4
INIT_COV_BA = 1.e-3


@dataclass
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass
class NoiseParams:
    """continuous-time noise densities used for covariance propagation"""
    sigma_gyro: float = 0.01
    sigma_accel: float = 0.1
    sigma_bias_gyro_walk: float = 1.e-4
    sigma_bias_accel_walk: float = 1.e-3

    def __post_init__(self):
        for name in ('sigma_gyro', 'sigma_accel', 'sigma_bias_gyro_walk', 'sigma_bias_accel_walk'):
            if not getattr(self, name) >= 0:
                raise DataError("NoiseParams.%s should be >= 0!" % name)

    def process_noise(self):
        """diagonal Q per second, in error-state order"""
        q = np.zeros(STATE_DIM)
        q[ROT] = self.sigma_gyro**2
        q[VEL] = self.sigma_accel**2
        q[BG] = self.sigma_bias_gyro_walk**2
        q[BA] = self.sigma_bias_accel_walk**2
        return np.diag(q)


class ImuWindow(object):
    """timestamped gyro + accel readings, stored as arrays"""

    def __init__(self, t, gyro, accel):
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.gyro = np.asarray(gyro, dtype=float).reshape(-1, 3)
        self.accel = np.asarray(accel, dtype=float).reshape(-1, 3)
        if not (len(self.t) == len(self.gyro) == len(self.accel)):
            raise DataError("imu t, gyro, accel have different lengths!")
        return

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        return cls([s.t for s in samples],
                   np.array([s.gyro for s in samples]).reshape(-1, 3),
                   np.array([s.accel for s in samples]).reshape(-1, 3))

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        return ImuSample(self.t[i], self.gyro[i].copy(), self.accel[i].copy())

    @property
    def duration(self):
        return self.t[-1] - self.t[0] if len(self.t) else 0.

    def check_monotonic(self):
        if len(self.t) == 0:
            raise InsufficientSamples("imu window is empty!")
        if np.any(np.diff(self.t) <= 0):
            raise NonMonotonicTimestamps("imu timestamps not strictly increasing!")

    def interpolate(self, tq):
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        gyro = np.stack([np.interp(tq, self.t, self.gyro[:, k]) for k in range(3)], axis=-1)
        accel = np.stack([np.interp(tq, self.t, self.accel[:, k]) for k in range(3)], axis=-1)
        return gyro, accel

    def between(self, t0, t1):
        """samples in [t0, t1] with linearly interpolated samples placed exactly at t0 and t1"""
        self.check_monotonic()
        if t1 < t0:
            raise DataError("between needs t1 >= t0!")
        if t0 < self.t[0] - TTOL or t1 > self.t[-1] + TTOL:
            raise WindowTooShort("imu data [%.6f, %.6f] does not cover [%.6f, %.6f]!"
                                 % (self.t[0], self.t[-1], t0, t1))
        inner = (self.t > t0 + TTOL) & (self.t < t1 - TTOL)
        ends = np.array([t0, t1]) if t1 - t0 > TTOL else np.array([t0])
        g_ends, a_ends = self.interpolate(ends)
        t = np.concatenate([ends[:1], self.t[inner], ends[1:]])
        gyro = np.concatenate([g_ends[:1], self.gyro[inner], g_ends[1:]])
        accel = np.concatenate([a_ends[:1], self.accel[inner], a_ends[1:]])
        return ImuWindow(t, gyro, accel)


class NavState(object):
    """full filter state: rotation, position, velocity, biases, gravity and error covariance"""

    def __init__(self, rot=None, pos=None, vel=None, bias_gyro=None, bias_accel=None,
                 gravity=None, cov=None, t=0.):
        self.rot = np.eye(3) if rot is None else np.array(rot, dtype=float)
        self.pos = np.zeros(3) if pos is None else np.array(pos, dtype=float)
        self.vel = np.zeros(3) if vel is None else np.array(vel, dtype=float)
        self.bias_gyro = np.zeros(3) if bias_gyro is None else np.array(bias_gyro, dtype=float)
        self.bias_accel = np.zeros(3) if bias_accel is None else np.array(bias_accel, dtype=float)
        self.gravity = np.array([0., 0., -GRAVITY]) if gravity is None else np.array(gravity, dtype=float)
        self.cov = default_covariance() if cov is None else np.array(cov, dtype=float)
        self.t = float(t)

        gnorm = np.linalg.norm(self.gravity)
        if not (GRAVITY_RANGE[0] <= gnorm <= GRAVITY_RANGE[1]):
            raise DataError("gravity magnitude %f outside [%.1f, %.1f]!" % (gnorm, *GRAVITY_RANGE))
        if self.cov.shape != (STATE_DIM, STATE_DIM):
            raise DataError("NavState covariance should be 15x15!")
        return

    def copy(self):
        return NavState(self.rot, self.pos, self.vel, self.bias_gyro, self.bias_accel,
                        self.gravity, self.cov, self.t)

    def pose(self):
        """world-from-imu transform"""
        return RigidTransform(self.rot, self.pos)

    def __repr__(self):
        return ("NavState(t=%.6f, pos=%s, vel=%s, rotvec=%s)"
                % (self.t, np.array2string(self.pos, precision=4),
                   np.array2string(self.vel, precision=4),
                   np.array2string(so3_log(self.rot), precision=4)))


def default_covariance():
    d = np.zeros(STATE_DIM)
    d[ROT] = INIT_COV_ROT
    d[POS] = INIT_COV_POS
    d[VEL] = INIT_COV_VEL
    d[BG] = INIT_COV_BG
    d[BA] = INIT_COV_BA
    return np.diag(d)


def initialize_state(window, init_duration=INIT_DURATION, t=None):
    """gravity, initial attitude and gyro bias from a stationary stretch of imu data

    the world frame G is level (gravity along -z) with zero yaw at the start
    """
    window.check_monotonic()
    mask = window.t <= window.t[0] + init_duration + TTOL
    if np.sum(mask) < 2:
        raise InsufficientSamples("need at least 2 imu samples for initialization!")

    f_mean = np.mean(window.accel[mask], axis=0)
    bg = np.mean(window.gyro[mask], axis=0)
    gnorm = np.linalg.norm(f_mean)
    if not (GRAVITY_RANGE[0] <= gnorm <= GRAVITY_RANGE[1]):
        raise DataError("stationary accel magnitude %f is not gravity; is the platform at rest?" % gnorm)

    # minimal rotation taking the measured up direction onto +z
    up = f_mean/gnorm
    axis = np.cross(up, [0., 0., 1.])
    sth = np.linalg.norm(axis)
    angle = np.arctan2(sth, up[2])
    rot0 = so3_exp(axis/sth*angle) if sth > 1.e-12 else np.eye(3)

    state = NavState(rot=rot0, bias_gyro=bg, gravity=[0., 0., -gnorm],
                     t=window.t[0] if t is None else t)
    logger.info("initialized: |g| = %.4f m/s^2, gyro bias = %s, tilt = %.3f deg",
                gnorm, np.array2string(bg, precision=5), np.degrees(angle))
    return state


def _integrate_step(R, p, v, w, a, g, dt):
    """midpoint step: returns the new (R, p, v) and the increment dR"""
    dR = so3_exp(w*dt)
    Rmid = R @ so3_exp(0.5*w*dt)
    acc = Rmid @ a + g
    p_new = p + v*dt + 0.5*acc*dt*dt
    v_new = v + acc*dt
    return R @ dR, p_new, v_new, dR


def _with_state_start(state, window):
    """prepend a held first sample if the window starts after the state time"""
    window.check_monotonic()
    if window.t[0] < state.t - TTOL:
        raise NonMonotonicTimestamps("imu window starts at %.6f before state time %.6f!"
                                     % (window.t[0], state.t))
    if window.t[0] > state.t + TTOL:
        return ImuWindow(np.concatenate([[state.t], window.t]),
                         np.concatenate([window.gyro[:1], window.gyro]),
                         np.concatenate([window.accel[:1], window.accel]))
    return window


def propagate(state, window, noise):
    """propagate mean and covariance through the imu window (no measurement update)"""
    window = _with_state_start(state, window)
    x = state.copy()
    Qc = noise.process_noise()
    I3 = np.eye(3)

    for i in range(len(window) - 1):
        dt = window.t[i+1] - window.t[i]
        w = 0.5*(window.gyro[i] + window.gyro[i+1]) - x.bias_gyro
        a = 0.5*(window.accel[i] + window.accel[i+1]) - x.bias_accel

        # error-state jacobian of the transition
        F = np.eye(STATE_DIM)
        F[ROT, ROT] = so3_exp(-w*dt)
        F[ROT, BG] = -so3_right_jacobian(w*dt)*dt
        F[POS, VEL] = I3*dt
        F[VEL, ROT] = -x.rot @ skew(a)*dt
        F[VEL, BA] = -x.rot*dt

        P = F @ x.cov @ F.T + Qc*dt
        x.cov = 0.5*(P + P.T)
        x.rot, x.pos, x.vel, _ = _integrate_step(x.rot, x.pos, x.vel, w, a, x.gravity, dt)

    x.t = window.t[-1]
    return x


class PoseTimeline(object):
    """imu poses over one scan, relative to the scan-start imu frame"""

    def __init__(self, t, rot, pos, vel, origin=None, gravity=None):
        self.t = np.asarray(t, dtype=float)
        self.rot = np.asarray(rot, dtype=float)
        self.pos = np.asarray(pos, dtype=float)
        self.vel = np.asarray(vel, dtype=float)
        self.origin = RigidTransform() if origin is None else origin  # world-from-start pose
        # gravity in the scan-start imu frame; None for timelines not integrated from a state
        self.gravity = None if gravity is None else np.asarray(gravity, dtype=float)
        if len(self.t) < 2:
            raise WindowTooShort("a pose timeline needs at least two samples!")
        if np.any(np.diff(self.t) <= 0):
            raise NonMonotonicTimestamps("timeline timestamps not strictly increasing!")
        self._steps = None
        return

    @classmethod
    def identity(cls, t0, t1, vel=None):
        v = np.zeros(3) if vel is None else np.asarray(vel, dtype=float)
        return cls([t0, t1], np.stack([np.eye(3)]*2), np.zeros((2, 3)), np.stack([v, v]))

    @property
    def t0(self):
        return self.t[0]

    @property
    def t_end(self):
        return self.t[-1]

    def __len__(self):
        return len(self.t)

    def interpolate(self, tq):
        """first-order rotation and linear translation/velocity interpolation"""
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        if np.any(tq < self.t[0] - TTOL) or np.any(tq > self.t[-1] + TTOL):
            raise TimestampOutOfRange("query time outside timeline [%.6f, %.6f]!"
                                      % (self.t[0], self.t[-1]))
        if self._steps is None:
            self._steps = np.array([so3_log(self.rot[i].T @ self.rot[i+1])
                                    for i in range(len(self.t) - 1)])

        i = np.clip(np.searchsorted(self.t, tq, side='right') - 1, 0, len(self.t) - 2)
        alpha = np.clip((tq - self.t[i])/(self.t[i+1] - self.t[i]), 0., 1.)
        R = self.rot[i] @ so3_exp(alpha[:, None]*self._steps[i])
        p = (1. - alpha)[:, None]*self.pos[i] + alpha[:, None]*self.pos[i+1]
        v = (1. - alpha)[:, None]*self.vel[i] + alpha[:, None]*self.vel[i+1]
        return R, p, v


def build_pose_timeline(state, window, t_end=None):
    """integrate bias-corrected imu over [state.t, t_end] relative to the scan-start frame"""
    t0 = state.t
    window.check_monotonic()
    if t_end is None:
        t_end = window.t[-1]
    if window.t[0] > t0 + TTOL or window.t[-1] < t_end - TTOL:
        raise WindowTooShort("imu window [%.6f, %.6f] does not cover scan [%.6f, %.6f]!"
                             % (window.t[0], window.t[-1], t0, t_end))
    win = window.between(t0, t_end)
    M = len(win)

    # gravity and velocity expressed in the scan-start imu frame
    g0 = state.rot.T @ state.gravity
    rot = np.zeros((M, 3, 3))
    pos = np.zeros((M, 3))
    vel = np.zeros((M, 3))
    rot[0] = np.eye(3)
    vel[0] = state.rot.T @ state.vel

    for i in range(M - 1):
        dt = win.t[i+1] - win.t[i]
        w = 0.5*(win.gyro[i] + win.gyro[i+1]) - state.bias_gyro
        a = 0.5*(win.accel[i] + win.accel[i+1]) - state.bias_accel
        rot[i+1], pos[i+1], vel[i+1], _ = _integrate_step(rot[i], pos[i], vel[i], w, a, g0, dt)

    return PoseTimeline(win.t, rot, pos, vel, origin=state.pose(), gravity=g0)


class RawScan(object):
    """lidar points in the sensor frame at their own firing time; dt is relative to t0"""

    def __init__(self, t0, points, dt):
        self.t0 = float(t0)
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.dt = np.asarray(dt, dtype=float).reshape(-1)
        if len(self.points) != len(self.dt):
            raise DataError("scan points and timestamps have different lengths!")
        return

    def __len__(self):
        return len(self.points)

    def subsample(self, stride):
        """keep every stride-th point in firing order"""
        if stride < 1:
            raise DataError("downsample stride should be >= 1!")
        return RawScan(self.t0, self.points[::stride], self.dt[::stride])


class UndistortedScan(object):
    """points aligned to scan start t0, with the per-point undistortion rotation

    drift is the part of each point's undistortion translation that comes from the
    scan-start velocity and gravity, v0 dt + g0 dt^2 / 2 in the scan-start imu frame.
    It is None when the scan was not undistorted with a state-integrated timeline.
    """

    def __init__(self, t0, points, raw, dt, rot, trans=None, cov=None, drift=None):
        self.t0 = float(t0)
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.raw = np.asarray(raw, dtype=float).reshape(-1, 3)
        self.dt = np.asarray(dt, dtype=float).reshape(-1)
        self.rot = np.asarray(rot, dtype=float).reshape(-1, 3, 3)
        self.trans = np.zeros_like(self.points) if trans is None else np.asarray(trans, dtype=float).reshape(-1, 3)
        self.cov = None if cov is None else np.asarray(cov, dtype=float).reshape(-1, 3, 3)
        self.drift = None if drift is None else np.asarray(drift, dtype=float).reshape(-1, 3)
        return

    def __len__(self):
        return len(self.points)

    def subset(self, idx):
        return UndistortedScan(self.t0, self.points[idx], self.raw[idx], self.dt[idx],
                               self.rot[idx], self.trans[idx],
                               None if self.cov is None else self.cov[idx],
                               None if self.drift is None else self.drift[idx])


def undistort(scan, timeline, extrinsics=None):
    """align every point of a raw scan to the scan-start lidar frame"""
    if abs(scan.t0 - timeline.t0) > 1.e-6:
        raise TimestampOutOfRange("scan t0 %.6f does not match timeline start %.6f!"
                                  % (scan.t0, timeline.t0))
    if np.any(scan.dt < 0):
        raise TimestampOutOfRange("negative point time offset!")
    ext = RigidTransform() if extrinsics is None else extrinsics
    R_il, t_il = ext.rotation, ext.translation

    R_i, T_i, _ = timeline.interpolate(timeline.t0 + scan.dt)

    # lidar(t_j) -> imu(t_j) -> imu(t0) -> lidar(t0)
    p_imu = scan.points @ R_il.T + t_il
    p_imu0 = np.einsum('nij,nj->ni', R_i, p_imu) + T_i
    points = (p_imu0 - t_il) @ R_il

    rot = np.einsum('ji,njk,kl->nil', R_il, R_i, R_il)
    trans = (np.einsum('nij,j->ni', R_i, t_il) + T_i - t_il) @ R_il

    drift = None
    if timeline.gravity is not None:
        dt = scan.dt[:, None]
        drift = timeline.vel[0]*dt + 0.5*timeline.gravity*dt*dt
    return UndistortedScan(scan.t0, points, scan.points.copy(), scan.dt.copy(), rot, trans, drift=drift)
