# deterministic vibration simulator: planar-patch world, closed-form vibrating
# trajectory, raycast spinning lidar with per-beam timestamps and a discretized
# noisy imu
#
# the body frame is the imu frame. a profile is a base motion (static, constant
# velocity, circle or waypoint spline) plus sinusoidal vibration terms on the
# six pose axes, all multiplied by a C2 episode envelope E(t):
#
#   t in [0, lead_in)                    : at rest
#   t in [lead_in, lead_in + episode]    : E ramps 0 -> 1 -> 0 (quintic smoothstep)
#   t in (lead_in + episode, duration]   : at rest again
#
# base motions are driven through the integral of E so the platform starts and
# ends every scenario at rest

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.transform import Rotation

from vlio.errors import DataError, OutOfDuration, WindowUncovered
from vlio.manifold import RigidTransform
from vlio.propagation import GRAVITY, TTOL, ImuWindow, NoiseParams, RawScan, UndistortedScan
from vlio.trajectory import Trajectory, align_first, associate
from vlio.uncertainty import BeamNoiseModel, tangent_basis

logger = logging.getLogger(__name__)

GRAVITY_VEC = np.array([0., 0., -GRAVITY])
AXES = ('x', 'y', 'z', 'roll', 'pitch', 'yaw')
BASES = ('static', 'constant', 'circle', 'spline')
RAY_EPS = 1.e-9

LEAD_IN = 3.     # s
EPISODE = 30.    # s
LEAD_OUT = 3.    # s
RAMP = 1.        # s
SENSOR_HEIGHT = 1.2  # m


##################################################################################################
# world
##################################################################################################

class SimWorld(object):
    """finite rectangular patches, each corner + two edge vectors"""

    def __init__(self, patches=None):
        self.corners = np.zeros((0, 3))
        self.edges1 = np.zeros((0, 3))
        self.edges2 = np.zeros((0, 3))
        for patch in (patches or []):
            self.add_patch(*patch)
        return

    def __len__(self):
        return len(self.corners)

    def add_patch(self, corner, e1, e2):
        corner, e1, e2 = (np.asarray(v, dtype=float).reshape(3) for v in (corner, e1, e2))
        if np.linalg.norm(np.cross(e1, e2)) < 1.e-12:
            raise DataError("patch edge vectors should not be parallel!")
        self.corners = np.vstack([self.corners, corner])
        self.edges1 = np.vstack([self.edges1, e1])
        self.edges2 = np.vstack([self.edges2, e2])
        return self

    def add_box(self, lo, hi):
        """axis-aligned box as six patches"""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        dx, dy, dz = np.diag(hi - lo)
        self.add_patch(lo, dx, dy)
        self.add_patch(lo + dz, dx, dy)
        self.add_patch(lo, dx, dz)
        self.add_patch(lo + dy, dx, dz)
        self.add_patch(lo, dy, dz)
        self.add_patch(lo + dx, dy, dz)
        return self

    @classmethod
    def room(cls, size=(6., 6., 3.), boxes=True):
        """room centered on the origin in x, y with the floor at z = 0

        with boxes, a few interior boxes break the symmetry of the walls
        """
        sx, sy, sz = size
        world = cls().add_box([-sx/2., -sy/2., 0.], [sx/2., sy/2., sz])
        if boxes:
            world.add_box([1.6, 1.4, 0.], [2.4, 2.3, 0.9])
            world.add_box([-2.5, -2.2, 0.], [-1.8, -0.9, 1.6])
            world.add_box([-0.6, 2.2, 0.6], [0.8, 2.6, 1.4])
        return world

    def normals(self):
        n = np.cross(self.edges1, self.edges2)
        return n/np.linalg.norm(n, axis=-1, keepdims=True)

    def raycast(self, origins, dirs, max_range=np.inf):
        """first-hit range along each ray (inf on a miss), vectorized over rays and patches"""
        o = np.atleast_2d(origins)
        d = np.atleast_2d(dirs)
        o, d = np.broadcast_arrays(o, d)
        ranges = np.full(len(d), np.inf)
        if len(self) == 0:
            return ranges

        n = self.normals()
        # local coordinates from the gram matrix of each patch
        g11 = np.sum(self.edges1*self.edges1, axis=-1)
        g12 = np.sum(self.edges1*self.edges2, axis=-1)
        g22 = np.sum(self.edges2*self.edges2, axis=-1)
        det = g11*g22 - g12*g12

        denom = d @ n.T                                         # (N, P)
        num = np.sum(n*self.corners, axis=-1)[None, :] - o @ n.T
        with np.errstate(divide='ignore', invalid='ignore'):
            t = num/denom
        t = np.where(np.abs(denom) > 1.e-12, t, np.inf)

        h = o[:, None, :] + np.where(np.isfinite(t), t, 0.)[..., None]*d[:, None, :]
        rel = h - self.corners[None]
        r1 = np.sum(rel*self.edges1[None], axis=-1)
        r2 = np.sum(rel*self.edges2[None], axis=-1)
        a = (g22*r1 - g12*r2)/det
        b = (g11*r2 - g12*r1)/det
        inside = (a >= -RAY_EPS) & (a <= 1. + RAY_EPS) & (b >= -RAY_EPS) & (b <= 1. + RAY_EPS)
        hit = inside & (t > RAY_EPS) & np.isfinite(t)

        t = np.where(hit, t, np.inf)
        ranges = np.min(t, axis=-1)
        ranges[ranges > max_range] = np.inf
        return ranges

    def distance_to_surface(self, points):
        """unsigned distance of each point to the closest patch plane"""
        p = np.atleast_2d(points)
        n = self.normals()
        dist = np.abs(np.einsum('npi,pi->np', p[:, None, :] - self.corners[None], n))
        return np.min(dist, axis=-1)


##################################################################################################
# vibration profile
##################################################################################################

@dataclass
class VibrationTerm:
    axis: str
    amplitude: float      # m or rad
    frequency: float      # Hz
    phase: float = 0.     # rad

    def __post_init__(self):
        if self.axis not in AXES:
            raise DataError("vibration axis %s should be one of %s!" % (self.axis, AXES))
        if not self.frequency >= 0:
            raise DataError("vibration frequency should be >= 0!")


def _smoothstep(u):
    """quintic smoothstep and its first two derivatives in u"""
    s = u*u*u*(10. - 15.*u + 6.*u*u)
    ds = 30.*u*u*(1. - u)**2
    dds = 60.*u*(1. - u)*(1. - 2.*u)
    return s, ds, dds


def _smoothstep_integral(u):
    return u**4*(2.5 - 3.*u + u*u)


@dataclass
class VibrationProfile:
    terms: List[VibrationTerm] = field(default_factory=list)
    base: str = 'static'
    lead_in: float = LEAD_IN
    episode: float = EPISODE
    lead_out: float = LEAD_OUT
    ramp: float = RAMP
    origin: np.ndarray = field(default_factory=lambda: np.array([0., 0., SENSOR_HEIGHT]))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))  # constant base, m/s
    radius: float = 1.     # circle base, m
    speed: float = 0.5     # circle base, m/s
    waypoints: Optional[np.ndarray] = None  # spline base, rows (t, x, y, z)

    def __post_init__(self):
        self.terms = [t if isinstance(t, VibrationTerm) else VibrationTerm(**t) for t in self.terms]
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        if self.base not in BASES:
            raise DataError("base motion %s should be one of %s!" % (self.base, BASES))
        if min(self.lead_in, self.episode, self.lead_out, self.ramp) < 0:
            raise DataError("profile durations should be >= 0!")
        if 2*self.ramp > self.episode:
            raise DataError("episode should be at least two ramps long!")
        if self.base == 'circle' and not self.radius > 0:
            raise DataError("circle radius should be > 0!")
        self._spline = None
        if self.base == 'spline':
            wp = np.asarray(self.waypoints, dtype=float)
            if wp.ndim != 2 or wp.shape[1] != 4 or len(wp) < 2:
                raise DataError("spline waypoints should be rows of (t, x, y, z), at least 2!")
            self.waypoints = wp
            self._spline = CubicSpline(wp[:, 0], wp[:, 1:], bc_type='clamped')

    @property
    def duration(self):
        return self.lead_in + self.episode + self.lead_out

    @classmethod
    def static(cls, duration=10.):
        return cls(lead_in=0., episode=duration, lead_out=0., ramp=0.)

    def envelope(self, t):
        """E, dE/dt, d2E/dt2 and the integral of E from 0, vectorized over t"""
        t = np.asarray(t, dtype=float)
        t_end = self.lead_in + self.episode
        if self.ramp == 0:
            on = (t >= self.lead_in) & (t <= t_end)
            E = on.astype(float)
            zero = np.zeros_like(t)
            return E, zero, zero, np.clip(t - self.lead_in, 0., self.episode)

        r = self.ramp
        uu = np.clip((t - self.lead_in)/r, 0., 1.)
        ud = np.clip((t_end - t)/r, 0., 1.)
        su, dsu, ddsu = _smoothstep(uu)
        sd, dsd, ddsd = _smoothstep(ud)
        E = su*sd
        dE = dsu*sd/r - su*dsd/r
        ddE = ddsu*sd/r**2 + su*ddsd/r**2
        plateau = np.clip(t - self.lead_in - r, 0., self.episode - 2*r)
        IE = r*_smoothstep_integral(uu) + plateau + r*(0.5 - _smoothstep_integral(ud))
        return E, dE, ddE, IE

    def base_motion(self, t):
        """base translation, velocity and acceleration in G"""
        t = np.asarray(t, dtype=float)
        n = t.shape
        pos = np.broadcast_to(self.origin, n + (3,)).copy()
        vel = np.zeros(n + (3,))
        acc = np.zeros(n + (3,))
        if self.base == 'static':
            return pos, vel, acc

        E, dE, _, IE = self.envelope(t)
        if self.base == 'constant':
            pos += IE[..., None]*self.velocity
            vel = E[..., None]*self.velocity
            acc = dE[..., None]*self.velocity
        elif self.base == 'circle':
            w = self.speed/self.radius
            th, dth, ddth = w*IE, w*E, w*dE
            c, s = np.cos(th), np.sin(th)
            z = np.zeros_like(th)
            pos += self.radius*np.stack([c - 1., s, z], axis=-1)
            tang = np.stack([-s, c, z], axis=-1)
            rad = np.stack([c, s, z], axis=-1)
            vel = self.radius*dth[..., None]*tang
            acc = self.radius*(ddth[..., None]*tang - (dth**2)[..., None]*rad)
        elif self.base == 'spline':
            lo, hi = self.waypoints[0, 0], self.waypoints[-1, 0]
            tc = np.clip(t, lo, hi)
            inside = ((t >= lo) & (t <= hi))[..., None]
            pos = self.origin + self._spline(tc) - self.waypoints[0, 1:]
            vel = np.where(inside, self._spline(tc, 1), 0.)
            acc = np.where(inside, self._spline(tc, 2), 0.)
        return pos, vel, acc

    def offsets(self, t):
        """vibration offsets on the six axes and their first two time derivatives, shape (..., 6)"""
        t = np.asarray(t, dtype=float)
        S = np.zeros(t.shape + (6,))
        dS = np.zeros_like(S)
        ddS = np.zeros_like(S)
        for term in self.terms:
            k = AXES.index(term.axis)
            w = 2.*np.pi*term.frequency
            arg = w*t + term.phase
            S[..., k] += term.amplitude*np.sin(arg)
            dS[..., k] += term.amplitude*w*np.cos(arg)
            ddS[..., k] -= term.amplitude*w*w*np.sin(arg)

        E, dE, ddE, _ = self.envelope(t)
        E, dE, ddE = E[..., None], dE[..., None], ddE[..., None]
        o = E*S
        do = dE*S + E*dS
        ddo = ddE*S + 2.*dE*dS + E*ddS
        return o, do, ddo


@dataclass
class SensorRig:
    extrinsics: RigidTransform = field(default_factory=lambda: RigidTransform(translation=[0.05, 0., 0.1]))
    channels: int = 16
    columns: int = 625
    vfov: tuple = (-45., 45.)    # deg
    scan_period: float = 0.1     # s
    min_range: float = 0.1       # m
    max_range: float = 50.       # m
    beam: BeamNoiseModel = field(default_factory=BeamNoiseModel)
    imu_rate: float = 200.       # Hz
    imu_noise: NoiseParams = field(default_factory=lambda: NoiseParams(1.e-3, 1.e-2, 0., 0.))
    bias_gyro: np.ndarray = field(default_factory=lambda: np.array([2.e-3, -1.e-3, 1.5e-3]))
    bias_accel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.bias_gyro = np.asarray(self.bias_gyro, dtype=float).reshape(3)
        self.bias_accel = np.asarray(self.bias_accel, dtype=float).reshape(3)
        if not self.scan_period > 0:
            raise DataError("scan period should be > 0!")
        if self.imu_rate < 10./self.scan_period:
            raise DataError("imu rate should be >= 10x the scan rate!")
        if self.channels < 1 or self.columns < 1:
            raise DataError("lidar needs at least one channel and one column!")

    def beam_directions(self):
        """unit beam directions in the lidar frame, column-major (firing) order, and column ids"""
        el = np.radians(np.linspace(self.vfov[0], self.vfov[1], self.channels))
        az = 2.*np.pi*np.arange(self.columns)/self.columns
        A, E = np.meshgrid(az, el, indexing='ij')
        dirs = np.stack([np.cos(E)*np.cos(A), np.cos(E)*np.sin(A), np.sin(E)], axis=-1)
        col = np.repeat(np.arange(self.columns), self.channels)
        return dirs.reshape(-1, 3), col


##################################################################################################
# closed-form kinematics
##################################################################################################

def _euler_body_rates(ang, dang):
    """body angular velocity of R = Rz(yaw) Ry(pitch) Rx(roll)"""
    ph, th = ang[..., 0], ang[..., 1]
    dph, dth, dps = dang[..., 0], dang[..., 1], dang[..., 2]
    return np.stack([dph - dps*np.sin(th),
                     dth*np.cos(ph) + dps*np.cos(th)*np.sin(ph),
                     -dth*np.sin(ph) + dps*np.cos(th)*np.cos(ph)], axis=-1)


def trajectory_at(profile, t):
    """rotation, position, velocity, body angular velocity and G acceleration at times t"""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < -TTOL) or np.any(t > profile.duration + TTOL):
        raise OutOfDuration("t outside profile duration [0, %.3f]!" % profile.duration)

    bp, bv, ba = profile.base_motion(t)
    o, do, ddo = profile.offsets(t)
    pos = bp + o[:, :3]
    vel = bv + do[:, :3]
    acc = ba + ddo[:, :3]

    ang = o[:, 3:]  # roll, pitch, yaw
    rot = Rotation.from_euler('ZYX', ang[:, ::-1]).as_matrix()
    omega = _euler_body_rates(ang, do[:, 3:])
    return rot, pos, vel, omega, acc


def pose_at(profile, t):
    """(world-from-imu pose, velocity, body angular velocity, acceleration) at time t"""
    rot, pos, vel, omega, acc = trajectory_at(profile, t)
    return RigidTransform(rot[0], pos[0]), vel[0], omega[0], acc[0]


def truth_trajectory(profile, t):
    rot, pos, _, _, _ = trajectory_at(profile, t)
    return Trajectory(t, pos, rot)


##################################################################################################
# sensors
##################################################################################################

def render_scan(world, profile, rig, t0, seed=0, noiseless=False):
    """raycast one sweep from the true lidar pose at each firing time

    returns the raw scan (points in the lidar frame at their firing time, beam noise
    added) and the ground-truth undistorted scan (noise-free hits in the lidar frame at t0)
    """
    if t0 < -TTOL or t0 + rig.scan_period > profile.duration + TTOL:
        raise OutOfDuration("scan [%.3f, %.3f] outside profile duration!" % (t0, t0 + rig.scan_period))
    dirs, col = rig.beam_directions()
    dt_col = rig.scan_period*np.arange(rig.columns)/rig.columns
    dt = dt_col[col]

    R_b, p_b, _, _, _ = trajectory_at(profile, t0 + dt_col)
    R_il, t_il = rig.extrinsics.rotation, rig.extrinsics.translation
    R_wl = R_b @ R_il
    p_wl = R_b @ t_il + p_b

    origins = p_wl[col]
    wdirs = np.einsum('nij,nj->ni', R_wl[col], dirs)
    ranges = world.raycast(origins, wdirs, rig.max_range)
    keep = np.isfinite(ranges) & (ranges >= rig.min_range)

    dirs, col, dt, ranges = dirs[keep], col[keep], dt[keep], ranges[keep]
    raw_true = ranges[:, None]*dirs
    hits = p_wl[col] + ranges[:, None]*np.einsum('nij,nj->ni', R_wl[col], dirs)
    gt = (hits - p_wl[0]) @ R_wl[0]

    raw = raw_true
    if not noiseless and len(raw):
        rng = np.random.default_rng(seed)
        o1, o2 = tangent_basis(dirs)
        nr = rng.standard_normal(len(dirs))*rig.beam.sigma_range
        nb = rng.standard_normal((len(dirs), 2))*rig.beam.sigma_bearing
        noisy = dirs + nb[:, :1]*o1 + nb[:, 1:]*o2
        noisy /= np.linalg.norm(noisy, axis=-1, keepdims=True)
        raw = (ranges + nr)[:, None]*noisy

    # lidar(t_j) -> lidar(t0)
    rot = np.einsum('ji,njk->nik', R_wl[0], R_wl[col])
    trans = (p_wl[col] - p_wl[0]) @ R_wl[0]
    truth = UndistortedScan(t0, gt, raw, dt, rot, trans)
    return RawScan(t0, raw, dt), truth


def synthesize_imu(profile, rig, t0, t1, seed=0, noiseless=False):
    """true body rates and specific force at the imu rate, plus white noise and constant biases"""
    if not t1 > t0:
        raise DataError("synthesize_imu needs t1 > t0!")
    n = int(np.floor((t1 - t0)*rig.imu_rate + 1.e-9)) + 1
    t = t0 + np.arange(n)/rig.imu_rate
    rot, _, _, omega, acc = trajectory_at(profile, t)

    gyro = omega.copy()
    accel = np.einsum('nji,nj->ni', rot, acc - GRAVITY_VEC)
    if not noiseless:
        rng = np.random.default_rng(seed)
        sq = np.sqrt(rig.imu_rate)
        gyro += rig.bias_gyro + rng.standard_normal((n, 3))*rig.imu_noise.sigma_gyro*sq
        accel += rig.bias_accel + rng.standard_normal((n, 3))*rig.imu_noise.sigma_accel*sq
    return ImuWindow(t, gyro, accel)


##################################################################################################
# evaluation
##################################################################################################

def end_time_error(estimated, truth, settle_window, align='first'):
    """deviation of the mean pose over the final settle window from the initial reference pose

    returns (translation error [m], rotation error [deg])
    """
    if settle_window < 0:
        raise DataError("settle window should be >= 0!")
    if len(estimated) == 0 or estimated.duration < settle_window - TTOL:
        raise WindowUncovered("estimate does not cover a %.3f s settle window!" % settle_window)
    if len(truth) == 0:
        raise WindowUncovered("empty reference trajectory!")
    t_end = estimated.t[-1]
    if truth.t[0] > estimated.t[0] + 5.e-3 or truth.t[-1] < t_end - settle_window - 5.e-3:
        raise WindowUncovered("reference does not cover the settle window!")

    est = estimated
    if align == 'first':
        i_est, i_ref = associate(estimated, truth)
        est = align_first(estimated[i_est[0]:], truth[i_ref[0]:])
    elif align != 'none':
        raise DataError("align should be 'first' or 'none'!")

    sel = est.t >= t_end - settle_window - TTOL
    p_mean = np.mean(est.pos[sel], axis=0)
    R_mean = Rotation.from_matrix(est.rot[sel]).mean().as_matrix()

    trans_err = np.linalg.norm(p_mean - truth.pos[0])
    rot_err = np.degrees(Rotation.from_matrix(truth.rot[0].T @ R_mean).magnitude())
    return float(trans_err), float(rot_err)
