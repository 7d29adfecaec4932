# vibration intensity of a scan and the point-wise post-undistortion covariance
#
#   Sigma_p = Sigma_rot + Sigma_trans + R Sigma_meas R^T
#
# Sigma_rot   = [p]x diag(sigma_r^2) [p]x^T       (rotational undistortion error)
# Sigma_trans = diag(sigma_T^2)                    (translational undistortion error)
# Sigma_meas  = A_p diag(sd^2, sphi^2, sphi^2) A_p^T  (range/bearing noise)
#
# NOTE: the range/bearing diagonal holds VARIANCES (sigma_range^2, sigma_bearing^2).
# sigma_r = gamma * dt_j0 * k_omega and sigma_T = gamma * dt_j0 * k_v, where
# k_omega, k_v are per-axis deviations of the lidar-frame angular/linear velocity
# over the scan window.

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from vlio.errors import DataError, InsufficientSamples, ZeroRangePoint
from vlio.manifold import RigidTransform, skew

logger = logging.getLogger(__name__)

GAMMA = 0.1        # tuned for 100-200 Hz imus
COV_FLOOR = 1.e-8  # m^2, added before any inversion
MIN_RANGE = 1.e-12


class DeviationMode(Enum):
    MAD = 'MAD'
    STD = 'STD'
    LLS = 'LLS'


@dataclass
class BeamNoiseModel:
    sigma_range: float = 0.02     # m
    sigma_bearing: float = 0.001  # rad

    def __post_init__(self):
        if not (self.sigma_range >= 0 and self.sigma_bearing >= 0):
            raise DataError("beam noise sigmas should be >= 0!")


@dataclass
class VibrationIntensity:
    k_omega: np.ndarray
    k_v: np.ndarray
    omega_ave: np.ndarray
    v_ave: np.ndarray

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))


@dataclass
class UncertaintyConfig:
    gamma: float = GAMMA
    deviation_mode: DeviationMode = DeviationMode.MAD
    enabled: bool = True
    cov_floor: float = COV_FLOOR

    def __post_init__(self):
        self.deviation_mode = DeviationMode(self.deviation_mode)
        if not self.gamma > 0:
            raise DataError("gamma should be > 0!")


class PointCovariance(object):
    """per-point covariance blocks, each (N, 3, 3)"""

    def __init__(self, sigma_rot, sigma_trans, sigma_meas, total):
        self.sigma_rot = sigma_rot
        self.sigma_trans = sigma_trans
        self.sigma_meas = sigma_meas
        self.total = total
        return

    def __len__(self):
        return len(self.total)


def lidar_frame_velocities(window, timeline, extrinsics=None):
    """angular and linear lidar velocity at every imu stamp of the window

    omega_L = R_IL^T omega_I,  v_L = R_IL^T R_GI^T v_G
    """
    ext = RigidTransform() if extrinsics is None else extrinsics
    R_il = ext.rotation
    R, _, v = timeline.interpolate(window.t)

    omega_l = window.gyro @ R_il
    v_body = np.einsum('nji,nj->ni', R, v)
    v_l = v_body @ R_il
    return omega_l, v_l


def _deviation(x, mode, t=None):
    # relative to the first sample, so a constant signal gives exactly zero
    x = x - x[:1]
    if mode == DeviationMode.MAD:
        return np.mean(np.abs(x - np.mean(x, axis=0)), axis=0)
    elif mode == DeviationMode.STD:
        return np.std(x, axis=0)
    elif mode == DeviationMode.LLS:
        # rms residual of a per-axis straight line fit over time
        tt = np.arange(len(x), dtype=float) if t is None else np.asarray(t, dtype=float)
        A = np.stack([np.ones_like(tt), tt - tt.mean()], axis=-1)
        coef, _, _, _ = np.linalg.lstsq(A, x, rcond=None)
        res = x - A @ coef
        return np.sqrt(np.mean(res**2, axis=0))
    raise DataError("deviation mode %s not recognized!" % mode)


def vibration_intensity(velocities, mode=DeviationMode.MAD, t=None):
    """k_omega, k_v from the (omega_L, v_L) sequences of one scan"""
    mode = DeviationMode(mode)
    omega, v = velocities
    omega = np.asarray(omega, dtype=float).reshape(-1, 3)
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    if len(omega) < 2 or len(v) < 2:
        raise InsufficientSamples("vibration intensity needs M >= 2 samples, got %d!" % len(omega))
    return VibrationIntensity(k_omega=_deviation(omega, mode, t),
                              k_v=_deviation(v, mode, t),
                              omega_ave=np.mean(omega, axis=0),
                              v_ave=np.mean(v, axis=0))


def point_sigmas(intensity, dt_j0, cfg):
    """sigma_r, sigma_T for points sampled dt_j0 after scan start, shape (N, 3)"""
    dt_j0 = np.atleast_1d(np.asarray(dt_j0, dtype=float))
    if np.any(dt_j0 < 0):
        raise DataError("dt_j0 should be >= 0!")
    scale = cfg.gamma*dt_j0[:, None]
    return scale*intensity.k_omega, scale*intensity.k_v


def rotational_covariance(p, sigma_r):
    """[p]x diag(sigma_r^2) [p]x^T, vectorized over points"""
    S = skew(p)
    var = np.asarray(sigma_r, dtype=float)**2
    return np.einsum('...ij,...j,...kj->...ik', S, var*np.ones(S.shape[:-1]), S)


def tangent_basis(phi):
    """orthonormal basis [O1, O2] of the plane orthogonal to the unit vectors phi

    seeded by the coordinate axis least aligned with phi
    """
    phi = np.atleast_2d(phi)
    k = np.argmin(np.abs(phi), axis=-1)
    e = np.zeros_like(phi)
    e[np.arange(len(phi)), k] = 1.
    o1 = e - np.sum(e*phi, axis=-1, keepdims=True)*phi
    o1 /= np.linalg.norm(o1, axis=-1, keepdims=True)
    o2 = np.cross(phi, o1)
    return o1, o2


def measurement_covariance(p_raw, beam):
    """A_p diag(sd^2, sphi^2, sphi^2) A_p^T with A_p = [phi, -d [phi]x O(phi)]"""
    p_raw = np.asarray(p_raw, dtype=float)
    single = p_raw.ndim == 1
    p_raw = np.atleast_2d(p_raw)

    d = np.linalg.norm(p_raw, axis=-1)
    if np.any(d < MIN_RANGE):
        raise ZeroRangePoint("measurement covariance of a zero-range point!")
    phi = p_raw/d[:, None]
    o1, o2 = tangent_basis(phi)

    A = np.stack([phi,
                  -d[:, None]*np.cross(phi, o1),
                  -d[:, None]*np.cross(phi, o2)], axis=-1)
    var = np.array([beam.sigma_range**2, beam.sigma_bearing**2, beam.sigma_bearing**2])
    out = np.einsum('nij,j,nkj->nik', A, var, A)
    return out[0] if single else out


def total_covariance(scan, sigma_r, sigma_T, beam):
    """compose rotational, translational and rotated measurement covariance for every point

    scan needs .points (undistorted), .raw and .rot (per-point undistortion rotation);
    the second order cross term of the error model is dropped
    """
    points = np.atleast_2d(scan.points)
    rot = np.asarray(scan.rot).reshape(-1, 3, 3)
    sigma_r = np.broadcast_to(sigma_r, points.shape)
    sigma_T = np.broadcast_to(sigma_T, points.shape)

    c_rot = rotational_covariance(points, sigma_r)
    c_trans = np.zeros_like(c_rot)
    idx = np.arange(3)
    c_trans[:, idx, idx] = sigma_T**2
    c_meas = measurement_covariance(np.atleast_2d(scan.raw), beam)
    total = c_rot + c_trans + np.einsum('nij,njk,nlk->nil', rot, c_meas, rot)
    total = 0.5*(total + np.swapaxes(total, -1, -2))
    return PointCovariance(c_rot, c_trans, c_meas, total)


def scan_covariances(scan, window, timeline, beam, cfg, extrinsics=None):
    """intensity of the scan window and the total covariance of every point

    with cfg.enabled False the vibration terms are zero and only the rotated
    measurement covariance remains
    """
    if cfg.enabled:
        vel = lidar_frame_velocities(window, timeline, extrinsics)
        intensity = vibration_intensity(vel, cfg.deviation_mode, t=window.t)
    else:
        intensity = VibrationIntensity.zero()
    sigma_r, sigma_T = point_sigmas(intensity, scan.dt, cfg)
    cov = total_covariance(scan, sigma_r, sigma_T, beam)
    logger.debug("k_omega = %s, k_v = %s", intensity.k_omega, intensity.k_v)
    return cov, intensity


def save_covariance_csv(path, scan, cov):
    """x,y,z,dt and the row-major upper triangle of each point covariance"""
    total = cov.total if isinstance(cov, PointCovariance) else np.asarray(cov)
    iu = np.triu_indices(3)
    data = np.column_stack([scan.points, scan.dt, total[:, iu[0], iu[1]]])
    header = 'x,y,z,dt,cov_xx,cov_xy,cov_xz,cov_yy,cov_yz,cov_zz'
    np.savetxt(path, data, delimiter=',', header=header, comments='', fmt='%.9g')
