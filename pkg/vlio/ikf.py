# uncertainty-aware iterated Kalman update
#
# each iteration rematches the scan against the map with covariances carried
# to G at the current iterate, builds point-to-plane residuals weighted by
# R_j = u^T Sigma_G u, and solves
#
#   min |x [-] xhat|^2_P + sum_j |z_j + H_j dx|^2_{R_j}
#
# in information form:
#   K  = (H^T R^-1 H + P_J^-1)^-1 H^T R^-1
#   dx = -K z - (I - K H) J^-1 (x [-] xhat)
#   P+ = (I - K H) P_J,  P_J = J^-1 P J^-T
#
# points undistorted with a state-integrated timeline keep their drift
# v dt + g dt^2 / 2 as a function of the iterate, so each residual also
# constrains the velocity through dz/dv = dt u^T

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from vlio.errors import DataError, InvalidMatch, NoValidMatches
from vlio.manifold import (POS, ROT, STATE_DIM, VEL, RigidTransform, so3_right_jacobian,
                           state_boxminus, state_boxplus)
from vlio.mapping import (K_NEIGHBORS, PLANE_THRESHOLD, PlaneMatch, fit_planes,
                          knn_euclidean, reselect_mahalanobis)
from vlio.uncertainty import COV_FLOOR, UncertaintyConfig

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 4
EPS_ROT = 1.e-3   # rad
EPS_POS = 1.e-3   # m
MIN_OBSERVATIONS = 10
MAX_NEIGHBOR_DISTANCE = 2.  # m
REMATCH_FACTOR = 10.


@dataclass
class IkfConfig:
    max_iterations: int = MAX_ITERATIONS
    eps_rot: float = EPS_ROT
    eps_pos: float = EPS_POS
    k_neighbors: int = K_NEIGHBORS
    k_candidates: Optional[int] = None
    guided_matching: bool = True
    plane_threshold: float = PLANE_THRESHOLD
    max_neighbor_distance: float = MAX_NEIGHBOR_DISTANCE
    min_observations: int = MIN_OBSERVATIONS

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DataError("max_iterations should be >= 1!")
        if self.k_neighbors < 3:
            raise DataError("k_neighbors should be >= 3 for a plane fit!")
        if self.k_candidates is None:
            self.k_candidates = 2*self.k_neighbors
        if self.k_candidates < self.k_neighbors:
            raise DataError("k_candidates should be >= k_neighbors!")


class Observation(object):
    """point-to-plane residuals, batched over a leading axis"""

    def __init__(self, point_world, cov_world, match, residual, weight, jacobian_row):
        self.point_world = point_world
        self.cov_world = cov_world
        self.match = match
        self.residual = residual
        self.weight = weight
        self.jacobian_row = jacobian_row
        return

    def __len__(self):
        return len(np.atleast_1d(self.residual))


def transform_point_and_cov(points, cov, state, extrinsics=None):
    """lidar-frame points/covariances to G through the current pose and extrinsics

    covariances are conjugated by the rotation only
    """
    ext = RigidTransform() if extrinsics is None else extrinsics
    R_gl = state.rot @ ext.rotation
    t_gl = state.rot @ ext.translation + state.pos
    p = np.asarray(points, dtype=float)
    c = np.asarray(cov, dtype=float)
    p_world = p @ R_gl.T + t_gl
    cov_world = R_gl @ c @ R_gl.T
    return p_world, cov_world


def build_observation(p_world, cov_world, match, state, cov_floor=COV_FLOOR, dt=None):
    """residual z = u^T (p - q), weight u^T Sigma u + floor and the 1x15 jacobian rows

    with dt given, p_world is R p_I + t + v dt + g dt^2 / 2 and the rows carry the
    velocity block dt u^T
    """
    p = np.atleast_2d(p_world)
    c = np.asarray(cov_world, dtype=float).reshape(-1, 3, 3)
    u = np.atleast_2d(match.normal)
    q = np.atleast_2d(match.centroid)
    if not np.all(match.valid):
        raise InvalidMatch("observation built from an invalid plane match!")

    z = np.sum(u*(p - q), axis=-1)
    w = np.einsum('ni,nij,nj->n', u, c, u) + cov_floor

    # d z / d dtheta = -u^T R [p_I]x = (p_I x R^T u)^T,  d z / d dp = u^T,  d z / d dv = dt u^T
    lever = p - state.pos
    if dt is not None:
        dt = np.atleast_1d(np.asarray(dt, dtype=float))[:, None]
        lever = lever - state.vel*dt - 0.5*state.gravity*dt*dt
    p_imu = lever @ state.rot
    uR = u @ state.rot
    H = np.zeros((len(p), STATE_DIM))
    H[:, ROT] = np.cross(p_imu, uR)
    H[:, POS] = u
    if dt is not None:
        H[:, VEL] = dt*u

    if np.ndim(p_world) == 1:
        return Observation(p[0], c[0], match, z[0], w[0], H[0])
    return Observation(p, c, match, z, w, H)


def scan_to_world(scan, cov, state, extrinsics=None):
    """world points and covariances of an undistorted scan at the given state

    returns (p_world, cov_world, dt); dt is None when the scan carries no drift
    """
    ext = RigidTransform() if extrinsics is None else extrinsics
    if scan.drift is None:
        p_world, cov_world = transform_point_and_cov(scan.points, cov, state, ext)
        return p_world, cov_world, None

    body = scan.points - scan.drift @ ext.rotation
    p_world, cov_world = transform_point_and_cov(body, cov, state, ext)
    dt = scan.dt[:, None]
    p_world = p_world + state.vel*dt + 0.5*state.gravity*dt*dt
    return p_world, cov_world, scan.dt


def kalman_gain(P, H, weights):
    """K = (H^T W H + P^-1)^-1 H^T W with W = diag(1/weights)"""
    HtW = H.T/weights
    info = HtW @ H + np.linalg.inv(P)
    return np.linalg.solve(info, HtW)


def ikf_step(x, x_prior, P, H, z, weights):
    """one Gauss-Newton step of the MAP problem; returns (dx, K, P_J)"""
    err = state_boxminus(x, x_prior)
    Jinv = np.eye(STATE_DIM)
    Jinv[ROT, ROT] = so3_right_jacobian(err[ROT])
    P_J = Jinv @ P @ Jinv.T

    K = kalman_gain(P_J, H, weights)
    dx = -K @ z - (np.eye(STATE_DIM) - K @ H) @ Jinv @ err
    return dx, K, P_J


def match_scan(p_world, cov_world, pmap, cfg, sensor_origin=None, cov_floor=COV_FLOOR):
    """two-stage neighbour selection and plane fit for every point"""
    n = len(p_world)
    k = min(cfg.k_neighbors, len(pmap))
    if k < 3:
        return PlaneMatch(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 0, 3)),
                          np.zeros(n, dtype=bool), np.zeros(n))

    if cfg.guided_matching:
        cand = knn_euclidean(pmap, p_world, cfg.k_candidates)
        floored = cov_world + cov_floor*np.eye(3)
        nb = reselect_mahalanobis(cand, p_world, floored, min(k, cand.shape[1]))
    else:
        nb = knn_euclidean(pmap, p_world, k)

    planes = fit_planes(nb, sensor_origin, cfg.plane_threshold)
    far = np.max(np.linalg.norm(nb - p_world[:, None, :], axis=-1), axis=-1)
    planes.valid = planes.valid & (far <= cfg.max_neighbor_distance)
    return planes


def ikf_update(state, scan, pmap, cfg, ucfg=None, extrinsics=None, retdiag=False):
    """iterated update of a freshly propagated state with one undistorted scan"""
    ucfg = UncertaintyConfig() if ucfg is None else ucfg
    ext = RigidTransform() if extrinsics is None else extrinsics
    floor = ucfg.cov_floor

    cov_l = np.zeros((len(scan), 3, 3)) if scan.cov is None else scan.cov

    x_prior = state
    x = state.copy()
    matches = None
    rematch = True
    diag = {'iterations': 0, 'rematches': 0, 'n_valid': 0, 'mean_weight': float('nan'),
            'converged': False, 'delta_norms': []}

    for it in range(cfg.max_iterations):
        p_world, cov_world, dt = scan_to_world(scan, cov_l, x, ext)
        origin = x.rot @ ext.translation + x.pos
        if rematch or matches is None:
            matches = match_scan(p_world, cov_world, pmap, cfg, origin, floor)
            diag['rematches'] += 1

        sel = np.flatnonzero(matches.valid)
        if len(sel) < cfg.min_observations:
            raise NoValidMatches("only %d valid matches (need %d)!" % (len(sel), cfg.min_observations))

        obs = build_observation(p_world[sel], cov_world[sel], matches.take(sel), x, floor,
                                None if dt is None else dt[sel])
        dx, K, P_J = ikf_step(x, x_prior, x_prior.cov, obs.jacobian_row, obs.residual, obs.weight)
        x = state_boxplus(x, dx)

        drot = np.linalg.norm(dx[ROT])
        dpos = np.linalg.norm(dx[POS])
        diag['iterations'] = it + 1
        diag['n_valid'] = len(sel)
        diag['mean_weight'] = float(np.mean(obs.weight))
        diag['delta_norms'].append((float(drot), float(dpos)))

        converged = drot < cfg.eps_rot and dpos < cfg.eps_pos
        rematch = not (drot < REMATCH_FACTOR*cfg.eps_rot and dpos < REMATCH_FACTOR*cfg.eps_pos)
        if converged or it == cfg.max_iterations - 1:
            P = (np.eye(STATE_DIM) - K @ obs.jacobian_row) @ P_J
            x.cov = 0.5*(P + P.T)
            diag['converged'] = bool(converged)
            break

    logger.debug("ikf: %d iterations, %d matches, converged=%s",
                 diag['iterations'], diag['n_valid'], diag['converged'])
    if retdiag:
        return x, diag
    return x
