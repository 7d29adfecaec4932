# incremental global point map, two-stage (euclidean then mahalanobis) neighbour
# selection and PCA plane fitting
#
# the map is a growing array of points in G plus a cKDTree rebuilt lazily after
# insertions; point i of the array is the i-th inserted point, so kdtree
# indices double as insertion order for tie breaking

import logging

import numpy as np
from scipy.spatial import cKDTree

from vlio.errors import DataError, DegenerateNeighbors, EmptyMap, SingularCovariance

logger = logging.getLogger(__name__)

RESOLUTION = 0.5        # m
K_NEIGHBORS = 5
PLANE_THRESHOLD = 0.1   # m
TIE_MARGIN = 4          # extra kdtree candidates fetched first to resolve distance ties
RANK_EPS = 1.e-10


class PointMap(object):
    """spatial index over points in G with voxel dedup at the map resolution"""

    def __init__(self, resolution=RESOLUTION, workers=1):
        if not resolution > 0:
            raise DataError("map resolution should be > 0!")
        self.resolution = float(resolution)
        self.workers = workers
        self.points = np.zeros((0, 3))
        self._tree = None
        return

    def __len__(self):
        return len(self.points)

    @property
    def tree(self):
        if self._tree is None and len(self.points):
            self._tree = cKDTree(self.points)
        return self._tree

    def insert(self, points):
        """voxel-downsample points and add those not within resolution/2 of a stored point"""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(points) == 0:
            return 0
        cand = points[voxel_downsample(points, self.resolution)]
        rmin = 0.5*self.resolution

        keep = np.ones(len(cand), dtype=bool)
        if len(self.points):
            d, _ = self.tree.query(cand, k=1, workers=self.workers)
            keep = d >= rmin
        cand = cand[keep]

        # greedy in input order against points accepted earlier in the same batch
        accepted = np.ones(len(cand), dtype=bool)
        if len(cand) > 1:
            pairs = cKDTree(cand).query_pairs(r=rmin, output_type='ndarray')
            if len(pairs):
                pairs = np.sort(pairs, axis=1)
                pairs = pairs[np.lexsort((pairs[:, 0], pairs[:, 1]))]
                for i, j in pairs:
                    if accepted[i] and np.linalg.norm(cand[i] - cand[j]) < rmin:
                        accepted[j] = False
        cand = cand[accepted]

        if len(cand):
            self.points = np.concatenate([self.points, cand])
            self._tree = None
        return len(cand)


def voxel_downsample(points, resolution):
    """indices (ascending) of one point per voxel: the one closest to the voxel center"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    keys = np.floor(points/resolution).astype(np.int64)
    dist = np.linalg.norm(points - (keys + 0.5)*resolution, axis=-1)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.lexsort((np.arange(len(points)), dist, inv))
    first = np.ones(len(order), dtype=bool)
    first[1:] = inv[order[1:]] != inv[order[:-1]]
    return np.sort(order[first])


def knn_euclidean(pmap, query, k_c, return_index=False):
    """k_c nearest map points to each query, ties broken by insertion order"""
    if len(pmap) == 0:
        raise EmptyMap("knn search on an empty map!")
    query = np.asarray(query, dtype=float)
    single = query.ndim == 1
    q = np.atleast_2d(query)

    k = min(int(k_c), len(pmap))
    kq = min(len(pmap), k + TIE_MARGIN)
    while True:
        d, idx = pmap.tree.query(q, k=kq, workers=pmap.workers)
        d = d.reshape(len(q), kq)
        idx = idx.reshape(len(q), kq)
        # done once every row fetched a point strictly beyond its k-th distance
        if kq == len(pmap) or np.all(d[:, -1] > d[:, k-1]):
            break
        kq = min(len(pmap), 2*kq)

    order = np.lexsort((idx, d), axis=-1)[:, :k]
    idx = np.take_along_axis(idx, order, axis=-1)
    pts = pmap.points[idx]
    if single:
        pts, idx = pts[0], idx[0]
    return (pts, idx) if return_index else pts


def reselect_mahalanobis(candidates, query, cov, k, return_index=False):
    """the k candidates closest to the query under (p-s)^T cov^-1 (p-s), stable order"""
    c = np.asarray(candidates, dtype=float)
    q = np.asarray(query, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if k > c.shape[-2]:
        raise DataError("cannot reselect %d of %d candidates!" % (k, c.shape[-2]))

    try:
        np.linalg.cholesky(cov)
        cinv = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("point covariance is not invertible!")

    diff = c - q[..., None, :]
    d2 = np.einsum('...ki,...ij,...kj->...k', diff, cinv, diff)
    order = np.argsort(d2, axis=-1, kind='stable')[..., :k]
    out = np.take_along_axis(c, order[..., None], axis=-2)
    return (out, order) if return_index else out


class PlaneMatch(object):
    """local plane fitted to matched neighbours; fields batched over a leading axis or single"""

    def __init__(self, normal, centroid, neighbors, valid, planarity):
        self.normal = normal
        self.centroid = centroid
        self.neighbors = neighbors
        self.valid = valid
        self.planarity = planarity
        return

    def take(self, idx):
        return PlaneMatch(self.normal[idx], self.centroid[idx], self.neighbors[idx],
                          self.valid[idx], self.planarity[idx])

    def __len__(self):
        return len(np.atleast_1d(self.valid))


def fit_planes(neighbors, sensor_origin=None, plane_threshold=PLANE_THRESHOLD):
    """PCA plane of every neighbour set, shape (N, K, 3)"""
    nb = np.asarray(neighbors, dtype=float)
    origin = np.zeros(3) if sensor_origin is None else np.asarray(sensor_origin, dtype=float)

    centroid = np.mean(nb, axis=-2)
    X = nb - centroid[..., None, :]
    S = np.einsum('...ki,...kj->...ij', X, X)/nb.shape[-2]
    evals, evecs = np.linalg.eigh(S)
    normal = evecs[..., :, 0]

    # normal points toward the sensor
    side = np.sum(normal*(origin - centroid), axis=-1)
    normal = np.where(side[..., None] < 0, -normal, normal)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)

    lam_max = np.maximum(evals[..., 2], 1.e-300)
    rank_ok = evals[..., 1] > RANK_EPS*lam_max
    dist = np.abs(np.einsum('...ki,...i->...k', X, normal))
    valid = rank_ok & np.all(dist <= plane_threshold, axis=-1)
    planarity = np.maximum(evals[..., 0], 0.)/np.maximum(evals[..., 1], 1.e-300)
    return PlaneMatch(normal, centroid, nb, valid, planarity)


def fit_plane(neighbors, sensor_origin=None, plane_threshold=PLANE_THRESHOLD):
    """PCA plane of a single neighbour set"""
    nb = np.asarray(neighbors, dtype=float).reshape(-1, 3)
    if len(nb) < 3:
        raise DegenerateNeighbors("plane fit needs at least 3 neighbours!")
    m = fit_planes(nb[None], sensor_origin, plane_threshold)
    X = nb - m.centroid[0]
    evals = np.linalg.eigvalsh(X.T @ X)
    if evals[1] <= RANK_EPS*max(evals[2], 1.e-300):
        raise DegenerateNeighbors("neighbours span less than a plane!")
    return PlaneMatch(m.normal[0], m.centroid[0], nb, bool(m.valid[0]), float(m.planarity[0]))


def insert_scan(pmap, scan, pose):
    """transform a scan to G with pose (world-from-lidar) and insert it"""
    added = pmap.insert(pose.apply(scan.points))
    logger.debug("map insert: %d new points, %d total", added, len(pmap))
    return pmap


def save_map(pmap, path):
    np.savetxt(path, pmap.points, fmt='%.6f', delimiter=' ')
