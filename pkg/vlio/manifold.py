# rotation / rigid transform algebra and the on-manifold boxplus/boxminus
# operators of the error-state filter
#
# conventions:
#   error state ordering is [dtheta, dp, dv, dbg, dba] (15 entries)
#   rotation error is right-multiplicative in the body frame: R = Rhat * Exp(dtheta)
#   all functions are pure and work on plain numpy arrays

import numpy as np

STATE_DIM = 15
ROT = slice(0, 3)
POS = slice(3, 6)
VEL = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)

SMALL_ANGLE = 1.e-8  # below this use Taylor expansions
PI_BRANCH = 1.e-6    # distance from pi where the log switches branch


def skew(v):
    """return the skew-symmetric matrix [v]x, vectorized over leading axes"""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 3:
        raise Exception("skew needs vectors of length 3!")
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(m):
    """inverse of skew for the antisymmetric part of m"""
    m = np.asarray(m, dtype=float)
    return 0.5*np.stack([m[..., 2, 1] - m[..., 1, 2],
                         m[..., 0, 2] - m[..., 2, 0],
                         m[..., 1, 0] - m[..., 0, 1]], axis=-1)


def so3_exp(phi):
    """Rodrigues formula, vectorized over leading axes of phi"""
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise Exception("so3_exp needs finite input!")
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < SMALL_ANGLE
    th = np.where(small, 1., theta)
    th2 = th*th

    # second order Taylor expansion near zero
    a = np.where(small, 1. - theta**2/6., np.sin(th)/th)
    b = np.where(small, 0.5 - theta**2/24., (1. - np.cos(th))/th2)

    K = skew(phi)
    K2 = K @ K
    return np.eye(3) + a[..., None, None]*K + b[..., None, None]*K2


def so3_log(R):
    """inverse of so3_exp on the ball |phi| <= pi"""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise Exception("so3_log takes a single 3x3 rotation!")

    cth = np.clip(0.5*(np.trace(R) - 1.), -1., 1.)
    theta = np.arccos(cth)

    if theta < SMALL_ANGLE:
        return vee(R)

    if np.pi - theta > PI_BRANCH:
        return theta/np.sin(theta) * vee(R)

    # trace ~ -1: axis from the symmetric part, uu^T = (Rsym - cos I)/(1 - cos)
    uu = (0.5*(R + R.T) - cth*np.eye(3))/(1. - cth)
    k = np.argmax(np.diag(uu))
    u = uu[:, k]/np.sqrt(uu[k, k])
    u = u/np.linalg.norm(u)

    # sign from the antisymmetric part when it is resolvable, else +largest component
    w = vee(R)
    if np.linalg.norm(w) > 1.e-12:
        if np.dot(u, w) < 0:
            u = -u
    elif u[np.argmax(np.abs(u))] < 0:
        u = -u
    return theta*u


def nearest_rotation(M):
    """orthogonal polar factor of M with det +1, vectorized"""
    U, _, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.ones(U.shape[:-2] + (3,))
    D[..., 2] = d
    return (U*D[..., None, :]) @ Vt


def from_small_angles(delta_r, orthonormalize=True):
    """small-angle rotation I + [d]x, re-orthonormalized onto SO(3) by polar decomposition"""
    M = np.eye(3) + skew(delta_r)
    if not orthonormalize:
        return M
    return nearest_rotation(M)


def so3_right_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) - 0.5*K + K @ K/6.
    return (np.eye(3) - (1. - np.cos(theta))/theta**2 * K
            + (theta - np.sin(theta))/theta**3 * (K @ K))


def so3_right_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5*K + K @ K/12.
    c = 1./theta**2 - (1. + np.cos(theta))/(2.*theta*np.sin(theta))
    return np.eye(3) + 0.5*K + c*(K @ K)


def is_rotation(R, tol=1.e-9):
    R = np.asarray(R, dtype=float)
    return (np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0)
            and abs(np.linalg.det(R) - 1.) < tol)


class RigidTransform(object):
    """rotation + translation acting as p -> R p + t"""

    def __init__(self, rotation=None, translation=None):
        self.rotation = np.eye(3) if rotation is None else np.array(rotation, dtype=float)
        self.translation = np.zeros(3) if translation is None else np.array(translation, dtype=float)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise Exception("RigidTransform needs a 3x3 rotation and a 3-vector!")
        return

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def compose(self, other):
        """self * other"""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self):
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def __repr__(self):
        return "RigidTransform(rotation=%s, translation=%s)" % (
            np.array2string(self.rotation, precision=4), np.array2string(self.translation, precision=4))


def state_boxplus(x, delta):
    """x [+] delta for a NavState and a 15-vector error"""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (STATE_DIM,) or not np.all(np.isfinite(delta)):
        raise Exception("boxplus needs a finite 15-vector!")
    out = x.copy()
    out.rot = x.rot @ so3_exp(delta[ROT])
    out.pos = x.pos + delta[POS]
    out.vel = x.vel + delta[VEL]
    out.bias_gyro = x.bias_gyro + delta[BG]
    out.bias_accel = x.bias_accel + delta[BA]
    return out


def state_boxminus(a, b):
    """a [-] b as a 15-vector in the tangent space at b"""
    return np.concatenate([so3_log(b.rot.T @ a.rot),
                           a.pos - b.pos,
                           a.vel - b.vel,
                           a.bias_gyro - b.bias_gyro,
                           a.bias_accel - b.bias_accel])


def boxplus_jacobian(err):
    """J = d((x [+] d) [-] xhat)/dd at d = 0, where err = x [-] xhat"""
    J = np.eye(STATE_DIM)
    J[ROT, ROT] = so3_right_jacobian_inv(np.asarray(err)[ROT])
    return J
