# timestamped pose sequences: TUM text files, hdf5 archives, association and plotting

import logging

import h5py
import matplotlib.pyplot as plt
import numpy as np
from scipy.spatial.transform import Rotation

from vlio.errors import FormatError, IoError, NoOverlap
from vlio.manifold import RigidTransform

logger = logging.getLogger(__name__)

ASSOC_TOL = 5.e-3  # s


class Trajectory(object):
    """world-from-body poses at increasing timestamps"""

    def __init__(self, t, pos, rot, diagnostics=None):
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.pos = np.asarray(pos, dtype=float).reshape(-1, 3)
        self.rot = np.asarray(rot, dtype=float).reshape(-1, 3, 3)
        self.diagnostics = {} if diagnostics is None else dict(diagnostics)  # per-pose arrays
        if not (len(self.t) == len(self.pos) == len(self.rot)):
            raise FormatError("trajectory t, pos, rot have different lengths!")
        if np.any(np.diff(self.t) < 0):
            raise FormatError("trajectory timestamps should be increasing!")
        return

    def __len__(self):
        return len(self.t)

    def __getitem__(self, idx):
        return Trajectory(self.t[idx], self.pos[idx], self.rot[idx])

    def pose(self, i):
        return RigidTransform(self.rot[i], self.pos[i])

    @property
    def duration(self):
        return self.t[-1] - self.t[0] if len(self.t) else 0.

    def transformed(self, T):
        """left-multiply every pose by the rigid transform T"""
        return Trajectory(self.t, self.pos @ T.rotation.T + T.translation, T.rotation @ self.rot)

    def savetum(self, outfile):
        """t tx ty tz qx qy qz qw, one pose per line"""
        quat = Rotation.from_matrix(self.rot).as_quat() if len(self) else np.zeros((0, 4))
        data = np.column_stack([self.t, self.pos, quat])
        try:
            np.savetxt(outfile, data, fmt=['%.9f'] + ['%.9g']*7, delimiter=' ')
        except OSError as e:
            raise IoError("could not write %s: %s" % (outfile, e))

    def savetraj(self, outfile, attrs=None):
        """hdf5 archive of the trajectory; diagnostics (updated by attrs) go to their own group"""
        diags = dict(self.diagnostics)
        if attrs:
            diags.update(attrs)
        try:
            hf = h5py.File(outfile, 'w')
        except OSError as e:
            raise IoError("could not write %s: %s" % (outfile, e))
        hf.create_dataset('t', data=self.t)
        hf.create_dataset('pos', data=self.pos)
        hf.create_dataset('rot', data=self.rot)
        if diags:
            grp = hf.create_group('diagnostics')
            for key, val in diags.items():
                grp.create_dataset(key, data=np.asarray(val))
        hf.close()

    def plottraj(self, ref=None, outfile=None, labels=('estimate', 'truth')):
        """top view and z(t) of the trajectory, optionally against a reference"""
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
        ax1.plot(self.pos[:, 0], self.pos[:, 1], 'b-', label=labels[0])
        ax2.plot(self.t, self.pos[:, 2], 'b-', label=labels[0])
        if ref is not None:
            ax1.plot(ref.pos[:, 0], ref.pos[:, 1], 'k--', label=labels[1])
            ax2.plot(ref.t, ref.pos[:, 2], 'k--', label=labels[1])
        ax1.set_xlabel('x [m]')
        ax1.set_ylabel('y [m]')
        ax1.set_aspect('equal', adjustable='datalim')
        ax2.set_xlabel('t [s]')
        ax2.set_ylabel('z [m]')
        ax1.legend()
        plt.tight_layout()
        if outfile is not None:
            fig.savefig(outfile, dpi=150)
            plt.close(fig)
        return fig


def loadtum(infile):
    try:
        data = np.loadtxt(infile, comments='#', ndmin=2)
    except OSError as e:
        raise IoError("could not read %s: %s" % (infile, e))
    except ValueError as e:
        raise FormatError("%s is not a TUM trajectory: %s" % (infile, e))
    if data.size == 0:
        return Trajectory(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3, 3)))
    if data.shape[1] != 8:
        raise FormatError("%s: TUM lines need 8 columns, got %d!" % (infile, data.shape[1]))
    rot = Rotation.from_quat(data[:, 4:8]).as_matrix()
    return Trajectory(data[:, 0], data[:, 1:4], rot)


def loadtraj(infile):
    try:
        hf = h5py.File(infile, 'r')
    except OSError as e:
        raise IoError("could not read %s: %s" % (infile, e))
    t = hf['t'][()]
    pos = hf['pos'][()]
    rot = hf['rot'][()]
    diags = {}
    if 'diagnostics' in hf:
        for key in hf['diagnostics']:
            diags[key] = hf['diagnostics'][key][()]
    hf.close()
    return Trajectory(t, pos, rot, diagnostics=diags)


def associate(est, ref, max_dt=ASSOC_TOL):
    """index pairs (i_est, i_ref) of nearest timestamps closer than max_dt"""
    if len(est) == 0 or len(ref) == 0:
        raise NoOverlap("cannot associate an empty trajectory!")
    j = np.clip(np.searchsorted(ref.t, est.t), 1, max(len(ref) - 1, 1))
    if len(ref) == 1:
        j = np.zeros(len(est), dtype=int)
    else:
        left = np.abs(est.t - ref.t[j-1]) <= np.abs(ref.t[j] - est.t)
        j = np.where(left, j - 1, j)
    ok = np.abs(ref.t[j] - est.t) <= max_dt
    if not np.any(ok):
        raise NoOverlap("no timestamps of the two trajectories within %.3f s!" % max_dt)
    return np.flatnonzero(ok), j[ok]


def align_first(est, ref):
    """rigidly move est so its first pose equals the matching ref pose"""
    T = ref.pose(0).compose(est.pose(0).inverse())
    return est.transformed(T)
