# absolute pose error and end-time error reports for estimated trajectories

import csv
import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from vlio.errors import DataError, IoError, NoOverlap
from vlio.sim import end_time_error
from vlio.trajectory import ASSOC_TOL, align_first, associate

logger = logging.getLogger(__name__)

SETTLE_WINDOW = 2.  # s
MODES = ('ape', 'end_time', 'all')


@dataclass
class ApeResult:
    errors: np.ndarray       # per associated pose, m
    rot_errors: np.ndarray   # per associated pose, deg

    @property
    def n(self):
        return len(self.errors)

    @property
    def mean(self):
        return float(np.mean(self.errors))

    @property
    def rmse(self):
        return float(np.sqrt(np.mean(self.errors**2)))

    @property
    def median(self):
        return float(np.median(self.errors))

    @property
    def std(self):
        return float(np.std(self.errors))

    @property
    def max(self):
        return float(np.max(self.errors))

    @property
    def rot_mean(self):
        return float(np.mean(self.rot_errors))

    @property
    def rot_rmse(self):
        return float(np.sqrt(np.mean(self.rot_errors**2)))

    def summary(self):
        return {'n': self.n, 'ape_mean': self.mean, 'ape_rmse': self.rmse, 'ape_median': self.median,
                'ape_std': self.std, 'ape_max': self.max,
                'ape_rot_mean_deg': self.rot_mean, 'ape_rot_rmse_deg': self.rot_rmse}


def ape(est, ref, align='first', max_dt=ASSOC_TOL):
    """translation and rotation error of every estimated pose against its nearest reference pose"""
    i_est, i_ref = associate(est, ref, max_dt)
    est, ref = est[i_est], ref[i_ref]
    if align == 'first':
        est = align_first(est, ref)
    elif align != 'none':
        raise DataError("align should be 'first' or 'none'!")
    errors = np.linalg.norm(est.pos - ref.pos, axis=-1)
    rel = np.einsum('nji,njk->nik', ref.rot, est.rot)
    rot_errors = np.degrees(Rotation.from_matrix(rel).magnitude())
    return ApeResult(errors, rot_errors)


def evaluate(est, ref, mode='all', settle_window=SETTLE_WINDOW, align='first'):
    """dict of the requested metrics"""
    if mode not in MODES:
        raise DataError("evaluation mode should be one of %s!" % (MODES,))
    if len(est) == 0 or len(ref) == 0:
        raise NoOverlap("empty trajectory!")
    if est.t[-1] < ref.t[0] - ASSOC_TOL or ref.t[-1] < est.t[0] - ASSOC_TOL:
        raise NoOverlap("trajectories do not overlap in time!")

    report = {}
    if mode in ('ape', 'all'):
        report.update(ape(est, ref, align).summary())
    if mode in ('end_time', 'all'):
        trans_err, rot_err = end_time_error(est, ref, settle_window, align)
        report['end_trans_err'] = trans_err
        report['end_rot_err_deg'] = rot_err
    return report


def write_report(report, out_dir, name='metrics'):
    """plain-text and csv renderings of a metrics dict"""
    txt = os.path.join(out_dir, name + '.txt')
    csvfile = os.path.join(out_dir, name + '.csv')
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(txt, 'w') as f:
            width = max(len(k) for k in report)
            for key, val in report.items():
                f.write('%-*s  %s\n' % (width, key, _fmt(val)))
        with open(csvfile, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['metric', 'value'])
            for key, val in report.items():
                writer.writerow([key, _fmt(val)])
    except OSError as e:
        raise IoError("could not write metrics to %s: %s" % (out_dir, e))
    return txt, csvfile


def _fmt(val):
    return '%d' % val if isinstance(val, (int, np.integer)) else '%.6g' % val
