# dataset layout on disk
#
#   imu.csv          t,gx,gy,gz,ax,ay,az  (SI units, 12 significant digits)
#   scans/NNNNNN.bin one sweep per file, see below
#   scan_index.csv   index,t0,count,file
#   truth.tum        reference imu poses at the scan start times (optional)
#
# .bin layout, little endian:
#   header  char[4] 'VLSC', uint32 version = 1, uint32 count, float64 t0
#   records count x (float32 x, float32 y, float32 z, float32 dt)
# points are in the lidar frame at their firing time, dt is seconds after t0

import csv
import logging
import os
import struct

import numpy as np

from vlio.errors import FormatError, IoError
from vlio.propagation import ImuWindow, RawScan
from vlio.trajectory import loadtum

logger = logging.getLogger(__name__)

SCAN_MAGIC = b'VLSC'
SCAN_VERSION = 1
SCAN_HEADER = struct.Struct('<4sIId')
SCAN_RECORD = np.dtype([('x', '<f4'), ('y', '<f4'), ('z', '<f4'), ('dt', '<f4')])
IMU_HEADER = ['t', 'gx', 'gy', 'gz', 'ax', 'ay', 'az']
INDEX_HEADER = ['index', 't0', 'count', 'file']


def write_scan(path, scan):
    rec = np.zeros(len(scan), dtype=SCAN_RECORD)
    rec['x'], rec['y'], rec['z'] = scan.points.T
    rec['dt'] = scan.dt
    try:
        with open(path, 'wb') as f:
            f.write(SCAN_HEADER.pack(SCAN_MAGIC, SCAN_VERSION, len(scan), scan.t0))
            f.write(rec.tobytes())
    except OSError as e:
        raise IoError("could not write %s: %s" % (path, e))


def read_scan(path):
    try:
        with open(path, 'rb') as f:
            buf = f.read()
    except OSError as e:
        raise IoError("could not read %s: %s" % (path, e))
    if len(buf) < SCAN_HEADER.size:
        raise FormatError("%s: truncated scan header!" % path)
    magic, version, count, t0 = SCAN_HEADER.unpack_from(buf)
    if magic != SCAN_MAGIC:
        raise FormatError("%s: bad magic %r, should be %r!" % (path, magic, SCAN_MAGIC))
    if version != SCAN_VERSION:
        raise FormatError("%s: scan version %d not supported!" % (path, version))
    if len(buf) != SCAN_HEADER.size + count*SCAN_RECORD.itemsize:
        raise FormatError("%s: header says %d points, file size disagrees!" % (path, count))
    rec = np.frombuffer(buf, dtype=SCAN_RECORD, count=count, offset=SCAN_HEADER.size)
    points = np.column_stack([rec['x'], rec['y'], rec['z']]).astype(float)
    return RawScan(t0, points, rec['dt'].astype(float))


def write_imu(path, window):
    data = np.column_stack([window.t, window.gyro, window.accel])
    try:
        np.savetxt(path, data, delimiter=',', header=','.join(IMU_HEADER), comments='', fmt='%.12g')
    except OSError as e:
        raise IoError("could not write %s: %s" % (path, e))


def read_imu(path):
    try:
        with open(path) as f:
            header = f.readline().strip().split(',')
            if header != IMU_HEADER:
                raise FormatError("%s: imu header should be %s!" % (path, ','.join(IMU_HEADER)))
            data = np.loadtxt(f, delimiter=',', ndmin=2)
    except OSError as e:
        raise IoError("could not read %s: %s" % (path, e))
    except ValueError as e:
        raise FormatError("%s: %s" % (path, e))
    if data.shape[1] != 7:
        raise FormatError("%s: imu rows need 7 columns!" % path)
    window = ImuWindow(data[:, 0], data[:, 1:4], data[:, 4:7])
    window.check_monotonic()
    return window


def write_scan_index(path, rows):
    try:
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(INDEX_HEADER)
            for idx, t0, count, fname in rows:
                writer.writerow([idx, '%.9f' % t0, count, fname])
    except OSError as e:
        raise IoError("could not write %s: %s" % (path, e))


def read_scan_index(path):
    try:
        with open(path, newline='') as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != INDEX_HEADER:
                raise FormatError("%s: index header should be %s!" % (path, ','.join(INDEX_HEADER)))
            rows = [(int(r['index']), float(r['t0']), int(r['count']), r['file']) for r in reader]
    except OSError as e:
        raise IoError("could not read %s: %s" % (path, e))
    except (ValueError, TypeError) as e:
        raise FormatError("%s: %s" % (path, e))
    return rows


def scan_filename(i):
    return os.path.join('scans', '%06d.bin' % i)


class Dataset(object):
    """an imu stream plus lazily loaded scans of a dataset directory"""

    def __init__(self, root, imu, index, truth=None):
        self.root = root
        self.imu = imu
        self.index = index
        self.truth = truth
        return

    def __len__(self):
        return len(self.index)

    def scan(self, i):
        idx, t0, count, fname = self.index[i]
        scan = read_scan(os.path.join(self.root, fname))
        if len(scan) != count or abs(scan.t0 - t0) > 1.e-6:
            raise FormatError("scan %d disagrees with scan_index.csv!" % idx)
        return scan

    def __iter__(self):
        for i in range(len(self)):
            yield self.scan(i)


def load_dataset(root):
    if not os.path.isdir(root):
        raise IoError("dataset directory %s does not exist!" % root)
    scan_dir = os.path.join(root, 'scans')
    if not os.path.isdir(scan_dir) or not any(f.endswith('.bin') for f in os.listdir(scan_dir)):
        raise FormatError("%s: empty scan directory!" % root)

    imu = read_imu(os.path.join(root, 'imu.csv'))
    index_path = os.path.join(root, 'scan_index.csv')
    if os.path.exists(index_path):
        index = read_scan_index(index_path)
    else:
        # no index: every .bin in name order
        files = sorted(f for f in os.listdir(scan_dir) if f.endswith('.bin'))
        index = []
        for i, f in enumerate(files):
            s = read_scan(os.path.join(scan_dir, f))
            index.append((i, s.t0, len(s), os.path.join('scans', f)))
    if len(index) == 0:
        raise FormatError("%s: scan index is empty!" % root)
    if np.any(np.diff([row[1] for row in index]) <= 0):
        raise FormatError("%s: scan start times not strictly increasing!" % root)

    truth_path = os.path.join(root, 'truth.tum')
    truth = loadtum(truth_path) if os.path.exists(truth_path) else None
    logger.info("dataset %s: %d scans, %d imu samples", root, len(index), len(imu))
    return Dataset(root, imu, index, truth)


def write_dataset(root, imu, scans, truth=None):
    """write imu, scans, index and optional truth trajectory under root"""
    try:
        os.makedirs(os.path.join(root, 'scans'), exist_ok=True)
    except OSError as e:
        raise IoError("could not create %s: %s" % (root, e))
    write_imu(os.path.join(root, 'imu.csv'), imu)
    rows = []
    for i, scan in enumerate(scans):
        fname = scan_filename(i)
        write_scan(os.path.join(root, fname), scan)
        rows.append((i, scan.t0, len(scan), fname))
    write_scan_index(os.path.join(root, 'scan_index.csv'), rows)
    if truth is not None:
        truth.savetum(os.path.join(root, 'truth.tum'))
    return rows
