import os

import numpy as np
import pytest

from vlio.dataio import (SCAN_HEADER, load_dataset, read_imu, read_scan, read_scan_index, write_dataset,
                         write_imu, write_scan)
from vlio.errors import FormatError, IoError, NonMonotonicTimestamps
from vlio.propagation import ImuWindow, RawScan
from vlio.trajectory import Trajectory


def make_scan(t0=0.5, n=20, seed=0):
    rng = np.random.default_rng(seed)
    return RawScan(t0, rng.uniform(-10., 10., size=(n, 3)), np.sort(rng.uniform(0., 0.1, size=n)))


def make_imu(n=50, rate=200.):
    rng = np.random.default_rng(1)
    t = np.arange(n)/rate
    return ImuWindow(t, 0.01*rng.normal(size=(n, 3)), [0., 0., 9.81] + 0.1*rng.normal(size=(n, 3)))


def test_scan_file(tmp_path):
    scan = make_scan()
    path = os.path.join(tmp_path, 's.bin')
    write_scan(path, scan)
    assert os.path.getsize(path) == SCAN_HEADER.size + 16*len(scan)
    with open(path, 'rb') as f:
        assert f.read(4) == b'VLSC'
    back = read_scan(path)
    assert back.t0 == scan.t0
    np.testing.assert_allclose(back.points, scan.points, rtol=1.e-6)
    np.testing.assert_allclose(back.dt, scan.dt, atol=1.e-8)


def test_scan_bad_magic(tmp_path):
    path = os.path.join(tmp_path, 's.bin')
    write_scan(path, make_scan())
    with open(path, 'r+b') as f:
        f.write(b'XXXX')
    with pytest.raises(FormatError):
        read_scan(path)


def test_scan_truncated(tmp_path):
    path = os.path.join(tmp_path, 's.bin')
    write_scan(path, make_scan())
    with open(path, 'rb') as f:
        buf = f.read()
    with open(path, 'wb') as f:
        f.write(buf[:-5])
    with pytest.raises(FormatError):
        read_scan(path)


def test_scan_missing(tmp_path):
    with pytest.raises(IoError):
        read_scan(os.path.join(tmp_path, 'nope.bin'))


def test_imu_file(tmp_path):
    imu = make_imu()
    path = os.path.join(tmp_path, 'imu.csv')
    write_imu(path, imu)
    with open(path) as f:
        assert f.readline().strip() == 't,gx,gy,gz,ax,ay,az'
    back = read_imu(path)
    np.testing.assert_allclose(back.t, imu.t, rtol=1.e-11)
    np.testing.assert_allclose(back.gyro, imu.gyro, rtol=1.e-11)
    np.testing.assert_allclose(back.accel, imu.accel, rtol=1.e-11)


def test_imu_bad_header(tmp_path):
    path = os.path.join(tmp_path, 'imu.csv')
    with open(path, 'w') as f:
        f.write('time,wx,wy,wz,ax,ay,az\n0,0,0,0,0,0,9.81\n')
    with pytest.raises(FormatError):
        read_imu(path)


def test_imu_nonmonotonic(tmp_path):
    path = os.path.join(tmp_path, 'imu.csv')
    with open(path, 'w') as f:
        f.write('t,gx,gy,gz,ax,ay,az\n0.1,0,0,0,0,0,9.81\n0.0,0,0,0,0,0,9.81\n')
    with pytest.raises(NonMonotonicTimestamps):
        read_imu(path)


def test_dataset_round_trip(tmp_path):
    scans = [make_scan(0.1*i, n=10 + i, seed=i) for i in range(3)]
    truth = Trajectory([0., 0.1, 0.2], np.zeros((3, 3)), np.stack([np.eye(3)]*3))
    root = os.path.join(tmp_path, 'ds')
    write_dataset(root, make_imu(), scans, truth)

    rows = read_scan_index(os.path.join(root, 'scan_index.csv'))
    assert [r[2] for r in rows] == [10, 11, 12]

    ds = load_dataset(root)
    assert len(ds) == 3
    assert len(ds.imu) == 50
    assert len(ds.truth) == 3
    for a, b in zip(ds, scans):
        assert a.t0 == pytest.approx(b.t0)
        np.testing.assert_allclose(a.points, b.points, rtol=1.e-6)


def test_dataset_without_index_or_truth(tmp_path):
    root = os.path.join(tmp_path, 'ds')
    write_dataset(root, make_imu(), [make_scan(0.), make_scan(0.1)])
    os.remove(os.path.join(root, 'scan_index.csv'))
    ds = load_dataset(root)
    assert len(ds) == 2
    assert ds.truth is None


def test_empty_scan_dir(tmp_path):
    root = os.path.join(tmp_path, 'ds')
    os.makedirs(os.path.join(root, 'scans'))
    write_imu(os.path.join(root, 'imu.csv'), make_imu())
    with pytest.raises(FormatError):
        load_dataset(root)


def test_missing_dataset(tmp_path):
    with pytest.raises(IoError):
        load_dataset(os.path.join(tmp_path, 'nope'))
