import os

import pytest

from vlio.cli import main

SCENARIO = "preset: static\nepisode: 1.5\nchannels: 9\ncolumns: 100\n"


def write(path, text):
    with open(path, 'w') as f:
        f.write(text)
    return path


@pytest.fixture
def dataset(tmp_path):
    cfg = write(os.path.join(tmp_path, 'scenario.yaml'), SCENARIO)
    out = os.path.join(tmp_path, 'ds')
    assert main(['simulate', '--config', cfg, '--seed', '4', '--out', out, '--no-progress']) == 0
    return out


def test_simulate_writes_dataset(dataset):
    assert len(os.listdir(os.path.join(dataset, 'scans'))) == 15
    assert os.path.exists(os.path.join(dataset, 'truth.tum'))


def test_simulate_same_seed_is_identical(tmp_path, dataset):
    cfg = os.path.join(os.path.dirname(dataset), 'scenario.yaml')
    again = os.path.join(tmp_path, 'ds2')
    assert main(['simulate', '--config', cfg, '--seed', '4', '--out', again, '--no-progress']) == 0
    for name in ('imu.csv', 'scan_index.csv', os.path.join('scans', '000007.bin')):
        with open(os.path.join(dataset, name), 'rb') as a, open(os.path.join(again, name), 'rb') as b:
            assert a.read() == b.read()


def test_run_and_evaluate(tmp_path, dataset):
    out = os.path.join(tmp_path, 'run')
    assert main(['run', dataset, '--out', out, '--deterministic', '--no-progress']) == 0
    est = os.path.join(out, 'estimate.tum')
    assert os.path.exists(est)

    ev = os.path.join(tmp_path, 'eval')
    truth = os.path.join(dataset, 'truth.tum')
    assert main(['evaluate', est, truth, '--out', ev, '--settle-window', '1', '--plot']) == 0
    for name in ('metrics.txt', 'metrics.csv', 'trajectory.png'):
        assert os.path.exists(os.path.join(ev, name))


def test_evaluate_uncovered_window_is_data_error(tmp_path, dataset):
    truth = os.path.join(dataset, 'truth.tum')
    out = os.path.join(tmp_path, 'eval')
    assert main(['evaluate', truth, truth, '--out', out, '--mode', 'end_time', '--settle-window', '5']) == 2


def test_run_bad_config(tmp_path, dataset):
    cfg = write(os.path.join(tmp_path, 'run.yaml'), "gamma: 0.1\nkneighbors: 5\n")
    assert main(['run', dataset, '--config', cfg, '--out', os.path.join(tmp_path, 'run')]) == 1


def test_run_empty_dataset(tmp_path):
    empty = os.path.join(tmp_path, 'empty')
    os.makedirs(os.path.join(empty, 'scans'))
    assert main(['run', empty, '--out', os.path.join(tmp_path, 'run'), '--no-progress']) == 2


def test_unknown_preset(tmp_path):
    assert main(['simulate', '--preset', 'earthquake', '--out', str(tmp_path)]) == 1


def test_ablate_needs_two_seeds(tmp_path):
    assert main(['ablate', '--seeds', '1', '--out', str(tmp_path)]) == 1
