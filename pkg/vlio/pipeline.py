# per-scan odometry pipeline and the simulate / run / ablate drivers
#
#   propagate -> pose timeline -> downsample -> undistort -> intensity + covariances
#   -> iterated update -> map insertion

import json
import logging
import os
import time

import numpy as np
from tqdm import tqdm

from vlio.config import config_to_dict, run_config_from_dict, save_config
from vlio.dataio import load_dataset, write_dataset
from vlio.errors import NoValidMatches
from vlio.ikf import ikf_update
from vlio.mapping import PointMap, insert_scan, save_map
from vlio.metrics import evaluate
from vlio.propagation import (build_pose_timeline, initialize_state, propagate, undistort)
from vlio.sim import render_scan, synthesize_imu, truth_trajectory
from vlio.trajectory import Trajectory
from vlio.uncertainty import save_covariance_csv, scan_covariances

logger = logging.getLogger(__name__)

# ablation settings: name -> RunConfig overrides
ABLATIONS = {
    'full': {},
    'no_gm': {'guided_matching_enabled': False},
    'no_um': {'uncertainty_enabled': False},
    'no_um_gm': {'uncertainty_enabled': False, 'guided_matching_enabled': False},
    'std': {'deviation_mode': 'STD'},
    'lls': {'deviation_mode': 'LLS'},
}


class Odometry(object):
    """filter state, map and per-scan processing for one run"""

    def __init__(self, cfg, workers=None):
        self.cfg = cfg
        self.ikf_cfg = cfg.ikf_config()
        self.ucfg = cfg.uncertainty_config()
        self.beam = cfg.beam()
        self.noise = cfg.noise()
        self.extrinsics = cfg.extrinsics()
        self.map = PointMap(cfg.map_resolution, workers=cfg.workers if workers is None else workers)
        self.state = None
        self.nscans = 0
        return

    def initialize(self, imu):
        self.state = initialize_state(imu, self.cfg.init_duration)
        return self.state

    def process_scan(self, scan, imu, retcov=False):
        """advance the filter to the scan start and update it with the scan

        returns the posterior state at scan start and a diagnostics dict
        """
        if self.state is None:
            self.initialize(imu)
        tstart = time.perf_counter()
        t0 = scan.t0
        t1 = t0 + max(self.cfg.scan_period, float(np.max(scan.dt)) if len(scan) else 0.)

        if t0 > self.state.t:
            self.state = propagate(self.state, imu.between(self.state.t, t0), self.noise)
        timeline = build_pose_timeline(self.state, imu, t1)

        sub = scan.subsample(self.cfg.downsample_stride)
        und = undistort(sub, timeline, self.extrinsics)
        cov, intensity = scan_covariances(und, imu.between(t0, t1), timeline, self.beam,
                                          self.ucfg, self.extrinsics)
        und.cov = cov.total

        diag = {'scan': self.nscans, 't0': t0, 'iterations': 0, 'converged': False, 'n_valid': 0,
                'mean_weight': None, 'k_omega': intensity.k_omega.tolist(),
                'k_v': intensity.k_v.tolist(), 'skipped': False}
        if len(self.map) == 0:
            diag['skipped'] = True
        else:
            try:
                self.state, d = ikf_update(self.state, und, self.map, self.ikf_cfg, self.ucfg,
                                           self.extrinsics, retdiag=True)
                diag.update(iterations=d['iterations'], converged=d['converged'], n_valid=d['n_valid'],
                            mean_weight=d['mean_weight'])
            except NoValidMatches as e:
                logger.warning("scan %d at t=%.3f skipped: %s", self.nscans, t0, e)
                diag['skipped'] = True

        # the map takes the scan undistorted with the posterior velocity
        und_map = und
        if not diag['skipped']:
            und_map = undistort(sub, build_pose_timeline(self.state, imu, t1), self.extrinsics)
        insert_scan(self.map, und_map, self.state.pose().compose(self.extrinsics))
        diag['time_ms'] = 1.e3*(time.perf_counter() - tstart)
        self.nscans += 1
        logger.debug("scan %d: %d iterations, %d matches, %.1f ms",
                     diag['scan'], diag['iterations'], diag['n_valid'], diag['time_ms'])
        if retcov:
            return self.state, diag, (und, cov)
        return self.state, diag


def run(cfg, dataset_dir, out_dir, workers=None, progress=True):
    """run the pipeline over a dataset directory and write its outputs to out_dir

    outputs: estimate.tum, diagnostics.jsonl, config.yaml, run.h5, map.xyz and
    with dump_covariances covariances/NNNNNN.csv
    """
    dataset = load_dataset(dataset_dir)
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, 'config.yaml'))
    if cfg.dump_covariances:
        os.makedirs(os.path.join(out_dir, 'covariances'), exist_ok=True)

    odom = Odometry(cfg, workers)
    odom.initialize(dataset.imu)
    t, pos, rot, diags = [], [], [], []
    with open(os.path.join(out_dir, 'diagnostics.jsonl'), 'w') as fdiag:
        for i in tqdm(range(len(dataset)), disable=not progress, desc='scans'):
            scan = dataset.scan(i)
            state, diag, (und, cov) = odom.process_scan(scan, dataset.imu, retcov=True)
            t.append(state.t)
            pos.append(state.pos.copy())
            rot.append(state.rot.copy())
            diags.append(diag)
            fdiag.write(json.dumps(diag) + '\n')
            if cfg.dump_covariances:
                save_covariance_csv(os.path.join(out_dir, 'covariances', '%06d.csv' % i), und, cov)

    est = Trajectory(t, pos, rot)
    est.savetum(os.path.join(out_dir, 'estimate.tum'))
    est.savetraj(os.path.join(out_dir, 'run.h5'), attrs={
        'time_ms': [d['time_ms'] for d in diags],
        'iterations': [d['iterations'] for d in diags],
        'n_valid': [d['n_valid'] for d in diags],
        'skipped': [d['skipped'] for d in diags],
        'k_omega': [d['k_omega'] for d in diags],
        'k_v': [d['k_v'] for d in diags],
    })
    save_map(odom.map, os.path.join(out_dir, 'map.xyz'))

    times = np.array([d['time_ms'] for d in diags])
    nskip = sum(d['skipped'] for d in diags)
    logger.info("processed %d scans (%d without update), mean %.1f ms/scan, map %d points",
                len(diags), nskip, np.mean(times), len(odom.map))
    return est, diags


def scan_times(scenario):
    n = int(np.floor(scenario.duration/scenario.scan_period + 1.e-9))
    return scenario.scan_period*np.arange(n)


def simulate(scenario, out_dir, seed=0, progress=True):
    """emit imu.csv, scans/, scan_index.csv, truth.tum and scenario.yaml for a scenario"""
    world = scenario.world()
    profile = scenario.profile()
    rig = scenario.rig()
    t0s = scan_times(scenario)

    imu = synthesize_imu(profile, rig, 0., scenario.duration, seed=[seed, 0],
                         noiseless=scenario.noiseless)
    scans = (render_scan(world, profile, rig, t0, seed=[seed, 1, k], noiseless=scenario.noiseless)[0]
             for k, t0 in enumerate(tqdm(t0s, disable=not progress, desc='render')))
    write_dataset(out_dir, imu, scans, truth_trajectory(profile, t0s))
    save_config(scenario, os.path.join(out_dir, 'scenario.yaml'))
    logger.info("simulated %d scans, %d imu samples into %s", len(t0s), len(imu), out_dir)
    return out_dir


def ablation_config(base, setting):
    data = config_to_dict(base)
    data.update(ABLATIONS[setting])
    return run_config_from_dict(data)


def ablate(scenarios, seeds, base_cfg, out_dir, settings=None, workers=None, progress=True):
    """every (scenario, setting, seed) cell; returns per-run rows and the mean/std table"""
    settings = list(ABLATIONS) if settings is None else settings
    runs = []
    cells = [(name, sc, seed) for name, sc in scenarios.items() for seed in seeds]
    for name, scenario, seed in tqdm(cells, disable=not progress, desc='ablation'):
        data_dir = os.path.join(out_dir, 'data', '%s_s%d' % (name, seed))
        simulate(scenario, data_dir, seed, progress=False)
        truth = load_dataset(data_dir).truth
        settle = scenario.lead_out if scenario.lead_out > 0 else 1.
        for setting in settings:
            run_dir = os.path.join(out_dir, 'runs', name, setting, 's%d' % seed)
            est, _ = run(ablation_config(base_cfg, setting), data_dir, run_dir, workers, progress=False)
            report = evaluate(est, truth, 'all', settle_window=settle)
            runs.append(dict(scenario=name, setting=setting, seed=seed, **report))

    table = []
    for name in scenarios:
        for setting in settings:
            rows = [r for r in runs if r['scenario'] == name and r['setting'] == setting]
            entry = {'scenario': name, 'setting': setting, 'n_seeds': len(rows)}
            for key in ('end_trans_err', 'end_rot_err_deg', 'ape_mean', 'ape_rmse'):
                vals = np.array([r[key] for r in rows])
                entry[key + '_mean'] = float(np.mean(vals))
                entry[key + '_std'] = float(np.std(vals))
            table.append(entry)
    return runs, table
