# command line entry point: vlio {simulate,run,evaluate,ablate}
# exit codes: 0 ok, 1 configuration error, 2 data error

import argparse
import csv
import logging
import os
import sys

from vlio.config import RunConfig, load_run_config, load_scenario_config, scenario_from_preset
from vlio.errors import ConfigError, DataError, IoError
from vlio.metrics import MODES, SETTLE_WINDOW, evaluate, write_report
from vlio.pipeline import ABLATIONS, ablate, run, simulate
from vlio.trajectory import loadtum

logger = logging.getLogger(__name__)

ABLATION_SCENARIOS = ('z_linear_1hz', 'pitch_2hz', 'roll_3hz', 'hybrid')


def _add_common(p):
    p.add_argument('--config', default=None, help='yaml config file')
    p.add_argument('--seed', type=int, default=0, help='random seed')
    p.add_argument('--out', default='out', help='output directory')
    p.add_argument('--deterministic', action='store_true',
                   help='single-threaded execution for bit-identical reruns')
    p.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    p.add_argument('--no-progress', action='store_true', help='hide progress bars')


def build_parser():
    parser = argparse.ArgumentParser(prog='vlio', description='vibration-aware lidar-inertial odometry')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='write a simulated dataset')
    _add_common(p)
    p.add_argument('--preset', default=None, help='scenario preset when no --config is given')

    p = sub.add_parser('run', help='run odometry on a dataset')
    _add_common(p)
    p.add_argument('dataset', help='dataset directory')

    p = sub.add_parser('evaluate', help='compare an estimate against a reference trajectory')
    _add_common(p)
    p.add_argument('estimate', help='estimated trajectory, TUM format')
    p.add_argument('truth', help='reference trajectory, TUM format')
    p.add_argument('--mode', default='all', choices=MODES)
    p.add_argument('--settle-window', type=float, default=SETTLE_WINDOW)
    p.add_argument('--align', default='first', choices=['first', 'none'])
    p.add_argument('--plot', action='store_true', help='also write trajectory.png')

    p = sub.add_parser('ablate', help='UM/GM and deviation-mode ablation over seeds')
    _add_common(p)
    p.add_argument('--seeds', type=int, default=5, help='number of seeds, starting at --seed')
    p.add_argument('--scenarios', nargs='+', default=list(ABLATION_SCENARIOS),
                   help='preset names or scenario yaml files')
    p.add_argument('--settings', nargs='+', default=list(ABLATIONS), choices=list(ABLATIONS))
    return parser


def _run_config(args):
    cfg = RunConfig().validate() if args.config is None else load_run_config(args.config)
    if args.deterministic:
        cfg.workers = 1
    return cfg


def cmd_simulate(args):
    if args.config is not None:
        scenario = load_scenario_config(args.config)
    else:
        scenario = scenario_from_preset(args.preset or 'hybrid')
    simulate(scenario, args.out, args.seed, progress=not args.no_progress)
    return 0


def cmd_run(args):
    cfg = _run_config(args)
    run(cfg, args.dataset, args.out, progress=not args.no_progress)
    return 0


def cmd_evaluate(args):
    est = loadtum(args.estimate)
    ref = loadtum(args.truth)
    report = evaluate(est, ref, args.mode, args.settle_window, args.align)
    write_report(report, args.out)
    for key, val in report.items():
        logger.info("%s = %s", key, val)
    if args.plot:
        est.plottraj(ref, outfile=os.path.join(args.out, 'trajectory.png'))
    return 0


def cmd_ablate(args):
    if args.seeds < 2:
        raise ConfigError("ablation needs at least 2 seeds", field='seeds')
    cfg = _run_config(args)
    scenarios = {}
    for name in args.scenarios:
        if os.path.isfile(name):
            scenarios[os.path.splitext(os.path.basename(name))[0]] = load_scenario_config(name)
        else:
            scenarios[name] = scenario_from_preset(name)
    seeds = list(range(args.seed, args.seed + args.seeds))
    runs, table = ablate(scenarios, seeds, cfg, args.out, args.settings, progress=not args.no_progress)
    _write_rows(os.path.join(args.out, 'ablation_runs.csv'), runs)
    _write_rows(os.path.join(args.out, 'ablation.csv'), table)
    for row in table:
        logger.info("%-14s %-9s end trans %.4f +- %.4f m, ape rmse %.4f m", row['scenario'], row['setting'],
                    row['end_trans_err_mean'], row['end_trans_err_std'], row['ape_rmse_mean'])
    return 0


def _write_rows(path, rows):
    try:
        with open(path, 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    except OSError as e:
        raise IoError("could not write %s: %s" % (path, e))


COMMANDS = {'simulate': cmd_simulate, 'run': cmd_run, 'evaluate': cmd_evaluate, 'ablate': cmd_ablate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(name)s %(levelname)s: %(message)s')
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error("config error: %s", e)
        return 1
    except DataError as e:
        logger.error("data error: %s", e)
        return 2


if __name__ == '__main__':
    sys.exit(main())
