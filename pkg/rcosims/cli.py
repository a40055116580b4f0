"""Command-line front end.

    rcosims train-teacher --config cfg.json [--out DIR]
    rcosims distill       --config cfg.json [--seed-override 0 1 2]
                          [--threads N]
    rcosims analyze       --config cfg.json
    rcosims all           --config cfg.json

Output layout under the output directory:

    config.json                       effective config
    teacher/                          manifest.json + checkpoint files
    runs/<arm>/seed_<k>/              report.json, epochs.csv, student.rco,
                                      hardness.csv (gs), route/ (snapshots)
    analysis/                         summary.csv, kl_curve_*, pca_*, noise_*
"""
import argparse
import json
import logging
import os
import sys
import time

import joblib

from .analysis import kl_curve, noise_sweep, pca_trajectory, write_csv
from .config import (
    load_config, write_config, build_teacher, build_run_config,
    build_distill)
from .data import load_experiment_data
from .errors import (
    RcoError, ConfigError, get_exit_code, CONFIG_FAILURE, DATA_FAILURE, OK)
from .nn import spec_from_dict
from .run_utils import summarize_arms
from .strategy import validate_schedule
from .trainer import run_arm
from .trajectory import (
    train_teacher, save_trajectory, load_trajectory, load_checkpoint)

LOGGER = logging.getLogger(__name__)

COMMANDS = ('train-teacher', 'distill', 'analyze', 'all')


def teacher_dir(cfg):
    return os.path.join(cfg['out'], 'teacher')


def run_dir(cfg, arm_name, seed):
    return os.path.join(cfg['out'], 'runs', arm_name, 'seed_%d' % seed)


def analysis_dir(cfg):
    return os.path.join(cfg['out'], 'analysis')


def cmd_train_teacher(cfg, data=None):
    """Train the teacher and write its trajectory to <out>/teacher."""
    if data is None:
        data = load_experiment_data(cfg['dataset'])
    spec, train, capture_every, capture_unit = build_teacher(cfg)
    traj = train_teacher(
        spec, train, data.train, capture_every=capture_every,
        capture_unit=capture_unit, progress=cfg['threads'] == 1)
    save_trajectory(traj, teacher_dir(cfg))
    return traj


def _run_one(rcfg, trajectory, data, directory):
    report = run_arm(rcfg, trajectory, data)
    report.write(directory)
    return report.to_dict()


def cmd_distill(cfg, trajectory_dir=None, data=None):
    """Run every arm for every seed and write the reports.

    All schedules are checked against the trajectory before any training
    starts.

    Returns
    -------
    reports : list of dict
        The report dicts, arm-major then seed.
    """
    if trajectory_dir is None:
        trajectory_dir = teacher_dir(cfg)
    trajectory = load_trajectory(trajectory_dir)
    if data is None:
        data = load_experiment_data(cfg['dataset'])

    threads = cfg['threads']
    jobs = []
    for arm in cfg['arms']:
        for seed in cfg['seeds']:
            rcfg = build_run_config(
                cfg, arm, seed, trajectory, len(data.train),
                progress=threads == 1)
            validate_schedule(rcfg.schedule, trajectory)
            jobs.append(joblib.delayed(_run_one)(
                rcfg, trajectory, data, run_dir(cfg, arm['name'], seed)))
    LOGGER.info(
        'running %d student runs on %d worker(s)', len(jobs), threads)

    return joblib.Parallel(
        n_jobs=threads, pre_dispatch='2*n_jobs')(jobs)


def _load_student(directory):
    with open(os.path.join(directory, 'report.json'), 'r') as fp:
        rep = json.load(fp)
    spec = spec_from_dict(rep['student_spec'])
    ckpt = load_checkpoint(os.path.join(directory, 'student.rco'), spec=spec)
    return rep, spec, ckpt.params


def cmd_analyze(cfg, data=None):
    """Write the diagnostics into <out>/analysis.

    A failing diagnostic is logged and skipped; the others still run.

    Returns
    -------
    failures : list of Exception
        The errors of the diagnostics that failed.
    """
    adir = analysis_dir(cfg)
    os.makedirs(adir, exist_ok=True)
    acfg = cfg['analysis']
    failures = []

    def _diag(name, func, *args):
        try:
            func(*args)
        except (RcoError, ValueError, OSError) as e:
            LOGGER.error('diagnostic %s failed: %s', name, e)
            failures.append(e)

    runs = {}
    for arm in cfg['arms']:
        for seed in cfg['seeds']:
            directory = run_dir(cfg, arm['name'], seed)
            try:
                runs[(arm['name'], seed)] = _load_student(directory)
            except (RcoError, ValueError, OSError) as e:
                LOGGER.error('cannot read run %s: %s', directory, e)
                failures.append(e)

    def _summary():
        summarize_arms([r[0] for r in runs.values()]).to_csv(
            os.path.join(adir, 'summary.csv'), index=False)

    _diag('summary', _summary)

    trajectory = None
    try:
        trajectory = load_trajectory(teacher_dir(cfg))
    except (RcoError, ValueError, OSError) as e:
        LOGGER.error('cannot read the teacher trajectory: %s', e)
        failures.append(e)

    need_data = acfg.get('kl_curve') or acfg.get('noise') is not None
    if data is None and need_data:
        try:
            data = load_experiment_data(cfg['dataset'])
        except (RcoError, ValueError, OSError) as e:
            LOGGER.error('cannot load the dataset: %s', e)
            failures.append(e)

    tau = cfg['distill']['temperature']
    has_val = data is not None and data.val is not None
    if acfg.get('kl_curve') and trajectory is not None and has_val:
        for (name, seed), (_, spec, params) in sorted(runs.items()):
            def _curve(name=name, seed=seed, spec=spec, params=params):
                curve = kl_curve(
                    spec, params, trajectory, data.val, tau,
                    tag='%s_seed%d' % (name, seed))
                write_csv(curve, os.path.join(
                    adir, 'kl_curve_%s_seed%d.csv' % (name, seed)))
            _diag('kl_curve %s seed %d' % (name, seed), _curve)

    if acfg.get('pca'):
        if trajectory is not None and len(trajectory) < 3:
            LOGGER.info(
                'only %d teacher checkpoints, skipping pca', len(trajectory))
        elif trajectory is not None:
            def _teacher_pca():
                proj = pca_trajectory(
                    [c.params for c in trajectory.checkpoints],
                    keys=trajectory.keys)
                write_csv(proj, os.path.join(adir, 'pca_teacher.csv'))
            _diag('pca teacher', _teacher_pca)

        for (name, seed) in sorted(runs):
            route = os.path.join(run_dir(cfg, name, seed), 'route')
            if not os.path.exists(route):
                continue

            def _route_pca(name=name, seed=seed, route=route):
                traj = load_trajectory(route)
                if len(traj) < 3:
                    LOGGER.info(
                        'route of %s seed %d too short for pca', name, seed)
                    return
                proj = pca_trajectory(
                    [c.params for c in traj.checkpoints], keys=traj.keys)
                write_csv(proj, os.path.join(
                    adir, 'pca_%s_seed%d.csv' % (name, seed)))
            _diag('pca %s seed %d' % (name, seed), _route_pca)

    ncfg = acfg.get('noise')
    if ncfg is not None and data is not None:
        arms = ncfg.get('arms') or [a['name'] for a in cfg['arms']][:2]
        if len(arms) != 2:
            LOGGER.info('noise sweep needs two arms, skipping')
        else:
            teacher = None
            if trajectory is not None:
                teacher = (trajectory.spec, trajectory.final.params)
            for seed in cfg['seeds']:
                def _noise(seed=seed):
                    for a in arms:
                        if (a, seed) not in runs:
                            raise ConfigError(
                                'analysis.noise.arms',
                                'no run for arm %r seed %d' % (a, seed))
                    _, spec_a, params_a = runs[(arms[0], seed)]
                    _, spec_b, params_b = runs[(arms[1], seed)]
                    sweep = noise_sweep(
                        (spec_a, params_a), (spec_b, params_b), data.test,
                        deltas=ncfg['deltas'], seed=ncfg['seed'],
                        teacher=teacher, distill_cfg=build_distill(cfg))
                    write_csv(sweep, os.path.join(
                        adir, 'noise_%s_vs_%s_seed%d.csv' % (
                            arms[0], arms[1], seed)))
                _diag('noise seed %d' % seed, _noise)

    return failures


def cmd_all(cfg):
    """train-teacher, then distill, then analyze."""
    data = load_experiment_data(cfg['dataset'])
    cmd_train_teacher(cfg, data=data)
    cmd_distill(cfg, data=data)
    return cmd_analyze(cfg, data=data)


def _setup_logging(verbose):
    level = logging.DEBUG if verbose else logging.INFO
    lgr = logging.getLogger('rcosims')
    if not any(getattr(h, '_rcosims', False) for h in lgr.handlers):
        hdr = logging.StreamHandler(sys.stdout)
        hdr.setFormatter(logging.Formatter(logging.BASIC_FORMAT))
        hdr._rcosims = True
        lgr.addHandler(hdr)
    lgr.setLevel(level)


def make_parser():
    parser = argparse.ArgumentParser(
        prog='rcosims',
        description='route-constrained knowledge distillation experiments')
    sub = parser.add_subparsers(dest='command')
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument(
            '--config', required=True, help='experiment config (JSON)')
        p.add_argument('--out', default=None, help='output directory')
        p.add_argument(
            '--seed-override', type=int, nargs='+', default=None,
            help='replace the seeds list of the config')
        p.add_argument(
            '--threads', type=int, default=None,
            help='number of parallel student runs')
        p.add_argument(
            '-v', '--verbose', action='store_true', help='debug logging')
    return parser


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return get_exit_code('config')

    _setup_logging(args.verbose)
    start = time.time()
    try:
        cfg = load_config(
            args.config, out=args.out, seed_override=args.seed_override,
            threads=args.threads)
        write_config(cfg, cfg['out'])

        failures = []
        if args.command == 'train-teacher':
            cmd_train_teacher(cfg)
        elif args.command == 'distill':
            cmd_distill(cfg)
        elif args.command == 'analyze':
            failures = cmd_analyze(cfg)
        else:
            failures = cmd_all(cfg)
    except RcoError as e:
        LOGGER.error('%s: %s', type(e).__name__, e)
        return get_exit_code(e)
    except OSError as e:
        LOGGER.error('%s', e)
        return DATA_FAILURE
    except ValueError as e:
        LOGGER.error('invalid setting: %s', e)
        return CONFIG_FAILURE

    LOGGER.info('%s done in %.1f s', args.command, time.time() - start)
    if failures:
        if isinstance(failures[0], OSError):
            return DATA_FAILURE
        return get_exit_code(failures[0])
    return OK


if __name__ == '__main__':
    sys.exit(main())
