"""Experiment configuration: JSON files merged over the defaults, validated,
and turned into the objects the trainers take."""
import copy
import json
import logging
import os

from .defaults import (
    DEFAULT_EXPERIMENT_CONFIG, DEFAULT_SPECS, STRATEGY_KEYS)
from .errors import ConfigError, ShapeError
from .loop import TrainConfig
from .losses import DistillConfig
from .nn import spec_from_dict, spec_to_dict
from .optim import sgd_from_dict
from .strategy import (
    MODES, AnchorSchedule, GsConfig, kd_schedule, eei_schedule,
    one_stage_eei_schedule)
from .trainer import RcoRunConfig, LOSS_KINDS

LOGGER = logging.getLogger(__name__)

DATASET_NAMES = ('mnist', 'fashion-mnist', 'cifar10', 'synthetic')
CONFIG_NAME = 'config.json'
DEFAULT_VAL_SIZE = 10000


def deep_merge(base, override):
    """Recursively merge `override` into a copy of `base`.

    Dicts merge key by key; every other value in `override` replaces the
    one in `base`.
    """
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _require(cond, field, msg):
    if not cond:
        raise ConfigError(field, msg)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _check_spec(d, field):
    try:
        return spec_from_dict(d)
    except (KeyError, TypeError) as e:
        raise ConfigError(field, 'malformed network spec: %s' % e)
    except (ShapeError, ValueError) as e:
        raise ConfigError(field, str(e))


def _check_sgd(d, epochs, field):
    for key in ('lr', 'momentum', 'weight_decay', 'drop_factor'):
        _require(
            isinstance(d.get(key), (int, float)), '%s.%s' % (field, key),
            'must be a number')
    try:
        return sgd_from_dict(d, epochs)
    except ValueError as e:
        raise ConfigError(field, str(e))


def _check_paths(dcfg):
    name = dcfg['name']
    if name in ('mnist', 'fashion-mnist'):
        keys = ('train_images', 'train_labels', 'test_images', 'test_labels')
        for key in keys:
            path = dcfg.get(key)
            _require(
                isinstance(path, str), 'dataset.%s' % key, 'path is required')
            _require(
                os.path.exists(path), 'dataset.%s' % key,
                'no such file: %s' % path)
    elif name == 'cifar10':
        for key in ('train_files', 'test_files'):
            paths = dcfg.get(key)
            _require(
                isinstance(paths, list) and len(paths) > 0,
                'dataset.%s' % key, 'a nonempty list of files is required')
            for i, path in enumerate(paths):
                _require(
                    os.path.exists(path), 'dataset.%s.%d' % (key, i),
                    'no such file: %s' % path)


def _normalize_arms(cfg):
    if cfg.get('strategy') is not None and cfg.get('arms') is not None:
        raise ConfigError('strategy', 'give either strategy or arms, not both')
    if cfg.get('arms') is not None:
        arms = cfg['arms']
        _require(
            isinstance(arms, list) and len(arms) > 0, 'arms',
            'must be a nonempty list')
    elif cfg.get('strategy') is not None:
        arms = [cfg['strategy']]
    else:
        arms = [{'mode': 'kd'}]

    out = []
    for i, arm in enumerate(arms):
        field = 'arms.%d' % i if cfg.get('arms') is not None else 'strategy'
        _require(isinstance(arm, dict), field, 'must be an object')
        arm = dict(arm)
        mode = arm.get('mode')
        _require(
            mode in MODES, field + '.mode',
            'must be one of %s, got %r' % (MODES, mode))
        allowed = set(STRATEGY_KEYS[mode]) | {'mode', 'name'}
        extra = sorted(set(arm) - allowed)
        _require(
            len(extra) == 0, field + '.' + (extra[0] if extra else ''),
            'not a parameter of mode %r' % mode)

        if mode in ('eei', 'one_stage_eei'):
            given = [k for k in ('gap', 'n_anchors') if arm.get(k) is not None]
            _require(
                len(given) == 1, field,
                'mode %r needs exactly one of gap and n_anchors' % mode)
            _require(
                _is_int(arm[given[0]]) and arm[given[0]] >= 1,
                field + '.' + given[0], 'must be an integer >= 1')
        elif mode == 'gs':
            arm.setdefault('delta', 0.8)
            _require(
                isinstance(arm['delta'], (int, float)) and arm['delta'] > 0,
                field + '.delta', 'must be > 0')
        elif mode == 'anchor':
            _require(
                _is_int(arm.get('anchor_epoch')) and arm['anchor_epoch'] >= 1,
                field + '.anchor_epoch', 'must be an integer >= 1')

        if arm.get('name') is None:
            if mode == 'anchor':
                arm['name'] = 'anchor%d' % arm['anchor_epoch']
            else:
                arm['name'] = mode
        out.append(arm)

    names = [a['name'] for a in out]
    for i, name in enumerate(names):
        _require(
            names.index(name) == i, 'arms.%d.name' % i,
            'duplicate arm name %r' % name)
    return out


def resolve_config(cfg):
    """Fill in dataset-dependent defaults and normalize the arms.

    The result is the fully-defaulted effective config; resolving it again
    returns an equal dict.
    """
    cfg = copy.deepcopy(cfg)
    name = cfg['dataset'].get('name')
    _require(
        name in DATASET_NAMES, 'dataset.name',
        'must be one of %s, got %r' % (DATASET_NAMES, name))
    teacher_spec, student_spec = DEFAULT_SPECS[name]
    if cfg['teacher'].get('spec') is None:
        cfg['teacher']['spec'] = copy.deepcopy(teacher_spec)
    if cfg['student'].get('spec') is None:
        cfg['student']['spec'] = copy.deepcopy(student_spec)
    if cfg['student'].get('epochs') is None:
        cfg['student']['epochs'] = cfg['teacher']['epochs']
    if cfg['dataset'].get('val_size') is None:
        if name == 'synthetic':
            n_train = cfg['dataset']['synthetic']['n_train']
            cfg['dataset']['val_size'] = n_train // 5
        else:
            cfg['dataset']['val_size'] = DEFAULT_VAL_SIZE
    cfg['arms'] = _normalize_arms(cfg)
    cfg['strategy'] = None
    return cfg


def validate_config(cfg):
    """Check an effective config, raising ConfigError with the field path.

    Returns
    -------
    cfg : dict
        The same config, with specs round-tripped through NetworkSpec.
    """
    dcfg = cfg['dataset']
    _require(
        dcfg.get('name') in DATASET_NAMES, 'dataset.name',
        'must be one of %s' % (DATASET_NAMES,))
    _check_paths(dcfg)
    val_size = dcfg.get('val_size')
    _require(
        val_size is None or (_is_int(val_size) and val_size >= 0),
        'dataset.val_size', 'must be an integer >= 0')
    if dcfg['name'] == 'synthetic' and val_size:
        _require(
            val_size < dcfg['synthetic']['n_train'], 'dataset.val_size',
            'must be below synthetic.n_train')
    for key in ('train_size', 'test_size'):
        v = dcfg.get(key)
        _require(
            v is None or (_is_int(v) and v >= 1), 'dataset.%s' % key,
            'must be an integer >= 1')

    tcfg = cfg['teacher']
    _require(
        _is_int(tcfg.get('epochs')) and tcfg['epochs'] >= 1,
        'teacher.epochs', 'must be an integer >= 1')
    _require(
        _is_int(tcfg.get('batch_size')) and tcfg['batch_size'] >= 1,
        'teacher.batch_size', 'must be an integer >= 1')
    _require(_is_int(tcfg.get('seed')), 'teacher.seed', 'must be an integer')
    _require(
        _is_int(tcfg.get('capture_every')) and tcfg['capture_every'] >= 1,
        'teacher.capture_every', 'must be an integer >= 1')
    _require(
        tcfg.get('capture_unit') in ('epoch', 'iteration'),
        'teacher.capture_unit', "must be 'epoch' or 'iteration'")
    teacher_spec = _check_spec(tcfg['spec'], 'teacher.spec')
    _check_sgd(tcfg['sgd'], tcfg['epochs'], 'teacher.sgd')

    scfg = cfg['student']
    _require(
        _is_int(scfg.get('epochs')) and scfg['epochs'] >= 1,
        'student.epochs', 'must be an integer >= 1')
    _require(
        _is_int(scfg.get('batch_size')) and scfg['batch_size'] >= 1,
        'student.batch_size', 'must be an integer >= 1')
    _require(
        _is_int(scfg.get('snapshot_every')) and scfg['snapshot_every'] >= 0,
        'student.snapshot_every', 'must be an integer >= 0')
    student_spec = _check_spec(scfg['spec'], 'student.spec')
    _check_sgd(scfg['sgd'], scfg['epochs'], 'student.sgd')
    _require(
        tuple(student_spec.input_shape) == tuple(teacher_spec.input_shape),
        'student.spec.input_shape', 'must match the teacher input shape')
    _require(
        student_spec.num_classes == teacher_spec.num_classes,
        'student.spec.num_classes', 'must match the teacher')

    dist = cfg['distill']
    try:
        DistillConfig(
            temperature=dist['temperature'], balance=dist['balance'],
            kl_grad_scale=bool(dist['kl_grad_scale']))
    except (TypeError, ValueError) as e:
        raise ConfigError('distill', str(e))
    _require(
        dist.get('loss_kind') in LOSS_KINDS, 'distill.loss_kind',
        'must be one of %s' % (LOSS_KINDS,))
    _require(
        isinstance(dist.get('hint_weight'), (int, float)) and
        dist['hint_weight'] >= 0, 'distill.hint_weight', 'must be >= 0')

    arms = _normalize_arms(cfg)
    for i, arm in enumerate(arms):
        if arm['mode'] == 'gs':
            _require(
                dist.get('restart_lr', True), 'distill.restart_lr',
                'greedy search arms need restart_lr')
            _require(
                val_size is not None and val_size > 0, 'dataset.val_size',
                'greedy search arms need a validation set')
        if arm['mode'] == 'anchor':
            _require(
                arm['anchor_epoch'] <= tcfg['epochs'],
                'arms.%d.anchor_epoch' % i,
                'beyond the teacher budget of %d' % tcfg['epochs'])

    seeds = cfg.get('seeds')
    _require(
        isinstance(seeds, list) and len(seeds) > 0 and
        all(_is_int(s) for s in seeds), 'seeds',
        'must be a nonempty list of integers')
    _require(
        _is_int(cfg.get('threads')) and cfg['threads'] >= 1, 'threads',
        'must be an integer >= 1')

    cfg['teacher']['spec'] = spec_to_dict(teacher_spec)
    cfg['student']['spec'] = spec_to_dict(student_spec)
    return cfg


def load_config(path, out=None, seed_override=None, threads=None):
    """Read, default, override and validate an experiment config.

    Parameters
    ----------
    path : str
        The JSON file.
    out : str, optional
        Output directory; overrides the config's `out`.
    seed_override : list of int, optional
        Replaces the `seeds` list.
    threads : int, optional
        Replaces `threads`.

    Returns
    -------
    cfg : dict
        The effective config.
    """
    try:
        with open(path, 'r') as fp:
            user = json.load(fp)
    except FileNotFoundError:
        raise ConfigError('--config', 'no such file: %s' % path)
    except ValueError as e:
        raise ConfigError('--config', 'invalid JSON: %s' % e)
    _require(isinstance(user, dict), '--config', 'must hold a JSON object')
    return make_config(
        user, out=out, seed_override=seed_override, threads=threads)


def make_config(user, out=None, seed_override=None, threads=None):
    """Build the effective config from a user dict; see `load_config`."""
    known = set(DEFAULT_EXPERIMENT_CONFIG) | {'out'}
    for key in user:
        _require(key in known, key, 'unknown config field')
    cfg = deep_merge(DEFAULT_EXPERIMENT_CONFIG, user)
    if out is not None:
        cfg['out'] = out
    cfg.setdefault('out', 'out')
    if seed_override is not None:
        cfg['seeds'] = list(seed_override)
    if threads is not None:
        cfg['threads'] = threads
    cfg = resolve_config(cfg)
    return validate_config(cfg)


def write_config(cfg, directory):
    """Echo the effective config into `directory`/config.json."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, CONFIG_NAME)
    with open(path, 'w') as fp:
        json.dump(cfg, fp, sort_keys=True, indent=2)
    return path


def build_teacher(cfg):
    """The teacher spec, TrainConfig and capture settings of a config."""
    tcfg = cfg['teacher']
    spec = spec_from_dict(tcfg['spec'])
    train = TrainConfig(
        sgd=sgd_from_dict(tcfg['sgd'], tcfg['epochs']),
        epochs=tcfg['epochs'], batch_size=tcfg['batch_size'],
        seed=tcfg['seed'])
    return spec, train, tcfg['capture_every'], tcfg['capture_unit']


def build_distill(cfg):
    dist = cfg['distill']
    return DistillConfig(
        temperature=float(dist['temperature']),
        balance=float(dist['balance']),
        kl_grad_scale=bool(dist['kl_grad_scale']))


def build_schedule(arm, trajectory, epochs, steps_per_epoch):
    """The AnchorSchedule of one arm over a given trajectory."""
    mode = arm['mode']
    keys = trajectory.keys
    unit = trajectory.unit
    try:
        if mode == 'kd':
            return kd_schedule(keys[-1], epochs, unit=unit)
        if mode == 'softmax':
            return AnchorSchedule(mode='softmax', stage_epochs=epochs)
        if mode == 'anchor':
            return AnchorSchedule(
                mode='anchor', anchor_epochs=(arm['anchor_epoch'],),
                stage_epochs=epochs, unit=unit)
        if mode == 'eei':
            return eei_schedule(
                keys, gap=arm.get('gap'), n_anchors=arm.get('n_anchors'),
                stage_epochs=epochs, unit=unit)
        if mode == 'one_stage_eei':
            budget_units = epochs
            if unit == 'iteration':
                budget_units = epochs * steps_per_epoch
            return one_stage_eei_schedule(
                keys, epochs, gap=arm.get('gap'),
                n_anchors=arm.get('n_anchors'), unit=unit,
                budget_unit_total=budget_units)
        return AnchorSchedule(mode='gs', stage_epochs=epochs, unit=unit)
    except ValueError as e:
        raise ConfigError('arms.%s' % arm['name'], str(e))


def build_run_config(cfg, arm, seed, trajectory, n_train, progress=True):
    """The RcoRunConfig of one arm and seed.

    Parameters
    ----------
    cfg : dict
        The effective config.
    arm : dict
        One entry of `cfg['arms']`.
    seed : int
        The student seed.
    trajectory : Trajectory
        The teacher's checkpoints.
    n_train : int
        Number of training examples (for iteration-unit switch points).
    progress : bool, optional
        Show progress bars.
    """
    scfg = cfg['student']
    epochs = scfg['epochs']
    bs = scfg['batch_size']
    steps_per_epoch = (n_train + bs - 1) // bs
    schedule = build_schedule(arm, trajectory, epochs, steps_per_epoch)
    gs = None
    if arm['mode'] == 'gs':
        gs = GsConfig(delta=float(arm['delta']))
    train = TrainConfig(
        sgd=sgd_from_dict(scfg['sgd'], epochs), epochs=epochs,
        batch_size=bs, seed=seed)
    return RcoRunConfig(
        student_spec=spec_from_dict(scfg['spec']),
        distill=build_distill(cfg), train=train, schedule=schedule,
        loss_kind=cfg['distill']['loss_kind'],
        hint_weight=float(cfg['distill']['hint_weight']),
        restart_lr=bool(cfg['distill']['restart_lr']), gs=gs,
        snapshot_every=scfg['snapshot_every'],
        eval_batch_size=scfg['eval_batch_size'], progress=progress,
        name=arm['name'])
