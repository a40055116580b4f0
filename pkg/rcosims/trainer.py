"""Student training against a sequence of teacher anchors.

A student is initialized once and then trained stage by stage; only the
supervising anchor changes between stages, the weights carry over. The KD
baseline is the one-anchor special case and runs through exactly the same
code, as does the plain cross-entropy baseline (no anchor at all).
"""
import bisect
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import tqdm

from .analysis import top1
from .errors import ConfigError
from .loop import EpochSeeds, train_epoch
from .losses import ce_loss, rco_step_loss, mimic_loss, softened_kl
from .nn import (
    LayerSpec, NetworkSpec, init_params, zeros_like_params, forward, backward,
    layer_output_shapes, spec_digest, spec_to_dict)
from .optim import lr_at, stretched_lr_at
from .strategy import (
    AnchorSchedule, validate_schedule, greedy_search, predict_logits)
from .trajectory import (
    Checkpoint, Trajectory, save_checkpoint, save_trajectory)

LOGGER = logging.getLogger(__name__)

LOSS_KINDS = ('kd', 'hint', 'hint+kd')
HINT_KINDS = ('hint', 'hint+kd')
EPOCH_COLUMNS = (
    'epoch', 'lr', 'train_loss', 'anchor_epoch', 'val_kl', 'test_top1')

# offset between a run's seed and the seed of its hint adapter
ADAPTER_SEED_OFFSET = 2000000


@dataclass(frozen=True)
class RcoRunConfig:
    """Everything that defines one student run.

    Parameters
    ----------
    student_spec : NetworkSpec
        The student network.
    distill : DistillConfig
        Temperature, balance and KL scaling.
    train : TrainConfig
        SGD settings, epochs per stage (the whole budget for one-stage
        runs), batch size and seed.
    schedule : AnchorSchedule
        The anchors.
    loss_kind : str, optional
        'kd' (default), 'hint' (CE + hint_weight * mimic) or 'hint+kd'
        (anchor loss + hint_weight * mimic).
    hint_weight : float, optional
        Weight of the mimic term.
    restart_lr : bool, optional
        Multi-stage runs only. If True (default) every stage restarts the
        learning-rate schedule and the momentum buffer; otherwise a single
        schedule is stretched over all stages.
    gs : GsConfig, optional
        Required for greedy-search runs.
    snapshot_every : int, optional
        Keep a copy of the student every this many epochs (0 disables).
    eval_batch_size : int, optional
        Chunk size for evaluation forward passes.
    progress : bool, optional
        Show progress bars.
    name : str, optional
        Arm name used in logs and reports.
    """
    student_spec: NetworkSpec
    distill: object
    train: object
    schedule: AnchorSchedule
    loss_kind: str = 'kd'
    hint_weight: float = 1.0
    restart_lr: bool = True
    gs: object = None
    snapshot_every: int = 0
    eval_batch_size: int = 1000
    progress: bool = True
    name: str = ''

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(
                'distill.loss_kind', 'must be one of %s, got %r' % (
                    LOSS_KINDS, self.loss_kind))
        if self.hint_weight < 0:
            raise ConfigError('distill.hint_weight', 'must be >= 0')
        if self.train.epochs > 0 and (
                self.train.sgd.schedule.total_epochs != self.train.epochs):
            raise ConfigError(
                'student.sgd', 'schedule spans %d epochs, stage has %d' % (
                    self.train.sgd.schedule.total_epochs, self.train.epochs))
        if self.schedule.mode == 'gs':
            if self.gs is None:
                raise ConfigError('strategy.delta', 'gs runs need a GsConfig')
            if not self.restart_lr:
                raise ConfigError(
                    'distill.restart_lr',
                    'greedy search needs restart_lr: its stage count is '
                    'not known in advance')
        if self.snapshot_every < 0:
            raise ConfigError('student.snapshot_every', 'must be >= 0')


@dataclass
class RunReport:
    """The outcome of a student run.

    `rows` holds one dict per epoch with the keys in `EPOCH_COLUMNS`.
    `switch_epochs` (and `switch_steps`) record how many epochs (steps) had
    been completed when the supervising anchor changed. `wall_clock` is
    logged and kept here but never written to disk.
    """
    name: str
    mode: str
    seed: int
    student_spec: NetworkSpec
    params: list
    rows: list = field(default_factory=list)
    anchor_epochs: list = field(default_factory=list)
    switch_epochs: list = field(default_factory=list)
    switch_steps: list = field(default_factory=list)
    n_steps: int = 0
    restart_lr: bool = True
    loss_kind: str = 'kd'
    snapshots: list = field(default_factory=list)
    hardness_tables: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def final(self):
        if len(self.rows) == 0:
            return {c: None for c in EPOCH_COLUMNS}
        return dict(self.rows[-1])

    def epochs_frame(self):
        return pd.DataFrame(
            [[r[c] for c in EPOCH_COLUMNS] for r in self.rows],
            columns=list(EPOCH_COLUMNS))

    def to_dict(self):
        return {
            'name': self.name,
            'mode': self.mode,
            'seed': self.seed,
            'loss_kind': self.loss_kind,
            'restart_lr': self.restart_lr,
            'anchor_epochs': list(self.anchor_epochs),
            'switch_epochs': list(self.switch_epochs),
            'switch_steps': list(self.switch_steps),
            'n_epochs': len(self.rows),
            'n_steps': self.n_steps,
            'final': self.final,
            'student_spec': spec_to_dict(self.student_spec),
        }

    def student_checkpoint(self):
        last = self.final
        return Checkpoint(
            epoch=len(self.rows), params=self.params,
            lr_at_capture=last['lr'] if last['lr'] is not None else 0.0,
            train_loss=(
                last['train_loss'] if last['train_loss'] is not None
                else 0.0),
            spec_hash=spec_digest(self.student_spec), seed=self.seed,
            step=self.n_steps)

    def write(self, directory):
        """Write report.json, epochs.csv, student.rco and, when present,
        hardness.csv and the snapshot route."""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, 'report.json'), 'w') as fp:
            json.dump(self.to_dict(), fp, sort_keys=True, indent=2)
        self.epochs_frame().to_csv(
            os.path.join(directory, 'epochs.csv'), index=False)
        save_checkpoint(
            self.student_checkpoint(), os.path.join(directory, 'student.rco'))
        if self.hardness_tables:
            pd.concat(
                [t.to_frame() for t in self.hardness_tables],
                ignore_index=True,
            ).to_csv(os.path.join(directory, 'hardness.csv'), index=False)
        if self.snapshots:
            save_trajectory(
                Trajectory(
                    checkpoints=self.snapshots, spec=self.student_spec,
                    config={}, unit='epoch'),
                os.path.join(directory, 'route'))


def feature_size(spec):
    """Number of features per example at the spec's feature tap."""
    return int(np.prod(layer_output_shapes(spec)[spec.feature_tap]))


def make_adapter_spec(n_in, n_out):
    """A single dense layer projecting student features onto the teacher's."""
    return NetworkSpec(
        layers=(LayerSpec('dense', n_in, n_out),), num_classes=n_out,
        feature_tap=0, input_shape=(n_in,))


def distill_objective(
        cfg, params, images, labels, teacher_logits=None,
        teacher_features=None, adapter=None):
    """Loss and gradients of one student minibatch.

    Parameters
    ----------
    cfg : RcoRunConfig
        The run settings; `loss_kind`, `distill` and `hint_weight` are read.
    params : list
        Student parameters.
    images, labels : np.ndarray
        The batch.
    teacher_logits : np.ndarray, optional
        Anchor outputs for the batch. None trains with plain cross-entropy.
    teacher_features : np.ndarray, optional
        Anchor features for the batch, needed by the hint losses.
    adapter : tuple, optional
        `(adapter_spec, adapter_params)` when feature sizes differ.

    Returns
    -------
    loss : float
        The objective.
    grads : list
        Student gradients.
    adapter_grads : list
        Adapter gradients (empty without an adapter).
    parts : dict
        The individual terms: 'anchor' or 'ce', and 'mimic' for hint runs.
    """
    spec = cfg.student_spec
    logits, feats, cache = forward(spec, params, images, return_cache=True)
    parts = {}
    if teacher_logits is None or cfg.loss_kind == 'hint':
        loss, g = ce_loss(logits, labels)
        parts['ce'] = loss
    else:
        loss, g = rco_step_loss(logits, teacher_logits, labels, cfg.distill)
        parts['anchor'] = loss

    feature_grad = None
    adapter_grads = []
    if cfg.loss_kind in HINT_KINDS and teacher_features is not None:
        n = feats.shape[0]
        f = feats.reshape(n, -1)
        ft = np.asarray(teacher_features).reshape(n, -1)
        if adapter is not None:
            aspec, aparams = adapter
            proj, _ = forward(aspec, aparams, f)
            m, gproj = mimic_loss(proj, ft)
            adapter_grads = backward(aspec, aparams, f, gproj)
            gf = gproj @ aparams[0][0]
        else:
            m, gf = mimic_loss(f, ft)
        parts['mimic'] = m
        loss = loss + cfg.hint_weight * m
        feature_grad = (cfg.hint_weight * gf).reshape(feats.shape).astype(
            logits.dtype, copy=False)

    grads = backward(
        spec, params, images, g, feature_grad=feature_grad, cache=cache)
    return loss, grads, adapter_grads, parts


class _AnchorTargets(object):
    """Anchor outputs for the student objective.

    Training targets are computed on each minibatch, so switching anchors
    costs nothing extra. Validation logits are cached per distinct anchor.
    """

    def __init__(self, teacher_spec, data, need_features, batch_size):
        self.teacher_spec = teacher_spec
        self.data = data
        self.need_features = need_features
        self.batch_size = batch_size
        self._val = {}
        self.n_val_passes = 0

    def batch(self, anchor, images):
        """(logits, flattened features or None) of an anchor on a batch."""
        if anchor is None:
            return None, None
        logits, feats = forward(self.teacher_spec, anchor.params, images)
        if not self.need_features:
            return logits, None
        return logits, feats.reshape(feats.shape[0], -1)

    def val_logits(self, anchor):
        """Anchor logits on the validation set, or None without one."""
        if anchor is None:
            return None
        if self.data.val is None or len(self.data.val) == 0:
            return None
        # keyed on identity; the anchor is kept alive alongside its logits
        hit = self._val.get(id(anchor))
        if hit is None or hit[0] is not anchor:
            logits = predict_logits(
                self.teacher_spec, anchor.params, self.data.val.images,
                self.batch_size)
            self.n_val_passes += 1
            hit = (anchor, logits)
            self._val[id(anchor)] = hit
        return hit[1]


class _StudentRun(object):
    """Mutable state of one student run: weights, momentum, counters."""

    def __init__(self, cfg, teacher_spec, data, callback=None):
        self.cfg = cfg
        self.data = data
        self.callback = callback
        spec = cfg.student_spec
        seed = cfg.train.seed

        self.params = init_params(spec, seed)
        self.adapter_spec = None
        self.adapter_params = []
        need_features = (
            cfg.loss_kind in HINT_KINDS and teacher_spec is not None)
        if need_features:
            n_s = feature_size(spec)
            n_t = feature_size(teacher_spec)
            if n_s != n_t:
                LOGGER.info(
                    'hint adapter: projecting %d student features onto %d',
                    n_s, n_t)
                self.adapter_spec = make_adapter_spec(n_s, n_t)
                self.adapter_params = init_params(
                    self.adapter_spec, seed + ADAPTER_SEED_OFFSET)

        self.velocity = zeros_like_params(self._all_params())
        self.targets = _AnchorTargets(
            teacher_spec, data, need_features, cfg.eval_batch_size)
        self.seeds = EpochSeeds(seed)
        self.epoch = 0
        self.step = 0
        self.rows = []
        self.switch_epochs = []
        self.switch_steps = []
        self.snapshots = []
        self._t0 = time.time()
        if cfg.snapshot_every > 0:
            self._snapshot(0.0, float('nan'))

    def _all_params(self):
        return list(self.params) + list(self.adapter_params)

    def _split(self, params):
        n = len(self.params)
        return params[:n], params[n:]

    def _emit(self, event, **info):
        if self.callback is not None:
            info.setdefault('epoch', self.epoch)
            info.setdefault('step', self.step)
            info.setdefault('params', self.params)
            self.callback(event, info)

    def _snapshot(self, lr, train_loss):
        self.snapshots.append(Checkpoint(
            epoch=self.epoch, params=self.params, lr_at_capture=lr,
            train_loss=train_loss,
            spec_hash=spec_digest(self.cfg.student_spec),
            seed=self.cfg.train.seed, step=self.step))

    def _switch(self, stage, anchor_key, step=None, params=None):
        if step is None:
            step = self.step
        if params is None:
            params = self.params
        self.switch_epochs.append(self.epoch)
        self.switch_steps.append(step)
        LOGGER.debug(
            '%s: switching to anchor %s after %d steps',
            self.cfg.name, anchor_key, step)
        self._emit(
            'stage_start', stage=stage, anchor_epoch=anchor_key, step=step,
            params=params)

    def _grad_fn(self, anchor_for_step):
        cfg = self.cfg

        def _fn(step, params, inds, images, labels):
            sparams, aparams = self._split(params)
            anchor = anchor_for_step(step, sparams)
            t_logits, t_feats = self.targets.batch(anchor, images)
            adapter = None
            if self.adapter_spec is not None:
                adapter = (self.adapter_spec, aparams)
            loss, grads, agrads, _ = distill_objective(
                cfg, sparams, images, labels, teacher_logits=t_logits,
                teacher_features=t_feats, adapter=adapter)
            return loss, list(grads) + list(agrads)

        return _fn

    def run_epoch(self, lr, anchor_for_step, anchor_key_fn):
        cfg = self.cfg
        res = train_epoch(
            self._all_params(), self.velocity,
            self._grad_fn(anchor_for_step), self.data.train,
            cfg.train.batch_size, self.seeds.next(), cfg.train.sgd, lr,
            step_offset=self.step)
        self.params, self.adapter_params = self._split(res.params)
        self.velocity = res.velocity
        self.step += res.n_steps
        self.epoch += 1

        anchor, key = anchor_key_fn()
        self.rows.append(self._evaluate(lr, res.train_loss, anchor, key))
        if cfg.snapshot_every > 0 and self.epoch % cfg.snapshot_every == 0:
            self._snapshot(lr, res.train_loss)
        self._emit('epoch_end', anchor_epoch=key, row=self.rows[-1])

    def _evaluate(self, lr, train_loss, anchor, key):
        cfg = self.cfg
        val_kl = None
        a_logits = self.targets.val_logits(anchor)
        if a_logits is not None:
            s_logits = predict_logits(
                cfg.student_spec, self.params, self.data.val.images,
                cfg.eval_batch_size)
            val_kl = softened_kl(a_logits, s_logits, cfg.distill.temperature)
        test_top1 = None
        if self.data.test is not None and len(self.data.test) > 0:
            test_top1 = top1(
                cfg.student_spec, self.params, self.data.test,
                batch_size=cfg.eval_batch_size)
        return {
            'epoch': self.epoch,
            'lr': lr,
            'train_loss': train_loss,
            'anchor_epoch': key,
            'val_kl': val_kl,
            'test_top1': test_top1,
        }

    def run_stage(self, anchor, key, stage, n_stages=None):
        """Train `cfg.train.epochs` epochs against one anchor."""
        cfg = self.cfg
        n_epochs = cfg.train.epochs
        schedule = cfg.train.sgd.schedule
        if stage > 0:
            if cfg.restart_lr:
                self.velocity = zeros_like_params(self.velocity)
            self._switch(stage, key)
        else:
            self._emit('stage_start', stage=stage, anchor_epoch=key)

        def _anchor_for_step(step, params):
            return anchor

        def _anchor_key():
            return anchor, key

        for e in tqdm.trange(n_epochs, leave=False, disable=not cfg.progress):
            if cfg.restart_lr:
                lr = lr_at(schedule, e)
            else:
                lr = stretched_lr_at(
                    schedule, e + stage * n_epochs, n_epochs * n_stages)
            self.run_epoch(lr, _anchor_for_step, _anchor_key)

    def run_one_stage(self, anchors, keys, switch_points, unit):
        """One schedule; anchor k supervises until switch_points[k]."""
        cfg = self.cfg
        schedule = cfg.train.sgd.schedule
        state = {'k': 0}

        def _anchor_for_step(step, params):
            pos = step if unit == 'iteration' else self.epoch
            k = min(bisect.bisect_right(switch_points, pos), len(anchors) - 1)
            if k != state['k']:
                state['k'] = k
                self._switch(k, keys[k], step=step, params=params)
            return anchors[k]

        def _anchor_key():
            return anchors[state['k']], keys[state['k']]

        self._emit('stage_start', stage=0, anchor_epoch=keys[0])
        for e in tqdm.trange(
                cfg.train.epochs, leave=False, disable=not cfg.progress):
            self.run_epoch(lr_at(schedule, e), _anchor_for_step, _anchor_key)

    def report(self, mode, anchor_epochs, hardness_tables=()):
        cfg = self.cfg
        wall = time.time() - self._t0
        LOGGER.info(
            '%s (%s, seed %d): %d epochs, %d steps in %.1f s',
            cfg.name or mode, mode, cfg.train.seed, self.epoch, self.step,
            wall)
        return RunReport(
            name=cfg.name or mode, mode=mode, seed=cfg.train.seed,
            student_spec=cfg.student_spec, params=self.params,
            rows=self.rows, anchor_epochs=list(anchor_epochs),
            switch_epochs=self.switch_epochs,
            switch_steps=self.switch_steps, n_steps=self.step,
            restart_lr=cfg.restart_lr, loss_kind=cfg.loss_kind,
            snapshots=self.snapshots,
            hardness_tables=list(hardness_tables), wall_clock=wall)


def train_rco(cfg, trajectory, data, callback=None):
    """Multi-stage route-constrained training.

    The student is initialized once; for each anchor of `cfg.schedule` in
    order it continues from the previous weights and is trained for
    `cfg.train.epochs` epochs against that anchor.

    Parameters
    ----------
    cfg : RcoRunConfig
        The run settings.
    trajectory : Trajectory
        The teacher's checkpoints.
    data : ExperimentData
        Train, validation and test sets.
    callback : callable, optional
        Called as `callback(event, info)` with event 'stage_start' or
        'epoch_end'.

    Returns
    -------
    report : RunReport
        The run.
    """
    validate_schedule(cfg.schedule, trajectory)
    anchors = [trajectory.get(k) for k in cfg.schedule.anchor_epochs]
    run = _StudentRun(cfg, trajectory.spec, data, callback=callback)
    for stage, (anchor, key) in enumerate(
            zip(anchors, cfg.schedule.anchor_epochs)):
        run.run_stage(anchor, key, stage, n_stages=len(anchors))
    return run.report(cfg.schedule.mode, cfg.schedule.anchor_epochs)


def train_one_stage(cfg, trajectory, data, callback=None):
    """One-stage training: the anchor switches inside a single schedule.

    `cfg.train.epochs` is the whole budget; `cfg.schedule.switch_epochs`
    says when each anchor hands over to the next.
    """
    sched = cfg.schedule
    if len(sched.switch_epochs) != len(sched.anchor_epochs):
        raise ConfigError(
            'strategy', 'one-stage runs need one switch point per anchor')
    validate_schedule(sched, trajectory)
    anchors = [trajectory.get(k) for k in sched.anchor_epochs]
    run = _StudentRun(cfg, trajectory.spec, data, callback=callback)
    run.run_one_stage(
        anchors, list(sched.anchor_epochs), list(sched.switch_epochs),
        sched.unit)
    return run.report(sched.mode, sched.anchor_epochs)


def train_kd_baseline(
        cfg, teacher_spec, final_checkpoint, data, callback=None):
    """Plain knowledge distillation against a single (converged) checkpoint."""
    if final_checkpoint.spec_hash != spec_digest(teacher_spec):
        raise ConfigError('teacher.spec', 'checkpoint does not match the spec')
    key = cfg.schedule.anchor_epochs[-1] if cfg.schedule.anchor_epochs else (
        final_checkpoint.epoch)
    run = _StudentRun(cfg, teacher_spec, data, callback=callback)
    run.run_stage(final_checkpoint, key, 0, n_stages=1)
    return run.report('kd', [key])


def train_softmax_baseline(cfg, data, callback=None):
    """Cross-entropy training with no teacher."""
    run = _StudentRun(cfg, None, data, callback=callback)
    run.run_stage(None, None, 0, n_stages=1)
    return run.report('softmax', [])


def train_gs(cfg, trajectory, data, callback=None):
    """Greedy search: train, measure hardness, jump to the next anchor.

    The student first trains against the earliest checkpoint. After every
    stage the hardness of all later checkpoints is measured on the
    validation set and `greedy_next_anchor` picks the next one, until the
    final checkpoint has been trained against.
    """
    if data.val is None or len(data.val) == 0:
        raise ConfigError(
            'dataset.val_size', 'greedy search needs a validation set')
    keys = trajectory.keys
    run = _StudentRun(cfg, trajectory.spec, data, callback=callback)

    def _train_stage(position, stage):
        run.run_stage(trajectory.at(position), keys[position], stage)
        return run.params

    schedule, tables = greedy_search(
        _train_stage, cfg.student_spec, trajectory, cfg.gs, data.val,
        cfg.distill.temperature, stage_epochs=cfg.train.epochs)
    return run.report(
        'gs', list(schedule.anchor_epochs), hardness_tables=tables)


def run_arm(cfg, trajectory, data, callback=None):
    """Dispatch a run on `cfg.schedule.mode`."""
    mode = cfg.schedule.mode
    if mode == 'softmax':
        return train_softmax_baseline(cfg, data, callback=callback)
    if mode == 'one_stage_eei':
        return train_one_stage(cfg, trajectory, data, callback=callback)
    if mode == 'gs':
        return train_gs(cfg, trajectory, data, callback=callback)
    if mode == 'kd':
        validate_schedule(cfg.schedule, trajectory)
        return train_kd_baseline(
            cfg, trajectory.spec,
            trajectory.get(cfg.schedule.anchor_epochs[0]), data,
            callback=callback)
    return train_rco(cfg, trajectory, data, callback=callback)
