"""SGD with momentum and weight decay plus step learning-rate schedules."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

# fractions of the budget at which the default schedule drops the learning
# rate; 150/180/210 out of 240 epochs
DEFAULT_DROP_FRACS = (0.625, 0.75, 0.875)


@dataclass(frozen=True)
class LrSchedule:
    """A step learning-rate schedule.

    Parameters
    ----------
    initial_lr : float
        Learning rate at epoch 0.
    drop_epochs : tuple of int
        Epochs (zero-indexed) at which the rate is multiplied by
        `drop_factor`. Strictly increasing, all below `total_epochs`.
    drop_factor : float
        Multiplier applied at every drop, in (0, 1).
    total_epochs : int
        Length of the schedule.
    """
    initial_lr: float
    drop_epochs: tuple = ()
    drop_factor: float = 0.1
    total_epochs: int = 1

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ValueError(
                'initial_lr must be > 0, got %r' % self.initial_lr)
        if not 0 < self.drop_factor < 1:
            raise ValueError(
                'drop_factor must be in (0, 1), got %r' % self.drop_factor)
        if self.total_epochs < 1:
            raise ValueError(
                'total_epochs must be >= 1, got %r' % self.total_epochs)
        drops = list(self.drop_epochs)
        for a, b in zip(drops[:-1], drops[1:]):
            if not b > a:
                raise ValueError(
                    'drop_epochs must be strictly increasing, got %s' % drops)
        for d in drops:
            if d < 0 or d >= self.total_epochs:
                raise ValueError(
                    'drop epoch %d outside [0, %d)' % (d, self.total_epochs))


@dataclass(frozen=True)
class SgdConfig:
    """SGD hyper-parameters.

    Parameters
    ----------
    momentum : float
        In [0, 1).
    weight_decay : float
        L2 coefficient added to the gradient, >= 0.
    schedule : LrSchedule
        The learning-rate schedule.
    """
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule(0.05))

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise ValueError(
                'momentum must be in [0, 1), got %r' % self.momentum)
        if self.weight_decay < 0:
            raise ValueError(
                'weight_decay must be >= 0, got %r' % self.weight_decay)


def default_drop_epochs(total_epochs, fracs=DEFAULT_DROP_FRACS):
    """Drop epochs at fixed fractions of the budget, deduplicated."""
    drops = []
    for f in fracs:
        e = int(round(f * total_epochs))
        if 0 < e < total_epochs and (len(drops) == 0 or e > drops[-1]):
            drops.append(e)
    return tuple(drops)


def lr_at(schedule, epoch):
    """Learning rate for a zero-indexed epoch.

    Parameters
    ----------
    schedule : LrSchedule
        The schedule.
    epoch : int
        The epoch, in [0, total_epochs).

    Returns
    -------
    lr : float
        initial_lr * drop_factor ** (number of drop epochs <= epoch)
    """
    if not 0 <= epoch < schedule.total_epochs:
        raise ValueError(
            'epoch %r outside [0, %d)' % (epoch, schedule.total_epochs))
    n_drops = sum(1 for d in schedule.drop_epochs if d <= epoch)
    return schedule.initial_lr * schedule.drop_factor ** n_drops


def stretched_lr_at(schedule, epoch, total_epochs):
    """Learning rate when one schedule is stretched over `total_epochs`.

    Used when a multi-stage run keeps one continuous schedule instead of
    restarting it at every stage.
    """
    if not 0 <= epoch < total_epochs:
        raise ValueError('epoch %r outside [0, %d)' % (epoch, total_epochs))
    e = (epoch * schedule.total_epochs) // total_epochs
    return lr_at(schedule, e)


def sgd_step(params, grads, velocity, cfg, lr):
    """One SGD step with momentum and weight decay.

    The effective gradient is g' = g + weight_decay * w, the velocity becomes
    v' = momentum * v + g' and the weights w' = w - lr * v'.

    Parameters
    ----------
    params, grads, velocity : list
        Parameter-shaped structures.
    cfg : SgdConfig
        Momentum and weight decay.
    lr : float
        The learning rate, >= 0.

    Returns
    -------
    params, velocity : list
        New parameter and velocity structures. Inputs are not modified.
    """
    if lr < 0:
        raise ValueError('lr must be >= 0, got %r' % lr)
    if not len(params) == len(grads) == len(velocity):
        raise ShapeError('params, grads and velocity have different lengths')

    new_params = []
    new_velocity = []
    for i, (p, g, v) in enumerate(zip(params, grads, velocity)):
        if p is None:
            new_params.append(None)
            new_velocity.append(None)
            continue
        out_p = []
        out_v = []
        for w, gw, vw in zip(p, g, v):
            if not w.shape == gw.shape == vw.shape:
                raise ShapeError(
                    'layer %d: shapes disagree: params %s, grads %s, '
                    'velocity %s' % (i, w.shape, gw.shape, vw.shape))
            geff = gw + cfg.weight_decay * w
            vnew = cfg.momentum * vw + geff
            out_p.append((w - lr * vnew).astype(w.dtype, copy=False))
            out_v.append(vnew.astype(w.dtype, copy=False))
        new_params.append(tuple(out_p))
        new_velocity.append(tuple(out_v))

    return new_params, new_velocity


def schedule_from_dict(d, total_epochs):
    """Build an LrSchedule from its config form.

    `drop_epochs` may be None, in which case drops are placed at the default
    fractions of `total_epochs`.
    """
    drops = d.get('drop_epochs')
    if drops is None:
        drops = default_drop_epochs(total_epochs)
    return LrSchedule(
        initial_lr=float(d['lr']),
        drop_epochs=tuple(int(e) for e in drops),
        drop_factor=float(d.get('drop_factor', 0.1)),
        total_epochs=int(total_epochs))


def sgd_from_dict(d, total_epochs):
    """Build an SgdConfig from its config form."""
    return SgdConfig(
        momentum=float(d.get('momentum', 0.9)),
        weight_decay=float(d.get('weight_decay', 5e-4)),
        schedule=schedule_from_dict(d, total_epochs))
