"""The minibatch SGD epoch loop shared by teacher and student training."""
import logging
from dataclasses import dataclass

import numpy as np

from .data import batch_iter
from .errors import ComputeError
from .optim import sgd_step

LOGGER = logging.getLogger(__name__)

# offset between a run's init seed and the seed of its batch-order stream
BATCH_SEED_OFFSET = 1000000


@dataclass(frozen=True)
class TrainConfig:
    """How one network is trained.

    Parameters
    ----------
    sgd : SgdConfig
        Optimizer settings; its schedule spans `epochs`.
    epochs : int
        Number of epochs (per stage for multi-stage student runs).
    batch_size : int
        Minibatch size.
    seed : int
        Seed for the initial parameters and the batch order.
    """
    sgd: object
    epochs: int
    batch_size: int
    seed: int

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError('epochs must be >= 0, got %r' % self.epochs)
        if self.batch_size < 1:
            raise ValueError(
                'batch_size must be >= 1, got %r' % self.batch_size)


class EpochSeeds(object):
    """A stream of per-epoch shuffle seeds.

    The seeds are drawn one at a time from an MT19937 stream, so the first k
    seeds do not depend on how many are eventually consumed.

    Parameters
    ----------
    seed : int
        The run seed.
    """
    def __init__(self, seed):
        self._rng = np.random.RandomState(seed=seed + BATCH_SEED_OFFSET)

    def next(self):
        return int(self._rng.randint(0, 2**31 - 1))


@dataclass
class EpochResult:
    params: list
    velocity: list
    train_loss: float
    n_steps: int


def train_epoch(
        params, velocity, grad_fn, data, batch_size, epoch_seed, sgd_cfg, lr,
        step_offset=0, on_step=None):
    """Run one epoch of minibatch SGD.

    Parameters
    ----------
    params, velocity : list
        Parameter and momentum structures.
    grad_fn : callable
        `grad_fn(step, params, inds, images, labels)` returning
        `(loss, grads)` for the batch; `step` is the global optimizer step.
    data : Dataset
        The training set.
    batch_size : int
        The minibatch size.
    epoch_seed : int
        Seed for the batch order.
    sgd_cfg : SgdConfig
        Momentum and weight decay.
    lr : float
        The learning rate for this epoch.
    step_offset : int, optional
        Global step of the first batch.
    on_step : callable, optional
        Called as `on_step(step, params, running_loss)` after every update
        with the number of steps taken so far.

    Returns
    -------
    res : EpochResult
        Updated params and velocity plus the example-weighted mean loss.
    """
    total = 0.0
    count = 0
    n_steps = 0
    for inds, images, labels in batch_iter(data, batch_size, epoch_seed):
        step = step_offset + n_steps
        loss, grads = grad_fn(step, params, inds, images, labels)
        if not np.isfinite(loss):
            raise ComputeError(
                'non-finite loss %r at step %d' % (loss, step))
        params, velocity = sgd_step(params, grads, velocity, sgd_cfg, lr)
        total += loss * len(inds)
        count += len(inds)
        n_steps += 1
        if on_step is not None:
            on_step(step + 1, params, total / count)

    for i, p in enumerate(params):
        if p is not None and not (
                np.all(np.isfinite(p[0])) and np.all(np.isfinite(p[1]))):
            raise ComputeError('layer %d has non-finite parameters' % i)

    train_loss = total / count if count > 0 else float('nan')
    return EpochResult(
        params=params, velocity=velocity, train_loss=train_loss,
        n_steps=n_steps)
