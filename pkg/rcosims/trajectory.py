"""Teacher training with checkpoint capture and the on-disk checkpoint store.

A checkpoint file is laid out as

    magic        8 bytes   b'RCOCKPT\\0'
    version      uint32    little-endian
    spec digest  32 bytes  SHA-256 of the canonical network spec
    meta length  uint32    little-endian
    meta         JSON      epoch, step, lr, train loss, seed, dtype, shapes
    tensors                little-endian floats, weight then bias per layer
    digest       32 bytes  SHA-256 of everything above

A trajectory directory holds one file per checkpoint plus `manifest.json`.
"""
import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import tqdm

from .errors import (
    CheckpointFormatError, CheckpointVersionError, CheckpointDigestError,
    CheckpointTruncatedError, SpecMismatchError, MissingCheckpointError)
from .losses import ce_loss
from .loop import EpochSeeds, train_epoch
from .nn import (
    init_params, zeros_like_params, forward, backward, spec_digest,
    spec_to_dict, spec_from_dict, check_params)
from .optim import lr_at

LOGGER = logging.getLogger(__name__)

MAGIC = b'RCOCKPT\0'
FORMAT_VERSION = 1
MANIFEST_NAME = 'manifest.json'
CAPTURE_UNITS = ('epoch', 'iteration')

_HEADER = struct.Struct('<8sI32sI')
_DTYPES = {'float32': '<f4', 'float64': '<f8'}


@dataclass
class Checkpoint:
    """A snapshot of a network's parameters during training.

    Parameters
    ----------
    epoch : int
        Number of epochs started when the snapshot was taken (1-based; the
        epoch in progress for iteration captures).
    params : list
        The parameters.
    lr_at_capture : float
        The learning rate in effect for the epoch that produced the snapshot.
    train_loss : float
        Mean training loss of that epoch (so far, for iteration captures).
    spec_hash : bytes
        `spec_digest` of the network.
    seed : int
        Seed of the run that produced it.
    step : int, optional
        Global optimizer step at capture.
    """
    epoch: int
    params: list
    lr_at_capture: float
    train_loss: float
    spec_hash: bytes
    seed: int
    step: int = 0


@dataclass
class Trajectory:
    """An ordered list of checkpoints of one network.

    Parameters
    ----------
    checkpoints : list of Checkpoint
        Ordered by `epoch` (or by `step` when `unit` is 'iteration').
    spec : NetworkSpec
        The network.
    config : dict
        JSON form of the training configuration.
    unit : str
        'epoch' or 'iteration'; selects whether checkpoints are keyed by
        epoch or by global step.
    """
    checkpoints: list
    spec: object
    config: dict = field(default_factory=dict)
    unit: str = 'epoch'

    def __post_init__(self):
        if self.unit not in CAPTURE_UNITS:
            raise ValueError('unknown capture unit %r' % self.unit)
        keys = self.keys
        for a, b in zip(keys[:-1], keys[1:]):
            if not b > a:
                raise ValueError(
                    'checkpoint %ss must be strictly increasing, got %s' % (
                        self.unit, keys))
        digest = spec_digest(self.spec)
        for c in self.checkpoints:
            if c.spec_hash != digest:
                raise SpecMismatchError(
                    'checkpoint at epoch %d was made for another spec' % (
                        c.epoch,))

    def __len__(self):
        return len(self.checkpoints)

    def key_of(self, ckpt):
        return ckpt.epoch if self.unit == 'epoch' else ckpt.step

    @property
    def keys(self):
        """Epochs (or steps) of the checkpoints, in order."""
        return [self.key_of(c) for c in self.checkpoints]

    @property
    def final(self):
        return self.checkpoints[-1]

    def at(self, position):
        return self.checkpoints[position]

    def index_of(self, key):
        keys = self.keys
        if key not in keys:
            raise MissingCheckpointError(
                'no checkpoint at %s %r; available: %s' % (
                    self.unit, key, keys))
        return keys.index(key)

    def get(self, key):
        """The checkpoint at a given epoch (or step)."""
        return self.checkpoints[self.index_of(key)]


def train_teacher(
        spec, train_cfg, data, capture_every=1, capture_unit='epoch',
        progress=True):
    """Train a network from scratch with cross-entropy, capturing checkpoints.

    Parameters
    ----------
    spec : NetworkSpec
        The teacher network.
    train_cfg : TrainConfig
        Optimizer, epochs, batch size and seed.
    data : Dataset
        The training set.
    capture_every : int, optional
        Capture period in epochs (or optimizer steps when `capture_unit` is
        'iteration'). The final state is always captured.
    capture_unit : str, optional
        'epoch' (default) or 'iteration'.
    progress : bool, optional
        Show a progress bar.

    Returns
    -------
    traj : Trajectory
        The captured checkpoints.
    """
    if capture_every < 1:
        raise ValueError('capture_every must be >= 1, got %r' % capture_every)
    if capture_unit not in CAPTURE_UNITS:
        raise ValueError('unknown capture unit %r' % capture_unit)
    if train_cfg.epochs < 1:
        raise ValueError('a teacher needs at least one epoch')

    digest = spec_digest(spec)
    params = init_params(spec, train_cfg.seed)
    velocity = zeros_like_params(params)
    seeds = EpochSeeds(train_cfg.seed)
    schedule = train_cfg.sgd.schedule

    def _grad_fn(step, params, inds, images, labels):
        logits, _, cache = forward(spec, params, images, return_cache=True)
        loss, g = ce_loss(logits, labels)
        return loss, backward(spec, params, images, g, cache=cache)

    checkpoints = []
    step = 0
    n_epochs = train_cfg.epochs
    for epoch in tqdm.trange(n_epochs, leave=False, disable=not progress):
        lr = lr_at(schedule, epoch)

        def _on_step(s, p, running_loss):
            if capture_unit == 'iteration' and s % capture_every == 0:
                checkpoints.append(Checkpoint(
                    epoch=epoch + 1, params=p, lr_at_capture=lr,
                    train_loss=running_loss, spec_hash=digest,
                    seed=train_cfg.seed, step=s))

        res = train_epoch(
            params, velocity, _grad_fn, data, train_cfg.batch_size,
            seeds.next(), train_cfg.sgd, lr, step_offset=step,
            on_step=_on_step)
        params, velocity = res.params, res.velocity
        step += res.n_steps
        LOGGER.debug(
            'teacher epoch %d: lr %g train loss %g', epoch + 1, lr,
            res.train_loss)

        last = epoch == n_epochs - 1
        if capture_unit == 'epoch':
            if (epoch + 1) % capture_every == 0 or last:
                checkpoints.append(Checkpoint(
                    epoch=epoch + 1, params=params, lr_at_capture=lr,
                    train_loss=res.train_loss, spec_hash=digest,
                    seed=train_cfg.seed, step=step))
        elif last and (
                len(checkpoints) == 0 or checkpoints[-1].step != step):
            checkpoints.append(Checkpoint(
                epoch=epoch + 1, params=params, lr_at_capture=lr,
                train_loss=res.train_loss, spec_hash=digest,
                seed=train_cfg.seed, step=step))

    LOGGER.info(
        'trained teacher for %d epochs, captured %d checkpoints',
        n_epochs, len(checkpoints))
    return Trajectory(
        checkpoints=checkpoints, spec=spec,
        config=train_config_to_dict(train_cfg, capture_every, capture_unit),
        unit=capture_unit)


def train_config_to_dict(train_cfg, capture_every, capture_unit):
    sched = train_cfg.sgd.schedule
    return {
        'epochs': train_cfg.epochs,
        'batch_size': train_cfg.batch_size,
        'seed': train_cfg.seed,
        'capture_every': capture_every,
        'capture_unit': capture_unit,
        'sgd': {
            'lr': sched.initial_lr,
            'drop_epochs': list(sched.drop_epochs),
            'drop_factor': sched.drop_factor,
            'momentum': train_cfg.sgd.momentum,
            'weight_decay': train_cfg.sgd.weight_decay,
        },
    }


def _payload(ckpt):
    dtype = None
    shapes = []
    tensors = []
    for p in ckpt.params:
        if p is None:
            shapes.append(None)
            continue
        if dtype is None:
            dtype = p[0].dtype.name
        if p[0].dtype.name != dtype or p[1].dtype.name != dtype:
            raise ValueError('checkpoint tensors must share one dtype')
        shapes.append([list(p[0].shape), list(p[1].shape)])
        tensors.extend(p)
    if dtype is None:
        dtype = 'float32'
    if dtype not in _DTYPES:
        raise ValueError('cannot store %s tensors' % dtype)

    meta = {
        'epoch': int(ckpt.epoch),
        'step': int(ckpt.step),
        'lr_at_capture': float(ckpt.lr_at_capture),
        'train_loss': float(ckpt.train_loss),
        'seed': int(ckpt.seed),
        'dtype': dtype,
        'shapes': shapes,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode('utf-8')
    body = b''.join(
        np.ascontiguousarray(t, dtype=_DTYPES[dtype]).tobytes()
        for t in tensors)
    return meta_bytes, body


def checkpoint_bytes(ckpt):
    """Serialize a checkpoint to bytes."""
    if len(ckpt.spec_hash) != 32:
        raise ValueError('spec_hash must be 32 bytes')
    meta_bytes, body = _payload(ckpt)
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, ckpt.spec_hash, len(meta_bytes))
    blob = head + meta_bytes + body
    return blob + hashlib.sha256(blob).digest()


def save_checkpoint(ckpt, path):
    """Write a checkpoint file."""
    with open(path, 'wb') as fp:
        fp.write(checkpoint_bytes(ckpt))


def checkpoint_from_bytes(buff, spec=None, name='<bytes>'):
    """Parse checkpoint bytes; see `load_checkpoint`."""
    if len(buff) < len(MAGIC) or buff[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(
            '%s: bad format: wrong magic header' % name)
    if len(buff) < _HEADER.size:
        raise CheckpointTruncatedError('%s: truncated header' % name)

    _, version, spec_hash, n_meta = _HEADER.unpack(buff[:_HEADER.size])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            '%s: format version %d, expected %d' % (
                name, version, FORMAT_VERSION))

    loc = _HEADER.size
    if len(buff) < loc + n_meta:
        raise CheckpointTruncatedError('%s: truncated metadata' % name)
    try:
        meta = json.loads(buff[loc:loc+n_meta].decode('utf-8'))
    except ValueError:
        raise CheckpointFormatError('%s: unreadable metadata' % name)
    loc += n_meta

    dtype = np.dtype(_DTYPES[meta['dtype']])
    n_body = 0
    for shp in meta['shapes']:
        if shp is not None:
            n_body += int(np.prod(shp[0])) + int(np.prod(shp[1]))
    n_body *= dtype.itemsize

    if len(buff) < loc + n_body + 32:
        raise CheckpointTruncatedError(
            '%s: file has %d bytes, header promises %d' % (
                name, len(buff), loc + n_body + 32))
    if len(buff) > loc + n_body + 32:
        raise CheckpointFormatError('%s: trailing bytes after digest' % name)

    stored = buff[loc+n_body:]
    if hashlib.sha256(buff[:loc+n_body]).digest() != stored:
        raise CheckpointDigestError('%s: payload digest mismatch' % name)

    if spec is not None and spec_digest(spec) != spec_hash:
        raise SpecMismatchError(
            '%s: checkpoint was made for a different network spec' % name)

    params = []
    for shp in meta['shapes']:
        if shp is None:
            params.append(None)
            continue
        pair = []
        for s in shp:
            count = int(np.prod(s))
            arr = np.frombuffer(buff, dtype=dtype, count=count, offset=loc)
            pair.append(arr.astype(dtype.newbyteorder('=')).reshape(s))
            loc += count * dtype.itemsize
        params.append(tuple(pair))

    if spec is not None:
        check_params(spec, params)

    return Checkpoint(
        epoch=meta['epoch'], params=params,
        lr_at_capture=meta['lr_at_capture'], train_loss=meta['train_loss'],
        spec_hash=spec_hash, seed=meta['seed'], step=meta['step'])


def load_checkpoint(path, spec=None):
    """Read a checkpoint file.

    Parameters
    ----------
    path : str
        The file.
    spec : NetworkSpec, optional
        If given, the checkpoint must have been made for this spec.

    Returns
    -------
    ckpt : Checkpoint
        The checkpoint.

    Raises
    ------
    CheckpointFormatError, CheckpointVersionError, CheckpointDigestError,
    CheckpointTruncatedError, SpecMismatchError
    """
    with open(path, 'rb') as fp:
        buff = fp.read()
    return checkpoint_from_bytes(buff, spec=spec, name=path)


def checkpoint_filename(ckpt, unit):
    if unit == 'epoch':
        return 'ckpt_e%05d.rco' % ckpt.epoch
    return 'ckpt_s%08d.rco' % ckpt.step


def save_trajectory(traj, directory):
    """Write every checkpoint of a trajectory plus its manifest."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for pos, c in enumerate(traj.checkpoints):
        fname = checkpoint_filename(c, traj.unit)
        save_checkpoint(c, os.path.join(directory, fname))
        entries.append({
            'position': pos,
            'epoch': c.epoch,
            'step': c.step,
            'file': fname,
            'lr': c.lr_at_capture,
            'train_loss': c.train_loss,
        })

    manifest = {
        'format_version': FORMAT_VERSION,
        'unit': traj.unit,
        'spec': spec_to_dict(traj.spec),
        'spec_digest': spec_digest(traj.spec).hex(),
        'config': traj.config,
        'checkpoints': entries,
    }
    with open(os.path.join(directory, MANIFEST_NAME), 'w') as fp:
        json.dump(manifest, fp, sort_keys=True, indent=2)
    LOGGER.info('wrote %d checkpoints to %s', len(entries), directory)


def load_trajectory(directory):
    """Read a trajectory written by `save_trajectory`."""
    mpath = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(mpath):
        raise MissingCheckpointError('no manifest at %s' % mpath)
    with open(mpath, 'r') as fp:
        manifest = json.load(fp)

    spec = spec_from_dict(manifest['spec'])
    if spec_digest(spec).hex() != manifest['spec_digest']:
        raise SpecMismatchError(
            '%s: manifest digest does not match its spec' % mpath)

    checkpoints = []
    for entry in manifest['checkpoints']:
        path = os.path.join(directory, entry['file'])
        if not os.path.exists(path):
            raise MissingCheckpointError('missing checkpoint file %s' % path)
        checkpoints.append(load_checkpoint(path, spec=spec))

    return Trajectory(
        checkpoints=checkpoints, spec=spec, config=manifest['config'],
        unit=manifest['unit'])
