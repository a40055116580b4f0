"""Evaluation and diagnostics: accuracy, KL curves over a teacher's
trajectory, PCA projections of parameter routes and noise robustness.

Every diagnostic can be written as a CSV for external plotting.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import EmptyDatasetError, ShapeError
from .losses import ce_loss, kd_loss
from .nn import flatten_params
from .strategy import hardness, predict_logits

LOGGER = logging.getLogger(__name__)

NOISE_DELTAS = tuple(round(0.1 * k, 1) for k in range(11))


@dataclass
class KlCurve:
    """Validation KL of one student against every checkpoint of a teacher."""
    teacher_epochs: list
    kl: list
    tag: str = ''

    def to_frame(self):
        return pd.DataFrame({
            'tag': [self.tag] * len(self.kl),
            'teacher_epoch': list(self.teacher_epochs),
            'kl': list(self.kl),
        })


@dataclass
class TrajectoryProjection:
    """Checkpoints projected onto the top two principal directions of their
    differences to the final checkpoint.

    Parameters
    ----------
    coords : np.ndarray, shape (n, 2)
        One row per checkpoint; the last row is (0, 0).
    explained : np.ndarray, shape (2,)
        Fraction of the total squared difference captured by each
        direction, in descending order.
    keys : list
        The checkpoint epochs (or positions).
    """
    coords: np.ndarray
    explained: np.ndarray
    keys: list

    def to_frame(self):
        return pd.DataFrame({
            'epoch': list(self.keys),
            'pc1': self.coords[:, 0],
            'pc2': self.coords[:, 1],
            'explained1': [self.explained[0]] * len(self.keys),
            'explained2': [self.explained[1]] * len(self.keys),
        })


@dataclass
class NoiseSweep:
    """Paired losses of two models on increasingly noisy inputs.

    `kd_a` and `kd_b` are filled only when a reference teacher is given.
    """
    deltas: list
    loss_a: list
    loss_b: list
    delta_loss: list
    kd_a: list = None
    kd_b: list = None

    def to_frame(self):
        cols = {
            'delta': list(self.deltas),
            'loss_a': list(self.loss_a),
            'loss_b': list(self.loss_b),
            'delta_loss': list(self.delta_loss),
        }
        if self.kd_a is not None:
            cols['kd_a'] = list(self.kd_a)
            cols['kd_b'] = list(self.kd_b)
            cols['delta_kd'] = [a - b for a, b in zip(self.kd_a, self.kd_b)]
        return pd.DataFrame(cols)


def top1(spec, params, d, batch_size=1000):
    """Fraction of examples whose argmax logit is the label.

    Ties go to the lowest class index.
    """
    if d is None or len(d) == 0:
        raise EmptyDatasetError('top1 needs a nonempty dataset')
    logits = predict_logits(spec, params, d.images, batch_size)
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == d.labels))


def kl_curve(student_spec, student_params, trajectory, val, tau, tag=''):
    """Hardness of the student against every checkpoint, in order.

    Parameters
    ----------
    student_spec : NetworkSpec
        The student network.
    student_params : list
        The student parameters.
    trajectory : Trajectory
        The teacher's checkpoints.
    val : Dataset
        The validation set.
    tau : float
        The temperature.
    tag : str, optional
        A label carried into the output.

    Returns
    -------
    curve : KlCurve
        One KL value per checkpoint.
    """
    if len(trajectory) == 0:
        raise ValueError('kl_curve needs a nonempty trajectory')
    kl = [
        hardness(
            student_spec, student_params, trajectory.spec, c, val, tau)
        for c in trajectory.checkpoints]
    return KlCurve(teacher_epochs=trajectory.keys, kl=kl, tag=tag)


def pca_trajectory(checkpoints, keys=None):
    """Project a parameter route onto its two main directions.

    The matrix of flattened differences D = [W_0 - W_n; ...; W_n - W_n] is
    decomposed through its Gram matrix D D^T; the two leading eigenvectors
    give the principal directions of D's row space. The decomposition is
    not centred, so the final checkpoint lands exactly on the origin.

    Parameters
    ----------
    checkpoints : list of params
        At least three parameter sets of identical structure, the last one
        being the reference.
    keys : list, optional
        Labels for the rows. Defaults to positions.

    Returns
    -------
    proj : TrajectoryProjection
        The projection.
    """
    if len(checkpoints) < 3:
        raise ValueError(
            'pca_trajectory needs >= 3 checkpoints, got %d' % len(checkpoints))
    flat = [flatten_params(p).astype(np.float64) for p in checkpoints]
    for i, f in enumerate(flat):
        if f.shape != flat[-1].shape:
            raise ShapeError(
                'checkpoint %d has %d parameters, the final one %d' % (
                    i, f.size, flat[-1].size))
    if keys is None:
        keys = list(range(len(checkpoints)))

    diff = np.vstack(flat) - flat[-1]
    gram = diff @ diff.T
    evals, evecs = scipy.linalg.eigh(gram)
    order = np.argsort(evals)[::-1][:2]
    evals = np.clip(evals[order], 0, None)
    evecs = evecs[:, order]

    total = np.trace(gram)
    dirs = np.zeros((2, diff.shape[1]))
    for k in range(2):
        if evals[k] > total * 1e-12 and evals[k] > 0:
            d = evecs[:, k] @ diff / np.sqrt(evals[k])
            if d[np.argmax(np.abs(d))] < 0:
                d = -d
            dirs[k] = d
    coords = diff @ dirs.T

    if total > 0:
        explained = evals / total
    else:
        explained = np.zeros(2)
    return TrajectoryProjection(
        coords=coords, explained=explained, keys=list(keys))


def dataset_ce(spec, params, images, labels, batch_size=1000):
    """Mean cross-entropy of a model over a whole image array."""
    logits = predict_logits(spec, params, images, batch_size)
    return ce_loss(logits, labels)[0]


def noise_sweep(
        model_a, model_b, d, deltas=NOISE_DELTAS, seed=0, teacher=None,
        distill_cfg=None, batch_size=1000):
    """Losses of two models on inputs with growing Gaussian noise.

    Every image x gets noise sigma_in * delta * z, where sigma_in is the
    standard deviation of x's pixels and z a standard normal draw. The same
    z is used for both models and every delta.

    Parameters
    ----------
    model_a, model_b : tuple
        `(spec, params)` of the two models.
    d : Dataset
        The (normalized) evaluation set.
    deltas : sequence of float, optional
        Noise levels in [0, 1], ascending. Default 0.0, 0.1, ..., 1.0.
    seed : int, optional
        Seed for z.
    teacher : tuple, optional
        `(spec, params)` of a reference teacher. If given, each model's KD
        loss against the teacher's outputs on the same noisy inputs is
        reported as well.
    distill_cfg : DistillConfig, optional
        Needed with `teacher`.
    batch_size : int, optional
        Forward-pass chunk size.

    Returns
    -------
    sweep : NoiseSweep
        CE of each model per delta and the gap loss_a - loss_b.
    """
    deltas = [float(x) for x in deltas]
    if len(deltas) == 0:
        raise ValueError('need at least one noise level')
    if any(b < a for a, b in zip(deltas[:-1], deltas[1:])):
        raise ValueError('deltas must be sorted ascending, got %s' % deltas)
    if deltas[0] < 0 or deltas[-1] > 1:
        raise ValueError('deltas must be in [0, 1], got %s' % deltas)
    if len(d) == 0:
        raise EmptyDatasetError('noise_sweep needs a nonempty dataset')
    if teacher is not None and distill_cfg is None:
        raise ValueError('a teacher needs a distill_cfg')

    images = d.images
    n = images.shape[0]
    sigma_in = images.reshape(n, -1).std(axis=1).astype(images.dtype)
    sigma_in = sigma_in.reshape((n,) + (1,) * (images.ndim - 1))
    z = np.random.RandomState(seed=seed).standard_normal(
        size=images.shape).astype(images.dtype)

    loss_a = []
    loss_b = []
    kd_a = [] if teacher is not None else None
    kd_b = [] if teacher is not None else None
    for delta in deltas:
        if delta == 0:
            x = images
        else:
            x = images + (sigma_in * delta) * z
        la = predict_logits(model_a[0], model_a[1], x, batch_size)
        lb = predict_logits(model_b[0], model_b[1], x, batch_size)
        loss_a.append(ce_loss(la, d.labels)[0])
        loss_b.append(ce_loss(lb, d.labels)[0])
        if teacher is not None:
            lt = predict_logits(teacher[0], teacher[1], x, batch_size)
            kd_a.append(kd_loss(la, lt, d.labels, distill_cfg)[0])
            kd_b.append(kd_loss(lb, lt, d.labels, distill_cfg)[0])
        LOGGER.debug(
            'noise delta %g: loss a %g, loss b %g', delta, loss_a[-1],
            loss_b[-1])

    return NoiseSweep(
        deltas=deltas, loss_a=loss_a, loss_b=loss_b,
        delta_loss=[a - b for a, b in zip(loss_a, loss_b)],
        kd_a=kd_a, kd_b=kd_b)


def write_csv(diagnostic, path):
    """Write any diagnostic with a `to_frame` method as CSV."""
    diagnostic.to_frame().to_csv(path, index=False)
