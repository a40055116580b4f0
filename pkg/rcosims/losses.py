"""Distillation objectives and their gradients with respect to the logits.

Probability batches are plain arrays of shape (batch, classes) whose rows sum
to one. All functions keep the dtype of their inputs.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class DistillConfig:
    """Knowledge-distillation settings.

    Parameters
    ----------
    temperature : float
        The softening temperature, > 0.
    balance : float
        Weight of the KL term relative to the cross-entropy, >= 0.
    kl_grad_scale : bool
        If True, multiply the KL term by temperature**2 so its gradient does
        not shrink with the temperature.
    """
    temperature: float = 5.0
    balance: float = 1.0
    kl_grad_scale: bool = True

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(
                'temperature must be > 0, got %r' % self.temperature)
        if not self.balance >= 0:
            raise ValueError('balance must be >= 0, got %r' % self.balance)

    @property
    def kl_scale(self):
        if self.kl_grad_scale:
            return self.temperature ** 2
        return 1.0


def _safe_log(p):
    return np.log(np.maximum(p, np.finfo(p.dtype).tiny))


def _check_labels(labels, n, n_classes):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(
            'expected %d labels, got shape %s' % (n, labels.shape))
    if n > 0 and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(
            'labels must be in [0, %d), got range [%d, %d]' % (
                n_classes, labels.min(), labels.max()))
    return labels.astype(np.int64, copy=False)


def softened_softmax(logits, tau):
    """Row-wise softmax of logits / tau.

    Parameters
    ----------
    logits : np.ndarray, shape (n, classes)
        The logits.
    tau : float
        The temperature, > 0.

    Returns
    -------
    probs : np.ndarray, shape (n, classes)
        The softened probabilities.
    """
    if not tau > 0:
        raise ValueError('temperature must be > 0, got %r' % tau)
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise ShapeError(
            'expected logits of shape (n, classes), got %s' % (logits.shape,))
    z = logits / tau if tau != 1 else logits
    z = (z - z.max(axis=1, keepdims=True)).astype(logits.dtype, copy=False)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, labels):
    """Mean of -log p[label] over the batch."""
    probs = np.asarray(probs)
    if probs.ndim != 2:
        raise ShapeError(
            'expected probs of shape (n, classes), got %s' % (probs.shape,))
    n, n_classes = probs.shape
    labels = _check_labels(labels, n, n_classes)
    if n == 0:
        raise ValueError('cross_entropy needs a nonempty batch')
    picked = probs[np.arange(n), labels]
    return float(-np.mean(_safe_log(picked)))


def kl_divergence(p, q):
    """Mean over the batch of sum(p * (log p - log q)).

    The arguments are ordered as KL(p || q): `p` is the target
    distribution and `q` the approximating one.
    """
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape or p.ndim != 2:
        raise ShapeError(
            'KL needs two (n, classes) arrays of equal shape, '
            'got %s and %s' % (p.shape, q.shape))
    if p.shape[0] == 0:
        raise ValueError('kl_divergence needs a nonempty batch')
    terms = p * (_safe_log(p) - _safe_log(q))
    return float(np.mean(terms.sum(axis=1)))


def softened_kl(teacher_logits, student_logits, tau):
    """KL between the softened teacher and softened student outputs."""
    return kl_divergence(
        softened_softmax(teacher_logits, tau),
        softened_softmax(student_logits, tau))


def ce_loss(logits, labels):
    """Cross-entropy at unit temperature and its gradient.

    Returns
    -------
    loss : float
        The mean cross-entropy.
    logit_grad : np.ndarray
        (softmax(logits) - onehot(labels)) / n
    """
    probs = softened_softmax(logits, 1)
    loss = cross_entropy(probs, labels)
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), np.asarray(labels, dtype=np.int64)] -= 1
    grad /= n
    return loss, grad


def kd_loss(student_logits, teacher_logits, labels, cfg):
    """The knowledge-distillation loss and its gradient.

    loss = CE(softmax(z_s), y) + balance * scale * KL(P_t^tau || P_s^tau)

    where scale is temperature**2 when `cfg.kl_grad_scale` is set and 1
    otherwise.

    Parameters
    ----------
    student_logits : np.ndarray, shape (n, classes)
        The student outputs.
    teacher_logits : np.ndarray, shape (n, classes)
        The teacher outputs.
    labels : np.ndarray, shape (n,)
        The hard labels.
    cfg : DistillConfig
        Temperature and balance.

    Returns
    -------
    loss : float
        The loss.
    logit_grad : np.ndarray, shape (n, classes)
        Gradient with respect to the student logits.
    """
    student_logits = np.asarray(student_logits)
    teacher_logits = np.asarray(teacher_logits)
    if student_logits.shape != teacher_logits.shape:
        raise ShapeError(
            'student logits %s and teacher logits %s differ in shape' % (
                student_logits.shape, teacher_logits.shape))

    loss, grad = ce_loss(student_logits, labels)
    if cfg.balance == 0:
        return loss, grad

    tau = cfg.temperature
    n = student_logits.shape[0]
    ps = softened_softmax(student_logits, tau)
    pt = softened_softmax(
        teacher_logits.astype(student_logits.dtype, copy=False), tau)
    kl = kl_divergence(pt, ps)

    w = cfg.balance * cfg.kl_scale
    loss = loss + w * kl
    grad = grad + ((w / (tau * n)) * (ps - pt)).astype(grad.dtype, copy=False)
    return loss, grad


def rco_step_loss(student_logits, anchor_logits, labels, cfg):
    """The per-anchor loss: `kd_loss` against an intermediate teacher state."""
    return kd_loss(student_logits, anchor_logits, labels, cfg)


def mimic_loss(f_s, f_t):
    """Mean squared Euclidean distance between feature batches.

    Parameters
    ----------
    f_s, f_t : np.ndarray, shape (n, ...)
        Student and teacher features.

    Returns
    -------
    loss : float
        1/n * sum_i ||f_s[i] - f_t[i]||^2
    feature_grad : np.ndarray
        2 * (f_s - f_t) / n, shaped like `f_s`.
    """
    f_s = np.asarray(f_s)
    f_t = np.asarray(f_t)
    if f_s.shape != f_t.shape or f_s.ndim == 0:
        raise ShapeError(
            'feature shapes differ: %s vs %s' % (f_s.shape, f_t.shape))
    n = f_s.shape[0]
    if n == 0:
        raise ValueError('mimic_loss needs a nonempty batch')
    d = f_s - f_t.astype(f_s.dtype, copy=False)
    loss = float(np.sum(d.reshape(n, -1) ** 2) / n)
    return loss, d * (2 / n)
