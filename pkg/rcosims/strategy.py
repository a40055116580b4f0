"""Anchor selection: equal epoch intervals and greedy search by hardness.

Trajectory positions are 0-based throughout: position N-1 is the converged
teacher.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, EmptyDatasetError, SpecMismatchError
from .losses import softened_kl
from .nn import forward, spec_digest

LOGGER = logging.getLogger(__name__)

MODES = ('kd', 'eei', 'one_stage_eei', 'gs', 'softmax', 'anchor')


@dataclass(frozen=True)
class AnchorSchedule:
    """The sequence of teacher states a student is trained against.

    Parameters
    ----------
    mode : str
        One of 'kd', 'eei', 'one_stage_eei', 'gs', 'softmax', 'anchor'.
    anchor_epochs : tuple of int
        Trajectory keys (epochs, or steps for iteration-unit trajectories)
        of the anchors, strictly increasing. Empty only for 'softmax'.
        For 'gs' this is filled in as the search runs.
    stage_epochs : int
        Student epochs per anchor for multi-stage modes, or the whole
        budget for 'one_stage_eei'.
    switch_epochs : tuple of int
        'one_stage_eei' only. Anchor k supervises the student from
        switch_epochs[k-1] (0 for k = 0) up to switch_epochs[k]. The last
        entry equals the budget. In units of student epochs, or of student
        optimizer steps when `unit` is 'iteration'.
    unit : str
        'epoch' or 'iteration'.
    """
    mode: str
    anchor_epochs: tuple = ()
    stage_epochs: int = 1
    switch_epochs: tuple = ()
    unit: str = 'epoch'

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError('unknown strategy mode %r' % self.mode)
        a = list(self.anchor_epochs)
        for x, y in zip(a[:-1], a[1:]):
            if not y > x:
                raise ValueError(
                    'anchor epochs must be strictly increasing, got %s' % a)
        if self.mode not in ('softmax', 'gs') and len(a) == 0:
            raise ValueError('mode %r needs at least one anchor' % self.mode)
        if self.mode in ('kd', 'anchor') and len(a) != 1:
            raise ValueError('mode %r uses exactly one anchor' % self.mode)
        if self.stage_epochs < 0:
            raise ValueError('stage_epochs must be >= 0')
        if self.mode == 'one_stage_eei':
            s = list(self.switch_epochs)
            if len(s) != len(a):
                raise ValueError(
                    'need one switch point per anchor, got %d for %d' % (
                        len(s), len(a)))
            for x, y in zip([0] + s[:-1], s):
                if not y > x:
                    raise ValueError(
                        'switch points must be strictly increasing and '
                        'positive, got %s' % s)


@dataclass(frozen=True)
class GsConfig:
    """Greedy-search settings.

    Parameters
    ----------
    delta : float
        Hardness-ratio threshold, > 0.
    """
    delta: float = 0.8

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError('delta must be > 0, got %r' % self.delta)


@dataclass
class HardnessTable:
    """Hardness of every later anchor for the current student.

    Parameters
    ----------
    current : int
        Trajectory key of the anchor the student was just trained on.
    h_values : dict
        Trajectory key -> H, in trajectory order, starting at `current`.
    ratios : dict
        Trajectory key -> ratio of that anchor's H to the current one.
    """
    current: int
    h_values: dict = field(default_factory=dict)
    ratios: dict = field(default_factory=dict)

    def to_frame(self):
        keys = list(self.h_values)
        return pd.DataFrame({
            'current_epoch': [self.current] * len(keys),
            'anchor_epoch': keys,
            'H': [self.h_values[k] for k in keys],
            'r_from_current': [self.ratios[k] for k in keys],
        })

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False)


def eei_select(total_epochs, gap):
    """Anchors at equal epoch intervals.

    Parameters
    ----------
    total_epochs : int
        The teacher's budget.
    gap : int
        The interval, in [1, total_epochs].

    Returns
    -------
    anchors : list of int
        gap, 2*gap, ... plus total_epochs if not already present.
    """
    if total_epochs < 1:
        raise ValueError('total_epochs must be >= 1, got %r' % total_epochs)
    if not 1 <= gap <= total_epochs:
        raise ValueError(
            'gap must be in [1, %d], got %r' % (total_epochs, gap))
    anchors = list(range(gap, total_epochs + 1, gap))
    if anchors[-1] != total_epochs:
        anchors.append(total_epochs)
    return anchors


def eei_select_count(total_epochs, n_anchors):
    """`n_anchors` anchors spread evenly over the budget, ending at its end."""
    if not 1 <= n_anchors <= total_epochs:
        raise ValueError(
            'n_anchors must be in [1, %d], got %r' % (total_epochs, n_anchors))
    return [
        (k * total_epochs) // n_anchors for k in range(1, n_anchors + 1)]


def one_stage_switch_points(anchors, teacher_total, student_total):
    """Map anchor epochs onto a student budget of a different length.

    Anchor k supervises the student until switch point k, where the switch
    points are the anchor epochs rescaled from the teacher's budget to the
    student's. Collapsing points are rejected.
    """
    if student_total < len(anchors):
        raise ValueError(
            'a budget of %d cannot hold %d supervision segments' % (
                student_total, len(anchors)))
    points = [(a * student_total) // teacher_total for a in anchors]
    points[-1] = student_total
    for x, y in zip([0] + points[:-1], points):
        if not y > x:
            raise ValueError(
                'anchors %s collapse on a budget of %d' % (
                    list(anchors), student_total))
    return points


def kd_schedule(final_key, stage_epochs, unit='epoch'):
    return AnchorSchedule(
        mode='kd', anchor_epochs=(final_key,), stage_epochs=stage_epochs,
        unit=unit)


def eei_schedule(keys, gap=None, n_anchors=None, stage_epochs=1, unit='epoch'):
    """Multi-stage EEI over a trajectory's keys.

    The trajectory is assumed to start at its capture period; anchors are
    selected among `keys` with the given gap (in trajectory units) or count.
    """
    total = keys[-1]
    if (gap is None) == (n_anchors is None):
        raise ValueError('give exactly one of gap and n_anchors')
    if gap is not None:
        anchors = eei_select(total, gap)
    else:
        anchors = eei_select_count(total, n_anchors)
    return AnchorSchedule(
        mode='eei', anchor_epochs=tuple(anchors), stage_epochs=stage_epochs,
        unit=unit)


def one_stage_eei_schedule(
        keys, budget, gap=None, n_anchors=None, unit='epoch',
        budget_unit_total=None):
    """One-stage EEI: anchors switch inside a single student budget.

    Parameters
    ----------
    keys : list of int
        Trajectory keys.
    budget : int
        Student epochs.
    gap, n_anchors : int
        Exactly one of them selects the anchors.
    unit : str
        Trajectory unit.
    budget_unit_total : int, optional
        Budget in switch units. Defaults to `budget`; for iteration-unit
        trajectories pass the student's total step count.
    """
    total = keys[-1]
    if (gap is None) == (n_anchors is None):
        raise ValueError('give exactly one of gap and n_anchors')
    if gap is not None:
        anchors = eei_select(total, gap)
    else:
        anchors = eei_select_count(total, n_anchors)
    if budget_unit_total is None:
        budget_unit_total = budget
    switches = one_stage_switch_points(anchors, total, budget_unit_total)
    return AnchorSchedule(
        mode='one_stage_eei', anchor_epochs=tuple(anchors),
        stage_epochs=budget, switch_epochs=tuple(switches), unit=unit)


def validate_schedule(schedule, trajectory):
    """Raise MissingCheckpointError if any anchor is not in the trajectory."""
    for key in schedule.anchor_epochs:
        trajectory.index_of(key)
    if schedule.anchor_epochs and schedule.mode in ('kd', 'eei'):
        if schedule.anchor_epochs[-1] != trajectory.keys[-1]:
            raise ConfigError(
                'strategy', 'mode %r must end at the final checkpoint %d, '
                'ends at %d' % (
                    schedule.mode, trajectory.keys[-1],
                    schedule.anchor_epochs[-1]))


def predict_logits(spec, params, images, batch_size):
    out = []
    for i in range(0, images.shape[0], batch_size):
        out.append(forward(spec, params, images[i:i+batch_size])[0])
    return np.concatenate(out)


def hardness(
        student_spec, student_params, teacher_spec, anchor, val, tau,
        batch_size=1000):
    """Mean softened KL from an anchor's outputs to the student's on `val`.

    Parameters
    ----------
    student_spec : NetworkSpec
        The student network.
    student_params : list
        The student's current parameters.
    teacher_spec : NetworkSpec
        The teacher network the anchor was captured from.
    anchor : Checkpoint
        The anchor.
    val : Dataset
        The validation set.
    tau : float
        The temperature.
    batch_size : int, optional
        Forward-pass chunk size.

    Returns
    -------
    h : float
        KL(P_anchor^tau || P_student^tau), averaged over `val`.
    """
    if val is None or len(val) == 0:
        raise EmptyDatasetError('hardness needs a nonempty validation set')
    if anchor.spec_hash != spec_digest(teacher_spec):
        raise SpecMismatchError('anchor was not captured from teacher_spec')
    s_logits = predict_logits(
        student_spec, student_params, val.images, batch_size)
    t_logits = predict_logits(
        teacher_spec, anchor.params, val.images, batch_size)
    return softened_kl(t_logits, s_logits, tau)


def hardness_ratio(h_i, h_j):
    """(h_j - h_i) / h_i, with inf for (0, >0) and 0 for (0, 0)."""
    if h_i < 0 or h_j < 0:
        raise ValueError(
            'hardness values must be >= 0, got %r and %r' % (h_i, h_j))
    if h_i == 0:
        return np.inf if h_j > 0 else 0.0
    return (h_j - h_i) / h_i


def greedy_next_index(h_values, i, delta):
    """Pick the next anchor position from hardness values.

    Walks j = i+1, ..., N-2 and stops at the first j whose ratio to
    position i exceeds `delta`, returning j - 1 (but never less than
    i + 1). The last position is never compared: when the walk runs out
    it is returned as is.

    Parameters
    ----------
    h_values : sequence of float
        H for every trajectory position; only positions >= i are read.
    i : int
        The current position.
    delta : float
        The threshold.

    Returns
    -------
    j : int
        The next position, > i.
    """
    n = len(h_values)
    if not 0 <= i < n - 1:
        raise ValueError(
            'current position %r must be in [0, %d)' % (i, n - 1))
    for j in range(i + 1, n - 1):
        if hardness_ratio(h_values[i], h_values[j]) > delta:
            return max(j - 1, i + 1)
    return n - 1


def hardness_table(
        student_spec, student_params, trajectory, i, val, tau,
        batch_size=1000):
    """H for trajectory positions i..N-1 and their ratios to position i."""
    keys = trajectory.keys
    h_values = {}
    for pos in range(i, len(trajectory)):
        h_values[keys[pos]] = hardness(
            student_spec, student_params, trajectory.spec,
            trajectory.at(pos), val, tau, batch_size=batch_size)
    h_i = h_values[keys[i]]
    ratios = {k: hardness_ratio(h_i, h) for k, h in h_values.items()}
    return HardnessTable(current=keys[i], h_values=h_values, ratios=ratios)


def greedy_next_anchor(
        student_spec, student_params, trajectory, i, cfg, val, tau,
        return_table=False):
    """Greedy-search step: the hardest anchor the student can still learn.

    Parameters
    ----------
    student_spec : NetworkSpec
        The student network.
    student_params : list
        The student after training on the anchor at position `i`.
    trajectory : Trajectory
        The teacher's checkpoints.
    i : int
        Current trajectory position.
    cfg : GsConfig
        Holds the threshold `delta`.
    val : Dataset
        The validation set.
    tau : float
        Temperature for the hardness KL.
    return_table : bool, optional
        Also return the HardnessTable.

    Returns
    -------
    j : int
        The next position, > i.
    table : HardnessTable
        Only if `return_table` is True.
    """
    table = hardness_table(
        student_spec, student_params, trajectory, i, val, tau)
    h = [0.0] * i + list(table.h_values.values())
    j = greedy_next_index(h, i, cfg.delta)
    LOGGER.info(
        'greedy search: from %s %d picked %d (delta %g)',
        trajectory.unit, trajectory.keys[i], trajectory.keys[j], cfg.delta)
    if return_table:
        return j, table
    return j


def greedy_search(
        train_stage, student_spec, trajectory, cfg, val, tau,
        stage_epochs=1):
    """Run greedy search to the final checkpoint.

    Parameters
    ----------
    train_stage : callable
        `train_stage(position, stage)` trains the student against the
        checkpoint at trajectory `position` for one stage and returns the
        student params afterwards.
    student_spec : NetworkSpec
        The student network.
    trajectory : Trajectory
        The teacher's checkpoints.
    cfg : GsConfig
        Holds the threshold `delta`.
    val : Dataset
        The validation set.
    tau : float
        Temperature for the hardness KL.
    stage_epochs : int, optional
        Recorded on the returned schedule.

    Returns
    -------
    schedule : AnchorSchedule
        The anchors trained against, in order. Always ends at the final
        checkpoint.
    tables : list of HardnessTable
        One per selection.
    """
    if val is None or len(val) == 0:
        raise EmptyDatasetError(
            'greedy search needs a nonempty validation set')
    keys = trajectory.keys
    i = 0
    positions = [0]
    tables = []
    params = train_stage(0, 0)
    while i < len(trajectory) - 1:
        i, table = greedy_next_anchor(
            student_spec, params, trajectory, i, cfg, val, tau,
            return_table=True)
        tables.append(table)
        positions.append(i)
        params = train_stage(i, len(positions) - 1)
    schedule = AnchorSchedule(
        mode='gs', anchor_epochs=tuple(keys[p] for p in positions),
        stage_epochs=stage_epochs, unit=trajectory.unit)
    return schedule, tables
