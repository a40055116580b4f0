import numpy as np
import pytest

from ..run_utils import (
    SUMMARY_COLUMNS, cut_nones, estimate_median_and_err, summarize_arms)


def test_cut_nones():
    vals = cut_nones([1, None, 2, np.nan, 4, np.inf])
    assert list(vals) == [1, 2, 4]
    assert len(cut_nones([None, None])) == 0


@pytest.mark.parametrize('values,median', [
    ([0.9], 0.9),
    ([0.1, 0.3, 0.2], 0.2),
    ([0.1, None, 0.3, 0.2, None], 0.2),
])
def test_estimate_median_and_err(values, median):
    med, err = estimate_median_and_err(values)
    assert np.isclose(med, median)
    assert err >= 0
    if len(cut_nones(values)) == 1:
        assert err == 0


def test_estimate_median_and_err_is_seeded():
    vals = list(np.random.RandomState(seed=1).uniform(size=7))
    assert estimate_median_and_err(vals) == estimate_median_and_err(vals)
    med, err = estimate_median_and_err([None])
    assert np.isnan(med) and np.isnan(err)


def _report(name, seed, top1, mode='eei'):
    return {
        'name': name, 'seed': seed, 'mode': mode,
        'anchor_epochs': [2, 4], 'n_steps': 16,
        'final': {'test_top1': top1, 'val_kl': 0.1, 'train_loss': 0.5},
    }


def test_summarize_arms():
    reports = [
        _report('eei', 1, 0.8), _report('kd', 0, 0.6, mode='kd'),
        _report('eei', 0, 0.9), _report('kd', 1, 0.7, mode='kd'),
        _report('eei', 2, 0.7),
    ]
    frame = summarize_arms(reports)
    assert list(frame.columns) == list(SUMMARY_COLUMNS)
    assert list(frame['arm']) == ['eei'] * 4 + ['kd'] * 3
    assert list(frame['seed']) == [0, 1, 2, 'median', 0, 1, 'median']

    eei = frame[(frame['arm'] == 'eei') & (frame['seed'] == 'median')]
    assert np.isclose(eei['test_top1'].iloc[0], 0.8)
    assert eei['test_top1_err'].iloc[0] >= 0
    assert eei['n_anchors'].iloc[0] == 2
